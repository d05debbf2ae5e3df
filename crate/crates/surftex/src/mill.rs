//! Procedural model of face-milled surfaces.
//!
//! A milled surface is a pattern of overlapping ring-shaped cuts left
//! by the rotating head. Each ring is shape x tilt + noise on a set of
//! narrow annuli around the head radius; rings sit on a parallel or
//! spiral tool-path and are combined by an interaction rule (pointwise
//! minimum, latest-wins, or sequential convex blending). Lateral
//! coordinates are millimetres, heights micrometres; conversion to a
//! pixel grid happens only in [`evaluate_field`].

use rayon::prelude::*;

use crate::field::HeightField;
use crate::rng::RandomStream;
use crate::{Error, Result};

/// Normal distribution hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dist {
    pub mean: f64,
    pub std: f64,
}

impl Dist {
    pub fn fixed(mean: f64) -> Self {
        Self { mean, std: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    /// Flat indentation of constant depth.
    Indicator,
    /// Smooth indentation profile.
    Cosine,
    /// Indentation plus material accumulation on both sides.
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionKind {
    Min,
    Latest,
    Convex,
}

/// Temporal order in which parallel passes are milled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassOrdering {
    /// Every pass milled in the forward direction.
    SameUp,
    /// Every pass milled in the backward direction.
    SameDown,
    /// Direction alternates from pass to pass.
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpiralDirection {
    Outward,
    Inward,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathSpec {
    Parallel {
        /// Angle between the passes and the x-axis.
        beta_rad: f64,
        ordering: PassOrdering,
    },
    Spiral {
        origin_mm: (f64, f64),
        /// Tangent angle at the spiral origin.
        beta_rad: f64,
        /// +1 turns counter-clockwise, -1 mirrors the x-axis.
        orientation: i8,
        direction: SpiralDirection,
    },
}

/// Full parameter set of the milling model.
///
/// The default values are illustrative and not fitted to any
/// measurement; they merely produce a plausible pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct MillConfig {
    /// Head diameter d; the ring radius is d/2.
    pub head_diameter_mm: f64,
    /// Ring overlap fraction alpha in (0,1); the pass distance is
    /// rho = (1 - alpha) d, and alpha = 1 - a_e for radial width of
    /// cut a_e.
    pub overlap: f64,
    /// Feed spacing delta between consecutive centers along the path.
    pub center_spacing_mm: f64,
    pub shape: ShapeKind,
    pub interaction: InteractionKind,
    /// Indentation width; mean must lie in (0, d/2).
    pub w_minus_mm: Dist,
    /// Inner accumulation width; mean in [0, d/2 - w_minus mean).
    pub w_plus_i_mm: Dist,
    /// Outer accumulation width.
    pub w_plus_o_mm: Dist,
    /// Tilt angle phi of the head against the z-axis.
    pub tilt_angle_rad: f64,
    /// Indentation depth l at the head center, in um. Together with
    /// phi it fixes the indentation plane: its extreme scalings are
    /// l -+ r sin(phi).
    pub center_depth_um: f64,
    pub sigma_l_minus_um: f64,
    pub sigma_h_minus_um: f64,
    pub l_plus_i_um: Dist,
    pub h_plus_i_um: Dist,
    pub l_plus_o_um: Dist,
    pub h_plus_o_um: Dist,
    /// Mean number of noise terms per ring.
    pub noise_lambda: f64,
    /// Mean angular frequency of a noise term.
    pub noise_tau: f64,
    /// Convex-interaction weight plane bounds, all in [0, 1].
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    /// Diagonal standard deviations of the center jitter.
    pub center_jitter_mm: (f64, f64),
    /// Fraction epsilon of rings whose temporal order is permuted.
    pub reorder_fraction: f64,
    pub path: PathSpec,
    pub seed: u64,
}

impl Default for MillConfig {
    fn default() -> Self {
        Self {
            head_diameter_mm: 4.0,
            overlap: 0.2,
            center_spacing_mm: 0.09,
            shape: ShapeKind::Cosine,
            interaction: InteractionKind::Min,
            w_minus_mm: Dist { mean: 0.6, std: 0.02 },
            w_plus_i_mm: Dist { mean: 0.1, std: 0.01 },
            w_plus_o_mm: Dist { mean: 0.1, std: 0.01 },
            tilt_angle_rad: 0.0005,
            center_depth_um: 5.0,
            sigma_l_minus_um: 0.1,
            sigma_h_minus_um: 0.1,
            l_plus_i_um: Dist { mean: 1.0, std: 0.1 },
            h_plus_i_um: Dist { mean: 2.0, std: 0.1 },
            l_plus_o_um: Dist { mean: 1.0, std: 0.1 },
            h_plus_o_um: Dist { mean: 2.0, std: 0.1 },
            noise_lambda: 50.0,
            noise_tau: 50.0,
            a_min: 0.3,
            a_max: 0.5,
            b_min: 0.7,
            b_max: 0.9,
            center_jitter_mm: (0.005, 0.005),
            reorder_fraction: 0.1,
            path: PathSpec::Parallel {
                beta_rad: 0.0,
                ordering: PassOrdering::SameUp,
            },
            seed: 0,
        }
    }
}

impl MillConfig {
    /// Ring radius r = d/2 in mm.
    pub fn radius_mm(&self) -> f64 {
        self.head_diameter_mm / 2.0
    }

    /// Distance between neighboring passes, rho = (1 - alpha) d.
    pub fn pass_distance_mm(&self) -> f64 {
        (1.0 - self.overlap) * self.head_diameter_mm
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.radius_mm();
        if !(self.head_diameter_mm > 0.0) {
            return Err(Error::InvalidArgument("head diameter must be positive".into()));
        }
        if !(self.overlap > 0.0 && self.overlap < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "overlap must lie in (0,1), got {}",
                self.overlap
            )));
        }
        if !(self.center_spacing_mm > 0.0) {
            return Err(Error::InvalidArgument("center spacing must be positive".into()));
        }
        if !(self.w_minus_mm.mean > 0.0 && self.w_minus_mm.mean < r) {
            return Err(Error::InvalidArgument(format!(
                "indentation width mean must lie in (0, d/2), got {}",
                self.w_minus_mm.mean
            )));
        }
        if !(self.w_plus_i_mm.mean >= 0.0
            && self.w_plus_i_mm.mean < r - self.w_minus_mm.mean)
        {
            return Err(Error::InvalidArgument(
                "inner accumulation width mean must lie in [0, d/2 - w-)".into(),
            ));
        }
        for (name, s) in [
            ("w-", self.w_minus_mm.std),
            ("w+i", self.w_plus_i_mm.std),
            ("w+o", self.w_plus_o_mm.std),
        ] {
            if s < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "std of {name} must be nonnegative"
                )));
            }
        }
        if !(self.a_min <= self.a_max && self.b_min <= self.b_max) {
            return Err(Error::InvalidArgument(
                "convex weight bounds must be ordered".into(),
            ));
        }
        for v in [self.a_min, self.a_max, self.b_min, self.b_max] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(
                    "convex weight bounds must lie in [0,1]".into(),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.reorder_fraction) {
            return Err(Error::InvalidArgument(
                "reorder fraction must lie in [0,1]".into(),
            ));
        }
        Ok(())
    }
}

/// Pixel grid to evaluate on: origin in the plane plus pixel counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x0_mm: f64,
    pub y0_mm: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub spacing_um: f64,
}

impl GridSpec {
    pub fn width_mm(&self) -> f64 {
        self.width_px as f64 * self.spacing_um / 1000.0
    }

    pub fn height_mm(&self) -> f64 {
        self.height_px as f64 * self.spacing_um / 1000.0
    }
}

/// Nominal ring centers in temporal order with path tangent angles.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolPath {
    pub centers_mm: Vec<(f64, f64)>,
    pub angles: Vec<f64>,
}

impl ToolPath {
    pub fn len(&self) -> usize {
        self.centers_mm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers_mm.is_empty()
    }
}

fn wrap_angle(a: f64) -> f64 {
    // fold into (-pi, pi]
    let mut a = a.rem_euclid(2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    a
}

/// Viewport dilated by the visibility margin: every ring whose support
/// can touch the image must be generated.
fn dilated_bounds(cfg: &MillConfig, grid: &GridSpec) -> (f64, f64, f64, f64) {
    let m = cfg.radius_mm()
        + 3.0 * cfg.center_jitter_mm.0.max(cfg.center_jitter_mm.1);
    (
        grid.x0_mm - m,
        grid.y0_mm - m,
        grid.x0_mm + grid.width_mm() + m,
        grid.y0_mm + grid.height_mm() + m,
    )
}

/// Nominal centers for parallel milling.
///
/// Passes are straight lines at angle beta with distance rho; points
/// along a pass are delta apart. Pass index j increases with the line
/// offset; the traversal direction per pass follows the ordering.
pub fn parallel_centers(
    cfg: &MillConfig,
    grid: &GridSpec,
    beta_rad: f64,
    ordering: PassOrdering,
) -> ToolPath {
    let rho = cfg.pass_distance_mm();
    let delta = cfg.center_spacing_mm;
    let (xlo, ylo, xhi, yhi) = dilated_bounds(cfg, grid);
    let mut centers = Vec::new();
    let mut angles = Vec::new();
    let half_pi = std::f64::consts::FRAC_PI_2;

    // collect each pass as an ordered run of points, then emit the
    // passes in temporal order
    let mut passes: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut pass_dirs: Vec<f64> = Vec::new();
    if (beta_rad.abs() - half_pi).abs() < 1e-12 {
        // vertical passes: points (j rho, i delta)
        let jlo = (xlo / rho).ceil() as i64;
        let jhi = (xhi / rho).floor() as i64;
        let ilo = (ylo / delta).ceil() as i64;
        let ihi = (yhi / delta).floor() as i64;
        for j in jlo..=jhi {
            let line: Vec<(f64, f64)> = (ilo..=ihi)
                .map(|i| (j as f64 * rho, i as f64 * delta))
                .collect();
            passes.push(line);
            pass_dirs.push(half_pi);
        }
    } else {
        let (cb, tb) = (beta_rad.cos(), beta_rad.tan());
        // x_i = i delta cos(beta); line offset j rho / cos(beta)
        let (a, b) = (xlo / (delta * cb), xhi / (delta * cb));
        let (ilo, ihi) = ((a.min(b)).ceil() as i64, (a.max(b)).floor() as i64);
        // y - tan(beta) x ranges over the viewport determine j
        let mut off_lo = f64::INFINITY;
        let mut off_hi = f64::NEG_INFINITY;
        for &x in &[xlo, xhi] {
            for &y in &[ylo, yhi] {
                let off = (y - tb * x) * cb / rho;
                off_lo = off_lo.min(off);
                off_hi = off_hi.max(off);
            }
        }
        let (jlo, jhi) = (off_lo.ceil() as i64, off_hi.floor() as i64);
        for j in jlo..=jhi {
            let mut line = Vec::new();
            for i in ilo..=ihi {
                let x = i as f64 * delta * cb;
                let y = tb * x + j as f64 * rho / cb;
                if x >= xlo && x <= xhi && y >= ylo && y <= yhi {
                    line.push((x, y));
                }
            }
            passes.push(line);
            pass_dirs.push(wrap_angle(beta_rad));
        }
    }
    for (pass_idx, (mut line, dir)) in
        passes.into_iter().zip(pass_dirs).enumerate()
    {
        let reverse = match ordering {
            PassOrdering::SameUp => false,
            PassOrdering::SameDown => true,
            PassOrdering::Alternating => pass_idx % 2 == 1,
        };
        let angle = if reverse {
            line.reverse();
            wrap_angle(dir + std::f64::consts::PI)
        } else {
            dir
        };
        for p in line {
            centers.push(p);
            angles.push(angle);
        }
    }
    ToolPath { centers_mm: centers, angles }
}

/// Arc length of the Archimedean spiral with radius growth `a` from
/// the origin up to angle `phi`.
pub fn spiral_arc_length(phi: f64, a: f64) -> Result<f64> {
    if phi < 0.0 {
        return Err(Error::InvalidArgument("spiral angle must be nonnegative".into()));
    }
    let s = (1.0 + phi * phi).sqrt();
    Ok(a / 2.0 * (phi * s + (phi + s).ln()))
}

/// d/dphi of [`spiral_arc_length`]; equals `a` at the origin.
pub fn spiral_arc_length_deriv(phi: f64, a: f64) -> Result<f64> {
    if phi < 0.0 {
        return Err(Error::InvalidArgument("spiral angle must be nonnegative".into()));
    }
    Ok(a * (1.0 + phi * phi).sqrt())
}

/// Spiral point for angle `phi` (before origin offset).
fn spiral_point(phi: f64, a: f64, beta: f64, orientation: f64, u: (f64, f64)) -> (f64, f64) {
    (
        orientation * a * phi * (phi + beta).cos() + u.0,
        a * phi * (phi + beta).sin() + u.1,
    )
}

/// Angles phi_(k) with L(phi_(k)) = k delta, via Newton's method
/// warm-started from the previous angle.
///
/// The previous angle is close enough that the very first step lands
/// within ~1e-2 of the root; a single step per point would leave that
/// error visible in the innermost turns, so each point iterates the
/// cheap update until the arc-length residual is negligible (two or
/// three steps in practice).
pub fn spiral_angles(a: f64, delta: f64, count: usize) -> Vec<f64> {
    let mut phis = Vec::with_capacity(count);
    let mut phi = 0.0f64;
    phis.push(phi);
    for k in 1..count {
        let target = k as f64 * delta;
        for _ in 0..32 {
            let l = spiral_arc_length(phi, a).expect("phi >= 0");
            let ld = spiral_arc_length_deriv(phi, a).expect("phi >= 0");
            let step = (l - target) / ld;
            phi -= step;
            if step.abs() <= 1e-12 * phi.max(1.0) {
                break;
            }
        }
        phis.push(phi);
    }
    phis
}

/// Nominal centers for spiral milling.
pub fn spiral_centers(
    cfg: &MillConfig,
    grid: &GridSpec,
    origin_mm: (f64, f64),
    beta_rad: f64,
    orientation: i8,
    direction: SpiralDirection,
) -> ToolPath {
    let a = cfg.pass_distance_mm() / (2.0 * std::f64::consts::PI);
    let delta = cfg.center_spacing_mm;
    let o = if orientation < 0 { -1.0 } else { 1.0 };
    let (xlo, ylo, xhi, yhi) = dilated_bounds(cfg, grid);
    // generate until the spiral radius exceeds the farthest corner
    let r_max = [(xlo, ylo), (xlo, yhi), (xhi, ylo), (xhi, yhi)]
        .iter()
        .map(|&(x, y)| ((x - origin_mm.0).powi(2) + (y - origin_mm.1).powi(2)).sqrt())
        .fold(0.0f64, f64::max);
    // L(phi) >= a/2 phi^2 is a lower bound, so phi_max <= sqrt(2 L / a);
    // bound the count by arc length instead: L at the exit radius
    let count = {
        let phi_max = r_max / a + 2.0 * std::f64::consts::PI;
        let l_max = spiral_arc_length(phi_max, a).expect("phi >= 0");
        (l_max / delta).ceil() as usize + 2
    };
    let phis = spiral_angles(a, delta, count);
    let mut centers: Vec<(f64, f64)> = phis
        .iter()
        .map(|&phi| spiral_point(phi, a, beta_rad, o, origin_mm))
        .filter(|&(x, y)| x >= xlo && x <= xhi && y >= ylo && y <= yhi)
        .collect();
    if direction == SpiralDirection::Inward {
        centers.reverse();
    }
    let n = centers.len();
    let mut angles = vec![0.0; n];
    for k in 0..n {
        if k + 1 < n {
            let (dx, dy) = (
                centers[k + 1].0 - centers[k].0,
                centers[k + 1].1 - centers[k].1,
            );
            angles[k] = wrap_angle(dy.atan2(dx));
        } else if k > 0 {
            angles[k] = angles[k - 1];
        }
    }
    ToolPath { centers_mm: centers, angles }
}

/// Nominal tool-path for the configured pattern.
pub fn tool_path(cfg: &MillConfig, grid: &GridSpec) -> ToolPath {
    match cfg.path.clone() {
        PathSpec::Parallel { beta_rad, ordering } => {
            parallel_centers(cfg, grid, beta_rad, ordering)
        }
        PathSpec::Spiral { origin_mm, beta_rad, orientation, direction } => {
            spiral_centers(cfg, grid, origin_mm, beta_rad, orientation, direction)
        }
    }
}

/// Realized parameters of one ring.
#[derive(Debug, Clone, PartialEq)]
pub struct RingParams {
    pub index: usize,
    pub center_mm: (f64, f64),
    pub theta: f64,
    /// Ring radius r = d/2.
    pub r_mm: f64,
    pub w_minus_mm: f64,
    pub w_plus_i_mm: f64,
    pub w_plus_o_mm: f64,
    pub l_minus_um: f64,
    pub h_minus_um: f64,
    pub l_plus_i_um: f64,
    pub h_plus_i_um: f64,
    pub l_plus_o_um: f64,
    pub h_plus_o_um: f64,
    /// Noise terms (frequency, shift); the count is the Poisson draw.
    pub noise: Vec<(u64, f64)>,
    /// Convex-interaction weight plane extremes.
    pub a: f64,
    pub b: f64,
}

/// Support band of a ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Band {
    Indent,
    Inner,
    Outer,
}

impl RingParams {
    /// Band containing distance `dist` from the center, if any.
    /// Shared boundaries resolve toward the indentation.
    fn band(&self, dist: f64) -> Option<Band> {
        let r = self.r_mm;
        if self.w_minus_mm <= 0.0 {
            // degenerate ring: contributes nothing anywhere
            return None;
        }
        if dist >= r - self.w_minus_mm && dist <= r {
            return Some(Band::Indent);
        }
        if self.w_plus_i_mm > 0.0
            && dist >= r - self.w_minus_mm - self.w_plus_i_mm
            && dist < r - self.w_minus_mm
        {
            return Some(Band::Inner);
        }
        if self.w_plus_o_mm > 0.0 && dist > r && dist <= r + self.w_plus_o_mm {
            return Some(Band::Outer);
        }
        None
    }

    fn band_widths(&self, band: Band) -> f64 {
        match band {
            Band::Indent => self.w_minus_mm,
            Band::Inner => self.w_plus_i_mm,
            Band::Outer => self.w_plus_o_mm,
        }
    }

    /// Normalized distance to the band's central circle, in [-1, 1].
    fn normalized_distance(&self, band: Band, dist: f64) -> f64 {
        let r = self.r_mm;
        let w = self.band_widths(band);
        let mid = match band {
            Band::Indent => r - self.w_minus_mm / 2.0,
            Band::Inner => r - self.w_minus_mm - self.w_plus_i_mm / 2.0,
            Band::Outer => r + self.w_plus_o_mm / 2.0,
        };
        (dist - mid) * 2.0 / w
    }

    fn tilt_extremes(&self, band: Band) -> (f64, f64) {
        match band {
            Band::Indent => (self.l_minus_um, self.h_minus_um),
            Band::Inner => (self.l_plus_i_um, self.h_plus_i_um),
            Band::Outer => (self.l_plus_o_um, self.h_plus_o_um),
        }
    }

    /// Radial extent of the support for a shape kind.
    fn support_radii(&self, kind: ShapeKind) -> (f64, f64) {
        let r = self.r_mm;
        match kind {
            ShapeKind::Bump => (
                (r - self.w_minus_mm - self.w_plus_i_mm).max(0.0),
                r + self.w_plus_o_mm,
            ),
            _ => ((r - self.w_minus_mm).max(0.0), r),
        }
    }

    /// Whether `x` lies in the ring's point set P_k for the shape.
    fn supports(&self, kind: ShapeKind, x: (f64, f64)) -> bool {
        let dist = ((x.0 - self.center_mm.0).powi(2) + (x.1 - self.center_mm.1).powi(2))
            .sqrt();
        match self.band(dist) {
            None => false,
            Some(Band::Indent) => true,
            Some(_) => kind == ShapeKind::Bump,
        }
    }
}

/// Eq.-(1)-style plane through the ring: value `l` at the rearmost
/// point of the circle of radius r, `h` at the foremost.
fn plane(ring: &RingParams, x: (f64, f64), l: f64, h: f64) -> f64 {
    let proj = ring.theta.cos() * (x.0 - ring.center_mm.0)
        + ring.theta.sin() * (x.1 - ring.center_mm.1);
    (h - l) / (2.0 * ring.r_mm) * proj + (h + l) / 2.0
}

/// Shape profile in [-1, 1]; zero outside the support bands.
pub fn shape_value(ring: &RingParams, x: (f64, f64), kind: ShapeKind) -> f64 {
    let dist =
        ((x.0 - ring.center_mm.0).powi(2) + (x.1 - ring.center_mm.1).powi(2)).sqrt();
    let Some(band) = ring.band(dist) else {
        return 0.0;
    };
    match (kind, band) {
        (ShapeKind::Indicator, Band::Indent) => -1.0,
        (ShapeKind::Cosine, Band::Indent) => {
            let d = ring.normalized_distance(Band::Indent, dist);
            -(std::f64::consts::FRAC_PI_2 * d).cos()
        }
        (ShapeKind::Bump, _) => {
            let d = ring.normalized_distance(band, dist);
            let c = (std::f64::consts::FRAC_PI_2 * d).cos();
            if band == Band::Indent {
                -c
            } else {
                c
            }
        }
        _ => 0.0,
    }
}

/// Tilting plane value; per band, with that band's extreme scalings.
pub fn tilt_value(ring: &RingParams, x: (f64, f64)) -> f64 {
    let dist =
        ((x.0 - ring.center_mm.0).powi(2) + (x.1 - ring.center_mm.1).powi(2)).sqrt();
    let Some(band) = ring.band(dist) else {
        return 0.0;
    };
    let (l, h) = ring.tilt_extremes(band);
    plane(ring, x, l, h)
}

/// Vibration noise: a normalized sum of angular sine waves on P_k.
pub fn noise_value(ring: &RingParams, x: (f64, f64), kind: ShapeKind) -> f64 {
    if ring.noise.is_empty() || !ring.supports(kind, x) {
        return 0.0;
    }
    let ang = (x.1 - ring.center_mm.1).atan2(x.0 - ring.center_mm.0);
    let sum: f64 = ring
        .noise
        .iter()
        .map(|&(tau, xi)| (tau as f64 * ang + xi).sin())
        .sum();
    sum / ring.noise.len() as f64
}

/// The full sub-model of one ring: shape x tilt + noise.
pub fn ring_value(ring: &RingParams, x: (f64, f64), kind: ShapeKind) -> f64 {
    shape_value(ring, x, kind) * tilt_value(ring, x) + noise_value(ring, x, kind)
}

/// Sample one ring bundle per path point.
///
/// Draws run in path order from a single stream, so the realization is
/// fixed by (path, cfg, stream). Afterwards the temporal order of
/// ceil(epsilon n) randomly chosen rings is permuted; complete bundles
/// move, not just centers.
pub fn sample_rings(
    path: &ToolPath,
    cfg: &MillConfig,
    rng: &mut RandomStream,
) -> Vec<RingParams> {
    let r = cfg.radius_mm();
    let r_um = r * 1000.0;
    let mu_l_minus = cfg.center_depth_um - r_um * cfg.tilt_angle_rad.sin();
    let mu_h_minus = cfg.center_depth_um + r_um * cfg.tilt_angle_rad.sin();
    let n = path.len();
    let mut rings = Vec::with_capacity(n);
    for k in 0..n {
        let (cx, cy) = path.centers_mm[k];
        let center = (
            rng.normal(cx, cfg.center_jitter_mm.0),
            rng.normal(cy, cfg.center_jitter_mm.1),
        );
        let w_minus = rng
            .normal(cfg.w_minus_mm.mean, cfg.w_minus_mm.std)
            .clamp(0.0, r);
        let w_plus_i = rng
            .normal(cfg.w_plus_i_mm.mean, cfg.w_plus_i_mm.std)
            .clamp(0.0, r - w_minus);
        let w_plus_o = rng
            .normal(cfg.w_plus_o_mm.mean, cfg.w_plus_o_mm.std)
            .max(0.0);
        let l_minus = rng.normal(mu_l_minus, cfg.sigma_l_minus_um);
        let h_minus = rng.normal(mu_h_minus, cfg.sigma_h_minus_um);
        let l_plus_i = rng.normal(cfg.l_plus_i_um.mean, cfg.l_plus_i_um.std);
        let h_plus_i = rng.normal(cfg.h_plus_i_um.mean, cfg.h_plus_i_um.std);
        let l_plus_o = rng.normal(cfg.l_plus_o_um.mean, cfg.l_plus_o_um.std);
        let h_plus_o = rng.normal(cfg.h_plus_o_um.mean, cfg.h_plus_o_um.std);
        let count = rng.poisson(cfg.noise_lambda);
        let noise: Vec<(u64, f64)> = (0..count)
            .map(|_| (rng.poisson(cfg.noise_tau), rng.uniform_angle()))
            .collect();
        let a = rng.uniform_in(cfg.a_min, cfg.a_max);
        let b = rng.uniform_in(cfg.b_min, cfg.b_max);
        rings.push(RingParams {
            index: k,
            center_mm: center,
            theta: path.angles[k],
            r_mm: r,
            w_minus_mm: w_minus,
            w_plus_i_mm: w_plus_i,
            w_plus_o_mm: w_plus_o,
            l_minus_um: l_minus,
            h_minus_um: h_minus,
            l_plus_i_um: l_plus_i,
            h_plus_i_um: h_plus_i,
            l_plus_o_um: l_plus_o,
            h_plus_o_um: h_plus_o,
            noise,
            a,
            b,
        });
    }
    let m = (cfg.reorder_fraction * n as f64).ceil() as usize;
    if m > 1 {
        let mut positions = rng.sample_indices(n, m);
        positions.sort_unstable();
        let mut bundle: Vec<RingParams> =
            positions.iter().map(|&p| rings[p].clone()).collect();
        rng.shuffle(&mut bundle);
        for (p, ring) in positions.into_iter().zip(bundle) {
            rings[p] = ring;
        }
    }
    rings
}

/// Indices of the rings whose support annulus can intersect the given
/// rectangle, preserving temporal order.
pub fn ring_index(
    rings: &[RingParams],
    kind: ShapeKind,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
) -> Vec<usize> {
    let mut out = Vec::new();
    for (k, ring) in rings.iter().enumerate() {
        if ring.w_minus_mm <= 0.0 {
            continue;
        }
        let (r_in, r_out) = ring.support_radii(kind);
        let (cx, cy) = ring.center_mm;
        // nearest distance from the center to the rectangle
        let dx = (x0 - cx).max(0.0).max(cx - x1);
        let dy = (y0 - cy).max(0.0).max(cy - y1);
        let d_min = (dx * dx + dy * dy).sqrt();
        // farthest corner
        let fx = (cx - x0).abs().max((cx - x1).abs());
        let fy = (cy - y0).abs().max((cy - y1).abs());
        let d_max = (fx * fx + fy * fy).sqrt();
        if d_min <= r_out && d_max >= r_in {
            out.push(k);
        }
    }
    out
}

fn eval_pixel(
    rings: &[RingParams],
    candidates: &[usize],
    kind: ShapeKind,
    interaction: InteractionKind,
    x: (f64, f64),
) -> f64 {
    let mut v = 0.0f64;
    for &k in candidates {
        let ring = &rings[k];
        if !ring.supports(kind, x) {
            continue;
        }
        let rv = ring_value(ring, x, kind);
        match interaction {
            InteractionKind::Min => v = v.min(rv),
            InteractionKind::Latest => v = rv,
            InteractionKind::Convex => {
                let a = plane(ring, x, ring.a, ring.b);
                v = a * rv + (1.0 - a) * v;
            }
        }
    }
    v
}

/// Evaluate the ring scene on a pixel grid.
///
/// Tiles of `tile_px` pixels are processed in parallel; each tile
/// first narrows the ring list with [`ring_index`]. Because rings not
/// supporting a pixel never touch its accumulator, the result is
/// bit-identical for any tile size and thread count.
pub fn evaluate_field(
    rings: &[RingParams],
    kind: ShapeKind,
    interaction: InteractionKind,
    grid: &GridSpec,
    tile_px: usize,
) -> Result<HeightField> {
    if grid.width_px == 0 || grid.height_px == 0 {
        return Err(Error::InvalidArgument("grid must be nonempty".into()));
    }
    if !(grid.spacing_um > 0.0) || tile_px == 0 {
        return Err(Error::InvalidArgument("bad grid spacing or tile size".into()));
    }
    let sp_mm = grid.spacing_um / 1000.0;
    let (w, h) = (grid.width_px, grid.height_px);
    let tiles_x = w.div_ceil(tile_px);
    let tiles_y = h.div_ceil(tile_px);
    let tiles: Vec<(usize, usize)> = (0..tiles_y)
        .flat_map(|ty| (0..tiles_x).map(move |tx| (tx, ty)))
        .collect();
    let computed: Vec<((usize, usize), Vec<f64>)> = tiles
        .par_iter()
        .map(|&(tx, ty)| {
            let px0 = tx * tile_px;
            let py0 = ty * tile_px;
            let pw = tile_px.min(w - px0);
            let ph = tile_px.min(h - py0);
            let rx0 = grid.x0_mm + px0 as f64 * sp_mm;
            let ry0 = grid.y0_mm + py0 as f64 * sp_mm;
            let rx1 = grid.x0_mm + (px0 + pw) as f64 * sp_mm;
            let ry1 = grid.y0_mm + (py0 + ph) as f64 * sp_mm;
            let candidates = ring_index(rings, kind, rx0, ry0, rx1, ry1);
            let mut buf = vec![0.0; pw * ph];
            for py in 0..ph {
                let y = grid.y0_mm + (py0 + py) as f64 * sp_mm + 0.5 * sp_mm;
                for px in 0..pw {
                    let x = grid.x0_mm + (px0 + px) as f64 * sp_mm + 0.5 * sp_mm;
                    buf[py * pw + px] =
                        eval_pixel(rings, &candidates, kind, interaction, (x, y));
                }
            }
            ((tx, ty), buf)
        })
        .collect();
    let mut data = vec![0.0; w * h];
    for ((tx, ty), buf) in computed {
        let px0 = tx * tile_px;
        let py0 = ty * tile_px;
        let pw = tile_px.min(w - px0);
        let ph = tile_px.min(h - py0);
        for py in 0..ph {
            let row = (py0 + py) * w + px0;
            data[row..row + pw].copy_from_slice(&buf[py * pw..(py + 1) * pw]);
        }
    }
    HeightField::new(w, h, grid.spacing_um, data)
}

/// Full render: tool-path, ring sampling, grid evaluation. Returns the
/// field and the number of generated rings.
pub fn render_mill(
    cfg: &MillConfig,
    grid: &GridSpec,
    tile_px: usize,
) -> Result<(HeightField, usize)> {
    cfg.validate()?;
    let path = tool_path(cfg, grid);
    let mut rng = RandomStream::new(cfg.seed).substream("rings");
    let rings = sample_rings(&path, cfg, &mut rng);
    let field = evaluate_field(&rings, cfg.shape, cfg.interaction, grid, tile_px)?;
    Ok((field, rings.len()))
}

/// Affine height adaptation to a target sample mean and variance.
pub fn adapt_height(
    field: &HeightField,
    target_mean: f64,
    target_variance: f64,
) -> Result<HeightField> {
    if target_variance < 0.0 {
        return Err(Error::InvalidArgument("target variance must be >= 0".into()));
    }
    let s = field.stats();
    if s.variance <= 0.0 {
        return Err(Error::InvalidArgument(
            "cannot adapt a field with zero height variance".into(),
        ));
    }
    let gain = (target_variance / s.variance).sqrt();
    field.map(|v| (v - s.mean) * gain + target_mean)
}
