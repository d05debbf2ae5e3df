//! End-to-end generation of sandblasted surface textures.
//!
//! A measured exemplar is first brought to the requested pixel spacing
//! by nearest-neighbor down-sampling, then to the requested size:
//! directly (crop + spectral generation) when the exemplar is large
//! enough, otherwise by generating many patches and quilting them.
//! Spacing can only be coarsened; a finer target grid would ask for
//! information the measurement does not contain.

use crate::field::HeightField;
use crate::quilt::{stitch_all, StitchPlan};
use crate::rng::RandomStream;
use crate::spectral::periodic_decompose;
use crate::stationary::{adsn, extend_input, rpn, DEFAULT_BLEND_BAND};
use crate::{Error, Result};

/// Spectral texture generator to run on the exemplar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rpn,
    Adsn,
}

/// How to reach the target size once the spacing matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeStrategy {
    /// Crop when the exemplar is large enough, otherwise stitch.
    Auto,
    Crop,
    /// Variance-preserving extension of the exemplar, then one
    /// generation pass. Prone to blending artifacts; kept non-default.
    Pad,
    Stitch,
}

#[derive(Debug, Clone)]
pub struct SandblastConfig {
    pub target_w: usize,
    pub target_h: usize,
    pub target_spacing_um: f64,
    pub method: Method,
    pub size_strategy: SizeStrategy,
    pub patch_size: usize,
    pub overlap: usize,
    pub seed: u64,
}

impl SandblastConfig {
    fn validate(&self) -> Result<()> {
        if self.target_w == 0 || self.target_h == 0 {
            return Err(Error::InvalidArgument("target size must be positive".into()));
        }
        if !(self.target_spacing_um > 0.0) || !self.target_spacing_um.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "target spacing must be positive, got {}",
                self.target_spacing_um
            )));
        }
        if !(1 < self.overlap && self.overlap < self.patch_size) {
            return Err(Error::InvalidArgument(format!(
                "patch constraints violated: 1 < overlap {} < patch size {}",
                self.overlap, self.patch_size
            )));
        }
        Ok(())
    }
}

/// Periodic component of the exemplar, used as generator input so the
/// circular convolutions see no border discontinuity.
pub fn preprocess_periodic(input: &HeightField) -> Result<HeightField> {
    let (periodic, _) = periodic_decompose(input)?;
    Ok(periodic)
}

fn center_crop(field: &HeightField, w: usize, h: usize) -> Result<HeightField> {
    if field.width() < w || field.height() < h {
        return Err(Error::OutOfBounds(format!(
            "cannot crop {w}x{h} from {}x{}",
            field.width(),
            field.height()
        )));
    }
    field.crop((field.width() - w) / 2, (field.height() - h) / 2, w, h)
}

fn generate(method: Method, exemplar: &HeightField, rng: &mut RandomStream) -> HeightField {
    match method {
        Method::Rpn => rpn(exemplar, rng),
        Method::Adsn => adsn(exemplar, rng),
    }
}

/// The branch [`synthesize_sandblast`] will take for this input,
/// with `Auto` resolved against the down-sampled exemplar size.
pub fn resolve_strategy(
    input: &HeightField,
    cfg: &SandblastConfig,
) -> Result<SizeStrategy> {
    let factor = cfg.target_spacing_um / input.spacing_um();
    if factor < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "target spacing {} um is finer than the measured spacing {} um",
            cfg.target_spacing_um,
            input.spacing_um()
        )));
    }
    Ok(match cfg.size_strategy {
        SizeStrategy::Auto => {
            let dw = (input.width() as f64 / factor).ceil() as usize;
            let dh = (input.height() as f64 / factor).ceil() as usize;
            if dw >= cfg.target_w && dh >= cfg.target_h {
                SizeStrategy::Crop
            } else {
                SizeStrategy::Stitch
            }
        }
        s => s,
    })
}

/// Produce a sandblasted texture of the configured size and spacing
/// from a measured exemplar.
pub fn synthesize_sandblast(
    input: &HeightField,
    cfg: &SandblastConfig,
) -> Result<HeightField> {
    cfg.validate()?;
    let factor = cfg.target_spacing_um / input.spacing_um();
    if factor < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "target spacing {} um is finer than the measured spacing {} um; \
             the measurement does not contain that information",
            cfg.target_spacing_um,
            input.spacing_um()
        )));
    }
    let down = input
        .downsample_nn(factor)?
        .with_spacing(cfg.target_spacing_um)?;

    let strategy = resolve_strategy(input, cfg)?;

    let root = RandomStream::new(cfg.seed);
    match strategy {
        SizeStrategy::Crop => {
            let cropped = center_crop(&down, cfg.target_w, cfg.target_h)?;
            let exemplar = preprocess_periodic(&cropped)?;
            let mut rng = root.substream("generate");
            Ok(generate(cfg.method, &exemplar, &mut rng))
        }
        SizeStrategy::Pad => {
            if down.width() > cfg.target_w || down.height() > cfg.target_h {
                return Err(Error::InvalidArgument(
                    "pad strategy needs a target at least as large as the \
                     down-sampled input"
                        .into(),
                ));
            }
            let periodic = preprocess_periodic(&down)?;
            let extended =
                extend_input(&periodic, cfg.target_w, cfg.target_h, DEFAULT_BLEND_BAND)?;
            let mut rng = root.substream("generate");
            Ok(generate(cfg.method, &extended, &mut rng))
        }
        SizeStrategy::Stitch => {
            let p = cfg.patch_size;
            let o = cfg.overlap;
            if p > down.width() || p > down.height() {
                return Err(Error::InvalidArgument(format!(
                    "patch size {p} exceeds the down-sampled input {}x{}",
                    down.width(),
                    down.height()
                )));
            }
            let need = cfg.target_w.max(cfg.target_h);
            // smallest patch grid covering the target
            let n = if need <= p {
                1
            } else {
                (need - o).div_ceil(p - o)
            };
            let plan = StitchPlan::new(n, p, o)?;
            let stitched = stitch_all(&plan, |i, j| {
                let idx = (j * n + i) as u64;
                let mut rng = root.substream_indexed("patch", idx);
                let x0 = rng.uniform_usize(down.width() - p + 1);
                let y0 = rng.uniform_usize(down.height() - p + 1);
                let patch = down.crop(x0, y0, p, p)?;
                let exemplar = preprocess_periodic(&patch)?;
                Ok(generate(cfg.method, &exemplar, &mut rng))
            })?;
            center_crop(&stitched, cfg.target_w, cfg.target_h)
        }
        SizeStrategy::Auto => unreachable!("auto resolved above"),
    }
}
