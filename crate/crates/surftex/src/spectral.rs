//! Fourier-domain machinery: 2d transforms, periodic-plus-smooth
//! decomposition, autocorrelation and histogram statistics.
//!
//! Transforms are unnormalized in the forward direction; the inverse
//! helpers divide by `M*N` so that forward followed by inverse is the
//! identity. Sizes are arbitrary, not restricted to powers of two.

use crate::{Error, HeightField, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Complex Fourier coefficients of a height field, DC at index (0,0).
#[derive(Debug, Clone)]
pub struct SpectralField {
    width: usize,
    height: usize,
    coeffs: Vec<Complex<f64>>,
}

impl SpectralField {
    /// Forward transform of a real field (unnormalized).
    pub fn from_field(field: &HeightField) -> SpectralField {
        let coeffs = fft2d(
            field.width(),
            field.height(),
            field.data().iter().map(|&v| Complex::new(v, 0.0)).collect(),
            false,
        );
        SpectralField {
            width: field.width(),
            height: field.height(),
            coeffs,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coeffs(&self) -> &[Complex<f64>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex<f64>] {
        &mut self.coeffs
    }

    pub fn get(&self, fx: usize, fy: usize) -> Complex<f64> {
        self.coeffs[fy * self.width + fx]
    }

    /// Inverse transform back to a real field (imaginary residue is
    /// discarded; it stays below 1e-9 for spectra of real fields).
    pub fn to_field(&self, spacing_um: f64) -> Result<HeightField> {
        let n = (self.width * self.height) as f64;
        let inv = fft2d(self.width, self.height, self.coeffs.clone(), true);
        HeightField::new(
            self.width,
            self.height,
            spacing_um,
            inv.iter().map(|c| c.re / n).collect(),
        )
    }
}

/// 2d FFT over row-major complex data: rows first, then columns via
/// transpose. Unnormalized in both directions.
pub fn fft2d(
    width: usize,
    height: usize,
    mut buf: Vec<Complex<f64>>,
    inverse: bool,
) -> Vec<Complex<f64>> {
    assert_eq!(buf.len(), width * height);
    let mut planner = FftPlanner::new();
    let fft_row = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    for row in buf.chunks_exact_mut(width) {
        fft_row.process(row);
    }
    let mut t = transpose(width, height, &buf);
    let fft_col = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    for col in t.chunks_exact_mut(height) {
        fft_col.process(col);
    }
    transpose(height, width, &t)
}

fn transpose(width: usize, height: usize, buf: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); buf.len()];
    for y in 0..height {
        for x in 0..width {
            out[x * height + y] = buf[y * width + x];
        }
    }
    out
}

/// Sample autocorrelation of the centered field, shifted so lag (0,0)
/// sits at the image center. The value at lag 0 equals the biased
/// sample variance.
pub fn autocorrelation(field: &HeightField) -> HeightField {
    let (w, h) = (field.width(), field.height());
    let n = (w * h) as f64;
    let mean = field.stats().mean;
    let centered: Vec<Complex<f64>> = field
        .data()
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .collect();
    let spec = fft2d(w, h, centered, false);
    let power: Vec<Complex<f64>> = spec
        .iter()
        .map(|c| Complex::new(c.norm_sqr(), 0.0))
        .collect();
    let corr = fft2d(w, h, power, true);
    // inverse fft is unnormalized: divide once for the inverse, once
    // for the per-pixel normalization of the correlation
    let mut data = vec![0.0; w * h];
    let (cx, cy) = (w / 2, h / 2);
    for y in 0..h {
        for x in 0..w {
            let sx = (x + w - cx) % w;
            let sy = (y + h - cy) % h;
            data[y * w + x] = corr[sy * w + sx].re / (n * n);
        }
    }
    HeightField::new(w, h, field.spacing_um(), data).expect("finite autocorrelation")
}

/// Value of the autocorrelation at lag (0,0), i.e. at the image center.
pub fn autocorrelation_lag0(ac: &HeightField) -> f64 {
    ac.get(ac.width() / 2, ac.height() / 2)
}

/// Periodic-plus-smooth decomposition.
///
/// Returns `(periodic, smooth)` with `periodic + smooth == field`. The
/// smooth part absorbs the across-border discontinuities, so the
/// periodic part can be treated as circularly periodic by the spectral
/// generators. The decomposition solves a discrete Poisson equation for
/// the boundary-discrepancy image.
pub fn periodic_decompose(field: &HeightField) -> Result<(HeightField, HeightField)> {
    let (w, h) = (field.width(), field.height());
    if w < 2 || h < 2 {
        return Err(Error::InvalidArgument(
            "periodic decomposition needs at least 2x2".into(),
        ));
    }
    // boundary discrepancy image: border rows/columns carry the jump
    // across the image, interior is zero
    let mut v = vec![0.0f64; w * h];
    for y in 0..h {
        let jump = field.get(w - 1, y) - field.get(0, y);
        v[y * w] += jump;
        v[y * w + w - 1] -= jump;
    }
    for x in 0..w {
        let jump = field.get(x, h - 1) - field.get(x, 0);
        v[x] += jump;
        v[(h - 1) * w + x] -= jump;
    }
    let vhat = fft2d(
        w,
        h,
        v.iter().map(|&x| Complex::new(x, 0.0)).collect(),
        false,
    );
    let mut shat = vec![Complex::new(0.0, 0.0); w * h];
    for fy in 0..h {
        for fx in 0..w {
            if fx == 0 && fy == 0 {
                continue; // DC forced to zero
            }
            let denom = 2.0 * (2.0 * std::f64::consts::PI * fx as f64 / w as f64).cos()
                + 2.0 * (2.0 * std::f64::consts::PI * fy as f64 / h as f64).cos()
                - 4.0;
            shat[fy * w + fx] = vhat[fy * w + fx] / denom;
        }
    }
    let n = (w * h) as f64;
    let smooth_raw = fft2d(w, h, shat, true);
    let smooth: Vec<f64> = smooth_raw.iter().map(|c| c.re / n).collect();
    let periodic: Vec<f64> = field
        .data()
        .iter()
        .zip(&smooth)
        .map(|(f, s)| f - s)
        .collect();
    Ok((
        HeightField::new(w, h, field.spacing_um(), periodic)?,
        HeightField::new(w, h, field.spacing_um(), smooth)?,
    ))
}

/// Sum of squared differences between opposite borders; the wrap-around
/// discontinuity energy the periodic component is meant to reduce.
pub fn border_jump_energy(field: &HeightField) -> f64 {
    let (w, h) = (field.width(), field.height());
    let mut e = 0.0;
    for y in 0..h {
        e += (field.get(w - 1, y) - field.get(0, y)).powi(2);
    }
    for x in 0..w {
        e += (field.get(x, h - 1) - field.get(x, 0)).powi(2);
    }
    e
}

/// Equal-width histogram over `[min, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Histogram with `nbins` equal-width bins spanning the value range.
/// The maximum value is assigned to the last bin.
pub fn histogram(field: &HeightField, nbins: usize) -> Result<Histogram> {
    if nbins == 0 {
        return Err(Error::InvalidArgument("nbins must be >= 1".into()));
    }
    let s = field.stats();
    let span = if s.max > s.min { s.max - s.min } else { 1.0 };
    let bin_edges: Vec<f64> = (0..=nbins)
        .map(|i| s.min + span * i as f64 / nbins as f64)
        .collect();
    let mut counts = vec![0u64; nbins];
    for &v in field.data() {
        let mut b = ((v - s.min) / span * nbins as f64).floor() as usize;
        if b >= nbins {
            b = nbins - 1;
        }
        counts[b] += 1;
    }
    Ok(Histogram { bin_edges, counts })
}

impl Histogram {
    /// CSV rows `edge_low,edge_high,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge_low,edge_high,count\n");
        for (i, &c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                c
            ));
        }
        out
    }
}

/// Rank-based histogram matching.
///
/// Each pixel of `source` is ranked by value, with ties broken by
/// row-major scan order, and receives the value of the same rank in
/// `reference`. The output's value multiset equals the reference's
/// exactly.
pub fn match_histogram(source: &HeightField, reference: &HeightField) -> Result<HeightField> {
    let n = source.data().len();
    if n != reference.data().len() {
        return Err(Error::SizeMismatch(format!(
            "source has {n} pixels, reference has {}",
            reference.data().len()
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable by value; scan order breaks ties
    order.sort_by(|&a, &b| {
        source.data()[a]
            .partial_cmp(&source.data()[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut ref_sorted: Vec<f64> = reference.data().to_vec();
    ref_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = vec![0.0; n];
    for (rank, &idx) in order.iter().enumerate() {
        out[idx] = ref_sorted[rank];
    }
    HeightField::new(source.width(), source.height(), source.spacing_um(), out)
}
