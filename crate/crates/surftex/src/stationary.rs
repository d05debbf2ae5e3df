//! Stationary Gaussian texture generators for sandblasted surfaces.
//!
//! Both generators keep the exemplar's second-order statistics:
//! `rpn` keeps the Fourier modulus exactly and randomizes the phase,
//! `adsn` convolves the normalized exemplar with white noise and keeps
//! the modulus in expectation. `extend_input` enlarges an exemplar with
//! variance-preserving padding for oversized outputs.

use crate::spectral::{fft2d, SpectralField};
use crate::{Error, HeightField, RandomStream, Result};
use rustfft::num_complex::Complex;

/// Hermitian-antisymmetric random phase, one angle per frequency.
#[derive(Debug, Clone)]
pub struct PhaseField {
    width: usize,
    height: usize,
    theta: Vec<f64>,
}

impl PhaseField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, fx: usize, fy: usize) -> f64 {
        self.theta[fy * self.width + fx]
    }
}

/// True if frequency (fx, fy) is its own conjugate, i.e. 2*xi = 0 mod size.
fn self_conjugate(fx: usize, fy: usize, w: usize, h: usize) -> bool {
    (2 * fx) % w == 0 && (2 * fy) % h == 0
}

/// Draw a uniform random phase.
///
/// Free frequencies get independent angles in (-pi, pi], conjugate
/// pairs get opposite angles, self-conjugate (Nyquist) frequencies get
/// an angle in {0, pi}, and the DC phase is fixed to 0 so the mean is
/// preserved. Frequencies are visited in row-major order, one draw per
/// unvisited conjugate pair, which makes the assignment deterministic
/// for a given stream.
pub fn sample_phase(width: usize, height: usize, rng: &mut RandomStream) -> PhaseField {
    let mut theta = vec![0.0f64; width * height];
    let mut visited = vec![false; width * height];
    for fy in 0..height {
        for fx in 0..width {
            let idx = fy * width + fx;
            if visited[idx] {
                continue;
            }
            visited[idx] = true;
            if fx == 0 && fy == 0 {
                theta[idx] = 0.0;
                continue;
            }
            if self_conjugate(fx, fy, width, height) {
                theta[idx] = if rng.bernoulli() { std::f64::consts::PI } else { 0.0 };
                continue;
            }
            let cx = (width - fx) % width;
            let cy = (height - fy) % height;
            let cidx = cy * width + cx;
            let a = rng.uniform_angle();
            theta[idx] = a;
            // negate into (-pi, pi]
            theta[cidx] = if a == std::f64::consts::PI {
                std::f64::consts::PI
            } else {
                -a
            };
            visited[cidx] = true;
        }
    }
    PhaseField {
        width,
        height,
        theta,
    }
}

/// Random phase noise: same Fourier modulus as the input, uniform
/// random phase added, mean preserved.
pub fn rpn(input: &HeightField, rng: &mut RandomStream) -> HeightField {
    let (w, h) = (input.width(), input.height());
    let phase = sample_phase(w, h, rng);
    let mut spec = SpectralField::from_field(input);
    for fy in 0..h {
        for fx in 0..w {
            let t = phase.get(fx, fy);
            let rot = Complex::new(t.cos(), t.sin());
            let c = spec.get(fx, fy) * rot;
            spec.coeffs_mut()[fy * w + fx] = c;
        }
    }
    spec.to_field(input.spacing_um())
        .expect("rpn output is finite")
}

/// Asymptotic discrete spot noise: the input mean plus the circular
/// convolution of the normalized spot `(input - mean)/sqrt(MN)` with a
/// unit Gaussian white-noise field, computed spectrally.
pub fn adsn(input: &HeightField, rng: &mut RandomStream) -> HeightField {
    let (w, h) = (input.width(), input.height());
    let n = (w * h) as f64;
    let mean = input.stats().mean;
    let spot: Vec<Complex<f64>> = input
        .data()
        .iter()
        .map(|&v| Complex::new((v - mean) / n.sqrt(), 0.0))
        .collect();
    let noise: Vec<Complex<f64>> = (0..w * h)
        .map(|_| Complex::new(rng.standard_normal(), 0.0))
        .collect();
    let spot_hat = fft2d(w, h, spot, false);
    let noise_hat = fft2d(w, h, noise, false);
    let prod: Vec<Complex<f64>> = spot_hat
        .iter()
        .zip(&noise_hat)
        .map(|(a, b)| a * b)
        .collect();
    let conv = fft2d(w, h, prod, true);
    let data: Vec<f64> = conv.iter().map(|c| mean + c.re / n).collect();
    HeightField::new(w, h, input.spacing_um(), data).expect("adsn output is finite")
}

/// Width of the sigmoid blend band at the border of the embedded input,
/// in pixels.
pub const DEFAULT_BLEND_BAND: usize = 8;

/// Extend an exemplar to a larger size with variance-preserving
/// padding.
///
/// The input is centered in the target, its fluctuations are rescaled
/// by `sqrt(target_area / input_area)` so mean and variance carry over,
/// and a logistic ramp over `band` border pixels blends them into the
/// constant mean outside. The ramp slope covers [0.01, 0.99] across the
/// band. A residual-mean correction keeps the output mean exactly at
/// the input mean.
pub fn extend_input(
    input: &HeightField,
    target_w: usize,
    target_h: usize,
    band: usize,
) -> Result<HeightField> {
    let (w, h) = (input.width(), input.height());
    if target_w < w || target_h < h {
        return Err(Error::InvalidArgument(format!(
            "extension target {target_w}x{target_h} smaller than input {w}x{h}"
        )));
    }
    let mean = input.stats().mean;
    let scale = ((target_w * target_h) as f64 / (w * h) as f64).sqrt();
    // logistic ramp hitting 0.01 / 0.99 at the band ends
    let slope = 2.0 * (0.99f64 / 0.01).ln() / band.max(1) as f64;
    let ramp = |dist_from_edge: f64| -> f64 {
        if band == 0 {
            return 1.0;
        }
        let half = band as f64 / 2.0;
        1.0 / (1.0 + (-slope * (dist_from_edge + 0.5 - half)).exp())
    };
    let x_off = (target_w - w) / 2;
    let y_off = (target_h - h) / 2;
    let mut fluct = vec![0.0f64; target_w * target_h];
    let mut fluct_sum = 0.0;
    for y in 0..h {
        let dy = (y.min(h - 1 - y)) as f64;
        for x in 0..w {
            let dx = (x.min(w - 1 - x)) as f64;
            let blend = ramp(dx) * ramp(dy);
            let v = blend * scale * (input.get(x, y) - mean);
            fluct[(y + y_off) * target_w + (x + x_off)] = v;
            fluct_sum += v;
        }
    }
    // remove the blend-induced residual so the mean is preserved exactly
    let correction = fluct_sum / (w * h) as f64;
    for y in 0..h {
        for x in 0..w {
            fluct[(y + y_off) * target_w + (x + x_off)] -= correction;
        }
    }
    // the blend damps border fluctuations; rescale so the output
    // variance equals the input variance
    let input_var = input.stats().variance;
    let cur_var = fluct.iter().map(|v| v * v).sum::<f64>() / (target_w * target_h) as f64;
    if cur_var > 0.0 {
        let gain = (input_var / cur_var).sqrt();
        for v in &mut fluct {
            *v *= gain;
        }
    }
    let data: Vec<f64> = fluct.iter().map(|&v| mean + v).collect();
    HeightField::new(target_w, target_h, input.spacing_um(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::autocorrelation;

    fn random_field(w: usize, h: usize, seed: u64) -> HeightField {
        let mut rng = RandomStream::new(seed);
        HeightField::new(w, h, 1.0, (0..w * h).map(|_| rng.normal(4.0, 2.0)).collect()).unwrap()
    }

    #[test]
    fn phase_1x1_is_dc_only() {
        let mut rng = RandomStream::new(1);
        let p = sample_phase(1, 1, &mut rng);
        assert_eq!(p.get(0, 0), 0.0);
    }

    #[test]
    fn phase_2x2_all_self_conjugate() {
        let mut rng = RandomStream::new(2);
        let p = sample_phase(2, 2, &mut rng);
        assert_eq!(p.get(0, 0), 0.0);
        for (fx, fy) in [(1, 0), (0, 1), (1, 1)] {
            let t = p.get(fx, fy);
            assert!(t == 0.0 || t == std::f64::consts::PI, "theta {t}");
        }
    }

    #[test]
    fn phase_antisymmetry_exhaustive() {
        for &(w, h) in &[(5usize, 5usize), (6, 4), (7, 3)] {
            let mut rng = RandomStream::new(3);
            let p = sample_phase(w, h, &mut rng);
            for fy in 0..h {
                for fx in 0..w {
                    let a = p.get(fx, fy);
                    let b = p.get((w - fx) % w, (h - fy) % h);
                    let two_pi = 2.0 * std::f64::consts::PI;
                    let diff = ((a + b) % two_pi + two_pi) % two_pi;
                    let diff = diff.min(two_pi - diff);
                    assert!(diff < 1e-12, "({fx},{fy}) in {w}x{h}: {a} vs {b}");
                    assert!(a > -std::f64::consts::PI && a <= std::f64::consts::PI);
                }
            }
        }
    }

    #[test]
    fn rpn_constant_input_unchanged() {
        let f = HeightField::constant(8, 8, 1.0, 7.0).unwrap();
        let mut rng = RandomStream::new(4);
        let out = rpn(&f, &mut rng);
        for &v in out.data() {
            assert!((v - 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rpn_preserves_modulus_and_mean() {
        let f = random_field(8, 8, 5);
        let mut rng = RandomStream::new(6);
        let out = rpn(&f, &mut rng);
        let sf = SpectralField::from_field(&f);
        let so = SpectralField::from_field(&out);
        for i in 0..64 {
            let (a, b) = (sf.coeffs()[i].norm(), so.coeffs()[i].norm());
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "coeff {i}: {a} vs {b}");
        }
        assert!((out.stats().mean - f.stats().mean).abs() < 1e-9);
    }

    #[test]
    fn rpn_preserves_autocorrelation() {
        let f = random_field(16, 16, 7);
        let mut rng = RandomStream::new(8);
        let out = rpn(&f, &mut rng);
        let (a, b) = (autocorrelation(&f), autocorrelation(&out));
        for i in 0..a.data().len() {
            assert!((a.data()[i] - b.data()[i]).abs() < 1e-9 * (1.0 + a.data()[i].abs()));
        }
    }

    #[test]
    fn generators_deterministic_in_seed() {
        let f = random_field(8, 8, 9);
        let a = rpn(&f, &mut RandomStream::new(10));
        let b = rpn(&f, &mut RandomStream::new(10));
        assert_eq!(a.data(), b.data());
        let c = rpn(&f, &mut RandomStream::new(11));
        assert_ne!(a.data(), c.data());
        let d = adsn(&f, &mut RandomStream::new(10));
        let e = adsn(&f, &mut RandomStream::new(10));
        assert_eq!(d.data(), e.data());
    }

    #[test]
    fn generators_fix_zero_field() {
        let z = HeightField::constant(8, 8, 1.0, 0.0).unwrap();
        let a = rpn(&z, &mut RandomStream::new(12));
        let b = adsn(&z, &mut RandomStream::new(12));
        assert!(a.data().iter().all(|v| v.abs() < 1e-12));
        assert!(b.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn adsn_constant_input_gives_constant_mean() {
        let f = HeightField::constant(8, 8, 1.0, 3.5).unwrap();
        let out = adsn(&f, &mut RandomStream::new(13));
        for &v in out.data() {
            assert!((v - 3.5).abs() < 1e-9);
        }
    }

    #[test]
    fn adsn_variance_monte_carlo() {
        let f = random_field(16, 16, 14);
        let target = f.stats().variance;
        let n_seeds = 200;
        let mut samples = Vec::with_capacity(n_seeds);
        for s in 0..n_seeds {
            let out = adsn(&f, &mut RandomStream::new(1000 + s as u64));
            // per-realization spatial second moment about the input mean
            let mean = f.stats().mean;
            let v = out
                .data()
                .iter()
                .map(|&x| (x - mean).powi(2))
                .sum::<f64>()
                / 256.0;
            samples.push(v);
        }
        let est = samples.iter().sum::<f64>() / n_seeds as f64;
        let sd = (samples.iter().map(|v| (v - est).powi(2)).sum::<f64>()
            / (n_seeds as f64 - 1.0))
            .sqrt();
        let se = sd / (n_seeds as f64).sqrt();
        assert!(
            (est - target).abs() <= 3.0 * se,
            "estimated {est}, target {target}, se {se}"
        );
    }

    #[test]
    fn extend_input_constant_stays_constant() {
        let f = HeightField::constant(16, 16, 1.0, 2.0).unwrap();
        let e = extend_input(&f, 40, 40, DEFAULT_BLEND_BAND).unwrap();
        for &v in e.data() {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn extend_input_same_size_keeps_center_structure() {
        let f = random_field(64, 64, 15);
        let e = extend_input(&f, 64, 64, DEFAULT_BLEND_BAND).unwrap();
        // interior fluctuations keep their sign and stay within the
        // variance-compensation gain of the originals
        let mean = f.stats().mean;
        let (fi, ei) = (f.get(32, 32) - mean, e.get(32, 32) - mean);
        assert_eq!(fi.signum(), ei.signum());
        assert!(ei.abs() >= fi.abs() * 0.9 && ei.abs() <= fi.abs() * 2.0);
    }

    #[test]
    fn extend_input_frame_is_mean_and_stats_preserved() {
        let f = random_field(64, 64, 16);
        let s = f.stats();
        let e = extend_input(&f, 128, 128, DEFAULT_BLEND_BAND).unwrap();
        // outside the embedded region the value is exactly the mean
        for y in 0..128 {
            for x in 0..128 {
                let inside = (32..96).contains(&x) && (32..96).contains(&y);
                if !inside {
                    assert!((e.get(x, y) - s.mean).abs() < 1e-12);
                }
            }
        }
        let se = e.stats();
        assert!((se.mean - s.mean).abs() < 1e-9);
        assert!(
            (se.variance - s.variance).abs() <= 0.02 * s.variance,
            "variance {} vs {}",
            se.variance,
            s.variance
        );
    }

    #[test]
    fn extend_input_rejects_shrinking() {
        let f = random_field(8, 8, 17);
        assert!(extend_input(&f, 4, 8, 2).is_err());
    }
}
