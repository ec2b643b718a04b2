//! Scalar restoration metrics on plain values (no tape).

use crate::error::{dim_err, Result};
use crate::signal::ComplexSignal;

/// Lower clamp for error energies so that perfect restorations stay finite.
pub const MSE_FLOOR: f64 = 1e-12;

/// Mean squared error `(1/N) Σ (a - b)²`, accumulated in f64.
pub fn mse(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(dim_err!("mse length mismatch: {} vs {}", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(dim_err!("mse of empty sequences"));
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

fn joint_mse(clean: &ComplexSignal, candidate: &ComplexSignal) -> f64 {
    let n = 2 * clean.len();
    let sum: f64 = [0, 1]
        .iter()
        .flat_map(|&c| clean.channel(c).iter().zip(candidate.channel(c)))
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    sum / n as f64
}

/// Peak SNR in dB: `10·log10(max(clean)² / MSE)`, with the peak taken over
/// both channels. Both the squared peak and the MSE are clamped at
/// [`MSE_FLOOR`].
pub fn psnr(clean: &ComplexSignal, candidate: &ComplexSignal) -> f64 {
    let peak = clean.max_value() as f64;
    10.0 * libm::log10((peak * peak).max(MSE_FLOOR) / joint_mse(clean, candidate).max(MSE_FLOOR))
}

/// PSNR over plain slices with the same conventions as [`psnr`].
pub fn psnr_slices(clean: &[f32], candidate: &[f32]) -> Result<f64> {
    let m = mse(clean, candidate)?;
    let peak = clean.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    Ok(10.0 * libm::log10((peak * peak).max(MSE_FLOOR) / m.max(MSE_FLOOR)))
}

/// Signal-to-noise ratio in dB of `candidate` against `clean`, computed on
/// the complex sequence: `10·log10(Σ|s|² / Σ|s - ŝ|²)`.
pub fn snr_db(clean: &ComplexSignal, candidate: &ComplexSignal) -> f64 {
    let signal = clean.power();
    let err = joint_mse(clean, candidate) * (2 * clean.len()) as f64;
    10.0 * libm::log10(signal / err.max(MSE_FLOOR))
}

/// Normalized PSNR label for a restored signal, clamped to [0, 1].
pub fn y_res(clean: &ComplexSignal, restored: &ComplexSignal, psnr_target_db: f64) -> f64 {
    debug_assert!(psnr_target_db > 0.0);
    (psnr(clean, restored) / psnr_target_db).clamp(0.0, 1.0)
}

/// Label of a clean signal.
pub const Y_CLEAN: f64 = 1.0;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SEGMENT_LEN;
    use alloc::vec::Vec;

    fn sig(f: impl Fn(usize) -> (f32, f32)) -> ComplexSignal {
        let (i, q): (Vec<f32>, Vec<f32>) = (0..SEGMENT_LEN).map(f).unzip();
        ComplexSignal::new(i, q).unwrap()
    }

    #[test]
    fn mse_basics() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn psnr_of_identical_hits_clamp_ceiling() {
        let s = sig(|n| ((n as f32 * 0.1).cos(), (n as f32 * 0.1).sin()));
        let peak = s.max_value() as f64;
        let expected = 10.0 * libm::log10(peak * peak / MSE_FLOOR);
        assert_eq!(psnr(&s, &s), expected);
    }

    #[test]
    fn psnr_half_mse_unit_peak() {
        // Peak 1; half of the 2048 samples are off by exactly 1, so MSE = 0.5.
        let clean = sig(|n| (if n == 0 { 1.0 } else { 0.0 }, 0.0));
        let cand = sig(|n| {
            let off = if n % 2 == 0 { 1.0 } else { 0.0 };
            (clean.i()[n] + off, off)
        });
        assert!((psnr(&clean, &cand) - 3.010_299_956_639_812).abs() < 1e-9);
    }

    #[test]
    fn psnr_is_scale_invariant() {
        let s = sig(|n| ((n as f32 * 0.05).cos(), (n as f32 * 0.05).sin()));
        let r = sig(|n| ((n as f32 * 0.05).cos() + 0.1, (n as f32 * 0.05).sin() - 0.05));
        let half = |x: &ComplexSignal| {
            ComplexSignal::new(x.i().iter().map(|v| v * 0.5).collect(), x.q().iter().map(|v| v * 0.5).collect())
                .unwrap()
        };
        assert!((psnr(&s, &r) - psnr(&half(&s), &half(&r))).abs() < 1e-9);
    }

    #[test]
    fn snr_equal_power_noise_is_zero_db() {
        let s = sig(|n| if n % 2 == 0 { (1.0, 0.0) } else { (0.0, 1.0) });
        let r = sig(|_| (1.0, 1.0));
        assert!(snr_db(&s, &r).abs() < 1e-12);
    }

    #[test]
    fn y_res_ratio_and_clamp() {
        // PSNR of 20 dB against a 40 dB target.
        let clean = sig(|_| (1.0, 1.0));
        let cand = sig(|_| (0.9, 0.9));
        assert!((psnr(&clean, &cand) - 20.0).abs() < 1e-5);
        assert!((y_res(&clean, &cand, 40.0) - 0.5).abs() < 1e-6);
        assert_eq!(y_res(&clean, &clean, 40.0), 1.0);
    }
}
