//! Splitting statistics: normalized fluctuations against the Cauchy law,
//! exponential fits in the regular regime and quasimomentum correlations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::SplittingSample;

/// How the typical splitting is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypicalValue {
    /// One median over the whole ensemble.
    #[default]
    Median,
    /// `ln delta` linear in `1 / hbar_eff`, rescaled so the median ratio is 1.
    Detrended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationEnsemble {
    pub samples: Vec<SplittingSample>,
    pub mode: TypicalValue,
    /// Median of `delta` (the overall scale in detrended mode).
    pub delta_typ: f64,
    /// Typical value used for each sample.
    pub typical: Vec<f64>,
    pub normalized: Vec<f64>,
}

pub const MIN_FLUCTUATION_SAMPLES: usize = 50;

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData { needed: 2, got: n.min(y.len()) });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitFailure { reason: "abscissa has no spread".into(), best_residual: f64::NAN });
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rms = (x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum::<f64>() / n as f64).sqrt();
    Ok((a, b, rms))
}

pub fn normalize_fluctuations(samples: &[SplittingSample]) -> Result<FluctuationEnsemble> {
    normalize_fluctuations_with(samples, TypicalValue::Median)
}

pub fn normalize_fluctuations_with(samples: &[SplittingSample], mode: TypicalValue) -> Result<FluctuationEnsemble> {
    if samples.len() < MIN_FLUCTUATION_SAMPLES {
        return Err(Error::InsufficientData { needed: MIN_FLUCTUATION_SAMPLES, got: samples.len() });
    }
    if samples.iter().any(|s| !(s.delta > 0.0 && s.delta.is_finite())) {
        return Err(Error::ParameterDomain("splittings must be positive and finite".into()));
    }
    let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
    let delta_typ = median(&deltas);
    let typical = match mode {
        TypicalValue::Median => vec![delta_typ; deltas.len()],
        TypicalValue::Detrended => {
            let x: Vec<f64> = samples.iter().map(|s| 1.0 / s.hbar_eff).collect();
            let y: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
            let (a, b, _) = linear_fit(&x, &y)?;
            let trend: Vec<f64> = x.iter().map(|u| (a + b * u).exp()).collect();
            let ratio: Vec<f64> = deltas.iter().zip(&trend).map(|(d, t)| d / t).collect();
            let m = median(&ratio);
            trend.iter().map(|t| t * m).collect()
        }
    };
    let normalized = deltas.iter().zip(&typical).map(|(d, t)| d / t).collect();
    Ok(FluctuationEnsemble { samples: samples.to_vec(), mode, delta_typ, typical, normalized })
}

/// `P(delta_s < x)` for the half-Cauchy law of unit median.
pub fn cauchy_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        2.0 / PI * x.atan()
    }
}

/// Two-sided Kolmogorov-Smirnov distance of `values` from `cdf`.
pub fn ks_distance(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub const DEFAULT_KS_THRESHOLD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub ks: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub fn cauchy_gof(ensemble: &FluctuationEnsemble, threshold: f64) -> GofResult {
    cauchy_gof_values(&ensemble.normalized, threshold)
}

pub fn cauchy_gof_values(normalized: &[f64], threshold: f64) -> GofResult {
    let ks = ks_distance(normalized, cauchy_cdf);
    GofResult { ks, threshold, pass: ks < threshold }
}

/// Logarithmic histogram of `delta_s` over `[1e-3, 1e3]`: `(lo, hi, density)`.
pub fn log_histogram(normalized: &[f64], bins: usize) -> Vec<(f64, f64, f64)> {
    let (a, b) = (-3.0f64, 3.0f64);
    let w = (b - a) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in normalized {
        let u = (x.log10() - a) / w;
        if u >= 0.0 && (u as usize) < bins {
            counts[u as usize] += 1;
        }
    }
    let n = normalized.len().max(1) as f64;
    (0..bins)
        .map(|k| {
            let lo = 10f64.powf(a + w * k as f64);
            let hi = 10f64.powf(a + w * (k + 1) as f64);
            (lo, hi, counts[k] as f64 / (n * (hi - lo)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularFit {
    /// `S` in `delta ~ exp(-S / hbar_eff)`.
    pub action: f64,
    /// Intercept of `ln delta` at `1 / hbar_eff = 0`.
    pub prefactor: f64,
    /// RMS residual of `ln delta`.
    pub residual: f64,
    /// Spread `max - min` of `ln delta`.
    pub log_range: f64,
    pub warning: Option<String>,
}

/// Straight-line fit of `ln delta` against `1 / hbar_eff`.
pub fn regular_action_fit(samples: &[SplittingSample]) -> Result<RegularFit> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: samples.len() });
    }
    if samples.iter().any(|s| !(s.delta > 0.0 && s.hbar_eff > 0.0)) {
        return Err(Error::ParameterDomain("splittings and hbar_eff must be positive".into()));
    }
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (1.0 / s.hbar_eff, s.delta.ln())).collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (a, b, rms) = linear_fit(&x, &y)?;
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_range = hi - lo;
    let monotone = y.windows(2).all(|w| w[1] <= w[0]) || y.windows(2).all(|w| w[1] >= w[0]);
    let warning = if rms > 0.1 * log_range {
        Some(format!("residual {rms:.3} exceeds 10% of the log range {log_range:.3}: not a regular regime"))
    } else if !monotone && log_range < 2.0 {
        Some(format!("non-monotone splittings over a log range of only {log_range:.3}"))
    } else {
        None
    };
    Ok(RegularFit { action: -b, prefactor: a, residual: rms, log_range, warning })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationScale {
    pub scale: f64,
    /// Lag in grid steps.
    pub lag: usize,
    /// No crossing inside the window; `scale` is a lower bound.
    pub lower_bound: bool,
    pub autocorrelation: Vec<f64>,
}

/// First lag where the autocorrelation of `ln delta(beta)` drops below `1/e`.
pub fn beta_correlation_scale(betas: &[f64], deltas: &[f64]) -> Result<CorrelationScale> {
    let n = betas.len();
    if n < 100 || deltas.len() != n {
        return Err(Error::InsufficientData { needed: 100, got: n.min(deltas.len()) });
    }
    let step = betas[1] - betas[0];
    if !(step > 0.0) || betas.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * step.abs().max(1e-12)) {
        return Err(Error::ParameterDomain("beta grid must be uniform and increasing".into()));
    }
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::ParameterDomain("splittings must be positive".into()));
    }
    let l: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let m = l.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = l.iter().map(|v| v - m).collect();
    let var: f64 = c.iter().map(|v| v * v).sum::<f64>();
    if var == 0.0 {
        return Err(Error::FitFailure {
            reason: "constant splittings have no correlation scale".into(),
            best_residual: 0.0,
        });
    }
    let max_lag = n / 2;
    let acf: Vec<f64> = (0..=max_lag).map(|k| (0..n - k).map(|i| c[i] * c[i + k]).sum::<f64>() / var).collect();
    let threshold = (-1.0f64).exp();
    match acf.iter().position(|&a| a < threshold) {
        Some(lag) => Ok(CorrelationScale { scale: lag as f64 * step, lag, lower_bound: false, autocorrelation: acf }),
        None => {
            Ok(CorrelationScale { scale: max_lag as f64 * step, lag: max_lag, lower_bound: true, autocorrelation: acf })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floquet::{IslandKind, SplittingMethod};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(hbar: f64, delta: f64) -> SplittingSample {
        SplittingSample {
            hbar_eff: hbar,
            beta: 0.0,
            delta,
            island_kind: IslandKind::MomentumPair,
            method: SplittingMethod::Exact,
            n_points: 64,
            steps_per_period: 64,
            tags: [0.5, 0.5],
        }
    }

    fn half_cauchy(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (PI * rng.random::<f64>() / 2.0).tan()).collect()
    }

    fn to_samples(v: &[f64]) -> Vec<SplittingSample> {
        v.iter().enumerate().map(|(i, &d)| sample(0.1 + 1e-4 * i as f64, d)).collect()
    }

    #[test]
    fn constant_ensemble() {
        let s = to_samples(&[3e-4; 60]);
        let e = normalize_fluctuations(&s).unwrap();
        assert_eq!(e.delta_typ, 3e-4);
        assert!(e.normalized.iter().all(|&x| x == 1.0));
        // a point mass at 1 sits half a unit from the Cauchy CDF there
        let g = cauchy_gof(&e, DEFAULT_KS_THRESHOLD);
        assert!((g.ks - 0.5).abs() < 1e-12 && !g.pass);
        assert!(normalize_fluctuations(&s[..49]).is_err());
    }

    #[test]
    fn half_cauchy_draws_pass() {
        let v = half_cauchy(10_000, 3);
        let e = normalize_fluctuations(&to_samples(&v)).unwrap();
        assert!((median(&e.normalized) - 1.0).abs() < 1e-12);
        assert!((e.delta_typ - 1.0).abs() < 0.05);
        assert!(cauchy_gof(&e, DEFAULT_KS_THRESHOLD).ks < 0.02);
    }

    #[test]
    fn log_normal_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..10_000)
            .map(|_| {
                // Box-Muller with sigma 0.5
                let (u1, u2): (f64, f64) = (rng.random(), rng.random());
                (0.5 * (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()).exp()
            })
            .collect();
        let e = normalize_fluctuations(&to_samples(&v)).unwrap();
        assert!(cauchy_gof(&e, DEFAULT_KS_THRESHOLD).ks > 0.15);
    }

    #[test]
    fn detrending_removes_exponential_trend() {
        let v = half_cauchy(400, 11);
        let s: Vec<SplittingSample> = v
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let h = 1.0 / (3.3 + 6.7 * i as f64 / 399.0);
                sample(h, d * (-2.0 / h).exp())
            })
            .collect();
        let plain = normalize_fluctuations(&s).unwrap();
        let det = normalize_fluctuations_with(&s, TypicalValue::Detrended).unwrap();
        assert!(cauchy_gof(&det, 0.15).ks < cauchy_gof(&plain, 0.15).ks);
        assert!(cauchy_gof(&det, 0.15).pass);
        assert!((median(&det.normalized) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_exponential_action() {
        let s: Vec<SplittingSample> = (0..20)
            .map(|i| {
                let h = 0.1 + 0.01 * i as f64;
                sample(h, 0.7 * (-3.0 / h).exp())
            })
            .collect();
        let f = regular_action_fit(&s).unwrap();
        assert!((f.action - 3.0).abs() < 1e-6);
        assert!((f.prefactor - 0.7f64.ln()).abs() < 1e-6);
        assert!(f.warning.is_none());
    }

    #[test]
    fn scattered_data_warns() {
        let v = half_cauchy(60, 2);
        let s: Vec<SplittingSample> =
            v.iter().enumerate().map(|(i, &d)| sample(0.1 + 0.002 * i as f64, d * 1e-4)).collect();
        assert!(regular_action_fit(&s).unwrap().warning.is_some());
    }

    #[test]
    fn white_noise_scale_is_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let betas: Vec<f64> = (0..400).map(|i| -0.2 + 0.001 * i as f64).collect();
        let d: Vec<f64> = (0..400).map(|_| (3.0 * rng.random::<f64>()).exp()).collect();
        let c = beta_correlation_scale(&betas, &d).unwrap();
        assert_eq!(c.lag, 1);
        assert!((c.scale - 0.001).abs() < 1e-12 && !c.lower_bound);
    }

    #[test]
    fn smooth_curve_scale() {
        let betas: Vec<f64> = (0..200).map(|i| -0.1 + 0.001 * i as f64).collect();
        let d: Vec<f64> = betas.iter().map(|b| (5.0 * (b * 40.0).sin()).exp()).collect();
        let c = beta_correlation_scale(&betas, &d).unwrap();
        assert!(c.scale > 0.01, "{}", c.scale);
        assert!(beta_correlation_scale(&betas[..50], &d[..50]).is_err());
    }

    #[test]
    fn histogram_integrates_to_coverage() {
        let v = half_cauchy(5000, 1);
        let h = log_histogram(&v, 40);
        let mass: f64 = h.iter().map(|(lo, hi, d)| d * (hi - lo)).sum();
        assert!(mass > 0.99 && mass <= 1.0 + 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]
        #[test]
        fn ks_invariant_under_shuffle(seed in 0u64..1000) {
            let v = half_cauchy(200, seed);
            let mut w = v.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            for i in (1..w.len()).rev() {
                let j = rng.random_range(0..=i);
                w.swap(i, j);
            }
            prop_assert_eq!(ks_distance(&v, cauchy_cdf), ks_distance(&w, cauchy_cdf));
        }

        #[test]
        fn normalization_idempotent(seed in 0u64..1000) {
            let v = half_cauchy(400, seed);
            let e = normalize_fluctuations(&to_samples(&v)).unwrap();
            let again = normalize_fluctuations(&to_samples(&e.normalized)).unwrap();
            let tol = 1.0 / (v.len() as f64).sqrt();
            for (a, b) in e.normalized.iter().zip(&again.normalized) {
                prop_assert!((a - b).abs() <= tol * a.abs().max(1.0));
            }
        }

        #[test]
        fn action_fit_exact(s in 0.5f64..5.0, c in -5.0f64..0.0) {
            let pts: Vec<SplittingSample> = (0..15).map(|i| {
                let h = 0.08 + 0.015 * i as f64;
                sample(h, (c - s / h).exp())
            }).collect();
            let f = regular_action_fit(&pts).unwrap();
            prop_assert!((f.action - s).abs() < 1e-6);
        }
    }
}
