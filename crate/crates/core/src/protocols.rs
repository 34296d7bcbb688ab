//! Wave-packet protocols: momentum-space tunneling oscillations, accelerated
//! sweeps through the avoided crossing with splitting extraction, spatial
//! double-well oscillations and the phase-space rotation readout.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{IslandInfo, PhaseState};
use crate::error::{Error, Result};
use crate::floquet::{
    coherent_state, evolve_static, floquet_spectrum, isotropic_width, propagator_matrix, splitting, BetaSchedule,
    IslandKind, IslandPair, Propagator, SpatialGrid, SplittingMethod, SplittingSample, SplittingSettings, TagSettings,
    WaveFunction,
};
use crate::twolevel::{lz_fit, LzFit};
use crate::units::ModelParams;

/// Smallest power of two (at least 64) whose momentum grid reaches `|p| = 4`.
pub fn default_grid_points(hbar_eff: f64) -> usize {
    let need = (8.0 / hbar_eff).ceil() as usize;
    need.next_power_of_two().max(64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    /// Fixed grid size; chosen from `hbar_eff` when absent.
    pub n_points: Option<usize>,
    pub steps_per_period: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self { n_points: None, steps_per_period: 64 }
    }
}

impl GridSettings {
    pub fn resolve(&self, hbar_eff: f64) -> (usize, usize) {
        (self.n_points.unwrap_or_else(|| default_grid_points(hbar_eff)), self.steps_per_period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Sampling {
    /// Uniform random draws on `[lo, hi]`.
    Interval {
        lo: f64,
        hi: f64,
    },
    List {
        betas: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasimomentumEnsemble {
    pub sampling: Sampling,
    pub n_samples: usize,
    pub seed: u64,
}

impl QuasimomentumEnsemble {
    pub fn fixed(beta: f64) -> Self {
        Self::list(vec![beta])
    }

    pub fn list(betas: Vec<f64>) -> Self {
        let n = betas.len();
        Self { sampling: Sampling::List { betas }, n_samples: n, seed: 0 }
    }

    pub fn interval(lo: f64, hi: f64, n_samples: usize, seed: u64) -> Self {
        Self { sampling: Sampling::Interval { lo, hi }, n_samples, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Configuration("ensemble needs at least one member".into()));
        }
        let inside = |b: f64| (-0.5..0.5).contains(&b);
        match &self.sampling {
            Sampling::Interval { lo, hi } => {
                if !(inside(*lo) && inside(*hi) && lo <= hi) {
                    return Err(Error::ParameterDomain(format!("beta interval [{lo}, {hi}] must lie in [-1/2, 1/2)")));
                }
            }
            Sampling::List { betas } => {
                if betas.len() != self.n_samples || betas.iter().any(|&b| !inside(b)) {
                    return Err(Error::ParameterDomain("beta list must hold n_samples values in [-1/2, 1/2)".into()));
                }
            }
        }
        Ok(())
    }

    pub fn betas(&self) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match &self.sampling {
            Sampling::List { betas } => betas.clone(),
            Sampling::Interval { lo, hi } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                (0..self.n_samples).map(|_| if lo == hi { *lo } else { rng.random_range(*lo..*hi) }).collect()
            }
        })
    }
}

/// Coherent initial state; isotropic width when `width_x` is absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentSpec {
    pub center: PhaseState,
    pub width_x: Option<f64>,
}

impl CoherentSpec {
    pub fn at(center: PhaseState) -> Self {
        Self { center, width_x: None }
    }

    fn state(&self, beta: f64, hbar_eff: f64, grid: &SpatialGrid) -> Result<WaveFunction> {
        coherent_state(self.center, self.width_x.unwrap_or_else(|| isotropic_width(hbar_eff)), beta, hbar_eff, grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    Momentum,
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evolution {
    /// Split-step propagation period by period.
    Direct,
    /// Floquet eigen-expansion evaluated at the sample times.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceOptions {
    pub grid: GridSettings,
    pub evolution: Evolution,
    pub keep_members: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { grid: GridSettings::default(), evolution: Evolution::Spectral, keep_members: false }
    }
}

/// Stroboscopic expectation values, averaged over an ensemble of members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableTrace {
    pub observable: Observable,
    /// In periods of the modulation.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub members: Option<Vec<Vec<f64>>>,
    pub betas: Vec<f64>,
    /// Largest `|norm - 1|` seen over members and samples.
    pub norm_defect: f64,
    pub n_points: usize,
    pub steps_per_period: usize,
}

impl ObservableTrace {
    /// Half the peak-to-peak excursion.
    pub fn amplitude(&self) -> f64 {
        half_range(&self.values)
    }

    pub fn rescaled_times(&self, period: f64) -> Vec<f64> {
        self.times.iter().map(|t| t / period).collect()
    }
}

fn half_range(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    0.5 * (hi - lo)
}

fn observe_coefficients(
    c: &[Complex64],
    beta: f64,
    hbar: f64,
    obs: Observable,
    grid: &SpatialGrid,
) -> Result<(f64, f64)> {
    let n = c.len() as i64;
    let norm: f64 = c.iter().map(|a| a.norm_sqr()).sum();
    let value = match obs {
        Observable::Momentum => {
            c.iter().enumerate().map(|(i, a)| hbar * ((i as i64 - n / 2) as f64 + beta) * a.norm_sqr()).sum()
        }
        Observable::Position => WaveFunction::from_momentum(grid, c, beta)?.mean_x(),
    };
    Ok((value, norm))
}

fn observe(psi: &WaveFunction, hbar: f64, obs: Observable) -> (f64, f64) {
    let v = match obs {
        Observable::Momentum => psi.mean_p(hbar),
        Observable::Position => psi.mean_x(),
    };
    (v, psi.norm_squared())
}

/// One member at fixed quasimomentum, sampled every `stride` periods.
fn member_trace(
    params: &ModelParams,
    psi0: WaveFunction,
    samples: usize,
    stride: usize,
    obs: Observable,
    steps: usize,
    evolution: Evolution,
) -> Result<(Vec<f64>, f64)> {
    let hbar = params.hbar_eff;
    let beta = psi0.beta;
    let mut values = Vec::with_capacity(samples + 1);
    let mut defect: f64 = 0.0;
    match evolution {
        Evolution::Direct => {
            let mut prop = Propagator::new(params, &psi0.grid, steps)?;
            let mut psi = psi0;
            let schedule = BetaSchedule::Fixed(beta);
            for s in 0..=samples {
                if s > 0 {
                    prop.evolve(&mut psi, ((s - 1) * stride) as f64 * TAU, stride, &schedule);
                }
                let (v, norm) = observe(&psi, hbar, obs);
                values.push(v);
                defect = defect.max((norm - 1.0).abs());
            }
        }
        Evolution::Spectral => {
            let grid = psi0.grid.clone();
            let u = propagator_matrix(&params.with_beta(beta), &grid, steps, 1)?;
            let spec = floquet_spectrum(&u, params, &[], &TagSettings::default())?;
            let coeffs = spec.project(&psi0);
            let phases: Vec<f64> = spec.eigenvalues.iter().map(|l| l.arg()).collect();
            let mut c = DVector::<Complex64>::zeros(coeffs.len());
            for s in 0..=samples {
                let t = (s * stride) as f64;
                for k in 0..coeffs.len() {
                    c[k] = coeffs[k] * Complex64::from_polar(1.0, phases[k] * t);
                }
                let psi = &spec.states * &c;
                let (v, norm) = observe_coefficients(psi.as_slice(), beta, hbar, obs, &grid)?;
                values.push(v);
                defect = defect.max((norm - 1.0).abs());
            }
        }
    }
    Ok((values, defect))
}

fn ensemble_trace(
    params: &ModelParams,
    initial: &CoherentSpec,
    ensemble: &QuasimomentumEnsemble,
    samples: usize,
    stride: usize,
    obs: Observable,
    opts: &TraceOptions,
) -> Result<ObservableTrace> {
    params.validate()?;
    let betas = ensemble.betas()?;
    let (n, steps) = opts.grid.resolve(params.hbar_eff);
    let grid = SpatialGrid::new(n)?;
    let members = betas
        .par_iter()
        .map(|&b| {
            let p = params.with_beta(b);
            let psi = initial.state(b, p.hbar_eff, &grid)?;
            member_trace(&p, psi, samples, stride, obs, steps, opts.evolution)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = members.len() as f64;
    let values = (0..=samples).map(|s| members.iter().map(|(v, _)| v[s]).sum::<f64>() / m).collect();
    let norm_defect = members.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    Ok(ObservableTrace {
        observable: obs,
        times: (0..=samples).map(|s| (s * stride) as f64).collect(),
        values,
        members: opts.keep_members.then(|| members.into_iter().map(|(v, _)| v).collect()),
        betas,
        norm_defect,
        n_points: n,
        steps_per_period: steps,
    })
}

/// Stroboscopic `<p>` of a coherent packet launched on the upper momentum
/// island, for each ensemble member at fixed quasimomentum.
pub fn route1_oscillations(
    params: &ModelParams,
    initial: &CoherentSpec,
    ensemble: &QuasimomentumEnsemble,
    n_periods: usize,
    opts: &TraceOptions,
) -> Result<ObservableTrace> {
    if !(initial.center.p > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "initial packet must sit on the upper island, got p = {}",
            initial.center.p
        )));
    }
    if n_periods == 0 {
        return Err(Error::Configuration("n_periods must be >= 1".into()));
    }
    ensemble_trace(params, initial, ensemble, n_periods, 1, Observable::Momentum, opts)
}

/// Oscillation period of a trace from the spacing of alternating crossings
/// of `mean +- hysteresis * amplitude` (Schmitt trigger).
pub fn oscillation_period(times: &[f64], values: &[f64], hysteresis: f64) -> Result<f64> {
    if times.len() != values.len() || times.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: times.len().min(values.len()) });
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mid = 0.5 * (lo + hi);
    let band = hysteresis * 0.5 * (hi - lo);
    if !(band > 0.0) {
        return Err(Error::UndefinedPeriod);
    }
    let mut state = 0i8;
    let mut crossings = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let s = if v > mid + band {
            1
        } else if v < mid - band {
            -1
        } else {
            continue;
        };
        if state != 0 && s != state {
            // interpolate the midline crossing between the last opposite sample and this one
            let mut k = i;
            while k > 0 && (values[k - 1] - mid) * (v - mid) > 0.0 {
                k -= 1;
            }
            let t = if k > 0 {
                let (a, b) = (values[k - 1] - mid, values[k] - mid);
                times[k - 1] + (times[k] - times[k - 1]) * a / (a - b)
            } else {
                times[i]
            };
            crossings.push(t);
        }
        state = s;
    }
    if crossings.len() < 2 {
        return Err(Error::UndefinedPeriod);
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Ok(2.0 * span / (crossings.len() - 1) as f64)
}

/// Named `n_acc` schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NAccSchedule {
    Geometric { min: f64, max: f64, count: usize },
    Explicit { values: Vec<usize> },
}

impl Default for NAccSchedule {
    fn default() -> Self {
        NAccSchedule::Geometric { min: 100.0, max: 6500.0, count: 8 }
    }
}

impl NAccSchedule {
    pub fn five_point() -> Self {
        NAccSchedule::Explicit { values: vec![100, 280, 665, 1547, 5649] }
    }

    pub fn seven_point() -> Self {
        NAccSchedule::Explicit { values: vec![100, 211, 404, 701, 1216, 2330, 6528] }
    }

    pub fn values(&self) -> Result<Vec<usize>> {
        let v: Vec<usize> = match self {
            NAccSchedule::Geometric { min, max, count } => {
                if !(*min >= 1.0 && max > min && *count >= 2) {
                    return Err(Error::Configuration(format!("bad geometric n_acc schedule {min}..{max} x{count}")));
                }
                let r = (max / min).powf(1.0 / (*count - 1) as f64);
                (0..*count).map(|i| (min * r.powi(i as i32)).round() as usize).collect()
            }
            NAccSchedule::Explicit { values } => values.clone(),
        };
        if v.contains(&0) || v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Configuration("n_acc schedule must be positive and increasing".into()));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSettings {
    pub beta0: f64,
    pub ensemble: QuasimomentumEnsemble,
    pub grid: GridSettings,
    /// Minimal island tag of the initial band state.
    pub tag_threshold: f64,
    /// Projection weights below this are flagged.
    pub min_projection_weight: f64,
    pub keep_members: bool,
}

impl Default for DriftSettings {
    fn default() -> Self {
        Self {
            beta0: 0.05,
            ensemble: QuasimomentumEnsemble::interval(0.04, 0.06, 20, 1),
            grid: GridSettings::default(),
            tag_threshold: 0.2,
            min_projection_weight: 0.9,
            keep_members: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRun {
    pub n_acc: usize,
    pub trace: ObservableTrace,
    /// Mean quasimomentum of the members at each sample.
    pub beta_t: Vec<f64>,
    pub final_momentum: f64,
    /// Period at which the mean member reaches `beta = 0`.
    pub crossing_time: f64,
    /// `|<coherent|band state>|^2` per member.
    pub projection_weights: Vec<f64>,
    pub low_projection_weight: bool,
}

struct BandStart {
    psi: WaveFunction,
    weight: f64,
}

fn band_start(
    params: &ModelParams,
    pair: &IslandPair,
    grid: &SpatialGrid,
    steps: usize,
    threshold: f64,
) -> Result<BandStart> {
    let u = propagator_matrix(params, grid, steps, 1)?;
    let spec = floquet_spectrum(&u, params, &pair.islands(), &TagSettings::default())?;
    let mut order: Vec<usize> = (0..spec.len()).collect();
    order.sort_by(|&a, &b| spec.island_tags[b][0].partial_cmp(&spec.island_tags[a][0]).unwrap());
    let (best, second) = (spec.island_tags[order[0]][0], spec.island_tags[order[1]][0]);
    if best < threshold || second > 0.9 * best {
        return Err(Error::Initialization(format!(
            "no unambiguous island band at beta = {}: tags {best:.3}, {second:.3}",
            params.beta
        )));
    }
    Ok(BandStart { psi: spec.state(order[0], grid)?, weight: best })
}

/// Drifts each member from its island band state at `beta_ini` through
/// `beta = 0`, with `beta(t) = beta_ini - beta0 t / (pi n_acc)`, for
/// `n_acc` periods (a total change of `2 beta0`).
pub fn route2_drift_run(
    params: &ModelParams,
    pair: &IslandPair,
    settings: &DriftSettings,
    n_acc: usize,
) -> Result<DriftRun> {
    params.validate()?;
    if pair.kind != IslandKind::MomentumPair {
        return Err(Error::Configuration("drift runs need the momentum island pair".into()));
    }
    if n_acc == 0 || !(settings.beta0 > 0.0 && settings.beta0 < 0.25) {
        return Err(Error::Configuration(format!(
            "need n_acc >= 1 and 0 < beta0 < 1/4, got {n_acc}, {}",
            settings.beta0
        )));
    }
    let betas = settings.ensemble.betas()?;
    let hbar = params.hbar_eff;
    let (n, steps) = settings.grid.resolve(hbar);
    let grid = SpatialGrid::new(n)?;
    let rate = settings.beta0 / (PI * n_acc as f64);
    let members = betas
        .par_iter()
        .map(|&b| {
            let p = params.with_beta(b);
            let start = band_start(&p, pair, &grid, steps, settings.tag_threshold)?;
            let mut prop = Propagator::new(&p, &grid, steps)?;
            let mut psi = start.psi;
            let schedule = BetaSchedule::Linear { initial: b, rate };
            let mut values = Vec::with_capacity(n_acc + 1);
            let mut defect: f64 = 0.0;
            prop.evolve_observed(&mut psi, 0.0, n_acc, &schedule, |_, s| {
                values.push(s.mean_p(hbar));
                defect = defect.max((s.norm_squared() - 1.0).abs());
            });
            Ok((values, defect, start.weight))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = members.len() as f64;
    let values: Vec<f64> = (0..=n_acc).map(|s| members.iter().map(|x| x.0[s]).sum::<f64>() / m).collect();
    let mean_beta = betas.iter().sum::<f64>() / m;
    let weights: Vec<f64> = members.iter().map(|x| x.2).collect();
    let trace = ObservableTrace {
        observable: Observable::Momentum,
        times: (0..=n_acc).map(|s| s as f64).collect(),
        values: values.clone(),
        members: settings.keep_members.then(|| members.iter().map(|x| x.0.clone()).collect()),
        betas: betas.clone(),
        norm_defect: members.iter().map(|x| x.1).fold(0.0, f64::max),
        n_points: n,
        steps_per_period: steps,
    };
    Ok(DriftRun {
        n_acc,
        beta_t: (0..=n_acc).map(|s| mean_beta - 2.0 * settings.beta0 * s as f64 / n_acc as f64).collect(),
        final_momentum: *values.last().unwrap(),
        crossing_time: n_acc as f64 * mean_beta / (2.0 * settings.beta0),
        low_projection_weight: weights.iter().any(|&w| w < settings.min_projection_weight),
        projection_weights: weights,
        trace,
    })
}

/// Centered moving average; the window shrinks symmetrically at the ends.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let h = window / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let w = h.min(i).min(n - 1 - i);
            (prefix[i + w + 1] - prefix[i - w]) / (2 * w + 1) as f64
        })
        .collect()
}

/// Least-squares `a + b u + c u^2` with `u = (t - t0) / scale`.
fn quadratic_fit(times: &[f64], values: &[f64], t0: f64, scale: f64) -> Option<[f64; 3]> {
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    let mut r = nalgebra::Vector3::<f64>::zeros();
    for (&t, &y) in times.iter().zip(values) {
        let u = (t - t0) / scale;
        let basis = [1.0, u, u * u];
        for i in 0..3 {
            r[i] += basis[i] * y;
            for k in 0..3 {
                m[(i, k)] += basis[i] * basis[k];
            }
        }
    }
    let s = m.lu().solve(&r)?;
    Some([s[0], s[1], s[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriteriaThresholds {
    /// Final momentum must reach `-kappa1 p*`.
    pub kappa1: f64,
    /// Share of the total change that happens near the crossing.
    pub kappa2: f64,
    /// Total change must exceed `kappa4 p*`.
    pub kappa4: f64,
    /// Moving-average window in stroboscopic samples.
    pub smoothing_window: usize,
    /// Half-width of the crossing window in quasimomentum.
    pub beta_window: f64,
}

impl Default for CriteriaThresholds {
    fn default() -> Self {
        Self { kappa1: 0.5, kappa2: 0.5, kappa4: 0.2, smoothing_window: 21, beta_window: 0.015 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub final_value_ok: bool,
    pub crossing_ok: bool,
    pub curvature_ok: bool,
    pub amplitude_ok: bool,
    pub accepted: bool,
    pub thresholds: CriteriaThresholds,
    pub final_value: f64,
    pub crossing_fraction: f64,
    /// Curvature of a local quadratic fit to the smoothed `d<p>/dt` at the
    /// crossing, per period cubed.
    pub curvature: f64,
    pub total_change: f64,
}

/// The four acceptance tests on a slow drift run.
pub fn evaluate_criteria(run: &DriftRun, beta0: f64, p_star: f64, th: &CriteriaThresholds) -> CriteriaReport {
    let v = &run.trace.values;
    let t = &run.trace.times;
    let smooth = moving_average(v, th.smoothing_window.max(1));
    let last = smooth.len() - 1;
    let total_change = smooth[last] - smooth[0];
    let half = (th.beta_window * run.n_acc as f64 / (2.0 * beta0)).max(2.0);
    let tc = run.crossing_time;
    let idx = |x: f64| (x.round().max(0.0) as usize).min(last);
    let (lo, hi) = (idx(tc - half), idx(tc + half));
    let crossing_fraction =
        if total_change != 0.0 { (smooth[hi] - smooth[lo]).abs() / total_change.abs() } else { 0.0 };
    // quadratic fit of the smoothed slope: a dip of d<p>/dt centered on the crossing
    let slope: Vec<f64> = (lo..=hi)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(last));
            (smooth[b] - smooth[a]) / (t[b] - t[a])
        })
        .collect();
    let curvature = if hi >= lo + 3 {
        quadratic_fit(&t[lo..=hi], &slope, tc, half).map_or(f64::NAN, |c| 2.0 * c[2] / (half * half))
    } else {
        f64::NAN
    };
    let final_value = *v.last().unwrap();
    let final_value_ok = final_value <= -th.kappa1 * p_star;
    let crossing_ok = crossing_fraction >= th.kappa2;
    let curvature_ok = curvature > 0.0;
    let amplitude_ok = total_change.abs() >= th.kappa4 * p_star;
    CriteriaReport {
        final_value_ok,
        crossing_ok,
        curvature_ok,
        amplitude_ok,
        accepted: final_value_ok && crossing_ok && curvature_ok && amplitude_ok,
        thresholds: *th,
        final_value,
        crossing_fraction,
        curvature,
        total_change,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route2Extraction {
    pub sample: Option<SplittingSample>,
    pub fit: Option<LzFit>,
    pub fit_error: Option<String>,
    /// `(n_acc, <p>_final)` per schedule entry.
    pub finals: Vec<(f64, f64)>,
    pub criteria: CriteriaReport,
    pub low_projection_weight: bool,
    /// The slowest run, on which the criteria are evaluated.
    pub slowest: DriftRun,
}

/// Landau-Zener splitting from final momenta over an `n_acc` schedule,
/// with the acceptance criteria evaluated on the slowest sweep.
pub fn route2_extract(
    params: &ModelParams,
    pair: &IslandPair,
    settings: &DriftSettings,
    schedule: &NAccSchedule,
    thresholds: &CriteriaThresholds,
) -> Result<Route2Extraction> {
    let n_accs = schedule.values()?;
    let mut runs = Vec::with_capacity(n_accs.len());
    for &n in &n_accs {
        runs.push(route2_drift_run(params, pair, settings, n)?);
    }
    let finals: Vec<(f64, f64)> = runs.iter().map(|r| (r.n_acc as f64, r.final_momentum)).collect();
    let low = runs.iter().any(|r| r.low_projection_weight);
    let slowest = runs.pop().unwrap();
    let p_star = pair.first.center.p.abs();
    let criteria = evaluate_criteria(&slowest, settings.beta0, p_star, thresholds);
    let (fit, fit_error) = match lz_fit(&finals, settings.beta0, params.hbar_eff) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let weight = slowest.projection_weights.iter().sum::<f64>() / slowest.projection_weights.len() as f64;
    let sample = fit.map(|f| SplittingSample {
        hbar_eff: params.hbar_eff,
        beta: 0.0,
        delta: f.extracted_delta,
        island_kind: IslandKind::MomentumPair,
        method: SplittingMethod::Lz,
        n_points: slowest.trace.n_points,
        steps_per_period: slowest.trace.steps_per_period,
        tags: [weight, weight],
    });
    Ok(Route2Extraction { sample, fit, fit_error, finals, criteria, low_projection_weight: low, slowest })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Route3Options {
    pub trace: TraceOptions,
    /// Compute the tunneling period from the exact splitting at `beta = 0`.
    pub rescale: bool,
}

impl Default for Route3Options {
    fn default() -> Self {
        Self { trace: TraceOptions::default(), rescale: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route3Trace {
    /// `<x>` sampled every two periods.
    pub trace: ObservableTrace,
    /// Splitting of the spatial doublet at `beta = 0`.
    pub delta: Option<f64>,
    /// `hbar_eff / delta`, in periods.
    pub tunneling_period: Option<f64>,
}

impl Route3Trace {
    pub fn rescaled_times(&self) -> Option<Vec<f64>> {
        self.tunneling_period.map(|t| self.trace.rescaled_times(t))
    }
}

fn spatial_pair_check(pair: &IslandPair) -> Result<()> {
    if pair.kind != IslandKind::SpatialPair || pair.first.center.x.abs() < 1e-3 {
        return Err(Error::Configuration(
            "spatial oscillations need a bifurcated period-2 island pair away from x = 0".into(),
        ));
    }
    Ok(())
}

/// `<x>` under the two-period map for a packet started in one spatial well.
pub fn route3_oscillations(
    params: &ModelParams,
    pair: &IslandPair,
    initial: &CoherentSpec,
    ensemble: &QuasimomentumEnsemble,
    n_double_periods: usize,
    opts: &Route3Options,
) -> Result<Route3Trace> {
    spatial_pair_check(pair)?;
    if n_double_periods == 0 {
        return Err(Error::Configuration("n_double_periods must be >= 1".into()));
    }
    let trace = ensemble_trace(params, initial, ensemble, n_double_periods, 2, Observable::Position, &opts.trace)?;
    let (delta, tunneling_period) = if opts.rescale {
        let s = SplittingSettings {
            n_points: trace.n_points,
            steps_per_period: trace.steps_per_period,
            ..Default::default()
        };
        let d = splitting(&params.with_beta(0.0), pair, &s)?.delta;
        (Some(d), Some(params.hbar_eff / d))
    } else {
        (None, None)
    };
    Ok(Route3Trace { trace, delta, tunneling_period })
}

/// Center of the first return to the initial well: the midpoint between
/// the zero crossings entering and leaving it after the trace has visited
/// the opposite well. Wells are entered past `+- 0.2 |v0|`.
pub fn first_return(times: &[f64], values: &[f64]) -> Option<f64> {
    first_return_with(times, values, 0.2, 1)
}

/// [`first_return`] with a hysteresis fraction of `|v0|` and a moving
/// average of `window` samples applied first (the first sample is kept).
pub fn first_return_with(times: &[f64], values: &[f64], hysteresis: f64, window: usize) -> Option<f64> {
    let v0 = *values.first()?;
    if v0 == 0.0 || times.len() != values.len() {
        return None;
    }
    let s = v0.signum();
    let level = hysteresis * v0.abs();
    let u: Vec<f64> = moving_average(values, window.max(1)).iter().map(|v| s * v).collect();
    let zero = |k: usize| times[k - 1] + (times[k] - times[k - 1]) * u[k - 1] / (u[k - 1] - u[k]);
    let dip = u.iter().position(|&v| v < -level)?;
    let up = dip + u[dip..].iter().position(|&v| v > level)?;
    let down = up + u[up..].iter().position(|&v| v < -level)?;
    let enter = (dip + 1..=up).rev().find(|&k| u[k - 1] <= 0.0 && u[k] > 0.0)?;
    let leave = (up + 1..=down).find(|&k| u[k - 1] >= 0.0 && u[k] < 0.0)?;
    Some(0.5 * (zero(enter) + zero(leave)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanVariable {
    HbarEff,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub value: f64,
    pub sample: Option<SplittingSample>,
    pub error: Option<String>,
}

/// Exact doublet splittings along a sweep; failed points stay as gaps.
pub fn splitting_scan(
    params: &ModelParams,
    pair: &IslandPair,
    variable: ScanVariable,
    values: &[f64],
    grid: &GridSettings,
    settings: &SplittingSettings,
) -> Result<Vec<ScanPoint>> {
    let points: Vec<ModelParams> = values
        .iter()
        .map(|&v| match variable {
            ScanVariable::HbarEff => params.with_hbar(v),
            ScanVariable::Beta => params.with_beta(v),
        })
        .collect();
    for p in &points {
        p.validate()?;
        if !(p.hbar_eff > 0.0) {
            return Err(Error::ParameterDomain("scan needs hbar_eff > 0".into()));
        }
    }
    Ok(points
        .par_iter()
        .zip(values)
        .map(|(p, &value)| {
            let (n, steps) = grid.resolve(p.hbar_eff);
            let s = SplittingSettings { n_points: n, steps_per_period: steps, ..*settings };
            match splitting(p, pair, &s) {
                Ok(sample) => ScanPoint { value, sample: Some(sample), error: None },
                Err(e) => ScanPoint { value, sample: None, error: Some(e.to_string()) },
            }
        })
        .collect())
}

/// Splittings of the spatial doublet of the two-period map along a sweep.
pub fn route3_splitting_scan(
    params: &ModelParams,
    pair: &IslandPair,
    variable: ScanVariable,
    values: &[f64],
    grid: &GridSettings,
    settings: &SplittingSettings,
) -> Result<Vec<ScanPoint>> {
    spatial_pair_check(pair)?;
    splitting_scan(params, pair, variable, values, grid, settings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationScan {
    pub phase_shifts: Vec<f64>,
    pub zero_velocity_population: Vec<f64>,
}

/// Shift the lattice by each `phi_m`, let the static lattice rotate phase
/// space for a quarter of the harmonic period `2 pi / sqrt(gamma)`, and
/// read the population of the zero-velocity class `|p| < hbar_eff / 2`.
pub fn phase_rotation_measurement(
    psi: &WaveFunction,
    params: &ModelParams,
    phase_shifts: &[f64],
    steps: usize,
) -> Result<RotationScan> {
    if !(params.gamma > 0.0 && params.hbar_eff > 0.0) {
        return Err(Error::ParameterDomain("rotation readout needs gamma > 0 and hbar_eff > 0".into()));
    }
    if phase_shifts.iter().any(|p| !(0.0..TAU).contains(p)) {
        return Err(Error::ParameterDomain("phase shifts must lie in [0, 2 pi)".into()));
    }
    let duration = 0.5 * PI / params.gamma.sqrt();
    let c0 = psi.momentum();
    let n = c0.len() as i64;
    let beta = psi.beta;
    let j0 = (-beta).round() as i64;
    let pops = phase_shifts
        .par_iter()
        .map(|&phi| {
            let c: Vec<Complex64> = c0
                .iter()
                .enumerate()
                .map(|(i, a)| a * Complex64::from_polar(1.0, ((i as i64 - n / 2) as f64 + beta) * phi))
                .collect();
            let mut w = WaveFunction::from_momentum(&psi.grid, &c, beta)?;
            evolve_static(&mut w, params.gamma, params.hbar_eff, duration, steps)?;
            let p = w.momentum_populations();
            let total: f64 = p.iter().sum();
            Ok(p[(j0 + n / 2) as usize] / total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RotationScan { phase_shifts: phase_shifts.to_vec(), zero_velocity_population: pops })
}

/// Upper momentum-island pair from the classical orbit search.
pub fn momentum_pair(params: &ModelParams) -> Result<IslandPair> {
    let isl = crate::classical::find_periodic_orbit(params, 1, crate::classical::SearchAxis::Momentum, (0.5, 2.5))?;
    Ok(IslandPair::from_island(IslandKind::MomentumPair, isl))
}

/// Spatial period-2 island pair from the classical orbit search.
pub fn spatial_pair(params: &ModelParams) -> Result<IslandPair> {
    let isl = crate::classical::find_periodic_orbit(params, 2, crate::classical::SearchAxis::Position, (0.0, 2.5))?;
    // without the island pair (below the bifurcation, or where the origin is
    // stable again) the search lands on the central orbit
    if isl.center.x.abs() < 1e-4 {
        return Err(Error::Configuration(format!(
            "no spatial island pair at gamma = {}, eps = {}: only the central period-2 orbit was found",
            params.gamma, params.epsilon
        )));
    }
    let isl = IslandInfo { center: PhaseState::new(isl.center.x.abs(), isl.center.p), ..isl };
    Ok(IslandPair::from_island(IslandKind::SpatialPair, isl))
}
