//! One function per subcommand.

use std::f64::consts::TAU;
use std::path::PathBuf;

use chaotun::classical::{
    bifurcation_diagram, island_area_monte_carlo, island_boundary, lyapunov_chart, poincare_sos_with, AreaSettings,
    BoxGrid, LyapunovSettings, PhaseState, DEFAULT_STEPS_PER_PERIOD,
};
use chaotun::floquet::{
    band_diagram, coherent_state, isotropic_width, splitting, BetaSchedule, IslandKind, IslandPair, Propagator,
    SpatialGrid, SplittingMethod, SplittingSample, SplittingSettings, TagSettings,
};
use chaotun::protocols::{
    first_return_with, momentum_pair, oscillation_period, phase_rotation_measurement, route1_oscillations,
    route2_extract, route3_oscillations, spatial_pair, CoherentSpec, CriteriaThresholds, DriftSettings, Evolution,
    GridSettings, NAccSchedule, QuasimomentumEnsemble, Route3Options, TraceOptions,
};
use chaotun::stats::{
    beta_correlation_scale, cauchy_gof, normalize_fluctuations_with, regular_action_fit, TypicalValue,
    DEFAULT_KS_THRESHOLD,
};
use chaotun::units::ModelParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{RunConfig, SweepVariable, Task};
use crate::output::{fmt12, fmt_opt, Failure, OutputDir, Table};
use crate::CliError;

pub struct TaskOutcome {
    pub summary: serde_json::Value,
    pub failures: Vec<Failure>,
    /// Points attempted, sweep or single.
    pub total: usize,
}

impl TaskOutcome {
    fn done(summary: serde_json::Value) -> Self {
        Self { summary, failures: Vec::new(), total: 1 }
    }
}

pub fn run_task(task: Task, cfg: &RunConfig, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let params = cfg.model.params()?;
    match task {
        Task::Sos => sos(cfg, &params, out),
        Task::Lyap => lyap(cfg, &params, out),
        Task::Islands => islands(cfg, &params, out),
        Task::Bifurcation => bifurcation(cfg, &params, out),
        Task::Bands => bands(cfg, &params, out),
        Task::Splitting => splittings(cfg, &params, out),
        Task::Route1 => route1(cfg, &params, out),
        Task::Route2 => route2(cfg, &params, out),
        Task::Route3 => route3(cfg, &params, out),
        Task::Rotation => rotation(cfg, &params, out),
        Task::Stats => stats(cfg, &params, out),
    }
}

fn classical_steps(cfg: &RunConfig) -> usize {
    cfg.grid.steps_per_period.unwrap_or(DEFAULT_STEPS_PER_PERIOD)
}

/// Exact-spectrum grid: 256 points and steps unless configured.
fn exact_settings(cfg: &RunConfig) -> SplittingSettings {
    SplittingSettings {
        n_points: cfg.grid.n_points.unwrap_or(256),
        steps_per_period: cfg.grid.steps_per_period.unwrap_or(256),
        ..Default::default()
    }
}

/// Trajectory grid: sized from `hbar_eff` unless configured.
fn trace_grid(cfg: &RunConfig) -> GridSettings {
    let d = GridSettings::default();
    GridSettings {
        n_points: cfg.grid.n_points,
        steps_per_period: cfg.grid.steps_per_period.unwrap_or(d.steps_per_period),
    }
}

fn pair_for(kind: IslandKind, params: &ModelParams) -> Result<IslandPair, CliError> {
    Ok(match kind {
        IslandKind::MomentumPair => momentum_pair(params)?,
        IslandKind::SpatialPair => spatial_pair(params)?,
    })
}

fn sweep_values(cfg: &RunConfig, params: &ModelParams) -> Result<Vec<(f64, ModelParams)>, CliError> {
    match &cfg.sweep {
        Some(s) => Ok(s.values()?.into_iter().map(|v| (v, s.apply(params, v))).collect()),
        None => Ok(vec![(f64::NAN, *params)]),
    }
}

/// Without a sweep the single point's error is the run's error.
fn single_error<T>(cfg: &RunConfig, results: &mut Vec<Result<T, CliError>>) -> Result<(), CliError> {
    if cfg.sweep.is_none() && results.len() == 1 && results[0].is_err() {
        return Err(results.pop().unwrap().err().unwrap());
    }
    Ok(())
}

fn partial(total: usize, failures: Vec<Failure>, summary: serde_json::Value) -> Result<TaskOutcome, CliError> {
    if failures.len() == total && total > 0 {
        return Err(CliError::Partial { failed: total, total });
    }
    Ok(TaskOutcome { summary, failures, total })
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct SosOptions {
    /// Explicit seeds `[x, p]`; otherwise `n_seeds` launches on `x = 0`.
    seeds: Option<Vec<[f64; 2]>>,
    n_seeds: usize,
    p_range: [f64; 2],
    n_periods: usize,
}

impl Default for SosOptions {
    fn default() -> Self {
        Self { seeds: None, n_seeds: 40, p_range: [-2.0, 2.0], n_periods: 500 }
    }
}

fn sos(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: SosOptions = cfg.task_options()?;
    let seeds: Vec<PhaseState> = match &o.seeds {
        Some(s) => s.iter().map(|&[x, p]| PhaseState::new(x, p)).collect(),
        None => {
            if o.n_seeds == 0 {
                return Err(CliError::Validation(vec!["options.n_seeds must be >= 1".into()]));
            }
            let [a, b] = o.p_range;
            (0..o.n_seeds).map(|i| PhaseState::new(0.0, a + (b - a) * (i as f64 + 0.5) / o.n_seeds as f64)).collect()
        }
    };
    let clouds = poincare_sos_with(params, &seeds, o.n_periods, classical_steps(cfg))?;
    let mut t = Table::new(&["seed_id", "t", "x", "p"])?;
    for (k, cloud) in clouds.iter().enumerate() {
        for (n, s) in cloud.iter().enumerate() {
            t.row([k.to_string(), n.to_string(), fmt12(s.x), fmt12(s.p)])?;
        }
    }
    out.table("sos.csv", t)?;
    Ok(TaskOutcome::done(json!({ "seeds": seeds.len(), "n_periods": o.n_periods })))
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct LyapOptions {
    boxes: BoxGrid,
    horizon: usize,
    settings: LyapunovSettings,
}

impl Default for LyapOptions {
    fn default() -> Self {
        Self { boxes: BoxGrid::default(), horizon: 200, settings: LyapunovSettings::default() }
    }
}

fn lyap(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: LyapOptions = cfg.task_options()?;
    let chart = lyapunov_chart(params, &o.boxes, o.horizon, &o.settings)?;
    let mut t = Table::new(&["box_i", "box_j", "lambda"])?;
    for i in 0..o.boxes.nx {
        for j in 0..o.boxes.np {
            t.row([i.to_string(), j.to_string(), fmt12(chart.exponent(i, j))])?;
        }
    }
    out.table("lyap.csv", t)?;
    Ok(TaskOutcome::done(json!({ "chaotic_fraction": chart.chaotic_fraction, "threshold": chart.threshold })))
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct IslandsOptions {
    kind: IslandKind,
    area: AreaSettings,
    /// Monte-Carlo cross-check sample count, 0 to skip.
    monte_carlo_samples: usize,
}

impl Default for IslandsOptions {
    fn default() -> Self {
        Self { kind: IslandKind::MomentumPair, area: AreaSettings::default(), monte_carlo_samples: 0 }
    }
}

fn islands(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: IslandsOptions = cfg.task_options()?;
    let pair = pair_for(o.kind, params)?;
    let b = island_boundary(params, &pair.first, &o.area)?;
    let mc = if o.monte_carlo_samples > 0 {
        Some(island_area_monte_carlo(params, &pair.first, &o.area, o.monte_carlo_samples, cfg.seed)?)
    } else {
        None
    };
    let mut t = Table::new(&["island", "x", "p", "map_period", "trace", "area", "area_mc"])?;
    for (k, isl) in pair.islands().iter().enumerate() {
        t.row([
            k.to_string(),
            fmt12(isl.center.x),
            fmt12(isl.center.p),
            isl.map_period.to_string(),
            fmt12(isl.trace),
            fmt12(b.area),
            fmt_opt(mc),
        ])?;
    }
    out.table("islands.csv", t)?;
    let mut bt = Table::new(&["angle", "radius"])?;
    for (a, r) in b.angles.iter().zip(&b.radii) {
        bt.numbers(&[*a, *r])?;
    }
    out.table("island_boundary.csv", bt)?;
    Ok(TaskOutcome::done(json!({
        "kind": o.kind.as_str(),
        "center": [pair.first.center.x, pair.first.center.p],
        "area": b.area,
        "area_monte_carlo": mc,
        "failed_rays": b.failed,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct BifurcationOptions {
    gamma_min: f64,
    gamma_max: f64,
    count: usize,
}

impl Default for BifurcationOptions {
    fn default() -> Self {
        Self { gamma_min: 0.2, gamma_max: 0.3, count: 51 }
    }
}

fn bifurcation(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: BifurcationOptions = cfg.task_options()?;
    if o.count < 2 || o.gamma_max.partial_cmp(&o.gamma_min) != Some(std::cmp::Ordering::Greater) {
        return Err(CliError::Validation(vec!["options need count >= 2 and gamma_max > gamma_min".into()]));
    }
    let gammas: Vec<f64> =
        (0..o.count).map(|i| o.gamma_min + (o.gamma_max - o.gamma_min) * i as f64 / (o.count - 1) as f64).collect();
    let curve = bifurcation_diagram(params.epsilon, &gammas)?;
    let mut t = Table::new(&["gamma", "x_star"])?;
    for (g, x) in curve.gamma_values.iter().zip(&curve.x_star_values) {
        t.numbers(&[*g, *x])?;
    }
    out.table("bifurcation.csv", t)?;
    Ok(TaskOutcome::done(json!({ "epsilon": params.epsilon, "gamma_b": curve.gamma_b })))
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct BandsOptions {
    kind: IslandKind,
    beta_min: f64,
    beta_max: f64,
    count: usize,
    tags: TagSettings,
}

impl Default for BandsOptions {
    fn default() -> Self {
        Self { kind: IslandKind::MomentumPair, beta_min: -0.1, beta_max: 0.1, count: 41, tags: TagSettings::default() }
    }
}

fn bands(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: BandsOptions = cfg.task_options()?;
    if o.count == 0 {
        return Err(CliError::Validation(vec!["options.count must be >= 1".into()]));
    }
    let betas: Vec<f64> = if o.count == 1 {
        vec![o.beta_min]
    } else {
        (0..o.count).map(|i| o.beta_min + (o.beta_max - o.beta_min) * i as f64 / (o.count - 1) as f64).collect()
    };
    let pair = pair_for(o.kind, &params.with_hbar(1.0))?;
    let s = exact_settings(cfg);
    let d =
        band_diagram(params, &betas, &pair.islands(), s.n_points, s.steps_per_period, o.kind.map_period(), &o.tags)?;
    let mut t = Table::new(&["beta", "band_index", "E", "tag_upper", "tag_lower", "parity"])?;
    for (b, beta) in d.betas.iter().enumerate() {
        for k in 0..d.energies[b].len() {
            let par = d.parity[b].as_ref().map(|p| fmt12(p[k])).unwrap_or_default();
            t.row([
                fmt12(*beta),
                k.to_string(),
                fmt12(d.energies[b][k]),
                fmt12(d.tags[b][k][0]),
                fmt12(d.tags[b][k][1]),
                par,
            ])?;
        }
    }
    out.table("bands.csv", t)?;
    Ok(TaskOutcome::done(json!({ "zone": d.zone, "discontinuities": d.discontinuities.len(), "n_points": s.n_points })))
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct SplittingOptions {
    kind: IslandKind,
    resolution_guard: bool,
    tag_threshold: f64,
}

impl Default for SplittingOptions {
    fn default() -> Self {
        Self { kind: IslandKind::MomentumPair, resolution_guard: true, tag_threshold: 0.2 }
    }
}

/// Exact splittings along the sweep; failures are returned separately.
type SweepResults = (Vec<(usize, f64, SplittingSample)>, Vec<Failure>);

fn splitting_sweep(cfg: &RunConfig, params: &ModelParams, o: &SplittingOptions) -> Result<SweepResults, CliError> {
    let points = sweep_values(cfg, params)?;
    // islands depend only on the classical parameters
    let fixed_classics = !matches!(cfg.sweep.map(|s| s.variable), Some(SweepVariable::Gamma | SweepVariable::Epsilon));
    let shared = if fixed_classics { Some(pair_for(o.kind, &params.with_hbar(1.0))?) } else { None };
    let settings = SplittingSettings {
        resolution_guard: o.resolution_guard,
        tag_threshold: o.tag_threshold,
        ..exact_settings(cfg)
    };
    let mut results: Vec<Result<SplittingSample, CliError>> = points
        .par_iter()
        .map(|(_, p)| match shared {
            Some(pair) => splitting(p, &pair, &settings).map_err(CliError::from),
            None => pair_for(o.kind, p).and_then(|pair| splitting(p, &pair, &settings).map_err(CliError::from)),
        })
        .collect();
    single_error(cfg, &mut results)?;
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (i, ((v, _), r)) in points.iter().zip(results).enumerate() {
        let v = *v;
        match r {
            Ok(s) => ok.push((i, v, s)),
            Err(e) => failures.push(Failure { index: i, value: v, error: e.to_string() }),
        }
    }
    Ok((ok, failures))
}

fn splitting_row(t: &mut Table, s: &SplittingSample) -> Result<(), CliError> {
    t.row([
        fmt12(1.0 / s.hbar_eff),
        fmt12(s.beta),
        fmt12(s.delta),
        s.method.as_str().into(),
        s.island_kind.as_str().to_string(),
    ])
}

const SPLITTING_HEADER: [&str; 5] = ["hbar_inv", "beta", "delta", "method", "island_kind"];

fn splittings(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: SplittingOptions = cfg.task_options()?;
    let (ok, failures) = splitting_sweep(cfg, params, &o)?;
    let mut t = Table::new(&SPLITTING_HEADER)?;
    for (_, _, s) in &ok {
        splitting_row(&mut t, s)?;
    }
    out.table("splittings.csv", t)?;
    let total = ok.len() + failures.len();
    let summary = if total == 1 && !ok.is_empty() {
        json!({ "delta": ok[0].2.delta, "tunneling_period": ok[0].2.tunneling_period().ok() })
    } else {
        json!({ "points": total, "failed": failures.len() })
    };
    partial(total, failures, summary)
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct Route1Options {
    /// Packet center; the upper momentum island when absent.
    center: Option<[f64; 2]>,
    width_x: Option<f64>,
    /// Single member at the model's beta when absent.
    ensemble: Option<QuasimomentumEnsemble>,
    n_periods: usize,
    evolution: Evolution,
    hysteresis: f64,
}

impl Default for Route1Options {
    fn default() -> Self {
        Self {
            center: None,
            width_x: None,
            ensemble: None,
            n_periods: 1000,
            evolution: Evolution::Spectral,
            hysteresis: 0.25,
        }
    }
}

fn route1(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: Route1Options = cfg.task_options()?;
    let center = match o.center {
        Some([x, p]) => PhaseState::new(x, p),
        None => momentum_pair(params)?.first.center,
    };
    let ensemble = o.ensemble.unwrap_or_else(|| QuasimomentumEnsemble::fixed(params.beta));
    let opts = TraceOptions { grid: trace_grid(cfg), evolution: o.evolution, keep_members: true };
    let tr = route1_oscillations(params, &CoherentSpec { center, width_x: o.width_x }, &ensemble, o.n_periods, &opts)?;
    let members = tr.members.clone().unwrap_or_default();
    let mut header = vec!["t".to_string(), "p_avg".to_string()];
    header.extend((0..members.len()).map(|i| format!("p_member_{i}")));
    let mut t = Table::with_header(header)?;
    for k in 0..tr.times.len() {
        let mut row = vec![tr.times[k], tr.values[k]];
        row.extend(members.iter().map(|m| m[k]));
        t.numbers(&row)?;
    }
    out.table("route1.csv", t)?;
    let period = oscillation_period(&tr.times, &tr.values, o.hysteresis).ok();
    Ok(TaskOutcome::done(json!({
        "center": [center.x, center.p],
        "betas": tr.betas,
        "trace_period": period,
        "amplitude": tr.amplitude(),
        "norm_defect": tr.norm_defect,
        "n_points": tr.n_points,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct Route2Options {
    drift: Option<DriftSettings>,
    schedule: NAccSchedule,
    thresholds: CriteriaThresholds,
    /// Also compute the exact splitting at each point.
    exact: bool,
}

impl Default for Route2Options {
    fn default() -> Self {
        Self { drift: None, schedule: NAccSchedule::default(), thresholds: CriteriaThresholds::default(), exact: true }
    }
}

fn route2(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: Route2Options = cfg.task_options()?;
    let mut drift = o.drift.clone().unwrap_or_default();
    if o.drift.is_none() {
        drift.ensemble.seed = cfg.seed;
    }
    if cfg.grid.n_points.is_some() || cfg.grid.steps_per_period.is_some() {
        drift.grid = trace_grid(cfg);
    }
    let pair = momentum_pair(params)?;
    let points = sweep_values(cfg, params)?;
    let single = cfg.sweep.is_none();
    let exact = exact_settings(cfg);
    let mut results: Vec<_> = points
        .par_iter()
        .map(|(_, p)| {
            let ex = route2_extract(p, &pair, &drift, &o.schedule, &o.thresholds)?;
            let d = if o.exact { splitting(&p.with_beta(0.0), &pair, &exact).ok().map(|s| s.delta) } else { None };
            Ok::<_, CliError>((ex, d))
        })
        .collect();
    single_error(cfg, &mut results)?;
    let mut t = Table::new(&["hbar_inv", "delta_lz", "delta_exact_if_computed", "c1", "c2", "c3", "c4", "accepted"])?;
    let mut failures = Vec::new();
    let mut accepted = 0usize;
    let mut slowest = None;
    for (i, ((v, p), r)) in points.iter().zip(results).enumerate() {
        match r {
            Ok((ex, d)) => {
                let c = &ex.criteria;
                let acc = c.accepted && ex.sample.is_some();
                accepted += acc as usize;
                let b = |x: bool| (x as u8).to_string();
                t.row([
                    fmt12(1.0 / p.hbar_eff),
                    fmt_opt(ex.sample.map(|s| s.delta)),
                    fmt_opt(d),
                    b(c.final_value_ok),
                    b(c.crossing_ok),
                    b(c.curvature_ok),
                    b(c.amplitude_ok),
                    b(acc),
                ])?;
                if single {
                    slowest = Some(ex);
                }
            }
            Err(e) => failures.push(Failure { index: i, value: *v, error: e.to_string() }),
        }
    }
    out.table("route2_extract.csv", t)?;
    let mut summary = json!({ "points": points.len(), "accepted": accepted, "failed": failures.len() });
    if let Some(ex) = slowest {
        let r = &ex.slowest;
        let mut t = Table::new(&["t", "beta_t", "p_avg"])?;
        for k in 0..r.trace.times.len() {
            t.numbers(&[r.trace.times[k], r.beta_t[k], r.trace.values[k]])?;
        }
        out.table("route2.csv", t)?;
        summary["finals"] = json!(ex.finals);
        summary["fit"] = json!(ex.fit);
        summary["fit_error"] = json!(ex.fit_error);
        summary["low_projection_weight"] = json!(ex.low_projection_weight);
    }
    partial(points.len(), failures, summary)
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct Route3Opts {
    /// Packet center; the spatial island `(x*, 0)` when absent.
    center: Option<[f64; 2]>,
    width_x: Option<f64>,
    /// Interval `[-0.02, 0.02]` with 180 members when absent.
    ensemble: Option<QuasimomentumEnsemble>,
    n_double_periods: usize,
    evolution: Evolution,
    rescale: bool,
}

impl Default for Route3Opts {
    fn default() -> Self {
        Self {
            center: None,
            width_x: None,
            ensemble: None,
            n_double_periods: 500,
            evolution: Evolution::Spectral,
            rescale: true,
        }
    }
}

fn route3(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: Route3Opts = cfg.task_options()?;
    let pair = spatial_pair(params)?;
    let center = match o.center {
        Some([x, p]) => PhaseState::new(x, p),
        None => pair.first.center,
    };
    let ensemble = o.ensemble.unwrap_or_else(|| QuasimomentumEnsemble::interval(-0.02, 0.02, 180, cfg.seed));
    let opts = Route3Options {
        trace: TraceOptions { grid: trace_grid(cfg), evolution: o.evolution, keep_members: false },
        rescale: o.rescale,
    };
    let r = route3_oscillations(
        params,
        &pair,
        &CoherentSpec { center, width_x: o.width_x },
        &ensemble,
        o.n_double_periods,
        &opts,
    )?;
    let mut t = Table::new(&["t", "x_avg"])?;
    for (a, b) in r.trace.times.iter().zip(&r.trace.values) {
        t.numbers(&[*a, *b])?;
    }
    out.table("route3.csv", t)?;
    // samples are two periods apart; smooth over a twentieth of the tunneling period
    let window = r.tunneling_period.map_or(1, |t| ((t / 40.0).round() as usize) | 1);
    let ret = first_return_with(&r.trace.times, &r.trace.values, 0.2, window);
    Ok(TaskOutcome::done(json!({
        "x_star": pair.first.center.x,
        "delta": r.delta,
        "tunneling_period": r.tunneling_period,
        "first_return": ret,
        "first_return_rescaled": ret.zip(r.tunneling_period).map(|(a, b)| a / b),
        "amplitude": r.trace.amplitude(),
        "members": r.trace.betas.len(),
    })))
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct RotationOptions {
    center: [f64; 2],
    width_x: Option<f64>,
    /// Periods of modulated evolution before the readout.
    periods: usize,
    n_phases: usize,
    steps: usize,
}

impl Default for RotationOptions {
    fn default() -> Self {
        Self { center: [0.0, 0.0], width_x: None, periods: 0, n_phases: 64, steps: 256 }
    }
}

fn rotation(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: RotationOptions = cfg.task_options()?;
    if o.n_phases == 0 {
        return Err(CliError::Validation(vec!["options.n_phases must be >= 1".into()]));
    }
    let (n, steps) = trace_grid(cfg).resolve(params.hbar_eff);
    let grid = SpatialGrid::new(n)?;
    let width = o.width_x.unwrap_or_else(|| isotropic_width(params.hbar_eff));
    let mut psi =
        coherent_state(PhaseState::new(o.center[0], o.center[1]), width, params.beta, params.hbar_eff, &grid)?;
    if o.periods > 0 {
        let mut prop = Propagator::new(params, &grid, steps)?;
        prop.evolve(&mut psi, 0.0, o.periods, &BetaSchedule::Fixed(params.beta));
    }
    let phases: Vec<f64> = (0..o.n_phases).map(|i| TAU * i as f64 / o.n_phases as f64).collect();
    let scan = phase_rotation_measurement(&psi, params, &phases, o.steps)?;
    let mut t = Table::new(&["phi_m", "pop0"])?;
    for (a, b) in scan.phase_shifts.iter().zip(&scan.zero_velocity_population) {
        t.numbers(&[*a, *b])?;
    }
    out.table("rotation.csv", t)?;
    Ok(TaskOutcome::done(json!({ "n_points": n, "periods": o.periods })))
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(default)]
struct StatsOptions {
    /// Read splittings from a `splittings.csv` instead of computing the sweep.
    input: Option<PathBuf>,
    kind: IslandKind,
    typical: TypicalValue,
    ks_threshold: f64,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            input: None,
            kind: IslandKind::MomentumPair,
            typical: TypicalValue::Median,
            ks_threshold: DEFAULT_KS_THRESHOLD,
        }
    }
}

fn read_splittings(path: &PathBuf) -> Result<Vec<SplittingSample>, CliError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut v = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64, CliError> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::Validation(vec![format!("{}: bad number in column {k}", path.display())]))
        };
        let kind = match rec.get(4) {
            Some("spatial-pair") => IslandKind::SpatialPair,
            _ => IslandKind::MomentumPair,
        };
        let method = if rec.get(3) == Some("lz") { SplittingMethod::Lz } else { SplittingMethod::Exact };
        v.push(SplittingSample {
            hbar_eff: 1.0 / num(0)?,
            beta: num(1)?,
            delta: num(2)?,
            island_kind: kind,
            method,
            n_points: 0,
            steps_per_period: 0,
            tags: [f64::NAN; 2],
        });
    }
    Ok(v)
}

fn stats(cfg: &RunConfig, params: &ModelParams, out: &mut OutputDir) -> Result<TaskOutcome, CliError> {
    let o: StatsOptions = cfg.task_options()?;
    let (samples, failures) = match &o.input {
        Some(p) => (read_splittings(p)?, Vec::new()),
        None => {
            let so = SplittingOptions { kind: o.kind, ..Default::default() };
            let (ok, f) = splitting_sweep(cfg, params, &so)?;
            let mut t = Table::new(&SPLITTING_HEADER)?;
            for (_, _, s) in &ok {
                splitting_row(&mut t, s)?;
            }
            out.table("splittings.csv", t)?;
            (ok.into_iter().map(|x| x.2).collect::<Vec<_>>(), f)
        }
    };
    // zero splittings (exact degeneracies) carry no fluctuation information
    let positive: Vec<SplittingSample> = samples.iter().copied().filter(|s| s.delta > 0.0).collect();
    let ens = normalize_fluctuations_with(&positive, o.typical)?;
    let mut t = Table::new(&["delta", "delta_s"])?;
    for (s, d) in ens.samples.iter().zip(&ens.normalized) {
        t.numbers(&[s.delta, *d])?;
    }
    out.table("fluct.csv", t)?;
    let gof = cauchy_gof(&ens, o.ks_threshold);
    let mut t = Table::new(&["ks", "threshold", "pass"])?;
    t.row([fmt12(gof.ks), fmt12(gof.threshold), (gof.pass as u8).to_string()])?;
    out.table("gof.csv", t)?;
    let mut summary =
        json!({ "samples": ens.samples.len(), "delta_typ": ens.delta_typ, "ks": gof.ks, "pass": gof.pass });
    let hbar_spread = positive.iter().any(|s| s.hbar_eff != positive[0].hbar_eff);
    if hbar_spread {
        let fit = regular_action_fit(&positive)?;
        let mut t = Table::new(&["S", "intercept", "residual"])?;
        t.numbers(&[fit.action, fit.prefactor, fit.residual])?;
        out.table("regfit.csv", t)?;
        summary["regular_fit_warning"] = json!(fit.warning);
    }
    if cfg.sweep.is_some_and(|s| s.variable == SweepVariable::Beta) && failures.is_empty() {
        let betas: Vec<f64> = samples.iter().map(|s| s.beta).collect();
        let deltas: Vec<f64> = samples.iter().map(|s| s.delta).collect();
        match beta_correlation_scale(&betas, &deltas) {
            Ok(c) => {
                summary["correlation_scale"] = json!(c.scale);
                summary["correlation_lower_bound"] = json!(c.lower_bound);
            }
            Err(e) => summary["correlation_error"] = json!(e.to_string()),
        }
    }
    let total = samples.len() + failures.len();
    summary["failed"] = json!(failures.len());
    partial(total, failures, summary)
}
