use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::ModelParams;

use super::{fold_angle, Integrator, PhaseState, DEFAULT_STEPS_PER_PERIOD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchAxis {
    /// Launches on `x = 0`, scanning `p`.
    Momentum,
    /// Launches on `p = 0`, scanning `x`.
    Position,
}

/// Stable periodic orbit of the stroboscopic map and its island.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IslandInfo {
    pub center: PhaseState,
    pub map_period: usize,
    pub area: f64,
    pub chaotic_sea_area: Option<f64>,
    /// Trace of the monodromy matrix of the iterated map.
    pub trace: f64,
}

/// Scan and refinement options for [`find_periodic_orbit_in`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSearch {
    pub bracket: (f64, f64),
    pub samples: usize,
    pub tolerance: f64,
    pub max_newton: usize,
    pub steps_per_period: usize,
}

impl OrbitSearch {
    pub fn new(bracket: (f64, f64)) -> Self {
        Self { bracket, samples: 400, tolerance: 1e-10, max_newton: 50, steps_per_period: DEFAULT_STEPS_PER_PERIOD }
    }

    pub fn steps(mut self, steps_per_period: usize) -> Self {
        self.steps_per_period = steps_per_period;
        self
    }
}

fn launch(axis: SearchAxis, s: f64) -> PhaseState {
    match axis {
        SearchAxis::Momentum => PhaseState::new(0.0, s),
        SearchAxis::Position => PhaseState::new(s, 0.0),
    }
}

/// Residual `M^k(z) - z` with the position difference folded.
fn residual(integ: &Integrator, z: PhaseState, k: usize) -> [f64; 2] {
    let w = integ.map_n(z, k);
    [fold_angle(w.x - z.x), w.p - z.p]
}

/// Scan function whose zeros are candidate orbits along the axis.
fn scan_value(integ: &Integrator, axis: SearchAxis, s: f64, k: usize) -> f64 {
    let r = residual(integ, launch(axis, s), k);
    match axis {
        SearchAxis::Momentum => r[0],
        SearchAxis::Position => r[1],
    }
}

/// Scan points: uniform over the bracket, denser near its lower end.
fn scan_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let first = (hi - lo) / n as f64;
    let fine = 40;
    for i in 0..fine {
        let d = first * (1e-6f64).powf(1.0 - i as f64 / fine as f64);
        pts.push(lo + d);
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

fn newton(integ: &Integrator, z0: PhaseState, k: usize, opts: &OrbitSearch) -> Result<(PhaseState, [[f64; 2]; 2])> {
    let mut z = z0;
    for _ in 0..opts.max_newton {
        let (w, j) = integ.map_jacobian(z, k);
        let f = [fold_angle(w.x - z.x), w.p - z.p];
        let norm = f[0].hypot(f[1]);
        if norm < opts.tolerance {
            return Ok((z, j));
        }
        let a = [[j[0][0] - 1.0, j[0][1]], [j[1][0], j[1][1] - 1.0]];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if det.abs() < 1e-13 {
            return Err(Error::DegenerateOrbit(format!("singular Newton matrix at {z:?} (det {det:e})")));
        }
        let dx = (a[1][1] * f[0] - a[0][1] * f[1]) / det;
        let dp = (-a[1][0] * f[0] + a[0][0] * f[1]) / det;
        // damped step keeps Newton from jumping to a distant orbit
        let step = dx.hypot(dp);
        let scale = if step > 0.2 { 0.2 / step } else { 1.0 };
        z = PhaseState::new(z.x - scale * dx, z.p - scale * dp);
        if !(z.x.is_finite() && z.p.is_finite()) {
            return Err(Error::Numerical("Newton iterate diverged".into()));
        }
    }
    let f = residual(integ, z, k);
    Err(Error::OrbitNotFound(format!("Newton did not converge from {z0:?}; residual {:e}", f[0].hypot(f[1]))))
}

/// Bisection on the scan function inside a sign-change interval.
fn refine_scan(integ: &Integrator, axis: SearchAxis, k: usize, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let fm = scan_value(integ, axis, m, k);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        if b - a < 1e-13 {
            break;
        }
    }
    0.5 * (a + b)
}

/// First stable periodic orbit of the `map_period`-fold map whose launch lies
/// on `axis` within the bracket, scanning from the lower end.
pub fn find_periodic_orbit_in(
    params: &ModelParams,
    map_period: usize,
    axis: SearchAxis,
    opts: &OrbitSearch,
) -> Result<IslandInfo> {
    params.validate()?;
    if !(map_period == 1 || map_period == 2) {
        return Err(Error::Configuration(format!("map_period must be 1 or 2, got {map_period}")));
    }
    let (lo, hi) = opts.bracket;
    if !(hi > lo) || opts.samples < 2 {
        return Err(Error::Configuration(format!("invalid bracket {:?}", opts.bracket)));
    }
    let integ = Integrator::new(params, opts.steps_per_period)?;
    let pts = scan_points(lo, hi, opts.samples);
    let vals: Vec<f64> = pts.iter().map(|&s| scan_value(&integ, axis, s, map_period)).collect();

    let mut candidates = Vec::new();
    for i in 0..pts.len() {
        if vals[i] == 0.0 {
            candidates.push(pts[i]);
        } else if i + 1 < pts.len() && vals[i] * vals[i + 1] < 0.0 {
            // a jump through the fold is not a root
            if (vals[i] - vals[i + 1]).abs() > PI {
                continue;
            }
            candidates.push(refine_scan(&integ, axis, map_period, pts[i], pts[i + 1], vals[i]));
        }
    }
    if candidates.is_empty() {
        return Err(Error::OrbitNotFound(format!("no sign change on the {axis:?} axis in {:?}", opts.bracket)));
    }

    let mut last_err = None;
    for s in candidates {
        match newton(&integ, launch(axis, s), map_period, opts) {
            Ok((z, j)) => {
                let trace = j[0][0] + j[1][1];
                if trace.abs() < 2.0 {
                    return Ok(IslandInfo { center: z.folded(), map_period, area: 0.0, chaotic_sea_area: None, trace });
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err
        .unwrap_or_else(|| Error::OrbitNotFound(format!("no stable orbit on the {axis:?} axis in {:?}", opts.bracket))))
}

/// Stable orbit with default scan options; the bracket is along the search axis.
pub fn find_periodic_orbit(
    params: &ModelParams,
    map_period: usize,
    axis: SearchAxis,
    bracket: (f64, f64),
) -> Result<IslandInfo> {
    find_periodic_orbit_in(params, map_period, axis, &OrbitSearch::new(bracket))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationCurve {
    pub gamma_values: Vec<f64>,
    pub x_star_values: Vec<f64>,
    pub gamma_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BifurcationSettings {
    /// Position bracket on `p = 0` searched for the period-2 orbit.
    pub bracket: (f64, f64),
    /// Smallest `x*` counted as a bifurcated orbit.
    pub existence_threshold: f64,
    pub gamma_tolerance: f64,
    pub steps_per_period: usize,
}

impl Default for BifurcationSettings {
    fn default() -> Self {
        Self {
            bracket: (0.0, 2.5),
            existence_threshold: 1e-4,
            gamma_tolerance: 1e-4,
            steps_per_period: DEFAULT_STEPS_PER_PERIOD,
        }
    }
}

fn x_star(params: &ModelParams, s: &BifurcationSettings) -> Result<f64> {
    let opts = OrbitSearch::new(s.bracket).steps(s.steps_per_period);
    let info = find_periodic_orbit_in(params, 2, SearchAxis::Position, &opts)?;
    Ok(info.center.x.abs())
}

/// `x*(gamma)` at fixed epsilon and the bifurcation point `gamma_b`.
pub fn bifurcation_diagram(epsilon: f64, gamma_range: &[f64]) -> Result<BifurcationCurve> {
    bifurcation_diagram_with(epsilon, gamma_range, &BifurcationSettings::default())
}

pub fn bifurcation_diagram_with(
    epsilon: f64,
    gamma_range: &[f64],
    settings: &BifurcationSettings,
) -> Result<BifurcationCurve> {
    if gamma_range.len() < 2 || gamma_range.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Configuration("gamma_range must be sorted ascending with >= 2 values".into()));
    }
    // continuation: once the pair exists, search outward from the previous x*
    // so that a re-stabilized origin is not mistaken for the branch
    let mut x_star_values = Vec::with_capacity(gamma_range.len());
    let mut prev = 0.0;
    for &g in gamma_range {
        let mut s = *settings;
        if prev > settings.existence_threshold {
            s.bracket.0 = 0.5 * prev;
        }
        let x = x_star(&ModelParams::classical(g, epsilon)?, &s)?;
        x_star_values.push(x);
        prev = x;
    }
    let exists = |x: f64| x > settings.existence_threshold;
    let idx = x_star_values
        .iter()
        .position(|&x| exists(x))
        .ok_or_else(|| Error::OrbitNotFound("no bifurcated orbit in gamma_range".into()))?;
    if idx == 0 {
        return Err(Error::OrbitNotFound("gamma_range starts above the bifurcation".into()));
    }
    let (mut a, mut b) = (gamma_range[idx - 1], gamma_range[idx]);
    while b - a > settings.gamma_tolerance {
        let m = 0.5 * (a + b);
        if exists(x_star(&ModelParams::classical(m, epsilon)?, settings)?) {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(BifurcationCurve { gamma_values: gamma_range.to_vec(), x_star_values, gamma_b: 0.5 * (a + b) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_fixed_point() {
        let p = ModelParams::classical(0.25, 0.4).unwrap();
        let info = find_periodic_orbit(&p, 1, SearchAxis::Momentum, (0.8, 2.0)).unwrap();
        assert!(info.center.x.abs() < 1e-8);
        assert!((info.center.p - 1.296).abs() < 0.005, "{:?}", info.center);
        let integ = Integrator::new(&p, DEFAULT_STEPS_PER_PERIOD).unwrap();
        assert!(integ.map(info.center).distance(&info.center) < 1e-10);
    }

    #[test]
    fn centre_before_bifurcation() {
        let p = ModelParams::classical(0.2, 0.29).unwrap();
        let info = find_periodic_orbit(&p, 2, SearchAxis::Position, (0.0, 2.5)).unwrap();
        assert!(info.center.x.abs() < 1e-10 && info.center.p.abs() < 1e-10);
    }

    #[test]
    fn spatial_pair_after_bifurcation() {
        let p = ModelParams::classical(0.29, 0.29).unwrap();
        let info = find_periodic_orbit(&p, 2, SearchAxis::Position, (0.0, 2.5)).unwrap();
        assert!(info.center.x > 0.5 && info.center.p.abs() < 1e-8, "{:?}", info.center);
        let integ = Integrator::new(&p, DEFAULT_STEPS_PER_PERIOD).unwrap();
        let once = integ.map(info.center);
        // one period later the partner island at -x*
        assert!((once.x + info.center.x).abs() < 1e-8 && once.p.abs() < 1e-8, "{once:?}");
    }

    #[test]
    fn no_sign_change_is_not_found() {
        let p = ModelParams::classical(0.25, 0.4).unwrap();
        assert!(matches!(find_periodic_orbit(&p, 1, SearchAxis::Momentum, (3.0, 3.02)), Err(Error::OrbitNotFound(_))));
    }

    #[test]
    fn bad_period_rejected() {
        let p = ModelParams::classical(0.25, 0.4).unwrap();
        assert!(find_periodic_orbit(&p, 3, SearchAxis::Momentum, (0.8, 2.0)).is_err());
    }
}
