use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::ModelParams;

use super::{Integrator, PhaseState, DEFAULT_STEPS_PER_PERIOD};

/// Default chaoticity threshold on the local exponent.
pub const DEFAULT_THRESHOLD: f64 = 0.012;

/// Rectangular partition of `[-pi, pi) x [p_min, p_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxGrid {
    pub nx: usize,
    pub np: usize,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for BoxGrid {
    fn default() -> Self {
        Self { nx: 100, np: 100, p_min: -2.0, p_max: 2.0 }
    }
}

impl BoxGrid {
    pub fn len(&self) -> usize {
        self.nx * self.np
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Center of box `(i, j)`, `i` along x and `j` along p.
    pub fn center(&self, i: usize, j: usize) -> PhaseState {
        let dx = TAU / self.nx as f64;
        let dp = (self.p_max - self.p_min) / self.np as f64;
        PhaseState::new(-PI + (i as f64 + 0.5) * dx, self.p_min + (j as f64 + 0.5) * dp)
    }

    fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.np == 0 || !(self.p_max > self.p_min) {
            return Err(Error::Configuration(format!("invalid box grid {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSettings {
    pub threshold: f64,
    pub steps_per_period: usize,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD, steps_per_period: DEFAULT_STEPS_PER_PERIOD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovChart {
    pub box_grid: BoxGrid,
    /// Row-major by `(i, j)`: index `i * np + j`.
    pub exponents: Vec<f64>,
    pub threshold: f64,
    pub chaotic_fraction: f64,
}

impl LyapunovChart {
    pub fn exponent(&self, i: usize, j: usize) -> f64 {
        self.exponents[i * self.box_grid.np + j]
    }
}

/// Finite-time exponent of the trajectory started at `s0`, per unit time.
fn local_exponent(integ: &Integrator, s0: PhaseState, horizon: usize) -> f64 {
    let mut s = s0;
    let mut v = [1.0, 0.0];
    let mut sum = 0.0;
    for _ in 0..horizon {
        s = integ.map_tangent(s, &mut v);
        let r = v[0].hypot(v[1]);
        sum += r.ln();
        v = [v[0] / r, v[1] / r];
    }
    sum / (horizon as f64 * TAU)
}

/// Local Lyapunov exponents box by box, renormalizing the tangent vector every period.
pub fn lyapunov_chart(
    params: &ModelParams,
    boxes: &BoxGrid,
    horizon: usize,
    settings: &LyapunovSettings,
) -> Result<LyapunovChart> {
    params.validate()?;
    boxes.validate()?;
    if horizon < 50 {
        return Err(Error::Configuration(format!("horizon must be >= 50 periods, got {horizon}")));
    }
    let integ = Integrator::new(params, settings.steps_per_period)?;
    let exponents: Vec<f64> = (0..boxes.len())
        .into_par_iter()
        .map(|k| local_exponent(&integ, boxes.center(k / boxes.np, k % boxes.np), horizon))
        .collect();
    if exponents.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numerical("non-finite Lyapunov exponent".into()));
    }
    let chaotic = exponents.iter().filter(|&&l| l > settings.threshold).count();
    Ok(LyapunovChart {
        box_grid: *boxes,
        threshold: settings.threshold,
        chaotic_fraction: chaotic as f64 / exponents.len() as f64,
        exponents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(g: f64, e: f64, n: usize) -> LyapunovChart {
        let p = ModelParams::classical(g, e).unwrap();
        let grid = BoxGrid { nx: n, np: n, ..Default::default() };
        let settings = LyapunovSettings { steps_per_period: 64, ..Default::default() };
        lyapunov_chart(&p, &grid, 200, &settings).unwrap()
    }

    #[test]
    fn integrable_cases_have_no_chaos() {
        let c = chart(0.0, 0.4, 8);
        assert!(c.exponents.iter().all(|&l| l.abs() <= 1e-4));
        assert_eq!(c.chaotic_fraction, 0.0);
        let c = chart(0.25, 0.0, 8);
        assert!(c.exponents.iter().all(|&l| l < 1e-2), "{:?}", c.exponents);
    }

    #[test]
    fn short_horizon_rejected() {
        let p = ModelParams::classical(0.2, 0.2).unwrap();
        assert!(lyapunov_chart(&p, &BoxGrid::default(), 10, &LyapunovSettings::default()).is_err());
    }

    #[test]
    fn box_centers_cover_window() {
        let g = BoxGrid { nx: 4, np: 2, p_min: -1.0, p_max: 1.0 };
        assert_eq!(g.center(0, 0), PhaseState::new(-PI + TAU / 8.0, -0.5));
        assert_eq!(g.center(3, 1), PhaseState::new(PI - TAU / 8.0, 0.5));
    }

    #[test]
    fn chaos_grows_with_forcing() {
        let f: Vec<f64> = [0.1, 0.2, 0.3].iter().map(|&g| chart(g, 0.29, 16).chaotic_fraction).collect();
        assert!(f[0] <= f[1] && f[1] <= f[2], "{f:?}");
        // the separatrix layer of the default window holds about 7% of the boxes
        let weak = chart(0.1, 0.1, 16).chaotic_fraction;
        assert!(weak < 0.1 && weak < f[0], "{weak}");
    }
}
