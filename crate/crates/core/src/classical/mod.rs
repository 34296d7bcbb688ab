//! Classical modulated pendulum: trajectories, sections, chaoticity, islands.

mod integrator;
mod island;
mod lyapunov;
mod orbits;

use serde::{Deserialize, Serialize};

pub use integrator::{fold_angle, integrate_trajectory, Integrator, Scheme, Trajectory, DEFAULT_STEPS_PER_PERIOD};
pub use island::{island_area, island_area_monte_carlo, island_boundary, AreaSettings, IslandBoundary};
pub use lyapunov::{lyapunov_chart, BoxGrid, LyapunovChart, LyapunovSettings, DEFAULT_THRESHOLD};
pub use orbits::{
    bifurcation_diagram, bifurcation_diagram_with, find_periodic_orbit, find_periodic_orbit_in, BifurcationCurve,
    BifurcationSettings, IslandInfo, OrbitSearch, SearchAxis,
};

use crate::error::{Error, Result};
use crate::units::ModelParams;

/// Point of the classical phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: f64,
    pub p: f64,
}

impl PhaseState {
    pub const fn new(x: f64, p: f64) -> Self {
        Self { x, p }
    }

    /// Same point with `x` folded into `[-pi, pi)`.
    pub fn folded(self) -> Self {
        Self::new(fold_angle(self.x), self.p)
    }

    /// Phase-space distance with the position taken modulo `2 pi`.
    pub fn distance(&self, other: &PhaseState) -> f64 {
        fold_angle(self.x - other.x).hypot(self.p - other.p)
    }
}

/// Stroboscopic point clouds, one per seed, each with `n_periods` points
/// starting with the seed itself.
pub fn poincare_sos(params: &ModelParams, seeds: &[PhaseState], n_periods: usize) -> Result<Vec<Vec<PhaseState>>> {
    poincare_sos_with(params, seeds, n_periods, DEFAULT_STEPS_PER_PERIOD)
}

pub fn poincare_sos_with(
    params: &ModelParams,
    seeds: &[PhaseState],
    n_periods: usize,
    steps_per_period: usize,
) -> Result<Vec<Vec<PhaseState>>> {
    use rayon::prelude::*;
    if n_periods == 0 {
        return Err(Error::Configuration("n_periods must be >= 1".into()));
    }
    params.validate()?;
    let integ = Integrator::new(params, steps_per_period)?;
    Ok(seeds
        .par_iter()
        .map(|&seed| {
            let mut s = seed;
            let mut cloud = Vec::with_capacity(n_periods);
            cloud.push(s.folded());
            for _ in 1..n_periods {
                s = integ.map(s);
                cloud.push(s.folded());
            }
            cloud
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_sections_are_horizontal() {
        let p = ModelParams::classical(0.0, 0.3).unwrap();
        let seeds = [PhaseState::new(0.1, 0.3), PhaseState::new(-2.0, -1.1)];
        let clouds = poincare_sos(&p, &seeds, 50).unwrap();
        assert_eq!(clouds.len(), 2);
        for (cloud, seed) in clouds.iter().zip(&seeds) {
            assert_eq!(cloud.len(), 50);
            assert!(cloud
                .iter()
                .all(|s| s.p == seed.p && (-std::f64::consts::PI..std::f64::consts::PI).contains(&s.x)));
        }
    }

    #[test]
    fn section_is_mirror_symmetric() {
        let p = ModelParams::classical(0.25, 0.4).unwrap();
        let seeds = [PhaseState::new(0.7, 0.4), PhaseState::new(-0.7, -0.4)];
        let clouds = poincare_sos(&p, &seeds, 200).unwrap();
        for (a, b) in clouds[0].iter().zip(&clouds[1]).take(20) {
            assert!(fold_angle(a.x + b.x).abs() < 1e-8 && (a.p + b.p).abs() < 1e-8);
        }
    }

    #[test]
    fn momentum_islands_straddle_p_star() {
        let p = ModelParams::classical(0.25, 0.4).unwrap();
        let seeds = [PhaseState::new(0.0, 1.25), PhaseState::new(0.0, -1.25)];
        let clouds = poincare_sos(&p, &seeds, 300).unwrap();
        let mean = |c: &Vec<PhaseState>| c.iter().map(|s| s.p).sum::<f64>() / c.len() as f64;
        assert!((mean(&clouds[0]) - 1.296).abs() < 0.1);
        assert!((mean(&clouds[1]) + 1.296).abs() < 0.1);
        // a regular orbit inside the island never crosses p = 0
        assert!(clouds[0].iter().all(|s| s.p > 0.5));
    }

    #[test]
    fn spatial_islands_alternate() {
        let p = ModelParams::classical(0.29, 0.29).unwrap();
        let seeds = [PhaseState::new(1.2, 0.0)];
        let cloud = &poincare_sos(&p, &seeds, 40).unwrap()[0];
        for w in cloud.windows(2) {
            assert!(w[0].x * w[1].x < 0.0, "{:?}", w);
        }
    }

    #[test]
    fn zero_periods_rejected() {
        let p = ModelParams::classical(0.2, 0.2).unwrap();
        assert!(poincare_sos(&p, &[PhaseState::default()], 0).is_err());
    }
}
