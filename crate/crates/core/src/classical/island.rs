use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::ModelParams;

use super::{Integrator, IslandInfo, PhaseState};

/// Options of the island boundary search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaSettings {
    pub n_angles: usize,
    /// Map iterates a launch must stay bounded for to count as librating.
    pub iterations: usize,
    /// Outer end of the radial bracket.
    pub r_max: f64,
    /// Escape when leaving a disk of `escape_factor * r_max` around the center.
    pub escape_factor: f64,
    /// Coarse radial steps before bisection.
    pub coarse_steps: usize,
    pub radial_tolerance: f64,
    /// Polar coordinates are `(x, p) = center + r (sx cos t, sp sin t)`.
    pub axis_scale: (f64, f64),
    pub steps_per_period: usize,
}

impl Default for AreaSettings {
    fn default() -> Self {
        Self {
            n_angles: 64,
            iterations: 2000,
            r_max: 1.5,
            escape_factor: 1.5,
            coarse_steps: 24,
            radial_tolerance: 1e-3,
            axis_scale: (1.0, 0.3),
            steps_per_period: 64,
        }
    }
}

impl AreaSettings {
    fn validate(&self) -> Result<()> {
        if self.n_angles < 8
            || self.iterations == 0
            || self.coarse_steps == 0
            || !(self.r_max > 0.0)
            || !(self.escape_factor > 1.0)
            || !(self.radial_tolerance > 0.0)
            || !(self.axis_scale.0 > 0.0 && self.axis_scale.1 > 0.0)
        {
            return Err(Error::Configuration(format!("invalid area settings {self:?}")));
        }
        Ok(())
    }
}

/// Boundary radius per polar angle.
#[derive(Debug, Clone, PartialEq)]
pub struct IslandBoundary {
    pub angles: Vec<f64>,
    pub radii: Vec<f64>,
    pub failed: usize,
    pub area: f64,
}

struct Membership<'a> {
    integ: Integrator,
    center: PhaseState,
    period: usize,
    iterations: usize,
    escape: f64,
    settings: &'a AreaSettings,
}

impl Membership<'_> {
    fn point(&self, r: f64, theta: f64) -> PhaseState {
        let (sx, sp) = self.settings.axis_scale;
        PhaseState::new(self.center.x + r * sx * theta.cos(), self.center.p + r * sp * theta.sin())
    }

    fn librates(&self, z: PhaseState) -> bool {
        let mut s = z;
        for _ in 0..self.iterations {
            s = self.integ.map_n(s, self.period);
            if s.distance(&self.center) > self.escape {
                return false;
            }
        }
        true
    }

    /// Last librating radius along `theta` before the bracket end, or `None`
    /// when `r_max` itself librates.
    fn boundary(&self, theta: f64) -> Option<f64> {
        let r_max = self.settings.r_max;
        let n = self.settings.coarse_steps;
        let radius = |k: usize| r_max * k as f64 / n as f64;
        let inside: Vec<bool> = (1..=n).map(|k| self.librates(self.point(radius(k), theta))).collect();
        if inside[n - 1] {
            return None;
        }
        let last = inside.iter().rposition(|&b| b).map_or(0, |i| i + 1);
        let (mut a, mut b) = (radius(last), radius(last + 1));
        while b - a > self.settings.radial_tolerance {
            let m = 0.5 * (a + b);
            if self.librates(self.point(m, theta)) {
                a = m;
            } else {
                b = m;
            }
        }
        Some(0.5 * (a + b))
    }
}

fn membership<'a>(params: &ModelParams, island: &IslandInfo, settings: &'a AreaSettings) -> Result<Membership<'a>> {
    params.validate()?;
    settings.validate()?;
    if !(island.map_period == 1 || island.map_period == 2) {
        return Err(Error::Configuration("map_period must be 1 or 2".into()));
    }
    Ok(Membership {
        integ: Integrator::new(params, settings.steps_per_period)?,
        center: island.center,
        period: island.map_period,
        iterations: settings.iterations,
        escape: settings.escape_factor * settings.r_max,
        settings,
    })
}

/// Island boundary by radial bisection between librating and escaping launches.
pub fn island_boundary(params: &ModelParams, island: &IslandInfo, settings: &AreaSettings) -> Result<IslandBoundary> {
    let m = membership(params, island, settings)?;
    let n = settings.n_angles;
    let angles: Vec<f64> = (0..n).map(|k| TAU * k as f64 / n as f64).collect();
    let found: Vec<Option<f64>> = angles.par_iter().map(|&t| m.boundary(t)).collect();
    let failed = found.iter().filter(|r| r.is_none()).count();
    if failed * 10 > n {
        return Err(Error::IllDefinedBoundary { failed, total: n });
    }
    // failed angles take the mean of their bracketed neighbours
    let radii: Vec<f64> = (0..n)
        .map(|k| {
            found[k].unwrap_or_else(|| {
                let near: Vec<f64> =
                    (1..n).flat_map(|d| [found[(k + d) % n], found[(k + n - d) % n]]).flatten().take(2).collect();
                near.iter().sum::<f64>() / near.len() as f64
            })
        })
        .collect();
    let (sx, sp) = settings.axis_scale;
    let area = 0.5 * sx * sp * radii.iter().map(|r| r * r).sum::<f64>() * TAU / n as f64;
    Ok(IslandBoundary { angles, radii, failed, area })
}

/// Island area from the polar boundary.
pub fn island_area(params: &ModelParams, island: &IslandInfo, settings: &AreaSettings) -> Result<f64> {
    Ok(island_boundary(params, island, settings)?.area)
}

/// Monte-Carlo estimate with the same membership test, sampling the box
/// `center +- (r_max sx, r_max sp)`.
pub fn island_area_monte_carlo(
    params: &ModelParams,
    island: &IslandInfo,
    settings: &AreaSettings,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let m = membership(params, island, settings)?;
    let (sx, sp) = settings.axis_scale;
    let (hx, hp) = (settings.r_max * sx, settings.r_max * sp);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<PhaseState> = (0..samples)
        .map(|_| {
            PhaseState::new(island.center.x + rng.random_range(-hx..hx), island.center.p + rng.random_range(-hp..hp))
        })
        .collect();
    let hits = pts.par_iter().filter(|&&z| m.librates(z)).count();
    Ok(4.0 * hx * hp * hits as f64 / samples as f64)
}
