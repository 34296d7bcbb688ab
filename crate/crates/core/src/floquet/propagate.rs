use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::ModelParams;

use super::grid::{SpatialGrid, WaveFunction};

/// Quasimomentum as a function of absolute time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    Fixed(f64),
    /// `beta(t) = initial - rate * t`.
    Linear {
        initial: f64,
        rate: f64,
    },
}

impl BetaSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            BetaSchedule::Fixed(b) => b,
            BetaSchedule::Linear { initial, rate } => initial - rate * t,
        }
    }
}

/// Split-step one-period propagator `K/2 V K/2` with precomputed phase tables.
pub struct Propagator {
    grid: SpatialGrid,
    hbar: f64,
    steps: usize,
    dt: f64,
    /// Potential phase per substep and grid point, including the 1/n of the
    /// FFT round trip.
    potential: Vec<Complex64>,
    /// `exp(-i c j^2)` and `exp(-2 i c j^2)` per FFT bin, `c = hbar dt / 4`.
    kin_half: Vec<Complex64>,
    kin_full: Vec<Complex64>,
    index: Vec<f64>,
    scratch: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl Propagator {
    pub fn new(params: &ModelParams, grid: &SpatialGrid, steps_per_period: usize) -> Result<Self> {
        params.validate()?;
        if !(params.hbar_eff > 0.0) {
            return Err(Error::ParameterDomain("hbar_eff must be > 0".into()));
        }
        if steps_per_period < 64 {
            return Err(Error::Configuration(format!("steps_per_period must be >= 64, got {steps_per_period}")));
        }
        let n = grid.n_points();
        let dt = TAU / steps_per_period as f64;
        let hbar = params.hbar_eff;
        let inv_n = 1.0 / n as f64;
        let cos_x: Vec<f64> = grid.positions().iter().map(|x| x.cos()).collect();
        let mut potential = Vec::with_capacity(n * steps_per_period);
        for k in 0..steps_per_period {
            let t = (k as f64 + 0.5) * dt;
            let depth = params.gamma * (1.0 + params.epsilon * t.cos());
            potential.extend(cos_x.iter().map(|c| Complex64::from_polar(inv_n, depth * c * dt / hbar)));
        }
        let index: Vec<f64> = (0..n).map(|k| grid.index_of_bin(k) as f64).collect();
        let c = hbar * dt / 4.0;
        let kin_half = index.iter().map(|j| Complex64::from_polar(1.0, -c * j * j)).collect();
        let kin_full = index.iter().map(|j| Complex64::from_polar(1.0, -2.0 * c * j * j)).collect();
        Ok(Self {
            grid: grid.clone(),
            hbar,
            steps: steps_per_period,
            dt,
            potential,
            kin_half,
            kin_full,
            index,
            scratch: vec![Complex64::default(); grid.scratch_len()],
            buf: vec![Complex64::default(); n],
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Multiplies FFT-ordered coefficients by `exp(-i c sum_b (j + b)^2)` for
    /// the listed quasimomenta, with `table[j] = exp(-i c m j^2)`, `m = betas.len()`.
    fn kinetic(data: &mut [Complex64], table: &[Complex64], c: f64, betas: &[f64]) {
        let n = data.len();
        let b1: f64 = betas.iter().sum();
        let b2: f64 = betas.iter().map(|b| b * b).sum();
        if b1 == 0.0 && b2 == 0.0 {
            data.iter_mut().zip(table).for_each(|(d, t)| *d *= t);
            return;
        }
        let constant = Complex64::from_polar(1.0, -c * b2);
        let w = Complex64::from_polar(1.0, -2.0 * c * b1);
        // bins 0..n/2 hold j = 0.., the rest j = -n/2..
        let h = n / 2;
        let mut wj = constant;
        for k in 0..h {
            data[k] *= table[k] * wj;
            wj *= w;
        }
        let mut wj = constant * Complex64::from_polar(1.0, 2.0 * c * b1 * h as f64);
        for k in h..n {
            data[k] *= table[k] * wj;
            wj *= w;
        }
    }

    /// One period in FFT-ordered momentum representation (unnormalized FFT of
    /// `u`), starting at absolute time `t0` (a multiple of the period).
    fn period_fft(&mut self, f: &mut [Complex64], t0: f64, schedule: &BetaSchedule) {
        let n = f.len();
        let c = self.hbar * self.dt / 4.0;
        let beta_mid = |k: usize| schedule.at(t0 + (k as f64 + 0.5) * self.dt);
        let fixed = matches!(schedule, BetaSchedule::Fixed(_));
        let b0 = beta_mid(0);
        Self::kinetic(f, &self.kin_half, c, &[b0]);
        for k in 0..self.steps {
            self.grid.ifft(f, &mut self.scratch);
            let v = &self.potential[k * n..(k + 1) * n];
            f.iter_mut().zip(v).for_each(|(a, p)| *a *= p);
            self.grid.fft(f, &mut self.scratch);
            let bk = if fixed { b0 } else { beta_mid(k) };
            if k + 1 < self.steps {
                let bn = if fixed { b0 } else { beta_mid(k + 1) };
                Self::kinetic(f, &self.kin_full, c, &[bk, bn]);
            } else {
                Self::kinetic(f, &self.kin_half, c, &[bk]);
            }
        }
    }

    /// Evolves `psi` over `periods` periods from absolute time `t0`.
    pub fn evolve(&mut self, psi: &mut WaveFunction, t0: f64, periods: usize, schedule: &BetaSchedule) {
        let mut f = std::mem::take(&mut self.buf);
        f.copy_from_slice(&psi.amplitudes);
        self.grid.fft(&mut f, &mut self.scratch);
        for m in 0..periods {
            self.period_fft(&mut f, t0 + m as f64 * TAU, schedule);
        }
        self.grid.ifft(&mut f, &mut self.scratch);
        let inv_n = 1.0 / f.len() as f64;
        psi.amplitudes.iter_mut().zip(&f).for_each(|(a, b)| *a = b * inv_n);
        psi.beta = crate::units::reduce_quasimomentum(schedule.at(t0 + periods as f64 * TAU));
        self.buf = f;
    }

    /// Like [`Propagator::evolve`], calling `observe(period_index, psi)` after
    /// every period (and once for the input state with index 0).
    pub fn evolve_observed<F: FnMut(usize, &WaveFunction)>(
        &mut self,
        psi: &mut WaveFunction,
        t0: f64,
        periods: usize,
        schedule: &BetaSchedule,
        mut observe: F,
    ) {
        observe(0, psi);
        for m in 0..periods {
            self.evolve(psi, t0 + m as f64 * TAU, 1, schedule);
            observe(m + 1, psi);
        }
    }

    /// Applies one period at fixed `beta` to orthonormal momentum
    /// coefficients ordered `j = -n/2 .. n/2`.
    pub fn apply_momentum(&mut self, coeffs: &mut [Complex64], beta: f64) {
        let n = coeffs.len();
        let h = n / 2;
        let mut f = std::mem::take(&mut self.buf);
        for k in 0..n {
            f[k] = coeffs[(k + h) % n];
        }
        self.period_fft(&mut f, 0.0, &BetaSchedule::Fixed(beta));
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = f[(i + h) % n];
        }
        self.buf = f;
    }

    /// Momentum indices per FFT bin.
    pub fn indices(&self) -> &[f64] {
        &self.index
    }
}

/// One-period evolution of `psi` starting at `t = 0`.
pub fn evolve_period(
    psi: &WaveFunction,
    params: &ModelParams,
    steps_per_period: usize,
    beta_schedule: Option<BetaSchedule>,
) -> Result<WaveFunction> {
    let mut prop = Propagator::new(params, &psi.grid, steps_per_period)?;
    let mut out = psi.clone();
    let schedule = beta_schedule.unwrap_or(BetaSchedule::Fixed(psi.beta));
    prop.evolve(&mut out, 0.0, 1, &schedule);
    Ok(out)
}

/// Evolution for an arbitrary `duration` in the static lattice of depth
/// `gamma` (no modulation), split into `steps` Strang steps.
pub fn evolve_static(psi: &mut WaveFunction, gamma: f64, hbar_eff: f64, duration: f64, steps: usize) -> Result<()> {
    if !(hbar_eff > 0.0 && duration >= 0.0 && steps >= 1 && gamma.is_finite()) {
        return Err(Error::ParameterDomain(format!(
            "static evolution needs hbar_eff > 0, duration >= 0, steps >= 1 (got {hbar_eff}, {duration}, {steps})"
        )));
    }
    let grid = psi.grid.clone();
    let n = grid.n_points();
    let dt = duration / steps as f64;
    let inv_n = 1.0 / n as f64;
    let half: Vec<Complex64> = (0..n)
        .map(|k| {
            let q = grid.index_of_bin(k) as f64 + psi.beta;
            Complex64::from_polar(1.0, -hbar_eff * q * q * dt / 4.0)
        })
        .collect();
    let pot: Vec<Complex64> =
        grid.positions().iter().map(|x| Complex64::from_polar(inv_n, gamma * x.cos() * dt / hbar_eff)).collect();
    let mut scratch = vec![Complex64::default(); grid.scratch_len()];
    let f = &mut psi.amplitudes;
    grid.fft(f, &mut scratch);
    for _ in 0..steps {
        f.iter_mut().zip(&half).for_each(|(a, k)| *a *= k);
        grid.ifft(f, &mut scratch);
        f.iter_mut().zip(&pot).for_each(|(a, v)| *a *= v);
        grid.fft(f, &mut scratch);
        f.iter_mut().zip(&half).for_each(|(a, k)| *a *= k);
    }
    grid.ifft(f, &mut scratch);
    f.iter_mut().for_each(|a| *a *= inv_n);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::PhaseState;
    use crate::floquet::coherent_state;

    fn setup(h: f64, beta: f64) -> (ModelParams, SpatialGrid, WaveFunction) {
        let p = ModelParams::new(0.25, 0.4, h, beta).unwrap();
        let g = SpatialGrid::new(128).unwrap();
        let psi = coherent_state(PhaseState::new(0.0, 1.296), 0.3, beta, h, &g).unwrap();
        (p, g, psi)
    }

    #[test]
    fn free_evolution_is_diagonal() {
        let (p, g, psi) = setup(0.2, 0.13);
        let p = p.with_gamma(0.0);
        let out = evolve_period(&psi, &p, 64, None).unwrap();
        let (a, b) = (psi.momentum(), out.momentum());
        for ((ca, cb), j) in a.iter().zip(&b).zip(g.momentum_indices()) {
            assert!((ca.norm() - cb.norm()).abs() < 1e-12);
            if ca.norm() > 1e-6 {
                // phase exp(-i hbar (j+beta)^2 T / 2)
                let q = j as f64 + 0.13;
                let expected = *ca * Complex64::from_polar(1.0, -0.2 * q * q * TAU / 2.0);
                assert!((cb - expected).norm() < 1e-10, "j={j}");
            }
        }
    }

    #[test]
    fn norm_preserved_long_run() {
        let (p, g, mut psi) = setup(0.2, 0.0);
        let mut prop = Propagator::new(&p, &g, 64).unwrap();
        prop.evolve(&mut psi, 0.0, 10_000, &BetaSchedule::Fixed(0.0));
        assert!((psi.norm_squared() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn second_order_in_time_step() {
        let (p, g, psi) = setup(0.2, 0.05);
        let run = |steps: usize| {
            let mut prop = Propagator::new(&p, &g, steps).unwrap();
            let mut s = psi.clone();
            prop.evolve(&mut s, 0.0, 3, &BetaSchedule::Fixed(0.05));
            s
        };
        let reference = run(2048);
        let err = |s: &WaveFunction| {
            s.amplitudes.iter().zip(&reference.amplitudes).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
        };
        let ratio = err(&run(64)) / err(&run(128));
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn drifting_matches_fixed_when_rate_zero() {
        let (p, g, psi) = setup(0.2, 0.1);
        let mut prop = Propagator::new(&p, &g, 64).unwrap();
        let (mut a, mut b) = (psi.clone(), psi.clone());
        prop.evolve(&mut a, 0.0, 2, &BetaSchedule::Fixed(0.1));
        prop.evolve(&mut b, 0.0, 2, &BetaSchedule::Linear { initial: 0.1, rate: 0.0 });
        assert!(a.amplitudes.iter().zip(&b.amplitudes).all(|(x, y)| (x - y).norm() < 1e-12));
    }

    #[test]
    fn drifting_kinetic_recurrence_matches_direct_phase() {
        let (p, g, psi) = setup(0.2, 0.0);
        let p = p.with_gamma(0.0);
        let rate = 0.01;
        let sched = BetaSchedule::Linear { initial: 0.0, rate };
        let out = {
            let mut prop = Propagator::new(&p, &g, 64).unwrap();
            let mut s = psi.clone();
            prop.evolve(&mut s, 0.0, 1, &sched);
            s
        };
        // analytic: phase -hbar/2 * integral of (j + beta(t))^2 with the midpoint rule
        let dt = TAU / 64.0;
        let a = psi.momentum();
        let b = g.to_momentum(&out.amplitudes);
        for ((ca, cb), j) in a.iter().zip(&b).zip(g.momentum_indices()) {
            if ca.norm() < 1e-6 {
                continue;
            }
            let phase: f64 = (0..64)
                .map(|k| {
                    let q = j as f64 + sched.at((k as f64 + 0.5) * dt);
                    -0.2 * q * q * dt / 2.0
                })
                .sum();
            assert!((cb - ca * Complex64::from_polar(1.0, phase)).norm() < 1e-10);
        }
        assert!((out.beta + rate * TAU).abs() < 1e-12);
    }

    #[test]
    fn too_few_steps_rejected() {
        let (p, g, _) = setup(0.2, 0.0);
        assert!(Propagator::new(&p, &g, 32).is_err());
    }
}
