use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::units::ModelParams;

use super::PhaseState;

/// Composition weights of the symplectic scheme built from kick-drift-kick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Second order kick-drift-kick.
    #[default]
    Strang,
    /// Fourth order triple jump.
    Yoshida4,
    /// Sixth order composition (Yoshida, solution A).
    Yoshida6,
}

impl Scheme {
    fn weights(self) -> &'static [f64] {
        const Y4: [f64; 3] = {
            // w1 = 1/(2 - 2^(1/3)), w0 = 1 - 2 w1
            let w1 = 1.351_207_191_959_657_8;
            [w1, 1.0 - 2.0 * w1, w1]
        };
        const Y6: [f64; 7] = {
            let w1 = -1.177_679_984_178_87;
            let w2 = 0.235_573_213_359_357;
            let w3 = 0.784_513_610_477_560;
            let w0 = 1.0 - 2.0 * (w1 + w2 + w3);
            [w3, w2, w1, w0, w1, w2, w3]
        };
        match self {
            Scheme::Strang => &[1.0],
            Scheme::Yoshida4 => &Y4,
            Scheme::Yoshida6 => &Y6,
        }
    }
}

/// Symplectic integrator of `x' = p`, `p' = -gamma (1 + eps cos t) sin x`.
///
/// The step always divides the modulation period, so stroboscopic samples
/// land exactly on multiples of `2 pi`.
#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    gamma: f64,
    epsilon: f64,
    steps_per_period: usize,
    step: f64,
    scheme: Scheme,
}

/// Default resolution of the classical map.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 256;

impl Integrator {
    pub fn new(params: &ModelParams, steps_per_period: usize) -> Result<Self> {
        if steps_per_period == 0 {
            return Err(Error::Configuration("steps_per_period must be >= 1".into()));
        }
        Ok(Self {
            gamma: params.gamma,
            epsilon: params.epsilon,
            steps_per_period,
            step: TAU / steps_per_period as f64,
            scheme: Scheme::Strang,
        })
    }

    /// Integrator with a step given in time units; the step must divide `2 pi`.
    pub fn with_step(params: &ModelParams, step: f64) -> Result<Self> {
        let n = steps_for(step)?;
        Self::new(params, n)
    }

    pub fn scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps_per_period
    }

    #[inline]
    fn force(&self, x: f64, t: f64) -> f64 {
        -self.gamma * (1.0 + self.epsilon * t.cos()) * x.sin()
    }

    #[inline]
    fn force_derivative(&self, x: f64, t: f64) -> f64 {
        -self.gamma * (1.0 + self.epsilon * t.cos()) * x.cos()
    }

    /// One kick-drift-kick of length `h` starting at time `t`.
    #[inline]
    fn kdk(&self, s: &mut PhaseState, t: f64, h: f64) {
        s.p += 0.5 * h * self.force(s.x, t);
        s.x += h * s.p;
        s.p += 0.5 * h * self.force(s.x, t + h);
    }

    #[inline]
    fn kdk_tangent(&self, s: &mut PhaseState, v: &mut [f64; 2], t: f64, h: f64) {
        let k = self.force_derivative(s.x, t);
        s.p += 0.5 * h * self.force(s.x, t);
        v[1] += 0.5 * h * k * v[0];
        s.x += h * s.p;
        v[0] += h * v[1];
        let k = self.force_derivative(s.x, t + h);
        s.p += 0.5 * h * self.force(s.x, t + h);
        v[1] += 0.5 * h * k * v[0];
    }

    /// Advances `state` by one step from time `t`, returning the new time.
    pub fn advance(&self, state: &mut PhaseState, t: f64, h: f64) -> f64 {
        let mut tt = t;
        for &w in self.scheme.weights() {
            self.kdk(state, tt, w * h);
            tt += w * h;
        }
        t + h
    }

    fn advance_tangent(&self, state: &mut PhaseState, v: &mut [f64; 2], t: f64, h: f64) {
        let mut tt = t;
        for &w in self.scheme.weights() {
            self.kdk_tangent(state, v, tt, w * h);
            tt += w * h;
        }
    }

    /// Time-`2 pi` map starting at a multiple of the period.
    pub fn map(&self, mut state: PhaseState) -> PhaseState {
        let h = self.step;
        for k in 0..self.steps_per_period {
            self.advance(&mut state, k as f64 * h, h);
        }
        state
    }

    /// The map iterated `n` times.
    pub fn map_n(&self, mut state: PhaseState, n: usize) -> PhaseState {
        for _ in 0..n {
            state = self.map(state);
        }
        state
    }

    /// Map together with the image of a tangent vector.
    pub fn map_tangent(&self, mut state: PhaseState, v: &mut [f64; 2]) -> PhaseState {
        let h = self.step;
        for k in 0..self.steps_per_period {
            self.advance_tangent(&mut state, v, k as f64 * h, h);
        }
        state
    }

    /// Image of the `n`-fold map and its Jacobian `[[dx/dx0, dx/dp0], [dp/dx0, dp/dp0]]`.
    pub fn map_jacobian(&self, state: PhaseState, n: usize) -> (PhaseState, [[f64; 2]; 2]) {
        let mut a = [1.0, 0.0];
        let mut b = [0.0, 1.0];
        let mut s = state;
        let mut s2 = state;
        for _ in 0..n {
            s = self.map_tangent(s, &mut a);
            s2 = self.map_tangent(s2, &mut b);
        }
        debug_assert!((s.x - s2.x).abs() < 1e-12 * (1.0 + s.x.abs()));
        (s, [[a[0], b[0]], [a[1], b[1]]])
    }

    /// Runs from `t0` for `duration`, calling `observe(t, state)` after every step
    /// (and once for the initial state).
    pub fn run<F: FnMut(f64, &PhaseState)>(
        &self,
        initial: PhaseState,
        t0: f64,
        duration: f64,
        mut observe: F,
    ) -> PhaseState {
        let h = self.step;
        let n = (duration.abs() / h).round() as usize;
        let h = h.copysign(duration);
        let mut s = initial;
        observe(t0, &s);
        for k in 0..n {
            let t = t0 + k as f64 * h;
            self.advance(&mut s, t, h);
            observe(t + h, &s);
        }
        s
    }

    /// Pendulum energy at time `t` (conserved when epsilon = 0).
    pub fn energy(&self, s: &PhaseState, t: f64) -> f64 {
        0.5 * s.p * s.p - self.gamma * (1.0 + self.epsilon * t.cos()) * s.x.cos()
    }
}

fn steps_for(step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Configuration(format!("step must be > 0, got {step}")));
    }
    let n = TAU / step;
    let rounded = n.round();
    if rounded < 1.0 || (n - rounded).abs() > 1e-9 * n {
        return Err(Error::Configuration(format!("step {step} does not divide the period 2*pi (2*pi/step = {n})")));
    }
    Ok(rounded as usize)
}

/// Sampled trajectory.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
}

impl Trajectory {
    /// Samples that fall on multiples of the modulation period.
    pub fn stroboscopic(&self, steps_per_period: usize) -> Vec<PhaseState> {
        self.states.iter().step_by(steps_per_period).copied().collect()
    }
}

/// Integrates the classical pendulum from `t = 0`, recording every step.
pub fn integrate_trajectory(initial: PhaseState, params: &ModelParams, duration: f64, step: f64) -> Result<Trajectory> {
    params.validate()?;
    let integ = Integrator::with_step(params, step)?;
    let mut traj = Trajectory::default();
    integ.run(initial, 0.0, duration, |t, s| {
        traj.times.push(t);
        traj.states.push(*s);
    });
    Ok(traj)
}

/// Folds an angle into `[-pi, pi)`.
#[inline]
pub fn fold_angle(x: f64) -> f64 {
    let r = (x + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(g: f64, e: f64) -> ModelParams {
        ModelParams::classical(g, e).unwrap()
    }

    #[test]
    fn free_particle_keeps_momentum() {
        let traj = integrate_trajectory(PhaseState::new(0.3, 0.77), &params(0.0, 0.5), 10.0 * TAU, TAU / 64.0).unwrap();
        assert!(traj.states.iter().all(|s| s.p == 0.77));
        let last = traj.states.last().unwrap();
        assert!((last.x - (0.3 + 0.77 * 10.0 * TAU)).abs() < 1e-9);
    }

    #[test]
    fn step_must_divide_period() {
        assert!(integrate_trajectory(PhaseState::new(0.0, 0.0), &params(0.2, 0.2), 1.0, 0.1).is_err());
        assert!(integrate_trajectory(PhaseState::new(0.0, 0.0), &params(0.2, 0.2), 1.0, TAU / 100.0).is_ok());
    }

    #[test]
    fn stroboscopic_samples_on_period_multiples() {
        let traj = integrate_trajectory(PhaseState::new(1.0, 0.0), &params(0.25, 0.4), 3.0 * TAU, TAU / 32.0).unwrap();
        let strobe: Vec<f64> = traj.times.iter().step_by(32).copied().collect();
        assert_eq!(strobe.len(), 4);
        for (k, t) in strobe.iter().enumerate() {
            assert!((t - k as f64 * TAU).abs() < 1e-12);
        }
    }

    /// Largest energy excursion over `periods` periods of the unmodulated pendulum.
    fn energy_excursion(scheme: Scheme, periods: usize) -> (f64, f64, f64) {
        let p = params(0.25, 0.0);
        let integ = Integrator::new(&p, 256).unwrap().scheme(scheme);
        let s0 = PhaseState::new(1.0, 0.3);
        let e0 = integ.energy(&s0, 0.0);
        let mut max_all: f64 = 0.0;
        let mut max_first: f64 = 0.0;
        let mut max_last: f64 = 0.0;
        let total = periods * 256;
        let mut k = 0usize;
        integ.run(s0, 0.0, periods as f64 * TAU, |t, s| {
            let de = (integ.energy(s, t) - e0).abs();
            max_all = max_all.max(de);
            if k < total / 10 {
                max_first = max_first.max(de);
            }
            if k > total - total / 10 {
                max_last = max_last.max(de);
            }
            k += 1;
        });
        (max_all, max_first, max_last)
    }

    #[test]
    fn energy_conserved_without_modulation() {
        // second order: bounded O(h^2) shadow-energy oscillation, no drift
        let (all, first, last) = energy_excursion(Scheme::Strang, 10_000);
        assert!(all < 5e-5, "strang excursion {all}");
        assert!(last < 1.05 * first + 1e-12, "drift: first {first} last {last}");
        // same macro step, sixth order composition
        let (all6, _, _) = energy_excursion(Scheme::Yoshida6, 10_000);
        assert!(all6 < 1e-8, "yoshida6 excursion {all6}");
    }

    #[test]
    fn schemes_agree_and_converge() {
        let p = params(0.25, 0.4);
        let s0 = PhaseState::new(0.4, 0.9);
        let reference = Integrator::new(&p, 4096).unwrap().scheme(Scheme::Yoshida6).map(s0);
        let dist = |a: PhaseState| ((a.x - reference.x).powi(2) + (a.p - reference.p).powi(2)).sqrt();
        let e1 = dist(Integrator::new(&p, 128).unwrap().map(s0));
        let e2 = dist(Integrator::new(&p, 256).unwrap().map(s0));
        assert!((e1 / e2 - 4.0).abs() < 0.2, "order ratio {}", e1 / e2);
        let e4 = dist(Integrator::new(&p, 128).unwrap().scheme(Scheme::Yoshida4).map(s0));
        assert!(e4 < e1 / 100.0);
    }

    #[test]
    fn time_reversal() {
        let p = params(0.25, 0.4);
        let integ = Integrator::new(&p, 256).unwrap();
        let s0 = PhaseState::new(0.2, 1.3);
        let forward = integ.run(s0, 0.0, 20.0 * TAU, |_, _| {});
        let back = integ.run(forward, 20.0 * TAU, -20.0 * TAU, |_, _| {});
        assert!((back.x - s0.x).abs() < 1e-8 && (back.p - s0.p).abs() < 1e-8, "{back:?}");
    }

    #[test]
    fn stable_center_below_bifurcation() {
        let p = params(0.203, 0.29);
        let integ = Integrator::new(&p, 256).unwrap();
        let mut s = PhaseState::new(0.0, 0.0);
        for _ in 0..1000 {
            s = integ.map(s);
            assert!(s.x.abs() < 1e-6 && s.p.abs() < 1e-6);
        }
        // a slightly displaced start stays nearby as well
        let mut s = PhaseState::new(1e-4, 0.0);
        for _ in 0..2000 {
            s = integ.map(s);
            assert!(s.x.hypot(s.p) < 1e-3, "{s:?}");
        }
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let p = params(0.25, 0.4);
        let integ = Integrator::new(&p, 128).unwrap();
        let s0 = PhaseState::new(0.5, 0.8);
        let (_, j) = integ.map_jacobian(s0, 1);
        let h = 1e-6;
        let fx = |dx: f64, dp: f64| integ.map(PhaseState::new(s0.x + dx, s0.p + dp));
        let (a, b) = (fx(h, 0.0), fx(-h, 0.0));
        let (c, d) = (fx(0.0, h), fx(0.0, -h));
        let num =
            [[(a.x - b.x) / (2.0 * h), (c.x - d.x) / (2.0 * h)], [(a.p - b.p) / (2.0 * h), (c.p - d.p) / (2.0 * h)]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((num[i][k] - j[i][k]).abs() < 1e-6, "{num:?} vs {j:?}");
            }
        }
    }

    #[test]
    fn fold() {
        assert!((fold_angle(PI) + PI).abs() < 1e-15);
        assert!((fold_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((fold_angle(-0.2) + 0.2).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(20))]
            #[test]
            fn one_period_map_is_area_preserving(x in -3.0f64..3.0, p in -2.0f64..2.0) {
                let prm = params(0.25, 0.4);
                let integ = Integrator::new(&prm, 256).unwrap();
                let h = 1e-6;
                let f = |dx: f64, dp: f64| integ.map(PhaseState::new(x + dx, p + dp));
                let (a, b) = (f(h, 0.0), f(-h, 0.0));
                let (c, d) = (f(0.0, h), f(0.0, -h));
                let det = (a.x - b.x) * (c.p - d.p) / (4.0 * h * h) - (c.x - d.x) * (a.p - b.p) / (4.0 * h * h);
                prop_assert!((det - 1.0).abs() < 1e-6, "det = {}", det);
            }
        }
    }
}
