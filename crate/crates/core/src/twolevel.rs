//! Two-level models: asymmetric doublet, Landau-Zener crossing and the
//! exponential fit used to read a splitting off final momenta.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `H = [[E0 + A/2, delta/2], [delta/2, E0 - A/2]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubletModel {
    pub base_energy: f64,
    pub asymmetry: f64,
    pub coupling: f64,
}

impl DoubletModel {
    pub fn new(base_energy: f64, asymmetry: f64, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::ParameterDomain(format!("splitting must be >= 0, got {delta}")));
        }
        Ok(Self { base_energy, asymmetry, coupling: 0.5 * delta })
    }

    pub fn delta(&self) -> f64 {
        2.0 * self.coupling
    }
}

/// Tunneling period and the fraction of the population that tunnels.
pub fn asymmetric_doublet(model: &DoubletModel, hbar_eff: f64) -> Result<(f64, f64)> {
    let d = model.delta();
    let a = model.asymmetry;
    let r2 = d * d + a * a;
    if r2 == 0.0 {
        return Err(Error::UndefinedPeriod);
    }
    Ok((hbar_eff / r2.sqrt(), d * d / r2))
}

/// Asymmetry of the momentum islands at quasimomentum `beta`: `2 v hbar beta`.
pub fn island_asymmetry(velocity: f64, hbar_eff: f64, beta: f64) -> f64 {
    2.0 * velocity * hbar_eff * beta
}

/// Linear sweep of the quasimomentum through the avoided crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LzConfig {
    pub beta0: f64,
    pub n_acc: f64,
    pub p_star: f64,
    pub hbar_eff: f64,
    pub delta: f64,
}

impl LzConfig {
    pub fn validate(&self) -> Result<()> {
        let ok =
            [self.beta0, self.n_acc, self.p_star, self.hbar_eff, self.delta].iter().all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(Error::ParameterDomain(format!("LZ parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `d beta / dt`; the sweep covers `2 beta0` in `2 pi n_acc`.
    pub fn drift_rate(&self) -> f64 {
        -self.beta0 / (PI * self.n_acc)
    }

    /// Constant force of the accelerated frame, `F = -hbar d beta/dt`.
    pub fn force(&self) -> f64 {
        -self.hbar_eff * self.drift_rate()
    }

    /// Time at which an atom starting at `beta_ini` reaches `beta = 0`.
    pub fn crossing_time(&self, beta_ini: f64) -> f64 {
        PI * self.n_acc * beta_ini / self.beta0
    }

    /// Rescaled Planck constant of the crossing.
    pub fn frak_h(&self) -> f64 {
        4.0 * self.hbar_eff * self.p_star * self.force() / (self.delta * self.delta)
    }

    /// Rescaled time `2 p* F t / delta`.
    pub fn rescaled_time(&self, t: f64) -> f64 {
        2.0 * self.p_star * self.force() * t / self.delta
    }

    /// Exponent per period of acceleration: stay probability `exp(-alpha n_acc)`.
    pub fn alpha(&self) -> f64 {
        PI * PI * self.delta * self.delta / (4.0 * self.beta0 * self.p_star * self.hbar_eff * self.hbar_eff)
    }
}

/// Analytic probability of staying in the initial diabatic state.
pub fn lz_stay_probability(frak_h: f64) -> f64 {
    (-PI / frak_h).exp()
}

/// Final mean momentum of the two-band model after the sweep.
pub fn lz_final_momentum(n_acc: f64, delta: f64, p_star: f64, beta0: f64, hbar_eff: f64) -> f64 {
    let cfg = LzConfig { beta0, n_acc, p_star, hbar_eff, delta };
    -p_star * (1.0 - 2.0 * (-cfg.alpha() * n_acc).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdeSettings {
    /// Integration runs over rescaled time `[-horizon, horizon]`.
    pub horizon: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Trace samples retained (uniform in rescaled time).
    pub samples: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self { horizon: 50.0, rtol: 1e-10, atol: 1e-12, max_steps: 50_000_000, samples: 401 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LzOutcome {
    pub frak_h: f64,
    pub stay_analytic: f64,
    pub transfer_analytic: f64,
    /// Stay probability from the integrated equation, as adiabatic population at `+horizon`.
    pub stay_ode: f64,
    /// Rescaled times and initial-diabatic-state population along the run.
    pub times: Vec<f64>,
    pub stay_trace: Vec<f64>,
}

type State = [Complex64; 2];

fn lz_rhs(t: f64, y: &State, h: f64) -> State {
    // i h dy/dt = [[t, 1], [1, -t]] y
    let k = Complex64::new(0.0, -1.0 / h);
    [k * (y[0] * t + y[1]), k * (y[0] - y[1] * t)]
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Adaptive Dormand-Prince integration of a two-component system, calling
/// `sample(t, y)` whenever `t` passes one of `sample_times` (ascending).
fn dopri<F: Fn(f64, &State) -> State>(
    f: F,
    t0: f64,
    t1: f64,
    y0: State,
    s: &OdeSettings,
    sample_times: &[f64],
    mut sample: impl FnMut(f64, &State),
) -> Result<State> {
    let mut t = t0;
    let mut y = y0;
    let mut h = 1e-3 * (t1 - t0).abs().max(1e-6);
    let mut next = 0;
    let mut steps = 0;
    while next < sample_times.len() && sample_times[next] <= t0 {
        sample(t0, &y);
        next += 1;
    }
    while t < t1 {
        if steps > s.max_steps {
            return Err(Error::Numerical(format!("LZ integration exceeded {} steps", s.max_steps)));
        }
        steps += 1;
        let target = if next < sample_times.len() { sample_times[next].min(t1) } else { t1 };
        let hh = h.min(target - t);
        let mut k = [[Complex64::default(); 2]; 7];
        for i in 0..7 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(i) {
                let a = A[i][j];
                if a != 0.0 {
                    yi[0] += kj[0] * (a * hh);
                    yi[1] += kj[1] * (a * hh);
                }
            }
            k[i] = f(t + C[i] * hh, &yi);
        }
        let mut y5 = y;
        let mut err: f64 = 0.0;
        for c in 0..2 {
            let mut e = Complex64::default();
            for i in 0..7 {
                y5[c] += k[i][c] * (B5[i] * hh);
                e += k[i][c] * ((B5[i] - B4[i]) * hh);
            }
            let scale = s.atol + s.rtol * y[c].norm().max(y5[c].norm());
            err = err.max(e.norm() / scale);
        }
        if !err.is_finite() {
            return Err(Error::Numerical("non-finite LZ integration error".into()));
        }
        if err <= 1.0 {
            t += hh;
            y = y5;
            if next < sample_times.len() && t >= sample_times[next] - 1e-12 * sample_times[next].abs().max(1.0) {
                sample(t, &y);
                next += 1;
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = hh * factor;
        if h < 1e-14 * (t1 - t0).abs() {
            return Err(Error::Numerical(format!("LZ step size underflow at t = {t}")));
        }
    }
    Ok(y)
}

/// Adiabatic eigenvectors of `[[t, 1], [1, -t]]`, (upper, lower).
fn adiabatic(t: f64) -> (State, State) {
    let r = (t * t + 1.0).sqrt();
    let norm = |v: [f64; 2]| {
        let n = v[0].hypot(v[1]);
        [Complex64::new(v[0] / n, 0.0), Complex64::new(v[1] / n, 0.0)]
    };
    // (H - E) v = 0 with v = (1, E - t)
    let up = norm([1.0, r - t]);
    let lo = norm([1.0, -r - t]);
    (up, lo)
}

fn overlap2(a: &State, b: &State) -> f64 {
    (a[0].conj() * b[0] + a[1].conj() * b[1]).norm_sqr()
}

/// Landau-Zener crossing in rescaled form, analytic and integrated.
pub fn lz_transition_rescaled(frak_h: f64, s: &OdeSettings) -> Result<LzOutcome> {
    if !(frak_h > 0.0 && frak_h.is_finite()) {
        return Err(Error::ParameterDomain(format!("rescaled hbar must be > 0, got {frak_h}")));
    }
    if !(s.horizon >= 20.0) {
        return Err(Error::Configuration(format!("LZ horizon must be >= 20, got {}", s.horizon)));
    }
    let t0 = -s.horizon;
    // initial diabatic state (0, 1) is the upper adiabatic state far before the crossing
    let (up0, lo0) = adiabatic(t0);
    let y0 = if overlap2(&up0, &[Complex64::default(), Complex64::new(1.0, 0.0)]) >= 0.5 { up0 } else { lo0 };
    let n = s.samples.max(2);
    let sample_times: Vec<f64> = (0..n).map(|i| t0 + 2.0 * s.horizon * i as f64 / (n - 1) as f64).collect();
    let mut times = Vec::with_capacity(n);
    let mut stay_trace = Vec::with_capacity(n);
    let yf = dopri(
        |t, y| lz_rhs(t, y, frak_h),
        t0,
        s.horizon,
        y0,
        s,
        &sample_times,
        |t, y| {
            times.push(t);
            stay_trace.push(y[1].norm_sqr());
        },
    )?;
    // the diabatic state (0, 1) is the lower adiabatic state after the crossing
    let (upf, lof) = adiabatic(s.horizon);
    let diabatic = [Complex64::default(), Complex64::new(1.0, 0.0)];
    let target = if overlap2(&lof, &diabatic) >= 0.5 { lof } else { upf };
    let stay = lz_stay_probability(frak_h);
    Ok(LzOutcome {
        frak_h,
        stay_analytic: stay,
        transfer_analytic: 1.0 - stay,
        stay_ode: overlap2(&target, &yf),
        times,
        stay_trace,
    })
}

/// Landau-Zener crossing for a physical sweep configuration.
pub fn lz_transition(config: &LzConfig, s: &OdeSettings) -> Result<LzOutcome> {
    config.validate()?;
    lz_transition_rescaled(config.frak_h(), s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LzFit {
    pub amplitude: f64,
    pub rate: f64,
    pub extracted_delta: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub beta0: f64,
    pub hbar_eff: f64,
}

/// Splitting from the fitted amplitude and rate.
pub fn delta_from_fit(amplitude: f64, rate: f64, beta0: f64, hbar_eff: f64) -> f64 {
    (4.0 * beta0 * amplitude * rate * hbar_eff * hbar_eff / (PI * PI)).max(0.0).sqrt()
}

fn model(a: f64, b: f64, x: f64) -> f64 {
    -a * (1.0 - 2.0 * (-b * x).exp())
}

fn rms(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    (points.iter().map(|&(x, y)| (y - model(a, b, x)).powi(2)).sum::<f64>() / points.len() as f64).sqrt()
}

/// Levenberg-Marquardt in `(A, ln B)`; returns `(A, B)` when converged.
fn levenberg_marquardt(points: &[(f64, f64)], a0: f64, b0: f64) -> Option<(f64, f64)> {
    let mut a = a0;
    let mut lb = b0.ln();
    let mut lambda = 1e-3;
    let cost = |a: f64, lb: f64| points.iter().map(|&(x, y)| (y - model(a, lb.exp(), x)).powi(2)).sum::<f64>();
    let mut c = cost(a, lb);
    for _ in 0..500 {
        let b = lb.exp();
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for &(x, y) in points {
            let e = (-b * x).exp();
            let r = y - model(a, b, x);
            // derivatives of the model
            let da = -(1.0 - 2.0 * e);
            let dlb = -2.0 * a * e * x * b;
            let jrow = [da, dlb];
            for i in 0..2 {
                jtr[i] += jrow[i] * r;
                for k in 0..2 {
                    jtj[i][k] += jrow[i] * jrow[k];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let m = [[jtj[0][0] * (1.0 + lambda), jtj[0][1]], [jtj[1][0], jtj[1][1] * (1.0 + lambda)]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.abs() < 1e-300 || !det.is_finite() {
                return None;
            }
            let da = (m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det;
            let dlb = (-m[1][0] * jtr[0] + m[0][0] * jtr[1]) / det;
            let (na, nlb) = (a + da, (lb + dlb).clamp(-60.0, 10.0));
            let nc = cost(na, nlb);
            if nc.is_finite() && nc <= c {
                let small = (da.abs() <= 1e-13 * a.abs().max(1e-300)) && dlb.abs() <= 1e-12;
                let rel = (c - nc) <= 1e-15 * c.max(1e-300);
                a = na;
                lb = nlb;
                c = nc;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if small || rel {
                    return Some((a, lb.exp()));
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step left: stationary point
            return Some((a, lb.exp()));
        }
    }
    Some((a, lb.exp()))
}

/// Fit of `y = -A (1 - 2 exp(-B x))` to `(n_acc, <p>_final)` points.
pub fn lz_fit(points: &[(f64, f64)], beta0: f64, hbar_eff: f64) -> Result<LzFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientData { needed: 4, got: points.len() });
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::ParameterDomain("n_acc must be > 0 and data finite".into()));
    }
    if !(beta0 > 0.0 && hbar_eff > 0.0) {
        return Err(Error::ParameterDomain("beta0 and hbar_eff must be > 0".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let (x_min, x_max) = (pts[0].0, pts[pts.len() - 1].0);
    if x_max < 10.0 * x_min {
        return Err(Error::InsufficientData { needed: 10, got: (x_max / x_min) as usize });
    }
    let scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    if pts.iter().all(|p| (p.1 - pts[0].1).abs() <= 1e-12 * scale.max(1e-300)) {
        return Err(Error::FitFailure {
            reason: "data carry no dependence on n_acc; rate unidentifiable".into(),
            best_residual: 0.0,
        });
    }

    // starting guesses: amplitude from the slowest sweep, rate from the fastest ones
    let a_guess = -pts[pts.len() - 1].1;
    let a_guess = if a_guess.abs() > 1e-12 { a_guess } else { scale };
    let mut starts = Vec::new();
    for &(x, y) in pts.iter().take(2).chain(pts.iter().rev().take(2)) {
        let e = 0.5 * (1.0 + y / a_guess);
        if e > 0.0 && e < 1.0 {
            starts.push((a_guess, -e.ln() / x));
        }
    }
    for k in 0..100usize.saturating_sub(starts.len()) {
        let bx = 10f64.powf(-3.0 + 6.0 * k as f64 / 99.0);
        let a = if k % 2 == 0 { a_guess } else { -a_guess };
        starts.push((a, bx / x_max.sqrt() / x_min.sqrt()));
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for &(a0, b0) in starts.iter().take(100) {
        if !(b0 > 0.0 && b0.is_finite()) {
            continue;
        }
        if let Some((a, b)) = levenberg_marquardt(&pts, a0, b0) {
            let r = rms(&pts, a, b);
            if r.is_finite() && best.is_none_or(|(_, _, br)| r < br) {
                best = Some((a, b, r));
            }
        }
    }
    let (a, b, r) =
        best.ok_or_else(|| Error::FitFailure { reason: "no start converged".into(), best_residual: f64::INFINITY })?;
    if !(a * b > 0.0) {
        return Err(Error::FitFailure {
            reason: format!("A B = {:e} gives no real splitting", a * b),
            best_residual: r,
        });
    }
    // the rate is only identified when some exponential is neither ~1 nor ~0
    if b * x_min > 40.0 || b * x_max < 1e-6 {
        return Err(Error::FitFailure {
            reason: format!("rate B = {b:e} not identified by n_acc in [{x_min}, {x_max}]"),
            best_residual: r,
        });
    }
    Ok(LzFit {
        amplitude: a,
        rate: b,
        extracted_delta: delta_from_fit(a, b, beta0, hbar_eff),
        residual: r,
        beta0,
        hbar_eff,
    })
}
