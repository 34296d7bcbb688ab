use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::classical::{fold_angle, PhaseState};
use crate::error::{Error, Result};
use crate::units::reduce_quasimomentum;

/// Uniform grid over one spatial period with its FFT plans.
#[derive(Clone)]
pub struct SpatialGrid {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpatialGrid").field("n_points", &self.n).finish()
    }
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl SpatialGrid {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 64 || !n_points.is_power_of_two() {
            return Err(Error::Configuration(format!("n_points must be a power of two >= 64, got {n_points}")));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n: n_points,
            forward: planner.plan_fft_forward(n_points),
            inverse: planner.plan_fft_inverse(n_points),
        })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn position(&self, k: usize) -> f64 {
        TAU * k as f64 / self.n as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.position(k)).collect()
    }

    /// Momentum index of FFT bin `k`.
    #[inline]
    pub fn index_of_bin(&self, k: usize) -> i64 {
        let h = self.n / 2;
        if k < h {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// FFT bin holding momentum index `j` in `[-n/2, n/2)`.
    #[inline]
    pub fn bin_of_index(&self, j: i64) -> usize {
        j.rem_euclid(self.n as i64) as usize
    }

    /// Momentum indices in ascending order `-n/2 .. n/2`.
    pub fn momentum_indices(&self) -> Vec<i64> {
        let h = self.n as i64 / 2;
        (-h..h).collect()
    }

    pub(crate) fn fft(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(data, scratch);
    }

    pub(crate) fn ifft(&self, data: &mut [Complex64], scratch: &mut [Complex64]) {
        self.inverse.process_with_scratch(data, scratch);
    }

    pub(crate) fn scratch_len(&self) -> usize {
        self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len())
    }

    /// Orthonormal momentum coefficients `c_j`, ordered `j = -n/2 .. n/2`,
    /// of position-space amplitudes normalized with `sum |u|^2 dx = 1`.
    pub fn to_momentum(&self, amplitudes: &[Complex64]) -> Vec<Complex64> {
        let mut buf = amplitudes.to_vec();
        let mut scratch = vec![Complex64::default(); self.scratch_len()];
        self.fft(&mut buf, &mut scratch);
        let scale = (TAU).sqrt() / self.n as f64;
        let h = self.n / 2;
        (0..self.n).map(|i| buf[(i + h) % self.n] * scale).collect()
    }

    /// Inverse of [`SpatialGrid::to_momentum`].
    pub fn to_position(&self, coefficients: &[Complex64]) -> Vec<Complex64> {
        let h = self.n / 2;
        let mut buf: Vec<Complex64> = (0..self.n).map(|k| coefficients[(k + h) % self.n]).collect();
        let mut scratch = vec![Complex64::default(); self.scratch_len()];
        self.ifft(&mut buf, &mut scratch);
        let scale = 1.0 / TAU.sqrt();
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }
}

/// Bloch-periodic part `u(x)` of a state in the quasimomentum sector `beta`,
/// sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub amplitudes: Vec<Complex64>,
    pub beta: f64,
    pub grid: SpatialGrid,
}

impl WaveFunction {
    pub fn new(grid: &SpatialGrid, amplitudes: Vec<Complex64>, beta: f64) -> Result<Self> {
        if amplitudes.len() != grid.n_points() {
            return Err(Error::Configuration(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.n_points()
            )));
        }
        Ok(Self { amplitudes, beta: reduce_quasimomentum(beta), grid: grid.clone() })
    }

    /// State from orthonormal momentum coefficients ordered `j = -n/2 .. n/2`.
    pub fn from_momentum(grid: &SpatialGrid, coefficients: &[Complex64], beta: f64) -> Result<Self> {
        if coefficients.len() != grid.n_points() {
            return Err(Error::Configuration("coefficient count does not match grid".into()));
        }
        Self::new(grid, grid.to_position(coefficients), beta)
    }

    pub fn momentum(&self) -> Vec<Complex64> {
        self.grid.to_momentum(&self.amplitudes)
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) {
        let s = 1.0 / self.norm_squared().sqrt();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
    }

    /// `<self|other>` with the grid measure.
    pub fn inner(&self, other: &WaveFunction) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.grid.dx()
    }

    /// Position expectation with `x` folded into `[-pi, pi)`.
    pub fn mean_x(&self) -> f64 {
        self.mean_x_around(0.0)
    }

    /// Position expectation with `x` folded into a cell centered on `x_ref`.
    /// A grid point on the cell edge counts half at each end, so the result
    /// is odd under reflection about `x_ref`.
    pub fn mean_x_around(&self, x_ref: f64) -> f64 {
        let dx = self.grid.dx();
        let offset = |k: usize| {
            let d = fold_angle(self.grid.position(k) - x_ref);
            if (d + PI).abs() < 1e-12 {
                0.0
            } else {
                d
            }
        };
        x_ref + self.amplitudes.iter().enumerate().map(|(k, a)| offset(k) * a.norm_sqr() * dx).sum::<f64>()
    }

    /// Physical momentum expectation `hbar (j + beta)`.
    pub fn mean_p(&self, hbar_eff: f64) -> f64 {
        self.momentum()
            .iter()
            .zip(self.grid.momentum_indices())
            .map(|(c, j)| hbar_eff * (j as f64 + self.beta) * c.norm_sqr())
            .sum()
    }

    /// `(Delta x, Delta p)` standard deviations; `x` folded around `x_ref`.
    pub fn widths(&self, hbar_eff: f64, x_ref: f64) -> (f64, f64) {
        let dx = self.grid.dx();
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (k, a) in self.amplitudes.iter().enumerate() {
            let x = fold_angle(self.grid.position(k) - x_ref);
            let w = a.norm_sqr() * dx;
            m1 += x * w;
            m2 += x * x * w;
        }
        let c = self.momentum();
        let js = self.grid.momentum_indices();
        let (mut q1, mut q2) = (0.0, 0.0);
        for (cj, j) in c.iter().zip(js) {
            let p = hbar_eff * (j as f64 + self.beta);
            q1 += p * cj.norm_sqr();
            q2 += p * p * cj.norm_sqr();
        }
        ((m2 - m1 * m1).max(0.0).sqrt(), (q2 - q1 * q1).max(0.0).sqrt())
    }

    /// Momentum-space probabilities ordered as [`SpatialGrid::momentum_indices`].
    pub fn momentum_populations(&self) -> Vec<f64> {
        self.momentum().iter().map(|c| c.norm_sqr()).collect()
    }

    const MAGIC: &'static [u8; 4] = b"CHTN";
    const VERSION: u32 = 1;

    /// Binary snapshot: 32-byte header (magic, version, n_points, beta, 8
    /// reserved bytes) then little-endian interleaved complex amplitudes.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = [0u8; 32];
        header[..4].copy_from_slice(Self::MAGIC);
        header[4..8].copy_from_slice(&Self::VERSION.to_le_bytes());
        header[8..16].copy_from_slice(&(self.grid.n_points() as u64).to_le_bytes());
        header[16..24].copy_from_slice(&self.beta.to_le_bytes());
        w.write_all(&header)?;
        let mut body = Vec::with_capacity(16 * self.amplitudes.len());
        for a in &self.amplitudes {
            body.extend_from_slice(&a.re.to_le_bytes());
            body.extend_from_slice(&a.im.to_le_bytes());
        }
        w.write_all(&body)?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header)?;
        if &header[..4] != Self::MAGIC {
            return Err(Error::Configuration("not a state snapshot (bad magic)".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != Self::VERSION {
            return Err(Error::Configuration(format!("unsupported snapshot version {version}")));
        }
        let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let beta = f64::from_le_bytes(header[16..24].try_into().unwrap());
        let grid = SpatialGrid::new(n)?;
        let mut body = vec![0u8; 16 * n];
        r.read_exact(&mut body)?;
        let amplitudes = body
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        WaveFunction::new(&grid, amplitudes, beta)
    }
}

/// Momentum coefficients of a coherent state, ordered `j = -n/2 .. n/2`.
pub(crate) fn coherent_coefficients(
    grid: &SpatialGrid,
    center: PhaseState,
    width_x: f64,
    beta: f64,
    hbar_eff: f64,
) -> Vec<Complex64> {
    let dp = hbar_eff / (2.0 * width_x);
    let mut c: Vec<Complex64> = grid
        .momentum_indices()
        .into_iter()
        .map(|j| {
            let q = j as f64 + beta;
            let g = -(hbar_eff * q - center.p).powi(2) / (4.0 * dp * dp);
            Complex64::from_polar(g.exp(), -q * center.x)
        })
        .collect();
    let norm = c.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    c.iter_mut().for_each(|a| *a /= norm);
    c
}

/// Minimum-uncertainty Gaussian of position width `width_x`, periodized over the cell.
pub fn coherent_state(
    center: PhaseState,
    width_x: f64,
    beta: f64,
    hbar_eff: f64,
    grid: &SpatialGrid,
) -> Result<WaveFunction> {
    if !(width_x > 0.0) {
        return Err(Error::ParameterDomain(format!("width_x must be > 0, got {width_x}")));
    }
    if width_x >= PI {
        return Err(Error::IllLocalized { width: width_x, limit: PI });
    }
    if !(hbar_eff > 0.0) {
        return Err(Error::ParameterDomain(format!("hbar_eff must be > 0, got {hbar_eff}")));
    }
    let beta = reduce_quasimomentum(beta);
    let c = coherent_coefficients(grid, center, width_x, beta, hbar_eff);
    WaveFunction::from_momentum(grid, &c, beta)
}

/// Position width of the coherent state with momentum width `dp`.
pub fn width_for_momentum_spread(dp: f64, hbar_eff: f64) -> f64 {
    hbar_eff / (2.0 * dp)
}

/// Isotropic coherent-state width in scaled units, `sqrt(hbar/2)`.
pub fn isotropic_width(hbar_eff: f64) -> f64 {
    (0.5 * hbar_eff).sqrt()
}

/// Phase-space sampling window for Husimi maps.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseGrid {
    pub nx: usize,
    pub np: usize,
    pub p_min: f64,
    pub p_max: f64,
}

impl PhaseGrid {
    pub fn x(&self, i: usize) -> f64 {
        -PI + TAU * i as f64 / self.nx as f64
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + (self.p_max - self.p_min) * j as f64 / (self.np - 1).max(1) as f64
    }

    /// Phase-space cell measure `dx dp / (2 pi hbar)`.
    pub fn measure(&self, hbar_eff: f64) -> f64 {
        let dp = (self.p_max - self.p_min) / (self.np - 1).max(1) as f64;
        TAU / self.nx as f64 * dp / (TAU * hbar_eff)
    }
}

/// Overlap `<coherent(center)|psi>`.
pub fn coherent_overlap(psi: &WaveFunction, center: PhaseState, width_x: f64, hbar_eff: f64) -> Complex64 {
    let c = coherent_coefficients(&psi.grid, center, width_x, psi.beta, hbar_eff);
    c.iter().zip(psi.momentum()).map(|(a, b)| a.conj() * b).sum()
}

/// Husimi distribution `|<coherent(x,p)|psi>|^2`, indexed `[i * np + j]`.
pub fn husimi(psi: &WaveFunction, grid: &PhaseGrid, hbar_eff: f64, width_x: f64) -> Result<Vec<f64>> {
    if grid.nx == 0 || grid.np < 2 || !(grid.p_max > grid.p_min) {
        return Err(Error::Configuration(format!("invalid phase grid {grid:?}")));
    }
    if !(width_x > 0.0 && width_x < PI) {
        return Err(Error::IllLocalized { width: width_x, limit: PI });
    }
    let c = psi.momentum();
    let js = psi.grid.momentum_indices();
    let dp = hbar_eff / (2.0 * width_x);
    let mut out = vec![0.0; grid.nx * grid.np];
    for j in 0..grid.np {
        let p0 = grid.p(j);
        // Gaussian envelope times state, then phases e^{i q x0} per x0
        let mut norm = 0.0;
        let weights: Vec<(f64, Complex64)> = js
            .iter()
            .zip(&c)
            .map(|(&jj, cj)| {
                let q = jj as f64 + psi.beta;
                let g = (-(hbar_eff * q - p0).powi(2) / (4.0 * dp * dp)).exp();
                norm += g * g;
                (q, cj * g)
            })
            .collect();
        let norm = norm.sqrt();
        for i in 0..grid.nx {
            let x0 = grid.x(i);
            let s: Complex64 = weights.iter().map(|(q, w)| w * Complex64::from_polar(1.0, q * x0)).sum();
            out[i * grid.np + j] = s.norm_sqr() / (norm * norm);
        }
    }
    Ok(out)
}
