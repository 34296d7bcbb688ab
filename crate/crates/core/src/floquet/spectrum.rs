use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::{IslandInfo, PhaseState};
use crate::error::{Error, Result};
use crate::units::ModelParams;

use super::grid::{coherent_coefficients, isotropic_width, SpatialGrid, WaveFunction};
use super::propagate::Propagator;

/// One-period propagator in the orthonormal momentum basis ordered
/// `j = -n/2 .. n/2`, with the parity-reduced blocks when `beta = 0`.
#[derive(Debug, Clone)]
pub struct PropagatorMatrix {
    pub one_period: DMatrix<Complex64>,
    pub map_period: usize,
    pub beta: f64,
    pub hbar_eff: f64,
    pub steps_per_period: usize,
    blocks: Option<ParityBlocks>,
}

#[derive(Debug, Clone)]
struct ParityBlocks {
    even_basis: DMatrix<Complex64>,
    odd_basis: DMatrix<Complex64>,
    even: DMatrix<Complex64>,
    odd: DMatrix<Complex64>,
}

impl PropagatorMatrix {
    pub fn dim(&self) -> usize {
        self.one_period.nrows()
    }

    /// The operator over `map_period` periods.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        match self.map_period {
            1 => self.one_period.clone(),
            _ => &self.one_period * &self.one_period,
        }
    }

    /// `max |(U^dagger U - I)_ij|`.
    pub fn unitarity_defect(&self) -> f64 {
        let u = self.matrix();
        let p = u.adjoint() * &u;
        let mut m: f64 = 0.0;
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                let e = if i == j { p[(i, j)] - 1.0 } else { p[(i, j)] };
                m = m.max(e.norm());
            }
        }
        m
    }

    pub fn has_parity_blocks(&self) -> bool {
        self.blocks.is_some()
    }
}

/// Basis of the even and odd sectors of `j -> -j` on a grid of `n` momenta.
fn parity_bases(n: usize) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let h = n / 2;
    let pos = |j: i64| (j + h as i64) as usize;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut even = DMatrix::zeros(n, h + 1);
    let mut odd = DMatrix::zeros(n, h - 1);
    even[(pos(0), 0)] = Complex64::new(1.0, 0.0);
    even[(pos(-(h as i64)), 1)] = Complex64::new(1.0, 0.0);
    for j in 1..h as i64 {
        let c = (j - 1) as usize;
        even[(pos(j), c + 2)] = Complex64::new(s, 0.0);
        even[(pos(-j), c + 2)] = Complex64::new(s, 0.0);
        odd[(pos(j), c)] = Complex64::new(s, 0.0);
        odd[(pos(-j), c)] = Complex64::new(-s, 0.0);
    }
    (even, odd)
}

/// Propagator matrix built column by column from plane waves.
pub fn propagator_matrix(
    params: &ModelParams,
    grid: &SpatialGrid,
    steps_per_period: usize,
    map_period: usize,
) -> Result<PropagatorMatrix> {
    if !(map_period == 1 || map_period == 2) {
        return Err(Error::Configuration(format!("map_period must be 1 or 2, got {map_period}")));
    }
    let mut prop = Propagator::new(params, grid, steps_per_period)?;
    let n = grid.n_points();
    let mut u = DMatrix::<Complex64>::zeros(n, n);
    let mut col = vec![Complex64::default(); n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = Complex64::default());
        col[j] = Complex64::new(1.0, 0.0);
        prop.apply_momentum(&mut col, params.beta);
        u.column_mut(j).copy_from_slice(&col);
    }
    let blocks = (params.beta == 0.0).then(|| {
        let (eb, ob) = parity_bases(n);
        let even = eb.adjoint() * &u * &eb;
        let odd = ob.adjoint() * &u * &ob;
        ParityBlocks { even_basis: eb, odd_basis: ob, even, odd }
    });
    Ok(PropagatorMatrix {
        one_period: u,
        map_period,
        beta: params.beta,
        hbar_eff: params.hbar_eff,
        steps_per_period,
        blocks,
    })
}

/// Eigenvalues and orthonormal eigenvectors of a unitary matrix.
fn unitary_eigen(m: &DMatrix<Complex64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let n = m.nrows();
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-14, 100 * n.max(10))
        .ok_or_else(|| Error::Numerical(format!("Schur decomposition of a {n}x{n} propagator did not converge")))?;
    let (q, t) = schur.unpack();
    // a normal matrix has a diagonal Schur form
    let mut off: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            off = off.max(t[(i, j)].norm());
        }
    }
    if off > 1e-6 {
        return Err(Error::Numerical(format!(
            "propagator is not normal to tolerance: largest off-diagonal Schur entry {off:e}"
        )));
    }
    Ok(((0..n).map(|i| t[(i, i)]).collect(), q))
}

/// Options for tagging Floquet states by coherent-state overlap.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TagSettings {
    /// Position width of the tagging coherent state; isotropic when `None`.
    pub width_x: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FloquetSpectrum {
    /// Quasienergies in `[0, hbar_eff / map_period)`.
    pub quasienergies: Vec<f64>,
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvectors as columns, momentum basis ordered `j = -n/2 .. n/2`.
    pub states: DMatrix<Complex64>,
    /// `island_tags[n][i]` = overlap weight of state `n` with island `i`.
    pub island_tags: Vec<Vec<f64>>,
    /// `<psi|Pi_x|psi>` for `(x, p) -> (-x, -p)`; only defined at `beta = 0`.
    pub parity: Option<Vec<f64>>,
    pub zone: f64,
    pub map_period: usize,
    pub beta: f64,
    pub hbar_eff: f64,
}

impl FloquetSpectrum {
    pub fn len(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quasienergies.is_empty()
    }

    pub fn state(&self, n: usize, grid: &SpatialGrid) -> Result<WaveFunction> {
        let c: Vec<Complex64> = self.states.column(n).iter().copied().collect();
        WaveFunction::from_momentum(grid, &c, self.beta)
    }

    /// Summed tag over all islands.
    pub fn total_tag(&self, n: usize) -> f64 {
        self.island_tags[n].iter().sum()
    }

    /// State indices sorted by decreasing total tag.
    pub fn ranked_by_tag(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.total_tag(b).partial_cmp(&self.total_tag(a)).unwrap());
        idx
    }

    /// Expansion coefficients `<phi_n|psi>` of a state in this sector.
    pub fn project(&self, psi: &WaveFunction) -> Vec<Complex64> {
        let c = nalgebra::DVector::from_vec(psi.momentum());
        (self.states.adjoint() * c).iter().copied().collect()
    }
}

/// Quasienergy `-hbar arg(lambda) / 2 pi` reduced to `[0, zone)`.
pub fn quasienergy(eigenvalue: Complex64, hbar_eff: f64, zone: f64) -> f64 {
    let e = (-hbar_eff * eigenvalue.arg() / std::f64::consts::TAU).rem_euclid(zone);
    if e >= zone {
        0.0
    } else {
        e
    }
}

/// Circular distance of two quasienergies in a zone of width `zone`.
pub fn circular_distance(a: f64, b: f64, zone: f64) -> f64 {
    let d = (a - b).rem_euclid(zone);
    d.min(zone - d)
}

fn parity_expectation(v: &[Complex64]) -> f64 {
    let n = v.len();
    // index i holds j = i - n/2; -j sits at n - i (mod n)
    (0..n).map(|i| (v[i].conj() * v[(n - i) % n]).re).sum::<f64>()
}

/// Floquet eigen-decomposition and island tagging.
pub fn floquet_spectrum(
    u: &PropagatorMatrix,
    params: &ModelParams,
    islands: &[IslandInfo],
    tags: &TagSettings,
) -> Result<FloquetSpectrum> {
    let n = u.dim();
    let (eigenvalues, states) = match &u.blocks {
        Some(b) => {
            let (le, ve) = unitary_eigen(&b.even)?;
            let (lo, vo) = unitary_eigen(&b.odd)?;
            let mut states = DMatrix::zeros(n, n);
            let se = &b.even_basis * ve;
            let so = &b.odd_basis * vo;
            states.columns_mut(0, se.ncols()).copy_from(&se);
            states.columns_mut(se.ncols(), so.ncols()).copy_from(&so);
            (le.into_iter().chain(lo).collect::<Vec<_>>(), states)
        }
        None => unitary_eigen(&u.one_period)?,
    };
    let zone = u.hbar_eff / u.map_period as f64;
    let quasienergies = eigenvalues.iter().map(|&l| quasienergy(l, u.hbar_eff, zone)).collect();
    let grid = SpatialGrid::new(n)?;
    let width = tags.width_x.unwrap_or_else(|| isotropic_width(params.hbar_eff));
    let probes: Vec<Vec<Complex64>> =
        islands.iter().map(|isl| coherent_coefficients(&grid, isl.center, width, u.beta, params.hbar_eff)).collect();
    let island_tags = (0..n)
        .map(|k| {
            let v = states.column(k);
            probes
                .iter()
                .map(|a| a.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr())
                .collect()
        })
        .collect();
    let parity = (u.beta == 0.0)
        .then(|| (0..n).map(|k| parity_expectation(&states.column(k).iter().copied().collect::<Vec<_>>())).collect());
    Ok(FloquetSpectrum {
        quasienergies,
        eigenvalues,
        states,
        island_tags,
        parity,
        zone,
        map_period: u.map_period,
        beta: u.beta,
        hbar_eff: u.hbar_eff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IslandKind {
    /// Islands at `(0, +-p*)`, one-period map.
    MomentumPair,
    /// Islands at `(+-x*, 0)`, two-period map.
    SpatialPair,
}

impl IslandKind {
    pub fn map_period(self) -> usize {
        match self {
            IslandKind::MomentumPair => 1,
            IslandKind::SpatialPair => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IslandKind::MomentumPair => "momentum-pair",
            IslandKind::SpatialPair => "spatial-pair",
        }
    }
}

/// Symmetric island pair related by `(x, p) -> (-x, -p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IslandPair {
    pub kind: IslandKind,
    pub first: IslandInfo,
    pub second: IslandInfo,
}

impl IslandPair {
    /// Pair generated from one island by the reflection.
    pub fn from_island(kind: IslandKind, island: IslandInfo) -> Self {
        let mut second = island;
        second.center = PhaseState::new(-island.center.x, -island.center.p);
        Self { kind, first: island, second }
    }

    pub fn islands(&self) -> [IslandInfo; 2] {
        [self.first, self.second]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplittingMethod {
    Exact,
    Lz,
}

impl SplittingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SplittingMethod::Exact => "exact",
            SplittingMethod::Lz => "lz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingSample {
    pub hbar_eff: f64,
    pub beta: f64,
    /// Splitting in the one-period energy normalization.
    pub delta: f64,
    pub island_kind: IslandKind,
    pub method: SplittingMethod,
    pub n_points: usize,
    pub steps_per_period: usize,
    /// Pair tags of the two doublet states.
    pub tags: [f64; 2],
}

impl SplittingSample {
    /// Tunneling period in modulation periods, `T = hbar / delta`.
    pub fn tunneling_period(&self) -> Result<f64> {
        if self.delta <= 0.0 {
            return Err(Error::UndefinedPeriod);
        }
        Ok(self.hbar_eff / self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplittingSettings {
    pub n_points: usize,
    pub steps_per_period: usize,
    pub tag_threshold: f64,
    pub tags: TagSettings,
    /// Double grid and steps once when the splitting falls below `guard_threshold`.
    pub resolution_guard: bool,
    pub guard_threshold: f64,
    pub max_points: usize,
}

impl Default for SplittingSettings {
    fn default() -> Self {
        Self {
            n_points: 256,
            steps_per_period: 256,
            tag_threshold: 0.2,
            tags: TagSettings::default(),
            resolution_guard: true,
            guard_threshold: 1e-5,
            max_points: 512,
        }
    }
}

/// The two doublet states: best pair tags, opposite parity when defined.
pub fn doublet(spec: &FloquetSpectrum, threshold: f64) -> Result<(usize, usize)> {
    let ranked = spec.ranked_by_tag();
    let best_tags = || ranked.iter().take(4).map(|&k| spec.total_tag(k)).collect::<Vec<_>>();
    let first = ranked[0];
    if spec.total_tag(first) <= threshold {
        return Err(Error::TaggingFailure { best: best_tags() });
    }
    let partner = ranked[1..].iter().copied().find(|&k| {
        spec.total_tag(k) > threshold && spec.parity.as_ref().is_none_or(|par| par[k].signum() != par[first].signum())
    });
    match partner {
        Some(second) => Ok((first, second)),
        None => Err(Error::TaggingFailure { best: best_tags() }),
    }
}

fn splitting_at(
    params: &ModelParams,
    islands: &IslandPair,
    n: usize,
    steps: usize,
    s: &SplittingSettings,
) -> Result<SplittingSample> {
    let grid = SpatialGrid::new(n)?;
    let mp = islands.kind.map_period();
    let u = propagator_matrix(params, &grid, steps, mp)?;
    let spec = floquet_spectrum(&u, params, &islands.islands(), &s.tags)?;
    let (a, b) = doublet(&spec, s.tag_threshold)?;
    Ok(SplittingSample {
        hbar_eff: params.hbar_eff,
        beta: params.beta,
        delta: circular_distance(spec.quasienergies[a], spec.quasienergies[b], spec.zone),
        island_kind: islands.kind,
        method: SplittingMethod::Exact,
        n_points: n,
        steps_per_period: steps,
        tags: [spec.total_tag(a), spec.total_tag(b)],
    })
}

/// Exact quasienergy splitting of the island doublet.
pub fn splitting(params: &ModelParams, islands: &IslandPair, settings: &SplittingSettings) -> Result<SplittingSample> {
    params.validate()?;
    let first = splitting_at(params, islands, settings.n_points, settings.steps_per_period, settings)?;
    if settings.resolution_guard
        && first.delta < settings.guard_threshold
        && 2 * settings.n_points <= settings.max_points
    {
        return splitting_at(params, islands, 2 * settings.n_points, 2 * settings.steps_per_period, settings);
    }
    Ok(first)
}

/// Bands followed across `beta` by eigenvector overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct BandDiagram {
    pub betas: Vec<f64>,
    /// `energies[b][k]`: band `k` at `betas[b]`.
    pub energies: Vec<Vec<f64>>,
    /// `tags[b][k][i]`: tag of band `k` with island `i`.
    pub tags: Vec<Vec<Vec<f64>>>,
    pub parity: Vec<Option<Vec<f64>>>,
    /// `(beta index, band)` where the best overlap fell below the threshold.
    pub discontinuities: Vec<(usize, usize)>,
    pub zone: f64,
}

impl BandDiagram {
    /// Band with the largest tag on island `i` at beta index `b`.
    pub fn best_band(&self, b: usize, i: usize) -> usize {
        (0..self.energies[b].len())
            .max_by(|&x, &y| self.tags[b][x][i].partial_cmp(&self.tags[b][y][i]).unwrap())
            .unwrap()
    }
}

/// Spectra over a quasimomentum grid with overlap continuation of the bands.
pub fn band_diagram(
    params: &ModelParams,
    beta_grid: &[f64],
    islands: &[IslandInfo],
    n_points: usize,
    steps_per_period: usize,
    map_period: usize,
    tags: &TagSettings,
) -> Result<BandDiagram> {
    use rayon::prelude::*;
    if beta_grid.is_empty() || beta_grid.iter().any(|b| !(-0.5..0.5).contains(b)) {
        return Err(Error::ParameterDomain("beta_grid must be non-empty within [-1/2, 1/2)".into()));
    }
    let grid = SpatialGrid::new(n_points)?;
    let spectra = beta_grid
        .par_iter()
        .map(|&b| {
            let p = params.with_beta(b);
            let u = propagator_matrix(&p, &grid, steps_per_period, map_period)?;
            floquet_spectrum(&u, &p, islands, tags)
        })
        .collect::<Result<Vec<_>>>()?;
    const OVERLAP_THRESHOLD: f64 = 0.5;
    let n = n_points;
    // order[b][k] = eigen index at beta b carrying band k
    let mut order: Vec<Vec<usize>> = vec![(0..n).collect()];
    {
        let s0 = &spectra[0];
        order[0].sort_by(|&a, &b| s0.quasienergies[a].partial_cmp(&s0.quasienergies[b]).unwrap());
    }
    let mut discontinuities = Vec::new();
    for b in 1..spectra.len() {
        let prev = &spectra[b - 1];
        let cur = &spectra[b];
        let overlap = prev.states.adjoint() * &cur.states;
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                pairs.push((overlap[(i, j)].norm_sqr(), i, j));
            }
        }
        pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        let mut taken_prev = vec![false; n];
        let mut taken_cur = vec![false; n];
        let mut map = vec![usize::MAX; n];
        let mut weight = vec![0.0; n];
        for (w, i, j) in pairs {
            if !taken_prev[i] && !taken_cur[j] {
                taken_prev[i] = true;
                taken_cur[j] = true;
                map[i] = j;
                weight[i] = w;
            }
        }
        let row: Vec<usize> = order[b - 1].iter().map(|&i| map[i]).collect();
        for (k, &i) in order[b - 1].iter().enumerate() {
            if weight[i] < OVERLAP_THRESHOLD {
                discontinuities.push((b, k));
            }
        }
        order.push(row);
    }
    let energies = order.iter().zip(&spectra).map(|(o, s)| o.iter().map(|&i| s.quasienergies[i]).collect()).collect();
    let tags = order.iter().zip(&spectra).map(|(o, s)| o.iter().map(|&i| s.island_tags[i].clone()).collect()).collect();
    let parity =
        order.iter().zip(&spectra).map(|(o, s)| s.parity.as_ref().map(|p| o.iter().map(|&i| p[i]).collect())).collect();
    Ok(BandDiagram { betas: beta_grid.to_vec(), energies, tags, parity, discontinuities, zone: spectra[0].zone })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(h: f64, beta: f64) -> ModelParams {
        ModelParams::new(0.24, 0.4, h, beta).unwrap()
    }

    #[test]
    fn free_propagator_is_diagonal() {
        let g = SpatialGrid::new(64).unwrap();
        let u = propagator_matrix(&params(0.3, 0.1).with_gamma(0.0), &g, 64, 1).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                if i != j {
                    assert!(u.one_period[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_period_is_square() {
        let g = SpatialGrid::new(64).unwrap();
        let p = params(0.3, 0.05);
        let u1 = propagator_matrix(&p, &g, 64, 1).unwrap();
        let u2 = propagator_matrix(&p, &g, 64, 2).unwrap();
        let sq = &u1.one_period * &u1.one_period;
        assert!((u2.matrix() - sq).iter().all(|e| e.norm() < 1e-10));
    }

    #[test]
    fn eigenvalues_on_unit_circle_and_parity_definite() {
        let g = SpatialGrid::new(64).unwrap();
        let p = params(0.4, 0.0);
        let u = propagator_matrix(&p, &g, 64, 1).unwrap();
        assert!(u.has_parity_blocks());
        let s = floquet_spectrum(&u, &p, &[], &TagSettings::default()).unwrap();
        assert!(s.eigenvalues.iter().all(|l| (l.norm() - 1.0).abs() < 1e-8));
        assert!(s.parity.as_ref().unwrap().iter().all(|x| x.abs() > 0.999));
        assert!(s.quasienergies.iter().all(|&e| (0.0..0.4).contains(&e)));
        // eigenvectors
        let m = &u.one_period;
        for k in 0..s.len() {
            let v = s.states.column(k);
            let r = m * v - v * s.eigenvalues[k];
            assert!(r.norm() < 1e-9);
        }
    }

    #[test]
    fn full_and_block_spectra_agree() {
        let g = SpatialGrid::new(64).unwrap();
        let p = params(0.4, 0.0);
        let u = propagator_matrix(&p, &g, 64, 1).unwrap();
        let blocks = floquet_spectrum(&u, &p, &[], &TagSettings::default()).unwrap();
        let (full, _) = unitary_eigen(&u.one_period).unwrap();
        let mut a: Vec<f64> = blocks.quasienergies.clone();
        let mut b: Vec<f64> = full.iter().map(|&l| quasienergy(l, 0.4, 0.4)).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!(circular_distance(*x, *y, 0.4) < 1e-10);
        }
    }

    #[test]
    fn zone_reduction_invariance() {
        let zone = 0.2;
        let (a, b) = (0.013, 0.19);
        let d = circular_distance(a, b, zone);
        assert!((d - 0.023).abs() < 1e-12);
        for k in -3..=3 {
            let shifted = circular_distance(a + k as f64 * zone, b - 2.0 * k as f64 * zone, zone);
            assert!((shifted - d).abs() < 1e-12);
        }
        assert!(d <= zone / 2.0);
    }

    #[test]
    fn quasienergy_range() {
        for phase in [-3.0, -1.0, 0.0, 1.0, 3.1] {
            let e = quasienergy(Complex64::from_polar(1.0, phase), 0.2, 0.1);
            assert!((0.0..0.1).contains(&e));
        }
    }

    #[test]
    fn undefined_period_for_zero_splitting() {
        let s = SplittingSample {
            hbar_eff: 0.2,
            beta: 0.0,
            delta: 0.0,
            island_kind: IslandKind::MomentumPair,
            method: SplittingMethod::Exact,
            n_points: 64,
            steps_per_period: 64,
            tags: [0.5, 0.5],
        };
        assert!(matches!(s.tunneling_period(), Err(Error::UndefinedPeriod)));
    }
}
