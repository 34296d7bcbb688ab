use chaotun::floquet::*;
use chaotun::protocols::{momentum_pair, spatial_pair};
use chaotun::units::ModelParams;
use num_complex::Complex64;

fn upper_island_state(params: &ModelParams, grid: &SpatialGrid) -> WaveFunction {
    let pair = momentum_pair(params).unwrap();
    coherent_state(pair.first.center, isotropic_width(params.hbar_eff), params.beta, params.hbar_eff, grid).unwrap()
}

#[test]
fn matrix_and_direct_propagation_agree() {
    let p = ModelParams::new(0.24, 0.4, 0.2, 0.03).unwrap();
    let grid = SpatialGrid::new(64).unwrap();
    let psi = upper_island_state(&p, &grid);
    let direct = evolve_period(&psi, &p, 64, None).unwrap();
    let u = propagator_matrix(&p, &grid, 64, 1).unwrap().matrix();
    let c = nalgebra::DVector::from_vec(psi.momentum());
    let via_matrix = WaveFunction::from_momentum(&grid, (&u * c).as_slice(), p.beta).unwrap();
    let diff: f64 = direct.amplitudes.iter().zip(&via_matrix.amplitudes).map(|(a, b)| (a - b).norm_sqr()).sum();
    assert!(diff.sqrt() < 1e-10, "{diff}");
}

#[test]
fn spectrum_is_unitary_and_in_zone() {
    let p = ModelParams::new(0.24, 0.4, 0.2, 0.0).unwrap();
    let pair = momentum_pair(&p).unwrap();
    let u = propagator_matrix(&p, &SpatialGrid::new(64).unwrap(), 64, 1).unwrap();
    assert!(u.unitarity_defect() < 1e-10);
    let s = floquet_spectrum(&u, &p, &[pair.first, pair.second], &TagSettings::default()).unwrap();
    assert_eq!(s.quasienergies.len(), 64);
    for (e, l) in s.quasienergies.iter().zip(&s.eigenvalues) {
        assert!((l.norm() - 1.0).abs() < 1e-10);
        assert!((0.0..p.hbar_eff).contains(e));
    }
    // the island doublet has opposite parities at beta = 0
    let (a, b) = doublet(&s, 0.2).unwrap();
    let par = s.parity.as_ref().unwrap();
    assert!(par[a] * par[b] < 0.0, "{} {}", par[a], par[b]);
}

#[test]
fn exact_splitting_is_grid_converged() {
    let p = ModelParams::new(0.24, 0.4, 0.2, 0.0).unwrap();
    let pair = momentum_pair(&p).unwrap();
    let coarse =
        splitting(&p, &pair, &SplittingSettings { n_points: 64, steps_per_period: 64, ..Default::default() }).unwrap();
    let fine = splitting(&p, &pair, &SplittingSettings::default()).unwrap();
    assert!((coarse.delta / fine.delta - 1.0).abs() < 1e-3, "{} {}", coarse.delta, fine.delta);
    assert!((fine.delta / 5.2e-4 - 1.0).abs() < 0.1);
    assert_eq!(fine.method, SplittingMethod::Exact);
}

#[test]
fn spatial_splitting_uses_two_period_map() {
    let p = ModelParams::new(0.29, 0.29, 0.16, 0.0).unwrap();
    let pair = spatial_pair(&p).unwrap();
    assert_eq!(pair.kind, IslandKind::SpatialPair);
    let s =
        splitting(&p, &pair, &SplittingSettings { n_points: 64, steps_per_period: 64, ..Default::default() }).unwrap();
    assert_eq!(s.island_kind, IslandKind::SpatialPair);
    let t = s.tunneling_period().unwrap();
    assert!(t > 1000.0 && t < 2000.0, "{t}");
}

#[test]
fn snapshot_round_trip() {
    let p = ModelParams::new(0.24, 0.4, 0.2, 0.1).unwrap();
    let grid = SpatialGrid::new(64).unwrap();
    let psi = upper_island_state(&p, &grid);
    let mut buf = Vec::new();
    psi.write_snapshot(&mut buf).unwrap();
    let back = WaveFunction::read_snapshot(buf.as_slice()).unwrap();
    assert_eq!(back.beta, psi.beta);
    assert_eq!(back.amplitudes, psi.amplitudes);
    assert!((psi.norm_squared() - 1.0).abs() < 1e-12);
    assert_eq!(psi.inner(&back), Complex64::new(psi.norm_squared(), 0.0));
}
