use chaotun::classical::*;
use chaotun::units::ModelParams;

fn upper_island() -> (ModelParams, IslandInfo) {
    let p = ModelParams::classical(0.25, 0.4).unwrap();
    let isl = find_periodic_orbit(&p, 1, SearchAxis::Momentum, (0.8, 2.0)).unwrap();
    (p, isl)
}

#[test]
fn upper_island_area() {
    let (p, isl) = upper_island();
    let area = island_area(&p, &isl, &AreaSettings::default()).unwrap();
    assert!((area - 0.530).abs() < 0.053, "area {area}");
}

#[test]
fn spatial_island_polar_matches_monte_carlo() {
    let p = ModelParams::classical(0.29, 0.29).unwrap();
    let isl = find_periodic_orbit(&p, 2, SearchAxis::Position, (0.0, 2.5)).unwrap();
    let s = AreaSettings::default();
    let polar = island_area(&p, &isl, &s).unwrap();
    let mc = island_area_monte_carlo(&p, &isl, &s, 3000, 7).unwrap();
    assert!((polar - mc).abs() / mc < 0.05, "polar {polar} mc {mc}");
}

#[test]
fn island_shrinks_at_bifurcation() {
    let s = AreaSettings { r_max: 0.3, axis_scale: (1.0, 1.0), iterations: 500, n_angles: 16, ..Default::default() };
    let area_at = |g: f64| {
        let p = ModelParams::classical(g, 0.29).unwrap();
        let isl = find_periodic_orbit(&p, 2, SearchAxis::Position, (0.0, 2.5)).unwrap();
        island_area(&p, &isl, &s).unwrap()
    };
    let near = area_at(0.2185);
    let further = area_at(0.222);
    assert!(near < 0.01 && near < further, "near {near} further {further}");
}

#[test]
fn bifurcation_and_square_root_law() {
    let gs: Vec<f64> = (0..13).map(|i| 0.20 + 0.005 * i as f64).collect();
    let c = bifurcation_diagram(0.29, &gs).unwrap();
    assert!((c.gamma_b - 0.2179).abs() < 0.002, "gamma_b {}", c.gamma_b);
    for (g, x) in c.gamma_values.iter().zip(&c.x_star_values) {
        if *g < c.gamma_b {
            assert_eq!(*x, 0.0);
        }
    }
    let fine: Vec<f64> = (0..=10).map(|i| c.gamma_b - 0.002 + 0.0022 * i as f64).collect();
    let curve = bifurcation_diagram(0.29, &fine).unwrap();
    let pts: Vec<(f64, f64)> = curve
        .gamma_values
        .iter()
        .zip(&curve.x_star_values)
        .filter(|(g, _)| **g > c.gamma_b)
        .map(|(g, x)| (g - c.gamma_b, *x))
        .collect();
    assert!(pts.len() >= 8);
    let cfit = pts.iter().map(|(d, x)| x * d.sqrt()).sum::<f64>() / pts.iter().map(|(d, _)| d).sum::<f64>();
    let res: f64 = pts.iter().map(|(d, x)| (x - cfit * d.sqrt()).powi(2)).sum::<f64>();
    let norm: f64 = pts.iter().map(|(_, x)| x * x).sum();
    assert!((res / norm).sqrt() < 0.1, "relative residual {}", (res / norm).sqrt());
    // x* increasing just above gamma_b
    assert!(pts.windows(2).all(|w| w[1].1 > w[0].1));
}

#[test]
fn x_star_consistent_with_orbit_search() {
    let c = bifurcation_diagram(0.29, &[0.21, 0.25, 0.29]).unwrap();
    let p = ModelParams::classical(0.29, 0.29).unwrap();
    let isl = find_periodic_orbit(&p, 2, SearchAxis::Position, (0.0, 2.5)).unwrap();
    assert!((c.x_star_values[2] - isl.center.x.abs()).abs() < 1e-8);
}

#[test]
fn branch_followed_past_restabilized_origin() {
    let gs: Vec<f64> = (0..21).map(|i| 0.20 + 0.005 * i as f64).collect();
    let c = bifurcation_diagram(0.29, &gs).unwrap();
    let after: Vec<f64> = c.x_star_values.iter().zip(&gs).filter(|(_, g)| **g > 0.22).map(|(x, _)| *x).collect();
    assert!(after.iter().all(|&x| x > 0.2), "{after:?}");
}
