//! Reduced null-geodesic flow, seeding, closed orbits and the co-geodesic
//! cross-check.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use geovortex::ingest::polar_metric_demo;
use geovortex::nullgeo::{
    alpha_invariance_check, closed_orbits_for_alpha, first_integral, hamiltonian_rhs, null_residual, phi_prime, random_samples,
    seed_points, trace_reduced_orbit, ClosedCurve, HamiltonianOptions, MetricFamily, OrbitOptions, ParameterKind, SeedOptions,
    SeedStatus,
};
use geovortex::{Error, Grid2D, SymTensor2, SymTensorField, Vec2};
use proptest::prelude::*;

fn family(grid: Grid2D, f: impl Fn(Vec2) -> SymTensor2) -> MetricFamily {
    MetricFamily::new(SymTensorField::from_fn(grid, f).unwrap(), ParameterKind::GenericAlpha)
}

fn linear_a11() -> MetricFamily {
    family(Grid2D::new(-0.5, 1.5, -0.5, 0.5, 21, 11).unwrap(), |p| SymTensor2::new(p.x, 0.0, 1.0))
}

fn polar() -> MetricFamily {
    let grid = Grid2D::new(-2.0, 2.0, -2.0, 2.0, 81, 81).unwrap();
    MetricFamily::new(polar_metric_demo(&grid).unwrap(), ParameterKind::GenericAlpha)
}

#[test]
fn constant_tensor_has_zero_curvature() {
    let m = family(Grid2D::new(0.0, 1.0, 0.0, 1.0, 6, 6).unwrap(), |_| SymTensor2::new(2.0, 0.7, -1.0));
    for phi in [0.1, 1.0, 2.5] {
        assert_eq!(phi_prime(&m, Vec2::new(0.4, 0.6), phi, 1e-12).unwrap(), 0.0);
    }
}

#[test]
fn curvature_hand_value() {
    let m = linear_a11();
    let v = phi_prime(&m, Vec2::ZERO, FRAC_PI_4, 1e-12).unwrap();
    assert!((v + 1.0 / (2.0 * SQRT_2)).abs() < 1e-12, "{v}");
    // General position: −cos²φ / (2 sinφ (1 − x1)).
    let (x, phi): (f64, f64) = (0.3, 1.1);
    let exact = -phi.cos().powi(2) / (2.0 * phi.sin() * (1.0 - x));
    assert!((phi_prime(&m, Vec2::new(x, 0.1), phi, 1e-12).unwrap() - exact).abs() < 1e-12);
}

#[test]
fn singular_denominator() {
    let m = linear_a11();
    let r = phi_prime(&m, Vec2::new(1.0, 0.0), FRAC_PI_4, 1e-8);
    assert!(matches!(r, Err(Error::SingularDenominator { .. })));
}

#[test]
fn shift_invariance_on_hand_example() {
    let m = linear_a11();
    let shifted = m.shifted(3.7);
    let samples = random_samples(&m, 100, 11);
    let mut checked = 0;
    for (x, phi) in samples {
        if let (Ok(a), Ok(b)) = (phi_prime(&m, x, phi, 1e-8), phi_prime(&shifted, x, phi, 1e-8)) {
            assert_eq!(a, b);
            checked += 1;
        }
    }
    assert!(checked > 90);
    let report = alpha_invariance_check(&m, &random_samples(&m, 200, 5), 9);
    assert!(report.passed(1e-12), "{report:?}");
}

#[test]
fn constant_tensor_invariance() {
    let m = family(Grid2D::new(0.0, 1.0, 0.0, 1.0, 6, 6).unwrap(), |_| SymTensor2::new(1.0, 0.3, 2.0));
    let r = alpha_invariance_check(&m, &random_samples(&m, 50, 1), 2);
    assert!(r.passed(0.0));
}

#[test]
fn singular_samples_are_skipped() {
    let m = linear_a11();
    // Denominator sin φ cos φ (1 − x1) vanishes for φ = π/2 at any α.
    let r = alpha_invariance_check(&m, &[(Vec2::new(0.2, 0.0), FRAC_PI_2), (Vec2::new(0.2, 0.0), 0.7)], 3);
    assert_eq!((r.checked, r.skipped), (1, 1));
}

proptest! {
    #[test]
    fn curvature_is_shift_independent(
        alpha in -10.0f64..10.0,
        x in -0.4f64..0.9,
        y in -0.4f64..0.4,
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        let m = family(Grid2D::new(-0.5, 1.0, -0.5, 0.5, 16, 11).unwrap(), |p| {
            SymTensor2::new(1.0 + p.x * p.y, 0.3 * p.x - p.y * p.y, -0.5 + p.x)
        });
        let delta = m.default_delta_sing();
        let a = phi_prime(&m, Vec2::new(x, y), phi, delta);
        let b = phi_prime(&m.shifted(alpha), Vec2::new(x, y), phi, delta);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "mismatch {:?}", other),
        }
    }
}

#[test]
fn seeds_on_analytic_level_set() {
    let m = family(Grid2D::new(-1.0, 1.0, -1.0, 1.0, 41, 41).unwrap(), |p| SymTensor2::new(1.0 + p.x * p.x, 0.5, 2.0));
    let seeds = seed_points(&m, 1.25, &SeedOptions::default()).unwrap();
    assert!(seeds.len() > 10);
    assert!(seeds.iter().all(|s| (s.x.abs() - 0.5).abs() < 1e-6), "{seeds:?}");
    assert!(seeds.iter().any(|s| s.x > 0.0) && seeds.iter().any(|s| s.x < 0.0));
    assert!(matches!(seed_points(&m, 0.5, &SeedOptions::default()), Err(Error::EmptySeedSet)));
}

#[test]
fn polar_seeds_reach_the_circle_tops() {
    let seeds = seed_points(&polar(), 0.0, &SeedOptions::default()).unwrap();
    for target in [Vec2::new(0.0, 1.0), Vec2::new(0.0, -1.0)] {
        let d = seeds.iter().map(|s| s.distance(target)).fold(f64::INFINITY, f64::min);
        assert!(d < 0.1, "nearest seed to {target:?} at {d}");
    }
}

#[test]
fn polar_unit_circle_is_found() {
    let m = polar();
    let report = closed_orbits_for_alpha(&m, 0.0, &SeedOptions::default(), &OrbitOptions::default()).unwrap();
    assert_eq!(report.curves.len(), 1);
    let c = &report.curves[0];
    let dev = c.vertices.iter().map(|(x, _)| (x.norm() - 1.0).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-3, "radial deviation {dev}");
    assert_eq!(c.winding.abs(), 1);
    assert!(c.closure_residual <= m.tensor().grid().min_spacing());
    assert!((c.enclosed_area - PI).abs() < 1e-2);
    assert!(null_residual(&m, 0.0, c).unwrap() <= 1e-6 * m.norm_inf());
}

#[test]
fn first_integral_is_conserved_along_orbits() {
    let m = polar();
    let seeds = seed_points(&m, 0.0, &SeedOptions::default()).unwrap();
    let bound = 1e-6 * m.norm_inf();
    for s in seeds.iter().step_by(5) {
        let orbit = trace_reduced_orbit(&m, *s, &OrbitOptions::default()).unwrap();
        for (x, phi) in &orbit.vertices {
            assert!(first_integral(&m, 0.0, *x, *phi).unwrap().abs() <= bound);
        }
    }
}

#[test]
fn constant_indefinite_tensor_has_no_closed_orbits() {
    let m = family(Grid2D::new(-1.0, 1.0, -1.0, 1.0, 21, 21).unwrap(), |_| SymTensor2::new(1.0, 0.0, -1.0));
    // At φ0 = π/8 the null condition cos 2φ = α holds for α = cos(π/4).
    let seed = SeedOptions { phi0: PI / 8.0, ..Default::default() };
    let report = closed_orbits_for_alpha(&m, FRAC_PI_4.cos() - 1e-3, &seed, &OrbitOptions::default()).unwrap();
    assert!(report.curves.is_empty());
    assert!(report.seeds.iter().all(|s| s.status != SeedStatus::Closed));
}

#[test]
fn straight_orbit_leaves_the_domain() {
    let m = family(Grid2D::new(-1.0, 1.0, -1.0, 1.0, 11, 11).unwrap(), |_| SymTensor2::new(1.0, 0.0, -1.0));
    let orbit = trace_reduced_orbit(&m, Vec2::new(0.2, 0.1), &OrbitOptions { phi0: FRAC_PI_4, ..Default::default() }).unwrap();
    assert_eq!(orbit.status, SeedStatus::LeftDomain);
    let last = orbit.vertices.last().unwrap().0;
    assert!((last.x - last.y - 0.1).abs() < 1e-9);
}

fn circle_curve(center: Vec2, angles: &[f64]) -> ClosedCurve {
    let vertices: Vec<(Vec2, f64)> = angles.iter().map(|t| (center + Vec2::unit(*t), t + FRAC_PI_2)).collect();
    ClosedCurve {
        seed: vertices[0].0,
        vertices,
        alpha: 0.0,
        winding: 1,
        closure_residual: 0.0,
        enclosed_area: PI,
        arc_length: 2.0 * PI,
    }
}

#[test]
fn exact_circle_residual() {
    let m = polar();
    // Unit-circle points that are grid nodes, where the interpolant is exact.
    let mut nodal: Vec<f64> = [(1.0, 0.0), (0.8, 0.6), (0.6, 0.8)]
        .iter()
        .flat_map(|(a, b)| [(*a, *b), (-*a, *b), (*a, -*b), (-*a, -*b), (*b, *a), (-*b, -*a)])
        .map(|(a, b): (f64, f64)| b.atan2(a))
        .collect();
    nodal.sort_by(f64::total_cmp);
    nodal.dedup();
    assert!(null_residual(&m, 0.0, &circle_curve(Vec2::ZERO, &nodal)).unwrap() <= 1e-12);
    let dense: Vec<f64> = (0..=400).map(|k| k as f64 * 2.0 * PI / 400.0).collect();
    assert!(null_residual(&m, 0.0, &circle_curve(Vec2::ZERO, &dense)).unwrap() <= 1e-4);
    assert!(null_residual(&m, 0.0, &circle_curve(Vec2::new(0.1, 0.0), &dense)).unwrap() > 1e-3);
}

#[test]
fn null_residual_needs_vertices_in_the_domain() {
    let m = polar();
    let r = null_residual(&m, 0.0, &circle_curve(Vec2::new(1.5, 0.0), &[0.0, 1.0]));
    assert!(matches!(r, Err(Error::OutOfDomain { .. })));
}

#[test]
fn cogeodesic_rhs_hand_values() {
    let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 5, 5).unwrap();
    let opts = HamiltonianOptions::default();
    let m = family(grid.clone(), |_| SymTensor2::new(1.0, 0.0, -1.0));
    let psi = 0.6f64;
    let (dx, dpsi) = hamiltonian_rhs(&m, 0.0, Vec2::new(0.1, 0.2), psi, &opts).unwrap();
    assert!(dx.distance(Vec2::new(psi.cos(), -psi.sin())) < 1e-15 && dpsi == 0.0);
    let m = family(grid.clone(), |_| SymTensor2::new(2.0, 0.0, 2.0));
    let (dx, dpsi) = hamiltonian_rhs(&m, 0.0, Vec2::new(0.1, 0.2), psi, &opts).unwrap();
    assert!(dx.distance(Vec2::unit(psi) * 0.5) < 1e-15 && dpsi == 0.0);
    let m = family(grid, |_| SymTensor2::new(1.0, 0.0, 0.0));
    let r = hamiltonian_rhs(&m, 0.0, Vec2::new(0.1, 0.2), psi, &opts);
    assert!(matches!(r, Err(Error::DegenerateMetric { .. })));
}
