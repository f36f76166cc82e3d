//! Rate-of-strain tensors, streamfunction strain and the Okubo–Weiss field.

use geovortex::ingest::AnalyticFlow;
use geovortex::strain::{okubo_weiss, rate_of_strain, strain_from_streamfunction, StrainField};
use geovortex::{Grid2D, ScalarField, SymTensor2, Vec2, VectorField2D};

fn grid() -> Grid2D {
    Grid2D::new(-1.0, 1.0, -1.0, 1.0, 11, 11).unwrap()
}

fn assert_tensor(s: &StrainField, expected: SymTensor2, tol: f64) {
    for k in 0..s.grid().len() {
        let t = s.tensor.node_value(k);
        assert!(
            (t.a11 - expected.a11).abs() <= tol && (t.a12 - expected.a12).abs() <= tol && (t.a22 - expected.a22).abs() <= tol,
            "node {k}: {t:?}"
        );
    }
}

#[test]
fn saddle_strain() {
    let v = AnalyticFlow::Saddle.sample(&grid(), 0.0).unwrap();
    let s = rate_of_strain(&v).unwrap();
    assert_tensor(&s, SymTensor2::new(1.0, 0.0, -1.0), 1e-12);
    assert!(s.vorticity.iter().all(|w| w.abs() < 1e-12));
    assert!(okubo_weiss(&s).unwrap().values().iter().all(|o| (o - 1.0).abs() < 1e-11));
}

#[test]
fn rotation_strain() {
    let v = AnalyticFlow::SolidRotation { omega: 1.0 }.sample(&grid(), 0.0).unwrap();
    let s = rate_of_strain(&v).unwrap();
    assert_tensor(&s, SymTensor2::ZERO, 1e-12);
    assert!(s.vorticity.iter().all(|w| (w - 2.0).abs() < 1e-12));
    assert!(okubo_weiss(&s).unwrap().values().iter().all(|o| (o + 4.0).abs() < 1e-11));
}

#[test]
fn translation_and_rest() {
    let v = VectorField2D::from_fn(grid(), |_| Vec2::new(0.4, -1.3)).unwrap();
    let s = rate_of_strain(&v).unwrap();
    assert_tensor(&s, SymTensor2::ZERO, 0.0);
    let rest = VectorField2D::from_fn(grid(), |_| Vec2::ZERO).unwrap();
    assert!(okubo_weiss(&rate_of_strain(&rest).unwrap()).unwrap().values().iter().all(|o| *o == 0.0));
}

#[test]
fn hyperbolic_streamfunction() {
    let psi = ScalarField::from_fn(grid(), |p| p.x * p.y).unwrap();
    let s = strain_from_streamfunction(&psi).unwrap();
    assert_tensor(&s, SymTensor2::new(-1.0, 0.0, 1.0), 1e-11);
    let v = VectorField2D::from_fn(grid(), |p| Vec2::new(-p.x, p.y)).unwrap();
    assert_tensor(&rate_of_strain(&v).unwrap(), SymTensor2::new(-1.0, 0.0, 1.0), 1e-12);
}

#[test]
fn rotation_streamfunctions() {
    let psi = ScalarField::from_fn(grid(), |_| 2.5).unwrap();
    assert_tensor(&strain_from_streamfunction(&psi).unwrap(), SymTensor2::ZERO, 0.0);
    let psi = ScalarField::from_fn(grid(), |p| 0.5 * (p.x * p.x + p.y * p.y)).unwrap();
    let s = strain_from_streamfunction(&psi).unwrap();
    assert_tensor(&s, SymTensor2::ZERO, 1e-11);
    assert!(s.vorticity.iter().all(|w| (w - 2.0).abs() < 1e-10));
}

#[test]
fn streamfunction_and_velocity_strain_agree() {
    let g = Grid2D::new(0.0, 2.0, 0.0, 1.0, 81, 41).unwrap();
    let flow = AnalyticFlow::double_gyre();
    let psi = flow.sample_streamfunction(&g, 2.5).unwrap();
    let v = flow.sample(&g, 2.5).unwrap();
    let a = strain_from_streamfunction(&psi).unwrap();
    let b = rate_of_strain(&v).unwrap();
    let scale = b.tensor.norm_inf();
    let mut worst: f64 = 0.0;
    for k in 0..g.len() {
        let (i, j) = (k % g.n1(), k / g.n1());
        if i < 4 || j < 4 || i + 4 >= g.n1() || j + 4 >= g.n2() {
            continue;
        }
        let (p, q) = (a.tensor.node_value(k), b.tensor.node_value(k));
        worst = worst.max((p.a11 - q.a11).abs()).max((p.a12 - q.a12).abs()).max((p.a22 - q.a22).abs());
    }
    assert!(worst < 1e-3 * scale, "disagreement {worst} vs scale {scale}");
}

#[test]
fn strain_is_trace_free_for_streamfunctions() {
    let g = Grid2D::new(0.0, 2.0, 0.0, 1.0, 21, 11).unwrap();
    let psi = AnalyticFlow::double_gyre().sample_streamfunction(&g, 1.0).unwrap();
    let s = strain_from_streamfunction(&psi).unwrap();
    assert_eq!(s.relative_divergence(), 0.0);
    for k in 0..g.len() {
        assert!((s.s1[k] + s.s2[k]).abs() <= 1e-15 * s.s2[k].abs().max(1.0));
    }
}
