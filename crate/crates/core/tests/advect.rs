//! Trajectories, flow-map gradients, Cauchy–Green tensors and FTLE.

use std::f64::consts::{E, FRAC_PI_2};

use geovortex::advect::{
    cauchy_green, flow_map, flow_map_gradient, ftle, integrate_trajectory, AdvectOptions, FlowMapGradientField, TrajectoryStatus,
};
use geovortex::ingest::{AnalyticFlow, BoundedFlow};
use geovortex::{Grid2D, Mat2, Vec2};

fn bounded(flow: AnalyticFlow) -> BoundedFlow {
    BoundedFlow::new(flow, (-10.0, 10.0, -10.0, 10.0)).unwrap()
}

fn small_grid() -> Grid2D {
    Grid2D::new(-1.0, 1.0, -1.0, 1.0, 9, 9).unwrap()
}

#[test]
fn saddle_trajectory() {
    let tr = integrate_trajectory(&bounded(AnalyticFlow::Saddle), Vec2::new(1.0, 1.0), 0.0, 1.0, 1e-10).unwrap();
    assert_eq!(tr.status, TrajectoryStatus::Completed);
    assert!(tr.end().1.distance(Vec2::new(E, 1.0 / E)) < 1e-6);
}

#[test]
fn zero_duration_is_the_identity() {
    let x0 = Vec2::new(0.3, -0.2);
    let tr = integrate_trajectory(&bounded(AnalyticFlow::double_gyre()), Vec2::new(0.3, 0.2), 1.5, 1.5, 1e-9).unwrap();
    assert_eq!(tr.samples, vec![(1.5, Vec2::new(0.3, 0.2))]);
    let tr = integrate_trajectory(&bounded(AnalyticFlow::Saddle), x0, 0.0, 0.0, 1e-9).unwrap();
    assert_eq!(tr.samples, vec![(0.0, x0)]);
}

#[test]
fn quarter_rotation() {
    let flow = bounded(AnalyticFlow::SolidRotation { omega: 1.0 });
    let tr = integrate_trajectory(&flow, Vec2::new(1.0, 0.0), 0.0, FRAC_PI_2, 1e-10).unwrap();
    assert!(tr.end().1.distance(Vec2::new(0.0, 1.0)) < 1e-6);
}

#[test]
fn leaving_the_domain_is_a_status() {
    let flow = BoundedFlow::new(AnalyticFlow::Saddle, (-2.0, 2.0, -2.0, 2.0)).unwrap();
    let tr = integrate_trajectory(&flow, Vec2::new(1.0, 0.5), 0.0, 5.0, 1e-9).unwrap();
    assert_eq!(tr.status, TrajectoryStatus::LeftDomain);
    assert_eq!(flow_map(&flow, Vec2::new(1.0, 0.5), 0.0, 5.0, &AdvectOptions::default()).unwrap(), None);
}

#[test]
fn backward_time_inverts_forward_time() {
    let flow = bounded(AnalyticFlow::double_gyre());
    let opts = AdvectOptions::with_tol(1e-11);
    let x0 = Vec2::new(0.6, 0.3);
    let x1 = flow_map(&flow, x0, 0.0, 4.0, &opts).unwrap().unwrap();
    let back = flow_map(&flow, x1, 4.0, 0.0, &opts).unwrap().unwrap();
    assert!(back.distance(x0) < 1e-7);
}

fn max_over_nodes(g: &FlowMapGradientField, f: impl Fn(Mat2) -> f64) -> f64 {
    (0..g.grid.len()).filter(|k| g.valid[*k]).map(|k| f(g.at(k))).fold(0.0, f64::max)
}

#[test]
fn saddle_gradient_and_tensor() {
    let g = flow_map_gradient(&bounded(AnalyticFlow::Saddle), &small_grid(), 0.0, 1.0, None, &AdvectOptions::default()).unwrap();
    assert!(g.valid.iter().all(|v| *v));
    let err = max_over_nodes(&g, |m| (m.m11 - E).abs().max((m.m22 - 1.0 / E).abs()).max(m.m12.abs()).max(m.m21.abs()));
    assert!(err < 1e-5, "gradient error {err}");
    let cg = cauchy_green(&g).unwrap();
    for k in 0..cg.grid().len() {
        assert!((cg.lambda2[k] - E * E).abs() < 1e-4);
        assert!((cg.lambda1[k] - 1.0 / (E * E)).abs() < 1e-5);
        assert!(cg.xi1[k].x.abs() < 1e-6 && (cg.xi1[k].y.abs() - 1.0).abs() < 1e-9);
    }
    let l = ftle(&cg, 1.0).unwrap();
    assert!(l.values().iter().all(|v| (v - 1.0).abs() < 1e-4));
}

#[test]
fn zero_duration_gradient_is_identity() {
    let g = flow_map_gradient(&bounded(AnalyticFlow::double_gyre()), &small_grid(), 0.0, 0.0, None, &AdvectOptions::default());
    let g = g.unwrap();
    let err = max_over_nodes(&g, |m| (m.m11 - 1.0).abs().max((m.m22 - 1.0).abs()).max(m.m12.abs()).max(m.m21.abs()));
    assert!(err < 1e-12);
    let cg = cauchy_green(&g).unwrap();
    assert!(cg.degenerate.iter().all(|d| *d));
}

#[test]
fn rotation_gradient_is_a_rotation() {
    let flow = bounded(AnalyticFlow::SolidRotation { omega: 0.8 });
    let g = flow_map_gradient(&flow, &small_grid(), 0.0, 2.0, None, &AdvectOptions::default()).unwrap();
    assert!(max_over_nodes(&g, |m| (m.det() - 1.0).abs()) < 1e-6);
    let expected = Mat2::rotation(1.6);
    assert!(max_over_nodes(&g, |m| (m.m11 - expected.m11).abs().max((m.m21 - expected.m21).abs())) < 1e-6);
    let cg = cauchy_green(&g).unwrap();
    let l = ftle(&cg, 2.0).unwrap();
    assert!(l.values().iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn edge_nodes_are_masked_when_particles_escape() {
    let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 9, 9).unwrap();
    let flow = BoundedFlow::on_grid(AnalyticFlow::Saddle, &grid).unwrap();
    let g = flow_map_gradient(&flow, &grid, 0.0, 1.0, None, &AdvectOptions::default()).unwrap();
    assert!(!g.valid[grid.index(8, 4)]);
    assert!(g.valid[grid.index(4, 4)]);
    let cg = cauchy_green(&g).unwrap();
    let l = ftle(&cg, 1.0).unwrap();
    assert!(!l.is_valid_node(grid.index(8, 4)));
}

#[test]
fn double_gyre_is_area_preserving() {
    let grid = Grid2D::new(0.0, 2.0, 0.0, 1.0, 21, 11).unwrap();
    let flow = BoundedFlow::on_grid(AnalyticFlow::double_gyre(), &grid).unwrap();
    let g = flow_map_gradient(&flow, &grid, 0.0, 2.0, Some(1e-5), &AdvectOptions::with_tol(1e-12)).unwrap();
    let worst = max_over_nodes(&g, |m| (m.det() - 1.0).abs());
    assert!(worst < 1e-4, "det deviation {worst}");
}

#[test]
fn ftle_needs_a_duration() {
    let g = flow_map_gradient(&bounded(AnalyticFlow::Saddle), &small_grid(), 0.0, 1.0, None, &AdvectOptions::default()).unwrap();
    assert!(ftle(&cauchy_green(&g).unwrap(), 0.0).is_err());
}
