//! Particle advection, flow-map gradients on auxiliary crosses, the right
//! Cauchy–Green tensor and finite-time Lyapunov exponents.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fieldgrid::{Grid2D, ScalarField, SymTensorField};
use crate::ingest::Velocity;
use crate::ode::{Dopri5, StepOutcome, StepperOptions};
use crate::tensor::{Mat2, Point2, Vec2};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_STEPS: usize = 200_000;
/// Auxiliary cross half-width as a fraction of the grid spacing.
pub const DEFAULT_AUX_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug)]
pub struct AdvectOptions {
    /// Relative local error tolerance; the absolute floor is `tol / 100`.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for AdvectOptions {
    fn default() -> Self {
        AdvectOptions { tol: DEFAULT_TOL, max_steps: DEFAULT_MAX_STEPS }
    }
}

impl AdvectOptions {
    pub fn with_tol(tol: f64) -> Self {
        AdvectOptions { tol, ..Default::default() }
    }

    fn stepper(&self, span: f64) -> StepperOptions {
        let mut o = StepperOptions::from_tol(self.tol);
        o.h_min = 1e-12 * span.abs().max(1e-300);
        o
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryStatus {
    Completed,
    LeftDomain,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<(f64, Point2)>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn end(&self) -> (f64, Point2) {
        *self.samples.last().expect("trajectory holds its start")
    }
}

fn check_start<V: Velocity + ?Sized>(v: &V, x0: Point2, t0: f64, t1: f64) -> Result<()> {
    if !v.contains(x0) {
        return Err(Error::out_of_domain(x0));
    }
    let (start, end) = v.time_span();
    for t in [t0, t1] {
        if !(start..=end).contains(&t) {
            return Err(Error::TimeOutOfRange { t, start, end });
        }
    }
    Ok(())
}

/// Integrates from `(t0, x0)` towards `t1`, recording every accepted step,
/// or only `sample_times` (which must lie between `t0` and `t1`) when given.
pub fn integrate_trajectory_sampled<V: Velocity + ?Sized>(
    v: &V,
    x0: Point2,
    t0: f64,
    t1: f64,
    sample_times: Option<&[f64]>,
    opts: &AdvectOptions,
) -> Result<Trajectory> {
    check_start(v, x0, t0, t1)?;
    let mut samples = vec![(t0, x0)];
    if t1 == t0 {
        return Ok(Trajectory { samples, status: TrajectoryStatus::Completed });
    }
    let mut rhs = |t: f64, y: &[f64; 2]| -> Result<[f64; 2]> {
        let w = v.velocity(t, Vec2::new(y[0], y[1]))?;
        Ok([w.x, w.y])
    };
    let mut stepper = Dopri5::new(&mut rhs, t0, [x0.x, x0.y], t1 - t0, opts.stepper(t1 - t0))?;
    let dir = (t1 - t0).signum();
    let mut pending: Vec<f64> = sample_times.map(|s| s.iter().copied().filter(|t| *t != t0).collect()).unwrap_or_default();
    pending.sort_by(|a, b| (dir * a).total_cmp(&(dir * b)));
    let mut next = 0;
    let mut steps = 0;
    while stepper.t() != t1 {
        if steps >= opts.max_steps {
            return Err(Error::StepSizeUnderflow { t: stepper.t() });
        }
        steps += 1;
        match stepper.step(&mut rhs, t1) {
            StepOutcome::Accepted(seg) => {
                if sample_times.is_some() {
                    while next < pending.len() && dir * (pending[next] - seg.t1) <= 0.0 {
                        let y = seg.eval(pending[next]);
                        samples.push((pending[next], Vec2::new(y[0], y[1])));
                        next += 1;
                    }
                } else {
                    samples.push((seg.t1, Vec2::new(seg.y1[0], seg.y1[1])));
                }
            }
            StepOutcome::Failed(Some(Error::OutOfDomain { .. } | Error::Masked { .. })) => {
                if sample_times.is_none() {
                    let y = stepper.y();
                    if samples.last().map(|s| s.0) != Some(stepper.t()) {
                        samples.push((stepper.t(), Vec2::new(y[0], y[1])));
                    }
                }
                return Ok(Trajectory { samples, status: TrajectoryStatus::LeftDomain });
            }
            StepOutcome::Failed(Some(e)) => return Err(e),
            StepOutcome::Failed(None) => return Err(Error::StepSizeUnderflow { t: stepper.t() }),
        }
    }
    Ok(Trajectory { samples, status: TrajectoryStatus::Completed })
}

pub fn integrate_trajectory<V: Velocity + ?Sized>(
    v: &V,
    x0: Point2,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<Trajectory> {
    integrate_trajectory_sampled(v, x0, t0, t1, None, &AdvectOptions::with_tol(tol))
}

/// Flow map `F_{t0}^{t1}(x0)`, or `None` if the particle leaves the domain.
pub fn flow_map<V: Velocity + ?Sized>(
    v: &V,
    x0: Point2,
    t0: f64,
    t1: f64,
    opts: &AdvectOptions,
) -> Result<Option<Point2>> {
    let tr = integrate_trajectory_sampled(v, x0, t0, t1, Some(&[t1]), opts)?;
    Ok(match tr.status {
        TrajectoryStatus::Completed => Some(tr.end().1),
        TrajectoryStatus::LeftDomain => None,
    })
}

#[derive(Clone, Debug)]
pub struct FlowMapGradientField {
    pub grid: Grid2D,
    pub f11: Vec<f64>,
    pub f12: Vec<f64>,
    pub f21: Vec<f64>,
    pub f22: Vec<f64>,
    pub valid: Vec<bool>,
    pub t0: f64,
    pub t1: f64,
    pub aux_delta: f64,
}

impl FlowMapGradientField {
    pub fn at(&self, k: usize) -> Mat2 {
        Mat2 { m11: self.f11[k], m12: self.f12[k], m21: self.f21[k], m22: self.f22[k] }
    }
}

/// Central differences of the flow map over the cross `x ± delta e_i` at
/// every grid node. Nodes with any auxiliary particle outside the domain
/// (at the start or during advection) are masked.
pub fn flow_map_gradient<V: Velocity + ?Sized>(
    v: &V,
    grid: &Grid2D,
    t0: f64,
    t1: f64,
    aux_delta: Option<f64>,
    opts: &AdvectOptions,
) -> Result<FlowMapGradientField> {
    let delta = aux_delta.unwrap_or(DEFAULT_AUX_FRACTION * grid.min_spacing());
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::BadParams(format!("aux_delta must be positive, got {delta}")));
    }
    let (start, end) = v.time_span();
    for t in [t0, t1] {
        if !(start..=end).contains(&t) {
            return Err(Error::TimeOutOfRange { t, start, end });
        }
    }
    let nodes: Vec<Result<Option<Mat2>>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.node_at(k);
            let offsets = [Vec2::new(delta, 0.0), Vec2::new(-delta, 0.0), Vec2::new(0.0, delta), Vec2::new(0.0, -delta)];
            let mut ends = [Vec2::ZERO; 4];
            for (e, d) in ends.iter_mut().zip(offsets) {
                let p = x + d;
                if !v.contains(p) {
                    return Ok(None);
                }
                match flow_map(v, p, t0, t1, opts)? {
                    Some(q) => *e = q,
                    None => return Ok(None),
                }
            }
            let c1 = (ends[0] - ends[1]) * (0.5 / delta);
            let c2 = (ends[2] - ends[3]) * (0.5 / delta);
            Ok(Some(Mat2::from_columns(c1, c2)))
        })
        .collect();
    let n = grid.len();
    let mut out = FlowMapGradientField {
        grid: grid.clone(),
        f11: vec![1.0; n],
        f12: vec![0.0; n],
        f21: vec![0.0; n],
        f22: vec![1.0; n],
        valid: vec![false; n],
        t0,
        t1,
        aux_delta: delta,
    };
    for (k, r) in nodes.into_iter().enumerate() {
        if let Some(m) = r? {
            out.f11[k] = m.m11;
            out.f12[k] = m.m12;
            out.f21[k] = m.m21;
            out.f22[k] = m.m22;
            out.valid[k] = true;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CauchyGreenField {
    pub tensor: SymTensorField,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub xi1: Vec<Vec2>,
    pub xi2: Vec<Vec2>,
    pub degenerate: Vec<bool>,
    pub t0: f64,
    pub t1: f64,
}

impl CauchyGreenField {
    pub fn grid(&self) -> &Grid2D {
        self.tensor.grid()
    }

    pub fn is_valid_node(&self, k: usize) -> bool {
        self.tensor.is_valid_node(k)
    }

    pub fn integration_time(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// `C = ∇Fᵀ ∇F` with per-node eigen data. Masked nodes carry the identity.
pub fn cauchy_green(grad: &FlowMapGradientField) -> Result<CauchyGreenField> {
    let n = grad.grid.len();
    let mut a11 = vec![1.0; n];
    let mut a12 = vec![0.0; n];
    let mut a22 = vec![1.0; n];
    let mut lambda1 = vec![1.0; n];
    let mut lambda2 = vec![1.0; n];
    let mut xi1 = vec![Vec2::new(1.0, 0.0); n];
    let mut xi2 = vec![Vec2::new(0.0, 1.0); n];
    let mut degenerate = vec![true; n];
    for k in 0..n {
        if !grad.valid[k] {
            continue;
        }
        let c = grad.at(k).gram();
        let e = c.eigen();
        a11[k] = c.a11;
        a12[k] = c.a12;
        a22[k] = c.a22;
        lambda1[k] = e.lambda1;
        lambda2[k] = e.lambda2;
        xi1[k] = e.xi1;
        xi2[k] = e.xi2;
        degenerate[k] = e.degenerate;
    }
    let tensor = SymTensorField::with_mask(grad.grid.clone(), a11, a12, a22, grad.valid.clone())?;
    Ok(CauchyGreenField { tensor, lambda1, lambda2, xi1, xi2, degenerate, t0: grad.t0, t1: grad.t1 })
}

/// `log(lambda2) / (2 |T|)` per node, masked where the tensor is.
pub fn ftle(cg: &CauchyGreenField, t: f64) -> Result<ScalarField> {
    if t == 0.0 || !t.is_finite() {
        return Err(Error::BadParams("FTLE needs a non-zero integration time".into()));
    }
    let values = (0..cg.grid().len())
        .map(|k| (cg.is_valid_node(k) && cg.lambda2[k] > 0.0).then(|| cg.lambda2[k].ln() / (2.0 * t.abs())))
        .collect();
    ScalarField::with_mask(cg.grid().clone(), values, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AnalyticFlow, BoundedFlow};
    use std::f64::consts::{E, FRAC_PI_2};

    fn unbounded(flow: AnalyticFlow) -> BoundedFlow {
        BoundedFlow::new(flow, (-100.0, 100.0, -100.0, 100.0)).unwrap()
    }

    #[test]
    fn saddle_trajectory() {
        let v = unbounded(AnalyticFlow::Saddle);
        let tr = integrate_trajectory(&v, Vec2::new(1.0, 1.0), 0.0, 1.0, 1e-10).unwrap();
        let (t, x) = tr.end();
        assert_eq!(t, 1.0);
        assert!((x.x - E).abs() < 1e-6 && (x.y - 1.0 / E).abs() < 1e-6);
    }

    #[test]
    fn zero_duration_is_identity() {
        let v = unbounded(AnalyticFlow::Saddle);
        let tr = integrate_trajectory(&v, Vec2::new(0.3, 0.2), 2.0, 2.0, 1e-10).unwrap();
        assert_eq!(tr.samples, vec![(2.0, Vec2::new(0.3, 0.2))]);
    }

    #[test]
    fn rotation_quarter_turn() {
        let v = unbounded(AnalyticFlow::SolidRotation { omega: 1.0 });
        let tr = integrate_trajectory(&v, Vec2::new(1.0, 0.0), 0.0, FRAC_PI_2, 1e-10).unwrap();
        let x = tr.end().1;
        assert!(x.x.abs() < 1e-6 && (x.y - 1.0).abs() < 1e-6);
    }

    #[test]
    fn leaving_the_domain_is_a_status() {
        let v = BoundedFlow::new(AnalyticFlow::Saddle, (-2.0, 2.0, -2.0, 2.0)).unwrap();
        let tr = integrate_trajectory(&v, Vec2::new(1.0, 0.5), 0.0, 5.0, 1e-9).unwrap();
        assert_eq!(tr.status, TrajectoryStatus::LeftDomain);
        let x = tr.end().1;
        assert!(x.x <= 2.0 && x.x > 1.99);
    }

    #[test]
    fn sampled_output_hits_requested_times() {
        let v = unbounded(AnalyticFlow::Saddle);
        let times = [0.25, 0.5, 1.0];
        let tr = integrate_trajectory_sampled(&v, Vec2::new(1.0, 1.0), 0.0, 1.0, Some(&times), &AdvectOptions::with_tol(1e-10))
            .unwrap();
        assert_eq!(tr.samples.len(), 4);
        for (t, x) in &tr.samples {
            assert!((x.x - t.exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn backward_run() {
        let v = unbounded(AnalyticFlow::Saddle);
        let x = flow_map(&v, Vec2::new(E, 1.0 / E), 1.0, 0.0, &AdvectOptions::with_tol(1e-10)).unwrap().unwrap();
        assert!((x.x - 1.0).abs() < 1e-7 && (x.y - 1.0).abs() < 1e-7);
    }

    #[test]
    fn saddle_gradient_and_ftle() {
        let v = unbounded(AnalyticFlow::Saddle);
        let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 8, 8).unwrap();
        let g = flow_map_gradient(&v, &grid, 0.0, 1.0, None, &AdvectOptions::default()).unwrap();
        for k in 0..grid.len() {
            assert!((g.f11[k] - E).abs() < 1e-5 && (g.f22[k] - 1.0 / E).abs() < 1e-5);
            assert!(g.f12[k].abs() < 1e-5 && g.f21[k].abs() < 1e-5);
        }
        let cg = cauchy_green(&g).unwrap();
        assert!((cg.lambda2[0] - E * E).abs() < 1e-4);
        assert!(cg.xi1[0].x.abs() < 1e-6);
        let f = ftle(&cg, 1.0).unwrap();
        assert!(f.values().iter().all(|l| (l - 1.0).abs() < 1e-4));
    }

    #[test]
    fn rotation_gradient_is_orthogonal() {
        let v = unbounded(AnalyticFlow::SolidRotation { omega: 0.7 });
        let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 6, 6).unwrap();
        let g = flow_map_gradient(&v, &grid, 0.0, 2.0, None, &AdvectOptions::default()).unwrap();
        for k in 0..grid.len() {
            assert!((g.at(k).det() - 1.0).abs() < 1e-6);
        }
        let cg = cauchy_green(&g).unwrap();
        assert!(cg.lambda1.iter().chain(&cg.lambda2).all(|l| (l - 1.0).abs() < 1e-6));
        let f = ftle(&cg, 2.0).unwrap();
        assert!(f.values().iter().all(|l| l.abs() < 1e-6));
    }

    #[test]
    fn boundary_nodes_are_masked() {
        let v = BoundedFlow::new(AnalyticFlow::Saddle, (-1.0, 1.0, -1.0, 1.0)).unwrap();
        let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 5, 5).unwrap();
        let g = flow_map_gradient(&v, &grid, 0.0, 0.1, None, &AdvectOptions::default()).unwrap();
        assert!(!g.valid[grid.index(0, 2)]);
        assert!(g.valid[grid.index(2, 2)]);
    }
}
