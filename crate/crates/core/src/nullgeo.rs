//! Closed null-geodesics of `A − αI` through the reduced flow on `(x, φ)`.
//!
//! With arc length as the parameter a null-geodesic satisfies `x′ = e_φ`
//! and
//!
//! ```text
//! φ′ = −⟨e_φ, (∇A e_φ) e_φ⟩ / (2 ⟨e_φ, Rᵀ A e_φ⟩)
//! ```
//!
//! which does not involve `α`. The parameter only selects initial
//! conditions: seeds lie on `⟨e_φ0, A e_φ0⟩ = α`, and the quantity
//! `½⟨e_φ, (A − αI) e_φ⟩` is conserved along the flow. Closed orbits are
//! detected when `φ − φ0` crosses `±2π` back near the seed.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contour::zero_contours;
use crate::error::{Error, Result};
use crate::fieldgrid::SymTensorField;
use crate::geometry::{hausdorff, signed_area, BoundingBox};
use crate::ode::{bisect_event, DenseSegment, Dopri5, StepOutcome, StepperOptions};
use crate::tensor::{Point2, SymTensor2, TensorGradient, Vec2};

/// Singular-set threshold relative to `‖A‖∞`.
pub const DEFAULT_DELTA_SING_REL: f64 = 1e-8;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_PHI: f64 = 4.0 * PI;
pub const DEFAULT_EVENT_TOL: f64 = 1e-10;
/// Seed stride in grid spacings.
pub const DEFAULT_STRIDE_SPACINGS: f64 = 2.0;
/// Determinant floor for the co-geodesic flow relative to `‖A‖∞²`.
pub const DEFAULT_DELTA_DET_REL: f64 = 1e-12;
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;
/// Denominator level (relative to `‖A‖∞`) below which a collapsing step
/// size is blamed on the singular set.
const NEAR_SINGULAR_REL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParameterKind {
    GenericAlpha,
    /// `α = λ²` for Cauchy–Green based families.
    LcsLambdaSquared,
    OecsMu,
}

impl ParameterKind {
    pub fn alpha(self, parameter: f64) -> f64 {
        match self {
            ParameterKind::LcsLambdaSquared => parameter * parameter,
            _ => parameter,
        }
    }
}

/// Which expression of the reduced flow to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowForm {
    General,
    /// For trace-free tensors (`a22 = −a11`): only `a11` and `a12` are read.
    TraceFree,
}

/// A tensor field together with the isotropic shift of the family.
///
/// The shift is never folded into the samples; every quadratic form of the
/// shifted tensor is evaluated by linearity.
#[derive(Clone, Debug)]
pub struct MetricFamily {
    tensor: SymTensorField,
    pub kind: ParameterKind,
    pub form: FlowForm,
    shift: f64,
}

impl MetricFamily {
    pub fn new(tensor: SymTensorField, kind: ParameterKind) -> Self {
        MetricFamily { tensor, kind, form: FlowForm::General, shift: 0.0 }
    }

    pub fn with_form(mut self, form: FlowForm) -> Self {
        self.form = form;
        self
    }

    /// The family member `A − σI` as a family of its own.
    pub fn shifted(&self, sigma: f64) -> Self {
        let mut m = self.clone();
        m.shift += sigma;
        m
    }

    pub fn tensor(&self) -> &SymTensorField {
        &self.tensor
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn norm_inf(&self) -> f64 {
        self.tensor.norm_inf()
    }

    pub fn default_delta_sing(&self) -> f64 {
        DEFAULT_DELTA_SING_REL * self.norm_inf()
    }

    /// Unshifted tensor and gradient at `x`.
    fn local(&self, x: Point2) -> Result<(SymTensor2, TensorGradient)> {
        self.tensor.value_and_gradient(x)
    }

    /// `A(x) − shift·I`, materialized.
    pub fn tensor_at(&self, x: Point2) -> Result<SymTensor2> {
        Ok(self.tensor.interpolate(x)?.shifted(self.shift))
    }
}

fn denominator(form: FlowForm, a: &SymTensor2, shift: f64, c: f64, s: f64) -> f64 {
    // ⟨e, Rᵀ I e⟩ = c s − s c, which is exactly zero.
    #[allow(clippy::eq_op)]
    let iso = c * s - s * c;
    match form {
        FlowForm::General => a.a12 * (c * c - s * s) + c * s * (a.a22 - a.a11) - shift * iso,
        FlowForm::TraceFree => a.a12 * (c * c - s * s) - 2.0 * c * s * a.a11 - shift * iso,
    }
}

fn numerator(form: FlowForm, g: &TensorGradient, c: f64, s: f64) -> f64 {
    let d11 = g.d1.a11 * c + g.d2.a11 * s;
    let d12 = g.d1.a12 * c + g.d2.a12 * s;
    match form {
        FlowForm::General => {
            let d22 = g.d1.a22 * c + g.d2.a22 * s;
            d11 * c * c + 2.0 * d12 * c * s + d22 * s * s
        }
        FlowForm::TraceFree => d11 * (c * c - s * s) + 2.0 * d12 * c * s,
    }
}

/// Curvature of the null-geodesic through `(x, φ)`.
pub fn phi_prime(metric: &MetricFamily, x: Point2, phi: f64, delta_sing: f64) -> Result<f64> {
    let (a, g) = metric.local(x)?;
    phi_prime_local(metric.form, metric.shift, &a, &g, phi, delta_sing)
}

fn phi_prime_local(
    form: FlowForm,
    shift: f64,
    a: &SymTensor2,
    g: &TensorGradient,
    phi: f64,
    delta_sing: f64,
) -> Result<f64> {
    let (s, c) = phi.sin_cos();
    let d = denominator(form, a, shift, c, s);
    if !(d.abs() >= delta_sing) {
        return Err(Error::SingularDenominator { value: d });
    }
    Ok(-numerator(form, g, c, s) / (2.0 * d))
}

/// `½⟨e_φ, (A − (shift + α) I) e_φ⟩`.
pub fn first_integral(metric: &MetricFamily, alpha: f64, x: Point2, phi: f64) -> Result<f64> {
    let a = metric.tensor.interpolate(x)?;
    let e = Vec2::unit(phi);
    let quad = match metric.form {
        FlowForm::General => a.quad(e),
        FlowForm::TraceFree => SymTensor2::new(a.a11, a.a12, -a.a11).quad(e),
    };
    Ok(0.5 * (quad - metric.shift - alpha))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvarianceReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_difference: f64,
}

impl InvarianceReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_difference <= tol
    }
}

/// Compares `φ′` of the family and of its member shifted by a random
/// `α ∈ [−10, 10]` at each sample. Samples singular for either side are
/// skipped.
pub fn alpha_invariance_check(metric: &MetricFamily, samples: &[(Point2, f64)], rng_seed: u64) -> InvarianceReport {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let delta = metric.default_delta_sing();
    let mut report = InvarianceReport { checked: 0, skipped: 0, max_difference: 0.0 };
    for (x, phi) in samples {
        let alpha: f64 = rng.gen_range(-10.0..=10.0);
        let shifted = metric.shifted(alpha);
        match (phi_prime(metric, *x, *phi, delta), phi_prime(&shifted, *x, *phi, delta)) {
            (Ok(a), Ok(b)) => {
                report.checked += 1;
                report.max_difference = report.max_difference.max((a - b).abs());
            }
            _ => report.skipped += 1,
        }
    }
    report
}

#[derive(Clone, Copy, Debug)]
pub struct SeedOptions {
    pub phi0: f64,
    /// Arc-length spacing of seeds along the level set (default two grid
    /// spacings).
    pub stride: Option<f64>,
    pub delta_sing: Option<f64>,
}

impl Default for SeedOptions {
    fn default() -> Self {
        SeedOptions { phi0: 0.0, stride: None, delta_sing: None }
    }
}

fn q_and_grad(metric: &MetricFamily, alpha: f64, x: Point2, e: Vec2) -> Result<(f64, Vec2)> {
    let (a, g) = metric.local(x)?;
    let (a, g) = match metric.form {
        FlowForm::General => (a, g),
        FlowForm::TraceFree => (
            SymTensor2::new(a.a11, a.a12, -a.a11),
            TensorGradient {
                d1: SymTensor2::new(g.d1.a11, g.d1.a12, -g.d1.a11),
                d2: SymTensor2::new(g.d2.a11, g.d2.a12, -g.d2.a11),
            },
        ),
    };
    Ok((a.quad(e) - metric.shift - alpha, Vec2::new(g.d1.quad(e), g.d2.quad(e))))
}

/// Newton projection of `p` onto the zero set of the interpolated
/// `⟨e, A e⟩ − α`, moving along the gradient.
fn snap_to_level(metric: &MetricFamily, alpha: f64, e: Vec2, p: Point2, max_move: f64) -> Option<Point2> {
    let scale = metric.norm_inf().max(alpha.abs()).max(f64::MIN_POSITIVE);
    let mut x = p;
    for _ in 0..30 {
        let (q, g) = q_and_grad(metric, alpha, x, e).ok()?;
        if q.abs() <= 1e-14 * scale {
            return (x.distance(p) <= max_move).then_some(x);
        }
        let g2 = g.dot(g);
        if g2 == 0.0 {
            return None;
        }
        let step = g * (q / g2);
        x = x - step;
        if step.norm() <= 1e-15 * (1.0 + x.norm()) {
            break;
        }
    }
    let (q, _) = q_and_grad(metric, alpha, x, e).ok()?;
    (q.abs() <= 1e-11 * scale && x.distance(p) <= max_move).then_some(x)
}

/// Seeds on `⟨e_φ0, A e_φ0⟩ − α = 0`, extracted from the nodal samples,
/// resampled along arc length and projected onto the interpolant's zero
/// set. Points in the singular set at `φ0` are dropped.
pub fn seed_points(metric: &MetricFamily, alpha: f64, opts: &SeedOptions) -> Result<Vec<Point2>> {
    let tensor = &metric.tensor;
    let grid = tensor.grid();
    let e = Vec2::unit(opts.phi0);
    let q: Vec<f64> = (0..grid.len())
        .map(|k| {
            if !tensor.is_valid_node(k) {
                return f64::NAN;
            }
            let a = tensor.node_value(k);
            let a = match metric.form {
                FlowForm::General => a,
                FlowForm::TraceFree => SymTensor2::new(a.a11, a.a12, -a.a11),
            };
            a.quad(e) - metric.shift - alpha
        })
        .collect();
    let stride = opts.stride.unwrap_or(DEFAULT_STRIDE_SPACINGS * grid.min_spacing());
    if !(stride > 0.0) {
        return Err(Error::BadParams("seed stride must be positive".into()));
    }
    let delta = opts.delta_sing.unwrap_or_else(|| metric.default_delta_sing());
    let (s, c) = opts.phi0.sin_cos();
    let mut seeds = Vec::new();
    for line in zero_contours(grid, &q) {
        for p in line.resample(stride) {
            let Some(x) = snap_to_level(metric, alpha, e, p, 2.0 * grid.min_spacing()) else { continue };
            let Ok(a) = tensor.interpolate(x) else { continue };
            if denominator(metric.form, &a, metric.shift, c, s).abs() >= delta {
                seeds.push(x);
            }
        }
    }
    if seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    Ok(seeds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedCurve {
    /// `(x, φ)` samples; the last vertex is the return point.
    pub vertices: Vec<(Point2, f64)>,
    pub alpha: f64,
    pub winding: i32,
    pub closure_residual: f64,
    pub enclosed_area: f64,
    pub arc_length: f64,
    pub seed: Point2,
}

impl ClosedCurve {
    pub fn points(&self) -> Vec<Point2> {
        self.vertices.iter().map(|v| v.0).collect()
    }

    /// Vertices without the duplicated return point, for polygon tests.
    pub fn polygon(&self) -> Vec<Point2> {
        let mut p = self.points();
        if p.len() > 1 {
            p.pop();
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedStatus {
    Closed,
    Duplicate,
    LeftDomain,
    Singular,
    ArcLengthExceeded,
    WindingExceeded,
    StepLimit,
    StepFailure,
    /// Returned to the seed angle, but too far from the seed.
    NotClosed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedReport {
    pub seed: Point2,
    pub status: SeedStatus,
    /// Distance at the best return event, if any.
    pub return_distance: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct OrbitReport {
    pub alpha: f64,
    pub curves: Vec<ClosedCurve>,
    pub seeds: Vec<SeedReport>,
}

#[derive(Clone, Copy, Debug)]
pub struct OrbitOptions {
    pub tol: f64,
    /// Defaults to `1e-8 ‖A‖∞`.
    pub delta_sing: Option<f64>,
    /// Defaults to one grid spacing.
    pub eps_close: Option<f64>,
    /// Defaults to `2 eps_close`.
    pub eps_dedup: Option<f64>,
    /// Defaults to twice the domain perimeter.
    pub max_arc_length: Option<f64>,
    pub max_phi: f64,
    pub event_tol: f64,
    /// Defaults to a quarter grid spacing.
    pub vertex_spacing: Option<f64>,
    /// Fixed-point refinement of near-returns on the seed curve.
    pub refine: bool,
    /// Near-returns within this multiple of `eps_close` are refined.
    pub refine_catch: f64,
    pub refine_max_iter: usize,
    pub max_steps: usize,
    pub phi0: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            tol: DEFAULT_TOL,
            delta_sing: None,
            eps_close: None,
            eps_dedup: None,
            max_arc_length: None,
            max_phi: DEFAULT_MAX_PHI,
            event_tol: DEFAULT_EVENT_TOL,
            vertex_spacing: None,
            refine: true,
            refine_catch: 3.0,
            refine_max_iter: 12,
            max_steps: 100_000,
            phi0: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Resolved {
    tol: f64,
    delta_sing: f64,
    eps_close: f64,
    eps_dedup: f64,
    max_arc_length: f64,
    max_phi: f64,
    event_tol: f64,
    vertex_spacing: f64,
    refine: bool,
    catch_radius: f64,
    refine_max_iter: usize,
    max_steps: usize,
    phi0: f64,
}

impl OrbitOptions {
    fn resolve(&self, metric: &MetricFamily) -> Result<Resolved> {
        let grid = metric.tensor.grid();
        let h = grid.min_spacing();
        let eps_close = self.eps_close.unwrap_or(h);
        let r = Resolved {
            tol: self.tol,
            delta_sing: self.delta_sing.unwrap_or_else(|| metric.default_delta_sing()),
            eps_close,
            eps_dedup: self.eps_dedup.unwrap_or(2.0 * eps_close),
            max_arc_length: self.max_arc_length.unwrap_or(2.0 * grid.perimeter()),
            max_phi: self.max_phi,
            event_tol: self.event_tol,
            vertex_spacing: self.vertex_spacing.unwrap_or(0.25 * h),
            refine: self.refine,
            catch_radius: self.refine_catch.max(1.0) * eps_close,
            refine_max_iter: self.refine_max_iter,
            max_steps: self.max_steps,
            phi0: self.phi0,
        };
        let positive = [r.tol, r.eps_close, r.eps_dedup, r.max_arc_length, r.max_phi, r.event_tol, r.vertex_spacing];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(r.delta_sing >= 0.0) {
            return Err(Error::BadParams("orbit tolerances must be positive and finite".into()));
        }
        Ok(r)
    }
}

enum TraceEnd {
    /// Crossed `φ0 ± 2π` within the catch radius.
    Returned { winding: i32, distance: f64 },
    Stopped(SeedStatus),
}

struct Trace {
    end: TraceEnd,
    vertices: Vec<(Point2, f64)>,
    arc_length: f64,
    best_far_return: Option<f64>,
}

fn trace_orbit(metric: &MetricFamily, x0: Point2, r: &Resolved) -> Trace {
    let form = metric.form;
    let shift = metric.shift;
    let delta = r.delta_sing;
    let mut rhs = |_s: f64, y: &[f64; 3]| -> Result<[f64; 3]> {
        let (a, g) = metric.local(Vec2::new(y[0], y[1]))?;
        let (sn, cs) = y[2].sin_cos();
        Ok([cs, sn, phi_prime_local(form, shift, &a, &g, y[2], delta)?])
    };
    let mut vertices = vec![(x0, r.phi0)];
    let mut stepper_opts = StepperOptions::from_tol(r.tol);
    stepper_opts.h_min = 1e-14 * r.max_arc_length;
    stepper_opts.h_max = 4.0 * r.vertex_spacing.max(r.eps_close);
    let stop = |status, vertices, arc, far| Trace { end: TraceEnd::Stopped(status), vertices, arc_length: arc, best_far_return: far };
    let mut stepper = match Dopri5::new(&mut rhs, 0.0, [x0.x, x0.y, r.phi0], 1.0, stepper_opts) {
        Ok(s) => s,
        Err(e) => return stop(status_of(&e), vertices, 0.0, None),
    };
    let mut best_far: Option<f64> = None;
    let mut steps = 0;
    loop {
        if steps >= r.max_steps {
            return stop(SeedStatus::StepLimit, vertices, stepper.t(), best_far);
        }
        steps += 1;
        let seg = match stepper.step(&mut rhs, r.max_arc_length) {
            StepOutcome::Accepted(seg) => seg,
            StepOutcome::Failed(e) => {
                let status = match e {
                    Some(e) => status_of(&e),
                    None => underflow_status(metric, stepper.y()),
                };
                return stop(status, vertices, stepper.t(), best_far);
            }
        };
        if let Some((s_ev, winding)) = crossing_event(&seg, r.phi0, r.event_tol) {
            let y = seg.eval(s_ev);
            let x = Vec2::new(y[0], y[1]);
            let d = x.distance(x0);
            if d <= r.catch_radius {
                push_vertices(&mut vertices, &seg, seg.t0, s_ev, r.vertex_spacing);
                vertices.push((x, y[2]));
                return Trace { end: TraceEnd::Returned { winding, distance: d }, vertices, arc_length: s_ev, best_far_return: best_far };
            }
            best_far = Some(best_far.map_or(d, |b: f64| b.min(d)));
        }
        push_vertices(&mut vertices, &seg, seg.t0, seg.t1, r.vertex_spacing);
        vertices.push((Vec2::new(seg.y1[0], seg.y1[1]), seg.y1[2]));
        if (seg.y1[2] - r.phi0).abs() > r.max_phi {
            return stop(SeedStatus::WindingExceeded, vertices, seg.t1, best_far);
        }
        if seg.t1 >= r.max_arc_length {
            return stop(SeedStatus::ArcLengthExceeded, vertices, seg.t1, best_far);
        }
    }
}

/// Step-size collapse without a failing evaluation: attribute it to the
/// singular set when the denominator has become small there.
fn underflow_status(metric: &MetricFamily, y: &[f64; 3]) -> SeedStatus {
    let near_singular = metric.local(Vec2::new(y[0], y[1])).is_ok_and(|(a, _)| {
        let (s, c) = y[2].sin_cos();
        denominator(metric.form, &a, metric.shift, c, s).abs() <= NEAR_SINGULAR_REL * metric.norm_inf()
    });
    if near_singular {
        SeedStatus::Singular
    } else {
        SeedStatus::StepFailure
    }
}

fn status_of(e: &Error) -> SeedStatus {
    match e {
        Error::OutOfDomain { .. } | Error::Masked { .. } => SeedStatus::LeftDomain,
        Error::SingularDenominator { .. } => SeedStatus::Singular,
        _ => SeedStatus::StepFailure,
    }
}

/// Interior dense-output samples of `(a, b)` so that spacing stays below
/// `spacing` (the endpoint `b` is not pushed).
fn push_vertices(out: &mut Vec<(Point2, f64)>, seg: &DenseSegment<3>, a: f64, b: f64, spacing: f64) {
    let n = ((b - a) / spacing).ceil().max(1.0) as usize;
    for k in 1..n {
        let y = seg.eval(a + (b - a) * k as f64 / n as f64);
        out.push((Vec2::new(y[0], y[1]), y[2]));
    }
}

/// Earliest crossing of `φ − φ0 = ±2π` inside the segment.
fn crossing_event(seg: &DenseSegment<3>, phi0: f64, tol: f64) -> Option<(f64, i32)> {
    let mut best: Option<(f64, i32)> = None;
    for w in [1, -1] {
        let target = phi0 + TAU * w as f64;
        let g0 = seg.y0[2] - target;
        let g1 = seg.y1[2] - target;
        if g0 != 0.0 && (g0 < 0.0) != (g1 < 0.0) || g1 == 0.0 {
            let s = bisect_event(seg, seg.t0, seg.t1, |y| y[2] - target, tol);
            if best.is_none_or(|(b, _)| s < b) {
                best = Some((s, w));
            }
        }
    }
    best
}

/// Unit tangent of the seed level set at `x`.
fn section_tangent(metric: &MetricFamily, alpha: f64, x: Point2, e: Vec2) -> Option<Vec2> {
    let (_, g) = q_and_grad(metric, alpha, x, e).ok()?;
    (g.norm() > 0.0).then(|| g.rot90().normalized())
}

enum SeedResult {
    Closed(ClosedCurve),
    Rejected(SeedStatus, Option<f64>),
}

fn close_seed(metric: &MetricFamily, alpha: f64, seed: Point2, r: &Resolved) -> SeedResult {
    let accept = |trace: Trace, x0: Point2| -> SeedResult {
        let TraceEnd::Returned { winding, distance } = trace.end else { unreachable!() };
        let pts: Vec<Point2> = trace.vertices.iter().map(|v| v.0).collect();
        let area = signed_area(&pts[..pts.len() - 1]).abs();
        SeedResult::Closed(ClosedCurve {
            vertices: trace.vertices,
            alpha,
            winding,
            closure_residual: distance,
            enclosed_area: area,
            arc_length: trace.arc_length,
            seed: x0,
        })
    };
    let first = trace_orbit(metric, seed, r);
    let d0 = match first.end {
        TraceEnd::Returned { distance, .. } => distance,
        TraceEnd::Stopped(status) => {
            let status = if first.best_far_return.is_some() && status == SeedStatus::ArcLengthExceeded {
                SeedStatus::NotClosed
            } else {
                status
            };
            return SeedResult::Rejected(status, first.best_far_return);
        }
    };
    if !r.refine {
        return if d0 <= r.eps_close { accept(first, seed) } else { SeedResult::Rejected(SeedStatus::NotClosed, Some(d0)) };
    }

    let e = Vec2::unit(r.phi0);
    let Some(t_hat) = section_tangent(metric, alpha, seed, e) else {
        return if d0 <= r.eps_close { accept(first, seed) } else { SeedResult::Rejected(SeedStatus::NotClosed, Some(d0)) };
    };
    let grid_h = metric.tensor.grid().min_spacing();
    let signed = |trace: &Trace, x0: Point2| -> f64 {
        let ret = trace.vertices.last().expect("trace has vertices").0;
        (ret - x0).dot(t_hat)
    };
    let mut best = (d0, first, seed);
    let mut sigma_prev = 0.0;
    let mut d_prev = signed(&best.1, seed);
    let mut sigma = d_prev;
    let target = 1e-6 * r.eps_close;
    for _ in 0..r.refine_max_iter {
        if best.0 <= target {
            break;
        }
        let Some(x0) = snap_to_level(metric, alpha, e, seed + t_hat * sigma, r.catch_radius + 2.0 * grid_h) else { break };
        let trace = trace_orbit(metric, x0, r);
        let TraceEnd::Returned { distance, .. } = trace.end else { break };
        let d = signed(&trace, x0);
        let next = if d != d_prev { sigma - d * (sigma - sigma_prev) / (d - d_prev) } else { sigma + d };
        if distance < best.0 {
            best = (distance, trace, x0);
        }
        sigma_prev = sigma;
        d_prev = d;
        sigma = next;
        if !sigma.is_finite() || sigma.abs() > r.catch_radius + grid_h {
            break;
        }
    }
    let (d, trace, x0) = best;
    if d <= r.eps_close {
        accept(trace, x0)
    } else {
        SeedResult::Rejected(SeedStatus::NotClosed, Some(d))
    }
}

/// One orbit of the reduced flow from `(x0, opts.phi0)`, stopped at the
/// first return to the seed angle or by any of the usual limits.
#[derive(Clone, Debug, PartialEq)]
pub struct TracedOrbit {
    pub vertices: Vec<(Point2, f64)>,
    /// `Closed` or `NotClosed` for a return, otherwise the stop reason.
    pub status: SeedStatus,
    pub arc_length: f64,
}

pub fn trace_reduced_orbit(metric: &MetricFamily, x0: Point2, opts: &OrbitOptions) -> Result<TracedOrbit> {
    let r = opts.resolve(metric)?;
    let trace = trace_orbit(metric, x0, &r);
    let status = match trace.end {
        TraceEnd::Returned { distance, .. } if distance <= r.eps_close => SeedStatus::Closed,
        TraceEnd::Returned { .. } => SeedStatus::NotClosed,
        TraceEnd::Stopped(s) => s,
    };
    Ok(TracedOrbit { vertices: trace.vertices, status, arc_length: trace.arc_length })
}

/// Traces the reduced flow from every seed and keeps the closed orbits.
/// Curves closer than `eps_dedup` in Hausdorff distance are merged,
/// keeping the smallest closure residual. Output order follows seed order.
pub fn find_closed_orbits(metric: &MetricFamily, alpha: f64, seeds: &[Point2], opts: &OrbitOptions) -> Result<OrbitReport> {
    let r = opts.resolve(metric)?;
    let results: Vec<SeedResult> = seeds.par_iter().map(|s| close_seed(metric, alpha, *s, &r)).collect();
    let mut report = OrbitReport { alpha, curves: Vec::new(), seeds: Vec::with_capacity(seeds.len()) };
    let mut boxes: Vec<BoundingBox> = Vec::new();
    let mut owner: Vec<usize> = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            SeedResult::Rejected(status, d) => report.seeds.push(SeedReport { seed: seeds[i], status, return_distance: d }),
            SeedResult::Closed(curve) => {
                let pts = curve.points();
                let bb = BoundingBox::of(&pts);
                let dup = (0..report.curves.len()).find(|&k| {
                    boxes[k].hausdorff_lower_bound(&bb) < r.eps_dedup && hausdorff(&report.curves[k].points(), &pts) < r.eps_dedup
                });
                let d = Some(curve.closure_residual);
                match dup {
                    Some(k) => {
                        if curve.closure_residual < report.curves[k].closure_residual {
                            report.seeds[owner[k]].status = SeedStatus::Duplicate;
                            owner[k] = report.seeds.len();
                            report.curves[k] = curve;
                            boxes[k] = bb;
                            report.seeds.push(SeedReport { seed: seeds[i], status: SeedStatus::Closed, return_distance: d });
                        } else {
                            report.seeds.push(SeedReport { seed: seeds[i], status: SeedStatus::Duplicate, return_distance: d });
                        }
                    }
                    None => {
                        owner.push(report.seeds.len());
                        report.seeds.push(SeedReport { seed: seeds[i], status: SeedStatus::Closed, return_distance: d });
                        report.curves.push(curve);
                        boxes.push(bb);
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Seeds and closed orbits for one parameter value of the family. An empty
/// level set yields an empty report.
pub fn closed_orbits_for_alpha(
    metric: &MetricFamily,
    alpha: f64,
    seed_opts: &SeedOptions,
    orbit_opts: &OrbitOptions,
) -> Result<OrbitReport> {
    let seeds = match seed_points(metric, alpha, seed_opts) {
        Ok(s) => s,
        Err(Error::EmptySeedSet) => return Ok(OrbitReport { alpha, ..Default::default() }),
        Err(e) => return Err(e),
    };
    let mut o = *orbit_opts;
    o.phi0 = seed_opts.phi0;
    if o.delta_sing.is_none() {
        o.delta_sing = seed_opts.delta_sing;
    }
    find_closed_orbits(metric, alpha, &seeds, &o)
}

/// Largest `|½⟨e_φ, (A − αI) e_φ⟩|` over the curve's vertices.
pub fn null_residual(metric: &MetricFamily, alpha: f64, curve: &ClosedCurve) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (x, phi) in &curve.vertices {
        worst = worst.max(first_integral(metric, alpha, *x, *phi)?.abs());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug)]
pub struct HamiltonianOptions {
    /// Defaults to `1e-12 ‖A‖∞²`.
    pub delta_det: Option<f64>,
    pub condition_cap: f64,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        HamiltonianOptions { delta_det: None, condition_cap: DEFAULT_CONDITION_CAP }
    }
}

impl HamiltonianOptions {
    fn delta_det(&self, metric: &MetricFamily) -> f64 {
        self.delta_det.unwrap_or(DEFAULT_DELTA_DET_REL * metric.norm_inf().powi(2))
    }
}

/// Co-geodesic reduced flow: `dx/ds = A⁻¹ e_ψ` and
/// `dψ/ds = −½⟨∇⟨e_ψ, A⁻¹ e_ψ⟩, R e_ψ⟩`, where `ψ` is the polar angle of
/// the momentum and `A` stands for `A − αI`.
pub fn hamiltonian_rhs(
    metric: &MetricFamily,
    alpha: f64,
    x: Point2,
    psi: f64,
    opts: &HamiltonianOptions,
) -> Result<(Vec2, f64)> {
    let (a, g) = metric.local(x)?;
    let a = a.shifted(metric.shift + alpha);
    let det = a.det();
    let eig = a.eigen();
    let (lo, hi) = (eig.lambda1.abs().min(eig.lambda2.abs()), eig.lambda1.abs().max(eig.lambda2.abs()));
    if !(det.abs() >= opts.delta_det(metric)) || hi > opts.condition_cap * lo {
        return Err(Error::DegenerateMetric { det });
    }
    let inv = a.inverse().ok_or(Error::DegenerateMetric { det })?;
    let e = Vec2::unit(psi);
    let w = inv.apply(e);
    let grad = Vec2::new(-g.d1.quad(w), -g.d2.quad(w));
    Ok((w, -0.5 * grad.dot(e.rot90())))
}

#[derive(Clone, Debug)]
pub struct HamiltonianOrbit {
    pub points: Vec<Point2>,
    pub closure_residual: f64,
}

/// Traces the co-geodesic flow from `(x0, ψ0)` until the momentum angle
/// has turned by `±2π` within `catch_radius` of the start.
pub fn trace_hamiltonian_orbit(
    metric: &MetricFamily,
    alpha: f64,
    x0: Point2,
    psi0: f64,
    orbit_opts: &OrbitOptions,
    opts: &HamiltonianOptions,
) -> Result<Option<HamiltonianOrbit>> {
    let mut r = orbit_opts.resolve(metric)?;
    r.phi0 = psi0;
    let mut rhs = |_s: f64, y: &[f64; 3]| -> Result<[f64; 3]> {
        let (dx, dpsi) = hamiltonian_rhs(metric, alpha, Vec2::new(y[0], y[1]), y[2], opts)?;
        Ok([dx.x, dx.y, dpsi])
    };
    let mut so = StepperOptions::from_tol(r.tol);
    so.h_min = 1e-14 * r.max_arc_length;
    so.h_max = 4.0 * r.vertex_spacing.max(r.eps_close);
    let mut stepper = Dopri5::new(&mut rhs, 0.0, [x0.x, x0.y, psi0], 1.0, so)?;
    let mut vertices = vec![(x0, psi0)];
    for _ in 0..r.max_steps {
        let seg = match stepper.step(&mut rhs, r.max_arc_length) {
            StepOutcome::Accepted(seg) => seg,
            StepOutcome::Failed(_) => return Ok(None),
        };
        if let Some((s_ev, _)) = crossing_event(&seg, psi0, r.event_tol) {
            let y = seg.eval(s_ev);
            let x = Vec2::new(y[0], y[1]);
            if x.distance(x0) <= r.catch_radius {
                push_vertices(&mut vertices, &seg, seg.t0, s_ev, r.vertex_spacing);
                vertices.push((x, y[2]));
                return Ok(Some(HamiltonianOrbit {
                    points: vertices.into_iter().map(|v| v.0).collect(),
                    closure_residual: x.distance(x0),
                }));
            }
        }
        push_vertices(&mut vertices, &seg, seg.t0, seg.t1, r.vertex_spacing);
        vertices.push((Vec2::new(seg.y1[0], seg.y1[1]), seg.y1[2]));
        if (seg.y1[2] - psi0).abs() > r.max_phi || seg.t1 >= r.max_arc_length {
            return Ok(None);
        }
    }
    Ok(None)
}

/// Momentum angle matching a geodesic direction: the polar angle of
/// `(A − αI) e_φ`.
pub fn momentum_angle(metric: &MetricFamily, alpha: f64, x: Point2, phi: f64) -> Result<f64> {
    let a = metric.tensor_at(x)?.shifted(alpha);
    Ok(a.apply(Vec2::unit(phi)).angle())
}

/// Random admissible-looking samples inside the grid, for invariance tests.
pub fn random_samples(metric: &MetricFamily, n: usize, rng_seed: u64) -> Vec<(Point2, f64)> {
    let g = metric.tensor.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|_| {
            let x = Vec2::new(rng.gen_range(g.x1_min()..g.x1_max()), rng.gen_range(g.x2_min()..g.x2_max()));
            (x, rng.gen_range(0.0..TAU))
        })
        .collect()
}
