//! Elliptic OECS and LCS pipelines, grouping of closed curves into nested
//! families, and independent checks of the reported boundaries.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::advect::{cauchy_green, flow_map, flow_map_gradient, AdvectOptions, CauchyGreenField};
use crate::error::{Error, Result};
use crate::fieldgrid::{Grid2D, ScalarField, SymTensorField, VectorField2D};
use crate::geometry::{centroid, closed_polyline_intersections, contains_point, BoundingBox};
use crate::ingest::Velocity;
use crate::nullgeo::{
    closed_orbits_for_alpha, null_residual, ClosedCurve, FlowForm, MetricFamily, OrbitOptions, ParameterKind,
    SeedOptions, SeedReport,
};
use crate::strain::{rate_of_strain, strain_from_streamfunction, StrainField};
use crate::tensor::{Point2, SymEigen, SymTensor2, Vec2};

/// Relative `|trace S|` below which the trace-free flow expression is used.
pub const DEFAULT_TRACE_FREE_THRESHOLD: f64 = 1e-8;
/// Default stretching ratios for elliptic LCS.
pub const DEFAULT_LAMBDAS: [f64; 5] = [0.9, 0.95, 1.0, 1.05, 1.1];
/// Eigenvalue gap (relative) below which a node counts as isotropic.
const ISOTROPIC_REL_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct VortexOptions {
    pub seed: SeedOptions,
    pub orbit: OrbitOptions,
    pub advect: AdvectOptions,
    /// Auxiliary cross half-width for flow-map gradients.
    pub aux_delta: Option<f64>,
    pub trace_free_threshold: f64,
    /// Advect every LCS polyline and compare segment stretching with λ.
    pub advect_check: bool,
}

impl Default for VortexOptions {
    fn default() -> Self {
        VortexOptions {
            seed: SeedOptions::default(),
            orbit: OrbitOptions::default(),
            advect: AdvectOptions::default(),
            aux_delta: None,
            trace_free_threshold: DEFAULT_TRACE_FREE_THRESHOLD,
            advect_check: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CurveDiagnostics {
    pub null_residual: f64,
    pub stretch_error: f64,
    /// Largest relative deviation of advected segment stretch from λ.
    pub advected_segment_error: Option<f64>,
    /// Advected over initial polyline length.
    pub advected_length_ratio: Option<f64>,
    /// Largest `|sin|` of the angle between tangent and the nearer
    /// closed-form null direction.
    pub alignment_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportedCurve {
    pub curve: ClosedCurve,
    pub parameter: f64,
    pub diagnostics: CurveDiagnostics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveFamily {
    /// Sorted by enclosed area, smallest first.
    pub curves: Vec<ReportedCurve>,
    pub outermost_index: usize,
}

impl CurveFamily {
    pub fn outermost(&self) -> &ReportedCurve {
        &self.curves[self.outermost_index]
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.curves.iter().map(|c| c.parameter).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ParameterRun {
    pub parameter: f64,
    pub alpha: f64,
    pub seeds: Vec<SeedReport>,
}

#[derive(Clone, Debug, Default)]
pub struct VortexBoundaryReport {
    pub families: Vec<CurveFamily>,
    /// Curves crossing another curve; kept out of every family.
    pub invalid_nesting: Vec<ReportedCurve>,
    pub runs: Vec<ParameterRun>,
    /// Set when the tensor is isotropic at every node, so that every
    /// direction is null and no curve can be certified.
    pub degenerate_metric: bool,
}

impl VortexBoundaryReport {
    pub fn curve_count(&self) -> usize {
        self.families.iter().map(|f| f.curves.len()).sum::<usize>() + self.invalid_nesting.len()
    }

    pub fn all_curves(&self) -> impl Iterator<Item = &ReportedCurve> {
        self.families.iter().flat_map(|f| f.curves.iter()).chain(self.invalid_nesting.iter())
    }
}

fn curve_key(c: &ReportedCurve) -> (f64, f64, Point2, Point2) {
    (c.curve.enclosed_area, c.parameter, centroid(&c.curve.polygon()), c.curve.vertices[0].0)
}

fn cmp_curves(a: &ReportedCurve, b: &ReportedCurve) -> Ordering {
    let (ka, kb) = (curve_key(a), curve_key(b));
    ka.0.total_cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.x.total_cmp(&kb.2.x))
        .then(ka.2.y.total_cmp(&kb.2.y))
        .then(ka.3.x.total_cmp(&kb.3.x))
        .then(ka.3.y.total_cmp(&kb.3.y))
}

/// `inner` lies in `outer` if its centroid does and most of its vertices do.
fn encloses(outer: &[Point2], inner: &[Point2]) -> bool {
    if !contains_point(outer, centroid(inner)) {
        return false;
    }
    let inside = inner.iter().filter(|p| contains_point(outer, **p)).count();
    2 * inside > inner.len()
}

/// Groups curves into chains of nested curves. Crossing curves are set
/// aside. A curve holding several disjoint nested curves ends its family;
/// each of those starts a new family. Output does not depend on input order.
pub fn select_outermost(mut curves: Vec<ReportedCurve>) -> (Vec<CurveFamily>, Vec<ReportedCurve>) {
    curves.sort_by(cmp_curves);
    let polys: Vec<Vec<Point2>> = curves.iter().map(|c| c.curve.polygon()).collect();
    let n = curves.len();
    let mut crossing = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            if closed_polyline_intersections(&polys[i], &polys[j]) > 0 {
                crossing[i] = true;
                crossing[j] = true;
            }
        }
    }
    let valid: Vec<usize> = (0..n).filter(|i| !crossing[*i]).collect();
    let boxes: Vec<BoundingBox> = polys.iter().map(|p| BoundingBox::of(p)).collect();
    // Parent = smallest valid curve enclosing this one. Curves are sorted by
    // area, so the first enclosing candidate after `j` is the parent.
    let mut parent: Vec<Option<usize>> = vec![None; n];
    for (vi, &j) in valid.iter().enumerate() {
        for &i in &valid[vi + 1..] {
            if boxes[i].overlaps(&boxes[j]) && encloses(&polys[i], &polys[j]) {
                parent[j] = Some(i);
                break;
            }
        }
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &j in &valid {
        if let Some(p) = parent[j] {
            children[p].push(j);
        }
    }
    let mut roots: Vec<usize> = valid.iter().copied().filter(|j| parent[*j].is_none()).collect();
    let mut families = Vec::new();
    while let Some(root) = roots.pop() {
        let mut chain = vec![root];
        let mut cur = root;
        loop {
            match children[cur].len() {
                1 => {
                    cur = children[cur][0];
                    chain.push(cur);
                }
                0 => break,
                _ => {
                    roots.extend(children[cur].iter().copied());
                    break;
                }
            }
        }
        chain.sort_unstable();
        let fam: Vec<ReportedCurve> = chain.iter().map(|k| curves[*k].clone()).collect();
        families.push(CurveFamily { outermost_index: fam.len() - 1, curves: fam });
    }
    families.sort_by(|a, b| {
        let (ca, cb) = (centroid(&a.outermost().curve.polygon()), centroid(&b.outermost().curve.polygon()));
        ca.x.total_cmp(&cb.x).then(ca.y.total_cmp(&cb.y)).then_with(|| cmp_curves(a.outermost(), b.outermost()))
    });
    let invalid = (0..n).filter(|i| crossing[*i]).map(|i| curves[i].clone()).collect();
    (families, invalid)
}

/// True if every valid node has (relatively) equal eigenvalues.
fn globally_isotropic(field: &SymTensorField) -> bool {
    let scale = field.norm_inf();
    (0..field.grid().len()).filter(|k| field.is_valid_node(*k)).all(|k| {
        let a = field.node_value(k);
        let gap = ((a.a11 - a.a22).powi(2) + 4.0 * a.a12 * a.a12).sqrt();
        gap <= ISOTROPIC_REL_GAP * scale.max(f64::MIN_POSITIVE)
    })
}

fn run_family(
    metric: &MetricFamily,
    parameters: &[f64],
    opts: &VortexOptions,
    diagnose: impl Fn(&ClosedCurve, f64) -> Result<CurveDiagnostics> + Sync,
) -> Result<VortexBoundaryReport> {
    if globally_isotropic(metric.tensor()) {
        let runs = parameters
            .iter()
            .map(|p| ParameterRun { parameter: *p, alpha: metric.kind.alpha(*p), seeds: Vec::new() })
            .collect();
        return Ok(VortexBoundaryReport { runs, degenerate_metric: true, ..Default::default() });
    }
    let per_param: Vec<Result<(ParameterRun, Vec<ReportedCurve>)>> = parameters
        .par_iter()
        .map(|&p| {
            let alpha = metric.kind.alpha(p);
            let rep = closed_orbits_for_alpha(metric, alpha, &opts.seed, &opts.orbit)?;
            let curves = rep
                .curves
                .into_iter()
                .map(|c| {
                    let diagnostics = diagnose(&c, p)?;
                    Ok(ReportedCurve { curve: c, parameter: p, diagnostics })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((ParameterRun { parameter: p, alpha, seeds: rep.seeds }, curves))
        })
        .collect();
    let mut runs = Vec::new();
    let mut curves = Vec::new();
    for r in per_param {
        let (run, c) = r?;
        runs.push(run);
        curves.extend(c);
    }
    let (families, invalid_nesting) = select_outermost(curves);
    Ok(VortexBoundaryReport { families, invalid_nesting, runs, degenerate_metric: false })
}

pub enum OecsInput<'a> {
    Velocity(&'a VectorField2D),
    Streamfunction(&'a ScalarField),
}

/// `μ ∈ {−0.10, −0.09, …, 0.10} · median |s2|`.
pub fn default_mu_values(strain: &StrainField) -> Vec<f64> {
    let scale = strain.median_abs_s2();
    (-10..=10).map(|k| k as f64 * 0.01 * scale).collect()
}

/// Elliptic OECS: closed null-geodesics of `S − μI` for each `μ`. Without
/// a list, [`default_mu_values`] is used.
pub fn elliptic_oecs(
    input: OecsInput<'_>,
    mu_values: Option<&[f64]>,
    opts: &VortexOptions,
) -> Result<(VortexBoundaryReport, StrainField)> {
    if mu_values.is_some_and(|m| m.is_empty()) {
        return Err(Error::BadParams("no μ values given".into()));
    }
    let strain = match input {
        OecsInput::Velocity(v) => rate_of_strain(v)?,
        OecsInput::Streamfunction(psi) => strain_from_streamfunction(psi)?,
    };
    let defaults;
    let mu_values = match mu_values {
        Some(m) => m,
        None => {
            defaults = default_mu_values(&strain);
            &defaults
        }
    };
    let form = if strain.relative_divergence() <= opts.trace_free_threshold { FlowForm::TraceFree } else { FlowForm::General };
    let metric = MetricFamily::new(strain.tensor.clone(), ParameterKind::OecsMu).with_form(form);
    let report = run_family(&metric, mu_values, opts, |c, mu| {
        Ok(CurveDiagnostics {
            null_residual: null_residual(&metric, mu, c)?,
            stretch_error: tangential_stretch_check(c, StretchContext::Oecs(&strain), mu)?,
            ..Default::default()
        })
    })?;
    Ok((report, strain))
}

/// Closed null-geodesics of `A − αI` for each `α`, for a tensor field with
/// no particular physical meaning.
pub fn closed_null_geodesics(tensor: SymTensorField, alphas: &[f64], opts: &VortexOptions) -> Result<VortexBoundaryReport> {
    if alphas.is_empty() {
        return Err(Error::BadParams("no α values given".into()));
    }
    let metric = MetricFamily::new(tensor, ParameterKind::GenericAlpha);
    run_family(&metric, alphas, opts, |c, alpha| {
        Ok(CurveDiagnostics {
            null_residual: null_residual(&metric, alpha, c)?,
            stretch_error: tangential_stretch_check(c, StretchContext::Generic(metric.tensor()), alpha)?,
            ..Default::default()
        })
    })
}

pub struct LcsOutput {
    pub report: VortexBoundaryReport,
    pub cauchy_green: CauchyGreenField,
}

/// Elliptic LCS over `[t0, t0 + T]`: closed null-geodesics of `C − λ²I`
/// with `C` computed on `grid`.
pub fn elliptic_lcs<V: Velocity + ?Sized>(
    v: &V,
    grid: &Grid2D,
    t0: f64,
    t: f64,
    lambda_values: &[f64],
    opts: &VortexOptions,
) -> Result<LcsOutput> {
    if lambda_values.is_empty() || lambda_values.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::BadParams("λ values must be positive and non-empty".into()));
    }
    let grad = flow_map_gradient(v, grid, t0, t0 + t, opts.aux_delta, &opts.advect)?;
    let cg = cauchy_green(&grad)?;
    let report = lcs_from_cauchy_green(v, &cg, lambda_values, opts)?;
    Ok(LcsOutput { report, cauchy_green: cg })
}

/// The LCS pipeline on a precomputed Cauchy–Green field.
pub fn lcs_from_cauchy_green<V: Velocity + ?Sized>(
    v: &V,
    cg: &CauchyGreenField,
    lambda_values: &[f64],
    opts: &VortexOptions,
) -> Result<VortexBoundaryReport> {
    let metric = MetricFamily::new(cg.tensor.clone(), ParameterKind::LcsLambdaSquared);
    run_family(&metric, lambda_values, opts, |c, lambda| {
        let mut d = CurveDiagnostics {
            null_residual: null_residual(&metric, lambda * lambda, c)?,
            stretch_error: tangential_stretch_check(c, StretchContext::Lcs(cg), lambda)?,
            alignment_error: Some(eta_alignment_error(c, cg, lambda)?),
            ..Default::default()
        };
        if opts.advect_check {
            if let Some(a) = advected_stretch(v, c, cg.t0, cg.t1, lambda, &opts.advect)? {
                d.advected_segment_error = Some(a.max_segment_error);
                d.advected_length_ratio = Some(a.length_ratio);
            }
        }
        Ok(d)
    })
}

/// Null directions `η±` of `C − λ²I` written in the eigenbasis of `C`.
pub fn eta_from_eigen(eig: &SymEigen, lambda: f64) -> Result<(Vec2, Vec2)> {
    let l2 = lambda * lambda;
    if eig.degenerate {
        return Err(Error::NotDefined("repeated eigenvalues".into()));
    }
    if l2 < eig.lambda1 || l2 > eig.lambda2 {
        return Err(Error::NotDefined(format!("λ² = {l2} outside [{}, {}]", eig.lambda1, eig.lambda2)));
    }
    let gap = eig.lambda2 - eig.lambda1;
    let a = ((eig.lambda2 - l2) / gap).max(0.0).sqrt();
    let b = ((l2 - eig.lambda1) / gap).max(0.0).sqrt();
    Ok((eig.xi1 * a + eig.xi2 * b, eig.xi1 * a - eig.xi2 * b))
}

/// `η±` at `x` from the interpolated Cauchy–Green tensor.
pub fn eta_field(cg: &CauchyGreenField, lambda: f64, x: Point2) -> Result<(Vec2, Vec2)> {
    eta_from_eigen(&cg.tensor.interpolate(x)?.eigen(), lambda)
}

/// Largest `|sin|` between the curve tangent and the nearer of `η±` over
/// vertices where `λ1 < λ² < λ2`.
pub fn eta_alignment_error(curve: &ClosedCurve, cg: &CauchyGreenField, lambda: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let l2 = lambda * lambda;
    for (x, phi) in &curve.vertices {
        let eig = cg.tensor.interpolate(*x)?.eigen();
        if eig.degenerate || !(eig.lambda1 < l2 && l2 < eig.lambda2) {
            continue;
        }
        let (p, m) = eta_from_eigen(&eig, lambda)?;
        let e = Vec2::unit(*phi);
        worst = worst.max(e.cross(p).abs().min(e.cross(m).abs()));
    }
    Ok(worst)
}

pub enum StretchContext<'a> {
    Lcs(&'a CauchyGreenField),
    Oecs(&'a StrainField),
    Generic(&'a SymTensorField),
}

/// LCS: largest `|√⟨e, C e⟩ − λ| / λ`; otherwise largest `|⟨e, A e⟩ − p|`
/// for the parameter `p`. Taken over the curve's vertices and tangents.
pub fn tangential_stretch_check(curve: &ClosedCurve, ctx: StretchContext<'_>, parameter: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (x, phi) in &curve.vertices {
        let e = Vec2::unit(*phi);
        let err = match &ctx {
            StretchContext::Lcs(cg) => (cg.tensor.interpolate(*x)?.quad(e).max(0.0).sqrt() - parameter).abs() / parameter,
            StretchContext::Oecs(s) => (s.tensor.interpolate(*x)?.quad(e) - parameter).abs(),
            StretchContext::Generic(a) => (a.interpolate(*x)?.quad(e) - parameter).abs(),
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdvectedStretch {
    pub max_segment_error: f64,
    pub length_ratio: f64,
}

/// Advects the traced vertices from `t0` to `t1` and compares the stretching
/// of each orbit segment with `lambda`. The gap between the return point
/// and the start is not a tangent segment and is left out. `None` if a
/// vertex leaves the domain.
pub fn advected_stretch<V: Velocity + ?Sized>(
    v: &V,
    curve: &ClosedCurve,
    t0: f64,
    t1: f64,
    lambda: f64,
    opts: &AdvectOptions,
) -> Result<Option<AdvectedStretch>> {
    let pts = curve.points();
    let moved: Vec<Option<Point2>> = pts.par_iter().map(|p| flow_map(v, *p, t0, t1, opts)).collect::<Result<_>>()?;
    let Some(moved) = moved.into_iter().collect::<Option<Vec<_>>>() else { return Ok(None) };
    let (mut l0, mut l1, mut worst) = (0.0, 0.0, 0.0f64);
    for i in 1..pts.len() {
        let a = pts[i - 1].distance(pts[i]);
        let b = moved[i - 1].distance(moved[i]);
        l0 += a;
        l1 += b;
        if a > 0.0 {
            worst = worst.max((b / a - lambda).abs() / lambda);
        }
    }
    Ok(Some(AdvectedStretch { max_segment_error: worst, length_ratio: l1 / l0 }))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Singularities {
    pub points: Vec<Point2>,
    /// Every node is isotropic; isolated points are meaningless then.
    pub globally_degenerate: bool,
}

fn bilinear(c: [f64; 4], s: f64, t: f64) -> (f64, f64, f64) {
    // Corners ordered (0,0), (1,0), (1,1), (0,1).
    let v = c[0] * (1.0 - s) * (1.0 - t) + c[1] * s * (1.0 - t) + c[2] * s * t + c[3] * (1.0 - s) * t;
    let ds = (c[1] - c[0]) * (1.0 - t) + (c[2] - c[3]) * t;
    let dt = (c[3] - c[0]) * (1.0 - s) + (c[2] - c[1]) * s;
    (v, ds, dt)
}

fn straddles(c: [f64; 4]) -> bool {
    let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo <= 0.0 && hi >= 0.0
}

/// Points of repeated eigenvalues: common zeros of `a11 − a22` and `a12`,
/// found per cell on the bilinear interpolant of nodal values.
pub fn locate_singularities(field: &SymTensorField) -> Singularities {
    let grid = field.grid();
    if globally_isotropic(field) {
        return Singularities { points: Vec::new(), globally_degenerate: true };
    }
    let mut points: Vec<Point2> = Vec::new();
    for i in 0..grid.n1() - 1 {
        for j in 0..grid.n2() - 1 {
            let idx = [grid.index(i, j), grid.index(i + 1, j), grid.index(i + 1, j + 1), grid.index(i, j + 1)];
            if idx.iter().any(|k| !field.is_valid_node(*k)) {
                continue;
            }
            let vals: Vec<SymTensor2> = idx.iter().map(|k| field.node_value(*k)).collect();
            let f = [0, 1, 2, 3].map(|c| vals[c].a11 - vals[c].a22);
            let g = [0, 1, 2, 3].map(|c| vals[c].a12);
            if !straddles(f) || !straddles(g) {
                continue;
            }
            let scale = f.iter().chain(&g).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            for (s0, t0) in [(0.5, 0.5), (0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
                let (mut s, mut t) = (s0, t0);
                for _ in 0..30 {
                    let (fv, fs, ft) = bilinear(f, s, t);
                    let (gv, gs, gt) = bilinear(g, s, t);
                    let det = fs * gt - ft * gs;
                    if det == 0.0 {
                        break;
                    }
                    let ds = (fv * gt - gv * ft) / det;
                    let dt = (fs * gv - gs * fv) / det;
                    s -= ds;
                    t -= dt;
                    if ds.abs() + dt.abs() < 1e-14 {
                        break;
                    }
                }
                let (fv, _, _) = bilinear(f, s, t);
                let (gv, _, _) = bilinear(g, s, t);
                let inside = (-1e-9..=1.0 + 1e-9).contains(&s) && (-1e-9..=1.0 + 1e-9).contains(&t);
                if inside && fv.abs() + gv.abs() <= 1e-10 * scale {
                    let p = Vec2::new(grid.x1_min() + (i as f64 + s) * grid.h1(), grid.x2_min() + (j as f64 + t) * grid.h2());
                    if points.iter().all(|q| q.distance(p) > 1e-6 * grid.min_spacing()) {
                        points.push(p);
                    }
                }
            }
        }
    }
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    Singularities { points, globally_degenerate: false }
}
