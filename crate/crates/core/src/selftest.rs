//! Built-in analytic acceptance suite. Every check runs on constructed or
//! closed-form inputs and reports pass or fail with the measured values.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advect::{cauchy_green, flow_map_gradient, ftle, AdvectOptions};
use crate::error::Result;
use crate::export::{curve_records, write_curves_csv_to};
use crate::fieldgrid::{Grid2D, SymTensorField};
use crate::geometry::{closed_polyline_intersections, hausdorff};
use crate::ingest::{polar_metric_demo, AnalyticFlow, BoundedFlow};
use crate::nullgeo::{
    alpha_invariance_check, first_integral, momentum_angle, phi_prime, random_samples, seed_points,
    trace_hamiltonian_orbit, trace_reduced_orbit, HamiltonianOptions, MetricFamily, OrbitOptions, ParameterKind,
    SeedOptions,
};
use crate::strain::{okubo_weiss, rate_of_strain};
use crate::tensor::SymTensor2;
use crate::vortex::{closed_null_geodesics, elliptic_lcs, LcsOutput, VortexBoundaryReport, VortexOptions};

pub const INVARIANCE_SAMPLES: usize = 10_000;
pub const INVARIANCE_TOL: f64 = 1e-12;
pub const FIRST_INTEGRAL_REL_TOL: f64 = 1e-6;
pub const RADIAL_TOL: f64 = 1e-3;
pub const HAUSDORFF_TOL: f64 = 1e-4;
pub const FTLE_SADDLE_TOL: f64 = 1e-3;
pub const FTLE_ROTATION_TOL: f64 = 1e-6;
pub const OW_TOL: f64 = 1e-10;
pub const STRETCH_TOL: f64 = 0.02;
pub const ALIGNMENT_TOL: f64 = 1e-3;
/// Parameters of the polar demonstration family; curve `α` is the circle
/// of radius `1 + α`.
pub const POLAR_ALPHAS: [f64; 5] = [-0.2, -0.1, 0.0, 0.1, 0.2];
pub const GYRE_LAMBDAS: [f64; 3] = [0.9, 1.0, 1.1];
pub const GYRE_PERIOD: f64 = 10.0;

#[derive(Clone, Debug)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:>2} {} ({:.2} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

fn outcome(id: u32, name: &'static str, start: Instant, limit: Option<f64>, check: Result<(bool, String)>) -> CriterionOutcome {
    let seconds = start.elapsed().as_secs_f64();
    let (mut passed, mut detail) = check.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(limit) = limit {
        if seconds >= limit {
            passed = false;
            detail.push_str(&format!("; over the {limit} s budget"));
        }
    }
    CriterionOutcome { id, name, passed, detail, seconds }
}

/// A smooth random tensor field on `[0, 1]²` built from a few Fourier modes.
pub fn random_smooth_tensor(grid: &Grid2D, seed: u64) -> Result<SymTensorField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<[f64; 6]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]
        })
        .collect();
    SymTensorField::from_fn(grid.clone(), |x| {
        modes.iter().fold(SymTensor2::ZERO, |acc, m| {
            let w = (m[0] * x.x + m[1] * x.y + m[2]).sin();
            acc.add(&SymTensor2::new(m[3] * w, m[4] * w, m[5] * w))
        })
    })
}

/// `φ′` of `A` against `φ′` of the family member `A − αI` (absolute
/// tolerance), and against fields rebuilt from shifted nodal values. The
/// rebuilt fields carry round-off of size `ε |α|` in their entries, which
/// the formula amplifies in proportion to `|φ′|`, so that comparison is
/// scaled by `max(1, |φ′|)`.
pub fn criterion_1() -> CriterionOutcome {
    let start = Instant::now();
    let check = (|| {
        let grid = Grid2D::new(0.0, 1.0, 0.0, 1.0, 41, 41)?;
        let field = random_smooth_tensor(&grid, 7)?;
        let metric = MetricFamily::new(field.clone(), ParameterKind::GenericAlpha);
        let samples = random_samples(&metric, INVARIANCE_SAMPLES + INVARIANCE_SAMPLES / 5, 11);
        let family = alpha_invariance_check(&metric, &samples, 13);

        let delta = metric.default_delta_sing();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rebuilt = (0..8)
            .map(|_| {
                let alpha: f64 = rng.gen_range(-10.0..=10.0);
                let t = SymTensorField::new(
                    grid.clone(),
                    field.a11().iter().map(|a| a - alpha).collect(),
                    field.a12().to_vec(),
                    field.a22().iter().map(|a| a - alpha).collect(),
                )?;
                Ok(MetricFamily::new(t, ParameterKind::GenericAlpha))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut checked, mut worst_abs, mut worst_rel) = (0usize, 0.0f64, 0.0f64);
        for (k, (x, phi)) in samples.iter().enumerate() {
            let shifted = &rebuilt[k % rebuilt.len()];
            if let (Ok(a), Ok(b)) = (phi_prime(&metric, *x, *phi, delta), phi_prime(shifted, *x, *phi, delta)) {
                checked += 1;
                worst_abs = worst_abs.max((a - b).abs());
                worst_rel = worst_rel.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        let passed = family.checked >= INVARIANCE_SAMPLES
            && checked >= INVARIANCE_SAMPLES
            && family.max_difference <= INVARIANCE_TOL
            && worst_rel <= INVARIANCE_TOL;
        Ok((
            passed,
            format!(
                "family member: max |Δφ′| = {:.2e} over {} samples; rebuilt fields: max |Δφ′| / max(1, |φ′|) = {worst_rel:.2e} \
                 (absolute {worst_abs:.2e}) over {checked} samples",
                family.max_difference, family.checked
            ),
        ))
    })();
    outcome(1, "alpha-independence", start, Some(5.0), check)
}

pub struct PolarRun {
    pub metric: MetricFamily,
    pub report: VortexBoundaryReport,
    pub seconds: f64,
}

pub fn polar_grid() -> Result<Grid2D> {
    Grid2D::new(-2.0, 2.0, -2.0, 2.0, 81, 81)
}

pub fn polar_run() -> Result<PolarRun> {
    let start = Instant::now();
    let tensor = polar_metric_demo(&polar_grid()?)?;
    let metric = MetricFamily::new(tensor.clone(), ParameterKind::GenericAlpha);
    let report = closed_null_geodesics(tensor, &POLAR_ALPHAS, &VortexOptions::default())?;
    Ok(PolarRun { metric, report, seconds: start.elapsed().as_secs_f64() })
}

/// First integral along every orbit traced from the `α = 0` seeds.
pub fn criterion_2(polar: &PolarRun) -> CriterionOutcome {
    let start = Instant::now();
    let check = (|| {
        let m = &polar.metric;
        let seeds = seed_points(m, 0.0, &SeedOptions::default())?;
        let opts = OrbitOptions::default();
        let mut worst: f64 = 0.0;
        for s in &seeds {
            let orbit = trace_reduced_orbit(m, *s, &opts)?;
            for (x, phi) in &orbit.vertices {
                worst = worst.max(first_integral(m, 0.0, *x, *phi)?.abs());
            }
        }
        let bound = FIRST_INTEGRAL_REL_TOL * m.norm_inf();
        Ok((worst <= bound, format!("max |q| = {worst:.2e} over {} orbits (bound {bound:.2e})", seeds.len())))
    })();
    outcome(2, "first-integral conservation", start, Some(10.0), check)
}

/// Unit circle at `α = 0`.
pub fn criterion_3(polar: &PolarRun) -> CriterionOutcome {
    let start = Instant::now();
    let eps_close = polar.metric.tensor().grid().min_spacing();
    let at_zero: Vec<_> = polar.report.all_curves().filter(|c| c.parameter == 0.0).collect();
    let best = at_zero
        .iter()
        .map(|c| {
            let dev = c.curve.vertices.iter().map(|(x, _)| (x.norm() - 1.0).abs()).fold(0.0, f64::max);
            (dev, c.curve.winding, c.curve.closure_residual)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let check = Ok(match best {
        Some((dev, w, res)) => (
            dev <= RADIAL_TOL && w.abs() == 1 && res <= eps_close,
            format!("{} curve(s); radial deviation {dev:.2e}, winding {w}, closure {res:.2e}", at_zero.len()),
        ),
        None => (false, "no closed curve at α = 0".into()),
    });
    let mut o = outcome(3, "known closed null-geodesic", start, None, check);
    o.seconds += polar.seconds;
    if o.seconds >= 10.0 {
        o.passed = false;
        o.detail.push_str("; over the 10 s budget");
    }
    o
}

/// The unit circle traced again with the momentum-form flow.
pub fn criterion_4(polar: &PolarRun) -> CriterionOutcome {
    let start = Instant::now();
    let check = (|| {
        let Some(c) = polar.report.all_curves().find(|c| c.parameter == 0.0) else {
            return Ok((false, "no α = 0 curve to compare".into()));
        };
        let (x0, phi0) = c.curve.vertices[0];
        let psi0 = momentum_angle(&polar.metric, 0.0, x0, phi0)?;
        let orbit = trace_hamiltonian_orbit(
            &polar.metric,
            0.0,
            x0,
            psi0,
            &OrbitOptions::default(),
            &HamiltonianOptions::default(),
        )?;
        Ok(match orbit {
            Some(h) => {
                let d = hausdorff(&h.points, &c.curve.points());
                (d <= HAUSDORFF_TOL, format!("Hausdorff distance {d:.2e}"))
            }
            None => (false, "momentum-form orbit did not close".into()),
        })
    })();
    outcome(4, "Lagrangian/Hamiltonian equivalence", start, None, check)
}

/// FTLE of the saddle and of solid rotation.
pub fn criterion_5() -> CriterionOutcome {
    let start = Instant::now();
    let check = (|| {
        let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 64, 64)?;
        let aux = grid.min_spacing() / 10.0;
        let opts = AdvectOptions::default();
        let mut worst = [0.0f64; 2];
        for (k, flow) in [AnalyticFlow::Saddle, AnalyticFlow::SolidRotation { omega: 1.0 }].into_iter().enumerate() {
            let v = BoundedFlow::new(flow, (-10.0, 10.0, -10.0, 10.0))?;
            let cg = cauchy_green(&flow_map_gradient(&v, &grid, 0.0, 1.0, Some(aux), &opts)?)?;
            let f = ftle(&cg, 1.0)?;
            let target = if k == 0 { 1.0 } else { 0.0 };
            worst[k] = f.values().iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
        }
        Ok((
            worst[0] <= FTLE_SADDLE_TOL && worst[1] <= FTLE_ROTATION_TOL,
            format!("saddle max |Λ − 1| = {:.2e}; rotation max |Λ| = {:.2e}", worst[0], worst[1]),
        ))
    })();
    outcome(5, "FTLE analytic value", start, Some(30.0), check)
}

/// Okubo–Weiss of solid rotation and of the saddle.
pub fn criterion_6() -> CriterionOutcome {
    let start = Instant::now();
    let check = (|| {
        let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 33, 33)?;
        let mut worst = [0.0f64; 2];
        for (k, (flow, target)) in
            [(AnalyticFlow::SolidRotation { omega: 1.0 }, -4.0), (AnalyticFlow::Saddle, 1.0)].into_iter().enumerate()
        {
            let ow = okubo_weiss(&rate_of_strain(&flow.sample(&grid, 0.0)?)?)?;
            worst[k] = ow.values().iter().map(|v| (v - target).abs()).fold(0.0, f64::max);
        }
        Ok((
            worst[0] <= OW_TOL && worst[1] <= OW_TOL,
            format!("rotation max |OW + 4| = {:.2e}; saddle max |OW − 1| = {:.2e}", worst[0], worst[1]),
        ))
    })();
    outcome(6, "Okubo-Weiss analytic values", start, None, check)
}

pub fn gyre_grid() -> Result<Grid2D> {
    Grid2D::new(0.0, 2.0, 0.0, 1.0, 301, 151)
}

/// The double-gyre LCS pipeline over one forcing period.
pub fn gyre_lcs() -> Result<LcsOutput> {
    let grid = gyre_grid()?;
    let v = BoundedFlow::on_grid(AnalyticFlow::double_gyre(), &grid)?;
    elliptic_lcs(&v, &grid, 0.0, GYRE_PERIOD, &GYRE_LAMBDAS, &VortexOptions::default())
}

pub struct GyreRun {
    pub output: LcsOutput,
    pub seconds: f64,
}

pub fn gyre_run() -> Result<GyreRun> {
    let start = Instant::now();
    let output = gyre_lcs()?;
    Ok(GyreRun { output, seconds: start.elapsed().as_secs_f64() })
}

/// Advected segment stretch of every double-gyre boundary.
pub fn criterion_7(gyre: &GyreRun) -> CriterionOutcome {
    let start = Instant::now();
    let curves: Vec<_> = gyre.output.report.all_curves().collect();
    let errs: Vec<Option<f64>> = curves.iter().map(|c| c.diagnostics.advected_segment_error).collect();
    let worst = errs.iter().flatten().copied().fold(0.0, f64::max);
    let all_checked = errs.iter().all(Option::is_some);
    let passed = !curves.is_empty() && all_checked && worst <= STRETCH_TOL;
    let detail = format!(
        "{} boundar{} over λ = {:?}; worst segment error {:.2e}{}",
        curves.len(),
        if curves.len() == 1 { "y" } else { "ies" },
        GYRE_LAMBDAS,
        worst,
        if all_checked { "" } else { "; some curves left the domain when advected" }
    );
    let mut o = outcome(7, "elliptic LCS stretch fidelity", start, None, Ok((passed, detail)));
    o.seconds += gyre.seconds;
    if o.seconds >= 300.0 {
        o.passed = false;
        o.detail.push_str("; over the 300 s budget");
    }
    o
}

/// Tangent alignment with the closed-form null directions.
pub fn criterion_8(gyre: &GyreRun) -> CriterionOutcome {
    let start = Instant::now();
    let curves: Vec<_> = gyre.output.report.all_curves().collect();
    let worst = curves.iter().filter_map(|c| c.diagnostics.alignment_error).fold(0.0, f64::max);
    let passed = !curves.is_empty() && curves.iter().all(|c| c.diagnostics.alignment_error.is_some()) && worst <= ALIGNMENT_TOL;
    let detail = format!("{} boundaries; max |sin| = {worst:.2e}", curves.len());
    outcome(8, "eta alignment", start, None, Ok((passed, detail)))
}

fn family_intersections(report: &VortexBoundaryReport) -> (usize, usize) {
    let (mut pairs, mut hits) = (0, 0);
    for fam in &report.families {
        for i in 0..fam.curves.len() {
            for j in i + 1..fam.curves.len() {
                pairs += 1;
                hits += closed_polyline_intersections(&fam.curves[i].curve.polygon(), &fam.curves[j].curve.polygon());
            }
        }
    }
    (pairs, hits)
}

/// Curves within a family never cross.
pub fn criterion_9(polar: &PolarRun, gyre: &GyreRun) -> CriterionOutcome {
    let start = Instant::now();
    let (p1, h1) = family_intersections(&polar.report);
    let (p2, h2) = family_intersections(&gyre.output.report);
    let nested = polar.report.families.iter().map(|f| f.curves.len()).max().unwrap_or(0);
    let passed = h1 + h2 == 0 && nested == POLAR_ALPHAS.len();
    let detail = format!(
        "polar family of {nested} curves over α = {POLAR_ALPHAS:?}: {h1} crossings in {p1} pairs; double gyre: {h2} crossings in {p2} pairs"
    );
    outcome(9, "non-intersection across parameters", start, None, Ok((passed, detail)))
}

/// A constant tensor has a straight-line null flow and no closed curves.
pub fn criterion_10() -> CriterionOutcome {
    let start = Instant::now();
    let check = (|| {
        let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 21, 21)?;
        let tensor = SymTensorField::from_fn(grid, |_| SymTensor2::new(1.0, 0.0, -1.0))?;
        let metric = MetricFamily::new(tensor.clone(), ParameterKind::GenericAlpha);
        let mut worst: f64 = 0.0;
        for (x, phi) in random_samples(&metric, 2000, 5) {
            // Directions on the singular set of this metric are skipped.
            if let Ok(v) = phi_prime(&metric, x, phi, 1e-6) {
                worst = worst.max(v.abs());
            }
        }
        let alphas = [-0.5, 0.0, 0.5, 0.9];
        let report = closed_null_geodesics(tensor, &alphas, &VortexOptions::default())?;
        let n = report.curve_count();
        Ok((worst <= 1e-14 && n == 0, format!("max |φ′| = {worst:.2e}; {n} closed curves over α = {alphas:?}")))
    })();
    outcome(10, "constant-tensor degeneracy", start, None, check)
}

fn csv_bytes(report: &VortexBoundaryReport) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_curves_csv_to(&curve_records(report), &mut bytes)?;
    Ok(bytes)
}

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| crate::error::Error::BadParams(e.to_string()))?;
    Ok(pool.install(f))
}

/// Repeats the polar and double-gyre runs on one and on four worker
/// threads and compares the curve CSV bytes with the earlier runs.
pub fn criterion_11(polar: &PolarRun, gyre: &GyreRun) -> CriterionOutcome {
    let start = Instant::now();
    let check = (|| {
        let polar_ref = csv_bytes(&polar.report)?;
        let gyre_ref = csv_bytes(&gyre.output.report)?;
        let mut same = true;
        let mut parts = Vec::new();
        for threads in [1, 4] {
            let p = with_threads(threads, polar_run)??;
            let g = with_threads(threads, gyre_lcs)??;
            let (sp, sg) = (csv_bytes(&p.report)? == polar_ref, csv_bytes(&g.report)? == gyre_ref);
            same &= sp && sg;
            parts.push(format!("{threads} thread(s): polar {}, double gyre {}", identical(sp), identical(sg)));
        }
        Ok((same, format!("{} ({} and {} bytes)", parts.join("; "), polar_ref.len(), gyre_ref.len())))
    })();
    outcome(11, "determinism", start, None, check)
}

fn identical(b: bool) -> &'static str {
    if b {
        "identical"
    } else {
        "differs"
    }
}

/// Outcomes of every criterion plus the pipeline runs they used.
pub struct SuiteResult {
    pub outcomes: Vec<CriterionOutcome>,
    pub polar: Option<PolarRun>,
    pub gyre: Option<GyreRun>,
}

/// Runs every criterion in order.
pub fn run_all() -> Vec<CriterionOutcome> {
    run_suite().outcomes
}

pub fn run_suite() -> SuiteResult {
    let mut out = vec![criterion_1()];
    let polar = polar_run();
    let gyre = gyre_run();
    match &polar {
        Ok(p) => out.extend([criterion_2(p), criterion_3(p), criterion_4(p)]),
        Err(e) => {
            for (id, name) in [(2, "first-integral conservation"), (3, "known closed null-geodesic"), (4, "Lagrangian/Hamiltonian equivalence")] {
                out.push(CriterionOutcome { id, name, passed: false, detail: format!("polar run failed: {e}"), seconds: 0.0 });
            }
        }
    }
    out.extend([criterion_5(), criterion_6()]);
    match &gyre {
        Ok(g) => out.extend([criterion_7(g), criterion_8(g)]),
        Err(e) => {
            for (id, name) in [(7, "elliptic LCS stretch fidelity"), (8, "eta alignment")] {
                out.push(CriterionOutcome { id, name, passed: false, detail: format!("double-gyre run failed: {e}"), seconds: 0.0 });
            }
        }
    }
    match (&polar, &gyre) {
        (Ok(p), Ok(g)) => out.push(criterion_9(p, g)),
        _ => out.push(CriterionOutcome { id: 9, name: "non-intersection across parameters", passed: false, detail: "a pipeline run failed".into(), seconds: 0.0 }),
    }
    out.push(criterion_10());
    match (&polar, &gyre) {
        (Ok(p), Ok(g)) => out.push(criterion_11(p, g)),
        _ => out.push(CriterionOutcome { id: 11, name: "determinism", passed: false, detail: "a pipeline run failed".into(), seconds: 0.0 }),
    }
    SuiteResult { outcomes: out, polar: polar.ok(), gyre: gyre.ok() }
}
