//! Uniform rectilinear grids and gridded fields.
//!
//! Every field is interpolated with a tensor-product cubic spline
//! (not-a-knot end conditions). The spline is converted once, at
//! construction, into per-node Hermite data `(f, ∂₁f, ∂₂f, ∂₁₂f)`, so each
//! query evaluates a single bicubic patch. Gradients and Hessians are exact
//! derivatives of that patch, which keeps values and gradients consistent.
//!
//! Samples are stored row-major with `x1` as the slow axis: node `(i, j)`
//! lives at index `i * n2 + j`.
//!
//! Second derivatives of the interpolant are continuous but only piecewise
//! linear per cell; when they feed a downstream tensor (streamfunction
//! strain) the grid should resolve the smallest structure of interest by at
//! least 8 to 10 nodes.

use crate::error::{Error, Result};
use crate::tensor::{Point2, SymTensor2, TensorGradient, Vec2};

/// Query points within this many grid spacings outside the box are clamped
/// onto it; anything further out is rejected.
const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    x1_min: f64,
    x1_max: f64,
    x2_min: f64,
    x2_max: f64,
    n1: usize,
    n2: usize,
}

impl Grid2D {
    pub fn new(x1_min: f64, x1_max: f64, x2_min: f64, x2_max: f64, n1: usize, n2: usize) -> Result<Self> {
        let finite = [x1_min, x1_max, x2_min, x2_max].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if !(x1_min < x1_max && x2_min < x2_max) {
            return Err(Error::InvalidGrid(format!(
                "empty box [{x1_min}, {x1_max}] x [{x2_min}, {x2_max}]"
            )));
        }
        if n1 < 4 || n2 < 4 {
            return Err(Error::InvalidGrid(format!("need at least 4x4 nodes, got {n1}x{n2}")));
        }
        Ok(Grid2D { x1_min, x1_max, x2_min, x2_max, n1, n2 })
    }

    pub fn x1_min(&self) -> f64 {
        self.x1_min
    }
    pub fn x1_max(&self) -> f64 {
        self.x1_max
    }
    pub fn x2_min(&self) -> f64 {
        self.x2_min
    }
    pub fn x2_max(&self) -> f64 {
        self.x2_max
    }
    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn h1(&self) -> f64 {
        (self.x1_max - self.x1_min) / (self.n1 - 1) as f64
    }

    pub fn h2(&self) -> f64 {
        (self.x2_max - self.x2_min) / (self.n2 - 1) as f64
    }

    pub fn min_spacing(&self) -> f64 {
        self.h1().min(self.h2())
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    pub fn node(&self, i: usize, j: usize) -> Point2 {
        // Exact endpoints, no accumulated rounding at the far edge.
        let x = if i + 1 == self.n1 { self.x1_max } else { self.x1_min + i as f64 * self.h1() };
        let y = if j + 1 == self.n2 { self.x2_max } else { self.x2_min + j as f64 * self.h2() };
        Point2::new(x, y)
    }

    /// Node coordinates for flat index `k`.
    pub fn node_at(&self, k: usize) -> Point2 {
        self.node(k / self.n2, k % self.n2)
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x1_min && p.x <= self.x1_max && p.y >= self.x2_min && p.y <= self.x2_max
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * ((self.x1_max - self.x1_min) + (self.x2_max - self.x2_min))
    }

    /// Cell index and local coordinates in `[0, 1]²` for `p`.
    pub(crate) fn locate(&self, p: Point2) -> Result<CellPos> {
        if !p.is_finite() {
            return Err(Error::out_of_domain(p));
        }
        let (h1, h2) = (self.h1(), self.h2());
        let u = (p.x - self.x1_min) / h1;
        let v = (p.y - self.x2_min) / h2;
        let last1 = (self.n1 - 1) as f64;
        let last2 = (self.n2 - 1) as f64;
        if u < -BOUNDARY_SLACK || u > last1 + BOUNDARY_SLACK || v < -BOUNDARY_SLACK || v > last2 + BOUNDARY_SLACK {
            return Err(Error::out_of_domain(p));
        }
        let u = u.clamp(0.0, last1);
        let v = v.clamp(0.0, last2);
        let i = (u.floor() as usize).min(self.n1 - 2);
        let j = (v.floor() as usize).min(self.n2 - 2);
        Ok(CellPos { i, j, s: u - i as f64, t: v - j as f64 })
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct CellPos {
    pub i: usize,
    pub j: usize,
    pub s: f64,
    pub t: f64,
}

/// Value, gradient and Hessian `(f11, f12, f22)` of an interpolant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec2,
    pub hess: SymTensor2,
}

/// Not-a-knot cubic spline slopes for uniformly spaced samples.
///
/// Solves for the second derivatives `M`; with uniform spacing the
/// not-a-knot rows decouple to `6 M_1 = r_1` and `6 M_{n-2} = r_{n-2}`.
fn spline_slopes(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    debug_assert!(n >= 4 && out.len() == n);
    let mut rhs = vec![0.0; n];
    for i in 1..n - 1 {
        rhs[i] = 6.0 * (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h);
    }
    // Tridiagonal system on 1..=n-2 with rows [1, 4, 1], except the first
    // and last rows which are [6, 0] and [0, 6].
    let m_len = n - 2;
    let mut diag = vec![4.0; m_len];
    let mut upper = vec![1.0; m_len];
    let mut lower = vec![1.0; m_len];
    diag[0] = 6.0;
    upper[0] = 0.0;
    diag[m_len - 1] = 6.0;
    lower[m_len - 1] = 0.0;
    let mut d: Vec<f64> = rhs[1..n - 1].to_vec();
    // Thomas algorithm.
    for k in 1..m_len {
        let w = lower[k] / diag[k - 1];
        diag[k] -= w * upper[k - 1];
        d[k] -= w * d[k - 1];
    }
    let mut m = vec![0.0; n];
    m[n - 2] = d[m_len - 1] / diag[m_len - 1];
    for k in (0..m_len - 1).rev() {
        m[k + 1] = (d[k] - upper[k] * m[k + 2]) / diag[k];
    }
    m[0] = 2.0 * m[1] - m[2];
    m[n - 1] = 2.0 * m[n - 2] - m[n - 3];
    for i in 0..n - 1 {
        out[i] = (f[i + 1] - f[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
    }
    out[n - 1] = (f[n - 1] - f[n - 2]) / h + h * (m[n - 2] + 2.0 * m[n - 1]) / 6.0;
}

/// Hermite data of a tensor-product spline over one scalar sample array.
#[derive(Clone, Debug)]
pub(crate) struct CubicSurface {
    f: Vec<f64>,
    fx: Vec<f64>,
    fy: Vec<f64>,
    fxy: Vec<f64>,
}

impl CubicSurface {
    pub(crate) fn new(grid: &Grid2D, values: &[f64]) -> Self {
        let (n1, n2) = (grid.n1, grid.n2);
        let (h1, h2) = (grid.h1(), grid.h2());
        let f = values.to_vec();
        let mut fx = vec![0.0; n1 * n2];
        let mut fy = vec![0.0; n1 * n2];
        let mut fxy = vec![0.0; n1 * n2];

        let mut line1 = vec![0.0; n1];
        let mut out1 = vec![0.0; n1];
        for j in 0..n2 {
            for i in 0..n1 {
                line1[i] = f[i * n2 + j];
            }
            spline_slopes(&line1, h1, &mut out1);
            for i in 0..n1 {
                fx[i * n2 + j] = out1[i];
            }
        }
        let mut out2 = vec![0.0; n2];
        for i in 0..n1 {
            let row = i * n2..(i + 1) * n2;
            spline_slopes(&f[row.clone()], h2, &mut out2);
            fy[row.clone()].copy_from_slice(&out2);
            spline_slopes(&fx[row.clone()], h2, &mut out2);
            fxy[row].copy_from_slice(&out2);
        }
        CubicSurface { f, fx, fy, fxy }
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.f
    }

    /// Evaluates the patch; `order` 0 = value only, 1 = + gradient, 2 = + Hessian.
    fn eval(&self, grid: &Grid2D, c: CellPos, order: u8) -> Jet2 {
        let (h1, h2) = (grid.h1(), grid.h2());
        let bu = HermiteBasis::new(c.s, order);
        let bv = HermiteBasis::new(c.t, order);
        let n2 = grid.n2;
        let idx = [
            [c.i * n2 + c.j, c.i * n2 + c.j + 1],
            [(c.i + 1) * n2 + c.j, (c.i + 1) * n2 + c.j + 1],
        ];
        let mut jet = Jet2::default();
        // Values enter relative to one corner, so constants are reproduced
        // exactly and their derivatives vanish exactly.
        let f_ref = self.f[idx[0][0]];
        // Basis contributions per derivative order in u (du) and v (dv).
        for (a, row) in idx.iter().enumerate() {
            for (b, &k) in row.iter().enumerate() {
                let (f, fx, fy, fxy) = (self.f[k] - f_ref, self.fx[k] * h1, self.fy[k] * h2, self.fxy[k] * h1 * h2);
                let term = |du: usize, dv: usize| {
                    bu.h[du][a] * bv.h[dv][b] * f
                        + bu.g[du][a] * bv.h[dv][b] * fx
                        + bu.h[du][a] * bv.g[dv][b] * fy
                        + bu.g[du][a] * bv.g[dv][b] * fxy
                };
                jet.value += term(0, 0);
                if order >= 1 {
                    jet.grad.x += term(1, 0);
                    jet.grad.y += term(0, 1);
                }
                if order >= 2 {
                    jet.hess.a11 += term(2, 0);
                    jet.hess.a12 += term(1, 1);
                    jet.hess.a22 += term(0, 2);
                }
            }
        }
        jet.value += f_ref;
        jet.grad.x /= h1;
        jet.grad.y /= h2;
        jet.hess.a11 /= h1 * h1;
        jet.hess.a12 /= h1 * h2;
        jet.hess.a22 /= h2 * h2;
        jet
    }
}

/// Cubic Hermite basis on `[0, 1]`: `h[d][0|1]` weights endpoint values and
/// `g[d][0|1]` weights endpoint slopes, for derivative order `d`.
struct HermiteBasis {
    h: [[f64; 2]; 3],
    g: [[f64; 2]; 3],
}

impl HermiteBasis {
    fn new(t: f64, order: u8) -> Self {
        let t2 = t * t;
        let t3 = t2 * t;
        let mut h = [[0.0; 2]; 3];
        let mut g = [[0.0; 2]; 3];
        h[0] = [2.0 * t3 - 3.0 * t2 + 1.0, -2.0 * t3 + 3.0 * t2];
        g[0] = [t3 - 2.0 * t2 + t, t3 - t2];
        if order >= 1 {
            h[1] = [6.0 * t2 - 6.0 * t, -6.0 * t2 + 6.0 * t];
            g[1] = [3.0 * t2 - 4.0 * t + 1.0, 3.0 * t2 - 2.0 * t];
        }
        if order >= 2 {
            h[2] = [12.0 * t - 6.0, -12.0 * t + 6.0];
            g[2] = [6.0 * t - 4.0, 6.0 * t - 2.0];
        }
        HermiteBasis { h, g }
    }
}

fn check_samples(grid: &Grid2D, values: &[f64], what: &str) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: expected {} samples for a {}x{} grid, got {}",
            grid.len(),
            grid.n1,
            grid.n2,
            values.len()
        )));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} at node {k}")));
    }
    Ok(())
}

fn check_mask(grid: &Grid2D, mask: &Option<Vec<bool>>) -> Result<()> {
    match mask {
        Some(m) if m.len() != grid.len() => Err(Error::ShapeMismatch(format!(
            "mask has {} entries, grid has {}",
            m.len(),
            grid.len()
        ))),
        _ => Ok(()),
    }
}

/// Masked nodes are excluded: a query is rejected if any corner of its cell
/// is invalid. `valid[k] == true` marks a usable node.
fn cell_valid(grid: &Grid2D, valid: &Option<Vec<bool>>, c: CellPos) -> bool {
    match valid {
        None => true,
        Some(m) => {
            let n2 = grid.n2;
            m[c.i * n2 + c.j] && m[c.i * n2 + c.j + 1] && m[(c.i + 1) * n2 + c.j] && m[(c.i + 1) * n2 + c.j + 1]
        }
    }
}

/// Scalar samples on a grid with optional node validity mask.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid2D,
    surface: CubicSurface,
    valid: Option<Vec<bool>>,
    pub time: Option<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        check_samples(&grid, &values, "scalar field")?;
        let surface = CubicSurface::new(&grid, &values);
        Ok(ScalarField { grid, surface, valid: None, time: None })
    }

    /// Builds a field where `None` samples are masked. Masked nodes are
    /// filled with `fill` for the spline only.
    pub fn with_mask(grid: Grid2D, values: Vec<Option<f64>>, fill: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch("masked scalar field length".into()));
        }
        let valid: Vec<bool> = values.iter().map(|v| v.is_some()).collect();
        let filled: Vec<f64> = values.iter().map(|v| v.unwrap_or(fill)).collect();
        let mut field = ScalarField::new(grid, filled)?;
        if valid.iter().any(|v| !v) {
            field.valid = Some(valid);
        }
        Ok(field)
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(Point2) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(grid.node_at(k))).collect();
        ScalarField::new(grid, values)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.surface.values()
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    pub fn is_valid_node(&self, k: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m[k])
    }

    fn cell(&self, x: Point2) -> Result<CellPos> {
        let c = self.grid.locate(x)?;
        if !cell_valid(&self.grid, &self.valid, c) {
            return Err(Error::Masked { x1: x.x, x2: x.y });
        }
        Ok(c)
    }

    pub fn interpolate(&self, x: Point2) -> Result<f64> {
        let c = self.cell(x)?;
        Ok(self.surface.eval(&self.grid, c, 0).value)
    }

    pub fn gradient(&self, x: Point2) -> Result<Vec2> {
        let c = self.cell(x)?;
        Ok(self.surface.eval(&self.grid, c, 1).grad)
    }

    /// Value, gradient and Hessian of the interpolant at `x`.
    pub fn jet(&self, x: Point2) -> Result<Jet2> {
        let c = self.cell(x)?;
        Ok(self.surface.eval(&self.grid, c, 2))
    }
}

/// Two-component vector samples.
#[derive(Clone, Debug)]
pub struct VectorField2D {
    grid: Grid2D,
    u: CubicSurface,
    v: CubicSurface,
    valid: Option<Vec<bool>>,
    pub time: Option<f64>,
}

impl VectorField2D {
    pub fn new(grid: Grid2D, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_samples(&grid, &u, "vector field u")?;
        check_samples(&grid, &v, "vector field v")?;
        Ok(VectorField2D {
            u: CubicSurface::new(&grid, &u),
            v: CubicSurface::new(&grid, &v),
            grid,
            valid: None,
            time: None,
        })
    }

    /// Vector field with a node validity mask (`true` = usable); masked
    /// samples must be finite fill values.
    pub fn with_mask(grid: Grid2D, u: Vec<f64>, v: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let valid = if valid.iter().all(|v| *v) { None } else { Some(valid) };
        check_mask(&grid, &valid)?;
        let mut field = VectorField2D::new(grid, u, v)?;
        field.valid = valid;
        Ok(field)
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(Point2) -> Vec2) -> Result<Self> {
        let (u, v): (Vec<f64>, Vec<f64>) = (0..grid.len())
            .map(|k| {
                let w = f(grid.node_at(k));
                (w.x, w.y)
            })
            .unzip();
        VectorField2D::new(grid, u, v)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn u(&self) -> &[f64] {
        self.u.values()
    }

    pub fn v(&self) -> &[f64] {
        self.v.values()
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    pub fn is_valid_node(&self, k: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m[k])
    }

    fn cell(&self, x: Point2) -> Result<CellPos> {
        let c = self.grid.locate(x)?;
        if !cell_valid(&self.grid, &self.valid, c) {
            return Err(Error::Masked { x1: x.x, x2: x.y });
        }
        Ok(c)
    }

    pub fn interpolate(&self, x: Point2) -> Result<Vec2> {
        let c = self.cell(x)?;
        Ok(Vec2::new(self.u.eval(&self.grid, c, 0).value, self.v.eval(&self.grid, c, 0).value))
    }

    /// Velocity gradient `[[∂₁u, ∂₂u], [∂₁v, ∂₂v]]` as `(∇u, ∇v)`.
    pub fn gradient(&self, x: Point2) -> Result<(Vec2, Vec2)> {
        let c = self.cell(x)?;
        Ok((self.u.eval(&self.grid, c, 1).grad, self.v.eval(&self.grid, c, 1).grad))
    }
}

/// Symmetric 2x2 tensor samples, three stored components.
#[derive(Clone, Debug)]
pub struct SymTensorField {
    grid: Grid2D,
    a11: CubicSurface,
    a12: CubicSurface,
    a22: CubicSurface,
    valid: Option<Vec<bool>>,
    norm_inf: f64,
}

impl SymTensorField {
    pub fn new(grid: Grid2D, a11: Vec<f64>, a12: Vec<f64>, a22: Vec<f64>) -> Result<Self> {
        Self::build(grid, a11, a12, a22, None)
    }

    /// Tensor field with a node validity mask (`true` = usable). Masked
    /// entries must still be finite; they only shape the spline.
    pub fn with_mask(grid: Grid2D, a11: Vec<f64>, a12: Vec<f64>, a22: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let valid = if valid.iter().all(|v| *v) { None } else { Some(valid) };
        Self::build(grid, a11, a12, a22, valid)
    }

    fn build(grid: Grid2D, a11: Vec<f64>, a12: Vec<f64>, a22: Vec<f64>, valid: Option<Vec<bool>>) -> Result<Self> {
        check_samples(&grid, &a11, "tensor a11")?;
        check_samples(&grid, &a12, "tensor a12")?;
        check_samples(&grid, &a22, "tensor a22")?;
        check_mask(&grid, &valid)?;
        let mut norm_inf: f64 = 0.0;
        for k in 0..grid.len() {
            if valid.as_ref().is_none_or(|m| m[k]) {
                norm_inf = norm_inf.max(SymTensor2::new(a11[k], a12[k], a22[k]).norm_inf());
            }
        }
        Ok(SymTensorField {
            a11: CubicSurface::new(&grid, &a11),
            a12: CubicSurface::new(&grid, &a12),
            a22: CubicSurface::new(&grid, &a22),
            grid,
            valid,
            norm_inf,
        })
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(Point2) -> SymTensor2) -> Result<Self> {
        let mut a11 = Vec::with_capacity(grid.len());
        let mut a12 = Vec::with_capacity(grid.len());
        let mut a22 = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let a = f(grid.node_at(k));
            a11.push(a.a11);
            a12.push(a.a12);
            a22.push(a.a22);
        }
        SymTensorField::new(grid, a11, a12, a22)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn a11(&self) -> &[f64] {
        self.a11.values()
    }
    pub fn a12(&self) -> &[f64] {
        self.a12.values()
    }
    pub fn a22(&self) -> &[f64] {
        self.a22.values()
    }

    pub fn node_value(&self, k: usize) -> SymTensor2 {
        SymTensor2::new(self.a11()[k], self.a12()[k], self.a22()[k])
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.valid.as_deref()
    }

    pub fn is_valid_node(&self, k: usize) -> bool {
        self.valid.as_ref().is_none_or(|m| m[k])
    }

    /// Max over valid nodes of the matrix infinity norm.
    pub fn norm_inf(&self) -> f64 {
        self.norm_inf
    }

    fn cell(&self, x: Point2) -> Result<CellPos> {
        let c = self.grid.locate(x)?;
        if !cell_valid(&self.grid, &self.valid, c) {
            return Err(Error::Masked { x1: x.x, x2: x.y });
        }
        Ok(c)
    }

    pub fn interpolate(&self, x: Point2) -> Result<SymTensor2> {
        let c = self.cell(x)?;
        Ok(SymTensor2::new(
            self.a11.eval(&self.grid, c, 0).value,
            self.a12.eval(&self.grid, c, 0).value,
            self.a22.eval(&self.grid, c, 0).value,
        ))
    }

    /// Per-entry gradients of the interpolant.
    pub fn gradient(&self, x: Point2) -> Result<TensorGradient> {
        Ok(self.value_and_gradient(x)?.1)
    }

    pub fn value_and_gradient(&self, x: Point2) -> Result<(SymTensor2, TensorGradient)> {
        let c = self.cell(x)?;
        let j11 = self.a11.eval(&self.grid, c, 1);
        let j12 = self.a12.eval(&self.grid, c, 1);
        let j22 = self.a22.eval(&self.grid, c, 1);
        Ok((
            SymTensor2::new(j11.value, j12.value, j22.value),
            TensorGradient {
                d1: SymTensor2::new(j11.grad.x, j12.grad.x, j22.grad.x),
                d2: SymTensor2::new(j11.grad.y, j12.grad.y, j22.grad.y),
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit_grid(n: usize) -> Grid2D {
        Grid2D::new(0.0, 1.0, 0.0, 1.0, n, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(Grid2D::new(0.0, 1.0, 0.0, 1.0, 3, 10).is_err());
        assert!(Grid2D::new(1.0, 0.0, 0.0, 1.0, 10, 10).is_err());
        assert!(Grid2D::new(0.0, 1.0, 0.0, f64::NAN, 10, 10).is_err());
    }

    #[test]
    fn constant_field_reproduced() {
        let f = ScalarField::from_fn(unit_grid(9), |_| 2.5).unwrap();
        let p = Point2::new(0.31, 0.77);
        assert!((f.interpolate(p).unwrap() - 2.5).abs() < 1e-14);
        let g = f.gradient(p).unwrap();
        assert!(g.x.abs() < 1e-13 && g.y.abs() < 1e-13);
    }

    #[test]
    fn affine_field_exact() {
        let grid = Grid2D::new(-1.0, 2.0, 0.0, 3.0, 7, 11).unwrap();
        let f = ScalarField::from_fn(grid, |p| 3.0 * p.x + 2.0 * p.y).unwrap();
        let p = Point2::new(0.3, 0.7);
        assert!((f.interpolate(p).unwrap() - 2.3).abs() < 1e-13);
        let g = f.gradient(p).unwrap();
        assert!((g.x - 3.0).abs() < 1e-12 && (g.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_field_accuracy() {
        let analytic = |p: Point2| (PI * p.x).sin() * (PI * p.y).sin();
        let f = ScalarField::from_fn(unit_grid(64), analytic).unwrap();
        let p = Point2::new(0.37, 0.52);
        assert!((f.interpolate(p).unwrap() - analytic(p)).abs() < 1e-4);

        let f = ScalarField::from_fn(unit_grid(128), analytic).unwrap();
        let p = Point2::new(0.25, 0.25);
        let g = f.gradient(p).unwrap();
        let gx = PI * (PI * p.x).cos() * (PI * p.y).sin();
        let gy = PI * (PI * p.x).sin() * (PI * p.y).cos();
        assert!((g.x - gx).abs() < 1e-3 && (g.y - gy).abs() < 1e-3);
    }

    #[test]
    fn cubic_polynomials_reproduced_with_hessian() {
        let grid = Grid2D::new(0.0, 2.0, -1.0, 1.0, 6, 8).unwrap();
        let poly = |p: Point2| p.x.powi(3) - 2.0 * p.x * p.y * p.y + p.y.powi(2);
        let f = ScalarField::from_fn(grid, poly).unwrap();
        let p = Point2::new(1.234, 0.321);
        let jet = f.jet(p).unwrap();
        assert!((jet.value - poly(p)).abs() < 1e-12);
        assert!((jet.grad.x - (3.0 * p.x * p.x - 2.0 * p.y * p.y)).abs() < 1e-11);
        assert!((jet.grad.y - (-4.0 * p.x * p.y + 2.0 * p.y)).abs() < 1e-11);
        assert!((jet.hess.a11 - 6.0 * p.x).abs() < 1e-10);
        assert!((jet.hess.a12 - (-4.0 * p.y)).abs() < 1e-10);
        assert!((jet.hess.a22 - (-4.0 * p.x + 2.0)).abs() < 1e-10);
    }

    #[test]
    fn out_of_domain_is_error() {
        let f = ScalarField::from_fn(unit_grid(8), |p| p.x).unwrap();
        assert!(matches!(f.interpolate(Point2::new(1.2, 0.5)), Err(Error::OutOfDomain { .. })));
        assert!(matches!(f.gradient(Point2::new(0.5, -0.01)), Err(Error::OutOfDomain { .. })));
        // The closed box is accepted.
        assert!(f.interpolate(Point2::new(1.0, 1.0)).is_ok());
    }

    #[test]
    fn masked_cells_are_rejected() {
        let grid = unit_grid(8);
        let vals: Vec<Option<f64>> = (0..grid.len()).map(|k| if k == 0 { None } else { Some(1.0) }).collect();
        let f = ScalarField::with_mask(grid, vals, 0.0).unwrap();
        assert!(matches!(f.interpolate(Point2::new(0.01, 0.01)), Err(Error::Masked { .. })));
        assert!(f.interpolate(Point2::new(0.5, 0.5)).is_ok());
    }

    #[test]
    fn shape_mismatch_detected() {
        let grid = unit_grid(5);
        assert!(matches!(ScalarField::new(grid.clone(), vec![0.0; 24]), Err(Error::ShapeMismatch(_))));
        let mut v = vec![0.0; 25];
        v[3] = f64::INFINITY;
        assert!(matches!(ScalarField::new(grid, v), Err(Error::NonFinite(_))));
    }

    #[test]
    fn tensor_field_gradient() {
        let grid = Grid2D::new(-1.0, 1.0, -1.0, 1.0, 9, 9).unwrap();
        let a = SymTensorField::from_fn(grid, |p| SymTensor2::new(p.x, 2.0 * p.y, 1.0 - p.x + p.y)).unwrap();
        let (v, g) = a.value_and_gradient(Point2::new(0.3, -0.4)).unwrap();
        assert!((v.a11 - 0.3).abs() < 1e-13 && (v.a12 + 0.8).abs() < 1e-13);
        assert!((g.d1.a11 - 1.0).abs() < 1e-12 && g.d2.a11.abs() < 1e-12);
        assert!((g.d2.a12 - 2.0).abs() < 1e-12);
        assert!((g.d1.a22 + 1.0).abs() < 1e-12 && (g.d2.a22 - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn nodes_reproduced(i in 0usize..12, j in 0usize..9, seed in 0.0f64..10.0) {
            let grid = Grid2D::new(-0.5, 1.5, 0.0, 2.0, 12, 9).unwrap();
            let f = ScalarField::from_fn(grid.clone(), |p| (seed * p.x).sin() + (p.y * p.x).cos()).unwrap();
            let node = grid.node(i, j);
            let k = grid.index(i, j);
            prop_assert!((f.interpolate(node).unwrap() - f.values()[k]).abs() < 1e-12);
        }

        #[test]
        fn gradient_consistent_with_values(x in 0.05f64..0.95, y in 0.05f64..0.95, dir in 0.0f64..std::f64::consts::TAU) {
            let f = ScalarField::from_fn(unit_grid(24), |p| (3.0 * p.x).sin() * (2.0 * p.y).cos() + p.x * p.y).unwrap();
            let p = Point2::new(x, y);
            let d = Vec2::unit(dir);
            let delta = 1e-6;
            let fd = (f.interpolate(p + d * delta).unwrap() - f.interpolate(p - d * delta).unwrap()) / (2.0 * delta);
            let g = f.gradient(p).unwrap();
            prop_assert!((fd - g.dot(d)).abs() < 50.0 * delta);
        }
    }
}
