//! Rate-of-strain tensor, vorticity and the Okubo–Weiss parameter.
//!
//! Derivatives come from the bicubic interpolant. Second derivatives of a
//! streamfunction are only piecewise smooth across cells; refine the grid
//! until the strain entries stop changing at the scale of interest.

use crate::error::Result;
use crate::fieldgrid::{Grid2D, ScalarField, SymTensorField, VectorField2D};
use crate::tensor::{SymTensor2, Vec2};

#[derive(Clone, Debug)]
pub struct StrainField {
    pub tensor: SymTensorField,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub e1: Vec<Vec2>,
    pub e2: Vec<Vec2>,
    /// `∂₁f₂ − ∂₂f₁` per node.
    pub vorticity: Vec<f64>,
    pub time: Option<f64>,
}

impl StrainField {
    pub fn grid(&self) -> &Grid2D {
        self.tensor.grid()
    }

    /// Largest nodal `|trace S|` relative to `‖S‖∞` (0 for a zero field).
    pub fn relative_divergence(&self) -> f64 {
        let norm = self.tensor.norm_inf();
        if norm == 0.0 {
            return 0.0;
        }
        (0..self.grid().len())
            .filter(|k| self.tensor.is_valid_node(*k))
            .map(|k| self.tensor.node_value(k).trace().abs())
            .fold(0.0, f64::max)
            / norm
    }

    /// Median of `|s2|` over valid nodes.
    pub fn median_abs_s2(&self) -> f64 {
        let mut v: Vec<f64> = (0..self.grid().len())
            .filter(|k| self.tensor.is_valid_node(*k))
            .map(|k| self.s2[k].abs())
            .collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }
}

fn assemble(
    grid: &Grid2D,
    per_node: impl Fn(usize) -> Option<(SymTensor2, f64)>,
    time: Option<f64>,
) -> Result<StrainField> {
    let n = grid.len();
    let (mut a11, mut a12, mut a22) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut s1, mut s2) = (vec![0.0; n], vec![0.0; n]);
    let (mut e1, mut e2) = (vec![Vec2::new(1.0, 0.0); n], vec![Vec2::new(0.0, 1.0); n]);
    let mut vorticity = vec![0.0; n];
    let mut valid = vec![true; n];
    for k in 0..n {
        match per_node(k) {
            Some((s, w)) => {
                let eig = s.eigen();
                a11[k] = s.a11;
                a12[k] = s.a12;
                a22[k] = s.a22;
                s1[k] = eig.lambda1;
                s2[k] = eig.lambda2;
                e1[k] = eig.xi1;
                e2[k] = eig.xi2;
                vorticity[k] = w;
            }
            None => valid[k] = false,
        }
    }
    let tensor = SymTensorField::with_mask(grid.clone(), a11, a12, a22, valid)?;
    Ok(StrainField { tensor, s1, s2, e1, e2, vorticity, time })
}

/// `S = ½(∇f + ∇fᵀ)` and vorticity at every node of `v`'s grid.
pub fn rate_of_strain(v: &VectorField2D) -> Result<StrainField> {
    let grid = v.grid();
    assemble(
        grid,
        |k| {
            if !v.is_valid_node(k) {
                return None;
            }
            let (gu, gv) = v.gradient(grid.node_at(k)).ok()?;
            let s = SymTensor2::new(gu.x, 0.5 * (gu.y + gv.x), gv.y);
            Some((s, gv.x - gu.y))
        },
        v.time,
    )
}

/// Strain of the velocity `(−ψ₂, ψ₁)`: `S11 = −ψ₂₁`, `S12 = ½(ψ₁₁ − ψ₂₂)`,
/// `S22 = ψ₂₁`; vorticity is the Laplacian of `ψ`.
pub fn strain_from_streamfunction(psi: &ScalarField) -> Result<StrainField> {
    let grid = psi.grid();
    assemble(
        grid,
        |k| {
            if !psi.is_valid_node(k) {
                return None;
            }
            let h = psi.jet(grid.node_at(k)).ok()?.hess;
            let s = SymTensor2::new(-h.a12, 0.5 * (h.a11 - h.a22), h.a12);
            Some((s, h.a11 + h.a22))
        },
        psi.time,
    )
}

/// `s2² − ω²` per node.
pub fn okubo_weiss(strain: &StrainField) -> Result<ScalarField> {
    let values = (0..strain.grid().len())
        .map(|k| strain.tensor.is_valid_node(k).then(|| strain.s2[k].powi(2) - strain.vorticity[k].powi(2)))
        .collect();
    let mut f = ScalarField::with_mask(strain.grid().clone(), values, 0.0)?;
    f.time = strain.time;
    Ok(f)
}
