//! Discrete differential operators and total-variation energies.
//!
//! Gradients are forward differences divided by `h`, with every value beyond
//! the grid taken as zero; the divergence is the backward difference that
//! makes `⟨∇f, p⟩ = -⟨f, div p⟩` hold exactly. Pointwise gradient norms are
//! Euclidean (isotropic TV).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::extract::measure_set;
use crate::grid::{GridDomain, MultiField, ScalarField};

/// Per-pixel 2-vector field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(len: usize) -> Self {
        Self { x: vec![0.0; len], y: vec![0.0; len] }
    }

    /// Euclidean inner product `h² Σ (pₓqₓ + p_y q_y)` without the `h²` factor.
    pub fn dot(&self, other: &Self) -> f64 {
        self.x.iter().zip(&other.x).map(|(a, b)| a * b).sum::<f64>()
            + self.y.iter().zip(&other.y).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Largest pointwise Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .fold(0.0, f64::max)
    }

    /// Pointwise projection onto the closed unit ball.
    pub fn project_unit_ball(&mut self) {
        for (px, py) in self.x.iter_mut().zip(self.y.iter_mut()) {
            let n2 = *px * *px + *py * *py;
            if n2 > 1.0 {
                let s = 1.0 / n2.sqrt();
                *px *= s;
                *py *= s;
            }
        }
    }
}

/// Dual variable of the primal-dual scheme: one vector field per component.
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    pub components: Vec<VectorField>,
}

impl DualField {
    pub fn zeros(n: usize, len: usize) -> Self {
        Self { components: (0..n).map(|_| VectorField::zeros(len)).collect() }
    }

    pub fn project_unit_ball(&mut self) {
        for c in &mut self.components {
            c.project_unit_ball();
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.components.iter().map(VectorField::max_norm).fold(0.0, f64::max)
    }
}

#[inline(always)]
pub(crate) fn forward_diffs(u: &[f64], nx: usize, ny: usize, i: usize, j: usize) -> (f64, f64) {
    let k = j * nx + i;
    let c = u[k];
    let right = if i + 1 < nx { u[k + 1] } else { 0.0 };
    let up = if j + 1 < ny { u[k + nx] } else { 0.0 };
    (right - c, up - c)
}

/// Forward-difference gradient.
pub fn gradient(f: &ScalarField) -> VectorField {
    let d = f.domain();
    let (nx, ny) = (d.nx(), d.ny());
    let inv_h = 1.0 / d.h();
    let u = f.values();
    let mut g = VectorField::zeros(d.len());
    for j in 0..ny {
        for i in 0..nx {
            let (dx, dy) = forward_diffs(u, nx, ny, i, j);
            let k = j * nx + i;
            g.x[k] = dx * inv_h;
            g.y[k] = dy * inv_h;
        }
    }
    g
}

/// Backward-difference divergence, written into `out` without masking.
pub(crate) fn divergence_raw(p: &VectorField, nx: usize, ny: usize, inv_h: f64, out: &mut [f64]) {
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let left = if i > 0 { p.x[k - 1] } else { 0.0 };
            let down = if j > 0 { p.y[k - nx] } else { 0.0 };
            out[k] = (p.x[k] - left + p.y[k] - down) * inv_h;
        }
    }
}

/// Negative adjoint of [`gradient`], restricted to Ω.
pub fn divergence(domain: &Arc<GridDomain>, p: &VectorField) -> ScalarField {
    assert_eq!(p.x.len(), domain.len(), "vector field size does not match grid");
    let mut out = vec![0.0; domain.len()];
    divergence_raw(p, domain.nx(), domain.ny(), 1.0 / domain.h(), &mut out);
    ScalarField::masked(domain, out)
}

/// `Σ_pixels h |∇_fd u|` on raw values, i.e. `h² Σ |∇u|`.
pub(crate) fn tv_raw(u: &[f64], nx: usize, ny: usize, h: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let c = u[row + i];
            let right = if i + 1 < nx { u[row + i + 1] } else { 0.0 };
            let up = if j + 1 < ny { u[row + nx + i] } else { 0.0 };
            let (dx, dy) = (right - c, up - c);
            if dx != 0.0 || dy != 0.0 {
                acc += (dx * dx + dy * dy).sqrt();
            }
        }
    }
    h * acc
}

/// Isotropic total variation over ℝ² (the zero extension's jump across ∂Ω
/// is included).
pub fn tv(f: &ScalarField) -> f64 {
    let d = f.domain();
    tv_raw(f.values(), d.nx(), d.ny(), d.h())
}

/// `E(u) = Σᵢ |Duⁱ|(ℝ²)`. Interfaces between two chambers are counted once
/// per chamber, matching `Σ Per(Eᵢ)`.
pub fn energy_star(u: &MultiField) -> f64 {
    u.components().iter().map(tv).sum()
}

/// Both relative gaps measured by [`coarea_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoareaGaps {
    /// `|tv(f) − Σ Δt Per({f > t})| / tv(f)`
    pub coarea: f64,
    /// `|‖f‖₁ − Σ Δt |{f > t}|| / ‖f‖₁`
    pub cavalieri: f64,
}

impl CoareaGaps {
    pub fn max(&self) -> f64 {
        self.coarea.max(self.cavalieri)
    }
}

/// Computes the coarea and Cavalieri quadrature gaps of a nonnegative field
/// with midpoint thresholds on `(0, max f)`.
pub fn coarea_gaps(f: &ScalarField, n_thresholds: usize) -> Result<CoareaGaps> {
    if n_thresholds < 50 {
        return Err(Error::InvalidParameter(format!(
            "coarea check needs at least 50 thresholds, got {n_thresholds}"
        )));
    }
    if f.min() < 0.0 {
        return Err(Error::InvalidParameter("coarea check expects a nonnegative field".into()));
    }
    let top = f.max();
    if f.is_zero() || top <= 0.0 {
        return Err(Error::ZeroField);
    }
    let dom = f.domain();
    let dt = top / n_thresholds as f64;
    let (mut per_sum, mut vol_sum) = (0.0, 0.0);
    for k in 0..n_thresholds {
        let t = (k as f64 + 0.5) * dt;
        let set = f.superlevel(t);
        match measure_set(dom, &set) {
            Ok(m) => {
                per_sum += dt * m.perimeter;
                vol_sum += dt * m.volume;
            }
            Err(Error::EmptySet) => {}
            Err(e) => return Err(e),
        }
    }
    let total_variation = tv(f);
    let l1 = f.l1_norm();
    Ok(CoareaGaps {
        coarea: (total_variation - per_sum).abs() / total_variation,
        cavalieri: (l1 - vol_sum).abs() / l1,
    })
}

/// Largest of the two relative gaps of [`coarea_gaps`].
pub fn coarea_check(f: &ScalarField, n_thresholds: usize) -> Result<f64> {
    coarea_gaps(f, n_thresholds).map(|g| g.max())
}
