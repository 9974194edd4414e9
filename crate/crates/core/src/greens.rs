//! Discrete classic Greens' functions of the symmetric operator, the
//! fine-scale Greens' function over a coarse/fine space pair, and the exact
//! Poisson reference kernels.
//!
//! The discrete kernel is `g_h(x, s) = psi(x) A^{-1} psi(s)^T` built from the
//! factorized symmetric operator; it is a diagnostic surface only — the VMS
//! solver works with the fine-scale Greens' matrix
//! `G' = A^{-1} - E (E^T A E)^{-1} E^T` and never integrates the pointwise
//! kernel.

use faer::Mat;

use crate::assembly::{LoadVector, OperatorMatrix};
use crate::mesh_spaces::{Embedding, FunctionSpace};
use crate::{Error, Result};

/// Space handle for kernel evaluation: the direct formulation carries one
/// scalar H1 space; the mixed formulation carries the saddle pair and
/// evaluates the scalar-scalar kernel block.
pub enum KernelSpaces {
    Direct(FunctionSpace),
    Mixed { flux: FunctionSpace, scalar: FunctionSpace },
}

/// Factorized symmetric operator with kernel evaluation.
pub struct ClassicGreens {
    spaces: KernelSpaces,
    operator: OperatorMatrix,
}

/// Wraps a factorizable symmetric operator; rejects singular operators (an
/// unconstrained Laplacian, for instance).
pub fn classic_greens(operator: OperatorMatrix, spaces: KernelSpaces) -> Result<ClassicGreens> {
    let expected = match &spaces {
        KernelSpaces::Direct(s) => s.dof_count(),
        KernelSpaces::Mixed { flux, scalar } => flux.dof_count() + scalar.dof_count(),
    };
    if operator.nrows() != expected || operator.ncols() != expected {
        return Err(Error::invalid("operator size does not match the space"));
    }
    operator.factorization()?;
    Ok(ClassicGreens { spaces, operator })
}

impl ClassicGreens {
    pub fn operator(&self) -> &OperatorMatrix {
        &self.operator
    }

    pub fn spaces(&self) -> &KernelSpaces {
        &self.spaces
    }

    /// Applies `A^{-1}` to a dual (load) vector: the Galerkin solution of the
    /// symmetric problem.
    pub fn apply(&self, load: &LoadVector) -> Result<Vec<f64>> {
        self.operator.solve_vec(load.entries())
    }

    /// Dual vector representing point evaluation at `s` (scalar block).
    fn dual_at(&self, s: &[f64]) -> Vec<f64> {
        match &self.spaces {
            KernelSpaces::Direct(space) => space.basis_row(s),
            KernelSpaces::Mixed { flux, scalar } => {
                let mut v = vec![0.0; flux.dof_count() + scalar.dof_count()];
                v[flux.dof_count()..].copy_from_slice(&scalar.basis_row(s));
                v
            }
        }
    }

    /// Solves once for a fixed source point `s`; evaluations along `x` reuse
    /// the cached solve.
    pub fn kernel_slice(&self, s: &[f64]) -> Result<KernelSlice<'_>> {
        let z = self.operator.solve_vec(&self.dual_at(s))?;
        Ok(KernelSlice { greens: self, z })
    }

    /// `g_h(x, s)`; prefer [`ClassicGreens::kernel_slice`] when `s` is reused.
    pub fn kernel_eval(&self, x: &[f64], s: &[f64]) -> Result<f64> {
        Ok(self.kernel_slice(s)?.eval(x))
    }
}

/// One column of the discrete kernel, `g_h(., s)`.
pub struct KernelSlice<'a> {
    greens: &'a ClassicGreens,
    z: Vec<f64>,
}

impl KernelSlice<'_> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.greens.spaces {
            KernelSpaces::Direct(space) => space
                .basis_row(x)
                .iter()
                .zip(&self.z)
                .map(|(&a, &b)| a * b)
                .sum(),
            KernelSpaces::Mixed { flux, scalar } => {
                // mixed Poisson solves A [u; phi] = [0; -F], so the
                // scalar-scalar kernel block carries a minus sign
                let row = scalar.basis_row(x);
                let off = flux.dof_count();
                -row.iter().enumerate().map(|(i, &a)| a * self.z[off + i]).sum::<f64>()
            }
        }
    }
}

/// Discrete fine-scale Greens' function `G'` over the fine DOFs.
pub struct FineScaleGreens {
    matrix: Mat<f64>,
}

/// `G' = A^{-1} - E (E^T A E)^{-1} E^T`, the fine-scale Greens' matrix of the
/// energy projector induced by the symmetric operator `A` on the fine space.
/// A zero-column `E` (nothing resolved) gives `G' = A^{-1}`; a square
/// invertible `E` (everything resolved) gives `G' = 0`.
pub fn fine_scale_greens(a_fine: &OperatorMatrix, e: &Embedding) -> Result<FineScaleGreens> {
    let n = a_fine.nrows();
    if e.fine_dofs() != n {
        return Err(Error::invalid("embedding rows do not match the fine operator"));
    }
    let a_inv = a_fine.solve_mat(&Mat::identity(n, n))?;
    let nc = e.coarse_dofs();
    if nc == 0 {
        return Ok(FineScaleGreens { matrix: a_inv });
    }
    let em = e.matrix();
    let b = em.transpose() * a_fine.data() * em;
    let b_op = OperatorMatrix::new(a_fine.role(), b);
    let binv_et = b_op
        .solve_mat(&em.transpose().to_owned())
        .map_err(|_| Error::Singular("E^T A E is rank deficient; coarse space is not a valid subspace".into()))?;
    let matrix = &a_inv - em * &binv_et;
    Ok(FineScaleGreens { matrix })
}

impl FineScaleGreens {
    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `G' b` for a dual vector `b`.
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)] * b[j]).sum())
            .collect()
    }
}

/// Exact classic Greens' function of the 1D Poisson problem on `[0,1]` with
/// homogeneous Dirichlet ends: `(1-s) x` for `x <= s`, else `s (1-x)`.
pub fn exact_greens_1d_poisson(x: f64, s: f64) -> f64 {
    if x <= s {
        (1.0 - s) * x
    } else {
        s * (1.0 - x)
    }
}

/// Truncated eigenfunction expansion of the 2D Poisson Greens' function on
/// the unit square. Hyperbolic factors are evaluated in exponential-ratio
/// form with non-positive exponents only, so large term counts do not
/// overflow.
pub fn exact_greens_2d_poisson(x: &[f64], s: &[f64], n_terms: usize) -> f64 {
    let (x1, y) = (x[0], x[1]);
    let (s1, s2) = (s[0], s[1]);
    let mut total = 0.0;
    for n in 1..=n_terms {
        let a = n as f64 * std::f64::consts::PI;
        let trig = (a * s1).sin() * (a * x1).sin();
        // sinh(a u) sinh(a v) / sinh(a) with the sign folded in; u, v >= 0
        let (u, v) = if y < s2 { (1.0 - s2, y) } else { (1.0 - y, s2) };
        let ratio = ((a * (u + v - 1.0)).exp())
            * (1.0 - (-2.0 * a * u).exp())
            * (1.0 - (-2.0 * a * v).exp())
            / (2.0 * (1.0 - (-2.0 * a).exp()));
        total += 2.0 * trig * ratio / a;
    }
    total
}
