//! Element-wise assembly of the bilinear forms into dense matrices, load
//! vectors, and a cached-factorization dense solve.
//!
//! All forms reduce to sums of tensor-product terms
//! `coeff * (D^a test_comp, D^b trial_comp)`; on a uniform mesh the local
//! element matrix of each term is identical across elements, so it is
//! integrated once on the reference element (GLL rule with `max(p) + 2`
//! points per axis) and scattered.

use std::sync::OnceLock;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;

use crate::mesh_spaces::{AxisFactor, FunctionSpace, SpaceKind};
use crate::quadrature::{gauss_lobatto_rule, QuadRule};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixRole {
    Mass,
    Stiffness,
    Divergence,
    Advection,
    Saddle,
    Coupling,
}

/// Dense operator matrix with a lazily cached LU factorization.
#[derive(Debug)]
pub struct OperatorMatrix {
    role: MatrixRole,
    data: Mat<f64>,
    lu: OnceLock<PartialPivLu<f64>>,
}

impl OperatorMatrix {
    pub fn new(role: MatrixRole, data: Mat<f64>) -> Self {
        crate::error::ensure_sequential_linalg();
        OperatorMatrix { role, data, lu: OnceLock::new() }
    }

    pub fn role(&self) -> MatrixRole {
        self.role
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Mat<f64> {
        &self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    /// LU with partial pivoting, computed once and reused. Rejects matrices
    /// that are singular to working precision.
    pub fn factorization(&self) -> Result<&PartialPivLu<f64>> {
        if self.nrows() != self.ncols() {
            return Err(Error::invalid("factorization needs a square matrix"));
        }
        let lu = self.lu.get_or_init(|| self.data.partial_piv_lu());
        let n = self.nrows();
        let scale = self.data.norm_max().max(f64::MIN_POSITIVE);
        let mut min_piv = f64::INFINITY;
        for i in 0..n {
            min_piv = min_piv.min(lu.U()[(i, i)].abs());
        }
        if min_piv <= scale * n as f64 * 1e-14 {
            return Err(Error::Singular(format!(
                "{:?} matrix of size {n} has negligible pivot {min_piv:.3e} (scale {scale:.3e})",
                self.role
            )));
        }
        Ok(lu)
    }

    /// Solves `A x = b` for one right-hand side.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.nrows() {
            return Err(Error::invalid("right-hand side length mismatch"));
        }
        let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.factorization()?.solve(&rhs);
        Ok((0..b.len()).map(|i| x[(i, 0)]).collect())
    }

    /// Solves `A X = B` for a block of right-hand sides.
    pub fn solve_mat(&self, b: &Mat<f64>) -> Result<Mat<f64>> {
        if b.nrows() != self.nrows() {
            return Err(Error::invalid("right-hand side row count mismatch"));
        }
        Ok(self.factorization()?.solve(b))
    }
}

/// Dense load vector (dual vector of a test space).
#[derive(Debug, Clone)]
pub struct LoadVector {
    entries: Vec<f64>,
}

impl LoadVector {
    pub fn new(entries: Vec<f64>) -> Self {
        LoadVector { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// One tensor-product term `coeff * (D^a test_comp, D^b trial_comp)`; the
/// derivative options name the axis being differentiated.
struct FormTerm {
    test_comp: usize,
    trial_comp: usize,
    test_deriv: Option<usize>,
    trial_deriv: Option<usize>,
    coeff: f64,
}

/// Table of axis-factor values (or axis derivatives) at quadrature points,
/// including all physical scalings; `table[local][q]`.
fn axis_table(space: &FunctionSpace, f: &AxisFactor, rule: &QuadRule, deriv: bool) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; rule.len()]; f.local_ndofs()];
    for (q, &x) in rule.points().iter().enumerate() {
        let col = if deriv { space.factor_derivs(f, x) } else { space.factor_values(f, x) };
        for (i, v) in col.into_iter().enumerate() {
            t[i][q] = v;
        }
    }
    t
}

fn check_same_mesh(test: &FunctionSpace, trial: &FunctionSpace) -> Result<()> {
    if test.mesh() != trial.mesh() {
        return Err(Error::invalid("test and trial spaces live on different meshes"));
    }
    Ok(())
}

/// Assembles the sum of tensor-product terms into a dense (reduced) matrix.
fn assemble(test: &FunctionSpace, trial: &FunctionSpace, terms: &[FormTerm]) -> Result<Mat<f64>> {
    check_same_mesh(test, trial)?;
    let mesh = *test.mesh();
    let dim = mesh.dim();
    let h = mesh.element_width();
    let rule = gauss_lobatto_rule(test.degree().max(trial.degree()) + 2)?;
    let mut out = Mat::zeros(test.dof_count(), trial.dof_count());

    for term in terms {
        if term.coeff == 0.0 {
            continue;
        }
        let tc = &test.components()[term.test_comp];
        let uc = &trial.components()[term.trial_comp];
        // per-axis reference integrals, jacobian h/2 per axis
        let mut axis_mats: Vec<Vec<Vec<f64>>> = Vec::with_capacity(dim);
        for a in 0..dim {
            let tt = axis_table(test, &tc.factors[a], &rule, term.test_deriv == Some(a));
            let ut = axis_table(trial, &uc.factors[a], &rule, term.trial_deriv == Some(a));
            let mut m = vec![vec![0.0; ut.len()]; tt.len()];
            for (i, ti) in tt.iter().enumerate() {
                for (j, uj) in ut.iter().enumerate() {
                    let mut s = 0.0;
                    for (q, &w) in rule.weights().iter().enumerate() {
                        s += w * ti[q] * uj[q];
                    }
                    m[i][j] = s * 0.5 * h;
                }
            }
            axis_mats.push(m);
        }
        // local element matrix (x fastest), identical for every element
        let ntx = axis_mats[0].len();
        let nux = axis_mats[0][0].len();
        let (nt, nu) = (tc.local_ndofs(), uc.local_ndofs());
        let mut local = vec![vec![0.0; nu]; nt];
        for lt in 0..nt {
            for lu in 0..nu {
                let mut v = axis_mats[0][lt % ntx][lu % nux];
                if dim == 2 {
                    v *= axis_mats[1][lt / ntx][lu / nux];
                }
                local[lt][lu] = term.coeff * v;
            }
        }
        for elem in mesh.elements() {
            let tdofs = tc.element_dofs(&elem);
            let udofs = uc.element_dofs(&elem);
            for (lt, &gt) in tdofs.iter().enumerate() {
                let Some(rt) = test.to_reduced(gt) else { continue };
                for (lu, &gu) in udofs.iter().enumerate() {
                    let Some(ru) = trial.to_reduced(gu) else { continue };
                    out[(rt, ru)] += local[lt][lu];
                }
            }
        }
    }
    Ok(out)
}

/// `M_ij = weight * (test_i, trial_j)` over the domain; both spaces scalar,
/// or both flux (components pair diagonally).
pub fn mass_matrix(test: &FunctionSpace, trial: &FunctionSpace, weight: f64) -> Result<OperatorMatrix> {
    check_same_mesh(test, trial)?;
    let terms = match (test.kind(), trial.kind()) {
        (SpaceKind::HdivFlux, SpaceKind::HdivFlux) => (0..2)
            .map(|c| FormTerm {
                test_comp: c,
                trial_comp: c,
                test_deriv: None,
                trial_deriv: None,
                coeff: weight,
            })
            .collect::<Vec<_>>(),
        (SpaceKind::HdivFlux, _) | (_, SpaceKind::HdivFlux) => {
            return Err(Error::invalid("mass matrix needs two scalar or two flux spaces"))
        }
        _ => vec![FormTerm {
            test_comp: 0,
            trial_comp: 0,
            test_deriv: None,
            trial_deriv: None,
            coeff: weight,
        }],
    };
    Ok(OperatorMatrix::new(MatrixRole::Mass, assemble(test, trial, &terms)?))
}

/// `K_ij = kappa * (grad test_i, grad trial_j)`; H1 spaces only.
pub fn stiffness_matrix(space: &FunctionSpace, kappa: f64) -> Result<OperatorMatrix> {
    if space.kind() != SpaceKind::H1Nodal {
        return Err(Error::invalid("stiffness matrix needs an H1 nodal space"));
    }
    let terms: Vec<_> = (0..space.mesh().dim())
        .map(|a| FormTerm {
            test_comp: 0,
            trial_comp: 0,
            test_deriv: Some(a),
            trial_deriv: Some(a),
            coeff: kappa,
        })
        .collect();
    Ok(OperatorMatrix::new(MatrixRole::Stiffness, assemble(space, space, &terms)?))
}

/// Advection pairing. Direct form (H1 test, H1 trial):
/// `C_ij = (test_i, c . grad trial_j)`. Mixed form (L2 test, flux trial):
/// `C_ij = (test_i, c . trial_j)` with no derivative; any `kappa^{-1}` weight
/// is the caller's to fold into `c`.
pub fn advection_matrix(test: &FunctionSpace, trial: &FunctionSpace, c: &[f64]) -> Result<OperatorMatrix> {
    check_same_mesh(test, trial)?;
    let dim = test.mesh().dim();
    if c.len() < dim {
        return Err(Error::invalid("velocity vector shorter than the mesh dimension"));
    }
    let terms: Vec<FormTerm> = match (test.kind(), trial.kind()) {
        (SpaceKind::H1Nodal, SpaceKind::H1Nodal) => (0..dim)
            .map(|a| FormTerm {
                test_comp: 0,
                trial_comp: 0,
                test_deriv: None,
                trial_deriv: Some(a),
                coeff: c[a],
            })
            .collect(),
        (SpaceKind::L2Volume, SpaceKind::H1Nodal) if dim == 1 => vec![FormTerm {
            test_comp: 0,
            trial_comp: 0,
            test_deriv: None,
            trial_deriv: None,
            coeff: c[0],
        }],
        (SpaceKind::L2Volume, SpaceKind::HdivFlux) => (0..dim)
            .map(|a| FormTerm {
                test_comp: 0,
                trial_comp: a,
                test_deriv: None,
                trial_deriv: None,
                coeff: c[a],
            })
            .collect(),
        _ => return Err(Error::invalid("unsupported advection space pairing")),
    };
    Ok(OperatorMatrix::new(MatrixRole::Advection, assemble(test, trial, &terms)?))
}

/// `D_ij = (test_i, div trial_j)`; L2 test against a flux space (H1 nodal in
/// 1D, HdivFlux in 2D).
pub fn divergence_matrix(test: &FunctionSpace, trial: &FunctionSpace) -> Result<OperatorMatrix> {
    check_same_mesh(test, trial)?;
    if test.kind() != SpaceKind::L2Volume {
        return Err(Error::invalid("divergence matrix needs an L2 test space"));
    }
    let terms: Vec<FormTerm> = match (test.mesh().dim(), trial.kind()) {
        (1, SpaceKind::H1Nodal) => vec![FormTerm {
            test_comp: 0,
            trial_comp: 0,
            test_deriv: None,
            trial_deriv: Some(0),
            coeff: 1.0,
        }],
        (2, SpaceKind::HdivFlux) => (0..2)
            .map(|a| FormTerm {
                test_comp: 0,
                trial_comp: a,
                test_deriv: None,
                trial_deriv: Some(a),
                coeff: 1.0,
            })
            .collect(),
        _ => return Err(Error::invalid("unsupported divergence space pairing")),
    };
    Ok(OperatorMatrix::new(MatrixRole::Divergence, assemble(test, trial, &terms)?))
}

/// `F_i = (test_i, f)` with the supplied reference rule per axis.
pub fn load_vector<F>(test: &FunctionSpace, f: F, rule: &QuadRule) -> Result<LoadVector>
where
    F: Fn(&[f64]) -> f64,
{
    let mesh = *test.mesh();
    let dim = mesh.dim();
    let h = mesh.element_width();
    let c = &test.components()[0];
    if test.components().len() != 1 {
        return Err(Error::invalid("load vectors are defined for scalar test spaces"));
    }
    let tables: Vec<Vec<Vec<f64>>> =
        (0..dim).map(|a| axis_table(test, &c.factors[a], rule, false)).collect();
    let mut out = vec![0.0; test.dof_count()];
    let jac = (0.5 * h).powi(dim as i32);
    for elem in mesh.elements() {
        let dofs = c.element_dofs(&elem);
        let nx = tables[0].len();
        match dim {
            1 => {
                for (q, &xq) in rule.points().iter().enumerate() {
                    let x = (elem[0] as f64 + 0.5 + 0.5 * xq) * h;
                    let fw = f(&[x]) * rule.weights()[q] * jac;
                    for (l, &g) in dofs.iter().enumerate() {
                        if let Some(r) = test.to_reduced(g) {
                            out[r] += fw * tables[0][l][q];
                        }
                    }
                }
            }
            _ => {
                for (qy, &yq) in rule.points().iter().enumerate() {
                    let y = (elem[1] as f64 + 0.5 + 0.5 * yq) * h;
                    for (qx, &xq) in rule.points().iter().enumerate() {
                        let x = (elem[0] as f64 + 0.5 + 0.5 * xq) * h;
                        let fw = f(&[x, y]) * rule.weights()[qx] * rule.weights()[qy] * jac;
                        for (l, &g) in dofs.iter().enumerate() {
                            if let Some(r) = test.to_reduced(g) {
                                out[r] += fw * tables[0][l % nx][qx] * tables[1][l / nx][qy];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(LoadVector::new(out))
}

/// Symmetric saddle block matrix `[[Mq, D^T], [D, 0]]`.
pub fn saddle_matrix(mq: &OperatorMatrix, d: &OperatorMatrix) -> Result<OperatorMatrix> {
    let nq = mq.nrows();
    if mq.ncols() != nq {
        return Err(Error::invalid("saddle mass block must be square"));
    }
    if d.ncols() != nq {
        return Err(Error::invalid("divergence block has incompatible column count"));
    }
    let nl = d.nrows();
    let n = nq + nl;
    let mut a = Mat::zeros(n, n);
    for i in 0..nq {
        for j in 0..nq {
            a[(i, j)] = mq.at(i, j);
        }
    }
    for i in 0..nl {
        for j in 0..nq {
            a[(nq + i, j)] = d.at(i, j);
            a[(j, nq + i)] = d.at(i, j);
        }
    }
    Ok(OperatorMatrix::new(MatrixRole::Saddle, a))
}

/// Solves `A x = b` through the cached factorization.
pub fn solve_dense(a: &OperatorMatrix, b: &LoadVector) -> Result<Vec<f64>> {
    a.solve_vec(b.entries())
}
