//! Galerkin, optimal-projection, and VMS solvers for steady
//! advection-diffusion (`c = 1`, `kappa = nu I`) on a shared coarse space.
//!
//! The direct 1D formulation works in the constrained H1 space. Mixed
//! formulations use the flux unknown `u ~ grad(phi)` (the paper's numerical
//! convention), so the symmetric saddle block `[[M, D^T], [D, 0]]` is
//! nu-independent and the advection and load enter the L2-test block scaled
//! by `-1/nu`:
//!
//! ```text
//! (v, u)       + (div v, phi)        = 0
//! (eta, div u) - (1/nu)(eta, c . u)  = -(1/nu)(eta, f)
//! ```
//!
//! The VMS solve assembles the fine-space operators `A_f`, `C_f`, `F_f` and
//! the block embedding `E`, then condenses the coupled coarse/fine system
//! through the Suyash-Greens' operator `S = (I + G' C_f)^{-1} G'`:
//!
//! ```text
//! [E^T A_f E + E^T C_f E - E^T C_f S C_f E] u_bar
//!     = E^T F_f - E^T C_f S F_f,
//! u' = S (F_f - C_f E u_bar).
//! ```
//!
//! Applications of `S` never form `G'` explicitly: `y = S b` is the first
//! block of the bordered system `[[A_f + C_f, A_f E], [E^T A_f, 0]]`
//! `[y; lambda] = [b; 0]`, which enforces the coarse-annihilation constraint
//! `E^T A_f y = 0` directly.

use std::sync::Arc;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;

use crate::analysis::ExactBundle;
use crate::assembly::{
    advection_matrix, divergence_matrix, load_vector, mass_matrix, saddle_matrix,
    stiffness_matrix, MatrixRole, OperatorMatrix,
};
use crate::greens::FineScaleGreens;
use crate::mesh_spaces::{build_space, embedding, Embedding, FunctionSpace, Mesh, SpaceKind};
use crate::quadrature::{rule_for_precision, QuadRule, OVER_INTEGRATION_DOP};
use crate::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> [f64; 2] + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Direct,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverTag {
    Galerkin,
    Projection,
    Vms,
}

/// One problem instance: discretisation parameters plus data.
#[derive(Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub formulation: Formulation,
    pub nu: f64,
    /// Elements per axis.
    pub elements: usize,
    /// Coarse polynomial degree.
    pub degree: usize,
    /// Fine-degree increment `k` (fine degree is `degree + k`).
    pub enrichment: usize,
    /// Advection on/off; the velocity is the vector of ones when on.
    pub advection: bool,
    pub source: ScalarFn,
    pub exact: Option<ExactBundle>,
}

impl ProblemSpec {
    /// 1D direct formulation with `f = 1` and the boundary-layer exact
    /// solution attached.
    pub fn direct_1d(nu: f64, elements: usize, degree: usize, enrichment: usize) -> Self {
        ProblemSpec {
            dim: 1,
            formulation: Formulation::Direct,
            nu,
            elements,
            degree,
            enrichment,
            advection: true,
            source: Arc::new(|_| 1.0),
            exact: Some(crate::analysis::exact_1d(nu)),
        }
    }

    /// 1D mixed formulation, same data as [`ProblemSpec::direct_1d`].
    pub fn mixed_1d(nu: f64, elements: usize, degree: usize, enrichment: usize) -> Self {
        ProblemSpec {
            formulation: Formulation::Mixed,
            ..ProblemSpec::direct_1d(nu, elements, degree, enrichment)
        }
    }

    /// 2D mixed formulation with the manufactured product solution.
    pub fn mixed_2d(nu: f64, elements: usize, degree: usize, enrichment: usize) -> Self {
        let bundle = crate::analysis::exact_2d(nu);
        let f = bundle.source.clone();
        ProblemSpec {
            dim: 2,
            formulation: Formulation::Mixed,
            nu,
            elements,
            degree,
            enrichment,
            advection: true,
            source: f,
            exact: Some(bundle),
        }
    }

    /// Peclet number `|c| / nu` on the unit domain.
    pub fn peclet(&self) -> f64 {
        1.0 / self.nu
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::invalid("dimension must be 1 or 2"));
        }
        if self.formulation == Formulation::Direct && self.dim != 1 {
            return Err(Error::invalid("the direct formulation is 1D only"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid("nu must be positive"));
        }
        if self.elements < 1 {
            return Err(Error::invalid("need at least one element per axis"));
        }
        if self.degree < 1 {
            return Err(Error::invalid("coarse degree must be >= 1"));
        }
        Ok(())
    }

    fn fine_degree(&self) -> usize {
        self.degree + self.enrichment
    }

    fn velocity(&self) -> Vec<f64> {
        let c = if self.advection { 1.0 } else { 0.0 };
        vec![c; self.dim]
    }
}

/// A scalar discrete field (H1 or L2 space).
#[derive(Clone)]
pub struct ScalarField {
    space: Arc<FunctionSpace>,
    coeffs: Vec<f64>,
    full: Vec<f64>,
}

impl ScalarField {
    pub fn new(space: Arc<FunctionSpace>, coeffs: Vec<f64>) -> Self {
        let full = space.expand(&coeffs);
        ScalarField { space, coeffs, full }
    }

    pub fn space(&self) -> &FunctionSpace {
        &self.space
    }

    pub fn space_arc(&self) -> Arc<FunctionSpace> {
        self.space.clone()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.space.eval(&self.coeffs, point)
    }

    pub fn eval_grad(&self, point: &[f64]) -> [f64; 2] {
        self.space.eval_grad(&self.coeffs, point)
    }

    /// Value inside a known element at reference coordinates; the right way
    /// to sample discontinuous fields at element-boundary quadrature nodes.
    pub fn eval_local(&self, elem: &[usize; 2], xi: &[f64]) -> f64 {
        let c = &self.space.components()[0];
        let bx = self.space.factor_values(&c.factors[0], xi[0]);
        let dofs = c.element_dofs(elem);
        if self.space.mesh().dim() == 1 {
            return dofs.iter().zip(&bx).map(|(&g, &b)| self.full[g] * b).sum();
        }
        let by = self.space.factor_values(&c.factors[1], xi[1]);
        let nx = bx.len();
        dofs.iter()
            .enumerate()
            .map(|(l, &g)| self.full[g] * bx[l % nx] * by[l / nx])
            .sum()
    }

    pub fn eval_grad_local(&self, elem: &[usize; 2], xi: &[f64]) -> [f64; 2] {
        let c = &self.space.components()[0];
        let dofs = c.element_dofs(elem);
        let bx = self.space.factor_values(&c.factors[0], xi[0]);
        let dx = self.space.factor_derivs(&c.factors[0], xi[0]);
        if self.space.mesh().dim() == 1 {
            let g = dofs.iter().zip(&dx).map(|(&g, &d)| self.full[g] * d).sum();
            return [g, 0.0];
        }
        let by = self.space.factor_values(&c.factors[1], xi[1]);
        let dy = self.space.factor_derivs(&c.factors[1], xi[1]);
        let nx = bx.len();
        let mut out = [0.0; 2];
        for (l, &g) in dofs.iter().enumerate() {
            out[0] += self.full[g] * dx[l % nx] * by[l / nx];
            out[1] += self.full[g] * bx[l % nx] * dy[l / nx];
        }
        out
    }
}

/// A discrete flux field: `HdivFlux` in 2D, the (unconstrained) H1 space in
/// 1D where `H(div) = H1`.
#[derive(Clone)]
pub struct FluxField {
    space: Arc<FunctionSpace>,
    coeffs: Vec<f64>,
}

impl FluxField {
    pub fn new(space: Arc<FunctionSpace>, coeffs: Vec<f64>) -> Self {
        FluxField { space, coeffs }
    }

    pub fn space(&self) -> &FunctionSpace {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, point: &[f64]) -> [f64; 2] {
        match self.space.kind() {
            SpaceKind::HdivFlux => self.space.eval_flux(&self.coeffs, point),
            _ => [self.space.eval(&self.coeffs, point), 0.0],
        }
    }

    pub fn div(&self, point: &[f64]) -> f64 {
        match self.space.kind() {
            SpaceKind::HdivFlux => self.space.eval_flux_div(&self.coeffs, point),
            _ => self.space.eval_grad(&self.coeffs, point)[0],
        }
    }

    pub fn eval_local(&self, elem: &[usize; 2], xi: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (ci, c) in self.space.components().iter().enumerate() {
            let bx = self.space.factor_values(&c.factors[0], xi[0]);
            let dofs = c.element_dofs(elem);
            if self.space.mesh().dim() == 1 {
                out[0] = dofs.iter().zip(&bx).map(|(&g, &b)| self.coeffs[g] * b).sum();
                break;
            }
            let by = self.space.factor_values(&c.factors[1], xi[1]);
            let nx = bx.len();
            out[ci] = dofs
                .iter()
                .enumerate()
                .map(|(l, &g)| self.coeffs[g] * bx[l % nx] * by[l / nx])
                .sum();
        }
        out
    }

    pub fn div_local(&self, elem: &[usize; 2], xi: &[f64]) -> f64 {
        if self.space.mesh().dim() == 1 {
            let c = &self.space.components()[0];
            let dx = self.space.factor_derivs(&c.factors[0], xi[0]);
            let dofs = c.element_dofs(elem);
            return dofs.iter().zip(&dx).map(|(&g, &d)| self.coeffs[g] * d).sum();
        }
        let mut div = 0.0;
        for (ci, c) in self.space.components().iter().enumerate() {
            let dofs = c.element_dofs(elem);
            let bx = if ci == 0 {
                self.space.factor_derivs(&c.factors[0], xi[0])
            } else {
                self.space.factor_values(&c.factors[0], xi[0])
            };
            let by = if ci == 0 {
                self.space.factor_values(&c.factors[1], xi[1])
            } else {
                self.space.factor_derivs(&c.factors[1], xi[1])
            };
            let nx = bx.len();
            div += dofs
                .iter()
                .enumerate()
                .map(|(l, &g)| self.coeffs[g] * bx[l % nx] * by[l / nx])
                .sum::<f64>();
        }
        div
    }
}

/// Solution of one solver run. Galerkin and projection runs carry no
/// fine-scale fields; their fine-scale evaluations are identically zero.
pub struct VmsSolution {
    pub spec: ProblemSpec,
    pub tag: SolverTag,
    pub(crate) phi: ScalarField,
    pub(crate) flux: Option<FluxField>,
    pub(crate) phi_prime: Option<ScalarField>,
    pub(crate) flux_prime: Option<FluxField>,
}

impl VmsSolution {
    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    pub fn flux(&self) -> Option<&FluxField> {
        self.flux.as_ref()
    }

    pub fn phi_prime(&self) -> Option<&ScalarField> {
        self.phi_prime.as_ref()
    }

    pub fn flux_prime(&self) -> Option<&FluxField> {
        self.flux_prime.as_ref()
    }

    /// Stacked coarse DOF vector (`[q; phi]` for mixed).
    pub fn coarse_dofs(&self) -> Vec<f64> {
        let mut v = Vec::new();
        if let Some(q) = &self.flux {
            v.extend_from_slice(q.coeffs());
        }
        v.extend_from_slice(self.phi.coeffs());
        v
    }

    /// Stacked fine-scale DOF vector; empty for Galerkin and projection runs.
    pub fn fine_dofs(&self) -> Vec<f64> {
        let mut v = Vec::new();
        if let Some(q) = &self.flux_prime {
            v.extend_from_slice(q.coeffs());
        }
        if let Some(p) = &self.phi_prime {
            v.extend_from_slice(p.coeffs());
        }
        v
    }

    pub fn eval_phi(&self, point: &[f64]) -> f64 {
        self.phi.eval(point)
    }

    /// Fine-scale scalar at a point (zero for Galerkin/projection).
    pub fn eval_phi_prime(&self, point: &[f64]) -> f64 {
        self.phi_prime.as_ref().map_or(0.0, |f| f.eval(point))
    }

    pub fn eval_phi_prime_grad(&self, point: &[f64]) -> [f64; 2] {
        self.phi_prime.as_ref().map_or([0.0; 2], |f| f.eval_grad(point))
    }

    pub fn eval_flux_prime(&self, point: &[f64]) -> [f64; 2] {
        self.flux_prime.as_ref().map_or([0.0; 2], |f| f.eval(point))
    }
}

/// Fine advection operator in block form. The mixed variant stores only the
/// nonzero `(L2-test, flux-trial)` block of `[[0, 0], [lower, 0]]`, already
/// carrying the `-1/nu` scaling of the solved system.
pub enum Coupling {
    Dense(Mat<f64>),
    MixedLower { lower: Mat<f64>, n_flux: usize },
}

impl Coupling {
    pub fn dim(&self) -> usize {
        match self {
            Coupling::Dense(m) => m.nrows(),
            Coupling::MixedLower { lower, n_flux } => n_flux + lower.nrows(),
        }
    }

    /// `C * X`.
    pub fn mul_mat(&self, x: &Mat<f64>) -> Mat<f64> {
        match self {
            Coupling::Dense(m) => m * x,
            Coupling::MixedLower { lower, n_flux } => {
                let top = x.as_ref().submatrix(0, 0, *n_flux, x.ncols());
                let prod = lower * top;
                let mut out = Mat::zeros(self.dim(), x.ncols());
                for i in 0..prod.nrows() {
                    for j in 0..prod.ncols() {
                        out[(n_flux + i, j)] = prod[(i, j)];
                    }
                }
                out
            }
        }
    }

    /// `C * b` for a vector.
    pub fn mul_vec(&self, b: &[f64]) -> Vec<f64> {
        let x = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let y = self.mul_mat(&x);
        (0..y.nrows()).map(|i| y[(i, 0)]).collect()
    }

    /// Adds `C` into the leading `dim x dim` block of `m`.
    pub fn add_into(&self, m: &mut Mat<f64>) {
        match self {
            Coupling::Dense(c) => {
                for i in 0..c.nrows() {
                    for j in 0..c.ncols() {
                        m[(i, j)] += c[(i, j)];
                    }
                }
            }
            Coupling::MixedLower { lower, n_flux } => {
                for i in 0..lower.nrows() {
                    for j in 0..lower.ncols() {
                        m[(n_flux + i, j)] += lower[(i, j)];
                    }
                }
            }
        }
    }

    /// Materializes the full dense block matrix.
    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.dim(), self.dim());
        self.add_into(&mut m);
        m
    }
}

/// Discrete operators of one formulation at one polynomial degree.
pub struct AssembledOps {
    pub scalar_space: Arc<FunctionSpace>,
    pub flux_space: Option<Arc<FunctionSpace>>,
    /// Symmetric part: `nu`-weighted stiffness (direct) or the saddle block
    /// matrix (mixed).
    pub symmetric: OperatorMatrix,
    pub coupling: Coupling,
    /// Dual right-hand side of the solved system.
    pub load: Vec<f64>,
}

impl AssembledOps {
    pub fn n(&self) -> usize {
        self.symmetric.nrows()
    }

    fn split_fields(&self, x: Vec<f64>) -> (ScalarField, Option<FluxField>) {
        match &self.flux_space {
            None => (ScalarField::new(self.scalar_space.clone(), x), None),
            Some(fs) => {
                let nq = fs.dof_count();
                let flux = FluxField::new(fs.clone(), x[..nq].to_vec());
                let phi = ScalarField::new(self.scalar_space.clone(), x[nq..].to_vec());
                (phi, Some(flux))
            }
        }
    }
}

/// Assembles the operators of `spec`'s formulation at the given degree
/// (coarse or fine).
pub fn assemble_operators(spec: &ProblemSpec, degree: usize) -> Result<AssembledOps> {
    spec.validate()?;
    let mesh = Mesh::new(spec.dim, spec.elements)?;
    let rule = rule_for_precision(OVER_INTEGRATION_DOP)?;
    let c = spec.velocity();
    match spec.formulation {
        Formulation::Direct => {
            let space = Arc::new(build_space(mesh, degree, SpaceKind::H1Nodal, true)?);
            let a = stiffness_matrix(&space, spec.nu)?;
            let adv = advection_matrix(&space, &space, &c)?;
            let f = load_vector(&space, |x| (spec.source)(x), &rule)?;
            Ok(AssembledOps {
                scalar_space: space,
                flux_space: None,
                symmetric: a,
                coupling: Coupling::Dense(adv.data().clone()),
                load: f.entries().to_vec(),
            })
        }
        Formulation::Mixed => {
            let flux_kind = if spec.dim == 1 { SpaceKind::H1Nodal } else { SpaceKind::HdivFlux };
            let flux = Arc::new(build_space(mesh, degree, flux_kind, false)?);
            let scalar = Arc::new(build_space(mesh, degree, SpaceKind::L2Volume, false)?);
            let mq = mass_matrix(&flux, &flux, 1.0)?;
            let d = divergence_matrix(&scalar, &flux)?;
            let a = saddle_matrix(&mq, &d)?;
            let cm = advection_matrix(&scalar, &flux, &c)?;
            let inv_nu = 1.0 / spec.nu;
            let lower = Mat::from_fn(cm.nrows(), cm.ncols(), |i, j| -inv_nu * cm.at(i, j));
            let f = load_vector(&scalar, |x| (spec.source)(x), &rule)?;
            let mut b = vec![0.0; a.nrows()];
            for (i, v) in f.entries().iter().enumerate() {
                b[flux.dof_count() + i] = -inv_nu * v;
            }
            Ok(AssembledOps {
                scalar_space: scalar,
                flux_space: Some(flux.clone()),
                symmetric: a,
                coupling: Coupling::MixedLower { lower, n_flux: flux.dof_count() },
                load: b,
            })
        }
    }
}

/// Block embedding of the coarse spaces into the fine ones: scalar transfer
/// for the direct formulation, `blockdiag(E_flux, E_scalar)` for mixed.
pub fn build_embedding(coarse: &AssembledOps, fine: &AssembledOps) -> Result<Embedding> {
    match (&coarse.flux_space, &fine.flux_space) {
        (None, None) => embedding(&coarse.scalar_space, &fine.scalar_space),
        (Some(cq), Some(fq)) => {
            let eq = embedding(cq, fq)?;
            let el = embedding(&coarse.scalar_space, &fine.scalar_space)?;
            Ok(Embedding::block_diag(&[&eq, &el]))
        }
        _ => Err(Error::invalid("mismatched formulations in embedding")),
    }
}

/// Plain Galerkin solve on the coarse space.
pub fn galerkin_solve(spec: &ProblemSpec) -> Result<VmsSolution> {
    let ops = assemble_operators(spec, spec.degree)?;
    let mut full = ops.symmetric.data().clone();
    ops.coupling.add_into(&mut full);
    let sys = OperatorMatrix::new(MatrixRole::Coupling, full);
    let x = sys.solve_vec(&ops.load)?;
    let (phi, flux) = ops.split_fields(x);
    Ok(VmsSolution {
        spec: spec.clone(),
        tag: SolverTag::Galerkin,
        phi,
        flux,
        phi_prime: None,
        flux_prime: None,
    })
}

enum LoadMode {
    Value,
    Deriv(usize),
}

/// Accumulates `F_i += int (D^mode basis_i) f` over the domain with the
/// given rule; data loads for the optimal projection.
fn accumulate_load<F: Fn(&[f64]) -> f64>(
    space: &FunctionSpace,
    comp_idx: usize,
    mode: LoadMode,
    f: F,
    rule: &QuadRule,
    out: &mut [f64],
) {
    let mesh = *space.mesh();
    let dim = mesh.dim();
    let h = mesh.element_width();
    let comp = &space.components()[comp_idx];
    let jac = (0.5 * h).powi(dim as i32);
    let n_pts = rule.len();
    let mut tables: Vec<Vec<Vec<f64>>> = Vec::new();
    for a in 0..dim {
        let use_deriv = matches!(mode, LoadMode::Deriv(ax) if ax == a);
        let mut t = vec![vec![0.0; n_pts]; comp.factors[a].local_ndofs()];
        for (q, &x) in rule.points().iter().enumerate() {
            let col = if use_deriv {
                space.factor_derivs(&comp.factors[a], x)
            } else {
                space.factor_values(&comp.factors[a], x)
            };
            for (i, v) in col.into_iter().enumerate() {
                t[i][q] = v;
            }
        }
        tables.push(t);
    }
    for elem in mesh.elements() {
        let dofs = comp.element_dofs(&elem);
        let nx = tables[0].len();
        match dim {
            1 => {
                for (q, &xq) in rule.points().iter().enumerate() {
                    let x = (elem[0] as f64 + 0.5 + 0.5 * xq) * h;
                    let fw = f(&[x]) * rule.weights()[q] * jac;
                    for (l, &g) in dofs.iter().enumerate() {
                        if let Some(r) = space.to_reduced(g) {
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
                            if let Some(r) = space.to_reduced(g) {
                                out[r] += fw * tables[0][l % nx][qx] * tables[1][l / nx][qy];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Optimal projection of the exact solution onto the coarse space. Direct:
/// `A u = nu (grad v, grad phi_exact)`. Mixed: the saddle projection with
/// flux data `(v, u_exact) + (div v, phi_exact)` and divergence data
/// `(eta, lap phi_exact)`, all over-integrated (degree of precision 25).
pub fn optimal_projection(spec: &ProblemSpec) -> Result<VmsSolution> {
    let bundle = spec
        .exact
        .as_ref()
        .ok_or_else(|| Error::invalid("optimal projection needs the exact-solution bundle"))?
        .clone();
    let ops = assemble_operators(spec, spec.degree)?;
    let rule = rule_for_precision(OVER_INTEGRATION_DOP)?;
    let mut rhs = vec![0.0; ops.n()];
    match spec.formulation {
        Formulation::Direct => {
            let nu = spec.nu;
            for d in 0..spec.dim {
                let g = bundle.grad_phi.clone();
                accumulate_load(
                    &ops.scalar_space,
                    0,
                    LoadMode::Deriv(d),
                    move |x| nu * g(x)[d],
                    &rule,
                    &mut rhs,
                );
            }
        }
        Formulation::Mixed => {
            let flux = ops.flux_space.as_ref().unwrap();
            let nq = flux.dof_count();
            for ci in 0..flux.components().len() {
                let g = bundle.grad_phi.clone();
                accumulate_load(flux, ci, LoadMode::Value, move |x| g(x)[ci], &rule, &mut rhs[..nq]);
                let p = bundle.phi.clone();
                accumulate_load(flux, ci, LoadMode::Deriv(ci), move |x| p(x), &rule, &mut rhs[..nq]);
            }
            let lap = bundle.laplacian.clone();
            accumulate_load(
                &ops.scalar_space,
                0,
                LoadMode::Value,
                move |x| lap(x),
                &rule,
                &mut rhs[nq..],
            );
        }
    }
    let x = ops.symmetric.solve_vec(&rhs)?;
    let (phi, flux) = ops.split_fields(x);
    Ok(VmsSolution {
        spec: spec.clone(),
        tag: SolverTag::Projection,
        phi,
        flux,
        phi_prime: None,
        flux_prime: None,
    })
}

/// The Suyash-Greens' operator `S = (I + G' C)^{-1} G'` as an applicable
/// solver handle.
pub struct SuyashGreens {
    n_fine: usize,
    imp: SgImpl,
}

enum SgImpl {
    /// Explicit route: dense `G'` and a factorization of `I + G' C`.
    Dense { gprime: Mat<f64>, lu: PartialPivLu<f64> },
    /// Bordered route: factorization of `[[A + C, A E], [E^T A, 0]]`.
    Bordered { lu: PartialPivLu<f64>, total: usize },
}

fn checked_lu(m: &Mat<f64>, what: &str) -> Result<PartialPivLu<f64>> {
    crate::error::ensure_sequential_linalg();
    let lu = m.partial_piv_lu();
    let n = m.nrows();
    let scale = m.norm_max().max(f64::MIN_POSITIVE);
    let mut min_piv = f64::INFINITY;
    for i in 0..n {
        min_piv = min_piv.min(lu.U()[(i, i)].abs());
    }
    if min_piv <= scale * n as f64 * 1e-14 {
        return Err(Error::Singular(format!("{what} is singular to working precision")));
    }
    Ok(lu)
}

/// Builds `S` from an explicit fine-scale Greens' matrix; errors if
/// `I + G' C` is singular (the fine space cannot resolve the closure at this
/// Peclet number).
pub fn build_suyash_greens(gp: &FineScaleGreens, c_f: &OperatorMatrix) -> Result<SuyashGreens> {
    let n = gp.dim();
    if c_f.nrows() != n || c_f.ncols() != n {
        return Err(Error::invalid("coupling operator size does not match G'"));
    }
    let mut m = gp.matrix() * c_f.data();
    for i in 0..n {
        m[(i, i)] += 1.0;
    }
    let lu = checked_lu(&m, "I + G'C")?;
    Ok(SuyashGreens { n_fine: n, imp: SgImpl::Dense { gprime: gp.matrix().clone(), lu } })
}

impl SuyashGreens {
    /// Builds `S` without forming `G'`: factorizes the bordered system whose
    /// first block row is the fine-scale equation and whose second enforces
    /// coarse annihilation. `ae` must equal `A_f * E`.
    pub fn from_operators(
        a_f: &Mat<f64>,
        coupling: &Coupling,
        e: &Mat<f64>,
        ae: &Mat<f64>,
    ) -> Result<Self> {
        let n = a_f.nrows();
        let nc = e.ncols();
        let mut ms = Mat::zeros(n + nc, n + nc);
        for i in 0..n {
            for j in 0..n {
                ms[(i, j)] = a_f[(i, j)];
            }
        }
        coupling.add_into(&mut ms);
        for i in 0..n {
            for j in 0..nc {
                ms[(i, n + j)] = ae[(i, j)];
                ms[(n + j, i)] = ae[(i, j)];
            }
        }
        let lu = checked_lu(&ms, "bordered fine-scale system (I + G'C)")?;
        Ok(SuyashGreens { n_fine: n, imp: SgImpl::Bordered { lu, total: n + nc } })
    }

    pub fn fine_dim(&self) -> usize {
        self.n_fine
    }

    /// `S B` column-wise for a block of dual vectors.
    pub fn apply_block(&self, b: &Mat<f64>) -> Mat<f64> {
        match &self.imp {
            SgImpl::Dense { gprime, lu } => {
                let gb = gprime * b;
                lu.solve(&gb)
            }
            SgImpl::Bordered { lu, total } => {
                let total = *total;
                let mut rhs = Mat::zeros(total, b.ncols());
                for i in 0..b.nrows() {
                    for j in 0..b.ncols() {
                        rhs[(i, j)] = b[(i, j)];
                    }
                }
                let sol = lu.solve(&rhs);
                let mut out = Mat::zeros(self.n_fine, b.ncols());
                for i in 0..self.n_fine {
                    for j in 0..b.ncols() {
                        out[(i, j)] = sol[(i, j)];
                    }
                }
                out
            }
        }
    }

    /// `u' = S b`: the fine scales driven by the dual vector `b`.
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let bm = Mat::from_fn(b.len(), 1, |i, _| b[i]);
        let y = self.apply_block(&bm);
        (0..self.n_fine).map(|i| y[(i, 0)]).collect()
    }
}

struct VmsRun {
    solution: VmsSolution,
    /// `E^T A_f u'` residuals, coarse-DOF indexed.
    ortho: Vec<f64>,
    n_flux_coarse: usize,
}

fn vms_run(spec: &ProblemSpec) -> Result<VmsRun> {
    spec.validate()?;
    let coarse = assemble_operators(spec, spec.degree)?;
    let n_flux_coarse = coarse.flux_space.as_ref().map_or(0, |f| f.dof_count());

    if spec.enrichment == 0 {
        // degenerate two-level setup: the fine-scale space is {0}, every
        // closure term vanishes and the coarse system is plain Galerkin
        let mut full = coarse.symmetric.data().clone();
        coarse.coupling.add_into(&mut full);
        let sys = OperatorMatrix::new(MatrixRole::Coupling, full);
        let x = sys.solve_vec(&coarse.load)?;
        let nc = x.len();
        let (phi, flux) = coarse.split_fields(x);
        let phi_prime = ScalarField::new(
            coarse.scalar_space.clone(),
            vec![0.0; coarse.scalar_space.dof_count()],
        );
        let flux_prime = coarse
            .flux_space
            .as_ref()
            .map(|f| FluxField::new(f.clone(), vec![0.0; f.dof_count()]));
        return Ok(VmsRun {
            solution: VmsSolution {
                spec: spec.clone(),
                tag: SolverTag::Vms,
                phi,
                flux,
                phi_prime: Some(phi_prime),
                flux_prime,
            },
            ortho: vec![0.0; nc],
            n_flux_coarse,
        });
    }

    let fine = assemble_operators(spec, spec.fine_degree())?;
    let e = build_embedding(&coarse, &fine)?;
    let em = e.matrix();
    let n_f = fine.n();
    let n_c = coarse.n();

    let ae = fine.symmetric.data() * em;
    let b_sym = em.transpose() * &ae;

    let sg = SuyashGreens::from_operators(fine.symmetric.data(), &fine.coupling, em, &ae).map_err(
        |err| match err {
            Error::Singular(_) => Error::Singular(format!(
                "I + G'C singular for dim={} {:?} nu={} N={} p={} k={}",
                spec.dim, spec.formulation, spec.nu, spec.elements, spec.degree, spec.enrichment
            )),
            other => other,
        },
    )?;

    // W = [C E | F], Y = S W
    let ce = fine.coupling.mul_mat(em);
    let mut w = Mat::zeros(n_f, n_c + 1);
    for i in 0..n_f {
        for j in 0..n_c {
            w[(i, j)] = ce[(i, j)];
        }
        w[(i, n_c)] = fine.load[i];
    }
    let y = sg.apply_block(&w);

    // condensed coarse operator and right-hand side
    let cy = fine.coupling.mul_mat(&y);
    let etc_y = em.transpose() * &cy; // E^T C [S C E | S F]
    let etc_e = em.transpose() * &ce;
    let mut a_tot = &b_sym + &etc_e;
    for i in 0..n_c {
        for j in 0..n_c {
            a_tot[(i, j)] -= etc_y[(i, j)];
        }
    }
    let mut rhs = vec![0.0; n_c];
    for (i, r) in rhs.iter_mut().enumerate() {
        let etf: f64 = (0..n_f).map(|l| em[(l, i)] * fine.load[l]).sum();
        *r = etf - etc_y[(i, n_c)];
    }
    let coarse_sys = OperatorMatrix::new(MatrixRole::Coupling, a_tot);
    let u_bar = coarse_sys.solve_vec(&rhs)?;

    // u' = S F - (S C E) u_bar
    let mut u_prime = vec![0.0; n_f];
    for (i, u) in u_prime.iter_mut().enumerate() {
        let mut v = y[(i, n_c)];
        for j in 0..n_c {
            v -= y[(i, j)] * u_bar[j];
        }
        *u = v;
    }

    // orthogonality residuals E^T A_f u' = (A_f E)^T u'
    let ortho: Vec<f64> = (0..n_c)
        .map(|j| (0..n_f).map(|i| ae[(i, j)] * u_prime[i]).sum())
        .collect();

    let (phi, flux) = coarse.split_fields(u_bar);
    let (phi_prime, flux_prime) = fine.split_fields(u_prime);
    Ok(VmsRun {
        solution: VmsSolution {
            spec: spec.clone(),
            tag: SolverTag::Vms,
            phi,
            flux,
            phi_prime: Some(phi_prime),
            flux_prime,
        },
        ortho,
        n_flux_coarse,
    })
}

/// VMS solve: fine-space operators, fine-scale Greens' closure, condensed
/// coarse system, and fine-scale reconstruction.
pub fn vms_solve(spec: &ProblemSpec) -> Result<VmsSolution> {
    Ok(vms_run(spec)?.solution)
}

/// Per-family orthogonality residuals of the computed fine scales against
/// the coarse space, each reported as the largest-magnitude (signed) inner
/// product over the coarse test functions. Direct: `(grad v, grad phi')`.
/// Mixed: `(v, q') + (div v, phi')` and `(eta, div q')`.
pub fn orthogonality_residuals(spec: &ProblemSpec) -> Result<Vec<f64>> {
    let run = vms_run(spec)?;
    let signed_max = |vals: &[f64]| -> f64 {
        vals.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0)
    };
    match spec.formulation {
        Formulation::Direct => {
            // table convention is the unweighted gradient inner product
            let scaled: Vec<f64> = run.ortho.iter().map(|v| v / spec.nu).collect();
            Ok(vec![signed_max(&scaled)])
        }
        Formulation::Mixed => {
            let (fluxr, scalr) = run.ortho.split_at(run.n_flux_coarse);
            Ok(vec![signed_max(fluxr), signed_max(scalr)])
        }
    }
}

/// Solves the coupled coarse/fine block system without condensation:
/// unknowns `(u_bar, u', lambda)` with the coarse equation, the fine-scale
/// equation, and the coarse-annihilation constraint. Algebra oracle for
/// [`vms_solve`].
pub fn vms_solve_uncondensed(spec: &ProblemSpec) -> Result<VmsSolution> {
    spec.validate()?;
    if spec.enrichment == 0 {
        return vms_solve(spec);
    }
    let coarse = assemble_operators(spec, spec.degree)?;
    let fine = assemble_operators(spec, spec.fine_degree())?;
    let e = build_embedding(&coarse, &fine)?;
    let em = e.matrix();
    let (n_c, n_f) = (coarse.n(), fine.n());
    let ae = fine.symmetric.data() * em;
    let b_sym = em.transpose() * &ae;
    let ce = fine.coupling.mul_mat(em);
    let etc_e = em.transpose() * &ce;
    let cf = fine.coupling.to_dense();

    let total = n_c + n_f + n_c;
    let mut m = Mat::zeros(total, total);
    // coarse equation: (B + E^T C E) u_bar + E^T C u' = E^T F
    for i in 0..n_c {
        for j in 0..n_c {
            m[(i, j)] = b_sym[(i, j)] + etc_e[(i, j)];
        }
        for j in 0..n_f {
            let v: f64 = (0..n_f).map(|l| em[(l, i)] * cf[(l, j)]).sum();
            m[(i, n_c + j)] = v;
        }
    }
    // fine-scale equation: C E u_bar + (A + C) u' + A E lambda = F
    for i in 0..n_f {
        for j in 0..n_c {
            m[(n_c + i, j)] = ce[(i, j)];
            m[(n_c + i, n_c + n_f + j)] = ae[(i, j)];
        }
        for j in 0..n_f {
            m[(n_c + i, n_c + j)] = fine.symmetric.at(i, j) + cf[(i, j)];
        }
    }
    // constraint: E^T A u' = 0
    for i in 0..n_c {
        for j in 0..n_f {
            m[(n_c + n_f + i, n_c + j)] = ae[(j, i)];
        }
    }
    let mut rhs = vec![0.0; total];
    for (i, r) in rhs.iter_mut().take(n_c).enumerate() {
        *r = (0..n_f).map(|l| em[(l, i)] * fine.load[l]).sum();
    }
    rhs[n_c..n_c + n_f].copy_from_slice(&fine.load);

    let sys = OperatorMatrix::new(MatrixRole::Coupling, m);
    let x = sys.solve_vec(&rhs)?;
    let (phi, flux) = coarse.split_fields(x[..n_c].to_vec());
    let (phi_prime, flux_prime) = fine.split_fields(x[n_c..n_c + n_f].to_vec());
    Ok(VmsSolution {
        spec: spec.clone(),
        tag: SolverTag::Vms,
        phi,
        flux,
        phi_prime: Some(phi_prime),
        flux_prime,
    })
}
