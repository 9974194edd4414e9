//! Uniform tensor-product meshes on `[0,1]^d`, the discrete function spaces
//! built on them, and the coarse-into-fine embedding.
//!
//! Every space is a tensor product of 1D factors per axis, each factor either
//! nodal (Lagrange, point-value DOFs, C0 across elements) or edge
//! (sub-interval-integral DOFs, discontinuous):
//!
//! * `H1Nodal`:  nodal per axis; optional strong homogeneous Dirichlet
//!   constraint (boundary DOFs dropped),
//! * `HdivFlux` (2D): `q_x` = nodal-in-x (x) edge-in-y, `q_y` = edge-in-x (x)
//!   nodal-in-y, so normal components are continuous across interfaces,
//! * `L2Volume`: edge per axis, fully discontinuous.
//!
//! Physical edge factors are scaled so the degree-1 edge function is the
//! element indicator; nodal factors are plain compositions with the affine
//! element map. Global numbering is per component, x-axis fastest, with
//! axis numbering `e * p + i`.
//!
//! Coarse and fine spaces share the mesh and differ only in degree, so the
//! coarse space is exactly nested in the fine one: the embedding matrix is a
//! per-component Kronecker product of 1D interpolation (nodal factors) and
//! histopolation (edge factors) operators.

use faer::Mat;

use crate::polybasis::{gll_nodes, EdgeBasis, NodalBasis};
use crate::quadrature::{integrate, rule_for_precision};
use crate::{Error, Result};

/// Uniform mesh of `[0,1]^dim` with `n` elements per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh {
    dim: usize,
    n: usize,
}

impl Mesh {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::invalid(format!("mesh dimension must be 1 or 2, got {dim}")));
        }
        if n < 1 {
            return Err(Error::invalid("mesh needs at least one element per axis"));
        }
        Ok(Mesh { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Elements per axis.
    pub fn elements_per_axis(&self) -> usize {
        self.n
    }

    /// Uniform element width per axis.
    pub fn element_width(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn total_elements(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Element axis indices in iteration order (x fastest).
    pub fn elements(&self) -> Vec<[usize; 2]> {
        match self.dim {
            1 => (0..self.n).map(|e| [e, 0]).collect(),
            _ => {
                let mut v = Vec::with_capacity(self.n * self.n);
                for ey in 0..self.n {
                    for ex in 0..self.n {
                        v.push([ex, ey]);
                    }
                }
                v
            }
        }
    }

    /// Element containing `x` along one axis and the reference coordinate in
    /// `[-1,1]`. Points on interior boundaries land in the right element.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let t = (x * self.n as f64).floor();
        let e = (t as isize).clamp(0, self.n as isize - 1) as usize;
        let xi = 2.0 * (x * self.n as f64 - e as f64) - 1.0;
        (e, xi.clamp(-1.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    H1Nodal,
    HdivFlux,
    L2Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Nodal,
    Edge,
}

/// One 1D factor of a tensor-product component.
#[derive(Debug, Clone, Copy)]
pub struct AxisFactor {
    pub kind: FactorKind,
    pub degree: usize,
    pub n_elems: usize,
}

impl AxisFactor {
    pub fn ndofs(&self) -> usize {
        match self.kind {
            FactorKind::Nodal => self.n_elems * self.degree + 1,
            FactorKind::Edge => self.n_elems * self.degree,
        }
    }

    pub fn local_ndofs(&self) -> usize {
        match self.kind {
            FactorKind::Nodal => self.degree + 1,
            FactorKind::Edge => self.degree,
        }
    }

    /// Axis DOF index of local index `i` in element `e` (shared interface
    /// nodes coincide for nodal factors).
    pub fn global(&self, e: usize, i: usize) -> usize {
        e * self.degree + i
    }
}

/// One vector component of a space (scalar spaces have exactly one).
#[derive(Debug, Clone)]
pub struct Component {
    pub factors: Vec<AxisFactor>,
    pub offset: usize,
}

impl Component {
    pub fn ndofs(&self) -> usize {
        self.factors.iter().map(|f| f.ndofs()).product()
    }

    pub fn local_ndofs(&self) -> usize {
        self.factors.iter().map(|f| f.local_ndofs()).product()
    }

    /// Full-space DOF indices of an element's local tensor basis, x fastest.
    pub fn element_dofs(&self, elem: &[usize; 2]) -> Vec<usize> {
        let nx = self.factors[0].ndofs();
        match self.factors.len() {
            1 => (0..self.factors[0].local_ndofs())
                .map(|i| self.offset + self.factors[0].global(elem[0], i))
                .collect(),
            _ => {
                let mut out = Vec::with_capacity(self.local_ndofs());
                for j in 0..self.factors[1].local_ndofs() {
                    let gy = self.factors[1].global(elem[1], j);
                    for i in 0..self.factors[0].local_ndofs() {
                        let gx = self.factors[0].global(elem[0], i);
                        out.push(self.offset + gy * nx + gx);
                    }
                }
                out
            }
        }
    }
}

/// A polynomial approximation space on a mesh.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    mesh: Mesh,
    degree: usize,
    kind: SpaceKind,
    constrained: bool,
    components: Vec<Component>,
    nodal: NodalBasis,
    edge: EdgeBasis,
    full_dof_count: usize,
    /// Maps full DOFs to constrained DOFs (identity when unconstrained).
    full_to_reduced: Vec<Option<usize>>,
    reduced_to_full: Vec<usize>,
}

/// Builds a function space; `constrained` requests strong homogeneous
/// Dirichlet handling and is valid for `H1Nodal` only.
pub fn build_space(mesh: Mesh, p: usize, kind: SpaceKind, constrained: bool) -> Result<FunctionSpace> {
    if p < 1 {
        return Err(Error::invalid("polynomial degree must be >= 1"));
    }
    if kind == SpaceKind::HdivFlux && mesh.dim() == 1 {
        return Err(Error::invalid(
            "HdivFlux is 2D only; the 1D mixed pair is H1Nodal flux + L2Volume scalar",
        ));
    }
    if constrained && kind != SpaceKind::H1Nodal {
        return Err(Error::invalid("only H1Nodal spaces take the Dirichlet constraint"));
    }
    let n = mesh.elements_per_axis();
    let nodal_f = AxisFactor { kind: FactorKind::Nodal, degree: p, n_elems: n };
    let edge_f = AxisFactor { kind: FactorKind::Edge, degree: p, n_elems: n };
    let components = match (kind, mesh.dim()) {
        (SpaceKind::H1Nodal, 1) => vec![Component { factors: vec![nodal_f], offset: 0 }],
        (SpaceKind::H1Nodal, _) => {
            vec![Component { factors: vec![nodal_f, nodal_f], offset: 0 }]
        }
        (SpaceKind::L2Volume, 1) => vec![Component { factors: vec![edge_f], offset: 0 }],
        (SpaceKind::L2Volume, _) => vec![Component { factors: vec![edge_f, edge_f], offset: 0 }],
        (SpaceKind::HdivFlux, _) => {
            let qx = Component { factors: vec![nodal_f, edge_f], offset: 0 };
            let qy = Component {
                factors: vec![edge_f, nodal_f],
                offset: qx.ndofs(),
            };
            vec![qx, qy]
        }
    };
    let full_dof_count = components.iter().map(|c| c.ndofs()).sum();

    let mut full_to_reduced = Vec::with_capacity(full_dof_count);
    let mut reduced_to_full = Vec::with_capacity(full_dof_count);
    if constrained {
        let c = &components[0];
        let nx = c.factors[0].ndofs();
        for g in 0..full_dof_count {
            let on_boundary = match mesh.dim() {
                1 => g == 0 || g == nx - 1,
                _ => {
                    let (gx, gy) = (g % nx, g / nx);
                    let ny = c.factors[1].ndofs();
                    gx == 0 || gx == nx - 1 || gy == 0 || gy == ny - 1
                }
            };
            if on_boundary {
                full_to_reduced.push(None);
            } else {
                full_to_reduced.push(Some(reduced_to_full.len()));
                reduced_to_full.push(g);
            }
        }
    } else {
        for g in 0..full_dof_count {
            full_to_reduced.push(Some(g));
            reduced_to_full.push(g);
        }
    }

    let node_set = gll_nodes(p)?;
    Ok(FunctionSpace {
        mesh,
        degree: p,
        kind,
        constrained,
        components,
        nodal: NodalBasis::new(node_set.clone()),
        edge: EdgeBasis::new(node_set),
        full_dof_count,
        full_to_reduced,
        reduced_to_full,
    })
}

impl FunctionSpace {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn nodal_basis(&self) -> &NodalBasis {
        &self.nodal
    }

    pub fn edge_basis(&self) -> &EdgeBasis {
        &self.edge
    }

    /// DOF count after constraint handling.
    pub fn dof_count(&self) -> usize {
        self.reduced_to_full.len()
    }

    pub fn full_dof_count(&self) -> usize {
        self.full_dof_count
    }

    pub fn to_reduced(&self, full: usize) -> Option<usize> {
        self.full_to_reduced[full]
    }

    pub fn to_full(&self, reduced: usize) -> usize {
        self.reduced_to_full[reduced]
    }

    /// Expands constrained coefficients to the full DOF vector (boundary
    /// entries zero). Unconstrained spaces get a plain copy.
    pub fn expand(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.dof_count());
        let mut full = vec![0.0; self.full_dof_count];
        for (r, &g) in self.reduced_to_full.iter().enumerate() {
            full[g] = coeffs[r];
        }
        full
    }

    /// Value scale of an axis factor: edge factors carry the fixed reference
    /// scaling of 2 (the degree-1 edge function is the element indicator).
    pub(crate) fn factor_scale(&self, f: &AxisFactor) -> f64 {
        match f.kind {
            FactorKind::Nodal => 1.0,
            FactorKind::Edge => 2.0,
        }
    }

    /// d(xi)/dx on an element.
    pub fn deriv_scale(&self) -> f64 {
        2.0 / self.mesh.element_width()
    }

    pub(crate) fn factor_values(&self, f: &AxisFactor, xi: f64) -> Vec<f64> {
        let s = self.factor_scale(f);
        match f.kind {
            FactorKind::Nodal => self.nodal.values(xi),
            FactorKind::Edge => self.edge.values(xi).into_iter().map(|v| s * v).collect(),
        }
    }

    pub(crate) fn factor_derivs(&self, f: &AxisFactor, xi: f64) -> Vec<f64> {
        match f.kind {
            FactorKind::Nodal => self
                .nodal
                .derivs(xi)
                .into_iter()
                .map(|v| v * self.deriv_scale())
                .collect(),
            FactorKind::Edge => panic!("edge factors are never differentiated directly"),
        }
    }

    /// Scalar field value at a point (scalar spaces only). Coefficients are
    /// in reduced numbering for constrained spaces.
    pub fn eval(&self, coeffs: &[f64], point: &[f64]) -> f64 {
        let full = self.expand(coeffs);
        self.eval_full(&full, point)
    }

    fn scalar_component(&self) -> &Component {
        assert!(
            matches!(self.kind, SpaceKind::H1Nodal | SpaceKind::L2Volume),
            "scalar evaluation needs a scalar space"
        );
        &self.components[0]
    }

    fn eval_full(&self, full: &[f64], point: &[f64]) -> f64 {
        let c = self.scalar_component();
        let mut elem = [0usize; 2];
        let mut xi = [0.0f64; 2];
        for a in 0..self.mesh.dim() {
            let (e, x) = self.mesh.locate(point[a]);
            elem[a] = e;
            xi[a] = x;
        }
        let dofs = c.element_dofs(&elem);
        let bx = self.factor_values(&c.factors[0], xi[0]);
        if self.mesh.dim() == 1 {
            return dofs.iter().zip(&bx).map(|(&g, &b)| full[g] * b).sum();
        }
        let by = self.factor_values(&c.factors[1], xi[1]);
        let nx = bx.len();
        dofs.iter()
            .enumerate()
            .map(|(l, &g)| full[g] * bx[l % nx] * by[l / nx])
            .sum()
    }

    /// Gradient of an H1 scalar field at a point.
    pub fn eval_grad(&self, coeffs: &[f64], point: &[f64]) -> [f64; 2] {
        assert_eq!(self.kind, SpaceKind::H1Nodal);
        let full = self.expand(coeffs);
        let c = self.scalar_component();
        let mut elem = [0usize; 2];
        let mut xi = [0.0f64; 2];
        for a in 0..self.mesh.dim() {
            let (e, x) = self.mesh.locate(point[a]);
            elem[a] = e;
            xi[a] = x;
        }
        let dofs = c.element_dofs(&elem);
        let bx = self.factor_values(&c.factors[0], xi[0]);
        let dx = self.factor_derivs(&c.factors[0], xi[0]);
        if self.mesh.dim() == 1 {
            let g = dofs.iter().zip(&dx).map(|(&g, &d)| full[g] * d).sum();
            return [g, 0.0];
        }
        let by = self.factor_values(&c.factors[1], xi[1]);
        let dy = self.factor_derivs(&c.factors[1], xi[1]);
        let nx = bx.len();
        let mut out = [0.0; 2];
        for (l, &g) in dofs.iter().enumerate() {
            out[0] += full[g] * dx[l % nx] * by[l / nx];
            out[1] += full[g] * bx[l % nx] * dy[l / nx];
        }
        out
    }

    /// Flux vector value at a point (`HdivFlux` spaces).
    pub fn eval_flux(&self, coeffs: &[f64], point: &[f64]) -> [f64; 2] {
        assert_eq!(self.kind, SpaceKind::HdivFlux);
        let (ex, xix) = self.mesh.locate(point[0]);
        let (ey, xiy) = self.mesh.locate(point[1]);
        let mut out = [0.0; 2];
        for (ci, c) in self.components.iter().enumerate() {
            let dofs = c.element_dofs(&[ex, ey]);
            let bx = self.factor_values(&c.factors[0], xix);
            let by = self.factor_values(&c.factors[1], xiy);
            let nx = bx.len();
            out[ci] = dofs
                .iter()
                .enumerate()
                .map(|(l, &g)| coeffs[g] * bx[l % nx] * by[l / nx])
                .sum();
        }
        out
    }

    /// Divergence of a flux field at a point (`HdivFlux` spaces). Each
    /// component is differentiated along its nodal axis.
    pub fn eval_flux_div(&self, coeffs: &[f64], point: &[f64]) -> f64 {
        assert_eq!(self.kind, SpaceKind::HdivFlux);
        let (ex, xix) = self.mesh.locate(point[0]);
        let (ey, xiy) = self.mesh.locate(point[1]);
        let mut div = 0.0;
        for (ci, c) in self.components.iter().enumerate() {
            let dofs = c.element_dofs(&[ex, ey]);
            let bx = if ci == 0 {
                self.factor_derivs(&c.factors[0], xix)
            } else {
                self.factor_values(&c.factors[0], xix)
            };
            let by = if ci == 0 {
                self.factor_values(&c.factors[1], xiy)
            } else {
                self.factor_derivs(&c.factors[1], xiy)
            };
            let nx = bx.len();
            div += dofs
                .iter()
                .enumerate()
                .map(|(l, &g)| coeffs[g] * bx[l % nx] * by[l / nx])
                .sum::<f64>();
        }
        div
    }

    /// Row of all (reduced) basis function values at a point; scalar spaces.
    pub fn basis_row(&self, point: &[f64]) -> Vec<f64> {
        let c = self.scalar_component();
        let mut elem = [0usize; 2];
        let mut xi = [0.0f64; 2];
        for a in 0..self.mesh.dim() {
            let (e, x) = self.mesh.locate(point[a]);
            elem[a] = e;
            xi[a] = x;
        }
        let dofs = c.element_dofs(&elem);
        let bx = self.factor_values(&c.factors[0], xi[0]);
        let mut row = vec![0.0; self.dof_count()];
        if self.mesh.dim() == 1 {
            for (l, &g) in dofs.iter().enumerate() {
                if let Some(r) = self.full_to_reduced[g] {
                    row[r] = bx[l];
                }
            }
            return row;
        }
        let by = self.factor_values(&c.factors[1], xi[1]);
        let nx = bx.len();
        for (l, &g) in dofs.iter().enumerate() {
            if let Some(r) = self.full_to_reduced[g] {
                row[r] = bx[l % nx] * by[l / nx];
            }
        }
        row
    }
}

/// Coarse-into-fine transfer for equal meshes and nested degrees.
#[derive(Debug, Clone)]
pub struct Embedding {
    matrix: Mat<f64>,
}

impl Embedding {
    /// Wraps an explicit transfer matrix (block compositions, degenerate
    /// zero-column embeddings in tests).
    pub fn from_matrix(matrix: Mat<f64>) -> Embedding {
        Embedding { matrix }
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.matrix
    }

    pub fn fine_dofs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn coarse_dofs(&self) -> usize {
        self.matrix.ncols()
    }

    /// Stacks embeddings block-diagonally (flux block then scalar block of a
    /// mixed pair).
    pub fn block_diag(blocks: &[&Embedding]) -> Embedding {
        let nr: usize = blocks.iter().map(|b| b.matrix.nrows()).sum();
        let nc: usize = blocks.iter().map(|b| b.matrix.ncols()).sum();
        let mut m = Mat::zeros(nr, nc);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for i in 0..b.matrix.nrows() {
                for j in 0..b.matrix.ncols() {
                    m[(r0 + i, c0 + j)] = b.matrix[(i, j)];
                }
            }
            r0 += b.matrix.nrows();
            c0 += b.matrix.ncols();
        }
        Embedding { matrix: m }
    }
}

/// 1D nodal-factor embedding: fine point-value DOFs of the coarse Lagrange
/// basis, one interpolation block per element.
fn axis_embedding_nodal(coarse: &FunctionSpace, fine: &FunctionSpace) -> Mat<f64> {
    let (pc, pf) = (coarse.degree, fine.degree);
    let n = coarse.mesh.elements_per_axis();
    let fine_nodes = fine.nodal.node_set().nodes().to_vec();
    let mut local = vec![vec![0.0; pc + 1]; pf + 1];
    for (i, &xf) in fine_nodes.iter().enumerate() {
        for j in 0..=pc {
            local[i][j] = coarse.nodal.eval(j, xf).unwrap();
        }
    }
    let mut m = Mat::zeros(n * pf + 1, n * pc + 1);
    for e in 0..n {
        for i in 0..=pf {
            for j in 0..=pc {
                // shared interface nodes receive the same value from both
                // sides; assignment keeps the matrix well defined
                m[(e * pf + i, e * pc + j)] = local[i][j];
            }
        }
    }
    m
}

/// 1D edge-factor embedding by histopolation: the fine edge DOF of a coarse
/// edge function is its integral over the fine sub-cell (in reference
/// coordinates; the element widths cancel because the meshes coincide).
fn axis_embedding_edge(coarse: &FunctionSpace, fine: &FunctionSpace) -> Mat<f64> {
    let (pc, pf) = (coarse.degree, fine.degree);
    let n = coarse.mesh.elements_per_axis();
    let fine_nodes = fine.nodal.node_set().nodes().to_vec();
    let rule = rule_for_precision(pc + 1).unwrap();
    let mut local = vec![vec![0.0; pc]; pf];
    for i in 0..pf {
        let (a, b) = (fine_nodes[i], fine_nodes[i + 1]);
        for j in 1..=pc {
            local[i][j - 1] =
                integrate(&rule, |x| coarse.edge.eval(j, x).unwrap(), a, b).unwrap();
        }
    }
    let mut m = Mat::zeros(n * pf, n * pc);
    for e in 0..n {
        for i in 0..pf {
            for j in 0..pc {
                m[(e * pf + i, e * pc + j)] = local[i][j];
            }
        }
    }
    m
}

fn kron(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let mut m = Mat::zeros(a.nrows() * b.nrows(), a.ncols() * b.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let v = a[(i, j)];
            if v == 0.0 {
                continue;
            }
            for k in 0..b.nrows() {
                for l in 0..b.ncols() {
                    m[(i * b.nrows() + k, j * b.ncols() + l)] = v * b[(k, l)];
                }
            }
        }
    }
    m
}

/// Builds the embedding of `coarse` into `fine` (same mesh, same kind,
/// `fine.degree >= coarse.degree`; equal degrees give the identity).
pub fn embedding(coarse: &FunctionSpace, fine: &FunctionSpace) -> Result<Embedding> {
    crate::error::ensure_sequential_linalg();
    if coarse.mesh != fine.mesh {
        return Err(Error::invalid("embedding requires identical meshes"));
    }
    if coarse.kind != fine.kind || coarse.constrained != fine.constrained {
        return Err(Error::invalid("embedding requires identical space kinds"));
    }
    if fine.degree < coarse.degree {
        return Err(Error::invalid("fine space degree must be >= coarse degree"));
    }

    let nodal_1d = axis_embedding_nodal(coarse, fine);
    let edge_1d = axis_embedding_edge(coarse, fine);
    let pick = |k: FactorKind| match k {
        FactorKind::Nodal => &nodal_1d,
        FactorKind::Edge => &edge_1d,
    };

    let mut full = Mat::zeros(fine.full_dof_count, coarse.full_dof_count);
    for (cc, fc) in coarse.components.iter().zip(&fine.components) {
        let block = match cc.factors.len() {
            1 => pick(cc.factors[0].kind).clone(),
            _ => kron(pick(cc.factors[1].kind), pick(cc.factors[0].kind)),
        };
        for i in 0..block.nrows() {
            for j in 0..block.ncols() {
                full[(fc.offset + i, cc.offset + j)] = block[(i, j)];
            }
        }
    }

    // Constrained spaces keep interior rows/columns only; boundary columns of
    // interior coarse functions are zero by construction.
    let mut m = Mat::zeros(fine.dof_count(), coarse.dof_count());
    for (rf, &gf) in fine.reduced_to_full.iter().enumerate() {
        for (rc, &gc) in coarse.reduced_to_full.iter().enumerate() {
            m[(rf, rc)] = full[(gf, gc)];
        }
    }
    Ok(Embedding { matrix: m })
}
