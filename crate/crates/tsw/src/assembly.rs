//! Assembly of the discrete operators on the compatible spaces: the mass
//! matrices M0/M1/M2, the strong-form divergence D2 and perp-curl R1, their
//! weighted variants M0*/M1*/M2*, and the trilinear actions C1 and K2.
//!
//! Weak-form gradient and curl are the transposes of D2 and R1. The
//! trilinear forms are applied matrix-free: the model only ever needs their
//! action on field pairs.

use crate::error::{Error, Result};
use crate::fespace::{Field, FunctionSpace, SpaceFamily};
use crate::linalg::{CsrMatrix, DenseChol, SparseChol};
use crate::quadrature::QuadRule2d;
use crate::scalar::Real;
use std::sync::Arc;

/// Basis values of one space tabulated at the volume quadrature points.
/// All cells share the tables (uniform affine mesh).
#[derive(Debug, Clone)]
pub struct ElementTables<T> {
    pub nloc: usize,
    pub nq: usize,
    /// `val[l * nq + q]`: scalar value (V0/V2) or the single nonzero
    /// physical vector component (V1, outward orientation).
    pub val: Vec<T>,
    /// V1 only: which physical component each local dof carries.
    pub comp: Vec<u8>,
    /// V1 only: physical divergence.
    pub div: Vec<T>,
    /// V0 only: physical perp-gradient components.
    pub perp_x: Vec<T>,
    pub perp_y: Vec<T>,
    /// Quadrature weight times the (constant) Jacobian determinant.
    pub wdetj: Vec<T>,
}

impl<T: Real> ElementTables<T> {
    pub fn new(space: &FunctionSpace<T>, quad: &QuadRule2d<T>) -> Self {
        let nloc = space.nloc;
        let nq = quad.len();
        let mut val = vec![T::zero(); nloc * nq];
        let mut comp = Vec::new();
        let mut div = Vec::new();
        let mut perp_x = Vec::new();
        let mut perp_y = Vec::new();
        match space.family {
            SpaceFamily::V0 => {
                perp_x = vec![T::zero(); nloc * nq];
                perp_y = vec![T::zero(); nloc * nq];
                for (q, &xi) in quad.points.iter().enumerate() {
                    let v = space.scalar_values(xi);
                    let p = space.v0_perp(xi);
                    for l in 0..nloc {
                        val[l * nq + q] = v[l];
                        perp_x[l * nq + q] = p[l].0;
                        perp_y[l * nq + q] = p[l].1;
                    }
                }
            }
            SpaceFamily::V2 => {
                for (q, &xi) in quad.points.iter().enumerate() {
                    let v = space.scalar_values(xi);
                    for l in 0..nloc {
                        val[l * nq + q] = v[l];
                    }
                }
            }
            SpaceFamily::V1 => {
                comp = space.v1_dofs.iter().map(|d| d.comp).collect();
                div = vec![T::zero(); nloc * nq];
                for (q, &xi) in quad.points.iter().enumerate() {
                    let v = space.v1_values(xi);
                    for l in 0..nloc {
                        let (vx, vy, dv) = v[l];
                        val[l * nq + q] = if comp[l] == 0 { vx } else { vy };
                        div[l * nq + q] = dv;
                    }
                }
            }
        }
        let wdetj = quad
            .weights
            .iter()
            .map(|&w| w * space.mesh.det_j)
            .collect();
        ElementTables {
            nloc,
            nq,
            val,
            comp,
            div,
            perp_x,
            perp_y,
            wdetj,
        }
    }

    /// Evaluate a scalar field at all quadrature points of a cell.
    pub fn field_at_q(&self, space: &FunctionSpace<T>, f: &Field<T>, cell: usize, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.nq);
        out.fill(T::zero());
        let dofs = space.cell_dofs(cell);
        for l in 0..self.nloc {
            let c = f.coeffs[dofs[l] as usize];
            if c != T::zero() {
                let row = &self.val[l * self.nq..(l + 1) * self.nq];
                for (o, &v) in out.iter_mut().zip(row) {
                    *o += c * v;
                }
            }
        }
    }

    /// Evaluate a V1 field (both components) at all quadrature points.
    pub fn vector_at_q(
        &self,
        space: &FunctionSpace<T>,
        f: &Field<T>,
        cell: usize,
        out_x: &mut [T],
        out_y: &mut [T],
    ) {
        out_x.fill(T::zero());
        out_y.fill(T::zero());
        let dofs = space.cell_dofs(cell);
        let signs = space.cell_signs(cell);
        for l in 0..self.nloc {
            let c = f.coeffs[dofs[l] as usize] * T::of(signs[l] as f64);
            if c == T::zero() {
                continue;
            }
            let row = &self.val[l * self.nq..(l + 1) * self.nq];
            let out = if self.comp[l] == 0 {
                &mut *out_x
            } else {
                &mut *out_y
            };
            for (o, &v) in out.iter_mut().zip(row) {
                *o += c * v;
            }
        }
    }
}

/// Sparsity pattern plus scatter slots for repeated weighted-mass assembly
/// on a fixed space.
#[derive(Debug, Clone)]
pub struct GramPattern<T> {
    space: Arc<FunctionSpace<T>>,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    /// Local pairs (l1, l2) with l2 <= l1 (same component for V1).
    pairs: Vec<(u16, u16)>,
    /// Per cell and pair: value slots of (l1,l2) and (l2,l1).
    slots: Vec<(u32, u32)>,
}

impl<T: Real> GramPattern<T> {
    pub fn build(space: &Arc<FunctionSpace<T>>, tables: &ElementTables<T>) -> Self {
        let nloc = space.nloc;
        let mut pairs = Vec::new();
        for l1 in 0..nloc {
            for l2 in 0..=l1 {
                if space.family == SpaceFamily::V1 && tables.comp[l1] != tables.comp[l2] {
                    continue;
                }
                pairs.push((l1 as u16, l2 as u16));
            }
        }
        let mesh = &space.mesh;
        let mut cols: Vec<Vec<u32>> = vec![Vec::new(); space.ndof];
        for cell in 0..mesh.n_cells() {
            let dofs = space.cell_dofs(cell);
            for &(l1, l2) in &pairs {
                let (g1, g2) = (dofs[l1 as usize], dofs[l2 as usize]);
                cols[g1 as usize].push(g2);
                cols[g2 as usize].push(g1);
            }
        }
        let mut row_ptr = vec![0usize; space.ndof + 1];
        let mut col_idx = Vec::new();
        for (r, c) in cols.iter_mut().enumerate() {
            c.sort_unstable();
            c.dedup();
            col_idx.extend_from_slice(c);
            row_ptr[r + 1] = col_idx.len();
        }
        let find = |row: usize, col: u32| -> u32 {
            let lo = row_ptr[row];
            let hi = row_ptr[row + 1];
            (lo + col_idx[lo..hi].binary_search(&col).unwrap()) as u32
        };
        let mut slots = Vec::with_capacity(mesh.n_cells() * pairs.len());
        for cell in 0..mesh.n_cells() {
            let dofs = space.cell_dofs(cell);
            for &(l1, l2) in &pairs {
                let (g1, g2) = (dofs[l1 as usize], dofs[l2 as usize]);
                slots.push((find(g1 as usize, g2), find(g2 as usize, g1)));
            }
        }
        GramPattern {
            space: space.clone(),
            row_ptr,
            col_idx,
            pairs,
            slots,
        }
    }

    /// Assemble the Gram matrix weighted by `w` at the quadrature points
    /// (`w_at_q` has nq entries per cell, or is empty for unit weight).
    fn fill(&self, tables: &ElementTables<T>, w_at_q: &[T]) -> CsrMatrix<T> {
        let nq = tables.nq;
        let mut values = vec![T::zero(); self.col_idx.len()];
        let npairs = self.pairs.len();
        let unit = w_at_q.is_empty();
        for cell in 0..self.space.mesh.n_cells() {
            let signs = self.space.cell_signs(cell);
            let wq = if unit { &[][..] } else { &w_at_q[cell * nq..(cell + 1) * nq] };
            for (p, &(l1, l2)) in self.pairs.iter().enumerate() {
                let (l1, l2) = (l1 as usize, l2 as usize);
                let r1 = &tables.val[l1 * nq..(l1 + 1) * nq];
                let r2 = &tables.val[l2 * nq..(l2 + 1) * nq];
                let mut acc = T::zero();
                if unit {
                    for q in 0..nq {
                        acc += r1[q] * r2[q] * tables.wdetj[q];
                    }
                } else {
                    for q in 0..nq {
                        acc += r1[q] * r2[q] * tables.wdetj[q] * wq[q];
                    }
                }
                acc *= T::of((signs[l1] * signs[l2]) as f64);
                let (sa, sb) = self.slots[cell * npairs + p];
                values[sa as usize] += acc;
                if sa != sb {
                    values[sb as usize] += acc;
                }
            }
        }
        CsrMatrix {
            nrows: self.space.ndof,
            ncols: self.space.ndof,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values,
            symmetric: true,
        }
    }

    pub fn fill_unit(&self, tables: &ElementTables<T>) -> CsrMatrix<T> {
        self.fill(tables, &[])
    }

    pub fn fill_weighted(
        &self,
        tables: &ElementTables<T>,
        v2_tables: &ElementTables<T>,
        w: &Field<T>,
    ) -> CsrMatrix<T> {
        let nq = tables.nq;
        let ncells = self.space.mesh.n_cells();
        let mut w_at_q = vec![T::zero(); ncells * nq];
        for cell in 0..ncells {
            v2_tables.field_at_q(
                &w.space,
                w,
                cell,
                &mut w_at_q[cell * nq..(cell + 1) * nq],
            );
        }
        self.fill(tables, &w_at_q)
    }
}

/// Exact inverse of an (unweighted) mass matrix on the uniform periodic
/// mesh, using its 1D tensor-product factorization. The 2D quadrature rule
/// is a tensor of the 1D rule and every cell has the same Jacobian, so the
/// assembled mass is exactly a Kronecker product of 1D mass matrices; the
/// dense 1D factors are small. Used as a CG preconditioner, making mass
/// solves converge in one or two iterations.
#[derive(Debug, Clone)]
pub struct TensorMassInverse<T> {
    blocks: Vec<KronBlock<T>>,
}

#[derive(Debug, Clone)]
struct KronBlock<T> {
    offset: usize,
    nx: usize,
    ny: usize,
    ax: SparseChol<T>,
    by: SparseChol<T>,
}

fn mass_1d<T: Real>(
    basis: &crate::fespace::Basis1d<T>,
    n_cells: usize,
    continuous: bool,
    rule: &crate::quadrature::QuadRule<T>,
    scale: T,
) -> Vec<T> {
    let nloc = basis.len();
    let per_cell = if continuous { nloc - 1 } else { nloc };
    let n = n_cells * per_cell;
    let mut local = vec![T::zero(); nloc * nloc];
    for (q, &x) in rule.points.iter().enumerate() {
        let vals = basis.values(x);
        for i in 0..nloc {
            for j in 0..nloc {
                local[i * nloc + j] += rule.weights[q] * vals[i] * vals[j] * scale;
            }
        }
    }
    let mut a = vec![T::zero(); n * n];
    for c in 0..n_cells {
        for i in 0..nloc {
            let gi = (c * per_cell + i) % n;
            for j in 0..nloc {
                let gj = (c * per_cell + j) % n;
                a[gi * n + gj] += local[i * nloc + j];
            }
        }
    }
    a
}

impl<T: Real> TensorMassInverse<T> {
    pub fn build(
        space: &FunctionSpace<T>,
        rule: &crate::quadrature::QuadRule<T>,
    ) -> Result<Self> {
        let mesh = &space.mesh;
        let (jx, jy) = mesh.jac;
        let half_dx = jx;
        let half_dy = jy;
        let k = space.order;
        let nx_cont = mesh.nx * (k + 1);
        let ny_cont = mesh.ny * (k + 1);
        let factor = |basis: &crate::fespace::Basis1d<T>,
                      n_cells: usize,
                      continuous: bool,
                      scale: T|
         -> Result<SparseChol<T>> {
            let n = n_cells * (basis.len() - if continuous { 1 } else { 0 });
            let a = mass_1d(basis, n_cells, continuous, rule, scale);
            Ok(DenseChol::factor(n, &a)?.compress())
        };
        let blocks = match space.family {
            SpaceFamily::V0 => vec![KronBlock {
                offset: 0,
                nx: nx_cont,
                ny: ny_cont,
                ax: factor(&space.cont, mesh.nx, true, half_dx)?,
                by: factor(&space.cont, mesh.ny, true, half_dy)?,
            }],
            SpaceFamily::V2 => vec![KronBlock {
                offset: 0,
                nx: nx_cont,
                ny: ny_cont,
                ax: factor(&space.disc, mesh.nx, false, half_dx)?,
                by: factor(&space.disc, mesh.ny, false, half_dy)?,
            }],
            SpaceFamily::V1 => {
                let piola_y = T::of(4.0) / (mesh.dy * mesh.dy);
                let piola_x = T::of(4.0) / (mesh.dx * mesh.dx);
                vec![
                    KronBlock {
                        offset: 0,
                        nx: nx_cont,
                        ny: ny_cont,
                        ax: factor(&space.cont, mesh.nx, true, half_dx)?,
                        by: factor(&space.disc, mesh.ny, false, half_dy * piola_y)?,
                    },
                    KronBlock {
                        offset: nx_cont * ny_cont,
                        nx: nx_cont,
                        ny: ny_cont,
                        ax: factor(&space.disc, mesh.nx, false, half_dx * piola_x)?,
                        by: factor(&space.cont, mesh.ny, true, half_dy)?,
                    },
                ]
            }
        };
        Ok(TensorMassInverse { blocks })
    }
}

impl<T: Real> crate::linalg::PrecOp<T> for TensorMassInverse<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        z.copy_from_slice(r);
        for b in &self.blocks {
            let buf = &mut z[b.offset..b.offset + b.nx * b.ny];
            // rows (fixed gy) are contiguous in gx: solve the x factor
            for gy in 0..b.ny {
                b.ax.solve_in_place(&mut buf[gy * b.nx..(gy + 1) * b.nx]);
            }
            // columns are strided: gather, solve the y factor, scatter
            let mut col = vec![T::zero(); b.ny];
            for gx in 0..b.nx {
                for gy in 0..b.ny {
                    col[gy] = buf[gy * b.nx + gx];
                }
                b.by.solve_in_place(&mut col);
                for gy in 0..b.ny {
                    buf[gy * b.nx + gx] = col[gy];
                }
            }
        }
    }
}


fn check_weight<T: Real>(space: &FunctionSpace<T>, w: &Field<T>) -> Result<()> {
    if w.space.family != SpaceFamily::V2 || !w.space.compatible_mesh(space) {
        return Err(Error::Incompatible(
            "weight must live in V2 on the same mesh".into(),
        ));
    }
    Ok(())
}

/// Gram (mass) matrix of a space under the given volume rule.
pub fn assemble_mass<T: Real>(space: &Arc<FunctionSpace<T>>, quad: &QuadRule2d<T>) -> CsrMatrix<T> {
    let tables = ElementTables::new(space, quad);
    GramPattern::build(space, &tables).fill_unit(&tables)
}

/// Weighted Gram matrix with weight w in V2; reduces to `assemble_mass`
/// when w = 1.
pub fn assemble_weighted_mass<T: Real>(
    space: &Arc<FunctionSpace<T>>,
    quad: &QuadRule2d<T>,
    w: &Field<T>,
) -> Result<CsrMatrix<T>> {
    check_weight(space, w)?;
    let tables = ElementTables::new(space, quad);
    let v2_tables = ElementTables::new(&w.space, quad);
    Ok(GramPattern::build(space, &tables).fill_weighted(&tables, &v2_tables, w))
}

/// D2: strong-form divergence, mapping V1 coefficients into the V2 dual.
pub fn assemble_div<T: Real>(
    v1: &Arc<FunctionSpace<T>>,
    v2: &Arc<FunctionSpace<T>>,
    quad: &QuadRule2d<T>,
) -> Result<CsrMatrix<T>> {
    if v1.family != SpaceFamily::V1 || v2.family != SpaceFamily::V2 || !v1.compatible_mesh(v2) {
        return Err(Error::Incompatible("assemble_div requires matching V1, V2".into()));
    }
    let t1 = ElementTables::new(v1, quad);
    let t2 = ElementTables::new(v2, quad);
    let nq = quad.len();
    let mut triplets = Vec::with_capacity(v1.mesh.n_cells() * v1.nloc * v2.nloc);
    for cell in 0..v1.mesh.n_cells() {
        let d1 = v1.cell_dofs(cell);
        let s1 = v1.cell_signs(cell);
        let d2 = v2.cell_dofs(cell);
        for l2 in 0..v2.nloc {
            let r2 = &t2.val[l2 * nq..(l2 + 1) * nq];
            for l1 in 0..v1.nloc {
                let rd = &t1.div[l1 * nq..(l1 + 1) * nq];
                let mut acc = T::zero();
                for q in 0..nq {
                    acc += r2[q] * rd[q] * t1.wdetj[q];
                }
                triplets.push((d2[l2], d1[l1], acc * T::of(s1[l1] as f64)));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(v2.ndof, v1.ndof, &mut triplets, false))
}

/// R1: strong-form perp-curl, mapping V0 coefficients into the V1 dual.
pub fn assemble_perp_curl<T: Real>(
    v0: &Arc<FunctionSpace<T>>,
    v1: &Arc<FunctionSpace<T>>,
    quad: &QuadRule2d<T>,
) -> Result<CsrMatrix<T>> {
    if v0.family != SpaceFamily::V0 || v1.family != SpaceFamily::V1 || !v0.compatible_mesh(v1) {
        return Err(Error::Incompatible("assemble_perp_curl requires matching V0, V1".into()));
    }
    let t0 = ElementTables::new(v0, quad);
    let t1 = ElementTables::new(v1, quad);
    let nq = quad.len();
    let mut triplets = Vec::with_capacity(v0.mesh.n_cells() * v0.nloc * v1.nloc);
    for cell in 0..v0.mesh.n_cells() {
        let d0 = v0.cell_dofs(cell);
        let d1 = v1.cell_dofs(cell);
        let s1 = v1.cell_signs(cell);
        for l1 in 0..v1.nloc {
            let rv = &t1.val[l1 * nq..(l1 + 1) * nq];
            let perp = if t1.comp[l1] == 0 { &t0.perp_x } else { &t0.perp_y };
            for l0 in 0..v0.nloc {
                let rp = &perp[l0 * nq..(l0 + 1) * nq];
                let mut acc = T::zero();
                for q in 0..nq {
                    acc += rv[q] * rp[q] * t1.wdetj[q];
                }
                triplets.push((d1[l1], d0[l0], acc * T::of(s1[l1] as f64)));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(v1.ndof, v0.ndof, &mut triplets, false))
}

/// Coefficient matrix of the strong perp-gradient: maps V0 coefficients to
/// the V1 coefficients of perp-grad psi, exactly (interpolation at the V1
/// nodes; perp-grad of V0 lies in V1 by construction of the complex).
pub fn strong_perp<T: Real>(
    v0: &Arc<FunctionSpace<T>>,
    v1: &Arc<FunctionSpace<T>>,
) -> Result<CsrMatrix<T>> {
    if v0.family != SpaceFamily::V0 || v1.family != SpaceFamily::V1 || !v0.compatible_mesh(v1) {
        return Err(Error::Incompatible("strong_perp requires matching V0, V1".into()));
    }
    let k = v0.order;
    let cont = &v0.cont;
    let disc = &v0.disc;
    let mut triplets = Vec::new();
    let v0_loc = |i: usize, j: usize| i + j * (k + 2);
    for cell in 0..v0.mesh.n_cells() {
        let d0 = v0.cell_dofs(cell);
        let d1 = v1.cell_dofs(cell);
        let s1 = v1.cell_signs(cell);
        for (l, d) in v1.v1_dofs.iter().enumerate() {
            // Skip the duplicate face representative so each row is set once.
            if (d.comp == 0 && d.i == k + 1) || (d.comp == 1 && d.j == k + 1) {
                continue;
            }
            let sg = T::of((d.sigma * s1[l]) as f64);
            if d.comp == 0 {
                // coefficient = -d(psi)/d(eta) at (t_i, u_j)
                let du = disc.nodes[d.j];
                for qn in 0..k + 2 {
                    let val = -cont.deriv(qn, du) * sg;
                    triplets.push((d1[l], d0[v0_loc(d.i, qn)], val));
                }
            } else {
                // coefficient = +d(psi)/d(xi) at (u_i, t_j)
                let du = disc.nodes[d.i];
                for p in 0..k + 2 {
                    let val = cont.deriv(p, du) * sg;
                    triplets.push((d1[l], d0[v0_loc(p, d.j)], val));
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(v1.ndof, v0.ndof, &mut triplets, false))
}

fn check_same_mesh<T: Real>(a: &FunctionSpace<T>, b: &FunctionSpace<T>) -> Result<()> {
    if !a.compatible_mesh(b) {
        return Err(Error::Incompatible("fields live on different meshes".into()));
    }
    Ok(())
}

/// Shared context for the matrix-free trilinear actions.
pub struct ActionCtx<T> {
    pub v0: Arc<FunctionSpace<T>>,
    pub v1: Arc<FunctionSpace<T>>,
    pub v2: Arc<FunctionSpace<T>>,
    pub t0: ElementTables<T>,
    pub t1: ElementTables<T>,
    pub t2: ElementTables<T>,
    pub nq: usize,
}

impl<T: Real> ActionCtx<T> {
    pub fn new(
        v0: &Arc<FunctionSpace<T>>,
        v1: &Arc<FunctionSpace<T>>,
        v2: &Arc<FunctionSpace<T>>,
        quad: &QuadRule2d<T>,
    ) -> Self {
        ActionCtx {
            v0: v0.clone(),
            v1: v1.clone(),
            v2: v2.clone(),
            t0: ElementTables::new(v0, quad),
            t1: ElementTables::new(v1, quad),
            t2: ElementTables::new(v2, quad),
            nq: quad.len(),
        }
    }

    /// C1(q, F): dual-V1 vector of the rotated flux, entries
    /// integral of q * (-Fy, Fx) . v_l.
    pub fn apply_c1(&self, q: &Field<T>, f: &Field<T>) -> Result<Field<T>> {
        check_same_mesh(&q.space, &f.space)?;
        let nq = self.nq;
        let mut out = vec![T::zero(); self.v1.ndof];
        let mut qv = vec![T::zero(); nq];
        let mut fx = vec![T::zero(); nq];
        let mut fy = vec![T::zero(); nq];
        for cell in 0..self.v1.mesh.n_cells() {
            self.t0.field_at_q(&self.v0, q, cell, &mut qv);
            self.t1.vector_at_q(&self.v1, f, cell, &mut fx, &mut fy);
            let dofs = self.v1.cell_dofs(cell);
            let signs = self.v1.cell_signs(cell);
            for l in 0..self.v1.nloc {
                let row = &self.t1.val[l * nq..(l + 1) * nq];
                let mut acc = T::zero();
                if self.t1.comp[l] == 0 {
                    for qp in 0..nq {
                        acc += qv[qp] * (-fy[qp]) * row[qp] * self.t1.wdetj[qp];
                    }
                } else {
                    for qp in 0..nq {
                        acc += qv[qp] * fx[qp] * row[qp] * self.t1.wdetj[qp];
                    }
                }
                out[dofs[l] as usize] += acc * T::of(signs[l] as f64);
            }
        }
        Ok(Field::dual(&self.v1, out))
    }

    /// K2(a, b): dual-V2 vector with entries integral of (a . b) phi_l.
    pub fn apply_k2(&self, a: &Field<T>, b: &Field<T>) -> Result<Field<T>> {
        check_same_mesh(&a.space, &b.space)?;
        let nq = self.nq;
        let mut out = vec![T::zero(); self.v2.ndof];
        let mut ax = vec![T::zero(); nq];
        let mut ay = vec![T::zero(); nq];
        let mut bx = vec![T::zero(); nq];
        let mut by = vec![T::zero(); nq];
        for cell in 0..self.v2.mesh.n_cells() {
            self.t1.vector_at_q(&self.v1, a, cell, &mut ax, &mut ay);
            self.t1.vector_at_q(&self.v1, b, cell, &mut bx, &mut by);
            let dofs = self.v2.cell_dofs(cell);
            for l in 0..self.v2.nloc {
                let row = &self.t2.val[l * nq..(l + 1) * nq];
                let mut acc = T::zero();
                for qp in 0..nq {
                    acc += (ax[qp] * bx[qp] + ay[qp] * by[qp]) * row[qp] * self.t2.wdetj[qp];
                }
                out[dofs[l] as usize] += acc;
            }
        }
        Ok(Field::dual(&self.v2, out))
    }

    /// K2^T bound in the first argument: dual-V1 vector with entries
    /// integral of (v_l . g) t, so that pairing with F gives <F . g, t>.
    pub fn apply_k2_transpose(&self, g: &Field<T>, t: &Field<T>) -> Result<Field<T>> {
        check_same_mesh(&g.space, &t.space)?;
        let nq = self.nq;
        let mut out = vec![T::zero(); self.v1.ndof];
        let mut gx = vec![T::zero(); nq];
        let mut gy = vec![T::zero(); nq];
        let mut tv = vec![T::zero(); nq];
        for cell in 0..self.v1.mesh.n_cells() {
            self.t1.vector_at_q(&self.v1, g, cell, &mut gx, &mut gy);
            self.t2.field_at_q(&self.v2, t, cell, &mut tv);
            let dofs = self.v1.cell_dofs(cell);
            let signs = self.v1.cell_signs(cell);
            for l in 0..self.v1.nloc {
                let row = &self.t1.val[l * nq..(l + 1) * nq];
                let gq = if self.t1.comp[l] == 0 { &gx } else { &gy };
                let mut acc = T::zero();
                for qp in 0..nq {
                    acc += gq[qp] * tv[qp] * row[qp] * self.t1.wdetj[qp];
                }
                out[dofs[l] as usize] += acc * T::of(signs[l] as f64);
            }
        }
        Ok(Field::dual(&self.v1, out))
    }

    /// M1*(w) a: dual-V1 action of the w-weighted V1 mass on a V1 field.
    pub fn apply_weighted_mass_v1(&self, w: &Field<T>, a: &Field<T>) -> Result<Field<T>> {
        check_same_mesh(&w.space, &a.space)?;
        let nq = self.nq;
        let mut out = vec![T::zero(); self.v1.ndof];
        let mut wv = vec![T::zero(); nq];
        let mut ax = vec![T::zero(); nq];
        let mut ay = vec![T::zero(); nq];
        for cell in 0..self.v1.mesh.n_cells() {
            self.t2.field_at_q(&self.v2, w, cell, &mut wv);
            self.t1.vector_at_q(&self.v1, a, cell, &mut ax, &mut ay);
            let dofs = self.v1.cell_dofs(cell);
            let signs = self.v1.cell_signs(cell);
            for l in 0..self.v1.nloc {
                let row = &self.t1.val[l * nq..(l + 1) * nq];
                let aq = if self.t1.comp[l] == 0 { &ax } else { &ay };
                let mut acc = T::zero();
                for qp in 0..nq {
                    acc += wv[qp] * aq[qp] * row[qp] * self.t1.wdetj[qp];
                }
                out[dofs[l] as usize] += acc * T::of(signs[l] as f64);
            }
        }
        Ok(Field::dual(&self.v1, out))
    }

    /// M2*(w) a: dual-V2 action of the w-weighted V2 mass on a V2 field.
    pub fn apply_weighted_mass_v2(&self, w: &Field<T>, a: &Field<T>) -> Result<Field<T>> {
        check_same_mesh(&w.space, &a.space)?;
        let nq = self.nq;
        let mut out = vec![T::zero(); self.v2.ndof];
        let mut wv = vec![T::zero(); nq];
        let mut av = vec![T::zero(); nq];
        for cell in 0..self.v2.mesh.n_cells() {
            self.t2.field_at_q(&self.v2, w, cell, &mut wv);
            self.t2.field_at_q(&self.v2, a, cell, &mut av);
            let dofs = self.v2.cell_dofs(cell);
            for l in 0..self.v2.nloc {
                let row = &self.t2.val[l * nq..(l + 1) * nq];
                let mut acc = T::zero();
                for qp in 0..nq {
                    acc += wv[qp] * av[qp] * row[qp] * self.t2.wdetj[qp];
                }
                out[dofs[l] as usize] += acc;
            }
        }
        Ok(Field::dual(&self.v2, out))
    }
}
