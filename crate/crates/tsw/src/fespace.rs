//! Compatible function spaces on the periodic quad mesh.
//!
//! The three spaces form the 2D discrete de Rham complex
//!
//! ```text
//!   V0 --(perp grad)--> V1 --(div)--> V2
//! ```
//!
//! realized as nodal tensor products on Gauss-Lobatto-Legendre points:
//!
//! * `V0`: continuous Lagrange of degree k+1 per direction,
//! * `V1`: H(div) with degree (k+1, k) x-components and (k, k+1)
//!   y-components, mapped by the contravariant Piola transform,
//! * `V2`: fully discontinuous degree k.
//!
//! Orientation convention for `V1`: the global degree of freedom on a shared
//! face carries the +x (or +y) normal. Local basis functions point outward
//! at faces, so the cell on the negative side of a face sees its local
//! function with sign -1 in the cell-to-global map. Every shared dof appears
//! exactly once with each sign.

use std::sync::Arc;

use crate::assembly;
use crate::error::{Error, Result};
use crate::linalg::{self, SolverConfig};
use crate::mesh::Mesh;
use crate::quadrature::{gll_rule, QuadRule2d};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceFamily {
    V0,
    V1,
    V2,
}

/// 1D nodal Lagrange basis on a fixed set of points.
#[derive(Debug, Clone)]
pub struct Basis1d<T> {
    pub nodes: Vec<T>,
    /// Barycentric-style denominators prod_{j != i} (x_i - x_j).
    denom: Vec<T>,
}

impl<T: Real> Basis1d<T> {
    pub fn new(nodes: Vec<T>) -> Self {
        let denom = (0..nodes.len())
            .map(|i| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &xj)| nodes[i] - xj)
                    .fold(T::one(), |acc, d| acc * d)
            })
            .collect();
        Basis1d { nodes, denom }
    }

    /// Continuous basis for degree p >= 1: Lagrange on the p+1 GLL points.
    pub fn gll(degree: usize) -> Result<Self> {
        let rule = gll_rule::<T>(degree + 1)?;
        Ok(Self::new(rule.points))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of basis function i at x.
    pub fn value(&self, i: usize, x: T) -> T {
        let mut num = T::one();
        for (j, &xj) in self.nodes.iter().enumerate() {
            if j != i {
                num = num * (x - xj);
            }
        }
        num / self.denom[i]
    }

    /// Derivative of basis function i at x.
    pub fn deriv(&self, i: usize, x: T) -> T {
        let n = self.nodes.len();
        let mut sum = T::zero();
        for m in 0..n {
            if m == i {
                continue;
            }
            let mut prod = T::one();
            for (j, &xj) in self.nodes.iter().enumerate() {
                if j != i && j != m {
                    prod = prod * (x - xj);
                }
            }
            sum += prod;
        }
        sum / self.denom[i]
    }

    pub fn values(&self, x: T) -> Vec<T> {
        (0..self.len()).map(|i| self.value(i, x)).collect()
    }

    pub fn derivs(&self, x: T) -> Vec<T> {
        (0..self.len()).map(|i| self.deriv(i, x)).collect()
    }
}

/// Local degree-of-freedom descriptor for V1.
#[derive(Debug, Clone, Copy)]
pub struct V1LocalDof {
    /// 0 for the x-normal family, 1 for the y-normal family.
    pub comp: u8,
    pub i: usize,
    pub j: usize,
    /// Outward orientation factor of the local reference basis (-1 on the
    /// face whose outward normal is -x resp. -y).
    pub sigma: i8,
}

#[derive(Debug)]
pub struct FunctionSpace<T> {
    pub family: SpaceFamily,
    pub order: usize,
    pub mesh: Arc<Mesh<T>>,
    pub ndof: usize,
    pub nloc: usize,
    /// Cell-to-global map, `nloc` entries per cell.
    dofs: Vec<u32>,
    /// Orientation signs of the map (all +1 for V0/V2).
    signs: Vec<i8>,
    /// Continuous 1D basis (degree k+1) on k+2 GLL nodes.
    pub cont: Basis1d<T>,
    /// Discontinuous 1D basis (degree k) on k+1 GLL nodes.
    pub disc: Basis1d<T>,
    /// V1 local dof table (empty for scalar spaces).
    pub v1_dofs: Vec<V1LocalDof>,
}

pub fn build_space<T: Real>(
    mesh: Arc<Mesh<T>>,
    family: SpaceFamily,
    order: usize,
) -> Result<Arc<FunctionSpace<T>>> {
    if order > 4 {
        return Err(Error::invalid(format!(
            "order {order} unsupported (supported range 0..=4)"
        )));
    }
    let k = order;
    let cont = Basis1d::<T>::gll(k + 1)?;
    let disc = if k == 0 {
        Basis1d::new(vec![T::zero()])
    } else {
        Basis1d::<T>::gll(k)?
    };
    let (nx, ny) = (mesh.nx, mesh.ny);
    let klines_x = nx * (k + 1);
    let klines_y = ny * (k + 1);

    let mut dofs = Vec::new();
    let mut signs = Vec::new();
    let mut v1_dofs = Vec::new();
    let nloc;
    let ndof;

    match family {
        SpaceFamily::V0 => {
            nloc = (k + 2) * (k + 2);
            ndof = klines_x * klines_y;
            for cy in 0..ny {
                for cx in 0..nx {
                    for j in 0..k + 2 {
                        for i in 0..k + 2 {
                            let gx = (cx * (k + 1) + i) % klines_x;
                            let gy = (cy * (k + 1) + j) % klines_y;
                            dofs.push((gx + gy * klines_x) as u32);
                            signs.push(1);
                        }
                    }
                }
            }
        }
        SpaceFamily::V2 => {
            nloc = (k + 1) * (k + 1);
            ndof = nx * ny * nloc;
            // Grid-major numbering (x position fastest), matching the
            // tensor-product structure of the mass matrix.
            for cy in 0..ny {
                for cx in 0..nx {
                    for j in 0..k + 1 {
                        for i in 0..k + 1 {
                            let gx = cx * (k + 1) + i;
                            let gy = cy * (k + 1) + j;
                            dofs.push((gx + gy * klines_x) as u32);
                            signs.push(1);
                        }
                    }
                }
            }
        }
        SpaceFamily::V1 => {
            let per_family = klines_x * klines_y;
            nloc = 2 * (k + 2) * (k + 1);
            ndof = 2 * per_family;
            for j in 0..k + 1 {
                for i in 0..k + 2 {
                    v1_dofs.push(V1LocalDof {
                        comp: 0,
                        i,
                        j,
                        sigma: if i == 0 { -1 } else { 1 },
                    });
                }
            }
            for j in 0..k + 2 {
                for i in 0..k + 1 {
                    v1_dofs.push(V1LocalDof {
                        comp: 1,
                        i,
                        j,
                        sigma: if j == 0 { -1 } else { 1 },
                    });
                }
            }
            for cy in 0..ny {
                for cx in 0..nx {
                    for d in &v1_dofs {
                        let (g, s);
                        if d.comp == 0 {
                            let gx = (cx * (k + 1) + d.i) % klines_x;
                            let gy = cy * (k + 1) + d.j;
                            g = gx + gy * klines_x;
                            s = if d.i == 0 { -1 } else { 1 };
                        } else {
                            let gx = cx * (k + 1) + d.i;
                            let gy = (cy * (k + 1) + d.j) % klines_y;
                            g = per_family + gx + gy * klines_x;
                            s = if d.j == 0 { -1 } else { 1 };
                        }
                        dofs.push(g as u32);
                        signs.push(s);
                    }
                }
            }
        }
    }

    Ok(Arc::new(FunctionSpace {
        family,
        order,
        mesh,
        ndof,
        nloc,
        dofs,
        signs,
        cont,
        disc,
        v1_dofs,
    }))
}

impl<T: Real> FunctionSpace<T> {
    pub fn cell_dofs(&self, cell: usize) -> &[u32] {
        &self.dofs[cell * self.nloc..(cell + 1) * self.nloc]
    }

    pub fn cell_signs(&self, cell: usize) -> &[i8] {
        &self.signs[cell * self.nloc..(cell + 1) * self.nloc]
    }

    pub fn same_as(&self, other: &FunctionSpace<T>) -> bool {
        self.family == other.family
            && self.order == other.order
            && self.mesh.nx == other.mesh.nx
            && self.mesh.ny == other.mesh.ny
    }

    pub fn compatible_mesh(&self, other: &FunctionSpace<T>) -> bool {
        self.order == other.order
            && self.mesh.nx == other.mesh.nx
            && self.mesh.ny == other.mesh.ny
            && self.mesh.lx == other.mesh.lx
            && self.mesh.ly == other.mesh.ly
    }

    fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.mesh.n_cells() {
            return Err(Error::invalid(format!("cell index {cell} out of range")));
        }
        Ok(())
    }

    /// Values of the local scalar basis (V0 or V2) at a reference point.
    pub fn scalar_values(&self, xi: (T, T)) -> Vec<T> {
        match self.family {
            SpaceFamily::V0 => {
                let bx = self.cont.values(xi.0);
                let by = self.cont.values(xi.1);
                let n = self.cont.len();
                let mut out = Vec::with_capacity(n * n);
                for j in 0..n {
                    for i in 0..n {
                        out.push(bx[i] * by[j]);
                    }
                }
                out
            }
            SpaceFamily::V2 => {
                let bx = self.disc.values(xi.0);
                let by = self.disc.values(xi.1);
                let n = self.disc.len();
                let mut out = Vec::with_capacity(n * n);
                for j in 0..n {
                    for i in 0..n {
                        out.push(bx[i] * by[j]);
                    }
                }
                out
            }
            SpaceFamily::V1 => panic!("scalar_values on V1"),
        }
    }

    /// Physical perp-gradient (-d/dy, d/dx) of each V0 local basis function.
    pub fn v0_perp(&self, xi: (T, T)) -> Vec<(T, T)> {
        assert_eq!(self.family, SpaceFamily::V0);
        let bx = self.cont.values(xi.0);
        let by = self.cont.values(xi.1);
        let dbx = self.cont.derivs(xi.0);
        let dby = self.cont.derivs(xi.1);
        let (jx, jy) = self.mesh.jac;
        let n = self.cont.len();
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let gx = dbx[i] * by[j] / jx;
                let gy = bx[i] * dby[j] / jy;
                out.push((-gy, gx));
            }
        }
        out
    }

    /// Physical values (vx, vy) and divergence of each V1 local basis
    /// function at a reference point, in the outward orientation convention.
    pub fn v1_values(&self, xi: (T, T)) -> Vec<(T, T, T)> {
        assert_eq!(self.family, SpaceFamily::V1);
        let lc_x = self.cont.values(xi.0);
        let lc_y = self.cont.values(xi.1);
        let dc_x = self.cont.derivs(xi.0);
        let dc_y = self.cont.derivs(xi.1);
        let ld_x = self.disc.values(xi.0);
        let ld_y = self.disc.values(xi.1);
        let det_j = self.mesh.det_j;
        let (jx, jy) = self.mesh.jac;
        self.v1_dofs
            .iter()
            .map(|d| {
                let sg = T::of(d.sigma as f64);
                if d.comp == 0 {
                    // Piola: (dx/2) / det_j = 1/jy
                    let v = sg * lc_x[d.i] * ld_y[d.j] / jy;
                    let div = sg * dc_x[d.i] * ld_y[d.j] / det_j;
                    (v, T::zero(), div)
                } else {
                    let v = sg * ld_x[d.i] * lc_y[d.j] / jx;
                    let div = sg * ld_x[d.i] * dc_y[d.j] / det_j;
                    (T::zero(), v, div)
                }
            })
            .collect()
    }
}

/// Result of evaluating all cell-local basis functions at one point.
#[derive(Debug, Clone)]
pub enum BasisEval<T> {
    /// V0: values and physical perp-gradients.
    Scalar { values: Vec<T>, perp: Vec<(T, T)> },
    /// V1: physical vector values and divergences.
    Vector { values: Vec<(T, T)>, div: Vec<T> },
    /// V2: values only.
    Density { values: Vec<T> },
}

pub fn eval_basis<T: Real>(
    space: &FunctionSpace<T>,
    cell: usize,
    xi: (T, T),
) -> Result<BasisEval<T>> {
    space.check_cell(cell)?;
    Ok(match space.family {
        SpaceFamily::V0 => BasisEval::Scalar {
            values: space.scalar_values(xi),
            perp: space.v0_perp(xi),
        },
        SpaceFamily::V2 => BasisEval::Density {
            values: space.scalar_values(xi),
        },
        SpaceFamily::V1 => {
            let v = space.v1_values(xi);
            BasisEval::Vector {
                values: v.iter().map(|&(x, y, _)| (x, y)).collect(),
                div: v.iter().map(|&(_, _, d)| d).collect(),
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Primal,
    Dual,
}

/// Coefficient vector bound to a function space.
#[derive(Debug, Clone)]
pub struct Field<T> {
    pub space: Arc<FunctionSpace<T>>,
    pub kind: FieldKind,
    pub coeffs: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(space: &Arc<FunctionSpace<T>>) -> Self {
        Field {
            space: space.clone(),
            kind: FieldKind::Primal,
            coeffs: vec![T::zero(); space.ndof],
        }
    }

    pub fn dual(space: &Arc<FunctionSpace<T>>, coeffs: Vec<T>) -> Self {
        assert_eq!(coeffs.len(), space.ndof);
        Field {
            space: space.clone(),
            kind: FieldKind::Dual,
            coeffs,
        }
    }

    pub fn from_coeffs(space: &Arc<FunctionSpace<T>>, coeffs: Vec<T>) -> Self {
        assert_eq!(coeffs.len(), space.ndof);
        Field {
            space: space.clone(),
            kind: FieldKind::Primal,
            coeffs,
        }
    }

    /// Constant scalar field (nodal bases reproduce constants exactly).
    pub fn constant(space: &Arc<FunctionSpace<T>>, value: T) -> Self {
        assert_ne!(space.family, SpaceFamily::V1);
        Field {
            space: space.clone(),
            kind: FieldKind::Primal,
            coeffs: vec![value; space.ndof],
        }
    }

    pub fn scale(&mut self, a: T) {
        for c in &mut self.coeffs {
            *c *= a;
        }
    }

    pub fn axpy(&mut self, a: T, other: &Field<T>) {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        for (c, &o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += a * o;
        }
    }

    /// Evaluate a scalar field (V0/V2) at a reference point of a cell.
    pub fn eval_scalar(&self, cell: usize, xi: (T, T)) -> T {
        debug_assert_eq!(self.kind, FieldKind::Primal);
        let vals = self.space.scalar_values(xi);
        let dofs = self.space.cell_dofs(cell);
        vals.iter()
            .zip(dofs)
            .map(|(&v, &g)| v * self.coeffs[g as usize])
            .sum()
    }

    /// Evaluate a V1 field at a reference point of a cell.
    pub fn eval_vector(&self, cell: usize, xi: (T, T)) -> (T, T) {
        debug_assert_eq!(self.kind, FieldKind::Primal);
        let vals = self.space.v1_values(xi);
        let dofs = self.space.cell_dofs(cell);
        let signs = self.space.cell_signs(cell);
        let mut out = (T::zero(), T::zero());
        for (l, &(vx, vy, _)) in vals.iter().enumerate() {
            let c = self.coeffs[dofs[l] as usize] * T::of(signs[l] as f64);
            out.0 += c * vx;
            out.1 += c * vy;
        }
        out
    }

    /// Evaluate the (strong) divergence of a V1 field.
    pub fn eval_div(&self, cell: usize, xi: (T, T)) -> T {
        let vals = self.space.v1_values(xi);
        let dofs = self.space.cell_dofs(cell);
        let signs = self.space.cell_signs(cell);
        vals.iter()
            .enumerate()
            .map(|(l, &(_, _, d))| d * self.coeffs[dofs[l] as usize] * T::of(signs[l] as f64))
            .sum()
    }

    /// Evaluate a scalar field at a physical point (locates the cell).
    pub fn eval_scalar_at(&self, x: (T, T)) -> T {
        let (cell, xi) = locate(&self.space.mesh, x);
        self.eval_scalar(cell, xi)
    }

    pub fn eval_vector_at(&self, x: (T, T)) -> (T, T) {
        let (cell, xi) = locate(&self.space.mesh, x);
        self.eval_vector(cell, xi)
    }
}

/// Locate the owning cell and reference coordinates of a physical point.
pub fn locate<T: Real>(mesh: &Mesh<T>, x: (T, T)) -> (usize, (T, T)) {
    let wrap = |v: T, l: T| {
        let mut w = v % l;
        if w < T::zero() {
            w += l;
        }
        w
    };
    let px = wrap(x.0, mesh.lx);
    let py = wrap(x.1, mesh.ly);
    let cx = ((px / mesh.dx).to_usize().unwrap_or(0)).min(mesh.nx - 1);
    let cy = ((py / mesh.dy).to_usize().unwrap_or(0)).min(mesh.ny - 1);
    let cell = mesh.cell_index(cx, cy);
    let xi = (
        (px - T::of_usize(cx) * mesh.dx) / mesh.jac.0 - T::one(),
        (py - T::of_usize(cy) * mesh.dy) / mesh.jac.1 - T::one(),
    );
    (cell, xi)
}

/// L2-project a scalar function into V0 or V2.
pub fn project_scalar<T: Real>(
    space: &Arc<FunctionSpace<T>>,
    quad: &QuadRule2d<T>,
    cfg: &SolverConfig<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Field<T>> {
    if space.family == SpaceFamily::V1 {
        return Err(Error::invalid("project_scalar requires a scalar space"));
    }
    let mesh = &space.mesh;
    let mut rhs = vec![T::zero(); space.ndof];
    for cell in 0..mesh.n_cells() {
        let dofs = space.cell_dofs(cell);
        for (q, &(xi, eta)) in quad.points.iter().enumerate() {
            let x = mesh.map_to_physical(cell, (xi, eta))?;
            let fx = f(x.0, x.1) * quad.weights[q] * mesh.det_j;
            let vals = space.scalar_values((xi, eta));
            for (l, &v) in vals.iter().enumerate() {
                rhs[dofs[l] as usize] += fx * v;
            }
        }
    }
    let mass = assembly::assemble_mass(space, quad);
    let coeffs = linalg::solve_spd(&mass, &rhs, cfg)?;
    Ok(Field::from_coeffs(space, coeffs))
}

/// L2-project a vector function into V1.
pub fn project_vector<T: Real>(
    space: &Arc<FunctionSpace<T>>,
    quad: &QuadRule2d<T>,
    cfg: &SolverConfig<T>,
    f: impl Fn(T, T) -> (T, T),
) -> Result<Field<T>> {
    if space.family != SpaceFamily::V1 {
        return Err(Error::invalid("project_vector requires V1"));
    }
    let mesh = &space.mesh;
    let mut rhs = vec![T::zero(); space.ndof];
    for cell in 0..mesh.n_cells() {
        let dofs = space.cell_dofs(cell);
        let signs = space.cell_signs(cell);
        for (q, &(xi, eta)) in quad.points.iter().enumerate() {
            let x = mesh.map_to_physical(cell, (xi, eta))?;
            let (fx, fy) = f(x.0, x.1);
            let w = quad.weights[q] * mesh.det_j;
            let vals = space.v1_values((xi, eta));
            for (l, &(vx, vy, _)) in vals.iter().enumerate() {
                rhs[dofs[l] as usize] +=
                    w * (fx * vx + fy * vy) * T::of(signs[l] as f64);
            }
        }
    }
    let mass = assembly::assemble_mass(space, quad);
    let coeffs = linalg::solve_spd(&mass, &rhs, cfg)?;
    Ok(Field::from_coeffs(space, coeffs))
}
