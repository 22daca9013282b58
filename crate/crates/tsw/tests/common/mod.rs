//! Dense quadrature-loop oracle: an independent assembly path used to
//! verify every operator and trilinear action entrywise.
//!
//! The oracle shares only the raw data of a `FunctionSpace` (1D node sets,
//! dof numbering, orientation signs) and evaluates everything else from
//! first principles: product-formula Lagrange bases, explicit Piola factors
//! and plain dense loops over an independent Gauss tensor rule.

#![allow(dead_code)]

use std::sync::Arc;

use tsw::fespace::{Field, FunctionSpace, SpaceFamily};
use tsw::linalg::CsrMatrix;
use tsw::mesh::Mesh;
use tsw::quadrature::{gauss_rule, QuadRule2d};

pub fn lagrange(nodes: &[f64], i: usize, x: f64) -> f64 {
    let mut v = 1.0;
    for (j, &xj) in nodes.iter().enumerate() {
        if j != i {
            v *= (x - xj) / (nodes[i] - xj);
        }
    }
    v
}

pub fn lagrange_deriv(nodes: &[f64], i: usize, x: f64) -> f64 {
    let mut sum = 0.0;
    for (m, &xm) in nodes.iter().enumerate() {
        if m == i {
            continue;
        }
        let mut prod = 1.0 / (nodes[i] - xm);
        for (j, &xj) in nodes.iter().enumerate() {
            if j != i && j != m {
                prod *= (x - xj) / (nodes[i] - xj);
            }
        }
        sum += prod;
    }
    sum
}

/// Independent volume rule: Gauss points, one order beyond the default.
pub fn oracle_rule(order: usize) -> QuadRule2d<f64> {
    QuadRule2d::tensor(&gauss_rule(2 * order + 4).unwrap())
}

/// Scalar local basis values by the product formula.
pub fn scalar_basis(space: &FunctionSpace<f64>, xi: (f64, f64)) -> Vec<f64> {
    let nodes = match space.family {
        SpaceFamily::V0 => &space.cont.nodes,
        SpaceFamily::V2 => &space.disc.nodes,
        SpaceFamily::V1 => panic!("scalar basis on V1"),
    };
    let n = nodes.len();
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(lagrange(nodes, i, xi.0) * lagrange(nodes, j, xi.1));
        }
    }
    out
}

/// Physical perp-gradient of the V0 local basis.
pub fn v0_perp_basis(space: &FunctionSpace<f64>, xi: (f64, f64)) -> Vec<(f64, f64)> {
    let nodes = &space.cont.nodes;
    let mesh = &space.mesh;
    let n = nodes.len();
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let dx = lagrange_deriv(nodes, i, xi.0) * lagrange(nodes, j, xi.1) * 2.0 / mesh.dx;
            let dy = lagrange(nodes, i, xi.0) * lagrange_deriv(nodes, j, xi.1) * 2.0 / mesh.dy;
            out.push((-dy, dx));
        }
    }
    out
}

/// V1 local basis (physical vector and divergence) with the outward
/// orientation factor and explicit Piola scalings.
pub fn v1_basis(space: &FunctionSpace<f64>, xi: (f64, f64)) -> Vec<(f64, f64, f64)> {
    let mesh = &space.mesh;
    let cont = &space.cont.nodes;
    let disc = &space.disc.nodes;
    space
        .v1_dofs
        .iter()
        .map(|d| {
            let sg = d.sigma as f64;
            if d.comp == 0 {
                let v = sg * lagrange(cont, d.i, xi.0) * lagrange(disc, d.j, xi.1) * 2.0 / mesh.dy;
                let div = sg
                    * lagrange_deriv(cont, d.i, xi.0)
                    * lagrange(disc, d.j, xi.1)
                    * 4.0
                    / (mesh.dx * mesh.dy);
                (v, 0.0, div)
            } else {
                let v = sg * lagrange(disc, d.i, xi.0) * lagrange(cont, d.j, xi.1) * 2.0 / mesh.dx;
                let div = sg
                    * lagrange(disc, d.i, xi.0)
                    * lagrange_deriv(cont, d.j, xi.1)
                    * 4.0
                    / (mesh.dx * mesh.dy);
                (0.0, v, div)
            }
        })
        .collect()
}

/// Evaluate a scalar field through the oracle basis.
pub fn eval_scalar(f: &Field<f64>, cell: usize, xi: (f64, f64)) -> f64 {
    let vals = scalar_basis(&f.space, xi);
    f.space
        .cell_dofs(cell)
        .iter()
        .zip(&vals)
        .map(|(&g, &v)| f.coeffs[g as usize] * v)
        .sum()
}

/// Evaluate a V1 field through the oracle basis.
pub fn eval_vector(f: &Field<f64>, cell: usize, xi: (f64, f64)) -> (f64, f64) {
    let vals = v1_basis(&f.space, xi);
    let dofs = f.space.cell_dofs(cell);
    let signs = f.space.cell_signs(cell);
    let mut out = (0.0, 0.0);
    for (l, &(vx, vy, _)) in vals.iter().enumerate() {
        let c = f.coeffs[dofs[l] as usize] * signs[l] as f64;
        out.0 += c * vx;
        out.1 += c * vy;
    }
    out
}

pub struct DenseMat {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl DenseMat {
    fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMat {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.ncols + c]
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.ncols + c] += v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute difference against a CSR matrix, checking every
    /// dense entry (absent CSR entries count as zero).
    pub fn max_diff(&self, csr: &CsrMatrix<f64>) -> f64 {
        assert_eq!(self.nrows, csr.nrows);
        assert_eq!(self.ncols, csr.ncols);
        let mut max = 0.0f64;
        for r in 0..self.nrows {
            let mut row = vec![0.0; self.ncols];
            for idx in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                row[csr.col_idx[idx] as usize] = csr.values[idx];
            }
            for c in 0..self.ncols {
                max = max.max((self.at(r, c) - row[c]).abs());
            }
        }
        max
    }
}

fn for_each_point(
    mesh: &Mesh<f64>,
    quad: &QuadRule2d<f64>,
    mut body: impl FnMut(usize, (f64, f64), f64),
) {
    for cell in 0..mesh.n_cells() {
        for (q, &xi) in quad.points.iter().enumerate() {
            body(cell, xi, quad.weights[q] * mesh.det_j);
        }
    }
}

/// Dense Gram matrix (optionally weighted by a V2 field).
pub fn dense_mass(
    space: &Arc<FunctionSpace<f64>>,
    quad: &QuadRule2d<f64>,
    weight: Option<&Field<f64>>,
) -> DenseMat {
    let mut out = DenseMat::zeros(space.ndof, space.ndof);
    for_each_point(&space.mesh, quad, |cell, xi, w| {
        let wq = match weight {
            Some(f) => w * eval_scalar(f, cell, xi),
            None => w,
        };
        let dofs = space.cell_dofs(cell);
        let signs = space.cell_signs(cell);
        match space.family {
            SpaceFamily::V1 => {
                let vals = v1_basis(space, xi);
                for (l1, &(x1, y1, _)) in vals.iter().enumerate() {
                    for (l2, &(x2, y2, _)) in vals.iter().enumerate() {
                        let v = wq * (x1 * x2 + y1 * y2) * (signs[l1] * signs[l2]) as f64;
                        out.add(dofs[l1] as usize, dofs[l2] as usize, v);
                    }
                }
            }
            _ => {
                let vals = scalar_basis(space, xi);
                for (l1, &v1) in vals.iter().enumerate() {
                    for (l2, &v2) in vals.iter().enumerate() {
                        out.add(dofs[l1] as usize, dofs[l2] as usize, wq * v1 * v2);
                    }
                }
            }
        }
    });
    out
}

/// Dense divergence operator: rows V2, columns V1.
pub fn dense_div(
    v1: &Arc<FunctionSpace<f64>>,
    v2: &Arc<FunctionSpace<f64>>,
    quad: &QuadRule2d<f64>,
) -> DenseMat {
    let mut out = DenseMat::zeros(v2.ndof, v1.ndof);
    for_each_point(&v1.mesh, quad, |cell, xi, w| {
        let b1 = v1_basis(v1, xi);
        let b2 = scalar_basis(v2, xi);
        let d1 = v1.cell_dofs(cell);
        let s1 = v1.cell_signs(cell);
        let d2 = v2.cell_dofs(cell);
        for (l2, &phi) in b2.iter().enumerate() {
            for (l1, &(_, _, div)) in b1.iter().enumerate() {
                out.add(
                    d2[l2] as usize,
                    d1[l1] as usize,
                    w * phi * div * s1[l1] as f64,
                );
            }
        }
    });
    out
}

/// Dense perp-curl operator: rows V1, columns V0.
pub fn dense_perp_curl(
    v0: &Arc<FunctionSpace<f64>>,
    v1: &Arc<FunctionSpace<f64>>,
    quad: &QuadRule2d<f64>,
) -> DenseMat {
    let mut out = DenseMat::zeros(v1.ndof, v0.ndof);
    for_each_point(&v0.mesh, quad, |cell, xi, w| {
        let b0 = v0_perp_basis(v0, xi);
        let b1 = v1_basis(v1, xi);
        let d0 = v0.cell_dofs(cell);
        let d1 = v1.cell_dofs(cell);
        let s1 = v1.cell_signs(cell);
        for (l1, &(vx, vy, _)) in b1.iter().enumerate() {
            for (l0, &(px, py)) in b0.iter().enumerate() {
                out.add(
                    d1[l1] as usize,
                    d0[l0] as usize,
                    w * (vx * px + vy * py) * s1[l1] as f64,
                );
            }
        }
    });
    out
}

/// Dense C1(q, F): dual-V1 vector of q (-Fy, Fx) tested against V1.
pub fn dense_c1(q: &Field<f64>, f: &Field<f64>, quad: &QuadRule2d<f64>) -> Vec<f64> {
    let v1 = &f.space;
    let mut out = vec![0.0; v1.ndof];
    for_each_point(&v1.mesh, quad, |cell, xi, w| {
        let qv = eval_scalar(q, cell, xi);
        let (fx, fy) = eval_vector(f, cell, xi);
        let b1 = v1_basis(v1, xi);
        let d1 = v1.cell_dofs(cell);
        let s1 = v1.cell_signs(cell);
        for (l, &(vx, vy, _)) in b1.iter().enumerate() {
            out[d1[l] as usize] += w * qv * (-fy * vx + fx * vy) * s1[l] as f64;
        }
    });
    out
}

/// Dense K2(a, b): dual-V2 vector of (a . b) tested against V2.
pub fn dense_k2(
    a: &Field<f64>,
    b: &Field<f64>,
    v2: &Arc<FunctionSpace<f64>>,
    quad: &QuadRule2d<f64>,
) -> Vec<f64> {
    let mut out = vec![0.0; v2.ndof];
    for_each_point(&v2.mesh, quad, |cell, xi, w| {
        let (ax, ay) = eval_vector(a, cell, xi);
        let (bx, by) = eval_vector(b, cell, xi);
        let b2 = scalar_basis(v2, xi);
        let d2 = v2.cell_dofs(cell);
        for (l, &phi) in b2.iter().enumerate() {
            out[d2[l] as usize] += w * (ax * bx + ay * by) * phi;
        }
    });
    out
}

/// Dense K2 transpose bound in the first argument: dual-V1 vector of
/// (v . g) t.
pub fn dense_k2_transpose(g: &Field<f64>, t: &Field<f64>, quad: &QuadRule2d<f64>) -> Vec<f64> {
    let v1 = &g.space;
    let mut out = vec![0.0; v1.ndof];
    for_each_point(&v1.mesh, quad, |cell, xi, w| {
        let (gx, gy) = eval_vector(g, cell, xi);
        let tv = eval_scalar(t, cell, xi);
        let b1 = v1_basis(v1, xi);
        let d1 = v1.cell_dofs(cell);
        let s1 = v1.cell_signs(cell);
        for (l, &(vx, vy, _)) in b1.iter().enumerate() {
            out[d1[l] as usize] += w * tv * (gx * vx + gy * vy) * s1[l] as f64;
        }
    });
    out
}

/// Dense M1*(w) a: dual-V1 vector of w a tested against V1.
pub fn dense_m1star(w: &Field<f64>, a: &Field<f64>, quad: &QuadRule2d<f64>) -> Vec<f64> {
    let v1 = &a.space;
    let mut out = vec![0.0; v1.ndof];
    for_each_point(&v1.mesh, quad, |cell, xi, wq| {
        let wv = eval_scalar(w, cell, xi);
        let (ax, ay) = eval_vector(a, cell, xi);
        let b1 = v1_basis(v1, xi);
        let d1 = v1.cell_dofs(cell);
        let s1 = v1.cell_signs(cell);
        for (l, &(vx, vy, _)) in b1.iter().enumerate() {
            out[d1[l] as usize] += wq * wv * (ax * vx + ay * vy) * s1[l] as f64;
        }
    });
    out
}

/// Dense M2*(w) a: dual-V2 vector of w a tested against V2.
pub fn dense_m2star(w: &Field<f64>, a: &Field<f64>, quad: &QuadRule2d<f64>) -> Vec<f64> {
    let v2 = &a.space;
    let mut out = vec![0.0; v2.ndof];
    for_each_point(&v2.mesh, quad, |cell, xi, wq| {
        let wv = eval_scalar(w, cell, xi);
        let av = eval_scalar(a, cell, xi);
        let b2 = scalar_basis(v2, xi);
        let d2 = v2.cell_dofs(cell);
        for (l, &phi) in b2.iter().enumerate() {
            out[d2[l] as usize] += wq * wv * av * phi;
        }
    });
    out
}

pub fn max_vec_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
}

/// Deterministic pseudo-random field with O(1) coefficients.
pub fn pseudo_field(space: &Arc<FunctionSpace<f64>>, seed: u64) -> Field<f64> {
    let mut f = Field::zeros(space);
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    for c in f.coeffs.iter_mut() {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *c = ((state >> 11) as f64) / (1u64 << 53) as f64 * 2.0 - 1.0;
    }
    f
}
