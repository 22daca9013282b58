//! Doubly-periodic structured quadrilateral meshes with affine cells.
//!
//! Cells are axis-aligned and uniform, so the Jacobian of the map from the
//! reference square [-1, 1]^2 is the same constant diagonal matrix on every
//! cell. This is what makes exact integration (and with it the discrete
//! conservation identities) possible.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct Mesh<T> {
    pub nx: usize,
    pub ny: usize,
    pub lx: T,
    pub ly: T,
    /// Cell widths.
    pub dx: T,
    pub dy: T,
    /// Diagonal Jacobian entries (dx/2, dy/2) of the reference map.
    pub jac: (T, T),
    pub det_j: T,
    /// Cell-to-vertex map, 4 vertices per cell, counter-clockwise from the
    /// lower left, with periodic wraparound.
    pub cell_vertices: Vec<[usize; 4]>,
}

/// Build a doubly periodic nx-by-ny mesh covering [0, lx] x [0, ly].
pub fn build_periodic_quad_mesh<T: Real>(nx: usize, ny: usize, lx: T, ly: T) -> Result<Mesh<T>> {
    if nx < 1 || ny < 1 {
        return Err(Error::invalid("mesh requires nx >= 1 and ny >= 1"));
    }
    if lx <= T::zero() || ly <= T::zero() {
        return Err(Error::invalid("mesh requires positive extents"));
    }
    let dx = lx / T::of_usize(nx);
    let dy = ly / T::of_usize(ny);
    let half = T::of(0.5);
    let jac = (half * dx, half * dy);
    let det_j = jac.0 * jac.1;

    let vid = |i: usize, j: usize| (i % nx) + (j % ny) * nx;
    let mut cell_vertices = Vec::with_capacity(nx * ny);
    for cy in 0..ny {
        for cx in 0..nx {
            cell_vertices.push([
                vid(cx, cy),
                vid(cx + 1, cy),
                vid(cx + 1, cy + 1),
                vid(cx, cy + 1),
            ]);
        }
    }
    Ok(Mesh {
        nx,
        ny,
        lx,
        ly,
        dx,
        dy,
        jac,
        det_j,
        cell_vertices,
    })
}

impl<T: Real> Mesh<T> {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_index(&self, cx: usize, cy: usize) -> usize {
        (cx % self.nx) + (cy % self.ny) * self.nx
    }

    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    /// Periodic neighbor in -x, +x, -y, +y order.
    pub fn neighbors(&self, cell: usize) -> [usize; 4] {
        let (cx, cy) = self.cell_coords(cell);
        [
            self.cell_index(cx + self.nx - 1, cy),
            self.cell_index(cx + 1, cy),
            self.cell_index(cx, cy + self.ny - 1),
            self.cell_index(cx, cy + 1),
        ]
    }

    fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.n_cells() {
            return Err(Error::invalid(format!(
                "cell index {cell} out of range ({} cells)",
                self.n_cells()
            )));
        }
        Ok(())
    }

    /// Affine map from reference coordinates to physical coordinates.
    pub fn map_to_physical(&self, cell: usize, xi: (T, T)) -> Result<(T, T)> {
        self.check_cell(cell)?;
        let (cx, cy) = self.cell_coords(cell);
        let half = T::of(0.5);
        let xc = (T::of_usize(cx) + half) * self.dx;
        let yc = (T::of_usize(cy) + half) * self.dy;
        Ok((xc + self.jac.0 * xi.0, yc + self.jac.1 * xi.1))
    }

    /// Inverse of `map_to_physical` on the owning cell.
    pub fn map_to_reference(&self, cell: usize, x: (T, T)) -> Result<(T, T)> {
        self.check_cell(cell)?;
        let (cx, cy) = self.cell_coords(cell);
        let half = T::of(0.5);
        let xc = (T::of_usize(cx) + half) * self.dx;
        let yc = (T::of_usize(cy) + half) * self.dy;
        Ok(((x.0 - xc) / self.jac.0, (x.1 - yc) / self.jac.1))
    }

    pub fn total_area(&self) -> T {
        self.det_j * T::of(4.0) * T::of_usize(self.n_cells())
    }
}
