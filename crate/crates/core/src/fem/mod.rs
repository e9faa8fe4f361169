//! Finite-element scaffolding: reference elements, quadrature, dof maps,
//! sparse assembly and direct solves.

mod basis;
mod quadrature;
mod space;
mod sparse;

pub use basis::{p1_basis, p2_basis};
pub use quadrature::{quadrature, QuadPoint, DEFAULT_DEGREE};
pub use space::{P2Nodes, Spaces};
pub use sparse::{apply_dirichlet, solve_linear, CooMatrix, CsrMatrix, SparseSystem};

use crate::error::Result;
use crate::mesh::TriangleMesh;

/// Affine geometry of one triangle: Jacobian determinant and the inverse
/// transposed Jacobian used to push reference gradients forward.
#[derive(Debug, Clone, Copy)]
pub struct CellGeom {
    pub verts: [[f64; 2]; 3],
    pub det_j: f64,
    inv_jt: [[f64; 2]; 2],
}

impl CellGeom {
    pub fn new(mesh: &TriangleMesh, cell: usize) -> CellGeom {
        let [a, b, c] = mesh.cell(cell);
        let pa = mesh.vertex(a);
        let pb = mesh.vertex(b);
        let pc = mesh.vertex(c);
        let j = [[pb[0] - pa[0], pc[0] - pa[0]], [pb[1] - pa[1], pc[1] - pa[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv_jt = [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ];
        CellGeom { verts: [pa, pb, pc], det_j: det, inv_jt }
    }

    /// Physical gradient of a basis function from its reference gradient.
    pub fn phys_grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_jt[0][0] * g[0] + self.inv_jt[0][1] * g[1],
            self.inv_jt[1][0] * g[0] + self.inv_jt[1][1] * g[1],
        ]
    }

    /// Maps a reference point to physical coordinates.
    pub fn map(&self, xy: [f64; 2]) -> [f64; 2] {
        let l0 = 1.0 - xy[0] - xy[1];
        [
            l0 * self.verts[0][0] + xy[0] * self.verts[1][0] + xy[1] * self.verts[2][0],
            l0 * self.verts[0][1] + xy[0] * self.verts[1][1] + xy[1] * self.verts[2][1],
        ]
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det_j
    }
}

/// Generic scatter-add element loop for P1 scalar bilinear forms.
///
/// The kernel receives the cell index, quadrature point data (physical
/// point, P1 values, physical gradients) and fills the local 3x3 block,
/// which is accumulated with weight `w * det_j` into the global matrix.
pub fn assemble_p1<K>(mesh: &TriangleMesh, degree: usize, mut kernel: K) -> Result<CooMatrix>
where
    K: FnMut(usize, [f64; 2], &[f64; 3], &[[f64; 2]; 3], &mut [[f64; 3]; 3]),
{
    let rule = quadrature(degree)?;
    let mut coo = CooMatrix::with_capacity(
        mesh.num_vertices(),
        mesh.num_vertices(),
        9 * mesh.num_cells(),
    );
    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let nodes = mesh.cell(cell);
        for q in rule {
            let (vals, ref_grads) = p1_basis(q.xy);
            let grads = [
                geom.phys_grad(ref_grads[0]),
                geom.phys_grad(ref_grads[1]),
                geom.phys_grad(ref_grads[2]),
            ];
            let mut local = [[0.0; 3]; 3];
            kernel(cell, geom.map(q.xy), &vals, &grads, &mut local);
            let scale = q.w * geom.det_j;
            for (i, row) in local.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    if *v != 0.0 {
                        coo.push(nodes[i], nodes[j], v * scale);
                    }
                }
            }
        }
    }
    Ok(coo)
}

/// P1 mass matrix.
pub fn p1_mass_matrix(mesh: &TriangleMesh) -> Result<CooMatrix> {
    assemble_p1(mesh, 2, |_, _, vals, _, local| {
        for i in 0..3 {
            for j in 0..3 {
                local[i][j] = vals[i] * vals[j];
            }
        }
    })
}

/// P1 stiffness matrix with a spatially varying coefficient.
pub fn p1_stiffness_matrix<F>(mesh: &TriangleMesh, coeff: F) -> Result<CooMatrix>
where
    F: Fn([f64; 2]) -> f64,
{
    assemble_p1(mesh, 2, |_, x, _, grads, local| {
        let c = coeff(x);
        for i in 0..3 {
            for j in 0..3 {
                local[i][j] = c * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
            }
        }
    })
}
