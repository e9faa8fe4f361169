//! Volume-form shape derivative of the augmented Lagrangian over nodal
//! deformation fields.
//!
//! The functional is assembled as a covector over the P1 vector deformation
//! space: one volume integral over all cells (state/adjoint transport
//! terms, the yield-quotient terms and the divergence bulk term) plus three
//! boundary integrals over the shape polyline for the volume, barycenter
//! and perimeter constraints. Restriction to the admissible deformation
//! space happens later, in the deformation solve; entries at outer-boundary
//! dofs are kept here so the raw functional can be probed directly.

use crate::bingham::{
    assemble_residual, d_coefficient, max_op, MaxKind, MixedField, PhysicsParams,
};
use crate::error::{Error, Result};
use crate::fem::{p1_basis, p2_basis, quadrature, CellGeom, Spaces, DEFAULT_DEGREE};
use crate::mesh::TriangleMesh;
use crate::optimizer::AugLagState;
use crate::tensor::{self, Mat2};

/// Covector of the approximate Eulerian derivative over deformation dofs
/// (`2 * vertex + component`), with the geometric coefficients kept for
/// diagnostics.
#[derive(Debug, Clone)]
pub struct ShapeDerivative {
    pub values: Vec<f64>,
    pub volume_coef: f64,
    pub barycenter_coef: [f64; 2],
    pub perimeter_coef: f64,
}

impl ShapeDerivative {
    /// Directional value for a nodal deformation field.
    pub fn apply(&self, w: &[[f64; 2]]) -> f64 {
        debug_assert_eq!(2 * w.len(), self.values.len());
        w.iter()
            .enumerate()
            .map(|(v, d)| self.values[2 * v] * d[0] + self.values[2 * v + 1] * d[1])
            .sum()
    }
}

/// Direction-linear replacement of the nonlinear transport term, exact max:
/// zero off the active set, `g eps (eps : (grad_y grad_v + (grad_y grad_v)^T)) / (2 ||eps||^3)`
/// on it.
pub fn q_tilde_kernel(eps_y: Mat2, grad_y: Mat2, grad_v: Mat2, p: &PhysicsParams) -> Mat2 {
    let norm_eps = tensor::norm(eps_y);
    if norm_eps == 0.0 {
        return tensor::ZERO;
    }
    let coef = d_coefficient(p.gamma * norm_eps, norm_eps, MaxKind::Unregularized, p);
    if coef == 0.0 {
        return tensor::ZERO;
    }
    let m = tensor::matmul(grad_y, grad_v);
    let pair = tensor::add(m, tensor::transpose(m));
    tensor::scale(eps_y, 0.5 * coef * tensor::ddot(eps_y, pair))
}

/// Smoothed-max version of [`q_tilde_kernel`] with the quadratic-band branch.
pub fn q_delta_kernel(eps_y: Mat2, grad_y: Mat2, grad_v: Mat2, p: &PhysicsParams) -> Mat2 {
    let norm_eps = tensor::norm(eps_y);
    if norm_eps == 0.0 {
        return tensor::ZERO;
    }
    let coef = d_coefficient(p.gamma * norm_eps, norm_eps, MaxKind::Regularized, p);
    if coef == 0.0 {
        return tensor::ZERO;
    }
    let m = tensor::matmul(grad_y, grad_v);
    let pair = tensor::add(m, tensor::transpose(m));
    tensor::scale(eps_y, 0.5 * coef * tensor::ddot(eps_y, pair))
}

/// The three geometric boundary integrals of the augmented Lagrangian
/// derivative, assembled over the shape polyline with two-point Gauss
/// quadrature per edge and piecewise-constant edge normals.
pub fn geometric_derivative_terms(
    mesh: &TriangleMesh,
    auglag: &AugLagState,
) -> Result<ShapeDerivative> {
    let shape = mesh.shape_required()?;
    let vol = mesh.volume(shape)?;
    let bary = mesh.barycenter(shape)?;
    let c = mesh.constraint_vector(shape, &auglag.targets)?;

    let cv = auglag.lambda[0] - auglag.nu() * c[0];
    let cb = [
        (auglag.nu() * c[1] - auglag.lambda[1]) / vol,
        (auglag.nu() * c[2] - auglag.lambda[2]) / vol,
    ];
    let cp = auglag.lambda[3] - auglag.nu() * c[3];

    let mut values = vec![0.0; 2 * mesh.num_vertices()];
    let gauss = [0.5 * (1.0 - 1.0 / 3.0f64.sqrt()), 0.5 * (1.0 + 1.0 / 3.0f64.sqrt())];

    for i in 0..shape.num_edges() {
        let [va, vb] = shape.edge(i);
        let (n, len) = mesh.shape_edge_normal(shape, i);
        let pa = mesh.vertex(va);
        let pb = mesh.vertex(vb);

        // Volume and barycenter terms: W enters by value, interpolated
        // linearly along the edge.
        for s in gauss {
            let w_gauss = 0.5 * len;
            let x = [(1.0 - s) * pa[0] + s * pb[0], (1.0 - s) * pa[1] + s * pb[1]];
            let k_bary = cb[0] * (bary[0] - x[0]) + cb[1] * (bary[1] - x[1]);
            for (vertex, basis) in [(va, 1.0 - s), (vb, s)] {
                for comp in 0..2 {
                    values[2 * vertex + comp] += w_gauss * (cv + k_bary) * basis * n[comp];
                }
            }
        }

        // Perimeter term: n^T grad(W) n - div(W), with grad(W) taken from
        // the adjacent cell (constant per cell for P1 deformations).
        let facet = &mesh.boundary_facets()[shape.edge_facet(i)];
        let cell = facet.cell;
        let geom = CellGeom::new(mesh, cell);
        let (_, ref_grads) = p1_basis([1.0 / 3.0, 1.0 / 3.0]);
        let verts = mesh.cell(cell);
        for (k, &vertex) in verts.iter().enumerate() {
            let g = geom.phys_grad(ref_grads[k]);
            let gn = tensor::dot(g, n);
            for comp in 0..2 {
                let integrand = n[comp] * gn - g[comp];
                values[2 * vertex + comp] += cp * len * integrand;
            }
        }
    }

    Ok(ShapeDerivative { values, volume_coef: cv, barycenter_coef: cb, perimeter_coef: cp })
}

/// Assembles the approximate Eulerian derivative of the augmented
/// Lagrangian: the transported weak-form volume terms (using the converged
/// state and the matching adjoint) plus the geometric boundary terms.
#[allow(clippy::too_many_arguments)]
pub fn assemble_shape_derivative(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    adjoint: &MixedField,
    params: &PhysicsParams,
    auglag: &AugLagState,
    kind: MaxKind,
    stale_tol: f64,
) -> Result<ShapeDerivative> {
    {
        let r = assemble_residual(mesh, spaces, state, params, kind)?;
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > stale_tol {
            return Err(Error::Precondition(format!(
                "state residual {norm:.3e} exceeds staleness tolerance {stale_tol:.3e}"
            )));
        }
    }

    let mut out = geometric_derivative_terms(mesh, auglag)?;
    let basis: Vec<_> = quadrature(DEFAULT_DEGREE)?
        .iter()
        .map(|&qp| {
            let (phi, gphi_ref) = p2_basis(qp.xy);
            let (psi, gpsi_ref) = p1_basis(qp.xy);
            (qp, phi, gphi_ref, psi, gpsi_ref)
        })
        .collect();

    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let nodes = spaces.p2.cell_nodes[cell];
        let verts = mesh.cell(cell);

        let mut local_y = [0.0; 12];
        let mut local_adj = [0.0; 12];
        for (a, &node) in nodes.iter().enumerate() {
            local_y[2 * a] = state.velocity[2 * node];
            local_y[2 * a + 1] = state.velocity[2 * node + 1];
            local_adj[2 * a] = adjoint.velocity[2 * node];
            local_adj[2 * a + 1] = adjoint.velocity[2 * node + 1];
        }
        let local_p = [
            state.pressure[verts[0]],
            state.pressure[verts[1]],
            state.pressure[verts[2]],
        ];
        let local_padj = [
            adjoint.pressure[verts[0]],
            adjoint.pressure[verts[1]],
            adjoint.pressure[verts[2]],
        ];

        for (qp, phi, gphi_ref, psi, gpsi_ref) in &basis {
            let mut gphi = [[0.0; 2]; 6];
            let mut grad_y = tensor::ZERO;
            let mut grad_adj = tensor::ZERO;
            let mut y = [0.0; 2];
            let mut y_adj = [0.0; 2];
            for a in 0..6 {
                gphi[a] = geom.phys_grad(gphi_ref[a]);
                for comp in 0..2 {
                    let cy = local_y[2 * a + comp];
                    let ca = local_adj[2 * a + comp];
                    y[comp] += cy * phi[a];
                    y_adj[comp] += ca * phi[a];
                    grad_y[comp][0] += cy * gphi[a][0];
                    grad_y[comp][1] += cy * gphi[a][1];
                    grad_adj[comp][0] += ca * gphi[a][0];
                    grad_adj[comp][1] += ca * gphi[a][1];
                }
            }
            let p_val = local_p[0] * psi[0] + local_p[1] * psi[1] + local_p[2] * psi[2];
            let padj_val = local_padj[0] * psi[0] + local_padj[1] * psi[1] + local_padj[2] * psi[2];

            let eps_y = tensor::sym(grad_y);
            let eps_adj = tensor::sym(grad_adj);
            let norm_eps = tensor::norm(eps_y);
            let s = params.gamma * norm_eps;
            let m_val = max_op(s, kind, params);
            let quot = params.g * params.gamma / m_val;
            let qcoef = if norm_eps > 0.0 {
                d_coefficient(s, norm_eps, kind, params)
            } else {
                0.0
            };

            let div_y = tensor::trace(grad_y);
            let div_adj = tensor::trace(grad_adj);
            let conv = tensor::matvec(grad_y, y); // (y . grad) y
            // Divergence bulk factor: the full weak-form integrand.
            let bulk = 0.5 * params.mu * tensor::ddot(grad_y, grad_y)
                + 2.0 * params.mu * tensor::ddot(eps_y, eps_adj)
                + quot * tensor::ddot(eps_y, eps_adj)
                + params.rho * tensor::dot(conv, y_adj)
                - p_val * div_adj
                - tensor::dot(params.f, y_adj)
                + padj_val * div_y;

            let w = qp.w * geom.det_j;
            let gy_t = tensor::transpose(grad_y);
            let gadj_t = tensor::transpose(grad_adj);

            for (k, &vertex) in verts.iter().enumerate() {
                let gpsi = geom.phys_grad(gpsi_ref[k]);
                for comp in 0..2 {
                    // grad(W) for W = psi_k e_comp.
                    let mut grad_w = tensor::ZERO;
                    grad_w[comp] = gpsi;
                    let div_w = gpsi[comp];

                    let gy_gw = tensor::matmul(grad_y, grad_w);
                    let gadj_gw = tensor::matmul(grad_adj, grad_w);

                    let mut val = -params.mu * tensor::ddot(gy_gw, grad_y);
                    val -= 2.0 * params.mu * tensor::ddot(gy_gw, eps_adj);
                    val -= 2.0 * params.mu * tensor::ddot(eps_y, gadj_gw);
                    // q-kernel contribution, q = qcoef * (eps : sym pair) * eps.
                    if qcoef != 0.0 {
                        let q = tensor::scale(eps_y, qcoef * tensor::ddot(eps_y, gy_gw));
                        val += tensor::ddot(q, eps_adj);
                    }
                    val -= quot * tensor::ddot(gy_gw, eps_adj);
                    val -= quot * tensor::ddot(eps_y, gadj_gw);
                    // -rho ((grad(W) y . grad) y) . y_adj
                    let wy = tensor::matvec(grad_w, y);
                    val -= params.rho * tensor::dot(tensor::matvec(grad_y, wy), y_adj);
                    val += p_val * tensor::ddot(gadj_t, grad_w);
                    val -= padj_val * tensor::ddot(gy_t, grad_w);
                    // Body forces are constant, so the grad(f) V term drops.
                    val += div_w * bulk;

                    out.values[2 * vertex + comp] += w * val;
                }
            }
        }
    }
    Ok(out)
}
