//! Approximate adjoint equation: transpose of the linearized state operator
//! with the direction-linear branch kernels, driven by the objective
//! gradient.
//!
//! The boundary branch of the generalized derivative is replaced by zero
//! (its set is assumed negligible), which makes the adjoint matrix
//! independent of any Newton-solver internals. In the regularized case the
//! smoothed derivative is used instead and the construction is exact.

use crate::bingham::{
    assemble_linearized_matrix, assemble_residual, d_coefficient, LinearizedForm, MaxKind,
    MixedField, PhysicsParams,
};
use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, p2_basis, quadrature, solve_linear, CellGeom, SparseSystem, Spaces,
};
use crate::mesh::TriangleMesh;
use crate::tensor::{self, Mat2};

/// Direction-linear replacement of the max-quotient derivative term,
/// unregularized: zero off the active set (including the boundary case),
/// `g (eps : dir) eps / ||eps||^3` on it.
pub fn d_tilde(eps_y: Mat2, eps_dir: Mat2, p: &PhysicsParams) -> Mat2 {
    let norm_eps = tensor::norm(eps_y);
    if norm_eps == 0.0 {
        return tensor::ZERO;
    }
    let coef = d_coefficient(p.gamma * norm_eps, norm_eps, MaxKind::Unregularized, p);
    tensor::scale(eps_y, coef * tensor::ddot(eps_y, eps_dir))
}

/// Smoothed derivative term with the three regularized branches.
pub fn d_delta(eps_y: Mat2, eps_dir: Mat2, p: &PhysicsParams) -> Mat2 {
    let norm_eps = tensor::norm(eps_y);
    if norm_eps == 0.0 {
        return tensor::ZERO;
    }
    let coef = d_coefficient(p.gamma * norm_eps, norm_eps, MaxKind::Regularized, p);
    tensor::scale(eps_y, coef * tensor::ddot(eps_y, eps_dir))
}

/// Gradient of the dissipation objective over velocity test functions:
/// `G_i = int mu grad(phi_i) : grad(y)`. Pressure rows are zero.
pub fn objective_gradient(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    params: &PhysicsParams,
) -> Result<Vec<f64>> {
    let rule = quadrature(4)?;
    let mut grad = vec![0.0; spaces.n_mixed()];
    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let nodes = spaces.p2.cell_nodes[cell];
        let mut local_v = [0.0; 12];
        for (a, &node) in nodes.iter().enumerate() {
            local_v[2 * a] = state.velocity[2 * node];
            local_v[2 * a + 1] = state.velocity[2 * node + 1];
        }
        for q in rule {
            let (_, gref) = p2_basis(q.xy);
            let mut gphi = [[0.0; 2]; 6];
            let mut grad_y = tensor::ZERO;
            for a in 0..6 {
                gphi[a] = geom.phys_grad(gref[a]);
                for c in 0..2 {
                    grad_y[c][0] += local_v[2 * a + c] * gphi[a][0];
                    grad_y[c][1] += local_v[2 * a + c] * gphi[a][1];
                }
            }
            let w = q.w * geom.det_j;
            for a in 0..6 {
                for c in 0..2 {
                    // grad(phi_a e_c) : grad(y) = gphi_a . grad_y[c]
                    grad[2 * nodes[a] + c] +=
                        w * params.mu * tensor::dot(gphi[a], grad_y[c]);
                }
            }
        }
    }
    Ok(grad)
}

fn check_state_fresh(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    params: &PhysicsParams,
    kind: MaxKind,
    stale_tol: f64,
) -> Result<()> {
    let r = assemble_residual(mesh, spaces, state, params, kind)?;
    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > stale_tol {
        return Err(Error::Precondition(format!(
            "state residual {norm:.3e} exceeds staleness tolerance {stale_tol:.3e}"
        )));
    }
    Ok(())
}

/// Assembles the adjoint system: transposed linearized operator, right-hand
/// side `-G`, homogeneous Dirichlet rows for the adjoint velocity.
pub fn assemble_adjoint_system(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    params: &PhysicsParams,
    kind: MaxKind,
    stale_tol: f64,
) -> Result<SparseSystem> {
    check_state_fresh(mesh, spaces, state, params, kind, stale_tol)?;
    let matrix =
        assemble_linearized_matrix(mesh, spaces, state, params, kind, LinearizedForm::Adjoint)?;
    let grad = objective_gradient(mesh, spaces, state, params)?;

    let mut constraints = Vec::new();
    for (node, _) in spaces.velocity_dirichlet_nodes() {
        constraints.push((2 * node, 0.0));
        constraints.push((2 * node + 1, 0.0));
    }
    let sys = SparseSystem {
        matrix,
        rhs: grad.iter().map(|v| -v).collect(),
        constraints,
        dirichlet_applied: false,
    };
    let eliminated = apply_dirichlet(sys)?;

    // Transpose after elimination; identity rows stay identity rows.
    let n = eliminated.n();
    let mut transposed = crate::fem::CooMatrix::with_capacity(n, n, eliminated.matrix.triplets().len());
    for &(r, c, v) in eliminated.matrix.triplets() {
        transposed.push(c, r, v);
    }
    Ok(SparseSystem {
        matrix: transposed,
        rhs: eliminated.rhs,
        constraints: eliminated.constraints,
        dirichlet_applied: true,
    })
}

/// Validates the adjoint by comparing the adjoint-based directional
/// derivative of the reduced dissipation functional against central finite
/// differences, on the smoothed model where the reduced functional is
/// differentiable.
///
/// Geometric terms are neutralized by targeting the current shape with zero
/// multipliers, so the comparison isolates the state/adjoint transport
/// terms. Returns `|predicted - fd| / max(1, |fd|)`.
#[allow(clippy::too_many_arguments)]
pub fn adjoint_consistency_check(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    adjoint: &MixedField,
    params: &PhysicsParams,
    bcs: &crate::bingham::FlowBcs,
    probe: &[[f64; 2]],
    fd_step: f64,
    newton: &crate::bingham::NewtonOptions,
) -> Result<f64> {
    let shape = mesh.shape_required()?;
    let feasible = crate::mesh::GeometricTargets {
        volume: mesh.volume(shape)?,
        barycenter: mesh.barycenter(shape)?,
        perimeter: mesh.perimeter(shape),
    };
    let auglag = crate::optimizer::AugLagState::new([0.0; 4], 1.0, feasible, 0.9, 2.0)?;
    let check = crate::gradcheck::directional_check(
        mesh,
        spaces,
        state,
        adjoint,
        params,
        bcs,
        &auglag,
        MaxKind::Regularized,
        probe,
        fd_step,
        newton,
    )?;
    Ok(check.rel_error)
}

/// Solves for the adjoint pair; the state must be converged for `kind`.
pub fn solve_adjoint(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    params: &PhysicsParams,
    kind: MaxKind,
    stale_tol: f64,
) -> Result<MixedField> {
    let sys = assemble_adjoint_system(mesh, spaces, state, params, kind, stale_tol)?;
    let x = solve_linear(&sys)?;
    Ok(MixedField::from_mixed_vector(spaces, &x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bingham::{solve_state, solve_stokes_initial, FlowBcs, NewtonOptions, Profile};
    use crate::fem::CsrMatrix;
    use crate::mesh::channel_mesh;

    fn params() -> PhysicsParams {
        PhysicsParams::reference()
    }

    fn setup() -> (TriangleMesh, Spaces, MixedField, PhysicsParams) {
        let mesh = channel_mesh(8, [0.25, 0.375, 0.375, 0.5]).unwrap().into_mesh().unwrap();
        let spaces = Spaces::build(&mesh);
        let p = params();
        let initial = solve_stokes_initial(&mesh, &spaces, &p, &FlowBcs::channel()).unwrap();
        let (state, _) = solve_state(
            &mesh,
            &spaces,
            &p,
            &FlowBcs::channel(),
            &initial,
            MaxKind::Unregularized,
            &NewtonOptions::default(),
        )
        .unwrap();
        (mesh, spaces, state, p)
    }

    #[test]
    fn d_tilde_branches() {
        let p = params();
        // Inactive: gamma ||eps|| < g.
        let eps = [[1e-3, 0.0], [0.0, -1e-3]];
        let dir = [[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(d_tilde(eps, dir, &p), tensor::ZERO);

        // Boundary: gamma ||eps|| = g exactly gives zero, unlike the
        // semismooth state kernel.
        let a = 2.0f64.sqrt() * p.g / p.gamma / 2.0;
        let eps_eq = [[a, 0.0], [0.0, -a]];
        assert!((p.gamma * tensor::norm(eps_eq) - p.g).abs() < 1e-12 * p.g);
        assert_eq!(d_tilde(eps_eq, eps_eq, &p), tensor::ZERO);

        // Active: eps = diag(a, -a), direction eps itself.
        let a = 0.1;
        let eps = [[a, 0.0], [0.0, -a]];
        let got = d_tilde(eps, eps, &p);
        let norm = (2.0 * a * a).sqrt();
        let expect = tensor::scale(eps, p.g * (2.0 * a * a) / norm.powi(3));
        assert!(tensor::norm(tensor::add(got, tensor::scale(expect, -1.0))) < 1e-12);
    }

    #[test]
    fn d_delta_matches_d_tilde_deep_in_active_region() {
        let p = params();
        let a = 1.0; // gamma ||eps|| = 1414 >> g + 1/(2 delta)
        let eps = [[a, 0.0], [0.0, -a]];
        let dir = [[0.3, 0.1], [0.1, -0.2]];
        let dt = d_tilde(eps, dir, &p);
        let dd = d_delta(eps, dir, &p);
        assert!(tensor::norm(tensor::add(dt, tensor::scale(dd, -1.0))) < 1e-14);
    }

    #[test]
    fn zero_state_gives_zero_adjoint() {
        let mesh = channel_mesh(6, [1.0 / 3.0, 1.0 / 3.0, 0.5, 0.5]).unwrap().into_mesh().unwrap();
        let spaces = Spaces::build(&mesh);
        let p = params();
        let state = MixedField::zeros(&spaces);
        let adjoint =
            solve_adjoint(&mesh, &spaces, &state, &p, MaxKind::Unregularized, 1e-9).unwrap();
        assert!(adjoint.velocity.iter().all(|v| v.abs() < 1e-13));
        assert!(adjoint.pressure.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn adjoint_matrix_is_transpose_of_linearization() {
        let (mesh, spaces, state, p) = setup();
        let adj_sys = assemble_adjoint_system(
            &mesh, &spaces, &state, &p, MaxKind::Unregularized, 1e-4,
        )
        .unwrap();

        // Independently build the eliminated linearized operator.
        let lin = assemble_linearized_matrix(
            &mesh, &spaces, &state, &p, MaxKind::Unregularized, LinearizedForm::Adjoint,
        )
        .unwrap();
        let mut constraints = Vec::new();
        for (node, _) in spaces.velocity_dirichlet_nodes() {
            constraints.push((2 * node, 0.0));
            constraints.push((2 * node + 1, 0.0));
        }
        let n = spaces.n_mixed();
        let lin_sys = apply_dirichlet(SparseSystem {
            matrix: lin,
            rhs: vec![0.0; n],
            constraints,
            dirichlet_applied: false,
        })
        .unwrap();

        let a_adj = adj_sys.matrix.to_csr();
        let a_lin_t = lin_sys.matrix.to_csr().transpose();
        let diff = a_adj.max_abs_diff(&a_lin_t);
        assert!(diff <= 1e-12 * a_adj.max_abs(), "entrywise diff {diff}");

        // Bilinear-form identity on deterministic probe vectors.
        let a_lin = lin_sys.matrix.to_csr();
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut s = 123456789u64;
        for i in 0..n {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            u[i] = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            v[i] = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        let lhs: f64 = u.iter().zip(a_adj.matvec(&v)).map(|(a, b)| a * b).sum();
        let rhs: f64 = v.iter().zip(a_lin.matvec(&u)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn adjoint_velocity_vanishes_on_dirichlet_dofs() {
        let (mesh, spaces, state, p) = setup();
        let adjoint = solve_adjoint(
            &mesh, &spaces, &state, &p, MaxKind::Unregularized, 1e-4,
        )
        .unwrap();
        for (node, _) in spaces.velocity_dirichlet_nodes() {
            assert_eq!(adjoint.velocity[2 * node], 0.0);
            assert_eq!(adjoint.velocity[2 * node + 1], 0.0);
        }
    }

    #[test]
    fn regularized_and_unregularized_agree_in_deep_inactive_regime() {
        let mesh = channel_mesh(8, [0.25, 0.375, 0.375, 0.5]).unwrap().into_mesh().unwrap();
        let spaces = Spaces::build(&mesh);
        let p = params();
        let bcs = FlowBcs { inflow: Profile::Parabola { scale: 1e-6 }, walls: Profile::Zero, shape: Profile::Zero };
        let initial = solve_stokes_initial(&mesh, &spaces, &p, &bcs).unwrap();
        let opts = NewtonOptions { eps: 1e-12, ..NewtonOptions::default() };
        let (state, _) =
            solve_state(&mesh, &spaces, &p, &bcs, &initial, MaxKind::Unregularized, &opts).unwrap();
        let adj_u =
            solve_adjoint(&mesh, &spaces, &state, &p, MaxKind::Unregularized, 1e-9).unwrap();
        let adj_r =
            solve_adjoint(&mesh, &spaces, &state, &p, MaxKind::Regularized, 1e-9).unwrap();
        let scale = adj_u.velocity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in adj_u.velocity.iter().zip(&adj_r.velocity) {
            assert!((a - b).abs() <= 1e-12 * scale.max(1e-30));
        }
    }

    #[test]
    fn stale_state_is_rejected() {
        let (mesh, spaces, _, p) = setup();
        // A Stokes field is not a converged Bingham state.
        let stale = solve_stokes_initial(&mesh, &spaces, &p, &FlowBcs::channel()).unwrap();
        let out = solve_adjoint(&mesh, &spaces, &stale, &p, MaxKind::Unregularized, 1e-5);
        assert!(matches!(out, Err(Error::Precondition(_))));
    }

    #[test]
    fn rhs_scales_with_consistent_parameter_scaling() {
        let (mesh, spaces, state, p) = setup();
        let scaled = PhysicsParams {
            mu: 2.0 * p.mu,
            rho: 2.0 * p.rho,
            g: 2.0 * p.g,
            gamma: 2.0 * p.gamma,
            delta: 0.5 * p.delta,
            f: [2.0 * p.f[0], 2.0 * p.f[1]],
        };
        let g1 = objective_gradient(&mesh, &spaces, &state, &p).unwrap();
        let g2 = objective_gradient(&mesh, &spaces, &state, &scaled).unwrap();
        let norm = g1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * norm);
        }

        // Doubling the rhs of the fixed adjoint operator doubles the solution.
        let sys = assemble_adjoint_system(
            &mesh, &spaces, &state, &p, MaxKind::Unregularized, 1e-4,
        )
        .unwrap();
        let x1 = solve_linear(&sys).unwrap();
        let mut doubled = sys.clone();
        for v in doubled.rhs.iter_mut() {
            *v *= 2.0;
        }
        let x2 = solve_linear(&doubled).unwrap();
        let scale = x1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in x1.iter().zip(&x2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn consistency_check_trivial_and_tangential_probes() {
        let mesh = channel_mesh(8, [0.25, 0.375, 0.375, 0.5]).unwrap().into_mesh().unwrap();
        let spaces = Spaces::build(&mesh);
        let p = params();
        let bcs = FlowBcs::channel();
        let tight = NewtonOptions { eps: 1e-11, beta: 1e-4, max_iterations: 400 };
        let initial = solve_stokes_initial(&mesh, &spaces, &p, &bcs).unwrap();
        let (state, _) =
            solve_state(&mesh, &spaces, &p, &bcs, &initial, MaxKind::Regularized, &tight).unwrap();
        let adjoint =
            solve_adjoint(&mesh, &spaces, &state, &p, MaxKind::Regularized, 1e-9).unwrap();

        // Zero probe: both derivative values vanish.
        let zero = vec![[0.0, 0.0]; mesh.num_vertices()];
        let err = adjoint_consistency_check(
            &mesh, &spaces, &state, &adjoint, &p, &bcs, &zero, 1e-7, &tight,
        )
        .unwrap();
        assert_eq!(err, 0.0);

        // Tangential probe on the straight bottom wall, away from the
        // shape: the domain does not change, so both sides sit at the
        // discretization-drift level and must agree within FD noise.
        let mut probe = vec![[0.0, 0.0]; mesh.num_vertices()];
        for v in 0..mesh.num_vertices() {
            let x = mesh.vertex(v);
            if x[1] == 0.0 && x[0] > 0.0 && x[0] < 1.0 {
                probe[v] = [1.0, 0.0];
            }
        }
        let err = adjoint_consistency_check(
            &mesh, &spaces, &state, &adjoint, &p, &bcs, &probe, 1e-7, &tight,
        )
        .unwrap();
        assert!(err <= 1e-6, "tangential probe mismatch {err}");
    }

    #[test]
    fn consistency_check_on_shape_supported_probe() {
        let mesh = channel_mesh(8, [0.25, 0.375, 0.375, 0.5]).unwrap().into_mesh().unwrap();
        let spaces = Spaces::build(&mesh);
        let p = params();
        let bcs = FlowBcs::channel();
        let tight = NewtonOptions { eps: 1e-11, beta: 1e-4, max_iterations: 400 };
        let initial = solve_stokes_initial(&mesh, &spaces, &p, &bcs).unwrap();
        let (state, _) =
            solve_state(&mesh, &spaces, &p, &bcs, &initial, MaxKind::Regularized, &tight).unwrap();
        let adjoint =
            solve_adjoint(&mesh, &spaces, &state, &p, MaxKind::Regularized, 1e-9).unwrap();
        let probe = crate::gradcheck::shape_supported_direction(&mesh, 3).unwrap();
        let err = adjoint_consistency_check(
            &mesh, &spaces, &state, &adjoint, &p, &bcs, &probe, 1e-7, &tight,
        )
        .unwrap();
        assert!(err <= 1e-3, "relative error {err}");
    }

    #[test]
    fn csr_transpose_round_trip() {
        let mut coo = crate::fem::CooMatrix::new(3, 3);
        coo.push(0, 1, 2.0);
        coo.push(2, 0, -1.0);
        coo.push(1, 1, 4.0);
        let csr = coo.to_csr();
        let back: CsrMatrix = csr.transpose().transpose();
        assert_eq!(back.max_abs_diff(&csr), 0.0);
    }
}
