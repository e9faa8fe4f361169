//! Finite-difference validation of assembled shape-derivative values.
//!
//! The reduced augmented Lagrangian is differentiated by central differences
//! under the perturbation of identity: each evaluation deforms the mesh,
//! re-solves the state (warm-started) and evaluates the functional with the
//! base adjoint as the fixed test pair. Meaningful for the smoothed
//! max-operator, where the reduced functional is differentiable.

use crate::bingham::{solve_state, FlowBcs, MaxKind, MixedField, NewtonOptions, PhysicsParams};
use crate::error::Result;
use crate::fem::Spaces;
use crate::mesh::TriangleMesh;
use crate::optimizer::{evaluate_l_a, AugLagState};
use crate::shape_gradient::assemble_shape_derivative;

/// One directional comparison.
#[derive(Debug, Clone, Copy)]
pub struct DirectionalCheck {
    pub predicted: f64,
    pub finite_difference: f64,
    /// `|predicted - fd| / max(1, |fd|)`.
    pub rel_error: f64,
}

/// Compares the assembled directional derivative against central finite
/// differences of the reduced functional along `probe`.
///
/// The step is `fd_step / max |probe|`, so `fd_step` is the physical vertex
/// displacement of the largest-moving node.
#[allow(clippy::too_many_arguments)]
pub fn directional_check(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    adjoint: &MixedField,
    params: &PhysicsParams,
    bcs: &FlowBcs,
    auglag: &AugLagState,
    kind: MaxKind,
    probe: &[[f64; 2]],
    fd_step: f64,
    newton: &NewtonOptions,
) -> Result<DirectionalCheck> {
    let stale_tol = 100.0 * newton.eps;
    let dl = assemble_shape_derivative(mesh, spaces, state, adjoint, params, auglag, kind, stale_tol)?;
    let predicted = dl.apply(probe);

    let max_w = probe.iter().fold(0.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
    if max_w == 0.0 {
        return Ok(DirectionalCheck { predicted, finite_difference: 0.0, rel_error: predicted.abs() });
    }
    let h = fd_step / max_w;

    let reduced = |m: &TriangleMesh| -> Result<f64> {
        let sp = Spaces::build(m);
        let (st, _) = solve_state(m, &sp, params, bcs, state, kind, newton)?;
        evaluate_l_a(m, &sp, &st, Some(adjoint), params, auglag, kind, stale_tol)
    };
    let plus = reduced(&mesh.deform(probe, h)?)?;
    let minus = reduced(&mesh.deform(probe, -h)?)?;
    let fd = (plus - minus) / (2.0 * h);
    Ok(DirectionalCheck {
        predicted,
        finite_difference: fd,
        rel_error: (predicted - fd).abs() / fd.abs().max(1.0),
    })
}

/// Deterministic pseudo-random deformation supported on the shape vertices.
pub fn shape_supported_direction(mesh: &TriangleMesh, seed: u64) -> Result<Vec<[f64; 2]>> {
    let shape = mesh.shape_required()?;
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).max(1);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut w = vec![[0.0, 0.0]; mesh.num_vertices()];
    for &v in shape.vertices() {
        w[v] = [next(), next()];
    }
    Ok(w)
}
