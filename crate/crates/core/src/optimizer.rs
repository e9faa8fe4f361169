//! Augmented Lagrangian outer loop with an inner shape-gradient descent:
//! state solve, adjoint solve, shape derivative, deformation solve, Armijo
//! line search on the augmented Lagrangian, and multiplier/penalty updates.
//!
//! When the semismooth model fails to produce an acceptable step, a
//! safeguard retries the full iteration with the smoothed max-operator; the
//! next iteration returns to the semismooth model.

use crate::adjoint::solve_adjoint;
use crate::bingham::{
    assemble_residual, dissipation, residual_against, solve_state, solve_stokes_initial, FlowBcs,
    MaxKind, MixedField, NewtonOptions, NewtonReport, PhysicsParams,
};
use crate::config::{RunConfig, RunMode};
use crate::deformation::{interpolate_mu_hat, solve_deformation};
use crate::error::{Error, Result};
use crate::fem::Spaces;
use crate::mesh::{GeometricTargets, TriangleMesh};
use crate::shape_gradient::assemble_shape_derivative;

/// Multipliers, penalty and schedule of the augmented Lagrangian method.
#[derive(Debug, Clone)]
pub struct AugLagState {
    pub lambda: [f64; 4],
    nu: f64,
    pub targets: GeometricTargets,
    pub tau: f64,
    pub xi: f64,
    /// Constraint norm at the start of the current outer iteration.
    pub c1: f64,
}

impl AugLagState {
    pub fn new(
        lambda: [f64; 4],
        nu: f64,
        targets: GeometricTargets,
        tau: f64,
        xi: f64,
    ) -> Result<Self> {
        if nu <= 0.0 {
            return Err(Error::Config("penalty nu must be > 0".into()));
        }
        if !(0.0 < tau && tau < 1.0) {
            return Err(Error::Config("tau must lie in (0, 1)".into()));
        }
        if xi <= 1.0 {
            return Err(Error::Config("xi must be > 1".into()));
        }
        Ok(AugLagState { lambda, nu, targets, tau, xi, c1: 0.0 })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Outer update: `lambda <- lambda - nu c`, then `nu <- xi nu` whenever
    /// the constraint norm has not dropped below `tau * c1`. The penalty is
    /// nondecreasing by construction.
    pub fn update_outer(&mut self, c: [f64; 4]) {
        for (l, ci) in self.lambda.iter_mut().zip(c) {
            *l -= self.nu * ci;
        }
        let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if c_norm >= self.tau * self.c1 {
            self.nu *= self.xi;
        }
    }
}

/// One row of the per-iteration optimization trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub l_a: f64,
    pub c_norm: f64,
    pub v_h1: f64,
    /// Accepted step size (0 when the iteration took no step).
    pub t: f64,
    pub newton_iters: usize,
    pub safeguard: bool,
}

/// Outer-iteration snapshot.
#[derive(Debug, Clone)]
pub struct OuterRow {
    pub outer: usize,
    pub lambda: [f64; 4],
    pub nu: f64,
    pub c_norm: f64,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// Constraint tolerance reached before the outer budget.
    ConstraintConverged,
    /// Line search failed even under the safeguard.
    AbortedLineSearch,
    /// Mesh quality dropped below the configured floor.
    AbortedQuality,
    /// State solver failed to converge.
    AbortedStateSolve,
}

/// Per-iteration history of a run.
#[derive(Debug, Clone)]
pub struct OptTrace {
    pub rows: Vec<TraceRow>,
    pub outer_rows: Vec<OuterRow>,
    pub status: RunStatus,
}

/// Validated solver settings (an I/O-free [`RunConfig`]).
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub params: PhysicsParams,
    pub bcs: FlowBcs,
    pub targets: GeometricTargets,
    pub lambda0: [f64; 4],
    pub nu0: f64,
    pub tau: f64,
    pub xi: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub t_max: f64,
    pub newton: NewtonOptions,
    pub mode: RunMode,
    pub v_floor: f64,
    pub c_tol: f64,
    pub quality_floor: f64,
    pub mu_hat_shape: f64,
    pub mu_hat_outer: f64,
}

impl RunSettings {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(RunSettings {
            params: PhysicsParams::new(cfg.mu, cfg.rho, cfg.g, cfg.gamma, cfg.delta, cfg.f)?,
            bcs: FlowBcs::channel(),
            targets: cfg.targets(),
            lambda0: cfg.lambda,
            nu0: cfg.nu,
            tau: cfg.tau,
            xi: cfg.xi,
            inner_iterations: cfg.inner_iterations,
            outer_iterations: cfg.outer_iterations,
            t_max: cfg.t_max,
            newton: NewtonOptions {
                eps: cfg.newton_eps,
                beta: cfg.armijo_beta,
                max_iterations: cfg.newton_max_iterations,
            },
            mode: cfg.mode,
            v_floor: cfg.v_floor,
            c_tol: cfg.c_tol,
            quality_floor: cfg.quality_floor,
            mu_hat_shape: cfg.mu_hat_shape,
            mu_hat_outer: cfg.mu_hat_outer,
        })
    }

    fn stale_tol(&self) -> f64 {
        10.0 * self.newton.eps
    }
}

/// Test and instrumentation hooks for [`run`].
#[derive(Default)]
pub struct RunHooks<'a> {
    /// Overrides the descent direction of a given global inner iteration
    /// (used to force line-search failures).
    #[allow(clippy::type_complexity)]
    pub override_direction: Option<Box<dyn FnMut(usize, &mut Vec<[f64; 2]>) + 'a>>,
}

/// Final fields and history of a run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: OptTrace,
    pub mesh: TriangleMesh,
    pub spaces: Spaces,
    pub state: MixedField,
    pub adjoint: MixedField,
}

/// Augmented Lagrangian value
/// `J + R(., adjoint) - lambda^T c + (nu / 2) ||c||^2`.
///
/// The residual term is contracted against the supplied adjoint pair (the
/// value is solver-tolerance small at a converged state) or dropped when no
/// adjoint is available.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_l_a(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    adjoint: Option<&MixedField>,
    params: &PhysicsParams,
    auglag: &AugLagState,
    kind: MaxKind,
    stale_tol: f64,
) -> Result<f64> {
    let residual = assemble_residual(mesh, spaces, state, params, kind)?;
    let res_norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
    if res_norm > stale_tol {
        return Err(Error::Precondition(format!(
            "augmented Lagrangian evaluated at a non-converged state (residual {res_norm:.3e})"
        )));
    }
    let j = dissipation(mesh, spaces, state, params)?;
    let r_term = adjoint.map(|a| residual_against(&residual, a, spaces)).unwrap_or(0.0);
    let shape = mesh.shape_required()?;
    let c = mesh.constraint_vector(shape, &auglag.targets)?;
    let lambda_c: f64 = auglag.lambda.iter().zip(c).map(|(l, ci)| l * ci).sum();
    let c_sq: f64 = c.iter().map(|v| v * v).sum();
    Ok(j + r_term - lambda_c + 0.5 * auglag.nu() * c_sq)
}

/// Result of an accepted shape step.
pub struct AcceptedStep {
    pub t: f64,
    pub mesh: TriangleMesh,
    pub spaces: Spaces,
    pub state: MixedField,
    pub report: NewtonReport,
    pub l_value: f64,
    /// Trial evaluations spent (including rejected ones).
    pub trials: usize,
}

/// Armijo backtracking over the step sizes `t_max, t_max / 2, ...`.
///
/// Every trial deforms the mesh (inverted cells reject the trial), re-solves
/// the state warm-started from the current one, and evaluates the augmented
/// Lagrangian with the fixed adjoint test pair. Returns `None` when the
/// predicted decrease is not negative or the step size underflows.
#[allow(clippy::too_many_arguments)]
pub fn armijo_shape_step(
    mesh: &TriangleMesh,
    v: &[[f64; 2]],
    dl_v: f64,
    l_base: f64,
    warm_state: &MixedField,
    adjoint: &MixedField,
    auglag: &AugLagState,
    settings: &RunSettings,
    kind: MaxKind,
) -> Result<Option<AcceptedStep>> {
    if dl_v >= 0.0 {
        return Ok(None);
    }
    let t_min = settings.t_max / (1u64 << 20) as f64;
    let beta = settings.newton.beta;
    let mut t = settings.t_max;
    let mut trials = 0;
    while t >= t_min {
        trials += 1;
        let trial_mesh = match mesh.deform(v, t) {
            Ok(m) => m,
            Err(Error::InvertedMesh { .. }) => {
                t *= 0.5;
                continue;
            }
            Err(other) => return Err(other),
        };
        let trial_spaces = Spaces::build(&trial_mesh);
        let solved = solve_state(
            &trial_mesh,
            &trial_spaces,
            &settings.params,
            &settings.bcs,
            warm_state,
            kind,
            &settings.newton,
        );
        let (state, report) = match solved {
            Ok(pair) => pair,
            Err(Error::NewtonFailed { .. }) => {
                t *= 0.5;
                continue;
            }
            Err(other) => return Err(other),
        };
        let l_trial = evaluate_l_a(
            &trial_mesh,
            &trial_spaces,
            &state,
            Some(adjoint),
            &settings.params,
            auglag,
            kind,
            settings.stale_tol(),
        )?;
        if l_trial <= l_base + beta * t * dl_v {
            return Ok(Some(AcceptedStep {
                t,
                mesh: trial_mesh,
                spaces: trial_spaces,
                state,
                report,
                l_value: l_trial,
                trials,
            }));
        }
        t *= 0.5;
    }
    Ok(None)
}

struct IterationData {
    state: MixedField,
    adjoint: MixedField,
    report: NewtonReport,
    l_base: f64,
    direction: Vec<[f64; 2]>,
    v_h1: f64,
    dl_v: f64,
}

/// Solves state, adjoint, shape derivative and deformation for one model.
///
/// When the warm state is already converged for this mesh and model (it came
/// out of the previous Armijo trial), its solve report is passed in and the
/// state solve is skipped.
fn prepare_direction(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    warm: &MixedField,
    preconverged: Option<&NewtonReport>,
    auglag: &AugLagState,
    settings: &RunSettings,
    kind: MaxKind,
) -> Result<IterationData> {
    let (state, report) = match preconverged {
        Some(report) => (warm.clone(), report.clone()),
        None => solve_state(
            mesh,
            spaces,
            &settings.params,
            &settings.bcs,
            warm,
            kind,
            &settings.newton,
        )?,
    };
    let adjoint =
        solve_adjoint(mesh, spaces, &state, &settings.params, kind, settings.stale_tol())?;
    let l_base = evaluate_l_a(
        mesh,
        spaces,
        &state,
        Some(&adjoint),
        &settings.params,
        auglag,
        kind,
        settings.stale_tol(),
    )?;
    let dl = assemble_shape_derivative(
        mesh,
        spaces,
        &state,
        &adjoint,
        &settings.params,
        auglag,
        kind,
        settings.stale_tol(),
    )?;
    let mu_hat = interpolate_mu_hat(mesh, settings.mu_hat_shape, settings.mu_hat_outer)?;
    let deformation = solve_deformation(mesh, &dl, &mu_hat)?;
    let dl_v = deformation.descent_value;
    Ok(IterationData {
        state,
        adjoint,
        report,
        l_base,
        direction: deformation.v,
        v_h1: deformation.h1_norm,
        dl_v,
    })
}

/// Runs the full optimization loop on the given mesh.
pub fn run(mesh: TriangleMesh, settings: &RunSettings, mut hooks: RunHooks) -> Result<RunOutcome> {
    let mut mesh = mesh;
    let mut spaces = Spaces::build(&mesh);
    let mut auglag =
        AugLagState::new(settings.lambda0, settings.nu0, settings.targets, settings.tau, settings.xi)?;

    let base_kind = match settings.mode {
        RunMode::Regularized => MaxKind::Regularized,
        RunMode::UnregularizedWithSafeguard => MaxKind::Unregularized,
    };

    // Cold start from the Stokes solution.
    let mut warm = solve_stokes_initial(&mesh, &spaces, &settings.params, &settings.bcs)?;
    let mut current_adjoint = MixedField::zeros(&spaces);
    let mut preconverged: Option<NewtonReport> = None;

    let mut rows = Vec::new();
    let mut outer_rows = Vec::new();
    let mut status = RunStatus::Completed;
    let mut global_iter = 0usize;

    'outer: for outer in 0..settings.outer_iterations {
        let c_start = {
            let shape = mesh.shape_required()?;
            let c = mesh.constraint_vector(shape, &auglag.targets)?;
            c.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        auglag.c1 = c_start;

        for _ in 0..settings.inner_iterations {
            let data = match prepare_direction(
                &mesh,
                &spaces,
                &warm,
                preconverged.as_ref(),
                &auglag,
                settings,
                base_kind,
            ) {
                Ok(d) => d,
                Err(Error::NewtonFailed { .. }) => {
                    status = RunStatus::AbortedStateSolve;
                    break 'outer;
                }
                Err(other) => return Err(other),
            };
            let IterationData {
                state,
                adjoint,
                report,
                l_base,
                mut direction,
                v_h1,
                mut dl_v,
            } = data;
            warm = state.clone();
            current_adjoint = adjoint.clone();

            let c_norm = {
                let shape = mesh.shape_required()?;
                let c = mesh.constraint_vector(shape, &auglag.targets)?;
                c.iter().map(|v| v * v).sum::<f64>().sqrt()
            };

            if v_h1 < settings.v_floor {
                rows.push(TraceRow {
                    iter: global_iter,
                    l_a: l_base,
                    c_norm,
                    v_h1,
                    t: 0.0,
                    newton_iters: report.iterations(),
                    safeguard: false,
                });
                global_iter += 1;
                break;
            }

            if let Some(hook) = hooks.override_direction.as_mut() {
                hook(global_iter, &mut direction);
                let dl = assemble_shape_derivative(
                    &mesh,
                    &spaces,
                    &state,
                    &adjoint,
                    &settings.params,
                    &auglag,
                    base_kind,
                    settings.stale_tol(),
                )?;
                dl_v = dl.apply(&direction);
            }

            let mut newton_iters = report.iterations();
            let mut safeguard_used = false;
            let mut accepted = armijo_shape_step(
                &mesh, &direction, dl_v, l_base, &state, &adjoint, &auglag, settings, base_kind,
            )?;

            if accepted.is_none() && settings.mode == RunMode::UnregularizedWithSafeguard {
                // Safeguard: repeat the whole iteration with the smoothed model.
                safeguard_used = true;
                let reg = match prepare_direction(
                    &mesh,
                    &spaces,
                    &state,
                    None,
                    &auglag,
                    settings,
                    MaxKind::Regularized,
                ) {
                    Ok(d) => d,
                    Err(Error::NewtonFailed { .. }) => {
                        status = RunStatus::AbortedStateSolve;
                        break 'outer;
                    }
                    Err(other) => return Err(other),
                };
                newton_iters += reg.report.iterations();
                accepted = armijo_shape_step(
                    &mesh,
                    &reg.direction,
                    reg.dl_v,
                    reg.l_base,
                    &reg.state,
                    &reg.adjoint,
                    &auglag,
                    settings,
                    MaxKind::Regularized,
                )?;
            }

            let Some(step) = accepted else {
                rows.push(TraceRow {
                    iter: global_iter,
                    l_a: l_base,
                    c_norm,
                    v_h1,
                    t: 0.0,
                    newton_iters,
                    safeguard: safeguard_used,
                });
                status = RunStatus::AbortedLineSearch;
                break 'outer;
            };

            rows.push(TraceRow {
                iter: global_iter,
                l_a: l_base,
                c_norm,
                v_h1,
                t: step.t,
                newton_iters,
                safeguard: safeguard_used,
            });
            global_iter += 1;

            mesh = step.mesh;
            spaces = step.spaces;
            warm = step.state;
            // A safeguard step leaves a state converged for the smoothed
            // model only; the next semismooth iteration must re-solve.
            preconverged = if safeguard_used { None } else { Some(step.report) };

            if mesh.quality() < settings.quality_floor {
                status = RunStatus::AbortedQuality;
                break 'outer;
            }
        }

        let shape = mesh.shape_required()?;
        let c_end = mesh.constraint_vector(shape, &auglag.targets)?;
        auglag.update_outer(c_end);
        let c_end_norm = c_end.iter().map(|v| v * v).sum::<f64>().sqrt();
        outer_rows.push(OuterRow {
            outer,
            lambda: auglag.lambda,
            nu: auglag.nu(),
            c_norm: c_end_norm,
        });
        if c_end_norm < settings.c_tol {
            status = RunStatus::ConstraintConverged;
            break;
        }
    }

    Ok(RunOutcome {
        trace: OptTrace { rows, outer_rows, status },
        mesh,
        spaces,
        state: warm,
        adjoint: current_adjoint,
    })
}

#[cfg(test)]
mod tests;
