//! Bingham constitutive kernels, state residual and semismooth Newton solver.
//!
//! The yield-stress law is handled through the single-valued stress
//! `h(eps) = g * gamma * eps / m(gamma ||eps||)` where `m` is either the
//! exact `max(g, .)` or its C1 quadratic smoothing `max_delta`. The state
//! equation is solved by a damped Newton method; the generalized derivative
//! of the max-quotient splits into inactive / boundary / active branches
//! classified pointwise at quadrature points.

use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, p1_basis, p2_basis, quadrature, solve_linear, CellGeom, CooMatrix,
    QuadPoint, SparseSystem, Spaces, DEFAULT_DEGREE,
};
use crate::mesh::{BoundaryTag, TriangleMesh};
use crate::tensor::{self, Mat2};

/// Fluid and regularization constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    /// Viscosity, > 0.
    pub mu: f64,
    /// Density in front of the convective term, >= 0.
    pub rho: f64,
    /// Plasticity (yield) threshold, > 0.
    pub g: f64,
    /// Stress-law regularization, >> 0.
    pub gamma: f64,
    /// Max-operator smoothing parameter, > 0.
    pub delta: f64,
    /// Constant body force.
    pub f: [f64; 2],
}

impl PhysicsParams {
    pub fn new(mu: f64, rho: f64, g: f64, gamma: f64, delta: f64, f: [f64; 2]) -> Result<Self> {
        if mu <= 0.0 || g <= 0.0 || gamma <= 0.0 || delta <= 0.0 || rho < 0.0 {
            return Err(Error::Config(
                "physics parameters must satisfy mu, g, gamma, delta > 0 and rho >= 0".into(),
            ));
        }
        Ok(PhysicsParams { mu, rho, g, gamma, delta, f })
    }

    /// Reference experiment constants (the empty-config defaults).
    pub fn reference() -> Self {
        PhysicsParams { mu: 1.0, rho: 0.0, g: 20.0, gamma: 1e3, delta: 1e-1, f: [0.0, 0.0] }
    }
}

/// Which max-operator the weak forms use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxKind {
    Unregularized,
    Regularized,
}

/// Symmetric gradient eps = (grad + grad^T) / 2.
pub fn strain(grad_y: Mat2) -> Mat2 {
    tensor::sym(grad_y)
}

/// Regularized stress law g*gamma*eps / max(g, gamma ||eps||).
pub fn h_gamma(eps: Mat2, p: &PhysicsParams) -> Mat2 {
    let s = p.gamma * tensor::norm(eps);
    tensor::scale(eps, p.g * p.gamma / s.max(p.g))
}

/// C1 smoothing of s -> max(g, s) with a quadratic blend of width 1/delta.
pub fn max_delta(s: f64, p: &PhysicsParams) -> f64 {
    let half = 0.5 / p.delta;
    if s <= p.g - half {
        p.g
    } else if s >= p.g + half {
        s
    } else {
        let r = s - p.g + half;
        p.g + 0.5 * p.delta * r * r
    }
}

/// max(g, s) or its smoothing, per operator kind.
pub fn max_op(s: f64, kind: MaxKind, p: &PhysicsParams) -> f64 {
    match kind {
        MaxKind::Unregularized => s.max(p.g),
        MaxKind::Regularized => max_delta(s, p),
    }
}

/// Stress law with the selected max-operator.
pub fn h_term(eps: Mat2, kind: MaxKind, p: &PhysicsParams) -> Mat2 {
    let s = p.gamma * tensor::norm(eps);
    tensor::scale(eps, p.g * p.gamma / max_op(s, kind, p))
}

/// Gateaux semiderivative of x -> max(0, x) at `x` in direction `v`.
pub fn gateaux_max0(x: f64, v: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x == 0.0 {
        v.max(0.0)
    } else {
        v
    }
}

/// Pointwise branch of the max-quotient derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Rigid regime: the max saturates at g, the quotient is linear.
    Inactive,
    /// Active-set boundary (unregularized) or smoothing band (regularized).
    Boundary,
    /// Flowing regime.
    Active,
}

/// Relative detection tolerance for the measure-zero set g = gamma ||eps||.
pub const EQUALITY_BAND: f64 = 1e-12;

/// Classifies `s = gamma ||eps||` against the yield threshold.
pub fn classify(s: f64, kind: MaxKind, p: &PhysicsParams) -> Branch {
    match kind {
        MaxKind::Unregularized => {
            if (s - p.g).abs() <= EQUALITY_BAND * p.g {
                Branch::Boundary
            } else if s < p.g {
                Branch::Inactive
            } else {
                Branch::Active
            }
        }
        MaxKind::Regularized => {
            let half = 0.5 / p.delta;
            if s <= p.g - half {
                Branch::Inactive
            } else if s >= p.g + half {
                Branch::Active
            } else {
                Branch::Boundary
            }
        }
    }
}

/// Coefficient `k` of the rank-one derivative term
/// `d(eps, eps_hat) = k * (eps : eps_hat) * eps`.
///
/// The unregularized boundary branch is excluded here: it is nonlinear in
/// the direction and is handled separately (it only contributes a constant
/// to the Newton right-hand side, and is zero in the adjoint linearization).
pub fn d_coefficient(s: f64, norm_eps: f64, kind: MaxKind, p: &PhysicsParams) -> f64 {
    match (kind, classify(s, kind, p)) {
        (_, Branch::Inactive) => 0.0,
        (MaxKind::Unregularized, Branch::Boundary) => 0.0,
        (MaxKind::Unregularized, Branch::Active) => p.g / norm_eps.powi(3),
        (MaxKind::Regularized, Branch::Boundary) => {
            let m = max_delta(s, p);
            let half = 0.5 / p.delta;
            p.g * p.gamma * p.gamma * p.delta * (s - p.g + half) / (m * m * norm_eps)
        }
        (MaxKind::Regularized, Branch::Active) => p.g / norm_eps.powi(3),
    }
}

/// Velocity profile for a Dirichlet boundary segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Zero,
    /// `scale * (-4 x2 (x2 - 1), 0)`: unit-peak parabola across the channel.
    Parabola { scale: f64 },
    Constant([f64; 2]),
}

impl Profile {
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        match *self {
            Profile::Zero => [0.0, 0.0],
            Profile::Parabola { scale } => [-4.0 * scale * x[1] * (x[1] - 1.0), 0.0],
            Profile::Constant(v) => v,
        }
    }
}

/// Dirichlet data for the three velocity boundary roles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowBcs {
    pub inflow: Profile,
    pub walls: Profile,
    pub shape: Profile,
}

impl FlowBcs {
    /// Reference experiment: parabolic inflow, no-slip walls and obstacle.
    pub fn channel() -> Self {
        FlowBcs { inflow: Profile::Parabola { scale: 1.0 }, walls: Profile::Zero, shape: Profile::Zero }
    }

    pub fn value(&self, tag: BoundaryTag, x: [f64; 2]) -> [f64; 2] {
        match tag {
            BoundaryTag::Inflow => self.inflow.eval(x),
            BoundaryTag::Walls => self.walls.eval(x),
            BoundaryTag::Shape => self.shape.eval(x),
            BoundaryTag::Outflow => [0.0, 0.0],
        }
    }
}

/// Discrete velocity (P2 vector) and pressure (P1 scalar) coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedField {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl MixedField {
    pub fn zeros(spaces: &Spaces) -> Self {
        MixedField {
            velocity: vec![0.0; spaces.n_velocity()],
            pressure: vec![0.0; spaces.n_pressure],
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.velocity.len() + self.pressure.len()
    }

    /// Overwrites velocity Dirichlet dofs with the boundary data.
    pub fn impose_bcs(&mut self, spaces: &Spaces, bcs: &FlowBcs) {
        for (node, tag) in spaces.velocity_dirichlet_nodes() {
            let v = bcs.value(tag, spaces.p2.positions[node]);
            self.velocity[2 * node] = v[0];
            self.velocity[2 * node + 1] = v[1];
        }
    }

    /// self += alpha * other, over all coefficients.
    pub fn axpy(&mut self, alpha: f64, other: &MixedField) {
        for (a, b) in self.velocity.iter_mut().zip(&other.velocity) {
            *a += alpha * b;
        }
        for (a, b) in self.pressure.iter_mut().zip(&other.pressure) {
            *a += alpha * b;
        }
    }

    /// Concatenated-coefficient vector copied from a mixed-system solution.
    pub fn from_mixed_vector(spaces: &Spaces, x: &[f64]) -> Self {
        let nv = spaces.n_velocity();
        MixedField { velocity: x[..nv].to_vec(), pressure: x[nv..].to_vec() }
    }

    pub fn l1_norm(&self) -> f64 {
        self.velocity.iter().chain(&self.pressure).map(|v| v.abs()).sum()
    }
}

/// Per-iteration record of a Newton solve.
#[derive(Debug, Clone, Default)]
pub struct NewtonReport {
    /// Residual norm before each step.
    pub residual_norms: Vec<f64>,
    /// Accepted step size of each iteration.
    pub step_sizes: Vec<f64>,
    /// l1 norm of each (unscaled) update.
    pub update_norms: Vec<f64>,
    /// Residual norm after the last accepted step.
    pub final_residual: f64,
    pub converged: bool,
}

impl NewtonReport {
    pub fn iterations(&self) -> usize {
        self.step_sizes.len()
    }
}

/// Options controlling the Newton iteration.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Stop when the update l1 norm falls below this.
    pub eps: f64,
    /// Armijo sufficient-decrease control parameter.
    pub beta: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { eps: 1e-6, beta: 1e-4, max_iterations: 200 }
    }
}

/// Reference basis data cached per quadrature point.
struct QpBasis {
    qp: QuadPoint,
    phi: [f64; 6],
    gphi_ref: [[f64; 2]; 6],
    psi: [f64; 3],
}

fn qp_basis(degree: usize) -> Result<Vec<QpBasis>> {
    Ok(quadrature(degree)?
        .iter()
        .map(|&qp| {
            let (phi, gphi_ref) = p2_basis(qp.xy);
            let (psi, _) = p1_basis(qp.xy);
            QpBasis { qp, phi, gphi_ref, psi }
        })
        .collect())
}

/// Pointwise state values at a quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct QpState {
    pub y: [f64; 2],
    pub grad_y: Mat2,
    pub eps_y: Mat2,
    pub p: f64,
}

fn gather_velocity(spaces: &Spaces, cell: usize, field: &MixedField) -> [f64; 12] {
    let nodes = spaces.p2.cell_nodes[cell];
    let mut local = [0.0; 12];
    for (a, &node) in nodes.iter().enumerate() {
        local[2 * a] = field.velocity[2 * node];
        local[2 * a + 1] = field.velocity[2 * node + 1];
    }
    local
}

fn gather_pressure(mesh: &TriangleMesh, cell: usize, field: &MixedField) -> [f64; 3] {
    let verts = mesh.cell(cell);
    [field.pressure[verts[0]], field.pressure[verts[1]], field.pressure[verts[2]]]
}

fn eval_qp_state(
    local_v: &[f64; 12],
    local_p: &[f64; 3],
    phi: &[f64; 6],
    gphi: &[[f64; 2]; 6],
    psi: &[f64; 3],
) -> QpState {
    let mut y = [0.0; 2];
    let mut grad = tensor::ZERO;
    for a in 0..6 {
        for c in 0..2 {
            let coef = local_v[2 * a + c];
            y[c] += coef * phi[a];
            grad[c][0] += coef * gphi[a][0];
            grad[c][1] += coef * gphi[a][1];
        }
    }
    let p = local_p[0] * psi[0] + local_p[1] * psi[1] + local_p[2] * psi[2];
    QpState { y, grad_y: grad, eps_y: tensor::sym(grad), p }
}

/// Strain tensor of the trial/test function `phi_a e_c`.
fn basis_strain(gphi_a: [f64; 2], c: usize) -> Mat2 {
    let mut e = tensor::ZERO;
    for b in 0..2 {
        e[c][b] += 0.5 * gphi_a[b];
        e[b][c] += 0.5 * gphi_a[b];
    }
    e
}

fn velocity_dirichlet_constraints(
    spaces: &Spaces,
    bcs: &FlowBcs,
    homogeneous: bool,
) -> Vec<(usize, f64)> {
    let mut constraints = Vec::new();
    for (node, tag) in spaces.velocity_dirichlet_nodes() {
        let v = if homogeneous {
            [0.0, 0.0]
        } else {
            bcs.value(tag, spaces.p2.positions[node])
        };
        constraints.push((2 * node, v[0]));
        constraints.push((2 * node + 1, v[1]));
    }
    constraints
}

/// Weak residual of the state equation at `state`, as a vector over all
/// test dofs. Velocity Dirichlet test rows are zeroed.
pub fn assemble_residual(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    params: &PhysicsParams,
    kind: MaxKind,
) -> Result<Vec<f64>> {
    let basis = qp_basis(DEFAULT_DEGREE)?;
    let mut r = vec![0.0; spaces.n_mixed()];

    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let nodes = spaces.p2.cell_nodes[cell];
        let verts = mesh.cell(cell);
        let local_v = gather_velocity(spaces, cell, state);
        let local_p = gather_pressure(mesh, cell, state);

        for qb in &basis {
            let mut gphi = [[0.0; 2]; 6];
            for a in 0..6 {
                gphi[a] = geom.phys_grad(qb.gphi_ref[a]);
            }
            let st = eval_qp_state(&local_v, &local_p, &qb.phi, &gphi, &qb.psi);
            let w = qb.qp.w * geom.det_j;
            let div_y = tensor::trace(st.grad_y);
            let conv = tensor::matvec(st.grad_y, st.y); // (y . grad) y
            let stress = tensor::add(tensor::scale(st.eps_y, 2.0 * params.mu), h_term(st.eps_y, kind, params));

            for a in 0..6 {
                for c in 0..2 {
                    let e_test = basis_strain(gphi[a], c);
                    let mut val = tensor::ddot(stress, e_test);
                    val += params.rho * conv[c] * qb.phi[a];
                    val -= st.p * gphi[a][c];
                    val -= params.f[c] * qb.phi[a];
                    r[2 * nodes[a] + c] += w * val;
                }
            }
            for (k, &vertex) in verts.iter().enumerate() {
                r[spaces.pressure_dof(vertex)] += w * qb.psi[k] * div_y;
            }
        }
    }

    for (node, _) in spaces.velocity_dirichlet_nodes() {
        r[2 * node] = 0.0;
        r[2 * node + 1] = 0.0;
    }
    Ok(r)
}

/// Which equation the linearized operator serves.
///
/// The update equations print the exact `max` in the `g gamma / m` quotient
/// for both models (only the rank-one branch term is smoothed), while the
/// smoothed adjoint equation carries `max_delta` there; for the
/// unregularized model the two coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearizedForm {
    Newton,
    Adjoint,
}

/// Assembles the linearization of the state residual around `state`.
///
/// The matrix contains every direction-linear term of the generalized
/// derivative: viscous, convective, pressure/divergence coupling, the
/// `g gamma / m` quotient and the rank-one branch term with coefficient
/// [`d_coefficient`]. It is shared by the Newton step (where the
/// unregularized boundary branch additionally feeds the right-hand side)
/// and, transposed, by the adjoint system.
pub fn assemble_linearized_matrix(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    params: &PhysicsParams,
    kind: MaxKind,
    form: LinearizedForm,
) -> Result<CooMatrix> {
    let basis = qp_basis(DEFAULT_DEGREE)?;
    let n = spaces.n_mixed();
    let mut coo = CooMatrix::with_capacity(n, n, 225 * mesh.num_cells() * basis.len() / 2);

    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let nodes = spaces.p2.cell_nodes[cell];
        let verts = mesh.cell(cell);
        let local_v = gather_velocity(spaces, cell, state);
        let local_p = gather_pressure(mesh, cell, state);

        let mut local = [[0.0f64; 15]; 15]; // 12 velocity + 3 pressure dofs
        for qb in &basis {
            let mut gphi = [[0.0; 2]; 6];
            for a in 0..6 {
                gphi[a] = geom.phys_grad(qb.gphi_ref[a]);
            }
            let st = eval_qp_state(&local_v, &local_p, &qb.phi, &gphi, &qb.psi);
            let w = qb.qp.w * geom.det_j;
            let norm_eps = tensor::norm(st.eps_y);
            let s = params.gamma * norm_eps;
            let quot_m = match form {
                LinearizedForm::Newton => s.max(params.g),
                LinearizedForm::Adjoint => max_op(s, kind, params),
            };
            let quot = params.g * params.gamma / quot_m;
            let dcoef = if norm_eps > 0.0 { d_coefficient(s, norm_eps, kind, params) } else { 0.0 };

            // Strain tensors and eps_y contractions of all velocity dofs.
            let mut e = [[tensor::ZERO; 2]; 6];
            let mut eps_dot = [[0.0f64; 2]; 6];
            for a in 0..6 {
                for c in 0..2 {
                    e[a][c] = basis_strain(gphi[a], c);
                    eps_dot[a][c] = tensor::ddot(st.eps_y, e[a][c]);
                }
            }
            let y_dot_gphi: Vec<f64> = (0..6).map(|a| tensor::dot(st.y, gphi[a])).collect();

            for i in 0..6 {
                for d in 0..2 {
                    let row = 2 * i + d;
                    for j in 0..6 {
                        for c in 0..2 {
                            let col = 2 * j + c;
                            let mut val = (2.0 * params.mu + quot) * tensor::ddot(e[j][c], e[i][d]);
                            val -= dcoef * eps_dot[j][c] * eps_dot[i][d];
                            // rho ((y_hat . grad) y) . y_tilde
                            val += params.rho * qb.phi[j] * st.grad_y[d][c] * qb.phi[i];
                            // rho ((y . grad) y_hat) . y_tilde
                            if c == d {
                                val += params.rho * y_dot_gphi[j] * qb.phi[i];
                            }
                            local[row][col] += w * val;
                        }
                    }
                    for k in 0..3 {
                        // -p_hat div(y_tilde)
                        local[row][12 + k] -= w * qb.psi[k] * gphi[i][d];
                    }
                }
            }
            for k in 0..3 {
                for j in 0..6 {
                    for c in 0..2 {
                        // +p_tilde div(y_hat)
                        local[12 + k][2 * j + c] += w * qb.psi[k] * gphi[j][c];
                    }
                }
            }
        }

        let dof_of = |l: usize| -> usize {
            if l < 12 {
                2 * nodes[l / 2] + (l % 2)
            } else {
                spaces.pressure_dof(verts[l - 12])
            }
        };
        for (li, row) in local.iter().enumerate() {
            let gi = dof_of(li);
            for (lj, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    coo.push(gi, dof_of(lj), v);
                }
            }
        }
    }
    Ok(coo)
}

/// Right-hand-side contribution of the measure-zero boundary branch of the
/// semismooth derivative: `int d_boundary(eps(y), eps(prev_update)) : eps(test)`.
///
/// Nonzero only where `gamma ||eps||` hits the threshold exactly (within
/// [`EQUALITY_BAND`]); uses [`gateaux_max0`] of the contraction with the
/// previous Newton update.
fn boundary_branch_rhs(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    prev_update: &MixedField,
    params: &PhysicsParams,
) -> Result<Vec<f64>> {
    let basis = qp_basis(DEFAULT_DEGREE)?;
    let mut rhs = vec![0.0; spaces.n_mixed()];
    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let nodes = spaces.p2.cell_nodes[cell];
        let local_v = gather_velocity(spaces, cell, state);
        let local_p = gather_pressure(mesh, cell, state);
        let local_prev = gather_velocity(spaces, cell, prev_update);

        for qb in &basis {
            let mut gphi = [[0.0; 2]; 6];
            for a in 0..6 {
                gphi[a] = geom.phys_grad(qb.gphi_ref[a]);
            }
            let st = eval_qp_state(&local_v, &local_p, &qb.phi, &gphi, &qb.psi);
            let norm_eps = tensor::norm(st.eps_y);
            let s = params.gamma * norm_eps;
            if classify(s, MaxKind::Unregularized, params) != Branch::Boundary || norm_eps == 0.0 {
                continue;
            }
            let prev = eval_qp_state(&local_prev, &[0.0; 3], &qb.phi, &gphi, &qb.psi);
            let contraction = tensor::ddot(st.eps_y, prev.eps_y);
            let d_const = tensor::scale(
                st.eps_y,
                params.g * gateaux_max0(0.0, contraction) / norm_eps.powi(3),
            );
            let w = qb.qp.w * geom.det_j;
            for a in 0..6 {
                for c in 0..2 {
                    rhs[2 * nodes[a] + c] +=
                        w * tensor::ddot(d_const, basis_strain(gphi[a], c));
                }
            }
        }
    }
    Ok(rhs)
}

/// Builds the Newton-step system for the update `(y_hat, p_hat)`:
/// linearized matrix, right-hand side `-R` (plus the boundary-branch
/// correction in the unregularized case), homogeneous Dirichlet rows.
pub fn assemble_newton_system(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    prev_update: Option<&MixedField>,
    params: &PhysicsParams,
    kind: MaxKind,
    bcs: &FlowBcs,
) -> Result<SparseSystem> {
    let matrix =
        assemble_linearized_matrix(mesh, spaces, state, params, kind, LinearizedForm::Newton)?;
    let residual = assemble_residual(mesh, spaces, state, params, kind)?;
    let mut rhs: Vec<f64> = residual.iter().map(|v| -v).collect();
    if kind == MaxKind::Unregularized {
        if let Some(prev) = prev_update {
            let correction = boundary_branch_rhs(mesh, spaces, state, prev, params)?;
            for (r, c) in rhs.iter_mut().zip(&correction) {
                *r += c;
            }
        }
    }
    Ok(SparseSystem {
        matrix,
        rhs,
        constraints: velocity_dirichlet_constraints(spaces, bcs, true),
        dirichlet_applied: false,
    })
}

/// Linear Stokes initializer (full-gradient viscous form).
///
/// The gradient form makes the do-nothing outflow condition exact for the
/// channel parabola, so the discrete solution reproduces it to solver
/// precision; the Bingham residual itself always uses the symmetric form.
pub fn solve_stokes_initial(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    params: &PhysicsParams,
    bcs: &FlowBcs,
) -> Result<MixedField> {
    let basis = qp_basis(4)?;
    let n = spaces.n_mixed();
    let mut sys = SparseSystem::new(n);

    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let nodes = spaces.p2.cell_nodes[cell];
        let verts = mesh.cell(cell);
        for qb in &basis {
            let mut gphi = [[0.0; 2]; 6];
            for a in 0..6 {
                gphi[a] = geom.phys_grad(qb.gphi_ref[a]);
            }
            let w = qb.qp.w * geom.det_j;
            for i in 0..6 {
                for d in 0..2 {
                    let row = 2 * nodes[i] + d;
                    for j in 0..6 {
                        // mu grad(y) : grad(y_tilde), diagonal in components
                        let val = params.mu * tensor::dot(gphi[j], gphi[i]);
                        sys.matrix.push(row, 2 * nodes[j] + d, w * val);
                    }
                    for (k, &vertex) in verts.iter().enumerate() {
                        sys.matrix.push(row, spaces.pressure_dof(vertex), -w * qb.psi[k] * gphi[i][d]);
                        sys.matrix.push(spaces.pressure_dof(vertex), row, w * qb.psi[k] * gphi[i][d]);
                    }
                    sys.rhs[row] += w * params.f[d] * qb.phi[i];
                }
            }
        }
    }

    sys.constraints = velocity_dirichlet_constraints(spaces, bcs, false);
    let solved = solve_linear(&apply_dirichlet(sys)?)?;
    Ok(MixedField::from_mixed_vector(spaces, &solved))
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped (semismooth) Newton iteration for the state equation.
///
/// Steps start at the full Newton step and are halved until the merit
/// `||R||^2` satisfies the sufficient-decrease test
/// `||R(x + a d)||^2 <= (1 - 2 beta a) ||R(x)||^2`. The iteration stops
/// when the l1 norm of the concatenated update coefficients drops below
/// `opts.eps`.
pub fn solve_state(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    params: &PhysicsParams,
    bcs: &FlowBcs,
    initial: &MixedField,
    kind: MaxKind,
    opts: &NewtonOptions,
) -> Result<(MixedField, NewtonReport)> {
    const ALPHA_MIN: f64 = 1.0 / ((1u64 << 30) as f64);

    let mut state = initial.clone();
    state.impose_bcs(spaces, bcs);
    let mut prev_update = MixedField::zeros(spaces);
    let mut report = NewtonReport::default();

    let mut res_norm = l2_norm(&assemble_residual(mesh, spaces, &state, params, kind)?);

    for _ in 0..opts.max_iterations {
        report.residual_norms.push(res_norm);

        let sys = assemble_newton_system(mesh, spaces, &state, Some(&prev_update), params, kind, bcs)?;
        let update_vec = solve_linear(&apply_dirichlet(sys)?)?;
        let update = MixedField::from_mixed_vector(spaces, &update_vec);
        let update_l1 = update.l1_norm();

        // Armijo backtracking on the residual merit.
        let mut alpha = 1.0;
        let (accepted, new_norm) = loop {
            let mut trial = state.clone();
            trial.axpy(alpha, &update);
            let r_trial = assemble_residual(mesh, spaces, &trial, params, kind)?;
            let n_trial = l2_norm(&r_trial);
            if n_trial * n_trial <= (1.0 - 2.0 * opts.beta * alpha) * res_norm * res_norm {
                break (trial, n_trial);
            }
            alpha *= 0.5;
            if alpha < ALPHA_MIN {
                report.final_residual = res_norm;
                return Err(Error::NewtonFailed {
                    report: Box::new(report),
                    reason: format!("step size underflow below {ALPHA_MIN:.2e}"),
                });
            }
        };

        state = accepted;
        res_norm = new_norm;
        prev_update = update;
        report.step_sizes.push(alpha);
        report.update_norms.push(update_l1);

        if update_l1 < opts.eps {
            report.converged = true;
            report.final_residual = res_norm;
            return Ok((state, report));
        }
    }

    report.final_residual = res_norm;
    Err(Error::NewtonFailed {
        report: Box::new(report),
        reason: format!("iteration cap {} exceeded", opts.max_iterations),
    })
}

/// Viscous dissipation objective `int mu/2 grad(y) : grad(y)`.
pub fn dissipation(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    params: &PhysicsParams,
) -> Result<f64> {
    let basis = qp_basis(4)?;
    let mut j = 0.0;
    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let local_v = gather_velocity(spaces, cell, state);
        let local_p = [0.0; 3];
        for qb in &basis {
            let mut gphi = [[0.0; 2]; 6];
            for a in 0..6 {
                gphi[a] = geom.phys_grad(qb.gphi_ref[a]);
            }
            let st = eval_qp_state(&local_v, &local_p, &qb.phi, &gphi, &qb.psi);
            j += qb.qp.w * geom.det_j * 0.5 * params.mu * tensor::ddot(st.grad_y, st.grad_y);
        }
    }
    Ok(j)
}

/// Per-cell quadrature average of the yield indicator `gamma ||eps(y)|| - g`.
///
/// Positive cells flow, negative cells are rigid.
pub fn active_set_indicator(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    params: &PhysicsParams,
) -> Result<Vec<f64>> {
    let basis = qp_basis(DEFAULT_DEGREE)?;
    let wsum: f64 = basis.iter().map(|qb| qb.qp.w).sum();
    let mut out = Vec::with_capacity(mesh.num_cells());
    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let local_v = gather_velocity(spaces, cell, state);
        let local_p = [0.0; 3];
        let mut acc = 0.0;
        for qb in &basis {
            let mut gphi = [[0.0; 2]; 6];
            for a in 0..6 {
                gphi[a] = geom.phys_grad(qb.gphi_ref[a]);
            }
            let st = eval_qp_state(&local_v, &local_p, &qb.phi, &gphi, &qb.psi);
            acc += qb.qp.w * (params.gamma * tensor::norm(st.eps_y) - params.g);
        }
        out.push(acc / wsum);
    }
    Ok(out)
}

/// Evaluates the residual functional against a test pair: `R . (y~, p~)`.
pub fn residual_against(residual: &[f64], test: &MixedField, spaces: &Spaces) -> f64 {
    let nv = spaces.n_velocity();
    let mut acc = 0.0;
    for (i, v) in test.velocity.iter().enumerate() {
        acc += residual[i] * v;
    }
    for (i, p) in test.pressure.iter().enumerate() {
        acc += residual[nv + i] * p;
    }
    acc
}
