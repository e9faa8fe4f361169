use super::*;
use crate::mesh::channel_mesh;

fn settings() -> RunSettings {
    let mut cfg = RunConfig::default();
    cfg.inner_iterations = 3;
    cfg.outer_iterations = 1;
    RunSettings::from_config(&cfg).unwrap()
}

fn coarse_mesh() -> TriangleMesh {
    channel_mesh(10, [0.3, 0.4, 0.4, 0.5]).unwrap().into_mesh().unwrap()
}

fn solved_state(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    s: &RunSettings,
) -> (MixedField, MixedField) {
    let initial = solve_stokes_initial(mesh, spaces, &s.params, &s.bcs).unwrap();
    let (state, _) = solve_state(
        mesh,
        spaces,
        &s.params,
        &s.bcs,
        &initial,
        MaxKind::Unregularized,
        &s.newton,
    )
    .unwrap();
    let adjoint =
        solve_adjoint(mesh, spaces, &state, &s.params, MaxKind::Unregularized, s.stale_tol())
            .unwrap();
    (state, adjoint)
}

#[test]
fn auglag_update_rules() {
    let targets = GeometricTargets { volume: 0.04, barycenter: [0.3, 0.45], perimeter: 0.76 };
    let mut a = AugLagState::new([0.0; 4], 1e5, targets, 0.9, 2.0).unwrap();
    a.c1 = 0.5;

    // Zero constraints: multipliers and penalty unchanged.
    a.update_outer([0.0; 4]);
    assert_eq!(a.lambda, [0.0; 4]);
    assert_eq!(a.nu(), 1e5);

    // Stagnating constraints (>= tau * c1): penalty doubles, multipliers move.
    a.c1 = 0.5;
    a.update_outer([0.5, 0.0, 0.0, 0.0]);
    assert_eq!(a.lambda[0], -0.5 * 1e5);
    assert_eq!(a.nu(), 2e5);

    // Decreasing constraints (< tau * c1): penalty held.
    a.c1 = 0.5;
    a.update_outer([0.1, 0.0, 0.0, 0.0]);
    assert_eq!(a.nu(), 2e5);
}

#[test]
fn l_a_value_decomposition() {
    let s = settings();
    let mesh = coarse_mesh();
    let spaces = Spaces::build(&mesh);
    let (state, adjoint) = solved_state(&mesh, &spaces, &s);
    let shape = mesh.shape_required().unwrap();

    // Targets equal to the current shape: geometric terms vanish and the
    // value reduces to J plus the solver-tolerance residual term.
    let vol = mesh.volume(shape).unwrap();
    let bary = mesh.barycenter(shape).unwrap();
    let peri = mesh.perimeter(shape);
    let met = AugLagState::new(
        [0.0; 4],
        1e5,
        GeometricTargets { volume: vol, barycenter: bary, perimeter: peri },
        0.9,
        2.0,
    )
    .unwrap();
    let j = dissipation(&mesh, &spaces, &state, &s.params).unwrap();
    let l = evaluate_l_a(
        &mesh, &spaces, &state, Some(&adjoint), &s.params, &met, MaxKind::Unregularized,
        s.stale_tol(),
    )
    .unwrap();
    assert!((l - j).abs() < 1e-4 * j.abs().max(1.0), "L_A = {l}, J = {j}");

    // Doubling nu doubles the penalty part (lambda = 0, c != 0).
    let far = AugLagState::new([0.0; 4], 1e5, s.targets, 0.9, 2.0).unwrap();
    let far2 = AugLagState::new([0.0; 4], 2e5, s.targets, 0.9, 2.0).unwrap();
    let l1 = evaluate_l_a(
        &mesh, &spaces, &state, Some(&adjoint), &s.params, &far, MaxKind::Unregularized,
        s.stale_tol(),
    )
    .unwrap();
    let l2 = evaluate_l_a(
        &mesh, &spaces, &state, Some(&adjoint), &s.params, &far2, MaxKind::Unregularized,
        s.stale_tol(),
    )
    .unwrap();
    let base = l - 0.0; // J + residual term
    assert!(((l2 - base) - 2.0 * (l1 - base)).abs() < 1e-6 * (l1 - base).abs());
}

#[test]
fn l_a_zero_flow_is_pure_penalty() {
    let s = settings();
    let mesh = coarse_mesh();
    let spaces = Spaces::build(&mesh);
    let mut quiet = s.clone();
    quiet.bcs = FlowBcs {
        inflow: crate::bingham::Profile::Zero,
        walls: crate::bingham::Profile::Zero,
        shape: crate::bingham::Profile::Zero,
    };
    let state = MixedField::zeros(&spaces);
    let auglag = AugLagState::new([1.0, 2.0, 3.0, 4.0], 1e3, s.targets, 0.9, 2.0).unwrap();
    let l = evaluate_l_a(
        &mesh, &spaces, &state, None, &quiet.params, &auglag, MaxKind::Unregularized,
        quiet.stale_tol(),
    )
    .unwrap();
    let shape = mesh.shape_required().unwrap();
    let c = mesh.constraint_vector(shape, &auglag.targets).unwrap();
    let expect = -auglag.lambda.iter().zip(c).map(|(l, ci)| l * ci).sum::<f64>()
        + 0.5 * auglag.nu() * c.iter().map(|v| v * v).sum::<f64>();
    assert!((l - expect).abs() < 1e-12 * expect.abs().max(1.0));
}

#[test]
fn armijo_rejects_non_descent_directions() {
    let s = settings();
    let mesh = coarse_mesh();
    let spaces = Spaces::build(&mesh);
    let (state, adjoint) = solved_state(&mesh, &spaces, &s);
    let auglag = AugLagState::new([0.0; 4], 1e5, s.targets, 0.9, 2.0).unwrap();
    let l_base = evaluate_l_a(
        &mesh, &spaces, &state, Some(&adjoint), &s.params, &auglag, MaxKind::Unregularized,
        s.stale_tol(),
    )
    .unwrap();

    // V = 0 has no predicted decrease: immediate failure signal.
    let zero = vec![[0.0, 0.0]; mesh.num_vertices()];
    let out = armijo_shape_step(
        &mesh, &zero, 0.0, l_base, &state, &adjoint, &auglag, &s, MaxKind::Unregularized,
    )
    .unwrap();
    assert!(out.is_none());
}

#[test]
fn armijo_halves_past_inverting_steps() {
    let s = settings();
    let mesh = coarse_mesh();
    let spaces = Spaces::build(&mesh);
    let (state, adjoint) = solved_state(&mesh, &spaces, &s);
    let auglag = AugLagState::new([0.0; 4], 1e5, s.targets, 0.9, 2.0).unwrap();
    let l_base = evaluate_l_a(
        &mesh, &spaces, &state, Some(&adjoint), &s.params, &auglag, MaxKind::Unregularized,
        s.stale_tol(),
    )
    .unwrap();

    let dl = crate::shape_gradient::assemble_shape_derivative(
        &mesh, &spaces, &state, &adjoint, &s.params, &auglag, MaxKind::Unregularized,
        s.stale_tol(),
    )
    .unwrap();
    let mu = interpolate_mu_hat(&mesh, s.mu_hat_shape, s.mu_hat_outer).unwrap();
    let field = solve_deformation(&mesh, &dl, &mu).unwrap();

    // Scale the direction so the first trials invert the mesh.
    let h = 0.1; // mesh size
    let max_v = field.v.iter().fold(0.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
    let factor = 4.0 * h / (s.t_max * max_v);
    let aggressive: Vec<[f64; 2]> =
        field.v.iter().map(|v| [v[0] * factor, v[1] * factor]).collect();
    let dl_v = dl.apply(&aggressive);
    assert!(dl_v < 0.0);
    assert!(mesh.deform(&aggressive, s.t_max).is_err(), "t_max step should invert");

    let out = armijo_shape_step(
        &mesh, &aggressive, dl_v, l_base, &state, &adjoint, &auglag, &s,
        MaxKind::Unregularized,
    )
    .unwrap();
    let step = out.expect("a shorter step should be accepted");
    assert!(step.t < s.t_max);
}

#[test]
fn smoke_run_decreases_l_a() {
    let mut cfg = RunConfig::default();
    cfg.inner_iterations = 5;
    cfg.outer_iterations = 1;
    let s = RunSettings::from_config(&cfg).unwrap();
    let outcome = run(coarse_mesh(), &s, RunHooks::default()).unwrap();
    assert_eq!(outcome.trace.status, RunStatus::Completed);
    assert_eq!(outcome.trace.rows.len(), 5);
    for pair in outcome.trace.rows.windows(2) {
        assert!(
            pair[1].l_a <= pair[0].l_a + 1e-9 * pair[0].l_a.abs(),
            "L_A increased: {} -> {}",
            pair[0].l_a,
            pair[1].l_a
        );
    }
    assert!(outcome.trace.rows.iter().all(|r| !r.safeguard));
    assert!(outcome.trace.rows.iter().all(|r| r.t > 0.0));
}

#[test]
fn fault_injection_activates_safeguard() {
    let mut cfg = RunConfig::default();
    cfg.inner_iterations = 1;
    cfg.outer_iterations = 1;
    let s = RunSettings::from_config(&cfg).unwrap();
    let hooks = RunHooks {
        override_direction: Some(Box::new(|iter, v: &mut Vec<[f64; 2]>| {
            if iter == 0 {
                for d in v.iter_mut() {
                    d[0] = -d[0];
                    d[1] = -d[1];
                }
            }
        })),
    };
    let outcome = run(coarse_mesh(), &s, hooks).unwrap();
    assert_eq!(outcome.trace.status, RunStatus::Completed);
    assert_eq!(outcome.trace.rows.len(), 1);
    let row = &outcome.trace.rows[0];
    assert!(row.safeguard, "safeguard should have engaged");
    assert!(row.t > 0.0, "safeguard step should be accepted");
}

#[test]
fn identical_runs_produce_identical_traces() {
    let mut cfg = RunConfig::default();
    cfg.inner_iterations = 3;
    cfg.outer_iterations = 1;
    let s = RunSettings::from_config(&cfg).unwrap();
    let a = run(coarse_mesh(), &s, RunHooks::default()).unwrap();
    let b = run(coarse_mesh(), &s, RunHooks::default()).unwrap();
    assert_eq!(a.trace.rows.len(), b.trace.rows.len());
    for (ra, rb) in a.trace.rows.iter().zip(&b.trace.rows) {
        assert_eq!(ra.l_a.to_bits(), rb.l_a.to_bits());
        assert_eq!(ra.c_norm.to_bits(), rb.c_norm.to_bits());
        assert_eq!(ra.v_h1.to_bits(), rb.v_h1.to_bits());
        assert_eq!(ra.t.to_bits(), rb.t.to_bits());
        assert_eq!(ra.newton_iters, rb.newton_iters);
    }
}
