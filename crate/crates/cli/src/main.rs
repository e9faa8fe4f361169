//! Command-line driver: shape optimization runs, gradient checks and
//! state-only solves for viscoplastic channel flow.
//!
//! Exit codes: 0 on success, 1 on configuration/input errors, 2 when a
//! solver or check does not converge.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use viscoshape::bingham::{solve_state, solve_stokes_initial};
use viscoshape::gradcheck::{directional_check, shape_supported_direction};
use viscoshape::mesh::{channel_mesh, load_msh, unit_square_mesh};
use viscoshape::optimizer::{run, AugLagState, RunHooks, RunSettings, RunStatus};
use viscoshape::{adjoint, Error, MaxKind, NewtonOptions, RunConfig, TriangleMesh};
use viscoshape_cli::{
    output_dir, write_fields, write_newton_report, write_outer_trace, write_raw_coefficients,
    write_trace,
};

#[derive(Parser)]
#[command(name = "viscoshape", about = "Shape optimization for viscoplastic channel flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full augmented-Lagrangian shape optimization.
    Run {
        /// Path to a `key = value` configuration file.
        config: PathBuf,
    },
    /// Compare the assembled shape derivative against finite differences.
    CheckGradient {
        config: PathBuf,
        /// Number of random boundary-supported probe directions.
        #[arg(long, default_value_t = 10)]
        directions: usize,
        /// Relative-error tolerance for the pass/fail verdict.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Solve the state equation once and emit the Newton iteration report.
    SolveState {
        config: PathBuf,
    },
    /// Generate a structured channel mesh (MSH 2.2 ASCII).
    MakeMesh {
        output: PathBuf,
        /// Grid resolution (cells per unit length).
        #[arg(long, default_value_t = 20)]
        resolution: usize,
        /// Obstacle rectangle `xmin,ymin,xmax,ymax`; must align with the grid.
        #[arg(long, default_value = "0.25,0.40,0.35,0.50")]
        hole: String,
        /// Generate an empty channel without an obstacle.
        #[arg(long, default_value_t = false)]
        no_hole: bool,
    },
}

fn load_inputs(config: &Path) -> Result<(RunConfig, TriangleMesh), Error> {
    let cfg = RunConfig::load(config)?;
    let mesh_path = config
        .parent()
        .map(|dir| dir.join(&cfg.mesh_path))
        .unwrap_or_else(|| PathBuf::from(&cfg.mesh_path));
    let mesh = load_msh(&mesh_path, &cfg.tag_map())?;
    Ok((cfg, mesh))
}

fn cmd_run(config: &Path) -> Result<u8, Error> {
    let (cfg, mesh) = load_inputs(config)?;
    let settings = RunSettings::from_config(&cfg)?;
    let out_dir = output_dir(&cfg.output_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;

    let outcome = run(mesh, &settings, RunHooks::default())?;
    if cfg.emit_trace {
        write_trace(&outcome.trace, &out_dir.join("trace.csv"))?;
        write_outer_trace(&outcome.trace, &out_dir.join("outer.csv"))?;
    }
    if cfg.emit_fields {
        write_fields(
            &outcome.mesh,
            &outcome.spaces,
            &outcome.state,
            &settings.params,
            &out_dir.join("fields.vtk"),
        )?;
        write_raw_coefficients(&outcome.spaces, &outcome.state, &out_dir.join("fields_raw.csv"))?;
        std::fs::write(out_dir.join("final_mesh.msh"), mesh_msh_text(&outcome.mesh)).map_err(
            |e| Error::Io { path: out_dir.display().to_string(), source: e },
        )?;
    }

    let last = outcome.trace.rows.last();
    println!(
        "status: {:?}; inner iterations: {}; final L_A: {}; final |c|: {}",
        outcome.trace.status,
        outcome.trace.rows.len(),
        last.map(|r| r.l_a).unwrap_or(f64::NAN),
        last.map(|r| r.c_norm).unwrap_or(f64::NAN),
    );
    Ok(match outcome.trace.status {
        RunStatus::Completed | RunStatus::ConstraintConverged => 0,
        _ => 2,
    })
}

fn mesh_msh_text(mesh: &TriangleMesh) -> String {
    let facets: Vec<_> = mesh
        .boundary_facets()
        .iter()
        .map(|f| (f.vertices, f.tag))
        .collect();
    viscoshape::mesh::to_msh_string(mesh.vertices(), mesh.cells(), &facets)
}

fn cmd_check_gradient(config: &Path, directions: usize, tolerance: f64) -> Result<u8, Error> {
    let (cfg, mesh) = load_inputs(config)?;
    let settings = RunSettings::from_config(&cfg)?;
    // Tight solves keep finite-difference noise below the tolerance; the
    // check always runs the smoothed model, where the functional is
    // differentiable.
    let newton = NewtonOptions {
        eps: settings.newton.eps.min(1e-10),
        ..settings.newton
    };
    let spaces = viscoshape::fem::Spaces::build(&mesh);
    let initial = solve_stokes_initial(&mesh, &spaces, &settings.params, &settings.bcs)?;
    let (state, _) = solve_state(
        &mesh,
        &spaces,
        &settings.params,
        &settings.bcs,
        &initial,
        MaxKind::Regularized,
        &newton,
    )?;
    let adj = adjoint::solve_adjoint(
        &mesh,
        &spaces,
        &state,
        &settings.params,
        MaxKind::Regularized,
        100.0 * newton.eps,
    )?;
    let auglag =
        AugLagState::new(settings.lambda0, settings.nu0, settings.targets, settings.tau, settings.xi)?;

    println!("direction,predicted,finite_difference,rel_error,verdict");
    let mut all_ok = true;
    for k in 0..directions {
        let probe = shape_supported_direction(&mesh, k as u64 + 1)?;
        let check = directional_check(
            &mesh,
            &spaces,
            &state,
            &adj,
            &settings.params,
            &settings.bcs,
            &auglag,
            MaxKind::Regularized,
            &probe,
            1e-7,
            &newton,
        )?;
        let ok = check.rel_error <= tolerance;
        all_ok &= ok;
        println!(
            "{k},{},{},{},{}",
            check.predicted,
            check.finite_difference,
            check.rel_error,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    Ok(if all_ok { 0 } else { 2 })
}

fn cmd_solve_state(config: &Path) -> Result<u8, Error> {
    let (cfg, mesh) = load_inputs(config)?;
    let settings = RunSettings::from_config(&cfg)?;
    let kind = match cfg.mode {
        viscoshape::RunMode::Regularized => MaxKind::Regularized,
        viscoshape::RunMode::UnregularizedWithSafeguard => MaxKind::Unregularized,
    };
    let out_dir = output_dir(&cfg.output_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;

    let spaces = viscoshape::fem::Spaces::build(&mesh);
    let initial = solve_stokes_initial(&mesh, &spaces, &settings.params, &settings.bcs)?;
    let solved = solve_state(
        &mesh,
        &spaces,
        &settings.params,
        &settings.bcs,
        &initial,
        kind,
        &settings.newton,
    );
    match solved {
        Ok((state, report)) => {
            write_newton_report(&report, &out_dir.join("newton_report.csv"))?;
            if cfg.emit_fields {
                write_fields(&mesh, &spaces, &state, &settings.params, &out_dir.join("fields.vtk"))?;
                write_raw_coefficients(&spaces, &state, &out_dir.join("fields_raw.csv"))?;
            }
            println!(
                "converged in {} iterations, final residual {}",
                report.iterations(),
                report.final_residual
            );
            Ok(0)
        }
        Err(Error::NewtonFailed { report, reason }) => {
            write_newton_report(&report, &out_dir.join("newton_report.csv"))?;
            eprintln!("state solve failed: {reason}");
            Ok(2)
        }
        Err(other) => Err(other),
    }
}

fn cmd_make_mesh(output: &Path, resolution: usize, hole: &str, no_hole: bool) -> Result<u8, Error> {
    let parts = if no_hole {
        unit_square_mesh(resolution)
    } else {
        let vals: Vec<f64> = hole
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("invalid hole spec {hole:?}")))?;
        if vals.len() != 4 {
            return Err(Error::Config("hole spec needs 4 comma-separated values".into()));
        }
        channel_mesh(resolution, [vals[0], vals[1], vals[2], vals[3]])?
    };
    std::fs::write(output, parts.to_msh_string()).map_err(|e| Error::Io {
        path: output.display().to_string(),
        source: e,
    })?;
    println!(
        "wrote {} ({} vertices, {} cells)",
        output.display(),
        parts.vertices.len(),
        parts.cells.len()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config),
        Command::CheckGradient { config, directions, tolerance } => {
            cmd_check_gradient(config, *directions, *tolerance)
        }
        Command::SolveState { config } => cmd_solve_state(config),
        Command::MakeMesh { output, resolution, hole, no_hole } => {
            cmd_make_mesh(output, *resolution, hole, *no_hole)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Error::NewtonFailed { reason, .. }) => {
            eprintln!("error: solver did not converge: {reason}");
            ExitCode::from(2)
        }
        Err(err @ (Error::NonConvergence { .. } | Error::LineSearchFailed)) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
