//! Output writers and run orchestration for the `viscoshape` binary.
//!
//! File contract: MSH 2.2 ASCII in; VTK legacy ASCII (fields), CSV (traces,
//! solver reports) and a raw-coefficient sidecar out. All writers format
//! floats with the shortest round-trip representation, so identical runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use viscoshape::bingham::{active_set_indicator, NewtonReport};
use viscoshape::fem::Spaces;
use viscoshape::optimizer::OptTrace;
use viscoshape::{Error, MixedField, PhysicsParams, Result, TriangleMesh};

/// Environment variable overriding the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "VISCOSHAPE_OUT";

/// Resolves the output directory: environment override, then config value.
pub fn output_dir(configured: &str) -> PathBuf {
    match std::env::var(OUTPUT_DIR_ENV) {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(configured),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

/// Legacy ASCII VTK unstructured grid: velocity vectors and pressure at the
/// mesh vertices, plus the cellwise yield indicator
/// `gamma ||eps(y)|| - g` (quadrature average).
pub fn write_fields(
    mesh: &TriangleMesh,
    spaces: &Spaces,
    state: &MixedField,
    params: &PhysicsParams,
    path: &Path,
) -> Result<()> {
    let indicator = active_set_indicator(mesh, spaces, state, params)?;
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\nviscoshape fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let nv = mesh.num_vertices();
    let nc = mesh.num_cells();
    let _ = writeln!(out, "POINTS {nv} double");
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} 0", v[0], v[1]);
    }
    let _ = writeln!(out, "CELLS {nc} {}", 4 * nc);
    for c in mesh.cells() {
        let _ = writeln!(out, "3 {} {} {}", c[0], c[1], c[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nc}");
    for _ in 0..nc {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {nv}");
    out.push_str("VECTORS velocity double\n");
    for v in 0..nv {
        // Vertex dofs come first in the P2 node ordering.
        let _ = writeln!(out, "{} {} 0", state.velocity[2 * v], state.velocity[2 * v + 1]);
    }
    out.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for v in 0..nv {
        let _ = writeln!(out, "{}", state.pressure[v]);
    }
    let _ = writeln!(out, "CELL_DATA {nc}");
    out.push_str("SCALARS yield_indicator double 1\nLOOKUP_TABLE default\n");
    for val in &indicator {
        let _ = writeln!(out, "{val}");
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Full-resolution coefficient dump: every P2 velocity node (vertices and
/// edge midpoints) with its coefficients, then every pressure vertex.
pub fn write_raw_coefficients(
    spaces: &Spaces,
    state: &MixedField,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("kind,index,x,y,value_x,value_y\n");
    for node in 0..spaces.p2.count {
        let p = spaces.p2.positions[node];
        let _ = writeln!(
            out,
            "velocity,{node},{},{},{},{}",
            p[0],
            p[1],
            state.velocity[2 * node],
            state.velocity[2 * node + 1]
        );
    }
    for (vertex, val) in state.pressure.iter().enumerate() {
        let p = spaces.p2.positions[vertex];
        let _ = writeln!(out, "pressure,{vertex},{},{},{},", p[0], p[1], val);
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Per-iteration trace CSV. `delta_L_A` is the absolute difference of
/// consecutive augmented Lagrangian values; the first row has no
/// predecessor and leaves the column empty.
pub fn write_trace(trace: &OptTrace, path: &Path) -> Result<()> {
    let mut out = String::from("iter,L_A,delta_L_A,c_norm,V_H1,t,newton_iters,safeguard\n");
    let mut prev: Option<f64> = None;
    for row in &trace.rows {
        let delta = match prev {
            Some(p) => format!("{}", (row.l_a - p).abs()),
            None => String::new(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.iter,
            row.l_a,
            delta,
            row.c_norm,
            row.v_h1,
            row.t,
            row.newton_iters,
            u8::from(row.safeguard)
        );
        prev = Some(row.l_a);
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Outer-iteration snapshots (multipliers, penalty, constraint norm).
pub fn write_outer_trace(trace: &OptTrace, path: &Path) -> Result<()> {
    let mut out = String::from("outer,lambda1,lambda2,lambda3,lambda4,nu,c_norm\n");
    for row in &trace.outer_rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.outer, row.lambda[0], row.lambda[1], row.lambda[2], row.lambda[3], row.nu, row.c_norm
        );
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Newton iteration history CSV.
pub fn write_newton_report(report: &NewtonReport, path: &Path) -> Result<()> {
    let mut out = String::from("iter,residual_norm,step_size,update_l1\n");
    for i in 0..report.iterations() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i, report.residual_norms[i], report.step_sizes[i], report.update_norms[i]
        );
    }
    let _ = writeln!(out, "final,{},,", report.final_residual);
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Minimal VTK reader for round-trip tests: points, cells, named point and
/// cell scalars/vectors.
pub mod vtk_read {
    #[derive(Debug, Default)]
    pub struct VtkData {
        pub points: Vec<[f64; 3]>,
        pub cells: Vec<Vec<usize>>,
        pub point_vectors: Vec<(String, Vec<[f64; 3]>)>,
        pub point_scalars: Vec<(String, Vec<f64>)>,
        pub cell_scalars: Vec<(String, Vec<f64>)>,
    }

    pub fn parse(text: &str) -> Option<VtkData> {
        let mut data = VtkData::default();
        let mut lines = text.lines().peekable();
        let mut n_points = 0usize;
        let mut n_cells = 0usize;
        let mut in_cell_data = false;
        while let Some(line) = lines.next() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.first().copied() {
                Some("POINTS") => {
                    n_points = toks.get(1)?.parse().ok()?;
                    for _ in 0..n_points {
                        let l = lines.next()?;
                        let mut it = l.split_whitespace().map(|t| t.parse::<f64>());
                        data.points.push([
                            it.next()?.ok()?,
                            it.next()?.ok()?,
                            it.next()?.ok()?,
                        ]);
                    }
                }
                Some("CELLS") => {
                    n_cells = toks.get(1)?.parse().ok()?;
                    for _ in 0..n_cells {
                        let l = lines.next()?;
                        let vals: Vec<usize> =
                            l.split_whitespace().filter_map(|t| t.parse().ok()).collect();
                        data.cells.push(vals[1..].to_vec());
                    }
                }
                Some("CELL_DATA") => in_cell_data = true,
                Some("POINT_DATA") => in_cell_data = false,
                Some("VECTORS") => {
                    let name = toks.get(1)?.to_string();
                    let mut vecs = Vec::with_capacity(n_points);
                    for _ in 0..n_points {
                        let l = lines.next()?;
                        let mut it = l.split_whitespace().map(|t| t.parse::<f64>());
                        vecs.push([it.next()?.ok()?, it.next()?.ok()?, it.next()?.ok()?]);
                    }
                    data.point_vectors.push((name, vecs));
                }
                Some("SCALARS") => {
                    let name = toks.get(1)?.to_string();
                    lines.next()?; // LOOKUP_TABLE
                    let count = if in_cell_data { n_cells } else { n_points };
                    let mut vals = Vec::with_capacity(count);
                    for _ in 0..count {
                        vals.push(lines.next()?.trim().parse().ok()?);
                    }
                    if in_cell_data {
                        data.cell_scalars.push((name, vals));
                    } else {
                        data.point_scalars.push((name, vals));
                    }
                }
                _ => {}
            }
        }
        Some(data)
    }
}
