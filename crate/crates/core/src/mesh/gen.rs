//! Structured mesh fixtures for tests, benchmarks and demo runs.
//!
//! Production meshes come from an external generator through
//! [`super::load_msh`]; the functions here build simple channel geometries
//! (criss-cross grids, optionally with a rectangular obstacle hole) so the
//! solver can be exercised without external tooling.

use super::{BoundaryTag, TriangleMesh};
use crate::error::{Error, Result};

/// Raw mesh arrays, convertible to a validated [`TriangleMesh`] or to MSH text.
#[derive(Debug, Clone)]
pub struct MeshParts {
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub facets: Vec<([usize; 2], BoundaryTag)>,
}

impl MeshParts {
    pub fn into_mesh(self) -> Result<TriangleMesh> {
        TriangleMesh::from_parts(self.vertices, self.cells, self.facets)
    }

    pub fn to_msh_string(&self) -> String {
        super::to_msh_string(&self.vertices, &self.cells, &self.facets)
    }
}

/// Criss-cross mesh of the unit square with `n x n` grid cells
/// (4 triangles per cell), inflow at `x=0`, outflow at `x=1`, walls at
/// `y=0` and `y=1`.
pub fn unit_square_mesh(n: usize) -> MeshParts {
    channel(n, None).expect("no hole, cannot fail")
}

/// Criss-cross channel mesh with a rectangular obstacle hole.
///
/// The hole rectangle `[xmin, ymin, xmax, ymax]` must be aligned with the
/// `n x n` grid and strictly inside the unit square. Hole boundary edges are
/// tagged `shape`.
pub fn channel_mesh(n: usize, hole: [f64; 4]) -> Result<MeshParts> {
    let to_index = |x: f64, what: &str| -> Result<usize> {
        let k = x * n as f64;
        let rounded = k.round();
        if (k - rounded).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "hole coordinate {what}={x} is not aligned with the 1/{n} grid"
            )));
        }
        Ok(rounded as usize)
    };
    let i0 = to_index(hole[0], "xmin")?;
    let j0 = to_index(hole[1], "ymin")?;
    let i1 = to_index(hole[2], "xmax")?;
    let j1 = to_index(hole[3], "ymax")?;
    if i0 >= i1 || j0 >= j1 || i0 == 0 || j0 == 0 || i1 >= n || j1 >= n {
        return Err(Error::Config("hole must be nonempty and strictly interior".into()));
    }
    channel(n, Some([i0, j0, i1, j1]))
}

fn channel(n: usize, hole: Option<[usize; 4]>) -> Result<MeshParts> {
    let h = 1.0 / n as f64;
    let grid = |i: usize, j: usize| j * (n + 1) + i;
    let in_hole = |i: usize, j: usize| {
        hole.map(|[i0, j0, i1, j1]| i >= i0 && i < i1 && j >= j0 && j < j1)
            .unwrap_or(false)
    };

    let mut vertices: Vec<[f64; 2]> = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 * h, j as f64 * h]);
        }
    }

    let mut cells = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if in_hole(i, j) {
                continue;
            }
            let center = vertices.len();
            vertices.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            let sw = grid(i, j);
            let se = grid(i + 1, j);
            let ne = grid(i + 1, j + 1);
            let nw = grid(i, j + 1);
            cells.push([sw, se, center]);
            cells.push([se, ne, center]);
            cells.push([ne, nw, center]);
            cells.push([nw, sw, center]);
        }
    }

    let mut facets = Vec::new();
    for j in 0..n {
        facets.push(([grid(0, j), grid(0, j + 1)], BoundaryTag::Inflow));
        facets.push(([grid(n, j), grid(n, j + 1)], BoundaryTag::Outflow));
    }
    for i in 0..n {
        facets.push(([grid(i, 0), grid(i + 1, 0)], BoundaryTag::Walls));
        facets.push(([grid(i, n), grid(i + 1, n)], BoundaryTag::Walls));
    }
    if let Some([i0, j0, i1, j1]) = hole {
        for i in i0..i1 {
            facets.push(([grid(i, j0), grid(i + 1, j0)], BoundaryTag::Shape));
            facets.push(([grid(i, j1), grid(i + 1, j1)], BoundaryTag::Shape));
        }
        for j in j0..j1 {
            facets.push(([grid(i0, j), grid(i0, j + 1)], BoundaryTag::Shape));
            facets.push(([grid(i1, j), grid(i1, j + 1)], BoundaryTag::Shape));
        }
    }

    // Drop grid vertices swallowed by the hole and remap indices.
    let mut used = vec![false; vertices.len()];
    for c in &cells {
        for &v in c {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut compact = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        if used[i] {
            remap[i] = compact.len();
            compact.push(*v);
        }
    }
    let cells = cells.iter().map(|c| [remap[c[0]], remap[c[1]], remap[c[2]]]).collect();
    let facets = facets
        .iter()
        .map(|(v, t)| ([remap[v[0]], remap[v[1]]], *t))
        .collect();

    Ok(MeshParts { vertices: compact, cells, facets })
}

/// Ring mesh between two concentric circles centered at `center`.
///
/// Inner boundary is tagged `shape`, outer boundary `walls`. Used to probe
/// harmonic extensions and boundary-integral identities on smooth loops.
pub fn annulus_mesh(
    center: [f64; 2],
    r_inner: f64,
    r_outer: f64,
    n_radial: usize,
    n_angular: usize,
) -> MeshParts {
    assert!(r_inner > 0.0 && r_outer > r_inner && n_radial >= 1 && n_angular >= 3);
    let node = |k: usize, m: usize| k * n_angular + (m % n_angular);
    let mut vertices = Vec::with_capacity((n_radial + 1) * n_angular);
    for k in 0..=n_radial {
        let r = r_inner + (r_outer - r_inner) * k as f64 / n_radial as f64;
        for m in 0..n_angular {
            let theta = 2.0 * std::f64::consts::PI * m as f64 / n_angular as f64;
            vertices.push([center[0] + r * theta.cos(), center[1] + r * theta.sin()]);
        }
    }
    let mut cells = Vec::new();
    for k in 0..n_radial {
        for m in 0..n_angular {
            let a = node(k, m);
            let b = node(k, m + 1);
            let c = node(k + 1, m + 1);
            let d = node(k + 1, m);
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }
    let mut facets = Vec::new();
    for m in 0..n_angular {
        facets.push(([node(0, m), node(0, m + 1)], BoundaryTag::Shape));
        facets.push(([node(n_radial, m), node(n_radial, m + 1)], BoundaryTag::Walls));
    }
    MeshParts { vertices, cells, facets }
}
