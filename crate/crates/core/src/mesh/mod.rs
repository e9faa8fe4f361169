//! Unstructured triangle meshes of the flow channel.
//!
//! A mesh holds the triangulated fluid domain together with tagged boundary
//! facets. The obstacle boundary (tag [`BoundaryTag::Shape`]) is extracted as
//! a closed polyline at construction time and carries all geometric
//! measurements the constraint handling needs (enclosed area, centroid,
//! perimeter).
//!
//! Meshes are immutable after construction; [`TriangleMesh::deform`] returns
//! a new mesh with moved vertices and identical topology.

mod gen;
mod msh;

pub use gen::{annulus_mesh, channel_mesh, unit_square_mesh, MeshParts};
pub use msh::{load_msh, parse_msh, to_msh_string, TagMap};

use crate::error::{Error, Result};

/// Role of a boundary facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryTag {
    Inflow,
    Walls,
    Outflow,
    Shape,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [
        BoundaryTag::Inflow,
        BoundaryTag::Walls,
        BoundaryTag::Outflow,
        BoundaryTag::Shape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Inflow => "inflow",
            BoundaryTag::Walls => "walls",
            BoundaryTag::Outflow => "outflow",
            BoundaryTag::Shape => "shape",
        }
    }
}

/// A tagged boundary edge together with the unique cell it belongs to.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFacet {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
    pub cell: usize,
}

/// Ordered closed polyline of the obstacle boundary.
///
/// The loop is stored without repeating the first vertex and is oriented
/// counterclockwise around the obstacle, so the shoelace area of the loop is
/// the (positive) obstacle area. With this orientation the unit normal
/// returned by [`ShapeBoundary::edge_normal`] is the outward normal of the
/// fluid domain, which points into the obstacle hole.
#[derive(Debug, Clone)]
pub struct ShapeBoundary {
    loop_vertices: Vec<usize>,
    /// Facet index (into `TriangleMesh::boundary_facets`) of edge
    /// `loop_vertices[i] -> loop_vertices[i+1]`.
    edge_facets: Vec<usize>,
}

impl ShapeBoundary {
    /// Vertex indices along the loop, first vertex not repeated.
    pub fn vertices(&self) -> &[usize] {
        &self.loop_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.loop_vertices.len()
    }

    /// Endpoints of loop edge `i` in loop orientation.
    pub fn edge(&self, i: usize) -> [usize; 2] {
        let n = self.loop_vertices.len();
        [self.loop_vertices[i], self.loop_vertices[(i + 1) % n]]
    }

    /// Facet index of loop edge `i`.
    pub fn edge_facet(&self, i: usize) -> usize {
        self.edge_facets[i]
    }
}

/// Unstructured triangulation of the flow domain with tagged boundary.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    boundary_facets: Vec<BoundaryFacet>,
    shape: Option<ShapeBoundary>,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Signed shoelace area of a closed polygon (last vertex not repeated).
pub fn polygon_area(pts: &[[f64; 2]]) -> f64 {
    0.5 * (0..pts.len())
        .map(|i| {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

/// Area centroid of a closed polygon with nonzero signed area.
pub fn polygon_centroid(pts: &[[f64; 2]]) -> [f64; 2] {
    let area = polygon_area(pts);
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        let cross = a[0] * b[1] - b[0] * a[1];
        cx += (a[0] + b[0]) * cross;
        cy += (a[1] + b[1]) * cross;
    }
    [cx / (6.0 * area), cy / (6.0 * area)]
}

/// Total edge length of a closed polygon.
pub fn polygon_perimeter(pts: &[[f64; 2]]) -> f64 {
    (0..pts.len())
        .map(|i| dist(pts[i], pts[(i + 1) % pts.len()]))
        .sum()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Proper intersection test for open segments (shared endpoints excluded).
fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| -> f64 {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

impl TriangleMesh {
    /// Builds a mesh from raw arrays, validating all type invariants.
    ///
    /// Clockwise cells are silently reoriented. Facets are matched against
    /// cell edges; a facet that is not an edge of exactly one cell is a
    /// topology error, as is a `shape` facet set that does not form a single
    /// simple closed loop.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        mut cells: Vec<[usize; 3]>,
        facets: Vec<([usize; 2], BoundaryTag)>,
    ) -> Result<Self> {
        let nv = vertices.len();
        for (i, cell) in cells.iter_mut().enumerate() {
            if cell.iter().any(|&v| v >= nv) {
                return Err(Error::Topology(format!("cell {i} references missing vertex")));
            }
            let area = signed_area(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if area < 0.0 {
                cell.swap(1, 2);
            } else if area == 0.0 {
                return Err(Error::Topology(format!("cell {i} is degenerate (zero area)")));
            }
        }

        // Undirected cell-edge -> owning cells.
        let mut edge_cells: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
            std::collections::BTreeMap::new();
        for (ci, cell) in cells.iter().enumerate() {
            for k in 0..3 {
                let a = cell[k];
                let b = cell[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                edge_cells.entry(key).or_default().push(ci);
            }
        }

        let mut seen = std::collections::BTreeSet::new();
        let mut boundary_facets = Vec::with_capacity(facets.len());
        for (verts, tag) in facets {
            if verts[0] >= nv || verts[1] >= nv {
                return Err(Error::Topology("boundary facet references missing vertex".into()));
            }
            let key = (verts[0].min(verts[1]), verts[0].max(verts[1]));
            if !seen.insert(key) {
                return Err(Error::Topology(format!(
                    "boundary facet ({}, {}) tagged more than once",
                    verts[0], verts[1]
                )));
            }
            let owners = edge_cells.get(&key).map(Vec::as_slice).unwrap_or(&[]);
            match owners.len() {
                1 => boundary_facets.push(BoundaryFacet { vertices: verts, tag, cell: owners[0] }),
                0 => {
                    return Err(Error::Topology(format!(
                        "boundary facet ({}, {}) is not an edge of any cell",
                        verts[0], verts[1]
                    )))
                }
                _ => {
                    return Err(Error::Topology(format!(
                        "boundary facet ({}, {}) is an interior edge",
                        verts[0], verts[1]
                    )))
                }
            }
        }

        let shape = Self::extract_shape(&vertices, &boundary_facets)?;
        Ok(TriangleMesh { vertices, cells, boundary_facets, shape })
    }

    fn extract_shape(
        vertices: &[[f64; 2]],
        facets: &[BoundaryFacet],
    ) -> Result<Option<ShapeBoundary>> {
        let shape_facets: Vec<usize> = facets
            .iter()
            .enumerate()
            .filter(|(_, f)| f.tag == BoundaryTag::Shape)
            .map(|(i, _)| i)
            .collect();
        if shape_facets.is_empty() {
            return Ok(None);
        }

        // Each vertex of a closed loop is met by exactly two shape facets.
        let mut incident: std::collections::BTreeMap<usize, Vec<usize>> =
            std::collections::BTreeMap::new();
        for &fi in &shape_facets {
            for &v in &facets[fi].vertices {
                incident.entry(v).or_default().push(fi);
            }
        }
        for (v, inc) in &incident {
            if inc.len() != 2 {
                return Err(Error::Topology(format!(
                    "shape boundary is not a closed loop: vertex {v} has {} shape facets",
                    inc.len()
                )));
            }
        }

        // Walk the loop starting from the facet with the smallest index.
        let start_facet = shape_facets[0];
        let start = facets[start_facet].vertices[0];
        let mut loop_vertices = vec![start];
        let mut edge_facets = vec![start_facet];
        let mut current = facets[start_facet].vertices[1];
        let mut prev_facet = start_facet;
        while current != start {
            loop_vertices.push(current);
            let inc = &incident[&current];
            let next_facet = if inc[0] == prev_facet { inc[1] } else { inc[0] };
            let fv = facets[next_facet].vertices;
            current = if fv[0] == current { fv[1] } else { fv[0] };
            edge_facets.push(next_facet);
            prev_facet = next_facet;
            if loop_vertices.len() > shape_facets.len() {
                return Err(Error::Topology("shape boundary walk did not close".into()));
            }
        }
        if loop_vertices.len() != shape_facets.len() {
            return Err(Error::Topology(
                "shape facets form more than one closed polyline".into(),
            ));
        }

        // Orient counterclockwise around the obstacle (positive shoelace area).
        let shoelace: f64 = (0..loop_vertices.len())
            .map(|i| {
                let a = vertices[loop_vertices[i]];
                let b = vertices[loop_vertices[(i + 1) % loop_vertices.len()]];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        let mut shape = ShapeBoundary { loop_vertices, edge_facets };
        if shoelace < 0.0 {
            shape.loop_vertices.reverse();
            shape.loop_vertices.rotate_right(1);
            shape.edge_facets.reverse();
        }

        // Simplicity: no two non-adjacent edges may cross.
        let n = shape.num_edges();
        for i in 0..n {
            let [a0, a1] = shape.edge(i);
            for j in (i + 1)..n {
                let [b0, b1] = shape.edge(j);
                if a0 == b0 || a0 == b1 || a1 == b0 || a1 == b1 {
                    continue;
                }
                if segments_cross(vertices[a0], vertices[a1], vertices[b0], vertices[b1]) {
                    return Err(Error::Topology(format!(
                        "shape boundary self-intersects (edges {i} and {j})"
                    )));
                }
            }
        }
        Ok(Some(shape))
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn vertex(&self, i: usize) -> [f64; 2] {
        self.vertices[i]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cell(&self, i: usize) -> [usize; 3] {
        self.cells[i]
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    pub fn shape(&self) -> Option<&ShapeBoundary> {
        self.shape.as_ref()
    }

    /// Obstacle boundary, or an error for meshes without one.
    pub fn shape_required(&self) -> Result<&ShapeBoundary> {
        self.shape
            .as_ref()
            .ok_or_else(|| Error::Precondition("mesh has no shape boundary".into()))
    }

    pub fn cell_signed_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.cells[i];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Coordinates along the shape loop, in loop order.
    pub fn shape_points(&self, shape: &ShapeBoundary) -> Vec<[f64; 2]> {
        shape.vertices().iter().map(|&v| self.vertices[v]).collect()
    }

    /// Area enclosed by the obstacle boundary (shoelace formula).
    pub fn volume(&self, shape: &ShapeBoundary) -> Result<f64> {
        let area = polygon_area(&self.shape_points(shape));
        if area <= 1e-14 {
            return Err(Error::Geometry(format!("degenerate shape loop (area {area:.3e})")));
        }
        Ok(area)
    }

    /// Area centroid of the region enclosed by the obstacle boundary.
    pub fn barycenter(&self, shape: &ShapeBoundary) -> Result<[f64; 2]> {
        self.volume(shape)?;
        Ok(polygon_centroid(&self.shape_points(shape)))
    }

    /// Total length of the obstacle boundary.
    pub fn perimeter(&self, shape: &ShapeBoundary) -> f64 {
        polygon_perimeter(&self.shape_points(shape))
    }

    /// Deviation of (volume, barycenter, perimeter) from the given targets.
    pub fn constraint_vector(
        &self,
        shape: &ShapeBoundary,
        targets: &GeometricTargets,
    ) -> Result<[f64; 4]> {
        let vol = self.volume(shape)?;
        let bary = self.barycenter(shape)?;
        let peri = self.perimeter(shape);
        Ok([
            vol - targets.volume,
            bary[0] - targets.barycenter[0],
            bary[1] - targets.barycenter[1],
            peri - targets.perimeter,
        ])
    }

    /// Unit outward normal of the fluid domain on shape loop edge `i`
    /// (points into the obstacle hole), and the edge length.
    pub fn shape_edge_normal(&self, shape: &ShapeBoundary, i: usize) -> ([f64; 2], f64) {
        let [ia, ib] = shape.edge(i);
        let a = self.vertices[ia];
        let b = self.vertices[ib];
        let t = [b[0] - a[0], b[1] - a[1]];
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        ([-t[1] / len, t[0] / len], len)
    }

    /// Perturbation of identity: moves every vertex to `x + t v(x)`.
    ///
    /// Topology is shared unchanged. Fails if any cell area becomes
    /// non-positive; the caller is expected to retry with a smaller `t`.
    pub fn deform(&self, v: &[[f64; 2]], t: f64) -> Result<TriangleMesh> {
        assert_eq!(v.len(), self.vertices.len(), "deformation field size mismatch");
        if t == 0.0 {
            return Ok(self.clone());
        }
        let vertices: Vec<[f64; 2]> = self
            .vertices
            .iter()
            .zip(v)
            .map(|(x, d)| [x[0] + t * d[0], x[1] + t * d[1]])
            .collect();
        for (i, cell) in self.cells.iter().enumerate() {
            if signed_area(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]) <= 0.0 {
                return Err(Error::InvertedMesh { cell: i });
            }
        }
        Ok(TriangleMesh {
            vertices,
            cells: self.cells.clone(),
            boundary_facets: self.boundary_facets.clone(),
            shape: self.shape.clone(),
        })
    }

    /// Minimum cell quality, measured as `2 * inradius / circumradius`.
    ///
    /// The value lies in (0, 1] and equals 1 for equilateral triangles.
    pub fn quality(&self) -> f64 {
        self.cells
            .iter()
            .map(|cell| {
                let p = [self.vertices[cell[0]], self.vertices[cell[1]], self.vertices[cell[2]]];
                let area = signed_area(p[0], p[1], p[2]);
                let a = dist(p[1], p[2]);
                let b = dist(p[2], p[0]);
                let c = dist(p[0], p[1]);
                16.0 * area * area / ((a + b + c) * a * b * c)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Target values for the geometric equality constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricTargets {
    pub volume: f64,
    pub barycenter: [f64; 2],
    pub perimeter: f64,
}

#[cfg(test)]
mod tests;
