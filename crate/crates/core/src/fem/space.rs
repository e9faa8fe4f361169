//! Degree-of-freedom maps for the Taylor-Hood pair and P1 fields.
//!
//! Scalar node layout:
//! - P1 nodes are the mesh vertices.
//! - P2 nodes are the mesh vertices followed by one node per mesh edge
//!   (the midpoint), so node `nv + e` belongs to edge `e`. Edge ids are
//!   assigned in first-seen cell order, which is deterministic.
//!
//! Vector-valued dofs interleave components: dof `2 * node + c`. In the
//! mixed velocity/pressure system the velocity block comes first and
//! pressure dof `i` lives at `2 * n_p2 + i`.
//!
//! Boundary vertices shared between tags resolve to a single tag with
//! priority inflow > walls > shape > outflow, so Dirichlet values at the
//! inflow corners come from the inflow profile.

use std::collections::BTreeMap;

use super::super::mesh::{BoundaryTag, TriangleMesh};

fn tag_priority(tag: BoundaryTag) -> u8 {
    match tag {
        BoundaryTag::Inflow => 0,
        BoundaryTag::Walls => 1,
        BoundaryTag::Shape => 2,
        BoundaryTag::Outflow => 3,
    }
}

/// Scalar P2 node structure over a mesh.
#[derive(Debug, Clone)]
pub struct P2Nodes {
    pub count: usize,
    /// Per cell: `[v0, v1, v2, m12, m20, m01]` matching the basis ordering.
    pub cell_nodes: Vec<[usize; 6]>,
    pub positions: Vec<[f64; 2]>,
}

/// Dof bookkeeping for all spaces used by the solver.
#[derive(Debug, Clone)]
pub struct Spaces {
    pub p2: P2Nodes,
    pub n_pressure: usize,
    /// Priority-resolved boundary tag per mesh vertex.
    vertex_tag: Vec<Option<BoundaryTag>>,
    /// Priority-resolved boundary tag per P2 node.
    p2_tag: Vec<Option<BoundaryTag>>,
    /// Midpoint P2 node of each boundary facet.
    pub facet_midpoint_node: Vec<usize>,
}

impl Spaces {
    pub fn build(mesh: &TriangleMesh) -> Spaces {
        let nv = mesh.num_vertices();
        let mut edge_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut edge_mid: Vec<[f64; 2]> = Vec::new();
        let mut cell_nodes = Vec::with_capacity(mesh.num_cells());

        for cell in mesh.cells() {
            let mut nodes = [0usize; 6];
            nodes[..3].copy_from_slice(cell);
            // Midpoints opposite each vertex: (1,2), (2,0), (0,1).
            for (k, (a, b)) in [(1usize, 2usize), (2, 0), (0, 1)].into_iter().enumerate() {
                let (va, vb) = (cell[a], cell[b]);
                let key = (va.min(vb), va.max(vb));
                let next_id = edge_ids.len();
                let id = *edge_ids.entry(key).or_insert(next_id);
                if id == edge_mid.len() {
                    let pa = mesh.vertex(va);
                    let pb = mesh.vertex(vb);
                    edge_mid.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                }
                nodes[3 + k] = nv + id;
            }
            cell_nodes.push(nodes);
        }

        let mut positions = mesh.vertices().to_vec();
        positions.extend_from_slice(&edge_mid);
        let count = positions.len();

        let mut vertex_tag: Vec<Option<BoundaryTag>> = vec![None; nv];
        let mut p2_tag: Vec<Option<BoundaryTag>> = vec![None; count];
        let mut facet_midpoint_node = Vec::with_capacity(mesh.boundary_facets().len());
        for facet in mesh.boundary_facets() {
            let [a, b] = facet.vertices;
            for v in [a, b] {
                let better = match vertex_tag[v] {
                    None => true,
                    Some(t) => tag_priority(facet.tag) < tag_priority(t),
                };
                if better {
                    vertex_tag[v] = Some(facet.tag);
                    p2_tag[v] = Some(facet.tag);
                }
            }
            let key = (a.min(b), a.max(b));
            let mid = nv + edge_ids[&key];
            p2_tag[mid] = Some(facet.tag);
            facet_midpoint_node.push(mid);
        }

        Spaces {
            p2: P2Nodes { count, cell_nodes, positions },
            n_pressure: nv,
            vertex_tag,
            p2_tag,
            facet_midpoint_node,
        }
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.p2.count
    }

    pub fn n_mixed(&self) -> usize {
        self.n_velocity() + self.n_pressure
    }

    pub fn velocity_dof(node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    pub fn pressure_dof(&self, vertex: usize) -> usize {
        self.n_velocity() + vertex
    }

    /// Resolved boundary tag of a mesh vertex.
    pub fn vertex_tag(&self, v: usize) -> Option<BoundaryTag> {
        self.vertex_tag[v]
    }

    /// Resolved boundary tag of a P2 node.
    pub fn p2_node_tag(&self, node: usize) -> Option<BoundaryTag> {
        self.p2_tag[node]
    }

    /// P2 nodes carrying a velocity Dirichlet condition (inflow, walls, shape).
    pub fn velocity_dirichlet_nodes(&self) -> impl Iterator<Item = (usize, BoundaryTag)> + '_ {
        self.p2_tag.iter().enumerate().filter_map(|(node, tag)| match tag {
            Some(t) if *t != BoundaryTag::Outflow => Some((node, *t)),
            _ => None,
        })
    }

    /// Mesh vertices clamped in the deformation space (everything on the
    /// outer boundary; shape vertices stay free).
    pub fn deformation_clamped_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.vertex_tag.iter().enumerate().filter_map(|(v, tag)| match tag {
            Some(BoundaryTag::Shape) | None => None,
            Some(_) => Some(v),
        })
    }
}
