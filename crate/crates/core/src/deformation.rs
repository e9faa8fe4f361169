//! Steklov-Poincare metric realization: a two-valued stiffness field is
//! harmonically extended from the boundary, then a linear-elasticity solve
//! turns the shape-derivative covector into a descent deformation field.
//!
//! The admissible space clamps every dof on the outer boundary (inflow,
//! walls, outflow); shape-boundary and interior vertices move.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, p1_basis, p1_mass_matrix, p1_stiffness_matrix, quadrature, solve_linear,
    CellGeom, CooMatrix, SparseSystem,
};
use crate::mesh::{BoundaryTag, TriangleMesh};
use crate::shape_gradient::ShapeDerivative;
use crate::tensor;

/// Nodal P1 coefficients of the deformation stiffness.
#[derive(Debug, Clone)]
pub struct StiffnessField {
    pub nodal: Vec<f64>,
}

fn boundary_vertex_sets(mesh: &TriangleMesh) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut shape = BTreeSet::new();
    let mut outer = BTreeSet::new();
    for facet in mesh.boundary_facets() {
        let set = if facet.tag == BoundaryTag::Shape { &mut shape } else { &mut outer };
        set.insert(facet.vertices[0]);
        set.insert(facet.vertices[1]);
    }
    (shape, outer)
}

/// Harmonic extension of the stiffness: Laplace solve with Dirichlet values
/// `mu_shape` on the obstacle boundary and `mu_outer` elsewhere.
pub fn interpolate_mu_hat(
    mesh: &TriangleMesh,
    mu_shape: f64,
    mu_outer: f64,
) -> Result<StiffnessField> {
    let (shape, outer) = boundary_vertex_sets(mesh);
    let matrix = p1_stiffness_matrix(mesh, |_| 1.0)?;
    let mut sys = SparseSystem {
        matrix,
        rhs: vec![0.0; mesh.num_vertices()],
        constraints: Vec::new(),
        dirichlet_applied: false,
    };
    for &v in &shape {
        sys.constraints.push((v, mu_shape));
    }
    for &v in &outer {
        if !shape.contains(&v) {
            sys.constraints.push((v, mu_outer));
        }
    }
    let nodal = solve_linear(&apply_dirichlet(sys)?)?;
    Ok(StiffnessField { nodal })
}

/// Elasticity bilinear form `a(V, W) = int 2 mu_hat eps(V) : eps(W)` over
/// the P1 vector deformation space (dof `2 * vertex + comp`).
pub fn elasticity_matrix(mesh: &TriangleMesh, mu_hat: &StiffnessField) -> Result<CooMatrix> {
    let rule = quadrature(2)?;
    let n = 2 * mesh.num_vertices();
    let mut coo = CooMatrix::with_capacity(n, n, 36 * mesh.num_cells());
    for cell in 0..mesh.num_cells() {
        let geom = CellGeom::new(mesh, cell);
        let verts = mesh.cell(cell);
        let (_, ref_grads) = p1_basis([1.0 / 3.0, 1.0 / 3.0]);
        let grads = [
            geom.phys_grad(ref_grads[0]),
            geom.phys_grad(ref_grads[1]),
            geom.phys_grad(ref_grads[2]),
        ];
        // Strain tensors are constant per cell; only mu_hat varies.
        let mut eps = [[tensor::ZERO; 2]; 3];
        for a in 0..3 {
            for c in 0..2 {
                let mut e = tensor::ZERO;
                e[c][0] += 0.5 * grads[a][0];
                e[c][1] += 0.5 * grads[a][1];
                e[0][c] += 0.5 * grads[a][0];
                e[1][c] += 0.5 * grads[a][1];
                eps[a][c] = e;
            }
        }
        let mut mu_int = 0.0;
        for q in rule {
            let (psi, _) = p1_basis(q.xy);
            let mu_q = psi[0] * mu_hat.nodal[verts[0]]
                + psi[1] * mu_hat.nodal[verts[1]]
                + psi[2] * mu_hat.nodal[verts[2]];
            mu_int += q.w * geom.det_j * mu_q;
        }
        for a in 0..3 {
            for c in 0..2 {
                for b in 0..3 {
                    for d in 0..2 {
                        let v = 2.0 * mu_int * tensor::ddot(eps[a][c], eps[b][d]);
                        if v != 0.0 {
                            coo.push(2 * verts[a] + c, 2 * verts[b] + d, v);
                        }
                    }
                }
            }
        }
    }
    Ok(coo)
}

/// Descent deformation field with bookkeeping.
#[derive(Debug, Clone)]
pub struct DeformationField {
    /// Nodal displacement directions, zero on the clamped outer boundary.
    pub v: Vec<[f64; 2]>,
    /// `(v^T (M + K) v)^(1/2)` with P1 mass and stiffness per component.
    pub h1_norm: f64,
    /// `dL[V] = -a(V, V) <= 0`.
    pub descent_value: f64,
}

/// Solves `a(V, W) = -dL[W]` for all admissible `W` (zero on the outer
/// boundary) and reports the H1 norm and the descent identity value.
pub fn solve_deformation(
    mesh: &TriangleMesh,
    dl: &ShapeDerivative,
    mu_hat: &StiffnessField,
) -> Result<DeformationField> {
    let n = 2 * mesh.num_vertices();
    if dl.values.len() != n {
        return Err(Error::Assembly("shape derivative size mismatch".into()));
    }
    let matrix = elasticity_matrix(mesh, mu_hat)?;
    let (shape, outer) = boundary_vertex_sets(mesh);
    let mut constraints = Vec::new();
    for &v in &outer {
        if !shape.contains(&v) {
            constraints.push((2 * v, 0.0));
            constraints.push((2 * v + 1, 0.0));
        }
    }
    let sys = SparseSystem {
        matrix,
        rhs: dl.values.iter().map(|v| -v).collect(),
        constraints,
        dirichlet_applied: false,
    };
    let x = solve_linear(&apply_dirichlet(sys)?)?;
    let v: Vec<[f64; 2]> = (0..mesh.num_vertices()).map(|i| [x[2 * i], x[2 * i + 1]]).collect();
    let h1 = h1_norm(mesh, &v)?;
    let descent = dl.apply(&v);
    Ok(DeformationField { v, h1_norm: h1, descent_value: descent })
}

/// Deterministic H1 norm of a nodal vector field:
/// `sqrt(sum_c v_c^T (M + K) v_c)` with consistent P1 mass and unit-coefficient
/// stiffness matrices.
pub fn h1_norm(mesh: &TriangleMesh, v: &[[f64; 2]]) -> Result<f64> {
    let m = p1_mass_matrix(mesh)?.to_csr();
    let k = p1_stiffness_matrix(mesh, |_| 1.0)?.to_csr();
    let mut total = 0.0;
    for comp in 0..2 {
        let vc: Vec<f64> = v.iter().map(|x| x[comp]).collect();
        let mv = m.matvec(&vc);
        let kv = k.matvec(&vc);
        total += vc.iter().zip(mv.iter().zip(&kv)).map(|(a, (b, c))| a * (b + c)).sum::<f64>();
    }
    Ok(total.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{annulus_mesh, channel_mesh, unit_square_mesh};
    use crate::optimizer::AugLagState;

    #[test]
    fn no_interior_nodes_gives_boundary_data() {
        // Single-ring annulus: every vertex is on a boundary.
        let mesh = annulus_mesh([0.0, 0.0], 0.1, 0.3, 1, 8).into_mesh().unwrap();
        let field = interpolate_mu_hat(&mesh, 5.0, 1.0).unwrap();
        let (shape, outer) = boundary_vertex_sets(&mesh);
        for &v in &shape {
            assert_eq!(field.nodal[v], 5.0);
        }
        for &v in &outer {
            assert_eq!(field.nodal[v], 1.0);
        }
    }

    #[test]
    fn annulus_extension_decays_monotonically() {
        let mesh = annulus_mesh([0.0, 0.0], 0.1, 0.4, 6, 24).into_mesh().unwrap();
        let field = interpolate_mu_hat(&mesh, 5.0, 1.0).unwrap();
        // Nodes are ordered ring by ring; compare ring averages.
        let mut prev = f64::INFINITY;
        for ring in 0..=6 {
            let avg: f64 = (0..24).map(|m| field.nodal[ring * 24 + m]).sum::<f64>() / 24.0;
            assert!(avg < prev + 1e-12, "ring {ring} average {avg} >= {prev}");
            if ring > 0 && ring < 6 {
                assert!(avg > 1.0 && avg < 5.0, "interior ring {ring}: {avg}");
            }
            prev = avg;
        }
    }

    #[test]
    fn uniform_boundary_value_gives_constant_field() {
        let mesh = unit_square_mesh(4).into_mesh().unwrap();
        let field = interpolate_mu_hat(&mesh, 5.0, 1.0).unwrap();
        for v in field.nodal {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    fn desk() -> TriangleMesh {
        channel_mesh(10, [0.3, 0.4, 0.4, 0.5]).unwrap().into_mesh().unwrap()
    }

    #[test]
    fn zero_derivative_gives_zero_field() {
        let mesh = desk();
        let dl = ShapeDerivative {
            values: vec![0.0; 2 * mesh.num_vertices()],
            volume_coef: 0.0,
            barycenter_coef: [0.0, 0.0],
            perimeter_coef: 0.0,
        };
        let mu = interpolate_mu_hat(&mesh, 5.0, 1.0).unwrap();
        let field = solve_deformation(&mesh, &dl, &mu).unwrap();
        assert!(field.v.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
        assert_eq!(field.h1_norm, 0.0);
    }

    #[test]
    fn manufactured_solution_is_recovered() {
        let mesh = desk();
        let mu = interpolate_mu_hat(&mesh, 5.0, 1.0).unwrap();
        let a = elasticity_matrix(&mesh, &mu).unwrap().to_csr();

        // Manufacture an admissible field: zero on the outer boundary.
        let (shape, outer) = boundary_vertex_sets(&mesh);
        let mut target = vec![0.0; 2 * mesh.num_vertices()];
        for v in 0..mesh.num_vertices() {
            if outer.contains(&v) && !shape.contains(&v) {
                continue;
            }
            let p = mesh.vertex(v);
            target[2 * v] = (3.1 * p[0]).sin() * 0.01;
            target[2 * v + 1] = (2.7 * p[1]).cos() * 0.01;
        }
        // dL[W] = -a(V*, W).
        let dl_values: Vec<f64> = a.matvec(&target).iter().map(|v| -v).collect();
        let dl = ShapeDerivative {
            values: dl_values,
            volume_coef: 0.0,
            barycenter_coef: [0.0, 0.0],
            perimeter_coef: 0.0,
        };
        let field = solve_deformation(&mesh, &dl, &mu).unwrap();
        for v in 0..mesh.num_vertices() {
            assert!((field.v[v][0] - target[2 * v]).abs() < 1e-10);
            assert!((field.v[v][1] - target[2 * v + 1]).abs() < 1e-10);
        }
    }

    #[test]
    fn descent_identity_and_linearity() {
        let mesh = desk();
        let shape = mesh.shape_required().unwrap();
        let auglag = AugLagState::new(
            [0.0; 4],
            1e5,
            crate::mesh::GeometricTargets { volume: 0.04, barycenter: [0.35, 0.45], perimeter: 0.76 },
            0.9,
            2.0,
        )
        .unwrap();
        let dl = crate::shape_gradient::geometric_derivative_terms(&mesh, &auglag).unwrap();
        let mu = interpolate_mu_hat(&mesh, 5.0, 1.0).unwrap();
        let field = solve_deformation(&mesh, &dl, &mu).unwrap();
        assert!(field.descent_value < 0.0);

        // dL[V] = -a(V, V).
        let a = elasticity_matrix(&mesh, &mu).unwrap().to_csr();
        let flat: Vec<f64> = field.v.iter().flat_map(|v| [v[0], v[1]]).collect();
        let av = a.matvec(&flat);
        let quad: f64 = flat.iter().zip(&av).map(|(x, y)| x * y).sum();
        assert!(
            (field.descent_value + quad).abs() <= 1e-10 * quad.abs().max(1.0),
            "dL[V] = {}, a(V,V) = {}",
            field.descent_value,
            quad
        );

        // Doubling the covector doubles the field.
        let dl2 = ShapeDerivative {
            values: dl.values.iter().map(|v| 2.0 * v).collect(),
            volume_coef: dl.volume_coef,
            barycenter_coef: dl.barycenter_coef,
            perimeter_coef: dl.perimeter_coef,
        };
        let field2 = solve_deformation(&mesh, &dl2, &mu).unwrap();
        let scale = field.v.iter().fold(0.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()));
        for v in 0..mesh.num_vertices() {
            assert!((field2.v[v][0] - 2.0 * field.v[v][0]).abs() < 1e-12 * scale.max(1.0));
            assert!((field2.v[v][1] - 2.0 * field.v[v][1]).abs() < 1e-12 * scale.max(1.0));
        }
        let _ = shape;
    }

    #[test]
    fn elasticity_matrix_is_symmetric() {
        let mesh = desk();
        let mu = interpolate_mu_hat(&mesh, 5.0, 1.0).unwrap();
        let a = elasticity_matrix(&mesh, &mu).unwrap().to_csr();
        assert_eq!(a.max_abs_diff(&a.transpose()), 0.0);
    }

    #[test]
    fn h1_norm_of_simple_fields() {
        let mesh = unit_square_mesh(6).into_mesh().unwrap();
        // Constant field: ||(1,0)||_H1^2 = area = 1.
        let v = vec![[1.0, 0.0]; mesh.num_vertices()];
        assert!((h1_norm(&mesh, &v).unwrap() - 1.0).abs() < 1e-12);
        // Linear field (x, 0): int x^2 + int 1 = 1/3 + 1.
        let v: Vec<[f64; 2]> = mesh.vertices().iter().map(|p| [p[0], 0.0]).collect();
        assert!((h1_norm(&mesh, &v).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
