use super::*;

fn desk_mesh() -> TriangleMesh {
    channel_mesh(20, [0.25, 0.40, 0.35, 0.50]).unwrap().into_mesh().unwrap()
}

#[test]
fn polygon_area_unit_square() {
    let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    assert_eq!(polygon_area(&sq), 1.0);
    assert_eq!(polygon_perimeter(&sq), 4.0);
    assert_eq!(polygon_centroid(&sq), [0.5, 0.5]);
}

#[test]
fn polygon_centroid_right_triangle() {
    let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let c = polygon_centroid(&tri);
    assert!((c[0] - 1.0 / 3.0).abs() < 1e-15);
    assert!((c[1] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn polygon_hexagon_closed_form() {
    // Regular N-gon inscribed in radius r: area (N/2) r^2 sin(2 pi / N).
    let (n, r) = (6usize, 0.1f64);
    let pts: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            [r * th.cos(), r * th.sin()]
        })
        .collect();
    let exact_area = (n as f64 / 2.0) * r * r * (2.0 * std::f64::consts::PI / n as f64).sin();
    let edge = 2.0 * r * (std::f64::consts::PI / n as f64).sin();
    assert!((polygon_area(&pts) - exact_area).abs() < 1e-15);
    assert!((polygon_perimeter(&pts) - 6.0 * edge).abs() < 1e-14);
}

#[test]
fn polygon_measures_invariant_under_relabeling() {
    let pts = [[0.0, 0.0], [0.4, -0.1], [0.9, 0.3], [0.5, 0.8], [-0.1, 0.5]];
    let a0 = polygon_area(&pts);
    let p0 = polygon_perimeter(&pts);
    let c0 = polygon_centroid(&pts);
    for shift in 1..pts.len() {
        let mut rotated = pts.to_vec();
        rotated.rotate_left(shift);
        assert!((polygon_area(&rotated) - a0).abs() < 1e-15);
        assert!((polygon_perimeter(&rotated) - p0).abs() < 1e-14);
        let c = polygon_centroid(&rotated);
        assert!((c[0] - c0[0]).abs() < 1e-14 && (c[1] - c0[1]).abs() < 1e-14);
    }
}

#[test]
fn desk_mesh_measures_match_reference_initial_shape() {
    let mesh = desk_mesh();
    let shape = mesh.shape_required().unwrap();
    assert!((mesh.volume(shape).unwrap() - 0.01).abs() < 1e-14);
    let b = mesh.barycenter(shape).unwrap();
    assert!((b[0] - 0.3).abs() < 1e-14);
    assert!((b[1] - 0.45).abs() < 1e-14);
    assert!((mesh.perimeter(shape) - 0.4).abs() < 1e-14);
}

#[test]
fn constraint_vector_against_targets() {
    let mesh = desk_mesh();
    let shape = mesh.shape_required().unwrap();
    let targets = GeometricTargets { volume: 0.04, barycenter: [0.3, 0.45], perimeter: 0.76 };
    let c = mesh.constraint_vector(shape, &targets).unwrap();
    assert!((c[0] - (-0.03)).abs() < 1e-14);
    assert!(c[1].abs() < 1e-14);
    assert!(c[2].abs() < 1e-14);
    assert!((c[3] - (-0.36)).abs() < 1e-14);

    // Matching targets give the zero vector.
    let exact = GeometricTargets { volume: 0.01, barycenter: [0.3, 0.45], perimeter: 0.4 };
    let c = mesh.constraint_vector(shape, &exact).unwrap();
    assert!(c.iter().all(|x| x.abs() < 1e-14));
}

#[test]
fn smallest_valid_mesh_loads() {
    let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n\
        $PhysicalNames\n4\n1 1 \"inflow\"\n1 2 \"walls\"\n1 3 \"outflow\"\n1 4 \"shape\"\n$EndPhysicalNames\n\
        $Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n\
        $Elements\n6\n\
        1 1 2 1 1 4 1\n\
        2 1 2 2 2 1 2\n\
        3 1 2 3 3 2 3\n\
        4 1 2 2 2 3 4\n\
        5 2 2 0 0 1 2 3\n\
        6 2 2 0 0 1 3 4\n\
        $EndElements\n";
    let mesh = parse_msh(text, &TagMap::identity()).unwrap();
    assert_eq!(mesh.num_cells(), 2);
    assert_eq!(mesh.boundary_facets().len(), 4);
    assert!(mesh.shape().is_none());
    assert!(mesh.cell_signed_area(0) > 0.0);
}

#[test]
fn clockwise_cell_is_repaired() {
    // Triangle 5 is listed clockwise; orientation must be fixed at load.
    let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n\
        $Nodes\n4\n1 0 0 0\n2 1 0 0\n3 1 1 0\n4 0 1 0\n$EndNodes\n\
        $Elements\n2\n\
        5 2 2 0 0 1 3 2\n\
        6 2 2 0 0 1 3 4\n\
        $EndElements\n";
    let mesh = parse_msh(text, &TagMap::identity()).unwrap();
    assert!(mesh.cell_signed_area(0) > 0.0);
    assert!(mesh.cell_signed_area(1) > 0.0);
}

#[test]
fn parse_error_carries_line_number() {
    let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\nnot_a_number\n";
    match parse_msh(text, &TagMap::identity()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn unmapped_physical_group_is_config_error() {
    let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n\
        $PhysicalNames\n1\n1 1 \"mystery\"\n$EndPhysicalNames\n\
        $Nodes\n3\n1 0 0 0\n2 1 0 0\n3 0 1 0\n$EndNodes\n\
        $Elements\n2\n1 1 2 1 1 1 2\n2 2 2 0 0 1 2 3\n$EndElements\n";
    assert!(matches!(parse_msh(text, &TagMap::identity()), Err(Error::Config(_))));
}

#[test]
fn open_shape_loop_is_topology_error() {
    // A single shape facet cannot close a loop.
    let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n\
        $PhysicalNames\n1\n1 4 \"shape\"\n$EndPhysicalNames\n\
        $Nodes\n3\n1 0 0 0\n2 1 0 0\n3 0 1 0\n$EndNodes\n\
        $Elements\n2\n1 1 2 4 4 1 2\n2 2 2 0 0 1 2 3\n$EndElements\n";
    assert!(matches!(parse_msh(text, &TagMap::identity()), Err(Error::Topology(_))));
}

#[test]
fn msh_round_trip_preserves_mesh() {
    let parts = channel_mesh(10, [0.3, 0.4, 0.5, 0.6]).unwrap();
    let text = parts.to_msh_string();
    let mesh = parse_msh(&text, &TagMap::identity()).unwrap();
    let direct = channel_mesh(10, [0.3, 0.4, 0.5, 0.6]).unwrap().into_mesh().unwrap();
    assert_eq!(mesh.num_vertices(), direct.num_vertices());
    assert_eq!(mesh.num_cells(), direct.num_cells());
    let shape = mesh.shape_required().unwrap();
    let direct_shape = direct.shape_required().unwrap();
    assert!((mesh.volume(shape).unwrap() - direct.volume(direct_shape).unwrap()).abs() < 1e-15);
}

#[test]
fn shape_normals_point_into_hole() {
    let mesh = desk_mesh();
    let shape = mesh.shape_required().unwrap();
    let bary = mesh.barycenter(shape).unwrap();
    for i in 0..shape.num_edges() {
        let [a, b] = shape.edge(i);
        let (n, len) = mesh.shape_edge_normal(shape, i);
        assert!((len - 0.05).abs() < 1e-14);
        let mid = [
            0.5 * (mesh.vertex(a)[0] + mesh.vertex(b)[0]),
            0.5 * (mesh.vertex(a)[1] + mesh.vertex(b)[1]),
        ];
        // Outward normal of the fluid domain points toward the hole centroid.
        let toward = [bary[0] - mid[0], bary[1] - mid[1]];
        assert!(n[0] * toward[0] + n[1] * toward[1] > 0.0, "edge {i} normal points away from hole");
    }
}

#[test]
fn deform_zero_step_is_bit_identical() {
    let mesh = desk_mesh();
    let v = vec![[1.3, -0.7]; mesh.num_vertices()];
    let moved = mesh.deform(&v, 0.0).unwrap();
    for i in 0..mesh.num_vertices() {
        assert_eq!(mesh.vertex(i), moved.vertex(i));
    }
}

#[test]
fn deform_rigid_translation() {
    let mesh = desk_mesh();
    let v = vec![[1.0, 0.0]; mesh.num_vertices()];
    let moved = mesh.deform(&v, 0.1).unwrap();
    for i in 0..mesh.num_vertices() {
        assert!((moved.vertex(i)[0] - mesh.vertex(i)[0] - 0.1).abs() < 1e-15);
        assert_eq!(moved.vertex(i)[1], mesh.vertex(i)[1]);
    }
    for c in 0..mesh.num_cells() {
        assert!((moved.cell_signed_area(c) - mesh.cell_signed_area(c)).abs() < 1e-14);
    }
    // Only barycenter entries of the constraint vector move, by exactly t*V.
    let targets = GeometricTargets { volume: 0.01, barycenter: [0.3, 0.45], perimeter: 0.4 };
    let c0 = mesh.constraint_vector(mesh.shape_required().unwrap(), &targets).unwrap();
    let c1 = moved.constraint_vector(moved.shape_required().unwrap(), &targets).unwrap();
    assert!((c1[0] - c0[0]).abs() < 1e-13);
    assert!((c1[1] - c0[1] - 0.1).abs() < 1e-13);
    assert!((c1[2] - c0[2]).abs() < 1e-13);
    assert!((c1[3] - c0[3]).abs() < 1e-13);
}

#[test]
fn deform_scaling_field_scales_areas() {
    let mesh = desk_mesh();
    let v: Vec<[f64; 2]> = mesh.vertices().to_vec();
    let t = 1e-3;
    let moved = mesh.deform(&v, t).unwrap();
    for c in 0..mesh.num_cells() {
        let ratio = moved.cell_signed_area(c) / mesh.cell_signed_area(c);
        assert!((ratio - (1.0 + t) * (1.0 + t)).abs() < 1e-12);
    }
}

#[test]
fn deform_inversion_is_detected() {
    let mesh = desk_mesh();
    let mut v = vec![[0.0, 0.0]; mesh.num_vertices()];
    // Push one interior vertex far across its neighborhood.
    let [a, _, _] = mesh.cell(0);
    v[a] = [10.0, 10.0];
    match mesh.deform(&v, 1.0) {
        Err(Error::InvertedMesh { .. }) => {}
        other => panic!("expected inverted-mesh error, got {other:?}"),
    }
}

#[test]
fn quality_equilateral_is_one() {
    let h = 3.0f64.sqrt() / 2.0;
    let mesh = TriangleMesh::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [0.5, h]],
        vec![[0, 1, 2]],
        vec![],
    )
    .unwrap();
    assert!((mesh.quality() - 1.0).abs() < 1e-14);
}

#[test]
fn quality_sliver_is_near_zero() {
    let mesh = TriangleMesh::from_parts(
        vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1e-6]],
        vec![[0, 1, 2]],
        vec![],
    )
    .unwrap();
    assert!(mesh.quality() < 1e-4);
}

#[test]
fn quality_crisscross_uniform() {
    // Every criss-cross cell is the same right isoceles triangle with
    // quality 2 (sqrt(2) - 1), computed by hand from 2 r_in / R_circ.
    let mesh = unit_square_mesh(4).into_mesh().unwrap();
    let expected = 2.0 * (2.0f64.sqrt() - 1.0);
    assert!((mesh.quality() - expected).abs() < 1e-12);
}

#[test]
fn volume_derivative_matches_boundary_integral() {
    // d/dt vol(u_t) = -int_u V.n ds with n the outward normal of the fluid
    // domain; this finite-difference check pins the sign convention used by
    // the geometric shape-derivative terms.
    let mesh = desk_mesh();
    let shape = mesh.shape_required().unwrap().clone();
    let mut v = vec![[0.0, 0.0]; mesh.num_vertices()];
    let mut seed = 0x9e3779b97f4a7c15u64;
    let mut next = || {
        seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for &vtx in shape.vertices() {
        v[vtx] = [next(), next()];
    }

    let mut boundary_integral = 0.0;
    for i in 0..shape.num_edges() {
        let [a, b] = shape.edge(i);
        let (n, len) = mesh.shape_edge_normal(&shape, i);
        let vn_mid = 0.5 * ((v[a][0] + v[b][0]) * n[0] + (v[a][1] + v[b][1]) * n[1]);
        boundary_integral += vn_mid * len;
    }

    let t = 1e-6;
    let vol_plus = {
        let m = mesh.deform(&v, t).unwrap();
        m.volume(m.shape_required().unwrap()).unwrap()
    };
    let vol_minus = {
        let m = mesh.deform(&v, -t).unwrap();
        m.volume(m.shape_required().unwrap()).unwrap()
    };
    let fd = (vol_plus - vol_minus) / (2.0 * t);
    assert!(
        (fd + boundary_integral).abs() < 1e-9 * boundary_integral.abs().max(1.0),
        "fd {fd} vs -int V.n {}",
        -boundary_integral
    );
}

#[test]
fn annulus_mesh_is_valid() {
    let mesh = annulus_mesh([0.0, 0.0], 0.1, 0.3, 4, 6).into_mesh().unwrap();
    let shape = mesh.shape_required().unwrap();
    // Inner hexagon inscribed in radius 0.1.
    let exact = 3.0 * 0.1 * 0.1 * (std::f64::consts::PI / 3.0).sin();
    assert!((mesh.volume(shape).unwrap() - exact).abs() < 1e-15);
    assert!((mesh.perimeter(shape) - 0.6).abs() < 1e-15);
}
