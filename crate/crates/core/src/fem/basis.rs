//! Lagrange basis functions on the reference triangle.
//!
//! Barycentric coordinates are `l0 = 1 - x - y`, `l1 = x`, `l2 = y`.
//! Local node ordering:
//! - P1: the three vertices `[0, 1, 2]`.
//! - P2: vertices `[0, 1, 2]` followed by the edge midpoints opposite each
//!   vertex, i.e. node 3 on edge (1,2), node 4 on edge (2,0), node 5 on
//!   edge (0,1).
//!
//! Gradients are with respect to reference coordinates; push them forward
//! with the inverse transposed cell Jacobian.

/// P1 values and reference gradients at a reference point.
pub fn p1_basis(xy: [f64; 2]) -> ([f64; 3], [[f64; 2]; 3]) {
    let [x, y] = xy;
    let vals = [1.0 - x - y, x, y];
    let grads = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    (vals, grads)
}

/// P2 values and reference gradients at a reference point.
pub fn p2_basis(xy: [f64; 2]) -> ([f64; 6], [[f64; 2]; 6]) {
    let [x, y] = xy;
    let l = [1.0 - x - y, x, y];
    let dl = [[-1.0f64, -1.0], [1.0, 0.0], [0.0, 1.0]];

    let mut vals = [0.0; 6];
    let mut grads = [[0.0; 2]; 6];
    for i in 0..3 {
        vals[i] = l[i] * (2.0 * l[i] - 1.0);
        grads[i] = [dl[i][0] * (4.0 * l[i] - 1.0), dl[i][1] * (4.0 * l[i] - 1.0)];
    }
    // Midpoint nodes: 3 on (1,2), 4 on (2,0), 5 on (0,1).
    let pairs = [(1, 2), (2, 0), (0, 1)];
    for (k, (a, b)) in pairs.into_iter().enumerate() {
        vals[3 + k] = 4.0 * l[a] * l[b];
        grads[3 + k] = [
            4.0 * (dl[a][0] * l[b] + l[a] * dl[b][0]),
            4.0 * (dl[a][1] * l[b] + l[a] * dl[b][1]),
        ];
    }
    (vals, grads)
}
