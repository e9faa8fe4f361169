//! Small fixed-size 2x2 tensor helpers shared by the weak-form kernels.
//!
//! Matrices are index-convention `m[i][j] = d u_i / d x_j` for Jacobians of
//! vector fields, so `(a . grad) u = m a`.

pub type Mat2 = [[f64; 2]; 2];

pub const ZERO: Mat2 = [[0.0, 0.0], [0.0, 0.0]];

/// Symmetric part: (m + m^T) / 2.
pub fn sym(m: Mat2) -> Mat2 {
    [
        [m[0][0], 0.5 * (m[0][1] + m[1][0])],
        [0.5 * (m[0][1] + m[1][0]), m[1][1]],
    ]
}

/// Frobenius inner product.
pub fn ddot(a: Mat2, b: Mat2) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Frobenius norm.
pub fn norm(m: Mat2) -> f64 {
    ddot(m, m).sqrt()
}

pub fn scale(m: Mat2, s: f64) -> Mat2 {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

pub fn add(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

/// Matrix product a b.
pub fn matmul(a: Mat2, b: Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Matrix-vector product m v.
pub fn matvec(m: Mat2, v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn trace(m: Mat2) -> f64 {
    m[0][0] + m[1][1]
}

pub fn transpose(m: Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}
