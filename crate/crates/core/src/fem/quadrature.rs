//! Gauss quadrature rules on the reference triangle
//! `{(x, y) : x >= 0, y >= 0, x + y <= 1}`.
//!
//! Weights include the reference area, so they sum to 1/2 and
//! `int_K f = sum_q w_q |det J| f(x_q)` on a physical cell.

use crate::error::{Error, Result};

/// A quadrature node in reference coordinates with its weight.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub xy: [f64; 2],
    pub w: f64,
}

const P1: [QuadPoint; 1] = [QuadPoint { xy: [1.0 / 3.0, 1.0 / 3.0], w: 0.5 }];

const P2: [QuadPoint; 3] = [
    QuadPoint { xy: [1.0 / 6.0, 1.0 / 6.0], w: 1.0 / 6.0 },
    QuadPoint { xy: [2.0 / 3.0, 1.0 / 6.0], w: 1.0 / 6.0 },
    QuadPoint { xy: [1.0 / 6.0, 2.0 / 3.0], w: 1.0 / 6.0 },
];

const P3: [QuadPoint; 4] = [
    QuadPoint { xy: [1.0 / 3.0, 1.0 / 3.0], w: -27.0 / 96.0 },
    QuadPoint { xy: [0.6, 0.2], w: 25.0 / 96.0 },
    QuadPoint { xy: [0.2, 0.6], w: 25.0 / 96.0 },
    QuadPoint { xy: [0.2, 0.2], w: 25.0 / 96.0 },
];

const A4_1: f64 = 0.445948490915965;
const W4_1: f64 = 0.223381589678011 / 2.0;
const A4_2: f64 = 0.091576213509771;
const W4_2: f64 = 0.109951743655322 / 2.0;

const P4: [QuadPoint; 6] = [
    QuadPoint { xy: [A4_1, A4_1], w: W4_1 },
    QuadPoint { xy: [1.0 - 2.0 * A4_1, A4_1], w: W4_1 },
    QuadPoint { xy: [A4_1, 1.0 - 2.0 * A4_1], w: W4_1 },
    QuadPoint { xy: [A4_2, A4_2], w: W4_2 },
    QuadPoint { xy: [1.0 - 2.0 * A4_2, A4_2], w: W4_2 },
    QuadPoint { xy: [A4_2, 1.0 - 2.0 * A4_2], w: W4_2 },
];

const A5_1: f64 = 0.470142064105115;
const W5_1: f64 = 0.132394152788506 / 2.0;
const A5_2: f64 = 0.101286507323456;
const W5_2: f64 = 0.125939180544827 / 2.0;

const P5: [QuadPoint; 7] = [
    QuadPoint { xy: [1.0 / 3.0, 1.0 / 3.0], w: 0.225 / 2.0 },
    QuadPoint { xy: [A5_1, A5_1], w: W5_1 },
    QuadPoint { xy: [1.0 - 2.0 * A5_1, A5_1], w: W5_1 },
    QuadPoint { xy: [A5_1, 1.0 - 2.0 * A5_1], w: W5_1 },
    QuadPoint { xy: [A5_2, A5_2], w: W5_2 },
    QuadPoint { xy: [1.0 - 2.0 * A5_2, A5_2], w: W5_2 },
    QuadPoint { xy: [A5_2, 1.0 - 2.0 * A5_2], w: W5_2 },
];

const A6_1: f64 = 0.249286745170910;
const W6_1: f64 = 0.116786275726379 / 2.0;
const A6_2: f64 = 0.063089014491502;
const W6_2: f64 = 0.050844906370207 / 2.0;
const B6: f64 = 0.310352451033785;
const C6: f64 = 0.053145049844816;
const W6_3: f64 = 0.082851075618374 / 2.0;

const P6: [QuadPoint; 12] = [
    QuadPoint { xy: [A6_1, A6_1], w: W6_1 },
    QuadPoint { xy: [1.0 - 2.0 * A6_1, A6_1], w: W6_1 },
    QuadPoint { xy: [A6_1, 1.0 - 2.0 * A6_1], w: W6_1 },
    QuadPoint { xy: [A6_2, A6_2], w: W6_2 },
    QuadPoint { xy: [1.0 - 2.0 * A6_2, A6_2], w: W6_2 },
    QuadPoint { xy: [A6_2, 1.0 - 2.0 * A6_2], w: W6_2 },
    QuadPoint { xy: [B6, C6], w: W6_3 },
    QuadPoint { xy: [C6, B6], w: W6_3 },
    QuadPoint { xy: [1.0 - B6 - C6, B6], w: W6_3 },
    QuadPoint { xy: [B6, 1.0 - B6 - C6], w: W6_3 },
    QuadPoint { xy: [C6, 1.0 - B6 - C6], w: W6_3 },
    QuadPoint { xy: [1.0 - B6 - C6, C6], w: W6_3 },
];

/// Returns a rule exact for all polynomials up to `degree`, 1 <= degree <= 6.
pub fn quadrature(degree: usize) -> Result<&'static [QuadPoint]> {
    match degree {
        1 => Ok(&P1),
        2 => Ok(&P2),
        3 => Ok(&P3),
        4 => Ok(&P4),
        5 => Ok(&P5),
        6 => Ok(&P6),
        _ => Err(Error::Assembly(format!("unsupported quadrature degree {degree}"))),
    }
}

/// Default degree for the constitutive kernels; their integrands are
/// non-polynomial quotients, so this is a cost/accuracy trade-off.
pub const DEFAULT_DEGREE: usize = 4;
