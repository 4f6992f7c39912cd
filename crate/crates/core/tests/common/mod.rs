//! Test-side reference formulas, written from the model equations and
//! parameter tables rather than from the library code.

#![allow(dead_code)]

pub const TAU_IP3: f64 = 1.0 / 0.14;
pub const IP3_STAR: f64 = 0.16;
pub const V1: f64 = 6.0;
pub const V2: f64 = 0.11;
pub const V3: f64 = 2.2;
pub const V4: f64 = 0.3;
pub const V6: f64 = 0.2;
pub const K1: f64 = 0.5;
pub const K2: f64 = 1.0;
pub const K3: f64 = 0.1;
pub const K4: f64 = 1.1;
pub const C0: f64 = 2.0;
pub const C1: f64 = 0.185;
pub const D1: f64 = 0.13;
pub const D2: f64 = 1.049;
pub const D3: f64 = 943.4e-3;
pub const D5: f64 = 82e-3;
pub const A2: f64 = 0.14;
pub const ALPHA: f64 = 0.8;
pub const A_GLU: f64 = 5.0;

pub fn rhs(x: [f64; 3], u: f64) -> [f64; 3] {
    let [x1, x2, x3] = x;
    let q = C0 / C1 - (1.0 + 1.0 / C1) * x2;
    let hill = (x1 / (x1 + D1)).powi(3) * (x2 / (x2 + D5)).powi(3) * x3.powi(3);
    [
        (IP3_STAR - x1) / TAU_IP3 + V4 * (x2 + (1.0 - ALPHA) * K4) / (x2 + K4) + u,
        -K1 * x2 + C1 * V1 * hill * q - V3 * x2.powi(2) / (K3.powi(2) + x2.powi(2))
            + V6 * x1.powi(2) / (K2.powi(2) + x1.powi(2))
            + C1 * V2 * q,
        A2 * (D2 * (x1 + D1) / (x1 + D3) * (1.0 - x3) - x2 * x3),
    ]
}

/// Hand-derived partial derivatives of [`rhs`].
pub fn analytic_jacobian(x: [f64; 3]) -> [[f64; 3]; 3] {
    let [x1, x2, x3] = x;
    let q = C0 / C1 - (1.0 + 1.0 / C1) * x2;
    let dq = -(1.0 + 1.0 / C1);
    let a = x1 / (x1 + D1);
    let b = x2 / (x2 + D5);
    let da = D1 / (x1 + D1).powi(2);
    let db = D5 / (x2 + D5).powi(2);
    let h = a.powi(3) * b.powi(3) * x3.powi(3);
    let h1 = 3.0 * a.powi(2) * da * b.powi(3) * x3.powi(3);
    let h2 = 3.0 * a.powi(3) * b.powi(2) * db * x3.powi(3);
    let h3 = 3.0 * a.powi(3) * b.powi(3) * x3.powi(2);
    [
        [-1.0 / TAU_IP3, V4 * ALPHA * K4 / (x2 + K4).powi(2), 0.0],
        [
            C1 * V1 * q * h1 + 2.0 * V6 * x1 * K2.powi(2) / (K2.powi(2) + x1.powi(2)).powi(2),
            -K1 + C1 * V1 * (q * h2 + h * dq) - 2.0 * V3 * x2 * K3.powi(2) / (K3.powi(2) + x2.powi(2)).powi(2)
                + C1 * V2 * dq,
            C1 * V1 * q * h3,
        ],
        [
            A2 * D2 * (1.0 - x3) * (D3 - D1) / (x1 + D3).powi(2),
            -A2 * x3,
            -A2 * (D2 * (x1 + D1) / (x1 + D3) + x2),
        ],
    ]
}

pub fn mu1() -> f64 {
    IP3_STAR + TAU_IP3 * (V4 + A_GLU)
}

pub fn mu2() -> f64 {
    (V6 + C0 * (V1 - V2)) / (K1 + V2 * (1.0 + C1))
}

pub fn i_astro(x2_um: f64) -> f64 {
    let y = x2_um * 1000.0 - 196.69;
    if y > 0.0 && y.ln() > 0.0 {
        2.11 * y.ln()
    } else {
        0.0
    }
}

pub fn i_astro_fit(x2_um: f64) -> f64 {
    6.3611 * (14.682 * x2_um - 3.3582).tanh() + 6.3611
}

/// det(M - λI) by cofactor expansion.
pub fn char_det(m: &[[f64; 3]; 3], re: f64, im: f64) -> (f64, f64) {
    type C = (f64, f64);
    let mul = |a: C, b: C| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let sub = |a: C, b: C| (a.0 - b.0, a.1 - b.1);
    let add = |a: C, b: C| (a.0 + b.0, a.1 + b.1);
    let e = |i: usize, j: usize| -> C {
        if i == j {
            (m[i][j] - re, -im)
        } else {
            (m[i][j], 0.0)
        }
    };
    let minor = |r1: usize, r2: usize, c1: usize, c2: usize| sub(mul(e(r1, c1), e(r2, c2)), mul(e(r1, c2), e(r2, c1)));
    let t0 = mul(e(0, 0), minor(1, 2, 1, 2));
    let t1 = mul(e(0, 1), minor(1, 2, 0, 2));
    let t2 = mul(e(0, 2), minor(1, 2, 0, 1));
    add(sub(t0, t1), t2)
}
