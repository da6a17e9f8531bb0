//! Small dense tensors over the 2-D index set, stored pair-major.
//!
//! A second-order tensor `T_ij` lives at `T[2*i + j]`; a fourth-order tensor
//! `A_ijkl` at `A[4*(2i+j) + (2k+l)]`, and so on. Contractions over index pairs
//! then become ordinary matrix products in the 4-dimensional pair space.

pub type T2 = [f64; 4];
pub type T4 = [f64; 16];
pub type T6 = [f64; 64];
pub type T8 = [f64; 256];

pub const IDENTITY: T2 = [1.0, 0.0, 0.0, 1.0];

#[inline]
pub fn pair(i: usize, j: usize) -> usize {
    2 * i + j
}

#[inline]
pub fn det(a: &T2) -> f64 {
    a[0] * a[3] - a[1] * a[2]
}

pub fn inverse(a: &T2) -> Option<T2> {
    let d = det(a);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some([a[3] / d, -a[1] / d, -a[2] / d, a[0] / d])
}

#[inline]
pub fn add(a: &T2, b: &T2) -> T2 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

#[inline]
pub fn scale(a: &T2, s: f64) -> T2 {
    [a[0] * s, a[1] * s, a[2] * s, a[3] * s]
}

#[inline]
pub fn axpy(y: &mut T2, s: f64, x: &T2) {
    for q in 0..4 {
        y[q] += s * x[q];
    }
}

#[inline]
pub fn dot(a: &T2, b: &T2) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// `A : x`, contracting the trailing pair.
#[inline]
pub fn c4(a: &T4, x: &T2) -> T2 {
    let mut out = [0.0; 4];
    for p in 0..4 {
        out[p] = a[4 * p] * x[0] + a[4 * p + 1] * x[1] + a[4 * p + 2] * x[2] + a[4 * p + 3] * x[3];
    }
    out
}

/// `A6 : x`, a fourth-order tensor.
pub fn c6(a: &T6, x: &T2) -> T4 {
    let mut out = [0.0; 16];
    for pq in 0..16 {
        let b = 4 * pq;
        out[pq] = a[b] * x[0] + a[b + 1] * x[1] + a[b + 2] * x[2] + a[b + 3] * x[3];
    }
    out
}

/// `A8 : x`, a sixth-order tensor.
pub fn c8(a: &T8, x: &T2) -> T6 {
    let mut out = [0.0; 64];
    for pqr in 0..64 {
        let b = 4 * pqr;
        out[pqr] = a[b] * x[0] + a[b + 1] * x[1] + a[b + 2] * x[2] + a[b + 3] * x[3];
    }
    out
}

/// `A6 : Q` with Q a fourth-order tensor on the trailing two pairs.
pub fn c6_4(a: &T6, q: &T4) -> T2 {
    let mut out = [0.0; 4];
    for p in 0..4 {
        out[p] = (0..16).map(|rs| a[16 * p + rs] * q[rs]).sum();
    }
    out
}

/// Outer product `x ⊗ y` as a fourth-order tensor.
pub fn outer(x: &T2, y: &T2) -> T4 {
    let mut out = [0.0; 16];
    for p in 0..4 {
        for q in 0..4 {
            out[4 * p + q] = x[p] * y[q];
        }
    }
    out
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
