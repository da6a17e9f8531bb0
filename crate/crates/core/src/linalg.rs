//! Banded symmetric storage and an LDLᵀ factorization without pivoting.
//!
//! Structured row-major numbering gives a half-bandwidth of about `2(nx+2)`,
//! so a banded factorization is both simple and fast. The diagonal factor
//! also gives the inertia used by the stability monitor.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SymBandMatrix {
    n: usize,
    bw: usize,
    /// row `i` holds columns `i-bw ..= i` at `data[i*(bw+1) + (j+bw-i)]`
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Add `v` to entries (i, j) and (j, i).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let a = self.data[self.slot(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.data[self.slot(i, i)] * x[i];
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn factor(&self) -> Result<LdltFactor> {
        let n = self.n;
        let bw = self.bw;
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut l = self.data.clone();
        let mut d = vec![0.0; n];
        let mut w = vec![0.0; bw + 1];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = i * (bw + 1);
            for j in lo..i {
                let jlo = j.saturating_sub(bw).max(lo);
                let jrow = j * (bw + 1);
                let mut s = l[row + j + bw - i];
                for k in jlo..j {
                    s -= w[k - lo] * l[jrow + k + bw - j];
                }
                w[j - lo] = s;
                l[row + j + bw - i] = s / d[j];
            }
            let mut di = l[row + bw];
            for k in lo..i {
                di -= w[k - lo] * l[row + k + bw - i];
            }
            if !(di.abs() > 1e-14 * scale) || !di.is_finite() {
                return Err(Error::Singular { row: i, pivot: di });
            }
            d[i] = di;
            l[row + bw] = 1.0;
        }
        Ok(LdltFactor { n, bw, l, d })
    }
}

#[derive(Debug, Clone)]
pub struct LdltFactor {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl LdltFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let bw = self.bw;
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = i * (bw + 1);
            let mut s = x[i];
            for k in lo..i {
                s -= self.l[row + k + bw - i] * x[k];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(bw);
            let row = i * (bw + 1);
            let xi = x[i];
            for k in lo..i {
                x[k] -= self.l[row + k + bw - i] * xi;
            }
        }
        x
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    /// (positive, negative) pivot counts. By Sylvester's law this is the
    /// inertia of the factored matrix.
    pub fn inertia(&self) -> (usize, usize) {
        let neg = self.d.iter().filter(|&&v| v < 0.0).count();
        (self.n - neg, neg)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.d.iter().all(|&v| v > 0.0)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_band(n: usize, bw: usize, shift: f64, seed: u64) -> SymBandMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = SymBandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                a.add(i, j, next());
            }
            a.add(i, i, shift + next());
        }
        a
    }

    #[test]
    fn solves_spd_system() {
        let a = random_band(40, 5, 6.0, 7);
        let x: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let f = a.factor().unwrap();
        let y = f.solve(&b);
        for i in 0..40 {
            assert!((x[i] - y[i]).abs() < 1e-12);
        }
        assert!(f.is_positive_definite());
    }

    #[test]
    fn solves_indefinite_system_and_counts_inertia() {
        let mut a = SymBandMatrix::zeros(3, 1);
        a.add(0, 0, 2.0);
        a.add(1, 1, -3.0);
        a.add(2, 2, 1.0);
        a.add(1, 0, 0.5);
        a.add(2, 1, 0.25);
        let f = a.factor().unwrap();
        assert_eq!(f.inertia(), (2, 1));
        let x = [1.0, -2.0, 0.5];
        let y = f.solve(&a.matvec(&x));
        for i in 0..3 {
            assert!((x[i] - y[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let mut a = SymBandMatrix::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 1.0);
        a.add(1, 1, 1.0);
        assert!(matches!(a.factor(), Err(Error::Singular { row: 1, .. })));
    }
}
