//! Regularized neo-Hookean material in plane strain.
//!
//! `F` is the in-plane 2×2 block of the deformation gradient with `F33 = 1`.
//! Energy `ψ = ½κ(J−1)² + ½μ(J^{-2/3} tr C − 3)`. The stress and tangents are
//! written in terms of `H = F^{-T}`, `D = ∂H/∂F` and its derivative `J̄`, which
//! keeps the sixth- and eighth-order tensors readable.
//! Index convention: `(A4)_ijkl = ∂P_ij/∂F_kl`, and higher tensors append the
//! differentiation pair at the end.

use crate::error::{Error, Result};
use crate::tensor::{self, T2, T4, T6, T8};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub e0: f64,
    pub nu: f64,
    pub el0: f64,
    pub nu_l: f64,
}

impl MaterialParams {
    pub fn new(e0: f64, nu: f64, el0: f64, nu_l: f64) -> Result<Self> {
        for (name, v) in [("nu", nu), ("nu_l", nu_l)] {
            if !(v > -1.0 && v < 0.5) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside (-1, 0.5)")));
            }
        }
        if !(e0 > 0.0) || !(el0 > 0.0) {
            return Err(Error::InvalidArgument("moduli must be positive".into()));
        }
        Ok(Self { e0, nu, el0, nu_l })
    }

    pub fn kappa(&self) -> f64 {
        bulk_shear(self.e0, self.nu).0
    }
    pub fn mu(&self) -> f64 {
        bulk_shear(self.e0, self.nu).1
    }
    pub fn kappa_l(&self) -> f64 {
        bulk_shear(self.el0, self.nu_l).0
    }
    pub fn mu_l(&self) -> f64 {
        bulk_shear(self.el0, self.nu_l).1
    }

    /// (κ, μ) of the hyperelastic phase at unit Young's modulus.
    pub fn unit_moduli(&self) -> (f64, f64) {
        bulk_shear(1.0, self.nu)
    }

    /// (κ_L, μ_L) of the linear phase at unit Young's modulus.
    pub fn unit_moduli_linear(&self) -> (f64, f64) {
        bulk_shear(1.0, self.nu_l)
    }
}

pub fn bulk_shear(e: f64, nu: f64) -> (f64, f64) {
    (e / (3.0 * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
}

#[derive(Debug, Clone, Copy)]
pub struct DeformationState {
    pub f: T2,
    pub finv: T2,
    pub j: f64,
    pub trc: f64,
}

impl DeformationState {
    pub fn new(f: T2) -> Result<Self> {
        let j = tensor::det(&f);
        if !(j > 0.0) || !j.is_finite() {
            return Err(Error::InadmissibleState(j));
        }
        let finv = tensor::inverse(&f).ok_or(Error::InadmissibleState(j))?;
        let trc = tensor::dot(&f, &f) + 1.0;
        Ok(Self { f, finv, j, trc })
    }

    #[inline]
    fn fi(&self, a: usize, b: usize) -> f64 {
        self.finv[2 * a + b]
    }

    /// `H = F^{-T}`
    #[inline]
    fn h(&self, a: usize, b: usize) -> f64 {
        self.finv[2 * b + a]
    }

    #[inline]
    fn ff(&self, a: usize, b: usize) -> f64 {
        self.f[2 * a + b]
    }
}

struct Coefficients {
    c1: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    m: f64,
}

fn coefficients(s: &DeformationState, kappa: f64, mu: f64) -> Coefficients {
    let j = s.j;
    let m = mu * j.powf(-2.0 / 3.0);
    let t = m * s.trc;
    Coefficients {
        c1: kappa * (j * j - j) - t / 3.0,
        c2: kappa * (2.0 * j * j - j) + 2.0 * t / 9.0,
        c3: kappa * (4.0 * j * j - j) - 4.0 * t / 27.0,
        c4: kappa * (8.0 * j * j - j) + 8.0 * t / 81.0,
        m,
    }
}

#[inline]
fn delta(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

pub fn free_energy(s: &DeformationState, kappa: f64, mu: f64) -> f64 {
    let i1 = s.j.powf(-2.0 / 3.0) * s.trc;
    0.5 * kappa * (s.j - 1.0).powi(2) + 0.5 * mu * (i1 - 3.0)
}

pub fn pk1_stress(s: &DeformationState, kappa: f64, mu: f64) -> T2 {
    let m = mu * s.j.powf(-2.0 / 3.0);
    let vol = kappa * s.j * (s.j - 1.0) - m * s.trc / 3.0;
    let mut p = [0.0; 4];
    for i in 0..2 {
        for j in 0..2 {
            p[2 * i + j] = vol * s.h(i, j) + m * s.ff(i, j);
        }
    }
    p
}

/// Precomputed `D_ijkl = ∂H_ij/∂F_kl = −F⁻¹_li F⁻¹_jk`.
fn d_tensor(s: &DeformationState) -> T4 {
    let mut d = [0.0; 16];
    for (ij, i, j) in pairs() {
        for (kl, k, l) in pairs() {
            d[4 * ij + kl] = -s.fi(l, i) * s.fi(j, k);
        }
    }
    d
}

/// `J̄_ijklmn = ∂D_ijkl/∂F_mn`.
fn jbar_tensor(s: &DeformationState) -> T6 {
    let mut t = [0.0; 64];
    for (ij, i, j) in pairs() {
        for (kl, k, l) in pairs() {
            for (mn, m, n) in pairs() {
                t[16 * ij + 4 * kl + mn] =
                    s.fi(l, m) * s.fi(n, i) * s.fi(j, k) + s.fi(l, i) * s.fi(j, m) * s.fi(n, k);
            }
        }
    }
    t
}

fn pairs() -> impl Iterator<Item = (usize, usize, usize)> {
    (0..4).map(|p| (p, p / 2, p % 2))
}

pub fn tangent_a4(s: &DeformationState, kappa: f64, mu: f64) -> T4 {
    let c = coefficients(s, kappa, mu);
    let d = d_tensor(s);
    let mut a = [0.0; 16];
    for (ij, i, j) in pairs() {
        for (kl, k, l) in pairs() {
            a[4 * ij + kl] = c.c1 * d[4 * ij + kl] + c.c2 * s.h(i, j) * s.h(k, l)
                - 2.0 / 3.0 * c.m * (s.h(i, j) * s.ff(k, l) + s.ff(i, j) * s.h(k, l))
                + c.m * delta(i, k) * delta(j, l);
        }
    }
    a
}

pub fn tangent_a6(s: &DeformationState, kappa: f64, mu: f64) -> T6 {
    let c = coefficients(s, kappa, mu);
    let d = d_tensor(s);
    let jb = jbar_tensor(s);
    let m = c.m;
    let mut a = [0.0; 64];
    for (ij, i, j) in pairs() {
        let hij = s.h(i, j);
        let fij = s.ff(i, j);
        for (kl, k, l) in pairs() {
            let hkl = s.h(k, l);
            let fkl = s.ff(k, l);
            let dijkl = d[4 * ij + kl];
            for (mn, mm, n) in pairs() {
                let hmn = s.h(mm, n);
                let fmn = s.ff(mm, n);
                let dijmn = d[4 * ij + mn];
                let dklmn = d[4 * kl + mn];
                let d_hh = dijmn * hkl + hij * dklmn;
                let d_hf = dijmn * fkl + hij * delta(k, mm) * delta(l, n);
                let d_fh = delta(i, mm) * delta(j, n) * hkl + fij * dklmn;
                a[16 * ij + 4 * kl + mn] = c.c1 * jb[16 * ij + 4 * kl + mn]
                    + c.c2 * dijkl * hmn
                    - 2.0 / 3.0 * m * dijkl * fmn
                    + c.c2 * d_hh
                    + 4.0 / 9.0 * m * hij * hkl * fmn
                    + c.c3 * hij * hkl * hmn
                    - 2.0 / 3.0 * m * d_hf
                    + 4.0 / 9.0 * m * hij * fkl * hmn
                    - 2.0 / 3.0 * m * d_fh
                    + 4.0 / 9.0 * m * fij * hkl * hmn
                    - 2.0 / 3.0 * m * delta(i, k) * delta(j, l) * hmn;
            }
        }
    }
    a
}

pub fn tangent_a8(s: &DeformationState, kappa: f64, mu: f64) -> T8 {
    let c = coefficients(s, kappa, mu);
    let d = d_tensor(s);
    let jb = jbar_tensor(s);
    let m = c.m;
    let dd = |a: usize, b: usize| d[4 * a + b];
    let jj = |a: usize, b: usize, e: usize| jb[16 * a + 4 * b + e];
    let h = |p: usize| s.h(p / 2, p % 2);
    let f = |p: usize| s.ff(p / 2, p % 2);
    // δ_ik δ_jl in pair form is simply equality of the pairs
    let id = |a: usize, b: usize| delta(a, b);
    let mut out = [0.0; 256];
    for (ij, i, j) in pairs() {
        for (kl, k, l) in pairs() {
            for (mn, mm, n) in pairs() {
                for (pq, p, q) in pairs() {
                    let fi = |a: usize, b: usize| s.fi(a, b);
                    let djb = -(fi(l, p) * fi(q, mm) * fi(n, i) * fi(j, k)
                        + fi(l, mm) * fi(n, p) * fi(q, i) * fi(j, k)
                        + fi(l, mm) * fi(n, i) * fi(j, p) * fi(q, k)
                        + fi(l, p) * fi(q, i) * fi(j, mm) * fi(n, k)
                        + fi(l, i) * fi(j, p) * fi(q, mm) * fi(n, k)
                        + fi(l, i) * fi(j, mm) * fi(n, p) * fi(q, k));
                    let (hij, hkl, hmn, hpq) = (h(ij), h(kl), h(mn), h(pq));
                    let (fij, fkl, fmn, fpq) = (f(ij), f(kl), f(mn), f(pq));
                    let jb_ijklmn = jj(ij, kl, mn);

                    let d_dh = jj(ij, kl, pq) * hmn + dd(ij, kl) * dd(mn, pq);
                    let d_df = jj(ij, kl, pq) * fmn + dd(ij, kl) * id(mn, pq);
                    let d_hh = dd(ij, mn) * hkl + hij * dd(kl, mn);
                    let d2_hh = jj(ij, mn, pq) * hkl
                        + dd(ij, mn) * dd(kl, pq)
                        + dd(ij, pq) * dd(kl, mn)
                        + hij * jj(kl, mn, pq);
                    let d_hhf = dd(ij, pq) * hkl * fmn + hij * dd(kl, pq) * fmn + hij * hkl * id(mn, pq);
                    let d_hhh = dd(ij, pq) * hkl * hmn + hij * dd(kl, pq) * hmn + hij * hkl * dd(mn, pq);
                    let d_hf = dd(ij, mn) * fkl + hij * id(kl, mn);
                    let d2_hf = jj(ij, mn, pq) * fkl + dd(ij, mn) * id(kl, pq) + dd(ij, pq) * id(kl, mn);
                    let d_hfh = dd(ij, pq) * fkl * hmn + hij * id(kl, pq) * hmn + hij * fkl * dd(mn, pq);
                    let d_fh = id(ij, mn) * hkl + fij * dd(kl, mn);
                    let d2_fh = id(ij, mn) * dd(kl, pq) + id(ij, pq) * dd(kl, mn) + fij * jj(kl, mn, pq);
                    let d_fhh = id(ij, pq) * hkl * hmn + fij * dd(kl, pq) * hmn + fij * hkl * dd(mn, pq);

                    let v = c.c1 * djb + c.c2 * jb_ijklmn * hpq - 2.0 / 3.0 * m * jb_ijklmn * fpq
                        + c.c2 * d_dh
                        + c.c3 * dd(ij, kl) * hmn * hpq
                        + 4.0 / 9.0 * m * dd(ij, kl) * hmn * fpq
                        - 2.0 / 3.0 * m * d_df
                        + 4.0 / 9.0 * m * dd(ij, kl) * fmn * hpq
                        + c.c2 * d2_hh
                        + c.c3 * d_hh * hpq
                        + 4.0 / 9.0 * m * d_hh * fpq
                        + 4.0 / 9.0 * m * d_hhf
                        - 8.0 / 27.0 * m * hij * hkl * fmn * hpq
                        + c.c3 * d_hhh
                        + c.c4 * hij * hkl * hmn * hpq
                        - 8.0 / 27.0 * m * hij * hkl * hmn * fpq
                        - 2.0 / 3.0 * m * d2_hf
                        + 4.0 / 9.0 * m * d_hf * hpq
                        + 4.0 / 9.0 * m * d_hfh
                        - 8.0 / 27.0 * m * hij * fkl * hmn * hpq
                        - 2.0 / 3.0 * m * d2_fh
                        + 4.0 / 9.0 * m * d_fh * hpq
                        + 4.0 / 9.0 * m * d_fhh
                        - 8.0 / 27.0 * m * fij * hkl * hmn * hpq
                        - 2.0 / 3.0 * m * id(ij, kl) * dd(mn, pq)
                        + 4.0 / 9.0 * m * id(ij, kl) * hmn * hpq;
                    out[64 * ij + 16 * kl + 4 * mn + pq] = v;
                }
            }
        }
    }
    out
}

/// Plane-strain isotropic elasticity tensor `ℂ = 3κℙ_vol + 2μℙ_dev^S` restricted
/// to the in-plane components.
pub fn linear_elasticity_tensor(kappa: f64, mu: f64) -> T4 {
    let lambda = kappa - 2.0 * mu / 3.0;
    let mut c = [0.0; 16];
    for (ij, i, j) in pairs() {
        for (kl, k, l) in pairs() {
            c[4 * ij + kl] = lambda * delta(i, j) * delta(k, l)
                + mu * (delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k));
        }
    }
    c
}

/// Voigt matrix of the plane-strain tensor acting on `(ε11, ε22, 2ε12)`.
pub fn linear_elasticity_matrix(kappa: f64, mu: f64) -> [[f64; 3]; 3] {
    let lambda = kappa - 2.0 * mu / 3.0;
    [
        [lambda + 2.0 * mu, lambda, 0.0],
        [lambda, lambda + 2.0 * mu, 0.0],
        [0.0, 0.0, mu],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64, scale: f64) -> f64 {
        (a - b).abs() / scale.max(1e-12)
    }

    #[test]
    fn reference_state_is_stress_free() {
        let s = DeformationState::new(tensor::IDENTITY).unwrap();
        assert_eq!(free_energy(&s, 1.0, 1.0), 0.0);
        assert!(tensor::max_abs(&pk1_stress(&s, 2.0, 0.7)) < 1e-15);
    }

    #[test]
    fn rotation_has_zero_energy() {
        let t: f64 = 0.7;
        let s = DeformationState::new([t.cos(), -t.sin(), t.sin(), t.cos()]).unwrap();
        assert!(free_energy(&s, 3.0, 1.5).abs() < 1e-14);
    }

    #[test]
    fn uniaxial_energy_value() {
        // ψ at F = diag(1.1, 1), κ = μ = 1, evaluated independently
        let s = DeformationState::new([1.1, 0.0, 0.0, 1.0]).unwrap();
        let expected = 0.5 * 0.1f64.powi(2) + 0.5 * (1.1f64.powf(-2.0 / 3.0) * 3.21 - 3.0);
        assert!((free_energy(&s, 1.0, 1.0) - expected).abs() < 1e-15);
        assert!((free_energy(&s, 1.0, 1.0) - 0.011_190_532_097_699_376).abs() < 1e-12);
    }

    #[test]
    fn inadmissible_state_rejected() {
        assert!(DeformationState::new([1.0, 0.0, 0.0, -0.5]).is_err());
        assert!(DeformationState::new([0.0; 4]).is_err());
    }

    #[test]
    fn equibiaxial_stress_is_diagonal() {
        let s = DeformationState::new([1.3, 0.0, 0.0, 1.3]).unwrap();
        let p = pk1_stress(&s, 2.0, 1.0);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[2], 0.0);
        assert!((p[0] - p[3]).abs() < 1e-15);
    }

    #[test]
    fn a4_at_identity_matches_linear_tensor_on_symmetric_strain() {
        let (k, m) = (1.7, 0.6);
        let s = DeformationState::new(tensor::IDENTITY).unwrap();
        let a4 = tangent_a4(&s, k, m);
        let c = linear_elasticity_tensor(k, m);
        let eps = [0.3, -0.2, -0.2, 0.5];
        let lhs = tensor::c4(&a4, &eps);
        let rhs = tensor::c4(&c, &eps);
        for q in 0..4 {
            assert!((lhs[q] - rhs[q]).abs() < 1e-8);
        }
    }

    #[test]
    fn a6_pair_exchange_symmetry() {
        let s = DeformationState::new([1.2, 0.0, 0.0, 0.9]).unwrap();
        let a6 = tangent_a6(&s, 1.3, 0.8);
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    let x = a6[16 * a + 4 * b + c];
                    assert!((x - a6[16 * b + 4 * a + c]).abs() < 1e-12);
                    assert!((x - a6[16 * a + 4 * c + b]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_tensor_projectors() {
        let (k, m) = (2.0, 0.5);
        let c = linear_elasticity_tensor(k, m);
        // in-plane ε = I: σ = λ·2·I + 2μ·I
        let sig = tensor::c4(&c, &tensor::IDENTITY);
        let lambda = k - 2.0 * m / 3.0;
        assert!((sig[0] - (2.0 * lambda + 2.0 * m)).abs() < 1e-14);
        let dev = [0.4, 0.1, 0.1, -0.4];
        let sig = tensor::c4(&c, &dev);
        for q in 0..4 {
            assert!((sig[q] - 2.0 * m * dev[q]).abs() < 1e-14);
        }
        let mat = nalgebra::Matrix3::from_fn(|i, j| linear_elasticity_matrix(k, m)[i][j]);
        let eig = nalgebra::SymmetricEigen::new(mat);
        assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn moduli_relations() {
        let mp = MaterialParams::new(0.85, 0.3, 0.85, 0.3).unwrap();
        assert!(rel(mp.kappa(), 0.85 / (3.0 * 0.4), 1.0) < 1e-15);
        assert!(rel(mp.mu(), 0.85 / 2.6, 1.0) < 1e-15);
        assert!(MaterialParams::new(1.0, 0.5, 1.0, 0.3).is_err());
    }
}
