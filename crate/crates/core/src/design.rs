//! Design chain `x → ρ̂ → ρ`, modulus interpolations and the per-element
//! scalar ledger.
//!
//! Every stochastic element scalar depends on the random inputs only through
//! two per-element Gaussian variables: `Z` (the log-modulus field) and `Z̄`
//! (the threshold field). With seeds `s_k = ∂Z/∂ξ_k` and `t_k = ∂Z̄/∂ξ_k`,
//! `X_k = X_Z s_k + X_Z̄ t_k` and `X_kl` is the corresponding bilinear form.
//! So the ledger stores partial derivatives in `(Z, Z̄)` up to second order,
//! each with its `ρ̂`-derivative, and expands any `(k, l)` entry on demand.

use crate::error::{Error, Result};
use crate::mesh::Mesh2D;

pub const EPS_SIMP: f64 = 1e-6;
pub const EPS_LINEAR: f64 = 1e-6;
pub const BETA0: f64 = 120.0;
pub const C0: f64 = 0.1;
pub const DELTA_C: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct FilterMatrix {
    pub radius: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl FilterMatrix {
    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, p: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[p]..self.row_ptr[p + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|p| self.row(p).map(|(q, w)| w * x[q]).sum()).collect()
    }

    pub fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for p in 0..self.n() {
            for (q, w) in self.row(p) {
                out[q] += w * g[p];
            }
        }
        out
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.row(p).find(|&(c, _)| c == q).map_or(0.0, |(_, w)| w)
    }
}

/// Cone-weighted density filter on element centroids, volume weighted.
pub fn build_filter(mesh: &Mesh2D, r: f64) -> Result<FilterMatrix> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("filter radius {r}")));
    }
    let reach_x = (r / mesh.dx()).ceil() as isize;
    let reach_y = (r / mesh.dy()).ceil() as isize;
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for p in 0..mesh.n_ele() {
        let (i, j) = mesh.element_ij(p);
        let xp = mesh.centroid(p);
        let start = cols.len();
        let mut total = 0.0;
        for jj in (j as isize - reach_y).max(0)..=(j as isize + reach_y).min(mesh.ny as isize - 1) {
            for ii in (i as isize - reach_x).max(0)..=(i as isize + reach_x).min(mesh.nx as isize - 1) {
                let q = mesh.element_id(ii as usize, jj as usize);
                let xq = mesh.centroid(q);
                let dist = ((xp[0] - xq[0]).powi(2) + (xp[1] - xq[1]).powi(2)).sqrt();
                let w = (r - dist).max(0.0) * mesh.volumes[q];
                if w > 0.0 {
                    cols.push(q);
                    vals.push(w);
                    total += w;
                }
            }
        }
        for v in &mut vals[start..] {
            *v /= total;
        }
        row_ptr.push(cols.len());
    }
    Ok(FilterMatrix { radius: r, row_ptr, cols, vals })
}

pub fn project(rho_hat: f64, beta: f64, eta: f64) -> f64 {
    let t1 = (beta * eta).tanh();
    (t1 + (beta * (rho_hat - eta)).tanh()) / (t1 + (beta * (1.0 - eta)).tanh())
}

/// Partial derivatives of the projection in `ρ̂` and `η`.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionPartials {
    pub value: f64,
    pub d_rho_hat: f64,
    pub d_eta: f64,
    pub d_eta2: f64,
    pub d_rho_hat_eta: f64,
    pub d_rho_hat_eta2: f64,
}

impl ProjectionPartials {
    pub fn at(rho_hat: f64, beta: f64, eta: f64) -> Self {
        let t1 = (beta * eta).tanh();
        let t2 = (beta * (rho_hat - eta)).tanh();
        let t3 = (beta * (1.0 - eta)).tanh();
        let n = t1 + t2;
        let d = t1 + t3;
        let d_rho_hat = beta * (1.0 - t2 * t2) / d;
        Self {
            value: n / d,
            d_rho_hat,
            d_eta: beta * n * (t2 - t3) / d,
            d_eta2: 2.0 * beta * beta * t2 * n * (t2 - t3) / d,
            d_rho_hat_eta: beta * beta * (1.0 - t2 * t2) * (2.0 * t2 + t1 - t3) / d,
            d_rho_hat_eta2: d_rho_hat
                * 2.0
                * beta
                * beta
                * ((t1 + 2.0 * t2) * (t2 - t3) + t2 * n),
        }
    }
}

#[inline]
fn safe_pow(x: f64, e: f64) -> f64 {
    if x <= 0.0 {
        if e == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        x.powf(e)
    }
}

/// `[S, S', S'', S''']` for `S(ρ) = ε + (1−ε)ρᵖ`.
pub fn simp_factor(rho: f64, p: f64, eps: f64) -> [f64; 4] {
    let k = 1.0 - eps;
    [
        eps + k * safe_pow(rho, p),
        k * p * safe_pow(rho, p - 1.0),
        k * p * (p - 1.0) * safe_pow(rho, p - 2.0),
        k * p * (p - 1.0) * (p - 2.0) * safe_pow(rho, p - 3.0),
    ]
}

pub fn simp_modulus(rho: f64, p: f64, e0: f64) -> f64 {
    simp_factor(rho, p, EPS_SIMP)[0] * e0
}

pub fn gamma_factor(rho: f64, beta0: f64, c: f64) -> f64 {
    let z = beta0 * (rho - c);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `[γ, γ', γ'', γ''']` in the stable sigmoid form.
pub fn gamma_derivs(rho: f64, beta0: f64, c: f64) -> [f64; 4] {
    let g = gamma_factor(rho, beta0, c);
    let q = g * (1.0 - g);
    [
        g,
        beta0 * q,
        beta0 * beta0 * q * (1.0 - 2.0 * g),
        beta0.powi(3) * q * (1.0 - 6.0 * g + 6.0 * g * g),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationParams {
    pub p: f64,
    pub p_l: f64,
    pub beta: f64,
    pub beta0: f64,
    pub c: f64,
}

impl InterpolationParams {
    pub fn new(p: f64, p_l: f64, beta: f64) -> Self {
        Self { p, p_l, beta, beta0: BETA0, c: C0 }
    }
}

/// Value and partials in `(Z, Z̄)` up to second order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub s: f64,
    pub t: f64,
    pub ss: f64,
    pub st: f64,
    pub tt: f64,
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Self { v, ..Default::default() }
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            v: self.v + o.v,
            s: self.s + o.s,
            t: self.t + o.t,
            ss: self.ss + o.ss,
            st: self.st + o.st,
            tt: self.tt + o.tt,
        }
    }

    fn mul(&self, o: &Self) -> Self {
        Self {
            v: self.v * o.v,
            s: self.s * o.v + self.v * o.s,
            t: self.t * o.v + self.v * o.t,
            ss: self.ss * o.v + 2.0 * self.s * o.s + self.v * o.ss,
            st: self.st * o.v + self.s * o.t + self.t * o.s + self.v * o.st,
            tt: self.tt * o.v + 2.0 * self.t * o.t + self.v * o.tt,
        }
    }

    /// `∂X/∂ξ_k` given the seeds of index k.
    #[inline]
    pub fn d1(&self, sk: f64, tk: f64) -> f64 {
        self.s * sk + self.t * tk
    }

    /// `∂²X/∂ξ_k∂ξ_l`.
    #[inline]
    pub fn d2(&self, sk: f64, tk: f64, sl: f64, tl: f64) -> f64 {
        self.ss * sk * sl + self.st * (sk * tl + tk * sl) + self.tt * tk * tl
    }
}

/// A `Jet2` together with its derivative with respect to `ρ̂`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub base: Jet2,
    pub dr: Jet2,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self { base: Jet2::constant(v), dr: Jet2::default() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self { base: self.base.mul(&o.base), dr: self.dr.mul(&o.base).add(&self.base.mul(&o.dr)) }
    }

    /// `φ(self)` given `[φ, φ', φ'', φ''']` at `self.base.v`.
    pub fn compose(&self, phi: [f64; 4]) -> Self {
        let [f0, f1, f2, f3] = phi;
        let x = &self.base;
        let r = &self.dr;
        Self {
            base: Jet2 {
                v: f0,
                s: f1 * x.s,
                t: f1 * x.t,
                ss: f2 * x.s * x.s + f1 * x.ss,
                st: f2 * x.s * x.t + f1 * x.st,
                tt: f2 * x.t * x.t + f1 * x.tt,
            },
            dr: Jet2 {
                v: f1 * r.v,
                s: f2 * r.v * x.s + f1 * r.s,
                t: f2 * r.v * x.t + f1 * r.t,
                ss: f3 * r.v * x.s * x.s + f2 * (2.0 * x.s * r.s + r.v * x.ss) + f1 * r.ss,
                st: f3 * r.v * x.s * x.t
                    + f2 * (r.s * x.t + x.s * r.t + r.v * x.st)
                    + f1 * r.st,
                tt: f3 * r.v * x.t * x.t + f2 * (2.0 * x.t * r.t + r.v * x.tt) + f1 * r.tt,
            },
        }
    }
}

/// Per-element scalars `a = γE`, `g = γ`, `c = E_L(ρ̄)(1 − γ(ρ̄)²)` with all
/// partials needed by the perturbation and adjoint passes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElementLedger {
    pub a: Jet,
    pub g: Jet,
    pub c: Jet,
    /// projected density at the evaluation point
    pub rho: f64,
}

/// Projected density as a jet, given `η` as a `Jet2` in `Z̄` only.
pub fn projection_jet(rho_hat: f64, beta: f64, eta: &Jet2) -> Jet {
    let pp = ProjectionPartials::at(rho_hat, beta, eta.v);
    let (et, ett) = (eta.t, eta.tt);
    Jet {
        base: Jet2 {
            v: pp.value,
            t: pp.d_eta * et,
            tt: pp.d_eta2 * et * et + pp.d_eta * ett,
            ..Default::default()
        },
        dr: Jet2 {
            v: pp.d_rho_hat,
            t: pp.d_rho_hat_eta * et,
            tt: pp.d_rho_hat_eta2 * et * et + pp.d_rho_hat_eta * ett,
            ..Default::default()
        },
    }
}

/// Build the ledger of one element.
///
/// `e0` is the solid modulus as a jet in `Z`, `eta` the threshold as a jet in
/// `Z̄`; deterministic inputs are constant jets.
pub fn build_ledger(
    rho_hat: f64,
    e0: &Jet2,
    eta: &Jet2,
    ip: &InterpolationParams,
    el0: f64,
) -> ElementLedger {
    let rho = projection_jet(rho_hat, ip.beta, eta);
    let s = rho.compose(simp_factor(rho.base.v, ip.p, EPS_SIMP));
    let e = s.mul(&Jet { base: *e0, dr: Jet2::default() });
    let g = rho.compose(gamma_derivs(rho.base.v, ip.beta0, ip.c));
    let a = g.mul(&e);
    // linear phase, deterministic projection at η = 0.5
    let rb = projection_jet(rho_hat, ip.beta, &Jet2::constant(0.5));
    let el = rb.compose(simp_factor(rb.base.v, ip.p_l, EPS_LINEAR));
    let gb = rb.compose(gamma_derivs(rb.base.v, ip.beta0, ip.c));
    let one_minus = Jet {
        base: Jet2::constant(1.0 - gb.base.v * gb.base.v),
        dr: Jet2::constant(-2.0 * gb.base.v * gb.dr.v),
    };
    let mut c = el.mul(&one_minus);
    c.base.v *= el0;
    c.dr.v *= el0;
    ElementLedger { a, g, c, rho: rho.base.v }
}

/// Table-style view of one element's ledger for an index pair.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LedgerEntries {
    pub a0: f64,
    pub a_k: f64,
    pub a_kl: f64,
    pub a_r: f64,
    pub a_kr: f64,
    pub a_klr: f64,
    pub b0: f64,
    pub b_k: f64,
    pub b_kl: f64,
    pub b_r: f64,
    pub b_kr: f64,
    pub c0: f64,
    pub c_k: f64,
    pub c_kl: f64,
    pub c_r: f64,
    pub c_kr: f64,
    pub c_klr: f64,
    pub gamma0: f64,
    pub gamma_k: f64,
    pub gamma_r: f64,
}

impl ElementLedger {
    /// Entries for indices `k`, `l` with seeds `(s_k, t_k)`, `(s_l, t_l)`.
    pub fn entries(&self, k: (f64, f64), l: (f64, f64)) -> LedgerEntries {
        let (sk, tk) = k;
        let (sl, tl) = l;
        let b = self.a.mul(&self.g);
        LedgerEntries {
            a0: self.a.base.v,
            a_k: self.a.base.d1(sk, tk),
            a_kl: self.a.base.d2(sk, tk, sl, tl),
            a_r: self.a.dr.v,
            a_kr: self.a.dr.d1(sk, tk),
            a_klr: self.a.dr.d2(sk, tk, sl, tl),
            b0: b.base.v,
            b_k: b.base.d1(sk, tk),
            b_kl: b.base.d2(sk, tk, sl, tl),
            b_r: b.dr.v,
            b_kr: b.dr.d1(sk, tk),
            c0: self.c.base.v,
            c_k: self.c.base.d1(sk, tk),
            c_kl: self.c.base.d2(sk, tk, sl, tl),
            c_r: self.c.dr.v,
            c_kr: self.c.dr.d1(sk, tk),
            c_klr: self.c.dr.d2(sk, tk, sl, tl),
            gamma0: self.g.base.v,
            gamma_k: self.g.base.d1(sk, tk),
            gamma_r: self.g.dr.v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;

    #[test]
    fn small_radius_gives_identity() {
        let m = build_structured_mesh(4, 3, 4.0, 3.0).unwrap();
        let w = build_filter(&m, 0.5).unwrap();
        for p in 0..m.n_ele() {
            assert_eq!(w.row(p).collect::<Vec<_>>(), vec![(p, 1.0)]);
        }
        let one = build_structured_mesh(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(build_filter(&one, 3.0).unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn three_cell_row_by_hand() {
        let m = build_structured_mesh(3, 1, 3.0, 1.0).unwrap();
        let w = build_filter(&m, 1.5).unwrap();
        // middle row: self weight 1.5, neighbours 0.5 each
        assert!((w.get(1, 1) - 0.6).abs() < 1e-15);
        assert!((w.get(1, 0) - 0.2).abs() < 1e-15);
        assert!((w.get(1, 2) - 0.2).abs() < 1e-15);
        // end row: 1.5 and 0.5
        assert!((w.get(0, 0) - 0.75).abs() < 1e-15);
        assert!((w.get(0, 1) - 0.25).abs() < 1e-15);
        assert_eq!(w.get(0, 2), 0.0);
    }

    #[test]
    fn projection_fixed_points() {
        for beta in [0.5, 1.0, 4.0, 16.0] {
            assert!((project(0.5, beta, 0.5) - 0.5).abs() < 1e-15);
            assert_eq!(project(0.0, beta, 0.3), 0.0);
            assert!((project(1.0, beta, 0.7) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_factor(0.1, BETA0, 0.1), 0.5);
        assert!((1.0 - gamma_factor(1.0, BETA0, 0.1)).abs() < 1e-12);
        let g0 = gamma_factor(0.0, BETA0, 0.1);
        assert!((g0 - 6.144e-6).abs() < 1e-8);
    }

    #[test]
    fn simp_endpoints() {
        assert_eq!(simp_modulus(1.0, 3.0, 2.0), 2.0);
        assert_eq!(simp_modulus(0.0, 3.0, 2.0), 2.0 * EPS_SIMP);
        assert_eq!(simp_modulus(0.5, 3.0, 1.0), 1e-6 + (1.0 - 1e-6) * 0.125);
    }

    #[test]
    fn deterministic_ledger_has_zero_sensitivities() {
        let ip = InterpolationParams::new(3.0, 4.0, 2.0);
        let l = build_ledger(0.4, &Jet2::constant(1.5), &Jet2::constant(0.5), &ip, 1.5);
        let e = l.entries((0.3, 0.2), (0.1, -0.4));
        assert_eq!((e.a_k, e.a_kl, e.b_k, e.c_k), (0.0, 0.0, 0.0, 0.0));
        let rho = project(0.4, 2.0, 0.5);
        let gam = gamma_factor(rho, BETA0, C0);
        assert!((e.a0 - gam * simp_modulus(rho, 3.0, 1.5)).abs() < 1e-15);
    }
}
