//! Second-order perturbation of the end compliance about `ξ = 0`.
//!
//! Notation per element: `v_k = g_k u⁰ + g u_k`,
//! `v_kl = g_kl u⁰ + g_k u_l + g_l u_k + g u_kl`, and the k-th residual
//! derivative is `a_k p + a k₁ v_k + c_k k_L u⁰ + c k_L u_k − F_k`. The
//! second derivative adds `k₂[v_k, v_l]`. All systems share the tangent at
//! `u⁰`, factored once.

use crate::design::{ElementLedger, InterpolationParams, Jet2};
use crate::error::{Error, Result};
use crate::fe::{ElementState, FeModel};
use crate::linalg::{dot, LdltFactor};
use crate::mesh::{self, BOperator};
use crate::problem::Problem;
use crate::tensor::{self, T2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Symmetric table over index pairs `k ≤ l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTable<T> {
    m: usize,
    data: Vec<T>,
}

impl<T> PairTable<T> {
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(m * (m + 1) / 2);
        for k in 0..m {
            for l in k..m {
                data.push(f(k, l));
            }
        }
        Self { m, data }
    }

    pub fn from_vec(m: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), m * (m + 1) / 2);
        Self { m, data }
    }

    pub fn get(&self, k: usize, l: usize) -> &T {
        &self.data[pair_index(self.m, k, l)]
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn pairs(m: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for k in 0..m {
            for l in k..m {
                v.push((k, l));
            }
        }
        v
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }
}

/// Position of the pair `(k, l)` in row-major upper-triangular storage.
#[inline]
pub fn pair_index(m: usize, k: usize, l: usize) -> usize {
    let (k, l) = if k <= l { (k, l) } else { (l, k) };
    k * m - k * k.saturating_sub(1) / 2 + (l - k)
}

/// Mean and variance from compliance derivatives in half storage.
pub fn statistics(f0: f64, f1: &[f64], f2: &PairTable<f64>) -> (f64, f64) {
    let m = f1.len();
    let mut mean = f0;
    let mut var = 0.0;
    for k in 0..m {
        mean += 0.5 * f2.get(k, k);
        var += f1[k] * f1[k];
    }
    for k in 0..m {
        for l in k..m {
            let v = f2.get(k, l);
            var += if k == l { 0.5 * v * v } else { v * v };
        }
    }
    (mean, var)
}

/// Expanded first-order scalars of one element for index `k`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct First {
    pub a: f64,
    pub g: f64,
    pub c: f64,
    pub ar: f64,
    pub gr: f64,
    pub cr: f64,
}

#[inline]
pub(crate) fn first(l: &ElementLedger, s: f64, t: f64) -> First {
    First {
        a: l.a.base.d1(s, t),
        g: l.g.base.d1(s, t),
        c: l.c.base.d1(s, t),
        ar: l.a.dr.d1(s, t),
        gr: l.g.dr.d1(s, t),
        cr: l.c.dr.d1(s, t),
    }
}

#[inline]
pub(crate) fn second(j: &Jet2, k: (f64, f64), l: (f64, f64)) -> f64 {
    j.d2(k.0, k.1, l.0, l.1)
}

/// Everything computed at the mean realization and reused by the adjoint.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub ip: InterpolationParams,
    pub c_history: Vec<f64>,
    pub ledgers: Vec<ElementLedger>,
    pub states: Vec<ElementState>,
    pub factor: LdltFactor,
    pub f_ext0: Vec<f64>,
    pub f_ext1: Vec<Vec<f64>>,
    pub u0: Vec<f64>,
    pub u1: Vec<Vec<f64>>,
    pub u2: PairTable<Vec<f64>>,
    /// Gauss-point gradients of `u_k`: `[e][k][gp]`
    pub(crate) grad_u1: Vec<Vec<[T2; 4]>>,
    pub f0: f64,
    pub f1: Vec<f64>,
    pub f2: PairTable<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl Analysis {
    pub fn m(&self) -> usize {
        self.u1.len()
    }
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

fn solve_rhs(factor: &LdltFactor, rhs: &[f64]) -> Vec<f64> {
    factor.solve(rhs).into_iter().map(|v| -v).collect()
}

fn assemble(model: &FeModel, fe: &[[f64; 8]]) -> Vec<f64> {
    mesh::assemble_vector(&model.mesh, fe).expect("one vector per element")
}

/// Zeroth-, first- and second-order solves plus compliance statistics.
pub fn analyze(problem: &Problem, rho_hat: &[f64], ip: &InterpolationParams) -> Result<Analysis> {
    analyze_from(problem, rho_hat, ip, None)
}

/// As [`analyze`], starting the mean solve from `u_init`.
pub fn analyze_from(
    problem: &Problem,
    rho_hat: &[f64],
    ip: &InterpolationParams,
    u_init: Option<&[f64]>,
) -> Result<Analysis> {
    let m = problem.dim();
    let n_ele = problem.n_ele();
    let zero = vec![0.0; m];
    let st = problem.solve_at(rho_hat, &zero, ip, u_init, true)?;
    let ip = InterpolationParams { c: st.c, ..*ip };
    let factor = st.factor.expect("factor requested");
    let u0 = st.u;
    let model = &problem.model;
    let msh = &model.mesh;
    let sto = &problem.stochastic;
    let ledgers = problem.ledgers(rho_hat, &zero, &ip);
    let states = (0..n_ele)
        .into_par_iter()
        .map(|e| model.element_state(e, ledgers[e].g.base.v, &msh.gather(e, &u0)))
        .collect::<Result<Vec<_>>>()?;
    let f_ext0 = problem.load_vector(&zero)?;
    let f_ext1 = (0..m).map(|k| problem.load_derivative(k)).collect::<Result<Vec<_>>>()?;

    // first order
    let u1: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let fe: Vec<[f64; 8]> = (0..n_ele)
                .map(|e| {
                    let (s, t) = sto.seed(e, k);
                    let led = &ledgers[e];
                    let d = first(led, s, t);
                    let mut out = [0.0; 8];
                    if d.a == 0.0 && d.g == 0.0 && d.c == 0.0 {
                        return out;
                    }
                    for (gp, gs) in model.bops[e].gps.iter().zip(&states[e].gps) {
                        let mut sig = tensor::scale(&gs.p, d.a);
                        tensor::axpy(&mut sig, led.a.base.v * d.g, &tensor::c4(&gs.a4, &gs.h0));
                        tensor::axpy(&mut sig, d.c, &tensor::c4(&model.c_lin, &gs.h0));
                        gp.scatter(&sig, 1.0, &mut out);
                    }
                    out
                })
                .collect();
            let g = assemble(model, &fe);
            let rhs: Vec<f64> = g.iter().zip(&f_ext1[k]).map(|(a, b)| a - b).collect();
            solve_rhs(&factor, &rhs)
        })
        .collect();

    let grad_u1: Vec<Vec<[T2; 4]>> = (0..n_ele)
        .into_par_iter()
        .map(|e| {
            (0..m)
                .map(|k| {
                    let ue = msh.gather(e, &u1[k]);
                    let b = &model.bops[e].gps;
                    [b[0].grad(&ue), b[1].grad(&ue), b[2].grad(&ue), b[3].grad(&ue)]
                })
                .collect()
        })
        .collect();

    // second order
    let pairs = PairTable::<()>::pairs(m);
    let u2_vec: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(k, l)| {
            let fe: Vec<[f64; 8]> = (0..n_ele)
                .map(|e| {
                    second_order_element(model, &model.bops[e], &ledgers[e], &states[e], &grad_u1[e], sto.seeds(e), k, l)
                })
                .collect();
            solve_rhs(&factor, &assemble(model, &fe))
        })
        .collect();
    let u2 = PairTable::from_vec(m, u2_vec);

    let f0 = dot(&f_ext0, &u0);
    let f1: Vec<f64> = (0..m).map(|k| dot(&f_ext1[k], &u0) + dot(&f_ext0, &u1[k])).collect();
    let f2 = PairTable::from_fn(m, |k, l| {
        dot(&f_ext1[k], &u1[l]) + dot(&f_ext1[l], &u1[k]) + dot(&f_ext0, u2.get(k, l))
    });
    let (mean, variance) = statistics(f0, &f1, &f2);
    Ok(Analysis {
        ip,
        c_history: st.c_history,
        ledgers,
        states,
        factor,
        f_ext0,
        f_ext1,
        u0,
        u1,
        u2,
        grad_u1,
        f0,
        f1,
        f2,
        mean,
        variance,
    })
}

/// Element contribution to `G_int(kl)`, the second-order residual with
/// `u_kl = 0`.
#[allow(clippy::too_many_arguments)]
fn second_order_element(
    model: &FeModel,
    bop: &BOperator,
    led: &ElementLedger,
    st: &ElementState,
    gu: &[[T2; 4]],
    seeds: (&[f64], &[f64]),
    k: usize,
    l: usize,
) -> [f64; 8] {
    let sk = (seeds.0[k], seeds.1[k]);
    let sl = (seeds.0[l], seeds.1[l]);
    let dk = first(led, sk.0, sk.1);
    let dl = first(led, sl.0, sl.1);
    let a_kl = second(&led.a.base, sk, sl);
    let g_kl = second(&led.g.base, sk, sl);
    let c_kl = second(&led.c.base, sk, sl);
    let (a, g) = (led.a.base.v, led.g.base.v);
    let mut out = [0.0; 8];
    for (q, (gp, gs)) in bop.gps.iter().zip(&st.gps).enumerate() {
        let (uk, ul) = (&gu[k][q], &gu[l][q]);
        let mut vk = tensor::scale(&gs.h0, dk.g);
        tensor::axpy(&mut vk, g, uk);
        let mut vl = tensor::scale(&gs.h0, dl.g);
        tensor::axpy(&mut vl, g, ul);
        let mut vkl = tensor::scale(&gs.h0, g_kl);
        tensor::axpy(&mut vkl, dk.g, ul);
        tensor::axpy(&mut vkl, dl.g, uk);
        let mut w = tensor::scale(&vl, dk.a);
        tensor::axpy(&mut w, dl.a, &vk);
        tensor::axpy(&mut w, a, &vkl);
        let mut sig = tensor::scale(&gs.p, a_kl);
        tensor::axpy(&mut sig, 1.0, &tensor::c4(&gs.a4, &w));
        tensor::axpy(&mut sig, a, &tensor::c4(&tensor::c6(&gs.a6, &vl), &vk));
        let mut lin = tensor::scale(&gs.h0, c_kl);
        tensor::axpy(&mut lin, dk.c, ul);
        tensor::axpy(&mut lin, dl.c, uk);
        tensor::axpy(&mut sig, 1.0, &tensor::c4(&model.c_lin, &lin));
        gp.scatter(&sig, 1.0, &mut out);
    }
    out
}

/// Monte Carlo reference statistics of the end compliance.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
    pub failures: usize,
}

/// Sample mean and unbiased variance over `n` realizations of `ξ ~ N(0, I)`.
/// Samples are drawn sequentially from a seeded stream so the result does not
/// depend on the thread count. More than 1% failed solves is an error.
pub fn mc_estimate(problem: &Problem, rho_hat: &[f64], ip: &InterpolationParams, n: usize, seed: u64) -> Result<McEstimate> {
    let m = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xis: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let zero = vec![0.0; m];
    let u0 = problem.solve_at(rho_hat, &zero, ip, None, false)?.u;
    let vals: Vec<Option<f64>> = xis
        .par_iter()
        .map(|xi| problem.compliance_at(rho_hat, xi, ip, Some(&u0)).ok())
        .collect();
    let ok: Vec<f64> = vals.iter().flatten().copied().collect();
    let failures = n - ok.len();
    if failures * 100 > n || ok.len() < 2 {
        return Err(Error::OracleUnreliable { failed: failures, total: n });
    }
    let k = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / k;
    let variance = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(McEstimate { mean, variance, samples: ok.len(), failures })
}
