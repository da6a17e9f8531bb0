//! Adjoint sensitivities of the robust objective `E[f] + α·std[f]`.
//!
//! The Lagrangian couples the zeroth-, first- and second-order residuals. All
//! adjoint systems share the tangent at `u⁰`. Because every second-order
//! residual enters the objective only through `F₀ᵀu_kl`, the second-tier
//! multipliers are all multiples of one vector `ζ` with `K ζ = −F₀`.

use crate::design::ElementLedger;
use crate::error::Result;
use crate::fe::ElementState;
use crate::mesh::{self, BOperator};
use crate::perturbation::{first, Analysis, First, PairTable};
use crate::problem::Problem;
use crate::tensor::{self, T2, T4};
use rayon::prelude::*;

/// Guard on the standard deviation in the `α` branch.
pub const STD_FLOOR: f64 = 1e-9;

/// `∂𝒻/∂f_k` and `∂𝒻/∂f_kl` (half storage, `k ≤ l`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub w1: Vec<f64>,
    pub w2: PairTable<f64>,
}

pub fn objective_value(an: &Analysis, alpha: f64) -> f64 {
    an.mean + alpha * an.std()
}

pub fn objective_partials(an: &Analysis, alpha: f64) -> ObjectiveWeights {
    let m = an.m();
    let sd = an.std().max(STD_FLOOR);
    let w1 = an.f1.iter().map(|f| if alpha == 0.0 { 0.0 } else { alpha * f / sd }).collect();
    let w2 = PairTable::from_fn(m, |k, l| {
        let f = *an.f2.get(k, l);
        let s = if alpha == 0.0 { 0.0 } else { alpha * f / sd };
        if k == l {
            0.5 + 0.5 * s
        } else {
            s
        }
    });
    ObjectiveWeights { alpha, w1, w2 }
}

/// Multipliers of the three residual tiers.
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    pub lambda0: Vec<f64>,
    pub lambda1: Vec<Vec<f64>>,
    /// `λ_kl = w_kl ζ`
    pub zeta: Vec<f64>,
    /// `Σ w_kl u_kl`
    pub u2_weighted: Vec<f64>,
}

fn grads(bop: &BOperator, ue: &[f64; 8]) -> [T2; 4] {
    let g = &bop.gps;
    [g[0].grad(ue), g[1].grad(ue), g[2].grad(ue), g[3].grad(ue)]
}

fn lin(a: &T2, sa: f64, b: &T2, sb: f64) -> T2 {
    [a[0] * sa + b[0] * sb, a[1] * sa + b[1] * sb, a[2] * sa + b[2] * sb, a[3] * sa + b[3] * sb]
}

/// Element data shared by the right-hand sides and the gradient.
struct ElementView<'a> {
    led: &'a ElementLedger,
    st: &'a ElementState,
    d: Vec<First>,
    seeds: (&'a [f64], &'a [f64]),
}

impl<'a> ElementView<'a> {
    fn new(problem: &'a Problem, an: &'a Analysis, e: usize) -> Self {
        let seeds = problem.stochastic.seeds(e);
        let led = &an.ledgers[e];
        let d = (0..an.m()).map(|k| first(led, seeds.0[k], seeds.1[k])).collect();
        Self { led, st: &an.states[e], d, seeds }
    }

    fn sk(&self, k: usize) -> (f64, f64) {
        (self.seeds.0[k], self.seeds.1[k])
    }

    /// `V_k = g_k H + g U_k` for every k at one Gauss point.
    fn v(&self, h: &T2, u1: &[[T2; 4]], q: usize) -> Vec<T2> {
        let g = self.led.g.base.v;
        self.d.iter().enumerate().map(|(k, d)| lin(h, d.g, &u1[k][q], g)).collect()
    }
}

fn solve_neg(an: &Analysis, rhs: &[f64]) -> Vec<f64> {
    an.factor.solve(rhs).into_iter().map(|v| -v).collect()
}

pub fn solve_adjoints(problem: &Problem, an: &Analysis, w: &ObjectiveWeights) -> Result<AdjointSolution> {
    let model = &problem.model;
    let msh = &model.mesh;
    let m = an.m();
    let n_ele = problem.n_ele();
    let n = model.n_free();

    // second tier
    let zeta = solve_neg(an, &an.f_ext0);
    let mut u2w = vec![0.0; n];
    for (k, l) in PairTable::<()>::pairs(m) {
        let wk = *w.w2.get(k, l);
        for (s, v) in u2w.iter_mut().zip(an.u2.get(k, l)) {
            *s += wk * v;
        }
    }
    let zgrad: Vec<[T2; 4]> = (0..n_ele).map(|e| grads(&model.bops[e], &msh.gather(e, &zeta))).collect();

    // first tier
    let what = |q: usize, l: usize| if q == l { 2.0 * w.w2.get(q, l) } else { *w.w2.get(q, l) };
    let lambda1: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|q| {
            let fe: Vec<[f64; 8]> = (0..n_ele)
                .map(|e| {
                    let ev = ElementView::new(problem, an, e);
                    let (a, g) = (ev.led.a.base.v, ev.led.g.base.v);
                    let mut ah = 0.0;
                    let mut ch = 0.0;
                    for (l, dl) in ev.d.iter().enumerate() {
                        let wl = what(q, l);
                        ah += wl * (dl.a * g + a * dl.g);
                        ch += wl * dl.c;
                    }
                    let mut out = [0.0; 8];
                    for (qp, (gp, gs)) in model.bops[e].gps.iter().zip(&ev.st.gps).enumerate() {
                        let v = ev.v(&gs.h0, &an.grad_u1[e], qp);
                        let mut vh = [0.0; 4];
                        for (l, vl) in v.iter().enumerate() {
                            tensor::axpy(&mut vh, what(q, l), vl);
                        }
                        let z = &zgrad[e][qp];
                        let mut sig = tensor::scale(&tensor::c4(&gs.a4, z), ah);
                        tensor::axpy(&mut sig, a * g, &tensor::c4(&tensor::c6(&gs.a6, &vh), z));
                        tensor::axpy(&mut sig, ch, &tensor::c4(&model.c_lin, z));
                        gp.scatter(&sig, 1.0, &mut out);
                    }
                    out
                })
                .collect();
            let mut rhs = mesh::assemble_vector(msh, &fe).expect("one vector per element");
            for (i, r) in rhs.iter_mut().enumerate() {
                let mut s = w.w1[q] * an.f_ext0[i];
                for l in 0..m {
                    s += what(q, l) * an.f_ext1[l][i];
                }
                *r += s;
            }
            solve_neg(an, &rhs)
        })
        .collect();

    // zeroth tier
    let fe: Vec<[f64; 8]> = (0..n_ele)
        .into_par_iter()
        .map(|e| {
            let ev = ElementView::new(problem, an, e);
            let led = ev.led;
            let (a, g) = (led.a.base.v, led.g.base.v);
            let lg: Vec<[T2; 4]> = lambda1.iter().map(|l| grads(&model.bops[e], &msh.gather(e, l))).collect();
            let u2g = grads(&model.bops[e], &msh.gather(e, &u2w));
            let pairs = PairTable::<()>::pairs(m);
            let mut s1 = 0.0;
            let mut sc = 0.0;
            for &(k, l) in &pairs {
                let wkl = *w.w2.get(k, l);
                let (sk, sl) = (ev.sk(k), ev.sk(l));
                let (dk, dl) = (&ev.d[k], &ev.d[l]);
                let a_kl = led.a.base.d2(sk.0, sk.1, sl.0, sl.1);
                let g_kl = led.g.base.d2(sk.0, sk.1, sl.0, sl.1);
                s1 += wkl * (a_kl * g + dk.a * dl.g + dl.a * dk.g + a * g_kl);
                sc += wkl * led.c.base.d2(sk.0, sk.1, sl.0, sl.1);
            }
            let mut out = [0.0; 8];
            for (qp, (gp, gs)) in model.bops[e].gps.iter().zip(&ev.st.gps).enumerate() {
                let h = &gs.h0;
                let v = ev.v(h, &an.grad_u1[e], qp);
                let mut sig = [0.0; 4];
                for (k, dk) in ev.d.iter().enumerate() {
                    let lk = &lg[k][qp];
                    tensor::axpy(&mut sig, dk.a * g + a * dk.g, &tensor::c4(&gs.a4, lk));
                    tensor::axpy(&mut sig, a * g, &tensor::c4(&tensor::c6(&gs.a6, &v[k]), lk));
                    tensor::axpy(&mut sig, dk.c, &tensor::c4(&model.c_lin, lk));
                }
                if m > 0 {
                    let z = &zgrad[e][qp];
                    let u1 = &an.grad_u1[e];
                    let mut y = tensor::scale(&u2g[qp], a * g * g);
                    let mut qt: T4 = [0.0; 16];
                    for &(k, l) in &pairs {
                        let wkl = *w.w2.get(k, l);
                        let (sk, sl) = (ev.sk(k), ev.sk(l));
                        let (dk, dl) = (&ev.d[k], &ev.d[l]);
                        let g_kl = led.g.base.d2(sk.0, sk.1, sl.0, sl.1);
                        let mut vkl = tensor::scale(h, g_kl);
                        tensor::axpy(&mut vkl, dk.g, &u1[l][qp]);
                        tensor::axpy(&mut vkl, dl.g, &u1[k][qp]);
                        tensor::axpy(&mut y, wkl * (dk.a * g + a * dk.g), &v[l]);
                        tensor::axpy(&mut y, wkl * (dl.a * g + a * dl.g), &v[k]);
                        tensor::axpy(&mut y, wkl * a * g, &vkl);
                        let o = tensor::outer(&v[k], &v[l]);
                        for i in 0..16 {
                            qt[i] += wkl * o[i];
                        }
                    }
                    let a6z = tensor::c6(&gs.a6, z);
                    tensor::axpy(&mut sig, s1, &tensor::c4(&gs.a4, z));
                    tensor::axpy(&mut sig, 1.0, &tensor::c4(&a6z, &y));
                    let a8z = tensor::c8(&model.gp_a8(gs), z);
                    tensor::axpy(&mut sig, a * g, &tensor::c6_4(&a8z, &qt));
                    tensor::axpy(&mut sig, sc, &tensor::c4(&model.c_lin, z));
                }
                gp.scatter(&sig, 1.0, &mut out);
            }
            out
        })
        .collect();
    let mut rhs = mesh::assemble_vector(msh, &fe)?;
    for (i, r) in rhs.iter_mut().enumerate() {
        let mut s = an.f_ext0[i];
        for k in 0..m {
            s += w.w1[k] * an.f_ext1[k][i];
        }
        *r += s;
    }
    let lambda0 = solve_neg(an, &rhs);
    Ok(AdjointSolution { lambda0, lambda1, zeta, u2_weighted: u2w })
}

/// `d𝒻/dρ̂_e` from the adjoint solution.
fn element_gradient(problem: &Problem, an: &Analysis, w: &ObjectiveWeights, adj: &AdjointSolution, e: usize) -> f64 {
    let model = &problem.model;
    let msh = &model.mesh;
    let bop = &model.bops[e];
    let ev = ElementView::new(problem, an, e);
    let led = ev.led;
    let m = an.m();
    let (a, g) = (led.a.base.v, led.g.base.v);
    let (ar, gr, cr) = (led.a.dr.v, led.g.dr.v, led.c.dr.v);
    let l0 = grads(bop, &msh.gather(e, &adj.lambda0));
    let lk: Vec<[T2; 4]> = adj.lambda1.iter().map(|l| grads(bop, &msh.gather(e, l))).collect();
    let zg = grads(bop, &msh.gather(e, &adj.zeta));
    let u2g = grads(bop, &msh.gather(e, &adj.u2_weighted));
    let pairs = PairTable::<()>::pairs(m);
    let mut total = 0.0;
    for (qp, (gp, gs)) in bop.gps.iter().zip(&ev.st.gps).enumerate() {
        let h = &gs.h0;
        let u1 = &an.grad_u1[e];
        let a4h = tensor::c4(&gs.a4, h);
        let ch = tensor::c4(&model.c_lin, h);
        let mut sum = 0.0;

        let mut s0 = tensor::scale(&gs.p, ar);
        tensor::axpy(&mut s0, a * gr, &a4h);
        tensor::axpy(&mut s0, cr, &ch);
        sum += tensor::dot(&l0[qp], &s0);
        if m == 0 {
            total += sum * gp.dv;
            continue;
        }

        let v = ev.v(h, u1, qp);
        let vr: Vec<T2> = ev.d.iter().enumerate().map(|(k, d)| lin(h, d.gr, &u1[k][qp], gr)).collect();
        let a6h = tensor::c6(&gs.a6, h);
        for (k, d) in ev.d.iter().enumerate() {
            let mut s = tensor::scale(&gs.p, d.ar);
            tensor::axpy(&mut s, d.a * gr, &a4h);
            tensor::axpy(&mut s, ar, &tensor::c4(&gs.a4, &v[k]));
            tensor::axpy(&mut s, a * gr, &tensor::c4(&a6h, &v[k]));
            tensor::axpy(&mut s, a, &tensor::c4(&gs.a4, &vr[k]));
            tensor::axpy(&mut s, d.cr, &ch);
            tensor::axpy(&mut s, cr, &tensor::c4(&model.c_lin, &u1[k][qp]));
            sum += tensor::dot(&lk[k][qp], &s);
        }

        let z = &zg[qp];
        let a4z = tensor::c4(&gs.a4, z);
        let a6z = tensor::c6(&gs.a6, z);
        let a6zh = tensor::c4(&a6z, h);
        let a8z = tensor::c8(&model.gp_a8(gs), z);
        let a8zh = tensor::c6(&a8z, h);
        let cz = tensor::c4(&model.c_lin, z);
        let zp = tensor::dot(z, &gs.p);
        let m6: Vec<T2> = v.iter().map(|x| tensor::c4(&a6z, x)).collect();
        let m8: Vec<T2> = v.iter().map(|x| tensor::c4(&a8zh, x)).collect();
        let a4zh = tensor::dot(&a4z, h);
        let czh = tensor::dot(&cz, h);
        let mut s2 = 0.0;
        for &(k, l) in &pairs {
            let wkl = *w.w2.get(k, l);
            if wkl == 0.0 {
                continue;
            }
            let (sk, sl) = (ev.sk(k), ev.sk(l));
            let (dk, dl) = (&ev.d[k], &ev.d[l]);
            let a_kl = led.a.base.d2(sk.0, sk.1, sl.0, sl.1);
            let g_kl = led.g.base.d2(sk.0, sk.1, sl.0, sl.1);
            let a_klr = led.a.dr.d2(sk.0, sk.1, sl.0, sl.1);
            let g_klr = led.g.dr.d2(sk.0, sk.1, sl.0, sl.1);
            let c_klr = led.c.dr.d2(sk.0, sk.1, sl.0, sl.1);
            let (uk, ul) = (&u1[k][qp], &u1[l][qp]);
            let mut vkl = tensor::scale(h, g_kl);
            tensor::axpy(&mut vkl, dk.g, ul);
            tensor::axpy(&mut vkl, dl.g, uk);
            let mut vklr = tensor::scale(h, g_klr);
            tensor::axpy(&mut vklr, dk.gr, ul);
            tensor::axpy(&mut vklr, dl.gr, uk);
            let mut mix = tensor::scale(&v[l], dk.ar);
            tensor::axpy(&mut mix, dk.a, &vr[l]);
            tensor::axpy(&mut mix, dl.ar, &v[k]);
            tensor::axpy(&mut mix, dl.a, &vr[k]);
            let t = a_klr * zp
                + a_kl * gr * a4zh
                + gr * (dk.a * tensor::dot(&a6zh, &v[l]) + dl.a * tensor::dot(&a6zh, &v[k]))
                + tensor::dot(&a4z, &mix)
                + ar * tensor::dot(&v[l], &m6[k])
                + a * gr * tensor::dot(&v[l], &m8[k])
                + a * tensor::dot(&vr[k], &m6[l])
                + a * tensor::dot(&vr[l], &m6[k])
                + ar * tensor::dot(&a4z, &vkl)
                + a * gr * tensor::dot(&a6zh, &vkl)
                + a * tensor::dot(&a4z, &vklr)
                + c_klr * czh
                + dk.cr * tensor::dot(&cz, ul)
                + dl.cr * tensor::dot(&cz, uk);
            s2 += wkl * t;
        }
        let ub = &u2g[qp];
        s2 += ar * g * tensor::dot(&a4z, ub)
            + a * gr * g * tensor::dot(&a6zh, ub)
            + a * gr * tensor::dot(&a4z, ub)
            + cr * tensor::dot(&cz, ub);
        sum += s2;
        total += sum * gp.dv;
    }
    total
}

/// Gradient of the robust objective with respect to `ρ̂`.
pub fn robust_gradient_rho(problem: &Problem, an: &Analysis, alpha: f64) -> Result<Vec<f64>> {
    let w = objective_partials(an, alpha);
    let adj = solve_adjoints(problem, an, &w)?;
    Ok((0..problem.n_ele()).into_par_iter().map(|e| element_gradient(problem, an, &w, &adj, e)).collect())
}

/// Gradient of the robust objective with respect to `x`.
pub fn robust_gradient(problem: &Problem, an: &Analysis, alpha: f64) -> Result<Vec<f64>> {
    Ok(problem.filter.apply_transpose(&robust_gradient_rho(problem, an, alpha)?))
}

/// Classical end-compliance adjoint at a converged state with its factor:
/// `K λ = −F`, `df/dρ̂_e = λᵉ·∂F_intᵉ/∂ρ̂_e`.
pub fn deterministic_gradient_rho(
    problem: &Problem,
    ledgers: &[ElementLedger],
    states: &[ElementState],
    factor: &crate::linalg::LdltFactor,
    f_ext: &[f64],
) -> Vec<f64> {
    let model = &problem.model;
    let lambda: Vec<f64> = factor.solve(f_ext).into_iter().map(|v| -v).collect();
    (0..problem.n_ele())
        .into_par_iter()
        .map(|e| {
            let led = &ledgers[e];
            let (a, ar, gr, cr) = (led.a.base.v, led.a.dr.v, led.g.dr.v, led.c.dr.v);
            let le = model.mesh.gather(e, &lambda);
            let mut total = 0.0;
            for (gp, gs) in model.bops[e].gps.iter().zip(&states[e].gps) {
                let mut s = tensor::scale(&gs.p, ar);
                tensor::axpy(&mut s, a * gr, &tensor::c4(&gs.a4, &gs.h0));
                tensor::axpy(&mut s, cr, &tensor::c4(&model.c_lin, &gs.h0));
                total += tensor::dot(&gp.grad(&le), &s) * gp.dv;
            }
            total
        })
        .collect()
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h` for the listed
/// components. Failed evaluations give `None`.
pub fn cdm_gradient<F>(f: F, x: &[f64], h: f64, indices: &[usize]) -> Vec<Option<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    indices
        .par_iter()
        .map(|&i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            match (f(&xp), f(&xm)) {
                (Ok(a), Ok(b)) => Some((a - b) / (2.0 * h)),
                _ => None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdm_is_exact_on_quadratics() {
        let x = [0.3, -0.7, 1.1];
        let g = cdm_gradient(|x| Ok(x.iter().map(|v| v * v).sum()), &x, 1e-3, &[0, 1, 2]);
        for (gi, xi) in g.iter().zip(x) {
            assert!((gi.unwrap() - 2.0 * xi).abs() < 1e-10);
        }
    }

    #[test]
    fn cdm_of_constant_is_zero() {
        let g = cdm_gradient(|_| Ok(4.0), &[0.5; 4], 1e-6, &[0, 3]);
        assert!(g.iter().all(|v| *v == Some(0.0)));
    }
}
