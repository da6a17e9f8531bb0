//! Outer optimization loop for the deterministic and robust formulations.

use crate::adjoint::{deterministic_gradient_rho, objective_value, robust_gradient_rho};
use crate::design::{InterpolationParams, ProjectionPartials};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::mma::{Mma, MmaParams};
use crate::perturbation::analyze_from;
use crate::problem::Problem;
use rayon::prelude::*;

/// Stepwise parameter ramp: `start + step·⌊iter / interval⌋`, capped at `end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
    pub step: f64,
    pub interval: usize,
}

impl Ramp {
    pub fn new(start: f64, end: f64, step: f64, interval: usize) -> Result<Self> {
        if !(step > 0.0) || interval == 0 || end < start {
            return Err(Error::Configuration(format!("bad ramp {start}..{end} @ {step} / {interval}")));
        }
        Ok(Self { start, end, step, interval })
    }

    pub fn constant(v: f64) -> Self {
        Self { start: v, end: v, step: 1.0, interval: 1 }
    }

    /// Number of increments needed to reach `end`.
    fn increments(&self) -> usize {
        ((self.end - self.start) / self.step - 1e-9).ceil().max(0.0) as usize
    }

    pub fn value(&self, iter: usize) -> f64 {
        let k = (iter / self.interval).min(self.increments());
        (self.start + self.step * k as f64).min(self.end)
    }

    /// First iteration at which the ramp sits at `end`.
    pub fn length(&self) -> usize {
        self.increments() * self.interval
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    pub p: Ramp,
    pub p_l: Ramp,
    pub beta: Ramp,
    /// iterations after every ramp has reached its end
    pub tail: usize,
}

impl Continuation {
    /// p 1→4, p_l 4→7, β 1→4, each by 0.1 every 20 iterations, then 200 more.
    pub fn standard() -> Self {
        Self {
            p: Ramp { start: 1.0, end: 4.0, step: 0.1, interval: 20 },
            p_l: Ramp { start: 4.0, end: 7.0, step: 0.1, interval: 20 },
            beta: Ramp { start: 1.0, end: 4.0, step: 0.1, interval: 20 },
            tail: 200,
        }
    }

    pub fn params(&self, iter: usize) -> InterpolationParams {
        InterpolationParams::new(self.p.value(iter), self.p_l.value(iter), self.beta.value(iter))
    }

    pub fn total_iterations(&self) -> usize {
        self.p.length().max(self.p_l.length()).max(self.beta.length()) + self.tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// end compliance at the mean realization
    Deterministic,
    /// `E[f] + α·std[f]` from the perturbation estimate
    Robust,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    pub formulation: Formulation,
    pub alpha: f64,
    pub volume_fraction: f64,
    pub continuation: Continuation,
    /// overrides the schedule length when set
    pub max_iterations: Option<usize>,
    pub mma: MmaParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub p: f64,
    pub p_l: f64,
    pub beta: f64,
    pub c_max: f64,
    pub objective: f64,
    pub mean: f64,
    pub std: f64,
    pub constraint: f64,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub history: Vec<HistoryRow>,
    pub final_params: InterpolationParams,
}

/// `(1/V) Σ ρ̄_e v_e − V_f` and its gradient with respect to `x`.
pub fn volume_constraint(problem: &Problem, x: &[f64], beta: f64, vf: f64) -> (f64, Vec<f64>) {
    let vols = &problem.model.mesh.volumes;
    let total: f64 = vols.iter().sum();
    let rho_hat = problem.filter.apply(x);
    let mut phi = 0.0;
    let mut d = vec![0.0; x.len()];
    for e in 0..x.len() {
        let pp = ProjectionPartials::at(rho_hat[e], beta, 0.5);
        phi += pp.value * vols[e];
        d[e] = pp.d_rho_hat * vols[e] / total;
    }
    (phi / total - vf, problem.filter.apply_transpose(&d))
}

/// Objective statistics and `d𝒻/dx` at one design.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub mean: f64,
    pub std: f64,
    pub c_max: f64,
    pub gradient: Vec<f64>,
    pub u0: Vec<f64>,
}

pub fn evaluate(
    problem: &Problem,
    formulation: Formulation,
    alpha: f64,
    x: &[f64],
    ip: &InterpolationParams,
    u_init: Option<&[f64]>,
) -> Result<Evaluation> {
    let rho_hat = problem.filter.apply(x);
    match formulation {
        Formulation::Robust => {
            let an = analyze_from(problem, &rho_hat, ip, u_init)?;
            let g = robust_gradient_rho(problem, &an, alpha)?;
            let c_max = an.c_history.iter().copied().fold(f64::MIN, f64::max);
            Ok(Evaluation {
                objective: objective_value(&an, alpha),
                mean: an.mean,
                std: an.std(),
                c_max,
                gradient: problem.filter.apply_transpose(&g),
                u0: an.u0,
            })
        }
        Formulation::Deterministic => {
            let m = problem.dim();
            let zero = vec![0.0; m];
            let st = problem.solve_at(&rho_hat, &zero, ip, u_init, true)?;
            let ipc = InterpolationParams { c: st.c, ..*ip };
            let ledgers = problem.ledgers(&rho_hat, &zero, &ipc);
            let model = &problem.model;
            let states = (0..problem.n_ele())
                .into_par_iter()
                .map(|e| model.element_state(e, ledgers[e].g.base.v, &model.mesh.gather(e, &st.u)))
                .collect::<Result<Vec<_>>>()?;
            let f = problem.load_vector(&zero)?;
            let factor = st.factor.as_ref().expect("factor requested");
            let g = deterministic_gradient_rho(problem, &ledgers, &states, factor, &f);
            let f0 = dot(&f, &st.u);
            let c_max = st.c_history.iter().copied().fold(f64::MIN, f64::max);
            Ok(Evaluation {
                objective: f0,
                mean: f0,
                std: 0.0,
                c_max,
                gradient: problem.filter.apply_transpose(&g),
                u0: st.u,
            })
        }
    }
}

/// Active design variables: non-passive symmetry-orbit representatives.
pub fn design_masters(problem: &Problem) -> (Vec<usize>, Vec<usize>) {
    let mesh = &problem.model.mesh;
    let master = mesh.symmetry_master();
    let vars: Vec<usize> = (0..mesh.n_ele()).filter(|&e| master[e] == e && !mesh.is_passive(e)).collect();
    (master, vars)
}

/// Full design vector from master values: slaves copy, passive elements are 1.
pub fn expand_design(problem: &Problem, master: &[usize], xfull: &mut [f64]) {
    let mesh = &problem.model.mesh;
    for e in 0..xfull.len() {
        xfull[e] = if mesh.is_passive(e) { 1.0 } else { xfull[master[e]] };
    }
}

/// Run the optimization. `observer` sees every history row with the design
/// it was computed at.
pub fn optimize(
    problem: &Problem,
    cfg: &OptConfig,
    mut observer: impl FnMut(&HistoryRow, &[f64]),
) -> Result<OptResult> {
    if !(cfg.volume_fraction > 0.0 && cfg.volume_fraction <= 1.0) || cfg.alpha < 0.0 {
        return Err(Error::Configuration("volume fraction must be in (0, 1] and alpha ≥ 0".into()));
    }
    let n = problem.n_ele();
    let (master, vars) = design_masters(problem);
    let mut x = vec![cfg.volume_fraction; n];
    expand_design(problem, &master, &mut x);
    let total = cfg.max_iterations.unwrap_or_else(|| cfg.continuation.total_iterations());
    let mut mma = Mma::new(vars.len(), 1, cfg.mma.clone());
    let mut history = Vec::with_capacity(total);
    let mut scale = None;
    let mut u_prev: Option<Vec<f64>> = None;
    let mut ip = cfg.continuation.params(0);
    let lo = vec![0.0; vars.len()];
    let hi = vec![1.0; vars.len()];
    for iter in 0..total {
        ip = cfg.continuation.params(iter);
        let ev = evaluate(problem, cfg.formulation, cfg.alpha, &x, &ip, u_prev.as_deref())?;
        let (phi, dphi) = volume_constraint(problem, &x, ip.beta, cfg.volume_fraction);
        let row = HistoryRow {
            iter,
            p: ip.p,
            p_l: ip.p_l,
            beta: ip.beta,
            c_max: ev.c_max,
            objective: ev.objective,
            mean: ev.mean,
            std: ev.std,
            constraint: phi,
        };
        observer(&row, &x);
        history.push(row);
        let s = *scale.get_or_insert(if ev.objective.abs() > 0.0 { 1.0 / ev.objective.abs() } else { 1.0 });
        let mut g = vec![0.0; vars.len()];
        let mut gv = vec![0.0; vars.len()];
        let pos: std::collections::HashMap<usize, usize> = vars.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        for e in 0..n {
            if let Some(&i) = pos.get(&master[e]) {
                if !problem.model.mesh.is_passive(e) {
                    g[i] += s * ev.gradient[e];
                    gv[i] += dphi[e];
                }
            }
        }
        let xv: Vec<f64> = vars.iter().map(|&e| x[e]).collect();
        let xn = mma.update(&xv, &lo, &hi, &g, &[phi], &[gv]);
        for (i, &e) in vars.iter().enumerate() {
            x[e] = xn[i].clamp(0.0, 1.0);
        }
        expand_design(problem, &master, &mut x);
        u_prev = Some(ev.u0);
    }
    Ok(OptResult { x, history, final_params: ip })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schedule() {
        let c = Continuation::standard();
        assert_eq!(c.p.value(0), 1.0);
        assert!((c.p.value(20) - 1.1).abs() < 1e-12);
        assert!((c.p.value(600) - 4.0).abs() < 1e-12);
        assert!((c.p.value(5000) - 4.0).abs() < 1e-12);
        assert_eq!(c.p.length(), 600);
        assert_eq!(c.total_iterations(), 800);
        let col = Ramp::new(1.8, 4.0, 0.1, 20).unwrap();
        assert_eq!(col.value(0), 1.8);
        assert_eq!(col.length(), 440);
    }

    #[test]
    fn ramps_are_monotone() {
        let r = Ramp::new(1.0, 4.0, 0.1, 3).unwrap();
        for i in 1..200 {
            assert!(r.value(i) >= r.value(i - 1));
        }
    }
}
