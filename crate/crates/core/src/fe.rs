//! Element kernels of the energy-interpolated formulation.
//!
//! Each element carries three scalars: `a = γE`, `g = γ` and
//! `c = E_L(ρ̄)(1 − γ(ρ̄)²)`. With `w = g·u` the element force is
//! `a·p(w) + c·k_L·u` where `p(w) = ∫ Bᵀ P̄(I + ∇w)` at unit modulus, and the
//! tangent is `a·g·k₁ + c·k_L`. Every element quantity is written as
//! `∫ Bᵀ σ̃` for a suitable 2×2 "stress" `σ̃`, so higher-order terms only need
//! Gauss-point tensor contractions.

use crate::error::{Error, Result};
use crate::hyperelastic::{self, DeformationState, MaterialParams};
use crate::linalg::SymBandMatrix;
use crate::mesh::{self, BOperator, Mesh2D};
use crate::tensor::{self, T2, T4, T6, T8};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElementScalars {
    pub a: f64,
    pub g: f64,
    pub c: f64,
}

#[derive(Debug, Clone)]
pub struct FeModel {
    pub mesh: Mesh2D,
    pub bops: Vec<BOperator>,
    pub kappa: f64,
    pub mu: f64,
    pub c_lin: T4,
}

/// Constitutive data at one Gauss point of a converged state.
#[derive(Debug, Clone, Copy)]
pub struct GpState {
    pub h0: T2,
    pub f: T2,
    pub p: T2,
    pub a4: T4,
    pub a6: T6,
}

#[derive(Debug, Clone)]
pub struct ElementState {
    pub gps: [GpState; 4],
}

impl FeModel {
    pub fn new(mesh: Mesh2D, material: &MaterialParams) -> Result<Self> {
        let bops = (0..mesh.n_ele())
            .map(|e| mesh::shape_gradients(&mesh, e))
            .collect::<Result<Vec<_>>>()?;
        let (kappa, mu) = material.unit_moduli();
        let (kl, ml) = material.unit_moduli_linear();
        Ok(Self { mesh, bops, kappa, mu, c_lin: hyperelastic::linear_elasticity_tensor(kl, ml) })
    }

    pub fn n_free(&self) -> usize {
        self.mesh.n_free()
    }

    fn state(&self, g: f64, h: &T2) -> Result<DeformationState> {
        DeformationState::new(tensor::add(&tensor::IDENTITY, &tensor::scale(h, g)))
    }

    pub fn element_force(&self, e: usize, s: &ElementScalars, ue: &[f64; 8]) -> Result<[f64; 8]> {
        let mut out = [0.0; 8];
        for gp in &self.bops[e].gps {
            let h = gp.grad(ue);
            let st = self.state(s.g, &h)?;
            let mut sig = tensor::scale(&hyperelastic::pk1_stress(&st, self.kappa, self.mu), s.a);
            tensor::axpy(&mut sig, s.c, &tensor::c4(&self.c_lin, &h));
            gp.scatter(&sig, 1.0, &mut out);
        }
        Ok(out)
    }

    /// Row-major 8×8 element tangent.
    pub fn element_tangent(&self, e: usize, s: &ElementScalars, ue: &[f64; 8]) -> Result<[f64; 64]> {
        let mut k = [0.0; 64];
        for gp in &self.bops[e].gps {
            let h = gp.grad(ue);
            let st = self.state(s.g, &h)?;
            let a4 = hyperelastic::tangent_a4(&st, self.kappa, self.mu);
            let mut m = [0.0; 16];
            for q in 0..16 {
                m[q] = s.a * s.g * a4[q] + s.c * self.c_lin[q];
            }
            add_bilinear(gp, &m, 1.0, &mut k);
        }
        Ok(k)
    }

    pub fn internal_force(&self, sc: &[ElementScalars], u: &[f64]) -> Result<Vec<f64>> {
        let fe = (0..self.mesh.n_ele())
            .into_par_iter()
            .map(|e| self.element_force(e, &sc[e], &self.mesh.gather(e, u)))
            .collect::<Result<Vec<_>>>()?;
        mesh::assemble_vector(&self.mesh, &fe)
    }

    pub fn tangent(&self, sc: &[ElementScalars], u: &[f64]) -> Result<SymBandMatrix> {
        let ke = (0..self.mesh.n_ele())
            .into_par_iter()
            .map(|e| self.element_tangent(e, &sc[e], &self.mesh.gather(e, u)))
            .collect::<Result<Vec<_>>>()?;
        mesh::assemble_matrix(&self.mesh, &ke)
    }

    /// Gauss-point data at the state `u` for an element with factor `g`.
    pub fn element_state(&self, e: usize, g: f64, ue: &[f64; 8]) -> Result<ElementState> {
        let mut gps = [GpState { h0: [0.0; 4], f: [0.0; 4], p: [0.0; 4], a4: [0.0; 16], a6: [0.0; 64] }; 4];
        for (q, gp) in self.bops[e].gps.iter().enumerate() {
            let h0 = gp.grad(ue);
            let st = self.state(g, &h0)?;
            gps[q] = GpState {
                h0,
                f: st.f,
                p: hyperelastic::pk1_stress(&st, self.kappa, self.mu),
                a4: hyperelastic::tangent_a4(&st, self.kappa, self.mu),
                a6: hyperelastic::tangent_a6(&st, self.kappa, self.mu),
            };
        }
        Ok(ElementState { gps })
    }

    pub fn gp_a8(&self, gs: &GpState) -> T8 {
        let st = DeformationState::new(gs.f).expect("state was admissible when cached");
        hyperelastic::tangent_a8(&st, self.kappa, self.mu)
    }
}

/// `k += scale · ∫ ∇N_α : M : ∇N_β` over one Gauss point.
pub fn add_bilinear(gp: &mesh::GaussPoint, m: &T4, scale: f64, k: &mut [f64; 64]) {
    for b in 0..8 {
        let sig = tensor::c4(m, &gp.basis_grad(b));
        let mut col = [0.0; 8];
        gp.scatter(&sig, scale, &mut col);
        for a in 0..8 {
            k[8 * a + b] += col[a];
        }
    }
}

/// Unit-modulus element operators for testing: `p`, `k₁`, `k₂`, `k₃`, `k_L`
/// at the interpolated gradient `F = I + g∇u`.
pub struct ElementOperators<'a> {
    model: &'a FeModel,
    e: usize,
    g: f64,
    ue: [f64; 8],
}

impl<'a> ElementOperators<'a> {
    pub fn new(model: &'a FeModel, e: usize, g: f64, ue: [f64; 8]) -> Self {
        Self { model, e, g, ue }
    }

    fn states(&self) -> Result<Vec<DeformationState>> {
        self.model.bops[self.e]
            .gps
            .iter()
            .map(|gp| self.model.state(self.g, &gp.grad(&self.ue)))
            .collect()
    }

    pub fn p(&self) -> Result<[f64; 8]> {
        let mut out = [0.0; 8];
        for (gp, st) in self.model.bops[self.e].gps.iter().zip(self.states()?) {
            gp.scatter(&hyperelastic::pk1_stress(&st, self.model.kappa, self.model.mu), 1.0, &mut out);
        }
        Ok(out)
    }

    pub fn k1(&self) -> Result<[f64; 64]> {
        let mut k = [0.0; 64];
        for (gp, st) in self.model.bops[self.e].gps.iter().zip(self.states()?) {
            add_bilinear(gp, &hyperelastic::tangent_a4(&st, self.model.kappa, self.model.mu), 1.0, &mut k);
        }
        Ok(k)
    }

    pub fn k_lin(&self) -> [f64; 64] {
        let mut k = [0.0; 64];
        for gp in &self.model.bops[self.e].gps {
            add_bilinear(gp, &self.model.c_lin, 1.0, &mut k);
        }
        k
    }

    /// `(k₂)_{αβγ}` as a dense 8×8×8 array.
    pub fn k2_dense(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; 512];
        for (gp, st) in self.model.bops[self.e].gps.iter().zip(self.states()?) {
            let a6 = hyperelastic::tangent_a6(&st, self.model.kappa, self.model.mu);
            for b in 0..8 {
                let a6b = tensor::c6(&a6, &gp.basis_grad(b));
                for c in 0..8 {
                    let sig = tensor::c4(&a6b, &gp.basis_grad(c));
                    let mut col = [0.0; 8];
                    gp.scatter(&sig, 1.0, &mut col);
                    for a in 0..8 {
                        out[64 * a + 8 * b + c] += col[a];
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn k3_dense(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; 4096];
        for (gp, st) in self.model.bops[self.e].gps.iter().zip(self.states()?) {
            let a8 = hyperelastic::tangent_a8(&st, self.model.kappa, self.model.mu);
            for b in 0..8 {
                let a8b = tensor::c8(&a8, &gp.basis_grad(b));
                for c in 0..8 {
                    let a8bc = tensor::c6(&a8b, &gp.basis_grad(c));
                    for d in 0..8 {
                        let sig = tensor::c4(&a8bc, &gp.basis_grad(d));
                        let mut col = [0.0; 8];
                        gp.scatter(&sig, 1.0, &mut col);
                        for a in 0..8 {
                            out[512 * a + 64 * b + 8 * c + d] += col[a];
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonParams {
    pub rtol: f64,
    pub force_floor: f64,
    pub max_iter: usize,
    pub min_step: f64,
    pub c0: f64,
    pub dc: f64,
    pub c_max: f64,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            force_floor: 1.0,
            max_iter: 30,
            min_step: 1.0 / 64.0,
            c0: crate::design::C0,
            dc: crate::design::DELTA_C,
            c_max: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumState {
    pub u: Vec<f64>,
    pub converged: bool,
    pub residual_norm: f64,
    pub load_factor: f64,
    /// cutoff used for the converged solve
    pub c: f64,
    /// cutoffs tried in order, the first being `c0`
    pub c_history: Vec<f64>,
    pub iterations: usize,
    /// factorization of the tangent at the converged state
    pub factor: Option<crate::linalg::LdltFactor>,
}

fn newton(
    model: &FeModel,
    sc: &[ElementScalars],
    f: &[f64],
    u: &mut Vec<f64>,
    p: &NewtonParams,
    iters: &mut usize,
) -> Result<f64> {
    let tol = p.rtol * crate::linalg::norm(f).max(p.force_floor);
    for _ in 0..=p.max_iter {
        let fint = model.internal_force(sc, u)?;
        let r: Vec<f64> = fint.iter().zip(f).map(|(a, b)| a - b).collect();
        let rn = crate::linalg::norm(&r);
        if !rn.is_finite() {
            return Err(Error::SolverFailure("non-finite residual".into()));
        }
        if rn <= tol {
            return Ok(rn);
        }
        *iters += 1;
        let k = model.tangent(sc, u)?;
        let du = k.factor()?.solve(&r);
        for (ui, d) in u.iter_mut().zip(&du) {
            *ui -= d;
        }
    }
    Err(Error::SolverFailure(format!("no convergence in {} iterations", p.max_iter)))
}

fn incremental(
    model: &FeModel,
    sc: &[ElementScalars],
    f: &[f64],
    p: &NewtonParams,
    u_init: Option<&[f64]>,
    iters: &mut usize,
) -> Result<(Vec<f64>, f64)> {
    if let Some(u0) = u_init {
        let mut u = u0.to_vec();
        if let Ok(rn) = newton(model, sc, f, &mut u, p, iters) {
            return Ok((u, rn));
        }
    }
    let mut u = vec![0.0; model.n_free()];
    let mut lam = 0.0;
    let mut step: f64 = 1.0;
    let mut rn = 0.0;
    while lam < 1.0 {
        let target = (lam + step).min(1.0);
        let fl: Vec<f64> = f.iter().map(|v| v * target).collect();
        let mut trial = u.clone();
        match newton(model, sc, &fl, &mut trial, p, iters) {
            Ok(r) => {
                u = trial;
                lam = target;
                rn = r;
                step = (2.0 * step).min(1.0);
            }
            Err(e @ Error::InvalidArgument(_)) => return Err(e),
            Err(e) => {
                step *= 0.5;
                if step < p.min_step * (1.0 - 1e-12) {
                    return Err(Error::SolverFailure(format!("load factor {lam} reached: {e}")));
                }
            }
        }
    }
    Ok((u, rn))
}

/// Newton–Raphson with load bisection and the adaptive cutoff rescue.
///
/// `scalars(c)` returns the element scalars for a given γ cutoff `c`.
pub fn solve_equilibrium(
    model: &FeModel,
    scalars: &dyn Fn(f64) -> Vec<ElementScalars>,
    f_ext: &[f64],
    p: &NewtonParams,
    u_init: Option<&[f64]>,
    want_factor: bool,
) -> Result<EquilibriumState> {
    let mut c = p.c0;
    let mut history = Vec::new();
    let mut iters = 0;
    loop {
        history.push(c);
        let sc = scalars(c);
        match incremental(model, &sc, f_ext, p, u_init, &mut iters) {
            Ok((u, rn)) => {
                let factor = if want_factor { Some(model.tangent(&sc, &u)?.factor()?) } else { None };
                return Ok(EquilibriumState {
                    u,
                    converged: true,
                    residual_norm: rn,
                    load_factor: 1.0,
                    c,
                    c_history: history,
                    iterations: iters,
                    factor,
                });
            }
            Err(e) => {
                if c + p.dc > p.c_max + 1e-12 {
                    return Err(Error::SolverFailure(format!(
                        "cutoff exhausted at c = {c:.2} after {iters} Newton iterations: {e}"
                    )));
                }
                c += p.dc;
            }
        }
    }
}

/// First load factor among `steps` equal increments at which the tangent of
/// the structure without void elements is not positive definite.
pub fn stability_monitor(
    model: &FeModel,
    sc: &[ElementScalars],
    active: &[bool],
    f_ext_full: &[f64],
    steps: usize,
    p: &NewtonParams,
) -> Result<Option<f64>> {
    let mesh = &model.mesh;
    let mut used = vec![false; mesh.n_node()];
    for e in 0..mesh.n_ele() {
        if active[e] {
            for &n in &mesh.elements[e] {
                used[n] = true;
            }
        }
    }
    let orphans: Vec<usize> = (0..mesh.n_node()).filter(|&n| !used[n]).collect();
    let mut reduced_mesh = mesh.clone();
    reduced_mesh.fix_nodes(&orphans);
    let reduced = FeModel { mesh: reduced_mesh, ..model.clone() };
    let sc: Vec<ElementScalars> = sc
        .iter()
        .zip(active)
        .map(|(s, &on)| if on { *s } else { ElementScalars::default() })
        .collect();
    // map the load onto the reduced numbering
    let mut f = vec![0.0; reduced.n_free()];
    for d in 0..2 * mesh.n_node() {
        if let (Some(a), Some(b)) = (mesh.free_index(d), reduced.mesh.free_index(d)) {
            f[b] = f_ext_full[a];
        }
    }
    let mut u = vec![0.0; reduced.n_free()];
    let mut iters = 0;
    for i in 1..=steps {
        let lam = i as f64 / steps as f64;
        let fl: Vec<f64> = f.iter().map(|v| v * lam).collect();
        if newton(&reduced, &sc, &fl, &mut u, p, &mut iters).is_err() {
            return Ok(Some(lam));
        }
        match reduced.tangent(&sc, &u)?.factor() {
            Ok(fac) if fac.is_positive_definite() => {}
            _ => return Ok(Some(lam)),
        }
    }
    Ok(None)
}
