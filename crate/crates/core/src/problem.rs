//! A fully specified analysis problem: mesh, material, filter, random inputs
//! and solver settings.

use crate::design::{self, build_ledger, ElementLedger, FilterMatrix, InterpolationParams};
use crate::error::Result;
use crate::fe::{solve_equilibrium, ElementScalars, EquilibriumState, FeModel, NewtonParams};
use crate::hyperelastic::MaterialParams;
use crate::mesh;
use crate::stochastic::StochasticModel;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct Problem {
    pub model: FeModel,
    pub material: MaterialParams,
    pub filter: FilterMatrix,
    pub stochastic: StochasticModel,
    /// load at `ξ = 0` when the load is deterministic
    pub load_mean: [f64; 2],
    pub newton: NewtonParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignFields {
    pub x: Vec<f64>,
    pub rho_hat: Vec<f64>,
    /// projection at `η = 0.5`
    pub rho_bar: Vec<f64>,
}

impl Problem {
    pub fn n_ele(&self) -> usize {
        self.model.mesh.n_ele()
    }

    pub fn dim(&self) -> usize {
        self.stochastic.dim()
    }

    pub fn design_fields(&self, x: &[f64], beta: f64) -> DesignFields {
        let rho_hat = self.filter.apply(x);
        let rho_bar = rho_hat.iter().map(|&r| design::project(r, beta, 0.5)).collect();
        DesignFields { x: x.to_vec(), rho_hat, rho_bar }
    }

    /// Element ledgers at the realization `ξ`.
    pub fn ledgers(&self, rho_hat: &[f64], xi: &[f64], ip: &InterpolationParams) -> Vec<ElementLedger> {
        (0..self.n_ele())
            .into_par_iter()
            .map(|e| {
                let e0 = self.stochastic.e0_jet(e, xi, self.material.e0);
                let eta = self.stochastic.eta_jet(e, xi);
                build_ledger(rho_hat[e], &e0, &eta, ip, self.material.el0)
            })
            .collect()
    }

    pub fn scalars(&self, rho_hat: &[f64], xi: &[f64], ip: &InterpolationParams) -> Vec<ElementScalars> {
        self.ledgers(rho_hat, xi, ip)
            .iter()
            .map(|l| ElementScalars { a: l.a.base.v, g: l.g.base.v, c: l.c.base.v })
            .collect()
    }

    pub fn load_vector(&self, xi: &[f64]) -> Result<Vec<f64>> {
        mesh::external_load_vector(&self.model.mesh, self.stochastic.load_at(xi, self.load_mean))
    }

    /// `dF_ext/dξ_k`.
    pub fn load_derivative(&self, k: usize) -> Result<Vec<f64>> {
        let d = self.stochastic.load_derivative(k);
        if d == [0.0, 0.0] {
            return Ok(vec![0.0; self.model.n_free()]);
        }
        mesh::external_load_vector(&self.model.mesh, d)
    }

    pub fn solve_at(
        &self,
        rho_hat: &[f64],
        xi: &[f64],
        ip: &InterpolationParams,
        u_init: Option<&[f64]>,
        want_factor: bool,
    ) -> Result<EquilibriumState> {
        let f = self.load_vector(xi)?;
        let build = |c: f64| {
            let ipc = InterpolationParams { c, ..*ip };
            self.scalars(rho_hat, xi, &ipc)
        };
        solve_equilibrium(&self.model, &build, &f, &self.newton, u_init, want_factor)
    }

    /// End compliance `F_extᵀu` at a realization.
    pub fn compliance_at(
        &self,
        rho_hat: &[f64],
        xi: &[f64],
        ip: &InterpolationParams,
        u_init: Option<&[f64]>,
    ) -> Result<f64> {
        let st = self.solve_at(rho_hat, xi, ip, u_init, false)?;
        Ok(crate::linalg::dot(&self.load_vector(xi)?, &st.u))
    }
}
