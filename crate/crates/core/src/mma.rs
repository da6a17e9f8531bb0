//! Method of moving asymptotes with the usual primal-dual subproblem solver.
//!
//! Solves `min f₀(x) + a₀z + Σ(c_i y_i + ½d_i y_i²)` subject to
//! `f_i(x) − a_i z − y_i ≤ 0`, with the artificial variables `y, z` keeping
//! every subproblem feasible.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct MmaParams {
    /// largest step as a fraction of `xmax − xmin`
    pub move_limit: f64,
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    pub albefa: f64,
    pub raa0: f64,
    pub epsimin: f64,
    pub a0: f64,
    pub a: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            move_limit: 0.2,
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            albefa: 0.1,
            raa0: 1e-5,
            epsimin: 1e-7,
            a0: 1.0,
            a: 0.0,
            c: 1000.0,
            d: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mma {
    pub params: MmaParams,
    n: usize,
    m: usize,
    iter: usize,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    pub low: Vec<f64>,
    pub upp: Vec<f64>,
}

/// Convex separable approximation handed to the subproblem solver.
struct Sub<'a> {
    m: usize,
    n: usize,
    low: &'a [f64],
    upp: &'a [f64],
    alfa: Vec<f64>,
    beta: Vec<f64>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    /// row-major `m × n`
    pp: Vec<f64>,
    qq: Vec<f64>,
    b: Vec<f64>,
    a0: f64,
    a: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
    z: f64,
    lam: Vec<f64>,
    xsi: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    zet: f64,
    s: Vec<f64>,
}

impl Mma {
    pub fn new(n: usize, m: usize, params: MmaParams) -> Self {
        Self { params, n, m, iter: 0, xold1: vec![], xold2: vec![], low: vec![0.0; n], upp: vec![0.0; n] }
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    /// One MMA step from `x` given objective gradient `df0dx`, constraint
    /// values `fval` and gradients `dfdx[i]`.
    pub fn update(
        &mut self,
        x: &[f64],
        xmin: &[f64],
        xmax: &[f64],
        df0dx: &[f64],
        fval: &[f64],
        dfdx: &[Vec<f64>],
    ) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        assert!(x.len() == n && df0dx.len() == n && fval.len() == m && dfdx.len() == m);
        let pr = &self.params;
        self.iter += 1;
        if self.iter <= 2 {
            for j in 0..n {
                let r = xmax[j] - xmin[j];
                self.low[j] = x[j] - pr.asyinit * r;
                self.upp[j] = x[j] + pr.asyinit * r;
            }
        } else {
            for j in 0..n {
                let zzz = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let f = if zzz > 0.0 {
                    pr.asyincr
                } else if zzz < 0.0 {
                    pr.asydecr
                } else {
                    1.0
                };
                let r = xmax[j] - xmin[j];
                let low = x[j] - f * (self.xold1[j] - self.low[j]);
                let upp = x[j] + f * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * r, x[j] - 0.01 * r);
                self.upp[j] = upp.clamp(x[j] + 0.01 * r, x[j] + 10.0 * r);
            }
        }
        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut pp = vec![0.0; m * n];
        let mut qq = vec![0.0; m * n];
        let mut b = vec![0.0; m];
        for j in 0..n {
            let r = xmax[j] - xmin[j];
            alfa[j] = (self.low[j] + pr.albefa * (x[j] - self.low[j])).max(x[j] - pr.move_limit * r).max(xmin[j]);
            beta[j] = (self.upp[j] - pr.albefa * (self.upp[j] - x[j])).min(x[j] + pr.move_limit * r).min(xmax[j]);
            let xmami = r.max(1e-5);
            let ux1 = self.upp[j] - x[j];
            let xl1 = x[j] - self.low[j];
            let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
            let (p, q) = (df0dx[j].max(0.0), (-df0dx[j]).max(0.0));
            let pq = 0.001 * (p + q) + pr.raa0 / xmami;
            p0[j] = (p + pq) * ux2;
            q0[j] = (q + pq) * xl2;
            for i in 0..m {
                let g = dfdx[i][j];
                let (p, q) = (g.max(0.0), (-g).max(0.0));
                let pq = 0.001 * (p + q) + pr.raa0 / xmami;
                pp[i * n + j] = (p + pq) * ux2;
                qq[i * n + j] = (q + pq) * xl2;
                b[i] += pp[i * n + j] / ux1 + qq[i * n + j] / xl1;
            }
        }
        for i in 0..m {
            b[i] -= fval[i];
        }
        let sub = Sub {
            m,
            n,
            low: &self.low,
            upp: &self.upp,
            alfa,
            beta,
            p0,
            q0,
            pp,
            qq,
            b,
            a0: pr.a0,
            a: vec![pr.a; m],
            c: vec![pr.c; m],
            d: vec![pr.d; m],
        };
        let xnew = sub.solve(pr.epsimin);
        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
        if self.xold2.is_empty() {
            self.xold2 = x.to_vec();
        }
        xnew
    }
}

impl Sub<'_> {
    fn plam_qlam(&self, x: &[f64], lam: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut plam = self.p0.clone();
        let mut qlam = self.q0.clone();
        let mut gvec = vec![0.0; m];
        for i in 0..m {
            for j in 0..n {
                plam[j] += self.pp[i * n + j] * lam[i];
                qlam[j] += self.qq[i * n + j] * lam[i];
                gvec[i] += self.pp[i * n + j] / (self.upp[j] - x[j]) + self.qq[i * n + j] / (x[j] - self.low[j]);
            }
        }
        (plam, qlam, gvec)
    }

    fn residual(&self, p: &Point, epsi: f64) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let (plam, qlam, gvec) = self.plam_qlam(&p.x, &p.lam);
        let mut r = Vec::with_capacity(3 * n + 5 * m + 2);
        for j in 0..n {
            let ux = self.upp[j] - p.x[j];
            let xl = p.x[j] - self.low[j];
            r.push(plam[j] / (ux * ux) - qlam[j] / (xl * xl) - p.xsi[j] + p.eta[j]);
        }
        for i in 0..m {
            r.push(self.c[i] + self.d[i] * p.y[i] - p.mu[i] - p.lam[i]);
        }
        r.push(self.a0 - p.zet - self.a.iter().zip(&p.lam).map(|(a, l)| a * l).sum::<f64>());
        for i in 0..m {
            r.push(gvec[i] - self.a[i] * p.z - p.y[i] + p.s[i] - self.b[i]);
        }
        for j in 0..n {
            r.push(p.xsi[j] * (p.x[j] - self.alfa[j]) - epsi);
        }
        for j in 0..n {
            r.push(p.eta[j] * (self.beta[j] - p.x[j]) - epsi);
        }
        for i in 0..m {
            r.push(p.mu[i] * p.y[i] - epsi);
        }
        r.push(p.zet * p.z - epsi);
        for i in 0..m {
            r.push(p.lam[i] * p.s[i] - epsi);
        }
        r
    }

    fn solve(&self, epsimin: f64) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let x: Vec<f64> = (0..n).map(|j| 0.5 * (self.alfa[j] + self.beta[j])).collect();
        let mut p = Point {
            xsi: (0..n).map(|j| (1.0 / (x[j] - self.alfa[j])).max(1.0)).collect(),
            eta: (0..n).map(|j| (1.0 / (self.beta[j] - x[j])).max(1.0)).collect(),
            x,
            y: vec![1.0; m],
            z: 1.0,
            lam: vec![1.0; m],
            mu: self.c.iter().map(|c| (0.5 * c).max(1.0)).collect(),
            zet: 1.0,
            s: vec![1.0; m],
        };
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let maxabs = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut epsi = 1.0;
        while epsi > epsimin {
            let r = self.residual(&p, epsi);
            let mut resnorm = norm(&r);
            let mut resmax = maxabs(&r);
            let mut it = 0;
            while resmax > 0.9 * epsi && it < 200 {
                it += 1;
                let (plam, qlam, gvec) = self.plam_qlam(&p.x, &p.lam);
                let mut delx = vec![0.0; n];
                let mut diagx = vec![0.0; n];
                let mut gg = vec![0.0; m * n];
                for j in 0..n {
                    let ux1 = self.upp[j] - p.x[j];
                    let xl1 = p.x[j] - self.low[j];
                    let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
                    let dpsidx = plam[j] / ux2 - qlam[j] / xl2;
                    delx[j] = dpsidx - epsi / (p.x[j] - self.alfa[j]) + epsi / (self.beta[j] - p.x[j]);
                    diagx[j] = 2.0 * (plam[j] / (ux1 * ux2) + qlam[j] / (xl1 * xl2))
                        + p.xsi[j] / (p.x[j] - self.alfa[j])
                        + p.eta[j] / (self.beta[j] - p.x[j]);
                    for i in 0..m {
                        gg[i * n + j] = self.pp[i * n + j] / ux2 - self.qq[i * n + j] / xl2;
                    }
                }
                let dely: Vec<f64> =
                    (0..m).map(|i| self.c[i] + self.d[i] * p.y[i] - p.lam[i] - epsi / p.y[i]).collect();
                let delz = self.a0 - self.a.iter().zip(&p.lam).map(|(a, l)| a * l).sum::<f64>() - epsi / p.z;
                let dellam: Vec<f64> =
                    (0..m).map(|i| gvec[i] - self.a[i] * p.z - p.y[i] - self.b[i] + epsi / p.lam[i]).collect();
                let diagy: Vec<f64> = (0..m).map(|i| self.d[i] + p.mu[i] / p.y[i]).collect();
                // reduced system in (Δλ, Δz)
                let mut aa = DMatrix::<f64>::zeros(m + 1, m + 1);
                let mut bb = DVector::<f64>::zeros(m + 1);
                for i in 0..m {
                    let mut blam = dellam[i] + dely[i] / diagy[i];
                    for j in 0..n {
                        blam -= gg[i * n + j] * delx[j] / diagx[j];
                    }
                    bb[i] = blam;
                    aa[(i, i)] = p.s[i] / p.lam[i] + 1.0 / diagy[i];
                    for k in 0..m {
                        let mut v = 0.0;
                        for j in 0..n {
                            v += gg[i * n + j] * gg[k * n + j] / diagx[j];
                        }
                        aa[(i, k)] += v;
                    }
                    aa[(i, m)] = self.a[i];
                    aa[(m, i)] = self.a[i];
                }
                aa[(m, m)] = -p.zet / p.z;
                bb[m] = delz;
                let sol = aa.lu().solve(&bb).unwrap_or_else(|| DVector::zeros(m + 1));
                let dlam: Vec<f64> = (0..m).map(|i| sol[i]).collect();
                let dz = sol[m];
                let dx: Vec<f64> = (0..n)
                    .map(|j| {
                        let gl: f64 = (0..m).map(|i| gg[i * n + j] * dlam[i]).sum();
                        -delx[j] / diagx[j] - gl / diagx[j]
                    })
                    .collect();
                let dy: Vec<f64> = (0..m).map(|i| -dely[i] / diagy[i] + dlam[i] / diagy[i]).collect();
                let dxsi: Vec<f64> = (0..n)
                    .map(|j| {
                        let d = p.x[j] - self.alfa[j];
                        -p.xsi[j] + epsi / d - p.xsi[j] * dx[j] / d
                    })
                    .collect();
                let deta: Vec<f64> = (0..n)
                    .map(|j| {
                        let d = self.beta[j] - p.x[j];
                        -p.eta[j] + epsi / d + p.eta[j] * dx[j] / d
                    })
                    .collect();
                let dmu: Vec<f64> = (0..m).map(|i| -p.mu[i] + epsi / p.y[i] - p.mu[i] * dy[i] / p.y[i]).collect();
                let dzet = -p.zet + epsi / p.z - p.zet * dz / p.z;
                let ds: Vec<f64> = (0..m).map(|i| -p.s[i] + epsi / p.lam[i] - p.s[i] * dlam[i] / p.lam[i]).collect();

                let mut stm = 1.0f64;
                let mut upd = |v: f64, dv: f64| stm = stm.max(-1.01 * dv / v);
                for i in 0..m {
                    upd(p.y[i], dy[i]);
                    upd(p.lam[i], dlam[i]);
                    upd(p.mu[i], dmu[i]);
                    upd(p.s[i], ds[i]);
                }
                upd(p.z, dz);
                upd(p.zet, dzet);
                for j in 0..n {
                    upd(p.xsi[j], dxsi[j]);
                    upd(p.eta[j], deta[j]);
                    upd(p.x[j] - self.alfa[j], dx[j]);
                    upd(self.beta[j] - p.x[j], -dx[j]);
                }
                let mut steg = 1.0 / stm;
                let old = p.clone();
                let mut itto = 0;
                let mut resnew = 2.0 * resnorm;
                let mut rnew = r.clone();
                while resnew > resnorm && itto < 50 {
                    itto += 1;
                    let ax = |o: &[f64], d: &[f64]| o.iter().zip(d).map(|(a, b)| a + steg * b).collect::<Vec<_>>();
                    p.x = ax(&old.x, &dx);
                    p.y = ax(&old.y, &dy);
                    p.z = old.z + steg * dz;
                    p.lam = ax(&old.lam, &dlam);
                    p.xsi = ax(&old.xsi, &dxsi);
                    p.eta = ax(&old.eta, &deta);
                    p.mu = ax(&old.mu, &dmu);
                    p.zet = old.zet + steg * dzet;
                    p.s = ax(&old.s, &ds);
                    rnew = self.residual(&p, epsi);
                    resnew = norm(&rnew);
                    steg /= 2.0;
                }
                resnorm = resnew;
                resmax = maxabs(&rnew);
            }
            epsi *= 0.1;
        }
        p.x
    }
}
