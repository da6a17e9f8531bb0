//! Random inputs: Gaussian nodal load, lognormal modulus field and uniform
//! threshold field, the latter two discretized by truncated KL expansions.

use crate::design::Jet2;
use crate::error::{Error, Result};
use crate::mesh::Mesh2D;
use nalgebra::{DMatrix, SymmetricEigen};

pub const KL_COVERAGE: f64 = 0.9;

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadUncertainty {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    /// lower Cholesky factor of `cov`
    pub chol: [[f64; 2]; 2],
}

impl LoadUncertainty {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        if (cov[0][1] - cov[1][0]).abs() > 1e-14 * (cov[0][0].abs() + cov[1][1].abs()) {
            return Err(Error::InvalidArgument("load covariance is not symmetric".into()));
        }
        let l11 = cov[0][0].sqrt();
        let l21 = cov[1][0] / l11;
        let d = cov[1][1] - l21 * l21;
        if !(cov[0][0] > 0.0) || !(d > 0.0) {
            return Err(Error::InvalidArgument("load covariance is not positive definite".into()));
        }
        Ok(Self { mean, cov, chol: [[l11, 0.0], [l21, d.sqrt()]] })
    }

    pub fn isotropic(mean: [f64; 2], sigma: f64) -> Result<Self> {
        Self::new(mean, [[sigma * sigma, 0.0], [0.0, sigma * sigma]])
    }

    pub fn load_from_xi(&self, xi: [f64; 2]) -> [f64; 2] {
        let l = &self.chol;
        [
            self.mean[0] + l[0][0] * xi[0],
            self.mean[1] + l[1][0] * xi[0] + l[1][1] * xi[1],
        ]
    }

    /// Column `k` of `dP₀/dξ₁ = L_c`.
    pub fn column(&self, k: usize) -> [f64; 2] {
        [self.chol[0][k], self.chol[1][k]]
    }
}

fn corr_1d(d: f64, l: f64) -> f64 {
    if l.is_infinite() {
        1.0
    } else {
        (-d * d / (2.0 * l * l)).exp()
    }
}

/// Gaussian correlation between element centroids. An infinite length drops
/// that direction's term.
pub fn build_correlation(mesh: &Mesh2D, lcx: f64, lcy: f64) -> DMatrix<f64> {
    let n = mesh.n_ele();
    let c: Vec<[f64; 2]> = (0..n).map(|e| mesh.centroid(e)).collect();
    DMatrix::from_fn(n, n, |a, b| {
        corr_1d(c[a][0] - c[b][0], lcx) * corr_1d(c[a][1] - c[b][1], lcy)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    /// Smallest m reaching the coverage ratio.
    Coverage(f64),
    /// Fixed number of modes.
    Modes(usize),
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Coverage(KL_COVERAGE)
    }
}

#[derive(Debug, Clone)]
pub struct KLField {
    /// all eigenvalues, descending, clamped at zero
    pub eigenvalues: Vec<f64>,
    /// the first `m` orthonormal eigenvectors
    pub modes: Vec<Vec<f64>>,
    pub trace: f64,
}

impl KLField {
    pub fn m(&self) -> usize {
        self.modes.len()
    }

    pub fn coverage(&self) -> f64 {
        self.coverage_at(self.m())
    }

    pub fn coverage_at(&self, m: usize) -> f64 {
        self.eigenvalues[..m].iter().sum::<f64>() / self.trace
    }

    /// `∂Z_e/∂ξ_k = √λ_k γ_k[e]` for every element.
    pub fn sensitivity(&self, k: usize) -> Vec<f64> {
        let s = self.eigenvalues[k].sqrt();
        self.modes[k].iter().map(|g| s * g).collect()
    }

    pub fn field_from_xi(&self, xi: &[f64]) -> Vec<f64> {
        let n = self.modes.first().map_or(0, |v| v.len());
        let mut z = vec![0.0; n];
        for (k, &x) in xi.iter().enumerate() {
            let s = self.eigenvalues[k].sqrt() * x;
            for (zi, g) in z.iter_mut().zip(&self.modes[k]) {
                *zi += s * g;
            }
        }
        z
    }
}

fn choose_m(sorted: &[f64], trace: f64, truncation: Truncation) -> Result<usize> {
    match truncation {
        Truncation::Modes(m) => {
            if m == 0 || m > sorted.len() {
                return Err(Error::InvalidArgument(format!("{m} KL modes requested")));
            }
            Ok(m)
        }
        Truncation::Coverage(target) => {
            let mut acc = 0.0;
            for (k, l) in sorted.iter().enumerate() {
                acc += l;
                if acc / trace >= target - 1e-12 {
                    return Ok(k + 1);
                }
            }
            Ok(sorted.len())
        }
    }
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() * (1.0 + 1e-9) {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn sorted_eigen(r: &DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(r.clone());
    let n = r.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vecs = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            fix_sign(&mut v);
            v
        })
        .collect();
    (vals, vecs)
}

/// Dense eigendecomposition of an arbitrary correlation matrix.
pub fn kl_truncate(r: &DMatrix<f64>, truncation: Truncation) -> Result<KLField> {
    let trace = r.trace();
    if !(trace > 0.0) || r.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateField("correlation matrix is zero".into()));
    }
    let (vals, mut vecs) = sorted_eigen(r);
    let m = choose_m(&vals, trace, truncation)?;
    vecs.truncate(m);
    Ok(KLField { eigenvalues: vals, modes: vecs, trace })
}

fn factor_1d(centres: &[f64], l: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = centres.len();
    if l.is_infinite() {
        // rank one: exact spectrum {n, 0, ...}
        let mut vals = vec![0.0; n];
        vals[0] = n as f64;
        let mut vecs = vec![vec![1.0 / (n as f64).sqrt(); n]];
        for k in 1..n {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            vecs.push(v);
        }
        return (vals, vecs);
    }
    let r = DMatrix::from_fn(n, n, |a, b| corr_1d(centres[a] - centres[b], l));
    sorted_eigen(&r)
}

/// KL expansion on a structured grid using `R = R_y ⊗ R_x`.
///
/// The separable kernel lets the eigenpairs be products of two small 1-D
/// problems, which makes native-scale meshes affordable.
pub fn kl_structured(mesh: &Mesh2D, lcx: f64, lcy: f64, truncation: Truncation) -> Result<KLField> {
    if !(lcx > 0.0) || !(lcy > 0.0) {
        return Err(Error::InvalidArgument("correlation lengths must be positive".into()));
    }
    let xs: Vec<f64> = (0..mesh.nx).map(|i| (i as f64 + 0.5) * mesh.dx()).collect();
    let ys: Vec<f64> = (0..mesh.ny).map(|j| (j as f64 + 0.5) * mesh.dy()).collect();
    let (lx, vx) = factor_1d(&xs, lcx);
    let (ly, vy) = factor_1d(&ys, lcy);
    let mut prod: Vec<(f64, usize, usize)> = Vec::with_capacity(lx.len() * ly.len());
    for (a, &la) in lx.iter().enumerate() {
        for (b, &lb) in ly.iter().enumerate() {
            prod.push((la * lb, a, b));
        }
    }
    prod.sort_by(|p, q| q.0.total_cmp(&p.0).then((p.1 + p.2).cmp(&(q.1 + q.2))).then(p.1.cmp(&q.1)));
    let trace = mesh.n_ele() as f64;
    let vals: Vec<f64> = prod.iter().map(|p| p.0).collect();
    let m = choose_m(&vals, trace, truncation)?;
    let modes = prod[..m]
        .iter()
        .map(|&(_, a, b)| {
            let mut v = Vec::with_capacity(mesh.n_ele());
            for j in 0..mesh.ny {
                for i in 0..mesh.nx {
                    v.push(vy[b][j] * vx[a][i]);
                }
            }
            fix_sign(&mut v);
            v
        })
        .collect();
    Ok(KLField { eigenvalues: vals, modes, trace })
}

/// Lognormal marginal parameterized by the mean and variance of `E₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lognormal {
    pub mean: f64,
    pub variance: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl Lognormal {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(mean > 0.0) || !(variance > 0.0) {
            return Err(Error::InvalidArgument("lognormal mean and variance must be positive".into()));
        }
        let mu = (mean * mean / (mean * mean + variance).sqrt()).ln();
        let sigma = (1.0 + variance / (mean * mean)).ln().sqrt();
        Ok(Self { mean, variance, mu, sigma })
    }

    /// `F_E⁻¹(Φ(Z))`, which for this marginal is `exp(μ + σZ)`.
    pub fn e0(&self, z: f64) -> f64 {
        (self.mu + self.sigma * z).exp()
    }

    pub fn jet(&self, z: f64) -> Jet2 {
        let e = self.e0(z);
        Jet2 { v: e, s: self.sigma * e, ss: self.sigma * self.sigma * e, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformEta {
    pub min: f64,
    pub max: f64,
}

impl UniformEta {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(0.0 <= min && min < max && max <= 1.0) {
            return Err(Error::InvalidArgument(format!("uniform threshold bounds ({min}, {max})")));
        }
        Ok(Self { min, max })
    }

    pub fn eta(&self, zbar: f64) -> f64 {
        self.min + (self.max - self.min) * std_normal_cdf(zbar)
    }

    pub fn jet(&self, zbar: f64) -> Jet2 {
        let w = self.max - self.min;
        let phi = std_normal_pdf(zbar);
        Jet2 { v: self.eta(zbar), t: w * phi, tt: -zbar * w * phi, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct MaterialField {
    pub kl: KLField,
    pub marginal: Lognormal,
}

#[derive(Debug, Clone)]
pub struct GeometryField {
    pub kl: KLField,
    pub marginal: UniformEta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Load(usize),
    Material(usize),
    Geometry(usize),
}

/// Joint random input `ξ = [ξ₁ ξ₂ ξ₃]` and its per-element seeds.
#[derive(Debug, Clone)]
pub struct StochasticModel {
    pub load: Option<LoadUncertainty>,
    pub material: Option<MaterialField>,
    pub geometry: Option<GeometryField>,
    n_ele: usize,
    /// `seed_s[e*m + k] = ∂Z_e/∂ξ_k`, `seed_t` likewise for `Z̄`
    seed_s: Vec<f64>,
    seed_t: Vec<f64>,
}

impl StochasticModel {
    pub fn deterministic(n_ele: usize) -> Self {
        Self::new(n_ele, None, None, None)
    }

    pub fn new(
        n_ele: usize,
        load: Option<LoadUncertainty>,
        material: Option<MaterialField>,
        geometry: Option<GeometryField>,
    ) -> Self {
        let mut sm = Self { load, material, geometry, n_ele, seed_s: vec![], seed_t: vec![] };
        let m = sm.dim();
        sm.seed_s = vec![0.0; n_ele * m];
        sm.seed_t = vec![0.0; n_ele * m];
        for k in 0..m {
            match sm.block(k) {
                Block::Load(_) => {}
                Block::Material(i) => {
                    let s = sm.material.as_ref().unwrap().kl.sensitivity(i);
                    for e in 0..n_ele {
                        sm.seed_s[e * m + k] = s[e];
                    }
                }
                Block::Geometry(i) => {
                    let t = sm.geometry.as_ref().unwrap().kl.sensitivity(i);
                    for e in 0..n_ele {
                        sm.seed_t[e * m + k] = t[e];
                    }
                }
            }
        }
        sm
    }

    pub fn n_load(&self) -> usize {
        if self.load.is_some() {
            2
        } else {
            0
        }
    }
    pub fn n_material(&self) -> usize {
        self.material.as_ref().map_or(0, |f| f.kl.m())
    }
    pub fn n_geometry(&self) -> usize {
        self.geometry.as_ref().map_or(0, |f| f.kl.m())
    }
    pub fn dim(&self) -> usize {
        self.n_load() + self.n_material() + self.n_geometry()
    }

    pub fn block(&self, k: usize) -> Block {
        let (l, m) = (self.n_load(), self.n_material());
        if k < l {
            Block::Load(k)
        } else if k < l + m {
            Block::Material(k - l)
        } else {
            Block::Geometry(k - l - m)
        }
    }

    /// Global index of the first variable of a block kind.
    pub fn offset(&self, block: Block) -> usize {
        match block {
            Block::Load(i) => i,
            Block::Material(i) => self.n_load() + i,
            Block::Geometry(i) => self.n_load() + self.n_material() + i,
        }
    }

    #[inline]
    pub fn seed(&self, e: usize, k: usize) -> (f64, f64) {
        let m = self.dim();
        (self.seed_s[e * m + k], self.seed_t[e * m + k])
    }

    pub fn seeds(&self, e: usize) -> (&[f64], &[f64]) {
        let m = self.dim();
        (&self.seed_s[e * m..(e + 1) * m], &self.seed_t[e * m..(e + 1) * m])
    }

    pub fn n_ele(&self) -> usize {
        self.n_ele
    }

    fn z(&self, e: usize, xi: &[f64]) -> (f64, f64) {
        let (s, t) = self.seeds(e);
        let z = s.iter().zip(xi).map(|(a, b)| a * b).sum();
        let zb = t.iter().zip(xi).map(|(a, b)| a * b).sum();
        (z, zb)
    }

    /// Solid modulus of element `e` at `ξ` as a jet in `Z`.
    pub fn e0_jet(&self, e: usize, xi: &[f64], e0_det: f64) -> Jet2 {
        match &self.material {
            Some(f) => f.marginal.jet(self.z(e, xi).0),
            None => Jet2::constant(e0_det),
        }
    }

    /// Projection threshold of element `e` at `ξ` as a jet in `Z̄`.
    pub fn eta_jet(&self, e: usize, xi: &[f64]) -> Jet2 {
        match &self.geometry {
            Some(f) => f.marginal.jet(self.z(e, xi).1),
            None => Jet2::constant(0.5),
        }
    }

    pub fn load_at(&self, xi: &[f64], mean: [f64; 2]) -> [f64; 2] {
        match &self.load {
            Some(l) => l.load_from_xi([xi[0], xi[1]]),
            None => mean,
        }
    }

    /// `dP₀/dξ_k`, zero outside the load block.
    pub fn load_derivative(&self, k: usize) -> [f64; 2] {
        match (self.block(k), &self.load) {
            (Block::Load(i), Some(l)) => l.column(i),
            _ => [0.0, 0.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_structured_mesh;

    #[test]
    fn load_map() {
        let l = LoadUncertainty::isotropic([0.0, -0.08], 1e-3).unwrap();
        assert_eq!(l.load_from_xi([0.0, 0.0]), [0.0, -0.08]);
        assert_eq!(l.load_from_xi([1.0, 0.0]), [1e-3, -0.08]);
        assert!(LoadUncertainty::new([0.0; 2], [[1.0, 2.0], [2.0, 1.0]]).is_err());
        let c = LoadUncertainty::new([0.0; 2], [[4.0, 1.2], [1.2, 2.0]]).unwrap();
        let l = c.chol;
        assert!((l[1][0] * l[1][0] + l[1][1] * l[1][1] - 2.0).abs() < 1e-14);
        assert!((l[0][0] * l[1][0] - 1.2).abs() < 1e-14);
    }

    #[test]
    fn correlation_entries() {
        let m = build_structured_mesh(3, 2, 30.0, 20.0).unwrap();
        let r = build_correlation(&m, 10.0, f64::INFINITY);
        assert_eq!(r[(0, 0)], 1.0);
        assert!((r[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(r[(0, 3)], 1.0);
        let ones = build_correlation(&m, f64::INFINITY, f64::INFINITY);
        assert!(ones.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn flat_and_rank_one_spectra() {
        for n in [5, 10, 17] {
            let kl = kl_truncate(&DMatrix::identity(n, n), Truncation::default()).unwrap();
            assert_eq!(kl.m(), (0.9 * n as f64).ceil() as usize);
            let kl = kl_truncate(&DMatrix::from_element(n, n, 1.0), Truncation::default()).unwrap();
            assert_eq!(kl.m(), 1);
            assert!((kl.coverage() - 1.0).abs() < 1e-12);
        }
        assert!(kl_truncate(&DMatrix::zeros(3, 3), Truncation::default()).is_err());
    }

    #[test]
    fn lognormal_parameters() {
        let ln = Lognormal::new(0.85, 0.0625).unwrap();
        assert!((ln.sigma.powi(2) - (1.0 + 0.0625 / 0.7225f64).ln()).abs() < 1e-15);
        assert_eq!(ln.e0(0.0), ln.mu.exp());
        assert!(ln.e0(-0.3) < ln.e0(0.2));
    }

    #[test]
    fn uniform_threshold() {
        let u = UniformEta::new(0.3, 0.8).unwrap();
        assert!((u.eta(0.0) - 0.55).abs() < 1e-15);
        assert!((u.eta(40.0) - 0.8).abs() < 1e-12);
        assert!(UniformEta::new(0.8, 0.3).is_err());
    }
}
