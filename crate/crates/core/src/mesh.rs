//! Structured quadrilateral meshes, bilinear shape functions and assembly.

use crate::error::{Error, Result};
use crate::linalg::SymBandMatrix;
use crate::tensor::T2;

const GAUSS: f64 = 0.577_350_269_189_625_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SymmetryAxes {
    /// Mirror about the vertical centre line `X = Lx/2`.
    pub x: bool,
    /// Mirror about the horizontal centre line `Y = Ly/2`.
    pub y: bool,
}

#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 4]>,
    pub volumes: Vec<f64>,
    fixed: Vec<bool>,
    load_node: Option<usize>,
    passive: Vec<bool>,
    symmetry: SymmetryAxes,
    free_index: Vec<Option<usize>>,
    n_free: usize,
}

impl Mesh2D {
    pub fn n_ele(&self) -> usize {
        self.elements.len()
    }
    pub fn n_node(&self) -> usize {
        self.nodes.len()
    }
    pub fn n_free(&self) -> usize {
        self.n_free
    }
    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }
    pub fn element_id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }
    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }
    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let (i, j) = self.element_ij(e);
        [(i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy()]
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed[dof]
    }
    pub fn fixed_dofs(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&d| self.fixed[d]).collect()
    }
    /// Free-equation number of a global DOF `2·node + component`.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn fix_dof(&mut self, node: usize, component: usize) {
        self.fixed[2 * node + component] = true;
        self.renumber();
    }

    /// Fix the given components of every node for which `pred(X, Y)` holds.
    pub fn fix_where(&mut self, pred: impl Fn(f64, f64) -> bool, components: &[usize]) {
        for (n, x) in self.nodes.iter().enumerate() {
            if pred(x[0], x[1]) {
                for &c in components {
                    self.fixed[2 * n + c] = true;
                }
            }
        }
        self.renumber();
    }

    /// Treat DOFs of the listed nodes as fixed. Used to drop orphan nodes.
    pub fn fix_nodes(&mut self, nodes: &[usize]) {
        for &n in nodes {
            self.fixed[2 * n] = true;
            self.fixed[2 * n + 1] = true;
        }
        self.renumber();
    }

    fn renumber(&mut self) {
        let mut k = 0;
        for d in 0..self.fixed.len() {
            if self.fixed[d] {
                self.free_index[d] = None;
            } else {
                self.free_index[d] = Some(k);
                k += 1;
            }
        }
        self.n_free = k;
    }

    pub fn set_load_node(&mut self, node: usize) -> Result<()> {
        if node >= self.n_node() {
            return Err(Error::Configuration(format!("load node {node} does not exist")));
        }
        if self.fixed[2 * node] && self.fixed[2 * node + 1] {
            return Err(Error::Configuration(format!("load node {node} is fully fixed")));
        }
        self.load_node = Some(node);
        Ok(())
    }
    pub fn load_node(&self) -> Option<usize> {
        self.load_node
    }

    pub fn set_passive(&mut self, e: usize) {
        self.passive[e] = true;
    }
    pub fn is_passive(&self, e: usize) -> bool {
        self.passive[e]
    }
    pub fn passive(&self) -> &[bool] {
        &self.passive
    }

    pub fn set_symmetry(&mut self, axes: SymmetryAxes) {
        self.symmetry = axes;
    }
    pub fn symmetry(&self) -> SymmetryAxes {
        self.symmetry
    }

    /// Partner of `e` under the mirror about the vertical centre line.
    pub fn mirror_x(&self, e: usize) -> usize {
        let (i, j) = self.element_ij(e);
        self.element_id(self.nx - 1 - i, j)
    }
    pub fn mirror_y(&self, e: usize) -> usize {
        let (i, j) = self.element_ij(e);
        self.element_id(i, self.ny - 1 - j)
    }

    /// Representative (smallest id) of the symmetry orbit of every element.
    pub fn symmetry_master(&self) -> Vec<usize> {
        (0..self.n_ele())
            .map(|e| {
                let mut orbit = vec![e];
                if self.symmetry.x {
                    orbit.push(self.mirror_x(e));
                }
                if self.symmetry.y {
                    let more: Vec<usize> = orbit.iter().map(|&o| self.mirror_y(o)).collect();
                    orbit.extend(more);
                }
                *orbit.iter().min().unwrap()
            })
            .collect()
    }

    /// Global DOFs of an element in local order `[u1x, u1y, u2x, ...]`.
    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let c = self.elements[e];
        let mut d = [0; 8];
        for a in 0..4 {
            d[2 * a] = 2 * c[a];
            d[2 * a + 1] = 2 * c[a] + 1;
        }
        d
    }

    /// Free-equation numbers of an element's DOFs.
    pub fn element_equations(&self, e: usize) -> [Option<usize>; 8] {
        let d = self.element_dofs(e);
        let mut out = [None; 8];
        for a in 0..8 {
            out[a] = self.free_index[d[a]];
        }
        out
    }

    /// Half-bandwidth of the assembled free-DOF matrix.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for e in 0..self.n_ele() {
            let eq: Vec<usize> = self.element_equations(e).iter().flatten().copied().collect();
            if let (Some(lo), Some(hi)) = (eq.iter().min(), eq.iter().max()) {
                bw = bw.max(hi - lo);
            }
        }
        bw
    }

    pub fn gather(&self, e: usize, u: &[f64]) -> [f64; 8] {
        let mut ue = [0.0; 8];
        for (a, q) in self.element_equations(e).iter().enumerate() {
            if let Some(q) = q {
                ue[a] = u[*q];
            }
        }
        ue
    }

    /// Expand a free-DOF vector to all `2·n_node` DOFs (fixed entries zero).
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        (0..self.fixed.len())
            .map(|d| self.free_index[d].map_or(0.0, |q| u[q]))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for e in 0..self.n_ele() {
            shape_gradients(self, e)?;
        }
        Ok(())
    }
}

pub fn build_structured_mesh(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh2D> {
    if nx == 0 || ny == 0 || !(lx > 0.0) || !(ly > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mesh {nx}x{ny} with size {lx}x{ly}"
        )));
    }
    let hx = lx / nx as f64;
    let hy = ly / ny as f64;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 * hx, j as f64 * hy]);
        }
    }
    let mut elements = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let n0 = j * (nx + 1) + i;
            elements.push([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1]);
        }
    }
    let n_dof = 2 * nodes.len();
    let mut mesh = Mesh2D {
        nx,
        ny,
        lx,
        ly,
        volumes: vec![hx * hy; nx * ny],
        nodes,
        elements,
        fixed: vec![false; n_dof],
        load_node: None,
        passive: vec![false; nx * ny],
        symmetry: SymmetryAxes::default(),
        free_index: vec![None; n_dof],
        n_free: 0,
    };
    mesh.renumber();
    Ok(mesh)
}

#[derive(Debug, Clone, Copy)]
pub struct GaussPoint {
    /// `dn[a] = (∂N_a/∂X, ∂N_a/∂Y)`
    pub dn: [[f64; 2]; 4],
    /// quadrature weight times Jacobian determinant
    pub dv: f64,
}

impl GaussPoint {
    /// Displacement gradient `(∇u)_ab = ∂u_a/∂X_b` of an element vector.
    #[inline]
    pub fn grad(&self, ue: &[f64; 8]) -> T2 {
        let mut g = [0.0; 4];
        for a in 0..4 {
            let (ux, uy) = (ue[2 * a], ue[2 * a + 1]);
            g[0] += ux * self.dn[a][0];
            g[1] += ux * self.dn[a][1];
            g[2] += uy * self.dn[a][0];
            g[3] += uy * self.dn[a][1];
        }
        g
    }

    /// `out += scale · dv · Bᵀ σ`
    #[inline]
    pub fn scatter(&self, sigma: &T2, scale: f64, out: &mut [f64; 8]) {
        let w = scale * self.dv;
        for a in 0..4 {
            out[2 * a] += w * (sigma[0] * self.dn[a][0] + sigma[1] * self.dn[a][1]);
            out[2 * a + 1] += w * (sigma[2] * self.dn[a][0] + sigma[3] * self.dn[a][1]);
        }
    }

    /// Gradient of the unit vector on local DOF `alpha`.
    #[inline]
    pub fn basis_grad(&self, alpha: usize) -> T2 {
        let a = alpha / 2;
        let mut g = [0.0; 4];
        let c = alpha % 2;
        g[2 * c] = self.dn[a][0];
        g[2 * c + 1] = self.dn[a][1];
        g
    }

    /// Small-strain operator rows `(ε11, ε22, 2ε12)`.
    pub fn b_linear(&self) -> [[f64; 8]; 3] {
        let mut b = [[0.0; 8]; 3];
        for a in 0..4 {
            b[0][2 * a] = self.dn[a][0];
            b[1][2 * a + 1] = self.dn[a][1];
            b[2][2 * a] = self.dn[a][1];
            b[2][2 * a + 1] = self.dn[a][0];
        }
        b
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BOperator {
    pub gps: [GaussPoint; 4],
}

impl BOperator {
    pub fn volume(&self) -> f64 {
        self.gps.iter().map(|g| g.dv).sum()
    }
}

pub fn shape_gradients(mesh: &Mesh2D, e: usize) -> Result<BOperator> {
    if e >= mesh.n_ele() {
        return Err(Error::InvalidArgument(format!("element {e} out of range")));
    }
    let xy: Vec<[f64; 2]> = mesh.elements[e].iter().map(|&n| mesh.nodes[n]).collect();
    let xi_n = [-1.0, 1.0, 1.0, -1.0];
    let eta_n = [-1.0, -1.0, 1.0, 1.0];
    let pts = [(-GAUSS, -GAUSS), (GAUSS, -GAUSS), (GAUSS, GAUSS), (-GAUSS, GAUSS)];
    let mut gps = [GaussPoint { dn: [[0.0; 2]; 4], dv: 0.0 }; 4];
    for (g, &(xi, eta)) in pts.iter().enumerate() {
        let mut dxi = [0.0; 4];
        let mut deta = [0.0; 4];
        for a in 0..4 {
            dxi[a] = 0.25 * xi_n[a] * (1.0 + eta_n[a] * eta);
            deta[a] = 0.25 * eta_n[a] * (1.0 + xi_n[a] * xi);
        }
        let mut jac = [0.0; 4];
        for a in 0..4 {
            jac[0] += dxi[a] * xy[a][0];
            jac[1] += dxi[a] * xy[a][1];
            jac[2] += deta[a] * xy[a][0];
            jac[3] += deta[a] * xy[a][1];
        }
        let det = jac[0] * jac[3] - jac[1] * jac[2];
        if !(det > 0.0) {
            return Err(Error::Geometry { element: e, det });
        }
        // [∂N/∂X; ∂N/∂Y] = J⁻¹ [∂N/∂ξ; ∂N/∂η]
        for a in 0..4 {
            gps[g].dn[a][0] = (jac[3] * dxi[a] - jac[1] * deta[a]) / det;
            gps[g].dn[a][1] = (-jac[2] * dxi[a] + jac[0] * deta[a]) / det;
        }
        gps[g].dv = det;
    }
    Ok(BOperator { gps })
}

pub fn assemble_vector(mesh: &Mesh2D, element_vectors: &[[f64; 8]]) -> Result<Vec<f64>> {
    if element_vectors.len() != mesh.n_ele() {
        return Err(Error::InvalidArgument(format!(
            "{} element vectors for {} elements",
            element_vectors.len(),
            mesh.n_ele()
        )));
    }
    let mut out = vec![0.0; mesh.n_free()];
    for (e, fe) in element_vectors.iter().enumerate() {
        for (a, q) in mesh.element_equations(e).iter().enumerate() {
            if let Some(q) = q {
                out[*q] += fe[a];
            }
        }
    }
    Ok(out)
}

/// Assemble symmetric element matrices (row-major 8×8) into banded storage.
pub fn assemble_matrix(mesh: &Mesh2D, element_matrices: &[[f64; 64]]) -> Result<SymBandMatrix> {
    if element_matrices.len() != mesh.n_ele() {
        return Err(Error::InvalidArgument(format!(
            "{} element matrices for {} elements",
            element_matrices.len(),
            mesh.n_ele()
        )));
    }
    let mut k = SymBandMatrix::zeros(mesh.n_free(), mesh.bandwidth());
    for (e, ke) in element_matrices.iter().enumerate() {
        let eq = mesh.element_equations(e);
        for a in 0..8 {
            let Some(qa) = eq[a] else { continue };
            for b in 0..8 {
                let Some(qb) = eq[b] else { continue };
                if qb <= qa {
                    k.add(qa, qb, ke[8 * a + b]);
                }
            }
        }
    }
    Ok(k)
}

pub fn external_load_vector(mesh: &Mesh2D, p0: [f64; 2]) -> Result<Vec<f64>> {
    let node = mesh
        .load_node()
        .ok_or_else(|| Error::Configuration("no load node defined".into()))?;
    let mut f = vec![0.0; mesh.n_free()];
    for c in 0..2 {
        match mesh.free_index(2 * node + c) {
            Some(q) => f[q] = p0[c],
            None if p0[c] != 0.0 => {
                return Err(Error::Configuration(format!(
                    "load component {c} applied to fixed DOF of node {node}"
                )))
            }
            None => {}
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let m = build_structured_mesh(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.n_ele(), 1);
        assert_eq!(m.n_node(), 4);
        assert_eq!(m.volumes[0], 1.0);
    }

    #[test]
    fn element_counts() {
        assert_eq!(build_structured_mesh(20, 10, 480.0, 240.0).unwrap().n_ele(), 200);
        assert_eq!(build_structured_mesh(160, 160, 300.0, 300.0).unwrap().n_ele(), 25_600);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(build_structured_mesh(0, 1, 1.0, 1.0).is_err());
        assert!(build_structured_mesh(1, 1, -1.0, 1.0).is_err());
    }

    #[test]
    fn partition_of_unity_and_linear_field() {
        for (lx, ly) in [(1.0, 1.0), (2.0, 1.0)] {
            let m = build_structured_mesh(1, 1, lx, ly).unwrap();
            let b = shape_gradients(&m, 0).unwrap();
            let mut ue = [0.0; 8];
            for a in 0..4 {
                ue[2 * a] = m.nodes[m.elements[0][a]][0];
            }
            for g in &b.gps {
                let sx: f64 = g.dn.iter().map(|d| d[0]).sum();
                let sy: f64 = g.dn.iter().map(|d| d[1]).sum();
                assert!(sx.abs() < 1e-14 && sy.abs() < 1e-14);
                let grad = g.grad(&ue);
                assert!((grad[0] - 1.0).abs() < 1e-14);
                assert!(grad[1].abs() < 1e-14 && grad[2].abs() < 1e-14 && grad[3].abs() < 1e-14);
            }
            assert!((b.volume() - lx * ly).abs() < 1e-12 * lx * ly);
        }
    }

    #[test]
    fn hand_assembly_of_identity_blocks() {
        let m = build_structured_mesh(2, 1, 2.0, 1.0).unwrap();
        let mut id = [0.0; 64];
        for a in 0..8 {
            id[9 * a] = 1.0;
        }
        let k = assemble_matrix(&m, &[id, id]).unwrap();
        // nodes 1 and 4 are shared
        for n in 0..m.n_node() {
            let expect = if n == 1 || n == 4 { 2.0 } else { 1.0 };
            for c in 0..2 {
                let q = m.free_index(2 * n + c).unwrap();
                assert_eq!(k.get(q, q), expect);
            }
        }
        assert!(assemble_matrix(&m, &[id]).is_err());
    }

    #[test]
    fn load_vector_rules() {
        let mut m = build_structured_mesh(2, 2, 2.0, 2.0).unwrap();
        m.fix_where(|_, y| y == 0.0, &[0, 1]);
        let top = m.node_id(1, 2);
        m.set_load_node(top).unwrap();
        let f = external_load_vector(&m, [0.0, -0.08]).unwrap();
        assert_eq!(f.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(f[m.free_index(2 * top + 1).unwrap()], -0.08);
        assert!(external_load_vector(&m, [0.0, 0.0]).unwrap().iter().all(|v| *v == 0.0));
        m.fix_dof(top, 0);
        assert!(external_load_vector(&m, [1.0, 0.0]).is_err());
        assert!(m.set_load_node(0).is_err());
    }

    #[test]
    fn mirror_is_involution() {
        let mut m = build_structured_mesh(5, 4, 5.0, 4.0).unwrap();
        m.set_symmetry(SymmetryAxes { x: true, y: true });
        for e in 0..m.n_ele() {
            assert_eq!(m.mirror_x(m.mirror_x(e)), e);
            assert_eq!(m.mirror_y(m.mirror_y(e)), e);
        }
        let master = m.symmetry_master();
        assert_eq!(master[m.element_id(4, 3)], 0);
    }
}
