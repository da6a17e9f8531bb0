//! Problem geometries used by the examples and tests.

use crate::design::build_filter;
use crate::error::{Error, Result};
use crate::fe::{FeModel, NewtonParams};
use crate::hyperelastic::MaterialParams;
use crate::mesh::{build_structured_mesh, Mesh2D, SymmetryAxes};
use crate::problem::Problem;
use crate::stochastic::{
    kl_structured, GeometryField, LoadUncertainty, Lognormal, MaterialField, StochasticModel, Truncation,
    UniformEta,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    /// Bottom edge clamped, point load at the top centre, top two element
    /// rows solid, mirror symmetry about the vertical centre line.
    CompressionBlock,
    /// Both side edges clamped, point load at the top centre on a small solid
    /// patch, mirror symmetry about the vertical centre line.
    ClampedBeam,
    /// Pinned at the bottom centre, loaded at the top centre which is guided
    /// horizontally, solid bands at top and bottom, quarter symmetry.
    PinnedColumn,
    /// Pin at the bottom-left corner, roller at the bottom-right corner,
    /// point load at the top centre. No passive elements or symmetry.
    SimplySupportedBeam,
}

impl Benchmark {
    pub fn mesh(self, nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh2D> {
        let mut m = build_structured_mesh(nx, ny, lx, ly)?;
        let tol = 1e-9 * lx.max(ly);
        let top = m.node_id(nx / 2, ny);
        match self {
            Benchmark::CompressionBlock => {
                m.fix_where(|_, y| y.abs() < tol, &[0, 1]);
                for j in ny.saturating_sub(2)..ny {
                    for i in 0..nx {
                        m.set_passive(m.element_id(i, j));
                    }
                }
                m.set_symmetry(SymmetryAxes { x: true, y: false });
            }
            Benchmark::ClampedBeam => {
                m.fix_where(|x, _| x.abs() < tol || (x - lx).abs() < tol, &[0, 1]);
                let hw = (nx / 40).max(1);
                let h = (ny / 20).max(1);
                for j in ny - h..ny {
                    for i in nx / 2 - hw.min(nx / 2)..(nx / 2 + hw).min(nx) {
                        m.set_passive(m.element_id(i, j));
                    }
                }
                m.set_symmetry(SymmetryAxes { x: true, y: false });
            }
            Benchmark::PinnedColumn => {
                m.fix_dof(m.node_id(nx / 2, 0), 0);
                m.fix_dof(m.node_id(nx / 2, 0), 1);
                m.fix_dof(top, 0);
                let h = (ny / 50).max(1);
                for j in (0..h).chain(ny - h..ny) {
                    for i in 0..nx {
                        m.set_passive(m.element_id(i, j));
                    }
                }
                m.set_symmetry(SymmetryAxes { x: true, y: true });
            }
            Benchmark::SimplySupportedBeam => {
                m.fix_dof(m.node_id(0, 0), 0);
                m.fix_dof(m.node_id(0, 0), 1);
                m.fix_dof(m.node_id(nx, 0), 1);
            }
        }
        m.set_load_node(top)?;
        m.validate()?;
        Ok(m)
    }
}

/// A random field specification: correlation lengths and truncation rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSpec {
    pub lcx: f64,
    pub lcy: f64,
    pub truncation: Truncation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub benchmark: Benchmark,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub material: MaterialParams,
    pub filter_radius: f64,
    pub load_mean: [f64; 2],
    /// isotropic load standard deviation `σ_P`
    pub load_sigma: Option<f64>,
    /// lognormal `(mean, variance)` of `E₀` with its field
    pub material_field: Option<(f64, f64, FieldSpec)>,
    /// uniform `(η_min, η_max)` with its field
    pub geometry_field: Option<(f64, f64, FieldSpec)>,
    pub newton: NewtonParams,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Problem> {
        let mesh = self.benchmark.mesh(self.nx, self.ny, self.lx, self.ly)?;
        if !(self.filter_radius > 0.0) {
            return Err(Error::InvalidArgument("filter radius must be positive".into()));
        }
        let filter = build_filter(&mesh, self.filter_radius)?;
        let n_ele = mesh.n_ele();
        let load = match self.load_sigma {
            Some(s) => Some(LoadUncertainty::isotropic(self.load_mean, s)?),
            None => None,
        };
        let material = match self.material_field {
            Some((mean, var, f)) => Some(MaterialField {
                kl: kl_structured(&mesh, f.lcx, f.lcy, f.truncation)?,
                marginal: Lognormal::new(mean, var)?,
            }),
            None => None,
        };
        let geometry = match self.geometry_field {
            Some((lo, hi, f)) => Some(GeometryField {
                kl: kl_structured(&mesh, f.lcx, f.lcy, f.truncation)?,
                marginal: UniformEta::new(lo, hi)?,
            }),
            None => None,
        };
        let stochastic = StochasticModel::new(n_ele, load, material, geometry);
        let model = FeModel::new(mesh, &self.material)?;
        Ok(Problem {
            model,
            material: self.material,
            filter,
            stochastic,
            load_mean: self.load_mean,
            newton: self.newton,
        })
    }

    /// The simply supported verification beam with all three sources active:
    /// `μ_P = (2, −10)`, `E₀ ~ Lognormal(50, 6.26)`, `η ~ U(0, 1)`, one
    /// field of correlation length 800 mm kept at two modes per field.
    pub fn verification_beam(sigma_p: f64) -> Result<Self> {
        let field = FieldSpec { lcx: 800.0, lcy: 800.0, truncation: Truncation::Modes(2) };
        Ok(Self {
            benchmark: Benchmark::SimplySupportedBeam,
            nx: 20,
            ny: 10,
            lx: 480.0,
            ly: 240.0,
            material: MaterialParams::new(50.0, 0.4, 50.0, 0.4)?,
            filter_radius: 75.0,
            load_mean: [2.0, -10.0],
            load_sigma: Some(sigma_p),
            material_field: Some((50.0, 6.26, field)),
            geometry_field: Some((0.0, 1.0, field)),
            newton: NewtonParams::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supports_and_passive_sets() {
        let m = Benchmark::CompressionBlock.mesh(8, 8, 8.0, 8.0).unwrap();
        assert_eq!(m.passive().iter().filter(|p| **p).count(), 16);
        assert_eq!(m.n_free(), 2 * 9 * 9 - 18);
        let m = Benchmark::SimplySupportedBeam.mesh(20, 10, 480.0, 240.0).unwrap();
        assert_eq!(m.n_free(), 2 * 21 * 11 - 3);
        assert_eq!(m.load_node(), Some(m.node_id(10, 10)));
        let m = Benchmark::PinnedColumn.mesh(10, 30, 120.0, 360.0).unwrap();
        assert_eq!(m.n_free(), 2 * 11 * 31 - 3);
        assert!(m.symmetry().x && m.symmetry().y);
    }

    #[test]
    fn verification_beam_dimension() {
        let p = ProblemSpec::verification_beam(4.0).unwrap().build().unwrap();
        assert_eq!(p.dim(), 6);
        assert_eq!(p.n_ele(), 200);
    }
}
