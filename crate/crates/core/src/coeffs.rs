//! Piecewise constant coefficient fields and the random multiscale
//! viscosity with a parabola-shaped high-viscosity channel.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, MeshHierarchy};

/// One value per triangle of the level-`level` mesh, in global triangle order.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstantField {
    level: u32,
    values: Vec<f64>,
}

impl PiecewiseConstantField {
    pub fn new(level: u32, values: Vec<f64>) -> Self {
        PiecewiseConstantField { level, values }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sum value * area` over the carrier mesh.
    pub fn integral(&self, mesh: &Mesh) -> f64 {
        self.values.iter().zip(mesh.areas()).map(|(v, a)| v * a).sum()
    }

    /// Checks `0 < value` (viscosity bound).
    pub fn check_positive(&self) -> Result<()> {
        match self.values.iter().position(|&v| !(v > 0.0)) {
            Some(element) => Err(Error::CoefficientBound {
                element,
                value: self.values[element],
                bound: "value > 0",
            }),
            None => Ok(()),
        }
    }

    /// Checks `0 <= value` (reaction bound).
    pub fn check_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| !(v >= 0.0)) {
            Some(element) => Err(Error::CoefficientBound {
                element,
                value: self.values[element],
                bound: "value >= 0",
            }),
            None => Ok(()),
        }
    }
}

/// Field with value `c >= 0` on every triangle of `mesh`.
pub fn constant_field(mesh: &Mesh, c: f64) -> Result<PiecewiseConstantField> {
    if !(c >= 0.0) {
        return Err(Error::CoefficientBound {
            element: 0,
            value: c,
            bound: "value >= 0",
        });
    }
    Ok(PiecewiseConstantField::new(mesh.level(), vec![c; mesh.num_triangles()]))
}

/// The curve `y = curvature * (x - apex_x)^2 + apex_y` for `x` in `[x_min, x_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Parabola {
    pub curvature: f64,
    pub apex_x: f64,
    pub apex_y: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for Parabola {
    fn default() -> Self {
        Parabola {
            curvature: 2.0,
            apex_x: 0.5,
            apex_y: 0.25,
            x_min: 0.0,
            x_max: 1.0,
        }
    }
}

impl Parabola {
    /// Number of uniform intervals used to bracket the closest point.
    const SAMPLES: usize = 1 << 12;

    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.apex_x;
        self.curvature * d * d + self.apex_y
    }

    fn squared_distance_at(&self, x: f64, p: [f64; 2]) -> f64 {
        let dx = x - p[0];
        let dy = self.eval(x) - p[1];
        dx * dx + dy * dy
    }

    /// Euclidean distance from `p` to the curve. The parameter range is
    /// sampled at `2^12 + 1` points and the best sample is refined by a
    /// golden-section search on its two neighbouring intervals.
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let n = Self::SAMPLES;
        let step = (self.x_max - self.x_min) / n as f64;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..=n {
            let d = self.squared_distance_at(self.x_min + step * i as f64, p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let mut lo = self.x_min + step * best.saturating_sub(1) as f64;
        let mut hi = self.x_min + step * (best + 1).min(n) as f64;
        let inv_phi = 0.618_033_988_749_894_9;
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut f1 = self.squared_distance_at(x1, p);
        let mut f2 = self.squared_distance_at(x2, p);
        for _ in 0..80 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = self.squared_distance_at(x1, p);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = self.squared_distance_at(x2, p);
            }
        }
        libm::sqrt(best_d.min(f1).min(f2))
    }
}

/// Parameters of the random multiscale viscosity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomCoefficientSpec {
    /// Carrier mesh level; the element size is `epsilon = 2^-eps_level`.
    pub eps_level: u32,
    pub background_min: f64,
    pub background_max: f64,
    pub inclusion_value: f64,
    /// Elements closer than `inclusion_width * epsilon` to the curve get the inclusion value.
    pub inclusion_width: f64,
    pub parabola: Parabola,
    pub seed: u64,
}

impl RandomCoefficientSpec {
    pub fn new(eps_level: u32, seed: u64) -> Self {
        RandomCoefficientSpec {
            eps_level,
            background_min: 0.1,
            background_max: 1.0,
            inclusion_value: 10.0,
            inclusion_width: 4.0,
            parabola: Parabola::default(),
            seed,
        }
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / (1u64 << self.eps_level) as f64
    }
}

/// Uniform sample in `[0, 1)` for element `element`.
///
/// Each element draws from its own ChaCha8 stream: the generator is seeded
/// with `seed` through `SeedableRng::seed_from_u64`, the stream id is set to
/// the element index, and the top 53 bits of the first `u64` output are used.
/// The result depends only on `(seed, element)`.
pub fn element_uniform(seed: u64, element: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(element as u64);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws the background values and overwrites the inclusion elements.
pub fn generate_multiscale_coefficient(spec: &RandomCoefficientSpec, hier: &MeshHierarchy) -> Result<PiecewiseConstantField> {
    let mesh = hier.mesh(spec.eps_level)?;
    let threshold = spec.inclusion_width * spec.epsilon();
    let width = spec.background_max - spec.background_min;
    let values = (0..mesh.num_triangles())
        .map(|t| {
            if spec.parabola.distance(mesh.barycenter(t)) < threshold {
                spec.inclusion_value
            } else {
                spec.background_min + width * element_uniform(spec.seed, t)
            }
        })
        .collect();
    Ok(PiecewiseConstantField::new(spec.eps_level, values))
}

/// Copies each value to all descendants on level `fine_level`.
pub fn inject_to_fine(field: &PiecewiseConstantField, hier: &MeshHierarchy, fine_level: u32) -> Result<PiecewiseConstantField> {
    if field.level() > fine_level {
        return Err(Error::InvalidLevels {
            coarse: field.level(),
            fine: fine_level,
        });
    }
    let fine = hier.mesh(fine_level)?;
    let coarse = hier.mesh(field.level())?;
    if coarse.num_triangles() != field.len() {
        return Err(Error::DimensionMismatch {
            what: "field length",
            expected: coarse.num_triangles(),
            found: field.len(),
        });
    }
    let values = (0..fine.num_triangles())
        .map(|t| field.values()[hier.ancestor(fine_level, t, field.level())])
        .collect();
    Ok(PiecewiseConstantField::new(fine_level, values))
}
