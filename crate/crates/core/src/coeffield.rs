//! Piecewise-constant coefficient fields sampled per fine triangle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{EdgeInterface, Geometry, MergedEdgeMesh, SubdomainMesh};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` in global coordinates carrying
/// a constant coefficient value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub value: f64,
}

impl Inclusion {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, value: f64) -> Self {
        Self { x0, y0, x1, y1, value }
    }

    /// Strict interior test; points on the rectangle boundary are outside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }
}

/// Background value plus rectangular inclusions. Later inclusions override
/// earlier ones where they overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub background: f64,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
}

impl CoefficientField {
    pub fn new(background: f64, inclusions: Vec<Inclusion>) -> Result<Self> {
        let field = Self { background, inclusions };
        field.validate()?;
        Ok(field)
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(value, Vec::new())
    }

    /// Coefficients are normalized so that the minimum is at least one.
    pub fn validate(&self) -> Result<()> {
        let values = std::iter::once(self.background).chain(self.inclusions.iter().map(|r| r.value));
        for v in values {
            if !v.is_finite() || v < 1.0 {
                return Err(Error::config(format!(
                    "coefficient values must be finite and >= 1 (got {v})"
                )));
            }
        }
        Ok(())
    }

    pub fn value_at(&self, p: [f64; 2]) -> f64 {
        self.inclusions
            .iter()
            .rev()
            .find(|r| r.contains(p))
            .map_or(self.background, |r| r.value)
    }

    /// Coefficient of triangle `t`, sampled at its centroid.
    pub fn eval_triangle(&self, mesh: &SubdomainMesh, t: usize) -> f64 {
        self.value_at(mesh.centroid(t))
    }

    pub fn sample(&self, mesh: &SubdomainMesh) -> Vec<f64> {
        (0..mesh.num_triangles()).map(|t| self.eval_triangle(mesh, t)).collect()
    }

    /// Multiplies every value by `factor` (background included).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            background: self.background * factor,
            inclusions: self
                .inclusions
                .iter()
                .map(|r| Inclusion {
                    value: r.value * factor,
                    ..*r
                })
                .collect(),
        }
    }
}

/// Coefficient extrema over the boundary layer (triangles with a vertex on
/// the subdomain boundary).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerStats {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

impl LayerStats {
    pub fn contrast(&self) -> f64 {
        self.alpha_hi / self.alpha_lo
    }
}

pub fn boundary_layer_stats(mesh: &SubdomainMesh, values: &[f64]) -> LayerStats {
    let (lo, hi) = (0..mesh.num_triangles())
        .filter(|&t| mesh.touches_boundary(t))
        .map(|t| values[t])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    LayerStats {
        alpha_lo: lo,
        alpha_hi: hi,
    }
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Harmonic averages along one interface: one coefficient per merged segment
/// plus the averaged mesh size.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceCoefficients {
    pub alpha: Vec<f64>,
    pub h: f64,
}

pub fn harmonic_averages(
    iface: &EdgeInterface,
    merged: &MergedEdgeMesh,
    meshes: &[SubdomainMesh],
    values: &[Vec<f64>],
) -> InterfaceCoefficients {
    let (vi, vj) = (&values[iface.first], &values[iface.second]);
    let alpha = merged
        .segments
        .iter()
        .map(|s| harmonic_mean(vi[s.first_triangle], vj[s.second_triangle]))
        .collect();
    InterfaceCoefficients {
        alpha,
        h: harmonic_mean(meshes[iface.first].h, meshes[iface.second].h),
    }
}

/// A field resolved on a concrete geometry.
#[derive(Clone, Debug)]
pub struct SampledField {
    /// Per-subdomain, per-triangle coefficient values.
    pub values: Vec<Vec<f64>>,
    pub layers: Vec<LayerStats>,
    /// Indexed like `Geometry::interfaces.interfaces`.
    pub interfaces: Vec<InterfaceCoefficients>,
}

impl SampledField {
    pub fn new(field: &CoefficientField, geometry: &Geometry) -> Result<Self> {
        field.validate()?;
        let values: Vec<Vec<f64>> = geometry.meshes.iter().map(|m| field.sample(m)).collect();
        Ok(Self::from_values(values, geometry))
    }

    pub fn from_values(values: Vec<Vec<f64>>, geometry: &Geometry) -> Self {
        let layers = geometry
            .meshes
            .iter()
            .zip(&values)
            .map(|(m, v)| boundary_layer_stats(m, v))
            .collect();
        let interfaces = geometry
            .interfaces
            .interfaces
            .iter()
            .zip(&geometry.merged)
            .map(|(e, m)| harmonic_averages(e, m, &geometry.meshes, &values))
            .collect();
        Self {
            values,
            layers,
            interfaces,
        }
    }

    pub fn max_layer_contrast(&self) -> f64 {
        self.layers.iter().map(LayerStats::contrast).fold(1.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_field() {
        let g = Geometry::build(2, &[4]).unwrap();
        let f = SampledField::new(&CoefficientField::constant(1.0).unwrap(), &g).unwrap();
        assert!(f.values.iter().flatten().all(|&v| v == 1.0));
        for l in &f.layers {
            assert_eq!((l.alpha_lo, l.alpha_hi), (1.0, 1.0));
        }
    }

    #[test]
    fn inclusion_value_and_tie_break() {
        let f = CoefficientField::new(
            1.0,
            vec![
                Inclusion::new(0.0, 0.0, 0.5, 0.5, 1e6),
                Inclusion::new(0.25, 0.25, 0.5, 0.5, 7.0),
            ],
        )
        .unwrap();
        assert_eq!(f.value_at([0.1, 0.1]), 1e6);
        assert_eq!(f.value_at([0.3, 0.3]), 7.0);
        // boundary of the rectangle counts as outside
        assert_eq!(f.value_at([0.5, 0.1]), 1.0);
        assert!(CoefficientField::new(0.5, vec![]).is_err());
        assert!(CoefficientField::new(1.0, vec![Inclusion::new(0.0, 0.0, 1.0, 1.0, 0.1)]).is_err());
    }

    #[test]
    fn layer_misses_inset_inclusion() {
        let g = Geometry::build(1, &[8]).unwrap();
        let h = 1.0 / 8.0;
        let f = CoefficientField::new(1.0, vec![Inclusion::new(h, h, 1.0 - h, 1.0 - h, 1e6)]).unwrap();
        let s = SampledField::new(&f, &g).unwrap();
        assert_eq!((s.layers[0].alpha_lo, s.layers[0].alpha_hi), (1.0, 1.0));
        let f = CoefficientField::new(1.0, vec![Inclusion::new(0.9, 0.25, 1.0, 0.75, 1e2)]).unwrap();
        let s = SampledField::new(&f, &g).unwrap();
        assert_eq!((s.layers[0].alpha_lo, s.layers[0].alpha_hi), (1.0, 1e2));
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic_mean(1.0, 1.0), 1.0);
        assert!((harmonic_mean(1.0, 1e6) - 2e6 / (1e6 + 1.0)).abs() < 1e-15);
        assert!((harmonic_mean(1.0, 1e6) - 1.999998).abs() < 1e-6);
        let h = 0.03125;
        assert_eq!(harmonic_mean(h, h), h);
    }

    proptest! {
        #[test]
        fn harmonic_mean_bounds(a in 1.0f64..1e8, b in 1.0f64..1e8) {
            let m = harmonic_mean(a, b);
            prop_assert!((m - harmonic_mean(b, a)).abs() <= 1e-12 * m);
            prop_assert!(m >= a.min(b) * (1.0 - 1e-12));
            prop_assert!(m <= 2.0 * a.min(b) * (1.0 + 1e-12));
        }

        #[test]
        fn layer_max_monotone(v1 in 1.0f64..1e6, extra in 0.0f64..1e6) {
            let g = Geometry::build(1, &[6]).unwrap();
            let rect = |v| CoefficientField::new(1.0, vec![Inclusion::new(0.0, 0.3, 0.4, 0.6, v)]).unwrap();
            let a = SampledField::new(&rect(v1), &g).unwrap();
            let b = SampledField::new(&rect(v1 + extra), &g).unwrap();
            prop_assert!(b.layers[0].alpha_hi >= a.layers[0].alpha_hi);
        }
    }

    #[test]
    fn interface_h_average_bounds() {
        let g = Geometry::build(2, &[4, 12, 4, 12]).unwrap();
        let s = SampledField::new(&CoefficientField::constant(3.0).unwrap(), &g).unwrap();
        for (e, c) in g.interfaces.interfaces.iter().zip(&s.interfaces) {
            let hmin = g.meshes[e.first].h.min(g.meshes[e.second].h);
            assert!(c.h >= hmin && c.h <= 2.0 * hmin);
            assert!(c.alpha.iter().all(|&a| (a - 3.0).abs() < 1e-14));
        }
    }
}
