use serde::{Deserialize, Serialize};

use crate::Vec3;

/// Fibonacci-spiral lattice of `n_b` directions on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SphereRepr", into = "SphereRepr")]
pub struct SphereGrid {
    directions: Vec<Vec3>,
    mean_spacing: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereRepr {
    n_b: usize,
}

impl TryFrom<SphereRepr> for SphereGrid {
    type Error = String;
    fn try_from(r: SphereRepr) -> Result<Self, String> {
        if r.n_b == 0 {
            return Err("sphere grid needs at least one bin".into());
        }
        Ok(fibonacci_sphere(r.n_b))
    }
}

impl From<SphereGrid> for SphereRepr {
    fn from(s: SphereGrid) -> Self {
        SphereRepr { n_b: s.len() }
    }
}

/// `z_k = 1 − 2(k + ½)/n_b`, `φ_k = 2πk(1 − 1/φ)` with `φ` the golden ratio.
pub fn fibonacci_sphere(n_b: usize) -> SphereGrid {
    assert!(n_b >= 1, "fibonacci_sphere needs n_b >= 1");
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let directions: Vec<Vec3> = (0..n_b)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n_b as f64;
            let phi = 2.0 * std::f64::consts::PI * k as f64 * (1.0 - 1.0 / golden);
            let r = (1.0 - z * z).max(0.0).sqrt();
            Vec3::new(r * phi.cos(), r * phi.sin(), z).normalize()
        })
        .collect();
    let nn = nearest_neighbour_angles(&directions);
    let mean_spacing = if n_b > 1 { nn.iter().sum::<f64>() / n_b as f64 } else { std::f64::consts::PI };
    SphereGrid { directions, mean_spacing }
}

fn nearest_neighbour_angles(dirs: &[Vec3]) -> Vec<f64> {
    dirs.iter()
        .enumerate()
        .map(|(i, d)| {
            let best = dirs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, e)| d.dot(e))
                .fold(f64::NEG_INFINITY, f64::max);
            best.clamp(-1.0, 1.0).acos()
        })
        .collect()
}

impl SphereGrid {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    /// Mean nearest-neighbour angle, radians.
    pub fn mean_spacing(&self) -> f64 {
        self.mean_spacing
    }

    pub fn nearest_neighbour_angles(&self) -> Vec<f64> {
        nearest_neighbour_angles(&self.directions)
    }

    /// Bin whose direction is closest to `n` (lowest index on ties).
    pub fn nearest(&self, n: &Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (k, d) in self.directions.iter().enumerate() {
            let dot = d.dot(n);
            if dot > best_dot {
                best_dot = dot;
                best = k;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_pair() {
        let one = fibonacci_sphere(1);
        assert_eq!(one.len(), 1);
        assert!((one.directions()[0].norm() - 1.0).abs() < 1e-12);
        let two = fibonacci_sphere(2);
        assert!((two.directions()[0].z - 0.5).abs() < 1e-15);
        assert!((two.directions()[1].z + 0.5).abs() < 1e-15);
    }

    #[test]
    fn thousand_bins_are_balanced() {
        let s = fibonacci_sphere(1000);
        let mean: Vec3 = s.directions().iter().sum::<Vec3>() / 1000.0;
        assert!(mean.norm() < 0.01);
        for d in s.directions() {
            assert!((d.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn spacing_is_even() {
        for n in [10usize, 100, 300] {
            let nn = fibonacci_sphere(n).nearest_neighbour_angles();
            let lo = nn.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = nn.iter().cloned().fold(0.0, f64::max);
            assert!(hi < 2.0 * lo, "n = {n}: {lo} .. {hi}");
        }
    }
}
