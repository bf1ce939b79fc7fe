use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::math;
use crate::{Error, Result};

fn distance(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Distance from each point to its `k`-th nearest other point.
pub fn knn_radii(points: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        bail!(Config, "k must be positive");
    }
    if points.len() < k + 1 {
        return Err(Error::UndersizedSet {
            needed: k + 1,
            got: points.len(),
        });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        bail!(DimensionMismatch, "mixed feature lengths");
    }
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| distance(p, q))
                .collect();
            d.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            d[k - 1]
        })
        .collect())
}

/// Fraction of `probes` within the k-NN ball of at least one `support` point.
fn coverage(support: &[Vec<f64>], probes: &[Vec<f64>], k: usize) -> Result<f64> {
    if probes.len() < k + 1 {
        return Err(Error::UndersizedSet {
            needed: k + 1,
            got: probes.len(),
        });
    }
    let radii = knn_radii(support, k)?;
    if probes.iter().any(|p| p.len() != support[0].len()) {
        bail!(DimensionMismatch, "feature lengths differ between sets");
    }
    let inside = probes
        .iter()
        .filter(|g| support.iter().zip(&radii).any(|(r, &rad)| distance(g, r) <= rad))
        .count();
    Ok(inside as f64 / probes.len() as f64)
}

/// Share of generated points lying on the real manifold.
pub fn improved_precision(real: &[Vec<f64>], generated: &[Vec<f64>], k: usize) -> Result<f64> {
    coverage(real, generated, k)
}

/// Share of real points lying on the generated manifold.
pub fn improved_recall(real: &[Vec<f64>], generated: &[Vec<f64>], k: usize) -> Result<f64> {
    coverage(generated, real, k)
}
