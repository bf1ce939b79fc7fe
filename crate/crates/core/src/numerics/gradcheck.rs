use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::bail;
use crate::numerics::params::ParamStore;
use crate::rng::NoiseStream;
use crate::{Error, Result};

/// Compares the analytic gradients stored in `params` against central finite
/// differences of `loss`.
///
/// At most `max_coords` coordinates are probed (every tensor contributes at
/// least one); the choice is seeded. Returns the largest
/// `|analytic - numeric| / (|analytic| + 1e-8)`.
pub fn finite_diff_check<F>(
    params: &mut ParamStore,
    mut loss: F,
    h: f64,
    max_coords: usize,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(1e-6..=1e-3).contains(&h) {
        bail!(Config, "finite-difference step {h} outside [1e-6, 1e-3]");
    }
    let coords = sample_coords(params, max_coords, seed);
    let mut worst = 0.0f64;
    for (name, idx) in coords {
        let analytic = params.grad(&name)?.data()[idx];
        let orig = params.get(&name)?.data()[idx];
        params.get_mut(&name)?.data_mut()[idx] = orig + h;
        let plus = loss(params)?;
        params.get_mut(&name)?.data_mut()[idx] = orig - h;
        let minus = loss(params)?;
        params.get_mut(&name)?.data_mut()[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(alloc::format!("loss at {name}[{idx}]")));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (analytic - numeric).abs() / (analytic.abs() + 1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn sample_coords(params: &ParamStore, max_coords: usize, seed: u64) -> Vec<(String, usize)> {
    let total = params.num_values();
    let mut out = Vec::new();
    if total <= max_coords {
        for (name, v, _) in params.iter() {
            out.extend((0..v.len()).map(|i| (name.to_string(), i)));
        }
        return out;
    }
    let mut rng = NoiseStream::new(seed);
    let per_tensor = (max_coords / params.len().max(1)).max(1);
    for (name, v, _) in params.iter() {
        for _ in 0..per_tensor.min(v.len()) {
            out.push((name.to_string(), rng.below(v.len())));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn store(values: &[f64]) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::new(&[values.len()], values.to_vec()).unwrap());
        p
    }

    #[test]
    fn sum_loss_has_unit_gradient() {
        let mut p = store(&[0.3, -1.2, 4.0]);
        p.grad_mut("w").unwrap().fill(1.0);
        let err = finite_diff_check(&mut p, |p| Ok(p.get("w")?.sum()), 1e-4, 100, 0).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn quadratic_loss_matches_two_w() {
        let mut p = store(&[0.5, -2.0, 1.5, 3.0]);
        let g = p.get("w").unwrap().scale(2.0);
        *p.grad_mut("w").unwrap() = g;
        let err = finite_diff_check(&mut p, |p| Ok(p.get("w")?.sum_sq()), 1e-4, 100, 0).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn step_outside_range_rejected() {
        let mut p = store(&[1.0]);
        assert!(finite_diff_check(&mut p, |_| Ok(0.0), 1e-2, 10, 0).is_err());
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let mut p = store(&[1.0]);
        let r = finite_diff_check(&mut p, |_| Ok(f64::NAN), 1e-4, 10, 0);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
