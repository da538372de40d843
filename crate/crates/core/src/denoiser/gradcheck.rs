use std::collections::BTreeMap;

use rand::seq::index::sample;

use super::{DenoiserParams, Tensors};
use crate::rng::{Domain, Seed};

/// Above this many parameters only a seeded subset is checked.
const FULL_CHECK_LIMIT: usize = 10_000;
/// Entries checked per tensor when subsampling.
const SUBSET_PER_TENSOR: usize = 256;
/// Denominator floor of the relative error. Central differences of an O(1)
/// loss at step 1e-4 carry roughly 1e-12 of rounding noise, so entries
/// much smaller than this are effectively compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_tensor: BTreeMap<String, f64>,
    pub checked: usize,
}

/// Compare `analytic` gradients with central differences of `loss`.
///
/// Relative error per entry is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check<L>(
    params: &DenoiserParams,
    loss: L,
    analytic: &Tensors,
    step: f64,
    seed: Seed,
) -> GradCheckReport
where
    L: Fn(&DenoiserParams) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let subsample = params.parameter_count() > FULL_CHECK_LIMIT;
    let mut probe = params.clone();
    let mut per_tensor = BTreeMap::new();
    let mut checked = 0;

    let names: Vec<String> = params.tensors().keys().cloned().collect();
    for (ti, name) in names.iter().enumerate() {
        let len = params.tensors()[name].len();
        let indices: Vec<usize> = if subsample && len > SUBSET_PER_TENSOR {
            let mut rng = seed.stream(Domain::User, 0x6772_6164, ti as u64);
            sample(&mut rng, len, SUBSET_PER_TENSOR).into_vec()
        } else {
            (0..len).collect()
        };
        let grad = analytic.get(name).map(|t| t.data.as_slice());
        let mut worst: f64 = 0.0;
        for i in indices {
            let orig = params.tensors()[name].data[i];
            probe.tensor_mut(name).unwrap()[i] = orig + step;
            let up = loss(&probe);
            probe.tensor_mut(name).unwrap()[i] = orig - step;
            let down = loss(&probe);
            probe.tensor_mut(name).unwrap()[i] = orig;

            let numeric = (up - down) / (2.0 * step);
            let a = grad.map_or(0.0, |g| g[i]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
            checked += 1;
        }
        per_tensor.insert(name.clone(), worst);
    }

    GradCheckReport {
        max_rel_error: per_tensor.values().copied().fold(0.0, f64::max),
        per_tensor,
        checked,
    }
}
