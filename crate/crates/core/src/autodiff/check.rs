use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamId, ParameterSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max over checked coordinates of |analytic − numeric| / max(1, |analytic|)
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
}

/// Compares analytic gradients against central finite differences.
///
/// `loss_fn` evaluates the loss at the current parameter values and
/// accumulates its gradient into the set (gradients are zeroed before each
/// call). At most `max_coords` coordinates are sampled with `seed`; when the
/// set is smaller, every coordinate is checked.
pub fn gradient_check<F>(
    params: &mut ParameterSet,
    h: f64,
    max_coords: usize,
    seed: u64,
    mut loss_fn: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParameterSet) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::domain(format!("finite-difference step must be positive, got {h}")));
    }
    params.zero_grad();
    let base = loss_fn(params)?;
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad().data().to_vec()).collect();
    params.zero_grad();
    let again = loss_fn(params)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::contract(format!(
            "loss function is not deterministic ({base} vs {again})"
        )));
    }

    let coords: Vec<(ParamId, usize)> = params
        .ids()
        .flat_map(|id| (0..params.value(id).len()).map(move |k| (id, k)))
        .collect();
    let picked: Vec<usize> = if coords.len() <= max_coords {
        (0..coords.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, coords.len(), max_coords).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut worst = 0.0f64;
    for &c in &picked {
        let (id, k) = coords[c];
        let original = params.value(id).data()[k];
        params.value_mut(id).data_mut()[k] = original + h;
        params.zero_grad();
        let plus = loss_fn(params)?;
        params.value_mut(id).data_mut()[k] = original - h;
        params.zero_grad();
        let minus = loss_fn(params)?;
        params.value_mut(id).data_mut()[k] = original;

        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[id.0][k];
        let err = (a - numeric).abs() / a.abs().max(1.0);
        worst = worst.max(err);
    }
    params.zero_grad();
    Ok(GradCheckReport {
        max_relative_error: worst,
        coordinates_checked: picked.len(),
    })
}
