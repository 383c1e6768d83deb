//! Central finite-difference verification of analytic gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::store::ParameterStore;
use crate::autograd::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Compare analytic gradients against central finite differences on up to
/// `sample_count` randomly chosen parameter coordinates, returning the
/// maximum relative error (floored at 1e-8 in the denominator).
///
/// `loss_fn` must build the full loss onto the provided tape and be
/// deterministic; two forward passes are compared bit-exactly and a
/// disagreement is an error.
pub fn finite_diff_check<F>(
    store: &mut ParameterStore,
    epsilon: f64,
    sample_count: usize,
    seed: u64,
    mut loss_fn: F,
) -> Result<f64>
where
    F: FnMut(&mut Tape, &ParameterStore) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "finite_diff_check: epsilon {epsilon} outside [1e-7, 1e-4]"
        )));
    }

    let eval = |tape: &mut Tape, store: &ParameterStore, f: &mut F| -> Result<f64> {
        let root = f(tape, store)?;
        tape.scalar(root)
    };

    // Determinism probe: two fresh forward passes must agree bit-exactly.
    let mut tape = Tape::new();
    let root = loss_fn(&mut tape, store)?;
    let value = tape.scalar(root)?;
    let check = eval(&mut Tape::new(), store, &mut loss_fn)?;
    if value.to_bits() != check.to_bits() {
        return Err(Error::NonDeterministicLoss(value, check));
    }

    tape.backward(root)?;
    let mut scratch = store.clone();
    scratch.zero_grads();
    tape.write_grads(&mut scratch)?;

    // Enumerate every (name, coordinate) pair, then sample.
    let coords: Vec<(String, usize)> = store
        .names()
        .flat_map(|n| {
            let len = store.get(n).unwrap().numel();
            (0..len).map(move |i| (n.to_string(), i))
        })
        .collect();
    if coords.is_empty() {
        return Err(Error::InvalidArgument("finite_diff_check: store has no parameters".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = if sample_count >= coords.len() {
        (0..coords.len()).collect()
    } else {
        rand::seq::index::sample(&mut rng, coords.len(), sample_count).into_vec()
    };

    let mut max_rel = 0.0f64;
    for ci in picked {
        let (name, i) = &coords[ci];
        let original = store.get(name).unwrap().data()[*i];

        store.get_mut(name).unwrap().data_mut()[*i] = original + epsilon;
        let plus = eval(&mut Tape::new(), store, &mut loss_fn)?;
        store.get_mut(name).unwrap().data_mut()[*i] = original - epsilon;
        let minus = eval(&mut Tape::new(), store, &mut loss_fn)?;
        store.get_mut(name).unwrap().data_mut()[*i] = original;

        let fd = (plus - minus) / (2.0 * epsilon);
        let analytic = scratch.get(name).unwrap().grad().map_or(0.0, |g| g[*i]);
        let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
        let _ = rng.random::<u64>(); // keep the stream advancing per coordinate
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tensor;

    fn quadratic_store() -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::new(vec![3], vec![0.7, -1.3, 2.1]).unwrap()).unwrap();
        s
    }

    #[test]
    fn quadratic_loss_is_exact_up_to_rounding() {
        let mut store = quadratic_store();
        let err = finite_diff_check(&mut store, 1e-5, 16, 1, |tape, s| {
            let w = tape.param(s, "w")?;
            let sq = tape.mul(w, w)?;
            let total = tape.sum(sq, None)?;
            Ok(tape.scale(total, 0.5))
        })
        .unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn linear_loss_gradient_equals_coefficients() {
        let mut store = quadratic_store();
        let err = finite_diff_check(&mut store, 1e-5, 16, 2, |tape, s| {
            let w = tape.param(s, "w")?;
            let c = tape.input_row(&[2.0, -3.0, 0.5]);
            let c = tape.reshape(c, vec![3])?;
            let prod = tape.mul(w, c)?;
            tape.sum(prod, None)
        })
        .unwrap();
        assert!(err < 1e-9, "relative error {err}");
    }

    #[test]
    fn nondeterministic_loss_is_reported() {
        let mut store = quadratic_store();
        let mut flip = 0.0;
        let err = finite_diff_check(&mut store, 1e-5, 4, 3, move |tape, s| {
            flip += 1.0;
            let w = tape.param(s, "w")?;
            let sq = tape.mul(w, w)?;
            let total = tape.sum(sq, None)?;
            Ok(tape.scale(total, flip))
        })
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministicLoss(..)));
    }

    #[test]
    fn epsilon_range_is_enforced() {
        let mut store = quadratic_store();
        let err = finite_diff_check(&mut store, 1e-2, 4, 4, |tape, s| {
            let w = tape.param(s, "w")?;
            tape.sum(w, None)
        });
        assert!(err.is_err());
    }
}
