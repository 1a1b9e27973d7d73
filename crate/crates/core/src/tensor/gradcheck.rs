//! Central finite-difference gradient oracle. Independent of the trace
//! machinery: it only re-evaluates a loss closure at perturbed parameter
//! values, so it can falsify the analytic backward pass.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic coordinate sample for large parameters.
pub fn sample_coords(len: usize, max_n: usize, seed: u64) -> Vec<usize> {
    if len <= max_n {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng);
    idx.truncate(max_n);
    idx.sort_unstable();
    idx
}

/// Compare `analytic` gradients against central differences of `loss` at
/// the sampled coordinates of `values`. Returns the maximum relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`; a constant
/// closure yields 0 under the zero-vs-zero convention.
///
/// `values` is restored to its original contents before returning.
pub fn finite_difference_check<F>(
    values: &mut [f64],
    analytic: &[f64],
    mut loss: F,
    step: f64,
    coords: &[usize],
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite_difference_check: step must be positive");
    assert_eq!(values.len(), analytic.len(), "finite_difference_check: length mismatch");
    let mut max_rel = 0.0f64;
    for &i in coords {
        let orig = values[i];
        values[i] = orig + step;
        let up = loss(values);
        values[i] = orig - step;
        let down = loss(values);
        values[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Trace;
    use rand::Rng;

    #[test]
    fn linear_layer_gradient_matches() {
        // loss = mean((x W)^2) for a random 4x3 weight.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut w: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();

        let eval = |w: &[f64]| -> (f64, Vec<f64>) {
            let mut t = Trace::new();
            let xv = t.input(2, 4, x.clone(), false);
            let wv = t.input(4, 3, w.to_vec(), true);
            let y = t.matmul(xv, wv);
            let y2 = t.mul(y, y);
            let l = t.mean_all(y2);
            t.backward(l);
            (t.scalar(l), t.grad(wv).unwrap().to_vec())
        };
        let (_, analytic) = eval(&w);
        let coords: Vec<usize> = (0..12).collect();
        let err = finite_difference_check(&mut w, &analytic, |w| eval(w).0, 1e-5, &coords);
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn constant_closure_has_zero_error() {
        let mut v = vec![1.0, 2.0, 3.0];
        let analytic = vec![0.0; 3];
        let err = finite_difference_check(&mut v, &analytic, |_| 42.0, 1e-5, &[0, 1, 2]);
        assert_eq!(err, 0.0);
        assert_eq!(v, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sample_coords_is_deterministic_and_bounded() {
        let a = sample_coords(1000, 32, 5);
        let b = sample_coords(1000, 32, 5);
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        assert!(a.iter().all(|&i| i < 1000));
        assert_eq!(sample_coords(5, 32, 5), vec![0, 1, 2, 3, 4]);
    }
}
