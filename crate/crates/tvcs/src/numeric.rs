//! Small numerical utilities: dot products, finite differences, and a
//! power-iteration spectral estimate for symmetric PSD operators.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Central-difference gradient of `f` at `point` with step `h`.
///
/// Independent of any analytic gradient; used to verify them.
pub fn finite_difference_gradient<F>(mut f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(point.len());
    let mut work = point.to_vec();
    for i in 0..point.len() {
        work[i] = point[i] + h;
        let plus = f(&work);
        work[i] = point[i] - h;
        let minus = f(&work);
        work[i] = point[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Largest relative deviation between two gradients, with an absolute
/// floor so near-zero components do not blow up the ratio.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a
        .iter()
        .chain(b.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

/// Estimates the largest eigenvalue of a symmetric PSD operator by power
/// iteration from a fixed pseudo-random start, so repeated calls agree.
pub fn power_iteration_largest<F>(dim: usize, mut apply: F, max_iters: usize, tol: f64) -> f64
where
    F: FnMut(&[f64], &mut [f64]),
{
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7073_7065_6374_7261);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let n = norm2(&v);
    if n == 0.0 || dim == 0 {
        return 0.0;
    }
    v.iter_mut().for_each(|e| *e /= n);
    let mut w = vec![0.0; dim];
    let mut lambda = 0.0f64;
    for _ in 0..max_iters {
        apply(&v, &mut w);
        let new_lambda = dot(&v, &w);
        let wn = norm2(&w);
        if wn == 0.0 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(1e-300) {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}
