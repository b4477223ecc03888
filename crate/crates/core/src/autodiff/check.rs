//! Finite-difference gradient checking.

use super::{Tape, Tensor, TensorData};

/// Checks the analytic gradient of a scalar function of one tensor against
/// central finite differences with the given step. Returns the worst
/// relative error, `|a - c| / max(1e-8, |a| + |c|)`.
pub fn grad_check<F>(f: F, x: &TensorData, step: f64) -> f64
where
    F: for<'t> Fn(&'t Tape, Tensor<'t>) -> Tensor<'t>,
{
    grad_check_multi(|tape, xs| f(tape, xs[0]), std::slice::from_ref(x), step)
}

/// Multi-input variant of [`grad_check`]; the gradient of every input is
/// checked and the worst relative error over all components is returned.
pub fn grad_check_multi<F>(f: F, xs: &[TensorData], step: f64) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Tensor<'t>,
{
    let analytic = analytic_gradients(&f, xs);
    let numeric = central_diff_gradients(&f, xs, step);
    let a: Vec<f64> = analytic.into_iter().flatten().collect();
    let c: Vec<f64> = numeric.into_iter().flatten().collect();
    max_relative_error(&a, &c)
}

fn analytic_gradients<F>(f: &F, xs: &[TensorData]) -> Vec<Vec<f64>>
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Tensor<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Tensor<'_>> = xs.iter().map(|x| tape.var(x.clone())).collect();
    let loss = f(&tape, &vars);
    loss.backward();
    vars.iter()
        .map(|v| v.grad().expect("backward materializes leaf gradients"))
        .collect()
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` per component,
/// evaluated with forward passes only.
pub fn central_diff_gradients<F>(f: &F, xs: &[TensorData], step: f64) -> Vec<Vec<f64>>
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Tensor<'t>,
{
    let eval = |points: &[TensorData]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Tensor<'_>> = points.iter().map(|x| tape.var(x.clone())).collect();
        f(&tape, &vars).value()
    };
    let mut grads = Vec::with_capacity(xs.len());
    for t in 0..xs.len() {
        let mut g = vec![0.0; xs[t].values().len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let mut plus = xs.to_vec();
            plus[t].values_mut()[i] += step;
            let mut minus = xs.to_vec();
            minus[t].values_mut()[i] -= step;
            *gi = (eval(&plus) - eval(&minus)) / (2.0 * step);
        }
        grads.push(g);
    }
    grads
}

/// Worst componentwise relative error between two gradient vectors.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / f64::max(1e-8, x.abs() + y.abs()))
        .fold(0.0, f64::max)
}
