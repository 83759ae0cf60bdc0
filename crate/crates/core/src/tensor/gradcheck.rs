use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares tape gradients of a scalar function against a five-point central
/// difference and returns the largest relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
///
/// The step for component `i` is `h * max(1, |x_i|)`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let errs = grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), h)?;
    Ok(errs[0])
}

/// [`grad_check`] over several inputs at once; returns one max relative
/// error per input.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| tape.grad_or_zeros(v)).collect();

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
        let out = f(&mut t, &vs)?;
        t.item(out)
    };

    let mut work: Vec<Tensor> = xs.to_vec();
    let mut errors = Vec::with_capacity(xs.len());
    for (g, grads) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..xs[g].len() {
            let x0 = xs[g].data()[i];
            if !x0.is_finite() {
                return Err(Error::contract("grad_check input must be finite"));
            }
            let step = h * x0.abs().max(1.0);
            let mut at = |offset: f64| -> Result<f64> {
                work[g].data_mut()[i] = x0 + offset;
                eval(&work)
            };
            let fm2 = at(-2.0 * step)?;
            let fm1 = at(-step)?;
            let fp1 = at(step)?;
            let fp2 = at(2.0 * step)?;
            work[g].data_mut()[i] = x0;
            // differences first, so a constant f gives exactly zero
            let numeric = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * step);
            let a = grads[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        errors.push(worst);
    }
    Ok(errors)
}
