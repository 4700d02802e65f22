//! Dense tensors and a define-by-run reverse-mode gradient engine.

mod tape;
mod tensor;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use tape::{log_softmax_in_place, sigmoid, softmax_in_place, Gradients, Tape, Var, MASK_FILL};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Denominator floor for relative gradient error, so entries whose true
/// derivative is (near) zero are judged on absolute error instead.
pub const REL_ERR_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Worst entry: (parameter name, flat index, analytic, numeric).
    pub worst: Option<(String, usize, f64, f64)>,
    /// Maximum relative error per named parameter.
    pub per_param: BTreeMap<String, f64>,
    pub entries_checked: usize,
}

/// Value and (optionally) named gradients at a parameter point.
pub type Evaluation = (f64, Option<BTreeMap<String, Tensor>>);

/// Compares reverse-mode gradients of `f` against central differences
/// `(f(θ+eps) − f(θ−eps)) / 2eps` for every entry of every parameter.
pub fn grad_check<F>(params: &BTreeMap<String, Tensor>, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Var>,
{
    grad_check_with(params, eps, |ps, with_grad| {
        let mut tape = Tape::new();
        let vars: BTreeMap<String, Var> = ps
            .iter()
            .map(|(k, t)| (k.clone(), tape.param(k, Arc::new(t.clone()))))
            .collect();
        let out = f(&mut tape, &vars)?;
        let value = tape.value(out);
        if !value.is_scalar() {
            return Err(Error::Contract("grad_check function must return a scalar".into()));
        }
        let grads = if with_grad {
            Some(tape.backward(out)?.by_name())
        } else {
            None
        };
        Ok((value.data()[0], grads))
    })
}

/// Finite-difference check over an arbitrary evaluator that records its own tape.
pub fn grad_check_with<F>(params: &BTreeMap<String, Tensor>, eps: f64, eval: F) -> Result<GradCheckReport>
where
    F: Fn(&BTreeMap<String, Tensor>, bool) -> Result<Evaluation>,
{
    if !(eps > 0.0) {
        return Err(Error::Contract(format!("grad_check eps must be > 0, got {eps}")));
    }
    let eval = |ps: &BTreeMap<String, Tensor>, with_grad: bool| -> Result<Evaluation> {
        let (v, grads) = eval(ps, with_grad)?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("grad_check function returned {v}")));
        }
        Ok((v, grads))
    };

    let (_, analytic) = eval(params, true)?;
    let analytic = analytic.ok_or_else(|| Error::Contract("evaluator returned no gradients".into()))?;
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        per_param: BTreeMap::new(),
        entries_checked: 0,
    };
    for (name, tensor) in params {
        let mut group_max: f64 = 0.0;
        for i in 0..tensor.numel() {
            let orig = tensor.data()[i];
            work.get_mut(name).unwrap().data_mut()[i] = orig + eps;
            let (plus, _) = eval(&work, false)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig - eps;
            let (minus, _) = eval(&work, false)?;
            work.get_mut(name).unwrap().data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(name).map_or(0.0, |g| g.data()[i]);
            let err = relative_error(a, numeric);
            group_max = group_max.max(err);
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((name.clone(), i, a, numeric));
            }
            report.entries_checked += 1;
        }
        report.per_param.insert(name.clone(), group_max);
    }
    Ok(report)
}
