use super::graph::{Graph, Var};
use super::params::ParamSet;
use crate::error::{Error, Result};

/// Relative error with a 1e-12 absolute floor, as used by [`gradient_check`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn eval_scalar<F>(f: &F, params: &ParamSet) -> Result<(Graph, Vec<Var>, Var)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = g.bind(params)?;
    let out = f(&mut g, &vars)?;
    if !g.shape(out).is_empty() {
        return Err(Error::shape("gradient_check", "builder must return a scalar"));
    }
    Ok((g, vars, out))
}

/// Compare reverse-mode gradients of the scalar built by `f` against
/// central differences with step `h`, over every entry of every parameter.
/// Returns the maximum relative error.
pub fn gradient_check<F>(f: F, params: &ParamSet, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let (g, vars, out) = eval_scalar(&f, params)?;
    let grads = g.backward(out)?;

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (pi, &v) in vars.iter().enumerate() {
        let analytic = grads.get(v);
        for k in 0..analytic.len() {
            let orig = probe.get_index(pi).value.data()[k];
            probe.get_index_mut(pi).value.data_mut()[k] = orig + h;
            let (gp, _, op) = eval_scalar(&f, &probe)?;
            let plus = gp.value(op).item();
            probe.get_index_mut(pi).value.data_mut()[k] = orig - h;
            let (gm, _, om) = eval_scalar(&f, &probe)?;
            let minus = gm.value(om).item();
            probe.get_index_mut(pi).value.data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            if !numeric.is_finite() {
                return Err(Error::numeric("gradient_check central difference"));
            }
            worst = worst.max(relative_error(analytic.data()[k], numeric));
        }
    }
    Ok(worst)
}
