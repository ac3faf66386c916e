//! Finite-difference verification of reverse-mode gradients.

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::params::ParamSet;

/// Relative error with an absolute floor so near-zero gradients compare
/// sanely: |a - n| / max(|a|, |n|, 1e-3).
pub fn max_rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Checks d(loss)/d(inputs) for a scalar-valued graph built by `build` from a
/// single flat parameter leaf. Central differences with step `h`, all in
/// 64-bit. Returns the worst relative error across coordinates.
pub fn grad_check<F>(inputs: &[f64], h: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, NodeId) -> Result<NodeId>,
{
    if !(h > 0.0) {
        return Err(Error::spec("grad_check needs h > 0"));
    }
    let eval = |xs: &[f64]| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.param(&[xs.len()], xs.to_vec())?;
        let loss = build(&mut g, x)?;
        if g.value(loss).len() != 1 {
            return Err(Error::NonScalarOutput {
                len: g.value(loss).len(),
            });
        }
        Ok(g.value(loss)[0])
    };

    let mut g = Graph::new();
    let x = g.param(&[inputs.len()], inputs.to_vec())?;
    let loss = build(&mut g, x)?;
    if g.value(loss).len() != 1 {
        return Err(Error::NonScalarOutput {
            len: g.value(loss).len(),
        });
    }
    g.backward(loss)?;
    let analytic = g.grad(x).to_vec();

    let mut worst = 0.0f64;
    let mut xs = inputs.to_vec();
    for i in 0..inputs.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let fp = eval(&xs)?;
        xs[i] = orig - h;
        let fm = eval(&xs)?;
        xs[i] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        worst = worst.max(max_rel_err(analytic[i], numeric));
    }
    Ok(worst)
}

/// Composite check over a whole named parameter set: `build` constructs the
/// scalar loss from current parameter values; `coords` selects
/// (tensor index, element index) pairs to perturb. Used for full-backbone
/// verification where checking every coordinate would be prohibitive.
pub fn grad_check_named<F>(
    params: &mut ParamSet<f64>,
    coords: &[(usize, usize)],
    h: f64,
    mut build: F,
) -> Result<f64>
where
    F: FnMut(&mut Graph<f64>, &ParamSet<f64>) -> Result<(NodeId, Vec<(String, NodeId)>)>,
{
    if !(h > 0.0) {
        return Err(Error::spec("grad_check needs h > 0"));
    }
    let mut g = Graph::new();
    let (loss, named) = build(&mut g, params)?;
    if g.value(loss).len() != 1 {
        return Err(Error::NonScalarOutput {
            len: g.value(loss).len(),
        });
    }
    g.backward(loss)?;
    let mut analytic: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let name = &params.entry(i).name;
        let node = named
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| Error::spec(format!("builder never consumed tensor {name}")))?;
        analytic.push(g.grad(node).to_vec());
    }
    drop(g);

    let mut worst = 0.0f64;
    for &(ti, ei) in coords {
        let orig = params.entry(ti).values[ei];
        let mut eval = |v: f64, params: &mut ParamSet<f64>| -> Result<f64> {
            params.entry_mut(ti).values[ei] = v;
            let mut g = Graph::new();
            let (loss, _) = build(&mut g, params)?;
            Ok(g.value(loss)[0])
        };
        let fp = eval(orig + h, params)?;
        let fm = eval(orig - h, params)?;
        params.entry_mut(ti).values[ei] = orig;
        let numeric = (fp - fm) / (2.0 * h);
        worst = worst.max(max_rel_err(analytic[ti][ei], numeric));
    }
    Ok(worst)
}
