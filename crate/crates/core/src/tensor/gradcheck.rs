//! Central-difference gradient checking for graph-built functions.

use super::{Graph, Tensor, Var};
use crate::error::TensorError;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, element index, analytic, numeric) at the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
    pub checked: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Fixed probe direction used to reduce non-scalar outputs to a scalar.
fn probe(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| ((i as f64) * 0.618_033_988_75 + 0.1).fract() * 2.0 - 1.0)
        .collect()
}

fn eval<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<(Graph<f64>, Vec<Var>, Var), TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let mut g = Graph::new();
    let vars = inputs
        .iter()
        .map(|t| g.param(t.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let out = f(&mut g, &vars)?;
    Ok((g, vars, out))
}

fn projected(g: &Graph<f64>, out: Var) -> f64 {
    let v = g.value(out).data();
    v.iter().zip(probe(v.len())).map(|(a, b)| a * b).sum()
}

/// Compares reverse-mode gradients of `f` against central differences with
/// step `h`. Non-scalar outputs are contracted with a fixed probe vector, so
/// the comparison is a Jacobian-vector product.
pub fn grad_check<F>(
    f: F,
    inputs: &[Tensor<f64>],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let (mut g, vars, out) = eval(&f, inputs)?;
    let seed = Tensor::from_vec(g.value(out).shape(), probe(g.value(out).numel()))?;
    g.backward_with(out, seed)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            g.grad(v)
                .map(|gr| gr.data().to_vec())
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        tol,
    };
    let mut work = inputs.to_vec();
    for (ii, input) in inputs.iter().enumerate() {
        for e in 0..input.numel() {
            let orig = input.data()[e];
            work[ii].data_mut()[e] = orig + h;
            let (gp, _, op) = eval(&f, &work)?;
            work[ii].data_mut()[e] = orig - h;
            let (gm, _, om) = eval(&f, &work)?;
            work[ii].data_mut()[e] = orig;
            let numeric = (projected(&gp, op) - projected(&gm, om)) / (2.0 * h);
            let a = analytic[ii][e];
            let err = rel_err(a, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((ii, e, a, numeric));
            }
        }
    }
    Ok(report)
}
