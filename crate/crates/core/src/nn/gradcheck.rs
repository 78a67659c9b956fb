//! Central-finite-difference verification of analytic gradients.

use super::tape::{Tape, Var};
use super::ParamSet;

/// Per-parameter maximum normalized gradient error.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_param
            .iter()
            .map(|(_, e)| *e)
            .fold(0.0f64, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_error() <= tolerance
    }
}

/// Compare the tape gradient of a scalar loss against central differences
/// with step `epsilon`, parameter entry by parameter entry.
///
/// `build_loss` receives a fresh tape plus leaf vars created from the
/// current parameter values (in set order) and must return the scalar loss
/// node. Failures are reported, never thrown; a parameterless model yields
/// an empty report.
pub fn grad_check<F>(params: &ParamSet, epsilon: f64, build_loss: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |set: &ParamSet, want_grads: bool| -> (f64, Vec<ndarray::Array2<f64>>) {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = (0..set.len())
            .map(|i| tape.leaf(set.value(i), want_grads))
            .collect();
        let loss = build_loss(&mut tape, &leaves);
        let value = tape.scalar(loss);
        let grads = if want_grads {
            tape.backward(loss);
            leaves.iter().map(|&v| tape.grad(v)).collect()
        } else {
            Vec::new()
        };
        (value, grads)
    };

    let (_, analytic) = eval(params, true);

    let mut per_param = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let shape = params.shape(i);
        let mut worst = 0.0f64;
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let mut plus = params.clone();
                let mut arr = plus.value(i);
                arr[[r, c]] += epsilon;
                plus.set(i, &arr);
                let (fp, _) = eval(&plus, false);

                let mut minus = params.clone();
                let mut arr = minus.value(i);
                arr[[r, c]] -= epsilon;
                minus.set(i, &arr);
                let (fm, _) = eval(&minus, false);

                let numeric = (fp - fm) / (2.0 * epsilon);
                let a = analytic[i][[r, c]];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                worst = worst.max(err);
            }
        }
        per_param.push((params.names()[i].clone(), worst));
    }
    GradCheckReport { per_param }
}
