//! Central finite-difference checks against tape gradients.

use super::{Graph, ParamId, ParamStore, Tensor, Var};

/// Relative-error denominators never drop below this, so coordinates with a
/// vanishing gradient are judged on absolute error.
pub const DEFAULT_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst `|analytic − numeric| / max(|analytic|, |numeric|, floor)`;
    /// `INFINITY` when any evaluation produced a non-finite value.
    pub max_rel_error: f64,
    /// Description of the coordinate that produced `max_rel_error`.
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    fn new() -> Self {
        Self { max_rel_error: 0.0, worst: String::new(), checked: 0 }
    }

    fn record(&mut self, analytic: f64, numeric: f64, floor: f64, label: impl FnOnce() -> String) {
        self.checked += 1;
        let err = if analytic.is_finite() && numeric.is_finite() {
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
        } else {
            f64::INFINITY
        };
        if err > self.max_rel_error || (err.is_infinite() && self.worst.is_empty()) {
            self.max_rel_error = err;
            self.worst = format!("{} (analytic {analytic:e}, numeric {numeric:e})", label());
        }
    }
}

fn scalar_of<E>(g: &Graph<'_>, v: Result<Var, E>) -> Result<f64, E> {
    v.map(|v| g.value(v).data()[0])
}

/// Checks the tape gradient of `f` at `x` against central differences.
///
/// `f` receives a fresh graph and the leaf holding `x` and must return a
/// scalar node.
pub fn grad_check<E, F>(f: F, x: &Tensor, eps: f64) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Graph<'_>, Var) -> Result<Var, E>,
{
    grad_check_with_floor(f, x, eps, DEFAULT_FLOOR)
}

pub fn grad_check_with_floor<E, F>(f: F, x: &Tensor, eps: f64, floor: f64) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Graph<'_>, Var) -> Result<Var, E>,
{
    let mut g = Graph::new();
    let xv = g.leaf(x.clone());
    let loss = f(&mut g, xv)?;
    let analytic = match g.backward(loss) {
        Ok(grads) => grads.wrt(xv).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())),
        Err(_) => Tensor::full(x.shape(), f64::NAN),
    };

    let eval = |t: Tensor| -> Result<f64, E> {
        let mut g = Graph::new();
        let v = g.leaf(t);
        let out = f(&mut g, v);
        scalar_of(&g, out)
    };

    let mut report = GradCheckReport::new();
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        report.record(analytic.data()[i], numeric, floor, || format!("x[{i}]"));
    }
    Ok(report)
}

/// Which coordinates of each parameter to probe.
#[derive(Clone, Copy, Debug)]
pub enum Coverage {
    /// Every scalar of every trainable parameter.
    All,
    /// Up to this many evenly spaced scalars per parameter, plus the one with
    /// the largest analytic gradient.
    Sampled(usize),
}

/// Finite-difference check of every trainable parameter's gradient.
///
/// Parameters are perturbed in place and restored bit-exactly.
pub fn grad_check_params<E, F>(
    store: &mut ParamStore,
    f: F,
    eps: f64,
    floor: f64,
    coverage: Coverage,
) -> Result<Vec<(String, GradCheckReport)>, E>
where
    F: Fn(&mut Graph<'_>) -> Result<Var, E>,
{
    let analytic: Vec<Tensor> = {
        let mut g = Graph::with_params(store);
        let loss = f(&mut g)?;
        match g.backward(loss) {
            Ok(grads) => grads.into_dense(store),
            Err(_) => store.iter().map(|(_, p)| Tensor::full(p.tensor.shape(), f64::NAN)).collect(),
        }
    };

    let eval = |store: &ParamStore| -> Result<f64, E> {
        let mut g = Graph::with_params(store);
        let out = f(&mut g);
        scalar_of(&g, out)
    };

    let ids: Vec<ParamId> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    let mut reports = Vec::with_capacity(ids.len());
    for id in ids {
        let n = store.get(id).tensor.len();
        let grad = &analytic[id.0];
        let coords: Vec<usize> = match coverage {
            Coverage::All => (0..n).collect(),
            Coverage::Sampled(k) => {
                let mut c: Vec<usize> = (0..k.min(n)).map(|i| i * n / k.min(n).max(1)).collect();
                let argmax = (0..n)
                    .max_by(|&a, &b| grad.data()[a].abs().total_cmp(&grad.data()[b].abs()))
                    .unwrap_or(0);
                c.push(argmax);
                c.sort_unstable();
                c.dedup();
                c
            }
        };
        let name = store.get(id).name.clone();
        let mut report = GradCheckReport::new();
        for i in coords {
            let orig = store.get(id).tensor.data()[i];
            store.get_mut(id).tensor.data_mut()[i] = orig + eps;
            let up = eval(store);
            store.get_mut(id).tensor.data_mut()[i] = orig - eps;
            let down = eval(store);
            store.get_mut(id).tensor.data_mut()[i] = orig;
            let numeric = (up? - down?) / (2.0 * eps);
            report.record(grad.data()[i], numeric, floor, || format!("{name}[{i}]"));
        }
        reports.push((name, report));
    }
    Ok(reports)
}
