use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::{GradError, Scalar};

/// Outcome of comparing reverse-mode gradients against central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |autodiff - fd| / max(1, |fd|)` over every checked element.
    pub max_rel_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    /// Elements where the loss or a difference quotient was not finite.
    pub non_finite: Vec<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.non_finite.is_empty() && self.max_rel_error < tol
    }
}

/// Checks every element of the selected parameters (all when `only` is
/// `None`). `loss` must be deterministic given the store.
pub fn grad_check<S, F>(
    store: &ParamStore<S>,
    loss: F,
    h: S,
    only: Option<&[ParamId]>,
) -> Result<GradCheckReport, GradError>
where
    S: Scalar,
    F: Fn(&mut Graph<'_, S>) -> Result<Var, GradError>,
{
    let eval = |s: &ParamStore<S>| -> Result<S, GradError> {
        let mut g = Graph::new(s);
        let l = loss(&mut g)?;
        Ok(g.item(l))
    };
    let mut g = Graph::new(store);
    let l = loss(&mut g)?;
    let grads = g.backward(l)?;
    drop(g);

    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => store.ids().collect(),
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        non_finite: Vec::new(),
        checked: 0,
    };
    let mut probe = store.clone();
    for id in ids {
        for i in 0..store.get(id).len() {
            let orig = store.get(id).values()[i];
            probe.get_mut(id).values_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(id).values_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(id).values_mut()[i] = orig;

            let fd = ((up - down) / (h + h)).as_f64();
            let ad = grads.get(id).values()[i].as_f64();
            report.checked += 1;
            if !fd.is_finite() || !ad.is_finite() {
                report.non_finite.push((store.name(id).to_string(), i));
                continue;
            }
            let rel = (ad - fd).abs() / fd.abs().max(1.0);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::Tensor;

    #[test]
    fn linear_function_is_exact() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::from_f64(1, 3, &[0.5, -1.0, 2.0]));
        let report = grad_check(
            &store,
            |g| {
                let w = g.param(w);
                let c = g.constant(Tensor::from_f64(1, 3, &[3.0, 1.0, -4.0]));
                let p = g.mul(w, c)?;
                Ok(g.sum(p))
            },
            1e-3,
            None,
        )
        .unwrap();
        assert_eq!(report.checked, 3);
        assert!(report.max_rel_error < 1e-12, "{report:?}");
    }
}
