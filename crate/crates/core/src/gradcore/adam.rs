use super::params::{Gradients, ParamStore};
use super::{GradError, Scalar, Tensor};

/// Adam with a per-iteration multiplicative learning-rate decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub first_moment: Vec<Tensor<S>>,
    pub second_moment: Vec<Tensor<S>>,
    pub step: u64,
    pub base_lr: S,
    pub decay: S,
    pub eps: S,
    pub beta1: S,
    pub beta2: S,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(store: &ParamStore<S>, base_lr: S, decay: S) -> Self {
        let zeros = || {
            store
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            first_moment: zeros(),
            second_moment: zeros(),
            step: 0,
            base_lr,
            decay,
            eps: S::lit(1e-8),
            beta1: S::lit(0.9),
            beta2: S::lit(0.999),
        }
    }

    /// Rate applied by the next step: `base_lr * decay^step`.
    pub fn effective_lr(&self) -> S {
        self.base_lr * self.decay.powi(self.step as i32)
    }

    /// One descent step. Gradients are checked for finiteness before any
    /// parameter is touched.
    pub fn step(
        &mut self,
        store: &mut ParamStore<S>,
        grads: &Gradients<S>,
    ) -> Result<(), GradError> {
        if grads.len() != store.len() || self.first_moment.len() != store.len() {
            return Err(GradError::Argument(format!(
                "gradient count {} / optimizer slots {} vs {} parameters",
                grads.len(),
                self.first_moment.len(),
                store.len()
            )));
        }
        for (id, g) in grads.iter() {
            if g.shape() != store.get(id).shape() {
                return Err(GradError::Shape {
                    op: "adam",
                    detail: format!(
                        "{}: {:?} vs {:?}",
                        store.name(id),
                        g.shape(),
                        store.get(id).shape()
                    ),
                });
            }
            if !g.is_finite() {
                return Err(GradError::NonFinite {
                    name: store.name(id).to_string(),
                });
            }
        }
        let lr = self.effective_lr();
        self.step += 1;
        let t = self.step as i32;
        let c1 = S::one() - self.beta1.powi(t);
        let c2 = S::one() - self.beta2.powi(t);
        for (id, g) in grads.iter() {
            let m = self.first_moment[id.index()].values_mut();
            let v = self.second_moment[id.index()].values_mut();
            let p = store.get_mut(id).values_mut();
            for (i, &gi) in g.values().iter().enumerate() {
                m[i] = self.beta1 * m[i] + (S::one() - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (S::one() - self.beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
