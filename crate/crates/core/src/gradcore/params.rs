use rand::Rng;

use super::{GradError, Scalar, Tensor};

/// Index of a named parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat list of named learnable arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform in `±sqrt(1/fan_in)`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| S::lit(rng.random_range(-bound..bound)))
            .collect();
        self.add(
            name,
            Tensor::matrix(rows, cols, values).expect("consistent shape"),
        )
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<S>)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces every value whose name matches, checking shapes.
    pub fn load_named(&mut self, entries: &[(String, Tensor<S>)]) -> Result<(), GradError> {
        for (name, t) in entries {
            if let Some(id) = self.find(name) {
                let cur = &self.tensors[id.0];
                if cur.shape() != t.shape() {
                    return Err(GradError::Shape {
                        op: "load",
                        detail: format!("{name}: expected {:?}, got {:?}", cur.shape(), t.shape()),
                    });
                }
                self.tensors[id.0] = t.clone();
            }
        }
        for name in &self.names {
            if !entries.iter().any(|(n, _)| n == name) {
                return Err(GradError::Argument(format!(
                    "checkpoint is missing parameter {name}"
                )));
            }
        }
        Ok(())
    }

    pub fn named_entries(&self) -> Vec<(String, Tensor<S>)> {
        self.names
            .iter()
            .cloned()
            .zip(self.tensors.iter().cloned())
            .collect()
    }

    /// Zeroes every parameter whose name starts with `prefix`.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for (n, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            if n.starts_with(prefix) {
                t.values_mut().iter_mut().for_each(|v| *v = S::zero());
            }
        }
    }
}

/// Gradient per parameter, zero where the loss does not depend on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<S> {
    grads: Vec<Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(store: &ParamStore<S>) -> Self {
        Self {
            grads: store
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    pub(crate) fn from_vec(grads: Vec<Tensor<S>>) -> Self {
        Self { grads }
    }

    pub(crate) fn into_vec(self) -> Vec<Tensor<S>> {
        self.grads
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<S>)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }

    pub fn scale(&mut self, factor: S) {
        for g in &mut self.grads {
            g.values_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn max_abs(&self) -> S {
        self.grads
            .iter()
            .flat_map(|g| g.values().iter())
            .fold(S::zero(), |m, v| m.max(v.abs()))
    }
}
