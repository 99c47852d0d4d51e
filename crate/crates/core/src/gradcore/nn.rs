use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::{GradError, Scalar, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Softplus,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<S: Scalar>(self, g: &mut Graph<'_, S>, x: Var) -> Var {
        match self {
            Activation::Softplus => g.softplus(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Tanh => g.tanh(x),
            Activation::Identity => x,
        }
    }

    pub fn eval<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Softplus => x.softplus(),
            Activation::Sigmoid => x.sigmoid(),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub output_dim: usize,
}

/// Multi-layer perceptron: hidden layers use `activation`, the output layer
/// uses `output_activation` (identity unless stated).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub name: String,
    pub layers: Vec<Linear>,
    pub activation: Activation,
    pub output_activation: Activation,
}

impl Mlp {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear {
                weight: store.add_uniform(format!("{name}.{i}.weight"), w[0], w[1], w[0], rng),
                bias: store.add_uniform(format!("{name}.{i}.bias"), 1, w[1], w[0], rng),
                input_dim: w[0],
                output_dim: w[1],
            })
            .collect();
        Self {
            name: name.to_string(),
            layers,
            activation,
            output_activation: Activation::Identity,
        }
    }

    pub fn with_output_activation(mut self, act: Activation) -> Self {
        self.output_activation = act;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").output_dim
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight, l.bias])
            .collect()
    }

    /// Records the forward pass for a `[batch x input_dim]` input.
    pub fn forward<S: Scalar>(&self, g: &mut Graph<'_, S>, input: Var) -> Result<Var, GradError> {
        let mut x = input;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let got = g.value(x).cols();
            if got != layer.input_dim {
                return Err(GradError::Dimension {
                    layer: format!("{}.{i}", self.name),
                    expected: layer.input_dim,
                    got,
                });
            }
            let w = g.param(layer.weight);
            let b = g.param(layer.bias);
            let h = g.matmul(x, w)?;
            let h = g.add_row(h, b)?;
            x = if i == last {
                self.output_activation.apply(g, h)
            } else {
                self.activation.apply(g, h)
            };
        }
        Ok(x)
    }

    /// Forward pass on plain values, without recording anything.
    pub fn eval<S: Scalar>(&self, store: &ParamStore<S>, input: &[S]) -> Result<Vec<S>, GradError> {
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            if x.len() != layer.input_dim {
                return Err(GradError::Dimension {
                    layer: format!("{}.{i}", self.name),
                    expected: layer.input_dim,
                    got: x.len(),
                });
            }
            let (w, b) = (store.get(layer.weight), store.get(layer.bias));
            let act = if i == last {
                self.output_activation
            } else {
                self.activation
            };
            x = (0..layer.output_dim)
                .map(|o| {
                    let s = x
                        .iter()
                        .enumerate()
                        .fold(b.values()[o], |acc, (p, &xp)| acc + xp * w.get(p, o));
                    act.eval(s)
                })
                .collect();
        }
        Ok(x)
    }
}

/// Single-layer GRU (Cho et al. formulation):
///
/// ```text
/// r  = sigmoid(x W_r + h U_r + b_r)
/// u  = sigmoid(x W_u + h U_u + b_u)
/// n  = tanh(x W_n + (r ⊙ h) U_n + b_n)
/// h' = u ⊙ h + (1 - u) ⊙ n
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Gru {
    pub name: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
    w: [ParamId; 3],
    u: [ParamId; 3],
    b: [ParamId; 3],
}

impl Gru {
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let gates = ["reset", "update", "candidate"];
        let w = gates.map(|gname| {
            store.add_uniform(
                format!("{name}.{gname}.w"),
                input_dim,
                hidden_dim,
                hidden_dim,
                rng,
            )
        });
        let u = gates.map(|gname| {
            store.add_uniform(
                format!("{name}.{gname}.u"),
                hidden_dim,
                hidden_dim,
                hidden_dim,
                rng,
            )
        });
        let b = gates.map(|gname| {
            store.add_uniform(format!("{name}.{gname}.b"), 1, hidden_dim, hidden_dim, rng)
        });
        Self {
            name: name.to_string(),
            input_dim,
            hidden_dim,
            w,
            u,
            b,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.w
            .iter()
            .chain(&self.u)
            .chain(&self.b)
            .copied()
            .collect()
    }

    fn gate<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        k: usize,
        x: Var,
        h: Var,
    ) -> Result<Var, GradError> {
        let w = g.param(self.w[k]);
        let u = g.param(self.u[k]);
        let b = g.param(self.b[k]);
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(h, u)?;
        let s = g.add(xw, hu)?;
        g.add_row(s, b)
    }

    pub fn cell<S: Scalar>(&self, g: &mut Graph<'_, S>, x: Var, h: Var) -> Result<Var, GradError> {
        let got = g.value(x).cols();
        if got != self.input_dim {
            return Err(GradError::Dimension {
                layer: self.name.clone(),
                expected: self.input_dim,
                got,
            });
        }
        let r = self.gate(g, 0, x, h)?;
        let r = g.sigmoid(r);
        let u = self.gate(g, 1, x, h)?;
        let u = g.sigmoid(u);
        let rh = g.mul(r, h)?;
        let n = self.gate(g, 2, x, rh)?;
        let n = g.tanh(n);
        let keep = g.mul(u, h)?;
        let one_minus_u = g.neg(u);
        let one_minus_u = g.add_scalar(one_minus_u, S::one());
        let fresh = g.mul(one_minus_u, n)?;
        g.add(keep, fresh)
    }

    fn zero_state<S: Scalar>(&self, g: &mut Graph<'_, S>, batch: usize) -> Var {
        g.constant(Tensor::zeros(batch, self.hidden_dim))
    }

    /// Hidden state after each element, scanning first to last.
    pub fn run_forward<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        seq: &[Var],
    ) -> Result<Vec<Var>, GradError> {
        let first = seq
            .first()
            .ok_or_else(|| GradError::Argument("GRU input sequence is empty".into()))?;
        let mut h = self.zero_state(g, g.value(*first).rows());
        let mut out = Vec::with_capacity(seq.len());
        for &x in seq {
            h = self.cell(g, x, h)?;
            out.push(h);
        }
        Ok(out)
    }

    /// Scans from the last element to the first; output `i` summarizes
    /// positions `i..`.
    pub fn run_reverse<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        seq: &[Var],
    ) -> Result<Vec<Var>, GradError> {
        let first = seq
            .first()
            .ok_or_else(|| GradError::Argument("GRU input sequence is empty".into()))?;
        let mut h = self.zero_state(g, g.value(*first).rows());
        let mut out = vec![h; seq.len()];
        for (i, &x) in seq.iter().enumerate().rev() {
            h = self.cell(g, x, h)?;
            out[i] = h;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weight_mlp_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let mlp = Mlp::new(&mut store, "m", 3, &[5], 2, Activation::Softplus, &mut rng);
        store.zero_prefix("m");
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::from_f64(2, 3, &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let y = mlp.forward(&mut g, x).unwrap();
        assert!(g.value(y).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_unit_softplus_net() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let mlp = Mlp::new(&mut store, "m", 1, &[1], 1, Activation::Softplus, &mut rng);
        for (id, v) in [
            (mlp.layers[0].weight, 1.0),
            (mlp.layers[0].bias, 0.0),
            (mlp.layers[1].weight, 1.0),
            (mlp.layers[1].bias, 0.0),
        ] {
            store.get_mut(id).values_mut()[0] = v;
        }
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::scalar(2.0));
        let y = mlp.forward(&mut g, x).unwrap();
        assert!((g.item(y) - 2.126_928_011_042_972_5).abs() < 1e-14);
    }

    #[test]
    fn dimension_error_names_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::<f64>::new();
        let mlp = Mlp::new(
            &mut store,
            "drift",
            3,
            &[4],
            2,
            Activation::Softplus,
            &mut rng,
        );
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::zeros(1, 2));
        match mlp.forward(&mut g, x) {
            Err(GradError::Dimension {
                layer,
                expected: 3,
                got: 2,
            }) => assert_eq!(layer, "drift.0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_weight_gru_stays_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let gru = Gru::new(&mut store, "gru", 2, 3, &mut rng);
        store.zero_prefix("gru");
        let mut g = Graph::new(&store);
        let seq: Vec<Var> = (0..4)
            .map(|i| g.constant(Tensor::from_f64(1, 2, &[i as f64, -1.0])))
            .collect();
        for h in gru.run_reverse(&mut g, &seq).unwrap() {
            assert!(g.value(h).values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let gru = Gru::new(&mut store, "gru", 2, 3, &mut rng);
        let mut g = Graph::new(&store);
        assert!(matches!(
            gru.run_reverse(&mut g, &[]),
            Err(GradError::Argument(_))
        ));
    }
}
