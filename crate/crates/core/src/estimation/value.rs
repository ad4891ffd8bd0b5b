use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OdrpoError, Result};

/// Hidden layer widths of the optional value network.
pub const MLP_HIDDEN: [usize; 3] = [10, 7, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Tabular,
    Mlp,
}

impl std::str::FromStr for ValueKind {
    type Err = OdrpoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular" => Ok(ValueKind::Tabular),
            "mlp" => Ok(ValueKind::Mlp),
            _ => Err(OdrpoError::InvalidConfig(format!(
                "unknown value kind `{s}`"
            ))),
        }
    }
}

/// State-value estimate `V(s)` fitted to Monte Carlo returns by SGD on the
/// squared error `(G − V(s))²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimator {
    learning_rate: f64,
    model: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Model {
    Tabular(Vec<f64>),
    Mlp(Mlp),
}

impl ValueEstimator {
    pub fn tabular(n_states: usize, learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self {
            learning_rate,
            model: Model::Tabular(vec![0.0; n_states]),
        }
    }

    pub fn mlp<R: Rng + ?Sized>(n_states: usize, learning_rate: f64, rng: &mut R) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self {
            learning_rate,
            model: Model::Mlp(Mlp::new(n_states, &MLP_HIDDEN, rng)),
        }
    }

    pub fn kind(&self) -> ValueKind {
        match self.model {
            Model::Tabular(_) => ValueKind::Tabular,
            Model::Mlp(_) => ValueKind::Mlp,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn n_states(&self) -> usize {
        match &self.model {
            Model::Tabular(v) => v.len(),
            Model::Mlp(m) => m.n_inputs(),
        }
    }

    pub fn value(&self, state: usize) -> f64 {
        match &self.model {
            Model::Tabular(v) => v[state],
            Model::Mlp(m) => m.forward(state),
        }
    }

    /// Overwrites a tabular entry. Panics on the network variant.
    pub fn set_tabular(&mut self, state: usize, value: f64) {
        match &mut self.model {
            Model::Tabular(v) => v[state] = value,
            Model::Mlp(_) => panic!("set_tabular on a network value estimator"),
        }
    }

    pub fn mlp_params(&self) -> Option<&Mlp> {
        match &self.model {
            Model::Mlp(m) => Some(m),
            Model::Tabular(_) => None,
        }
    }

    /// One pass of per-sample gradient steps over `pairs`, in order.
    pub fn update(&mut self, pairs: &[(usize, f64)]) -> Result<()> {
        let n_states = self.n_states();
        for &(s, g) in pairs {
            if !g.is_finite() {
                return Err(OdrpoError::NonFinite(format!("return {g} for state {s}")));
            }
            if s >= n_states {
                return Err(OdrpoError::DimensionMismatch(format!(
                    "state {s} outside {n_states} states"
                )));
            }
        }
        let lr = self.learning_rate;
        match &mut self.model {
            Model::Tabular(v) => {
                for &(s, g) in pairs {
                    // d/dV (G − V)² = −2 (G − V)
                    v[s] += lr * 2.0 * (g - v[s]);
                }
            }
            Model::Mlp(m) => {
                for &(s, g) in pairs {
                    m.sgd_step(s, g, lr);
                }
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        match &self.model {
            Model::Tabular(v) => v.iter().all(|x| x.is_finite()),
            Model::Mlp(m) => m.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    n_in: usize,
    n_out: usize,
    /// Row-major `n_out × n_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn new<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let mut draw = || rng.random_range(-bound..=bound);
        Self {
            n_in,
            n_out,
            weights: (0..n_in * n_out).map(|_| draw()).collect(),
            bias: (0..n_out).map(|_| draw()).collect(),
        }
    }
}

/// Feed-forward network with one-hot state input, rectifier hidden layers
/// and a linear scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(n_inputs: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| Dense::new(w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].n_in];
        sizes.extend(self.layers.iter().map(|l| l.n_out));
        sizes
    }

    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    fn is_finite(&self) -> bool {
        self.parameters().all(f64::is_finite)
    }

    /// Pre-activations of every layer for a one-hot input.
    fn pre_activations(&self, state: usize) -> Vec<Vec<f64>> {
        let first = &self.layers[0];
        let mut zs = Vec::with_capacity(self.layers.len());
        zs.push(
            (0..first.n_out)
                .map(|o| first.weights[o * first.n_in + state] + first.bias[o])
                .collect::<Vec<_>>(),
        );
        for layer in &self.layers[1..] {
            let input: Vec<f64> = zs.last().unwrap().iter().map(|z| z.max(0.0)).collect();
            let z = (0..layer.n_out)
                .map(|o| {
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>() + layer.bias[o]
                })
                .collect();
            zs.push(z);
        }
        zs
    }

    pub fn forward(&self, state: usize) -> f64 {
        self.pre_activations(state).last().unwrap()[0]
    }

    fn sgd_step(&mut self, state: usize, target: f64, lr: f64) {
        let zs = self.pre_activations(state);
        let output = zs.last().unwrap()[0];
        // dL/dz for the current layer, starting at the linear output.
        let mut delta = vec![-2.0 * (target - output)];
        for idx in (0..self.layers.len()).rev() {
            let input: Option<Vec<f64>> =
                (idx > 0).then(|| zs[idx - 1].iter().map(|z| z.max(0.0)).collect());
            let layer = &self.layers[idx];
            let prev_delta = input.as_ref().map(|_| {
                (0..layer.n_in)
                    .map(|i| {
                        if zs[idx - 1][i] > 0.0 {
                            (0..layer.n_out)
                                .map(|o| layer.weights[o * layer.n_in + i] * delta[o])
                                .sum()
                        } else {
                            0.0
                        }
                    })
                    .collect::<Vec<f64>>()
            });
            let layer = &mut self.layers[idx];
            for (o, &d) in delta.iter().enumerate() {
                match &input {
                    Some(x) => {
                        let row = &mut layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                        for (w, xi) in row.iter_mut().zip(x) {
                            *w -= lr * d * xi;
                        }
                    }
                    // One-hot input: only the active column has a gradient.
                    None => layer.weights[o * layer.n_in + state] -= lr * d,
                }
                layer.bias[o] -= lr * d;
            }
            match prev_delta {
                Some(d) => delta = d,
                None => break,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tabular_single_step() {
        let mut v = ValueEstimator::tabular(3, 0.25);
        v.update(&[(1, 1.0)]).unwrap();
        assert_eq!(v.value(1), 0.5);
        assert_eq!(v.value(0), 0.0);
    }

    #[test]
    fn tabular_geometric_convergence() {
        let (alpha, g, v0) = (0.25, 3.0, -1.0);
        let mut v = ValueEstimator::tabular(1, alpha);
        v.set_tabular(0, v0);
        for _ in 0..10 {
            v.update(&[(0, g)]).unwrap();
        }
        let expected = (1.0f64 - 2.0 * alpha).abs().powi(10) * (v0 - g).abs();
        assert!(((v.value(0) - g).abs() - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_return_rejected_without_side_effects() {
        let mut v = ValueEstimator::tabular(2, 0.1);
        assert!(v.update(&[(0, 1.0), (1, f64::NAN)]).is_err());
        assert_eq!(v.value(0), 0.0);
    }

    #[test]
    fn mlp_empty_update_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v = ValueEstimator::mlp(6, 0.01, &mut rng);
        let before = v.clone();
        v.update(&[]).unwrap();
        assert_eq!(v, before);
        assert_eq!(v.mlp_params().unwrap().layer_sizes(), vec![6, 10, 7, 5, 1]);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        // The SGD step must move the output along −∇(G − V)², i.e. a small
        // step reduces the loss by ≈ lr·|∇|².
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = ValueEstimator::mlp(4, 1e-6, &mut rng);
        let Model::Mlp(net) = &v.model else {
            unreachable!()
        };
        let (state, target) = (2, 3.0);
        let loss = |n: &Mlp| (target - n.forward(state)).powi(2);
        let before = loss(net);
        let mut stepped = net.clone();
        stepped.sgd_step(state, target, 1e-6);
        // Finite-difference gradient norm over every parameter.
        let mut grad_sq = 0.0;
        let h = 1e-6;
        for li in 0..net.layers.len() {
            for wi in 0..net.layers[li].weights.len() + net.layers[li].bias.len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                let nw = net.layers[li].weights.len();
                for (m, sign) in [(&mut plus, h), (&mut minus, -h)] {
                    if wi < nw {
                        m.layers[li].weights[wi] += sign;
                    } else {
                        m.layers[li].bias[wi - nw] += sign;
                    }
                }
                let g = (loss(&plus) - loss(&minus)) / (2.0 * h);
                grad_sq += g * g;
            }
        }
        let decrease = before - loss(&stepped);
        assert!((decrease - 1e-6 * grad_sq).abs() < 1e-3 * 1e-6 * grad_sq + 1e-12);
    }
}
