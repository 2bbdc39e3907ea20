use rand::Rng;

use crate::autodiff::{gru_sequence, sigmoid, Checkpoint, Graph, GruCellParams, GruVars, Linear, LinearVars, Tensor, Var};
use crate::error::Result;

pub const GATING_GRU: usize = 64;
pub const GATING_INPUT_DIM: usize = 4;

/// What the gating network sees at each step: last step's responsibilities
/// and the value-estimate error `eps_h = V_h - r` of each hemisphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GatingInput {
    pub prev_right: f64,
    pub prev_left: f64,
    pub eps_right: f64,
    pub eps_left: f64,
}

impl GatingInput {
    /// First step of an episode: even responsibilities, no error signal.
    pub const BOOTSTRAP: GatingInput = GatingInput {
        prev_right: 0.5,
        prev_left: 0.5,
        eps_right: 0.0,
        eps_left: 0.0,
    };

    /// Builds the next input from this step's gates, values and reward.
    pub fn next(p_right: f64, p_left: f64, v_right: f64, v_left: f64, reward: f64) -> Self {
        GatingInput {
            prev_right: p_right,
            prev_left: p_left,
            eps_right: v_right - reward,
            eps_left: v_left - reward,
        }
    }

    pub fn to_array(&self) -> [f64; GATING_INPUT_DIM] {
        [self.prev_right, self.prev_left, self.eps_right, self.eps_left]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Responsibility pair. `right` is always computed as `1 - left`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gates {
    pub right: f64,
    pub left: f64,
}

impl Gates {
    pub fn from_logit(logit: f64) -> Self {
        let left = sigmoid(logit);
        Gates {
            right: 1.0 - left,
            left,
        }
    }

    pub fn all_left() -> Self {
        Gates { right: 0.0, left: 1.0 }
    }
}

/// GRU over [`GatingInput`] followed by an affine head; `P_left = sigmoid(head)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatingNetwork {
    pub gru: GruCellParams,
    pub head: Linear,
}

#[derive(Clone, Copy, Debug)]
pub struct GatingVars {
    pub gru: GruVars,
    pub head: LinearVars,
}

impl GatingNetwork {
    pub fn new<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        GatingNetwork {
            gru: GruCellParams::init(GATING_INPUT_DIM, hidden, rng),
            head: Linear::init(hidden, 1, rng),
        }
    }

    pub fn zeros(hidden: usize) -> Self {
        GatingNetwork {
            gru: GruCellParams::zeros(GATING_INPUT_DIM, hidden),
            head: Linear::zeros(hidden, 1),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden_dim
    }

    /// One step for a single sequence: returns the gates and the new state.
    pub fn gate(&self, input: &GatingInput, hidden: &[f64]) -> Result<(Gates, Vec<f64>)> {
        let (logits, h) = self.forward(&input.to_array(), hidden)?;
        Ok((Gates::from_logit(logits[0]), h))
    }

    /// Batched step over stacked inputs `[rows x 4]`: head logits and new state.
    pub fn forward(&self, inputs: &[f64], hidden: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = self.gru.step(inputs, hidden)?;
        let rows = h.len() / self.hidden_dim();
        Ok((self.head.forward(&h, rows), h))
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .gru
            .tensors()
            .into_iter()
            .map(|(n, t)| (format!("gru/{n}"), t))
            .collect();
        out.push(("head/weight".into(), &self.head.weight));
        out.push(("head/bias".into(), &self.head.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.gru.tensors_mut().into_iter().map(|(_, t)| t).collect();
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn save_into(&self, prefix: &str, ck: &mut Checkpoint) {
        for (name, t) in self.tensors() {
            ck.insert(format!("{prefix}/{name}"), t.clone());
        }
    }

    pub fn load_from(prefix: &str, ck: &Checkpoint, hidden: usize) -> Result<Self> {
        let mut net = GatingNetwork::zeros(hidden);
        let names: Vec<(String, Vec<usize>)> = net
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        for ((name, shape), slot) in names.into_iter().zip(net.tensors_mut()) {
            *slot = ck.take(&format!("{prefix}/{name}"), &shape)?;
        }
        Ok(net)
    }

    pub fn bind(&self, g: &mut Graph) -> GatingVars {
        GatingVars {
            gru: self.gru.bind(g),
            head: self.head.bind(g),
        }
    }
}

impl GatingVars {
    pub fn vars(&self) -> Vec<Var> {
        let g = &self.gru;
        vec![
            g.wz,
            g.uz,
            g.bz,
            g.wr,
            g.ur,
            g.br,
            g.wc,
            g.uc,
            g.bc,
            self.head.weight,
            self.head.bias,
        ]
    }

    /// Head logits `[steps*batch x 1]` for recorded inputs `[steps*batch x 4]`.
    pub fn logits_sequence(
        &self,
        g: &mut Graph,
        inputs: Var,
        h0: Var,
        steps: usize,
        batch: usize,
    ) -> Result<Var> {
        let h = gru_sequence(g, inputs, h0, &self.gru, steps, batch)?;
        self.head.apply(g, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_logit_splits_evenly() {
        let g = Gates::from_logit(0.0);
        assert_eq!((g.right, g.left), (0.5, 0.5));
        let net = GatingNetwork::zeros(GATING_GRU);
        let (gates, _) = net.gate(&GatingInput::BOOTSTRAP, &[0.0; GATING_GRU]).unwrap();
        assert_eq!(gates, Gates { right: 0.5, left: 0.5 });
    }

    #[test]
    fn saturated_logit_goes_all_left() {
        let g = Gates::from_logit(1e3);
        assert_eq!(g.left, 1.0);
        assert_eq!(g.right, 0.0);
        let g = Gates::from_logit(-1e3);
        assert_eq!(g.left, 0.0);
        assert_eq!(g.right, 1.0);
    }

    #[test]
    fn gates_sum_to_one_and_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = GatingNetwork::new(GATING_GRU, &mut rng);
        let mut h = vec![0.0; GATING_GRU];
        let mut input = GatingInput::BOOTSTRAP;
        for k in 0..200 {
            let (gates, h2) = net.gate(&input, &h).unwrap();
            assert_eq!(gates.right + gates.left, 1.0);
            assert!((0.0..=1.0).contains(&gates.left));
            input = GatingInput::next(gates.right, gates.left, (k as f64).sin() * 3.0, 0.2, 1.0);
            h = h2;
        }
    }
}
