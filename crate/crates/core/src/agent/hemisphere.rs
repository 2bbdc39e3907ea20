use rand::Rng;

use crate::autodiff::{
    gru_sequence, Checkpoint, Graph, GruCellParams, GruVars, Linear, LinearVars, Tensor, Var,
};
use crate::error::{Error, Result};

pub const HEMISPHERE_GRU: usize = 128;
pub const BASELINE_GRU: usize = 256;
pub const POLICY_HEAD_WIDTH: usize = 512;

/// Shape of a hemisphere network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HemisphereSizes {
    pub input_dim: usize,
    pub gru: usize,
    pub head_width: usize,
    pub action_dim: usize,
}

impl HemisphereSizes {
    pub fn hemisphere(input_dim: usize, action_dim: usize) -> Self {
        HemisphereSizes {
            input_dim,
            gru: HEMISPHERE_GRU,
            head_width: POLICY_HEAD_WIDTH,
            action_dim,
        }
    }

    /// The doubled-GRU size used by the left-only and right-only baselines.
    pub fn baseline(input_dim: usize, action_dim: usize) -> Self {
        HemisphereSizes {
            gru: BASELINE_GRU,
            ..Self::hemisphere(input_dim, action_dim)
        }
    }

    /// GRU + policy head (`gru -> head_width -> action_dim`) + value head
    /// (`gru -> 1`).
    pub fn param_count(&self) -> usize {
        GruCellParams::param_count(self.input_dim, self.gru)
            + Linear::param_count(self.gru, self.head_width)
            + Linear::param_count(self.head_width, self.action_dim)
            + Linear::param_count(self.gru, 1)
    }
}

/// GRU trunk with a Gaussian-mean policy head and a scalar value head.
///
/// ```text
/// h' = GRU(obs, h)
/// mu = tanh(h' W1 + b1) W2 + b2
/// V  = h' Wv + bv
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct HemisphereNetwork {
    pub gru: GruCellParams,
    pub policy_hidden: Linear,
    pub policy_out: Linear,
    pub value: Linear,
}

/// Plain forward results for a batch of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct HemisphereOutput {
    /// `[rows x action_dim]`
    pub mean: Vec<f64>,
    /// `[rows]`
    pub value: Vec<f64>,
    /// `[rows x gru]`
    pub hidden: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct HemisphereVars {
    pub gru: GruVars,
    pub policy_hidden: LinearVars,
    pub policy_out: LinearVars,
    pub value: LinearVars,
}

impl HemisphereNetwork {
    pub fn new<R: Rng + ?Sized>(sizes: HemisphereSizes, rng: &mut R) -> Self {
        HemisphereNetwork {
            gru: GruCellParams::init(sizes.input_dim, sizes.gru, rng),
            policy_hidden: Linear::init(sizes.gru, sizes.head_width, rng),
            policy_out: Linear::init(sizes.head_width, sizes.action_dim, rng),
            value: Linear::init(sizes.gru, 1, rng),
        }
    }

    pub fn zeros(sizes: HemisphereSizes) -> Self {
        HemisphereNetwork {
            gru: GruCellParams::zeros(sizes.input_dim, sizes.gru),
            policy_hidden: Linear::zeros(sizes.gru, sizes.head_width),
            policy_out: Linear::zeros(sizes.head_width, sizes.action_dim),
            value: Linear::zeros(sizes.gru, 1),
        }
    }

    pub fn sizes(&self) -> HemisphereSizes {
        HemisphereSizes {
            input_dim: self.gru.input_dim,
            gru: self.gru.hidden_dim,
            head_width: self.policy_hidden.fan_out(),
            action_dim: self.policy_out.fan_out(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden_dim
    }

    pub fn input_dim(&self) -> usize {
        self.gru.input_dim
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .gru
            .tensors()
            .into_iter()
            .map(|(n, t)| (format!("gru/{n}"), t))
            .collect();
        out.push(("policy_hidden/weight".into(), &self.policy_hidden.weight));
        out.push(("policy_hidden/bias".into(), &self.policy_hidden.bias));
        out.push(("policy_out/weight".into(), &self.policy_out.weight));
        out.push(("policy_out/bias".into(), &self.policy_out.bias));
        out.push(("value/weight".into(), &self.value.weight));
        out.push(("value/bias".into(), &self.value.bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.gru.tensors_mut().into_iter().map(|(_, t)| t).collect();
        out.push(&mut self.policy_hidden.weight);
        out.push(&mut self.policy_hidden.bias);
        out.push(&mut self.policy_out.weight);
        out.push(&mut self.policy_out.bias);
        out.push(&mut self.value.weight);
        out.push(&mut self.value.bias);
        out
    }

    pub fn save_into(&self, prefix: &str, ck: &mut Checkpoint) {
        for (name, t) in self.tensors() {
            ck.insert(format!("{prefix}/{name}"), t.clone());
        }
    }

    pub fn load_from(prefix: &str, ck: &Checkpoint, sizes: HemisphereSizes) -> Result<Self> {
        let mut net = HemisphereNetwork::zeros(sizes);
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

    /// One recurrent step for `rows` stacked observations.
    pub fn forward(&self, obs: &[f64], hidden: &[f64]) -> Result<HemisphereOutput> {
        let s = self.sizes();
        if obs.len() % s.input_dim != 0 {
            return Err(Error::config(format!(
                "observation of length {} does not fit input width {}",
                obs.len(),
                s.input_dim
            )));
        }
        let rows = obs.len() / s.input_dim;
        if hidden.len() != rows * s.gru {
            return Err(Error::config(format!(
                "hidden state of length {} for {rows} rows of width {}",
                hidden.len(),
                s.gru
            )));
        }
        let h = self.gru.step(obs, hidden)?;
        let (mean, value) = self.heads(&h, rows);
        Ok(HemisphereOutput {
            mean,
            value,
            hidden: h,
        })
    }

    fn heads(&self, h: &[f64], rows: usize) -> (Vec<f64>, Vec<f64>) {
        let mut z = self.policy_hidden.forward(h, rows);
        z.iter_mut().for_each(|v| *v = v.tanh());
        let mean = self.policy_out.forward(&z, rows);
        let value = self.value.forward(h, rows);
        (mean, value)
    }

    pub fn bind(&self, g: &mut Graph) -> HemisphereVars {
        HemisphereVars {
            gru: self.gru.bind(g),
            policy_hidden: self.policy_hidden.bind(g),
            policy_out: self.policy_out.bind(g),
            value: self.value.bind(g),
        }
    }
}

/// Graph outputs of a whole unrolled sequence.
#[derive(Clone, Copy, Debug)]
pub struct SequenceOutput {
    /// `[steps*batch x action_dim]`
    pub mean: Var,
    /// `[steps*batch x 1]`
    pub value: Var,
    /// `[steps*batch x gru]`
    pub hidden: Var,
}

impl HemisphereVars {
    /// Parameter handles in the same order as [`HemisphereNetwork::tensors_mut`].
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
            self.policy_hidden.weight,
            self.policy_hidden.bias,
            self.policy_out.weight,
            self.policy_out.bias,
            self.value.weight,
            self.value.bias,
        ]
    }

    /// Unrolls over `x [steps*batch x input]` (time-major) from `h0 [batch x gru]`.
    pub fn forward_sequence(
        &self,
        g: &mut Graph,
        x: Var,
        h0: Var,
        steps: usize,
        batch: usize,
    ) -> Result<SequenceOutput> {
        let hidden = gru_sequence(g, x, h0, &self.gru, steps, batch)?;
        let value = self.value.apply(g, hidden)?;
        let mean = self.policy_mean(g, hidden)?;
        Ok(SequenceOutput {
            mean,
            value,
            hidden,
        })
    }

    pub fn policy_mean(&self, g: &mut Graph, hidden: Var) -> Result<Var> {
        let z = self.policy_hidden.apply(g, hidden)?;
        let z = g.tanh(z);
        self.policy_out.apply(g, z)
    }
}
