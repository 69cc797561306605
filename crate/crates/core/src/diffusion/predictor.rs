use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::nn::{Activation, Matrix, MlpParams, MlpSpec};

/// Width of the sinusoidal step encoding.
pub const STEP_EMBED_DIM: usize = 16;

/// Sinusoidal features of `k / K` at 8 geometric frequencies in `[1, 100]`.
pub fn step_embedding(k: usize, total_steps: usize) -> [f64; STEP_EMBED_DIM] {
    let t = k as f64 / total_steps.max(1) as f64;
    let mut out = [0.0; STEP_EMBED_DIM];
    let half = STEP_EMBED_DIM / 2;
    for i in 0..half {
        let freq = 100f64.powf(i as f64 / (half - 1) as f64);
        out[2 * i] = (freq * t).sin();
        out[2 * i + 1] = (freq * t).cos();
    }
    out
}

/// Anything that predicts the noise component of noisy actions.
pub trait EpsilonModel {
    fn action_dim(&self) -> usize;
    fn state_dim(&self) -> usize;

    /// One prediction per row of `noisy_actions`/`states`, at the row's step.
    fn predict_noise(
        &self,
        noisy_actions: &Matrix,
        states: &Matrix,
        steps: &[usize],
        total_steps: usize,
    ) -> Result<Matrix>;
}

/// `ε_θ(a_k, s, k)`: an MLP over `[a_k | s | embed(k)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePredictor {
    pub net: MlpParams,
    action_dim: usize,
    state_dim: usize,
}

impl NoisePredictor {
    pub fn input_dim(action_dim: usize, state_dim: usize) -> usize {
        action_dim + state_dim + STEP_EMBED_DIM
    }

    pub fn spec(action_dim: usize, state_dim: usize, hidden: Vec<usize>) -> Result<MlpSpec> {
        MlpSpec::new(
            Self::input_dim(action_dim, state_dim),
            hidden,
            action_dim,
            Activation::Softplus,
        )
    }

    pub fn new<R: Rng + ?Sized>(
        action_dim: usize,
        state_dim: usize,
        hidden: Vec<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let net = MlpParams::init(Self::spec(action_dim, state_dim, hidden)?, rng)?;
        Self::from_net(net, action_dim, state_dim)
    }

    pub fn from_net(net: MlpParams, action_dim: usize, state_dim: usize) -> Result<Self> {
        let spec = net.spec();
        if spec.input_dim != Self::input_dim(action_dim, state_dim) || spec.output_dim != action_dim {
            return Err(shape_err(format!(
                "network {}->{} cannot serve action_dim {action_dim}, state_dim {state_dim}",
                spec.input_dim, spec.output_dim
            )));
        }
        Ok(Self {
            net,
            action_dim,
            state_dim,
        })
    }

    /// Assembles network inputs, one row per sample.
    pub fn assemble_inputs(
        &self,
        noisy_actions: &Matrix,
        states: &Matrix,
        steps: &[usize],
        total_steps: usize,
    ) -> Result<Matrix> {
        let n = noisy_actions.rows();
        if states.rows() != n
            || steps.len() != n
            || noisy_actions.cols() != self.action_dim
            || states.cols() != self.state_dim
        {
            return Err(shape_err(format!(
                "predictor inputs disagree: actions {}x{}, states {}x{}, {} steps",
                n,
                noisy_actions.cols(),
                states.rows(),
                states.cols(),
                steps.len()
            )));
        }
        let width = Self::input_dim(self.action_dim, self.state_dim);
        let mut inputs = Matrix::zeros(n, width);
        for i in 0..n {
            let row = inputs.row_mut(i);
            let (a, rest) = row.split_at_mut(self.action_dim);
            let (s, e) = rest.split_at_mut(self.state_dim);
            a.copy_from_slice(noisy_actions.row(i));
            s.copy_from_slice(states.row(i));
            e.copy_from_slice(&step_embedding(steps[i], total_steps));
        }
        Ok(inputs)
    }
}

impl EpsilonModel for NoisePredictor {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn predict_noise(
        &self,
        noisy_actions: &Matrix,
        states: &Matrix,
        steps: &[usize],
        total_steps: usize,
    ) -> Result<Matrix> {
        let inputs = self.assemble_inputs(noisy_actions, states, steps, total_steps)?;
        self.net.forward_batch(&inputs)
    }
}
