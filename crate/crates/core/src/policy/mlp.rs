use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::observation::{Action, ActionBounds, Observation, ACTION_DIM, OBS_DIM};
use crate::error::{PlmError, Result};

/// Shape of the two-hidden-layer policy network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl MlpShape {
    pub fn new(hidden: usize) -> Self {
        Self {
            inputs: OBS_DIM,
            hidden,
            outputs: ACTION_DIM,
        }
    }

    pub fn n_params(&self) -> usize {
        let (i, h, o) = (self.inputs, self.hidden, self.outputs);
        h * i + h + h * h + h + o * h + o
    }
}

/// Flat weights shared by every robot of a team.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub shape: MlpShape,
    pub values: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(shape: MlpShape) -> Self {
        Self {
            values: vec![0.0; shape.n_params()],
            shape,
        }
    }

    pub fn from_values(shape: MlpShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.n_params() {
            return Err(PlmError::DimensionMismatch {
                expected: shape.n_params(),
                got: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    /// Scaled Gaussian initialization with a small output layer.
    pub fn init(shape: MlpShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(shape.n_params());
        let (i, h, o) = (shape.inputs, shape.hidden, shape.outputs);
        for (fan_in, rows, gain) in [(i, h, 1.0), (h, h, 1.0), (h, o, 0.1)] {
            let w = Normal::new(0.0, gain / (fan_in as f64).sqrt()).expect("positive width");
            values.extend((0..rows * fan_in).map(|_| w.sample(&mut rng)));
            values.extend(std::iter::repeat_n(0.0, rows));
        }
        Self { shape, values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn layer(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let n = x.len();
    out.extend(b.iter().enumerate().map(|(r, bias)| {
        let row = &w[r * n..(r + 1) * n];
        (bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).tanh()
    }));
}

/// Raw network output in [−1, 1] per component.
pub fn mlp_forward(params: &PolicyParams, input: &[f64]) -> Result<Vec<f64>> {
    let s = params.shape;
    if input.len() != s.inputs {
        return Err(PlmError::DimensionMismatch {
            expected: s.inputs,
            got: input.len(),
        });
    }
    if params.values.len() != s.n_params() {
        return Err(PlmError::DimensionMismatch {
            expected: s.n_params(),
            got: params.values.len(),
        });
    }
    let v = &params.values;
    let (i, h, o) = (s.inputs, s.hidden, s.outputs);
    let mut at = 0;
    let mut take = |n: usize| {
        let sl = &v[at..at + n];
        at += n;
        sl
    };
    let (w1, b1) = (take(h * i), take(h));
    let (w2, b2) = (take(h * h), take(h));
    let (w3, b3) = (take(o * h), take(o));
    let mut a = Vec::with_capacity(h);
    let mut b = Vec::with_capacity(h);
    layer(w1, b1, input, &mut a);
    layer(w2, b2, &a, &mut b);
    layer(w3, b3, &b, &mut a);
    Ok(a)
}

/// Shared-parameter policy: tanh outputs scaled to the action bounds.
pub fn policy_forward(params: &PolicyParams, obs: &Observation, bounds: &ActionBounds) -> Result<Action> {
    if params.shape.outputs != ACTION_DIM {
        return Err(PlmError::DimensionMismatch {
            expected: ACTION_DIM,
            got: params.shape.outputs,
        });
    }
    let y = mlp_forward(params, &obs.to_features())?;
    let scaled: Vec<f64> = y.iter().zip(bounds.scale()).map(|(y, s)| y * s).collect();
    Action::from_slice(&scaled)
}
