//! A small `d_in -> d_h (relu) -> 5` multilayer perceptron trained with Adam
//! on the masked squared TD error.
//!
//! Parameters live in one flat vector laid out as `[W1 | b1 | W2 | b2]`, with
//! `W1` (d_h x d_in) and `W2` (5 x d_h) stored row-major. Keeping them flat
//! makes the optimizer, finiteness checks and gradient checks one loop each.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::{ActionId, NUM_ACTIONS};

pub use persist::{load, save, ModelMeta, TrainingSnapshot, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

/// One regression example: push `Q(state)[action]` toward `target`.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub action: ActionId,
    pub target: f64,
}

/// Bootstrapped regression target for one transition.
#[derive(Debug, Clone, Copy)]
pub struct TargetSpec {
    pub reward: f64,
    pub gamma: f64,
    pub next_q: [f64; NUM_ACTIONS],
    pub done: bool,
}

/// `r` on terminal transitions, else `r + gamma * max(next_q)`.
pub fn td_target(spec: &TargetSpec) -> f64 {
    if spec.done {
        spec.reward
    } else {
        let best = spec
            .next_q
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        spec.reward + spec.gamma * best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    input: usize,
    hidden: usize,
    params: Vec<f64>,
    learning_rate: f64,
    adam_config: AdamConfig,
    adam: AdamState,
}

impl QNetwork {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(input, hidden, learning_rate)?;
        let b1 = 1.0 / (input as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        let split = hidden * input + hidden;
        for (i, p) in net.params.iter_mut().enumerate() {
            let bound = if i < split { b1 } else { b2 };
            *p = rng.gen_range(-bound..=bound);
        }
        Ok(net)
    }

    /// All parameters zero. Every action ties, so greedy selection picks action 0.
    pub fn zeros(input: usize, hidden: usize, learning_rate: f64) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let n = Self::param_count(input, hidden);
        Ok(QNetwork {
            input,
            hidden,
            params: vec![0.0; n],
            learning_rate,
            adam_config: AdamConfig::default(),
            adam: AdamState {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
        })
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        hidden * input + hidden + NUM_ACTIONS * hidden + NUM_ACTIONS
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        NUM_ACTIONS
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn adam_config(&self) -> AdamConfig {
        self.adam_config
    }

    pub fn adam_step(&self) -> u64 {
        self.adam.step
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + NUM_ACTIONS * self.hidden;
        (b1, w2, b2)
    }

    pub fn w1(&self) -> &[f64] {
        let (b1, _, _) = self.offsets();
        &self.params[..b1]
    }

    pub fn b1(&self) -> &[f64] {
        let (b1, w2, _) = self.offsets();
        &self.params[b1..w2]
    }

    pub fn w2(&self) -> &[f64] {
        let (_, w2, b2) = self.offsets();
        &self.params[w2..b2]
    }

    pub fn b2(&self) -> &[f64] {
        let (_, _, b2) = self.offsets();
        &self.params[b2..]
    }

    /// Mutable views `(W1, b1, W2, b2)`.
    pub fn layers_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        let (w1s, rest) = self.params.split_at_mut(b1);
        let (b1s, rest) = rest.split_at_mut(w2 - b1);
        let (w2s, b2s) = rest.split_at_mut(b2 - w2);
        (w1s, b1s, w2s, b2s)
    }

    fn check_input(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.input {
            return Err(Error::Shape {
                expected: self.input,
                got: state.len(),
            });
        }
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite network input".into()));
        }
        Ok(())
    }

    fn forward_into(&self, state: &[f64], hidden: &mut [f64]) -> [f64; NUM_ACTIONS] {
        let (b1o, w2o, b2o) = self.offsets();
        let (w1, b1, w2, b2) = (
            &self.params[..b1o],
            &self.params[b1o..w2o],
            &self.params[w2o..b2o],
            &self.params[b2o..],
        );
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &w1[j * self.input..(j + 1) * self.input];
            let z: f64 = b1[j] + row.iter().zip(state).map(|(w, x)| w * x).sum::<f64>();
            *h = z.max(0.0);
        }
        let mut out = [0.0; NUM_ACTIONS];
        for (a, q) in out.iter_mut().enumerate() {
            let row = &w2[a * self.hidden..(a + 1) * self.hidden];
            *q = b2[a]
                + row
                    .iter()
                    .zip(hidden.iter())
                    .map(|(w, h)| w * h)
                    .sum::<f64>();
        }
        out
    }

    /// Q-values for every action.
    pub fn forward(&self, state: &[f64]) -> Result<[f64; NUM_ACTIONS]> {
        self.check_input(state)?;
        let mut hidden = vec![0.0; self.hidden];
        Ok(self.forward_into(state, &mut hidden))
    }

    /// Mean masked squared error over the batch and its gradient with respect
    /// to the flat parameter vector. Only the acted output of each sample
    /// contributes.
    pub fn gradient(&self, batch: &[Sample<'_>]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Config("empty training batch".into()));
        }
        let (b1o, w2o, b2o) = self.offsets();
        let scale = 1.0 / batch.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut hidden = vec![0.0; self.hidden];
        let mut loss = 0.0;
        for sample in batch {
            self.check_input(sample.state)?;
            if !sample.target.is_finite() {
                return Err(Error::Numerical("non-finite training target".into()));
            }
            let q = self.forward_into(sample.state, &mut hidden);
            let a = sample.action.index();
            let err = q[a] - sample.target;
            loss += err * err * scale;
            let delta = 2.0 * err * scale;

            grad[b2o + a] += delta;
            let w2row = w2o + a * self.hidden;
            for j in 0..self.hidden {
                grad[w2row + j] += delta * hidden[j];
                // relu gate: hidden[j] > 0 exactly when its pre-activation is
                if hidden[j] > 0.0 {
                    let dz = delta * self.params[w2row + j];
                    grad[b1o + j] += dz;
                    let w1row = j * self.input;
                    for (i, x) in sample.state.iter().enumerate() {
                        grad[w1row + i] += dz * x;
                    }
                }
            }
        }
        debug_assert_eq!(b2o + NUM_ACTIONS, grad.len());
        Ok((loss, grad))
    }

    /// One Adam update on the batch. Returns the loss before the update.
    ///
    /// On any non-finite loss, gradient or updated parameter the network is
    /// left exactly as it was and a numerical error is returned.
    pub fn train_step(&mut self, batch: &[Sample<'_>]) -> Result<f64> {
        let (loss, grad) = self.gradient(batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite loss or gradient (loss {loss})"
            )));
        }
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.adam_config;
        let step = self.adam.step + 1;
        let bias1 = 1.0 - beta1.powi(step.min(i32::MAX as u64) as i32);
        let bias2 = 1.0 - beta2.powi(step.min(i32::MAX as u64) as i32);

        let mut params = self.params.clone();
        let mut m = self.adam.m.clone();
        let mut v = self.adam.v.clone();
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        if params.iter().chain(&m).chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Numerical(
                "parameter update produced non-finite values".into(),
            ));
        }
        self.params = params;
        self.adam.m = m;
        self.adam.v = v;
        self.adam.step = step;
        Ok(loss)
    }
}

mod persist {
    //! Self-describing JSON model documents.

    use serde::{Deserialize, Serialize};
    use serde_json::value::RawValue;

    use super::{AdamConfig, AdamState, QNetwork};
    use crate::error::{Error, Result};
    use crate::mews::VitalKind;
    use crate::reward::NUM_ACTIONS;

    pub const SCHEMA_VERSION: u64 = 1;

    /// Hyperparameters and exploration state recorded alongside the weights.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TrainingSnapshot {
        pub gamma: f64,
        pub batch_size: usize,
        pub memory_capacity: usize,
        pub window: usize,
        pub replay_cadence: String,
        pub episodes: usize,
        pub monitor_length: usize,
        pub epsilon: f64,
        pub epsilon_decay: f64,
        pub epsilon_min: f64,
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct ModelMeta {
        pub vital: VitalKind,
        pub subject: String,
        pub seed: u64,
        pub training: Option<TrainingSnapshot>,
    }

    #[derive(Serialize, Deserialize)]
    struct Dims {
        input: usize,
        hidden: usize,
        output: usize,
    }

    #[derive(Serialize, Deserialize)]
    struct Weights {
        #[serde(serialize_with = "sig17")]
        w1: Vec<f64>,
        #[serde(serialize_with = "sig17")]
        b1: Vec<f64>,
        #[serde(serialize_with = "sig17")]
        w2: Vec<f64>,
        #[serde(serialize_with = "sig17")]
        b2: Vec<f64>,
    }

    #[derive(Serialize, Deserialize)]
    struct Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        step: u64,
        #[serde(serialize_with = "sig17")]
        m: Vec<f64>,
        #[serde(serialize_with = "sig17")]
        v: Vec<f64>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Document {
        schema_version: u64,
        vital: VitalKind,
        subject: String,
        seed: u64,
        dims: Dims,
        weights: Weights,
        adam: Adam,
        training: Option<TrainingSnapshot>,
    }

    #[derive(Deserialize)]
    struct VersionProbe {
        schema_version: u64,
    }

    /// Writes each value with 17 significant digits, enough to round-trip any f64.
    fn sig17<S: serde::Serializer>(values: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::{Error as _, SerializeSeq};
        let mut seq = ser.serialize_seq(Some(values.len()))?;
        for v in values {
            if !v.is_finite() {
                return Err(S::Error::custom("non-finite parameter"));
            }
            let raw = RawValue::from_string(format!("{v:.16e}")).map_err(S::Error::custom)?;
            seq.serialize_element(&raw)?;
        }
        seq.end()
    }

    pub fn save(net: &QNetwork, meta: &ModelMeta) -> Result<String> {
        let doc = Document {
            schema_version: SCHEMA_VERSION,
            vital: meta.vital,
            subject: meta.subject.clone(),
            seed: meta.seed,
            dims: Dims {
                input: net.input,
                hidden: net.hidden,
                output: NUM_ACTIONS,
            },
            weights: Weights {
                w1: net.w1().to_vec(),
                b1: net.b1().to_vec(),
                w2: net.w2().to_vec(),
                b2: net.b2().to_vec(),
            },
            adam: Adam {
                learning_rate: net.learning_rate,
                beta1: net.adam_config.beta1,
                beta2: net.adam_config.beta2,
                epsilon: net.adam_config.epsilon,
                step: net.adam.step,
                m: net.adam.m.clone(),
                v: net.adam.v.clone(),
            },
            training: meta.training.clone(),
        };
        let mut text =
            serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    fn field(path: &str, message: impl Into<String>) -> Error {
        Error::Parse {
            path: path.to_string(),
            message: message.into(),
        }
    }

    pub fn load(text: &str) -> Result<(QNetwork, ModelMeta)> {
        let probe: VersionProbe =
            serde_json::from_str(text).map_err(|e| field("schema_version", e.to_string()))?;
        if probe.schema_version != SCHEMA_VERSION {
            return Err(Error::UnsupportedVersion {
                found: probe.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let mut de = serde_json::Deserializer::from_str(text);
        let doc: Document =
            serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;

        let Dims {
            input,
            hidden,
            output,
        } = doc.dims;
        if output != NUM_ACTIONS {
            return Err(field(
                "dims.output",
                format!("must be {NUM_ACTIONS}, got {output}"),
            ));
        }
        if input == 0 || hidden == 0 {
            return Err(field("dims", "dimensions must be positive"));
        }
        let expect = [
            ("weights.w1", doc.weights.w1.len(), hidden * input),
            ("weights.b1", doc.weights.b1.len(), hidden),
            ("weights.w2", doc.weights.w2.len(), NUM_ACTIONS * hidden),
            ("weights.b2", doc.weights.b2.len(), NUM_ACTIONS),
        ];
        for (path, got, want) in expect {
            if got != want {
                return Err(field(path, format!("expected {want} values, found {got}")));
            }
        }
        let n = QNetwork::param_count(input, hidden);
        if doc.adam.m.len() != n {
            return Err(field(
                "adam.m",
                format!("expected {n} values, found {}", doc.adam.m.len()),
            ));
        }
        if doc.adam.v.len() != n {
            return Err(field(
                "adam.v",
                format!("expected {n} values, found {}", doc.adam.v.len()),
            ));
        }
        let mut net = QNetwork::zeros(input, hidden, doc.adam.learning_rate)
            .map_err(|e| field("adam.learning_rate", e.to_string()))?;
        let params: Vec<f64> = [
            doc.weights.w1,
            doc.weights.b1,
            doc.weights.w2,
            doc.weights.b2,
        ]
        .concat();
        net.params = params;
        net.adam_config = AdamConfig {
            beta1: doc.adam.beta1,
            beta2: doc.adam.beta2,
            epsilon: doc.adam.epsilon,
        };
        net.adam = AdamState {
            m: doc.adam.m,
            v: doc.adam.v,
            step: doc.adam.step,
        };
        Ok((
            net,
            ModelMeta {
                vital: doc.vital,
                subject: doc.subject,
                seed: doc.seed,
                training: doc.training,
            },
        ))
    }
}
