//! The dynamics network: input `[state (7), time, country one-hot]`,
//! tanh hidden layers, linear output of seven derivatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::NUM_VARS;
use crate::error::{Error, Result};

pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// Inputs besides the country encoding: seven state components plus time.
pub const BASE_INPUTS: usize = NUM_VARS + 1;

/// Dense layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.inputs + col]
    }

    pub fn set_weight(&mut self, row: usize, col: usize, value: f64) {
        self.weights[row * self.inputs + col] = value;
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(r, b)| {
            let row = &self.weights[r * self.inputs..(r + 1) * self.inputs];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        }));
    }
}

/// Weights and biases of the dynamics network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsDoc", try_from = "ParamsDoc")]
pub struct MlpParams {
    country_count: usize,
    hidden: Vec<usize>,
    layers: Vec<Layer>,
    seed: u64,
}

impl MlpParams {
    /// All-zero network with the given hidden widths.
    pub fn zeros(hidden: &[usize], country_count: usize) -> Self {
        let mut dims = vec![BASE_INPUTS + country_count];
        dims.extend_from_slice(hidden);
        dims.push(NUM_VARS);
        let layers = dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        MlpParams {
            country_count,
            hidden: hidden.to_vec(),
            layers,
            seed: 0,
        }
    }

    /// Glorot-uniform weights, zero biases, drawn from `seed`.
    pub fn init(hidden: &[usize], country_count: usize, seed: u64) -> Self {
        let mut params = MlpParams::zeros(hidden, country_count);
        params.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut params.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..limit);
            }
        }
        params
    }

    pub fn country_count(&self) -> usize {
        self.country_count
    }

    pub fn input_dim(&self) -> usize {
        BASE_INPUTS + self.country_count
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Same architecture, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = MlpParams::zeros(&self.hidden, self.country_count);
        z.seed = self.seed;
        z
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.country_count == other.country_count && self.hidden == other.hidden
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        for (p, v) in self.iter_mut().zip(flat) {
            *p = *v;
        }
        Ok(())
    }

    /// `self += alpha * other`, shapes assumed equal.
    pub fn axpy(&mut self, alpha: f64, other: &MlpParams) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.iter_mut() {
            *a *= alpha;
        }
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Checks the country encoding against this network's input layout.
    pub fn check_country(&self, country: Option<&[f64]>) -> Result<()> {
        match (self.country_count, country) {
            (0, None) => Ok(()),
            (0, Some(c)) => Err(Error::shape(format!(
                "network has no country inputs but got an encoding of length {}",
                c.len()
            ))),
            (n, None) => Err(Error::shape(format!(
                "network expects a country encoding of length {n}"
            ))),
            (n, Some(c)) if c.len() != n => Err(Error::shape(format!(
                "country encoding has length {}, expected {n}",
                c.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Network input vector `[x, t, country]`.
    pub(crate) fn input(&self, x: &[f64; NUM_VARS], t: f64, country: Option<&[f64]>) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.input_dim());
        z.extend_from_slice(x);
        z.push(t);
        if let Some(c) = country {
            z.extend_from_slice(c);
        }
        z
    }

    /// Forward pass keeping every layer input (`cache[0]` is the network
    /// input, `cache[k]` the tanh output of hidden layer k).
    pub(crate) fn forward_cached(&self, z: Vec<f64>, cache: &mut Vec<Vec<f64>>) -> [f64; NUM_VARS] {
        cache.clear();
        cache.push(z);
        let last = self.layers.len() - 1;
        let mut out = [0.0; NUM_VARS];
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.outputs);
            layer.apply(&cache[k], &mut next);
            if k == last {
                out.copy_from_slice(&next);
            } else {
                for v in &mut next {
                    *v = v.tanh();
                }
                cache.push(next);
            }
        }
        out
    }

    /// Reverse pass for one cached evaluation: accumulates parameter
    /// gradients into `grad` and returns the gradient w.r.t. the state inputs.
    pub(crate) fn backward(
        &self,
        cache: &[Vec<f64>],
        upstream: &[f64; NUM_VARS],
        grad: &mut MlpParams,
    ) -> [f64; NUM_VARS] {
        let mut delta: Vec<f64> = upstream.to_vec();
        let mut state_grad = [0.0; NUM_VARS];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &cache[k];
            let g = &mut grad.layers[k];
            for (r, d) in delta.iter().enumerate() {
                g.bias[r] += d;
                let row = &mut g.weights[r * layer.inputs..(r + 1) * layer.inputs];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            let mut below = vec![0.0; layer.inputs];
            for (r, d) in delta.iter().enumerate() {
                let row = &layer.weights[r * layer.inputs..(r + 1) * layer.inputs];
                for (b, w) in below.iter_mut().zip(row) {
                    *b += d * w;
                }
            }
            if k == 0 {
                state_grad.copy_from_slice(&below[..NUM_VARS]);
            } else {
                // through tanh: d/da tanh(a) = 1 - tanh(a)^2
                for (b, h) in below.iter_mut().zip(input) {
                    *b *= 1.0 - h * h;
                }
                delta = below;
            }
        }
        state_grad
    }
}

/// Evaluates the network at state `x`, model time `t` and optional country
/// one-hot. The share projection is not applied here.
pub fn mlp_forward(
    params: &MlpParams,
    x: &[f64; NUM_VARS],
    t: f64,
    country: Option<&[f64]>,
) -> Result<[f64; NUM_VARS]> {
    params.check_country(country)?;
    let mut cache = Vec::with_capacity(params.layers.len());
    Ok(params.forward_cached(params.input(x, t, country), &mut cache))
}

/// One-hot encoding of `index` among `count` countries.
pub fn one_hot(index: usize, count: usize) -> Vec<f64> {
    let mut v = vec![0.0; count];
    v[index] = 1.0;
    v
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    format_version: u32,
    seed: u64,
    input_dim: usize,
    output_dim: usize,
    country_count: usize,
    hidden: Vec<usize>,
    activation: String,
    layers: Vec<Layer>,
}

impl From<MlpParams> for ParamsDoc {
    fn from(p: MlpParams) -> Self {
        ParamsDoc {
            format_version: PARAMS_FORMAT_VERSION,
            seed: p.seed,
            input_dim: p.input_dim(),
            output_dim: NUM_VARS,
            country_count: p.country_count,
            hidden: p.hidden,
            activation: "tanh".into(),
            layers: p.layers,
        }
    }
}

impl TryFrom<ParamsDoc> for MlpParams {
    type Error = Error;

    fn try_from(d: ParamsDoc) -> Result<Self> {
        if d.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::shape(format!(
                "unsupported params format version {}",
                d.format_version
            )));
        }
        if d.activation != "tanh" {
            return Err(Error::shape(format!("unsupported activation `{}`", d.activation)));
        }
        let expected = MlpParams::zeros(&d.hidden, d.country_count);
        if d.input_dim != expected.input_dim() || d.output_dim != NUM_VARS {
            return Err(Error::shape("input/output dimensions disagree with metadata"));
        }
        if d.layers.len() != expected.layers.len() {
            return Err(Error::shape(format!(
                "expected {} layers, found {}",
                expected.layers.len(),
                d.layers.len()
            )));
        }
        for (i, (got, want)) in d.layers.iter().zip(&expected.layers).enumerate() {
            if got.inputs != want.inputs
                || got.outputs != want.outputs
                || got.weights.len() != want.weights.len()
                || got.bias.len() != want.bias.len()
            {
                return Err(Error::shape(format!("layer {i} does not chain correctly")));
            }
        }
        Ok(MlpParams {
            country_count: d.country_count,
            hidden: d.hidden,
            layers: d.layers,
            seed: d.seed,
        })
    }
}
