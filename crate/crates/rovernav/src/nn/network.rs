//! The policy/value network: a small CNN (optionally followed by an LSTM
//! cell) over image observations, or a two-layer MLP over a proprioceptive
//! vector, with a diagonal-Gaussian action head and a scalar value head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::gaussian::standard_normal;
use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, lstm_backward, lstm_forward, relu,
    relu_backward, LstmCache,
};
use super::tensor::Tensor;

/// State-independent log-std parameters are clamped to this range before
/// use, keeping the policy distribution well conditioned.
pub const LOG_STD_RANGE: (f64, f64) = (-5.0, 2.0);

/// Length of the proprioceptive observation consumed by the MLP baseline:
/// goal bearing, goal distance, heading, x, y, and the previous wheel
/// command pair, each scaled to roughly [-1, 1].
pub const PROPRIO_DIM: usize = 7;

const CONV1_KERNEL: usize = 5;
const CONV1_STRIDE: usize = 2;
const CONV2_KERNEL: usize = 3;
const CONV2_STRIDE: usize = 2;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("observation shape {got:?} does not match expected {want:?}")]
    ShapeMismatch { got: Vec<usize>, want: Vec<usize> },
    #[error("gradient/parameter length mismatch: {got} vs {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("stale forward cache: network parameters changed since the forward pass")]
    StaleCache,
    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("recurrent state length {got} does not match lstm width {want}")]
    BadRecurrentState { got: usize, want: usize },
}

/// Which architecture variant to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Cnn,
    CnnLstm,
    Mlp,
}

impl NetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NetKind::Cnn => "cnn",
            NetKind::CnnLstm => "cnn-lstm",
            NetKind::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<NetKind> {
        match s {
            "cnn" => Some(NetKind::Cnn),
            "cnn-lstm" | "cnn_lstm" | "cnnlstm" => Some(NetKind::CnnLstm),
            "mlp" => Some(NetKind::Mlp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub kind: NetKind,
    /// Image observation width/height for the CNN variants.
    pub obs_width: usize,
    pub obs_height: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub dense_units: usize,
    pub lstm_units: usize,
    pub mlp_units: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            kind: NetKind::Cnn,
            obs_width: 48,
            obs_height: 27,
            conv1_filters: 8,
            conv2_filters: 16,
            dense_units: 128,
            lstm_units: 64,
            mlp_units: 64,
        }
    }
}

impl NetConfig {
    /// Shape of the observation tensor this network consumes.
    pub fn obs_shape(&self) -> Vec<usize> {
        match self.kind {
            NetKind::Mlp => vec![PROPRIO_DIM],
            _ => vec![3, self.obs_height, self.obs_width],
        }
    }

    fn conv_dims(&self) -> Result<(usize, usize, usize, usize, usize), NnError> {
        let (h, w) = (self.obs_height, self.obs_width);
        if h < CONV1_KERNEL || w < CONV1_KERNEL {
            return Err(NnError::BadCheckpoint(format!("observation {w}x{h} too small for conv1")));
        }
        let h1 = (h - CONV1_KERNEL) / CONV1_STRIDE + 1;
        let w1 = (w - CONV1_KERNEL) / CONV1_STRIDE + 1;
        if h1 < CONV2_KERNEL || w1 < CONV2_KERNEL {
            return Err(NnError::BadCheckpoint(format!("observation {w}x{h} too small for conv2")));
        }
        let h2 = (h1 - CONV2_KERNEL) / CONV2_STRIDE + 1;
        let w2 = (w1 - CONV2_KERNEL) / CONV2_STRIDE + 1;
        Ok((h1, w1, h2, w2, self.conv2_filters * h2 * w2))
    }

    /// Width of the feature vector feeding the policy and value heads.
    fn head_input(&self) -> usize {
        match self.kind {
            NetKind::Cnn => self.dense_units,
            NetKind::CnnLstm => self.lstm_units,
            NetKind::Mlp => self.mlp_units,
        }
    }
}

/// LSTM hidden and cell vectors, zeroed at episode start. Empty for
/// non-recurrent variants.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl RecurrentState {
    pub fn zeroed(config: &NetConfig) -> Self {
        let n = if config.kind == NetKind::CnnLstm { config.lstm_units } else { 0 };
        Self {
            hidden: vec![0.0; n],
            cell: vec![0.0; n],
        }
    }
}

/// Deterministic outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
    pub value: f64,
    pub state: RecurrentState,
}

/// Intermediates retained for the backward pass. Consumed by
/// [`PolicyNetwork::backward`]; a cache cannot be reused, and using one
/// after the parameters changed is rejected as stale.
#[derive(Debug)]
pub struct ForwardCache {
    version: u64,
    obs: Tensor,
    conv1_pre: Option<Tensor>,
    conv1_post: Option<Tensor>,
    conv2_pre: Option<Tensor>,
    fc_input: Vec<f64>,
    fc_pre: Vec<f64>,
    fc2_pre: Option<Vec<f64>>,
    fc2_input: Option<Vec<f64>>,
    lstm: Option<(Vec<f64>, Vec<f64>, Vec<f64>, LstmCache)>, // (x, h_prev, c_prev, gates)
    features: Vec<f64>,
    log_std_raw: [f64; 2],
}

/// Policy network parameters, stored as named tensors in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub config: NetConfig,
    names: Vec<&'static str>,
    params: Vec<Tensor>,
    version: u64,
}

impl PolicyNetwork {
    /// Build a network with orthogonal weight init (gain sqrt(2) on hidden
    /// layers, 0.01 on the policy head, 1.0 on the value head), zero
    /// biases, and zero log-std.
    pub fn new(config: &NetConfig, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain_hidden = 2.0f64.sqrt();
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut push = |name: &'static str, t: Tensor| {
            names.push(name);
            params.push(t);
        };

        match config.kind {
            NetKind::Cnn | NetKind::CnnLstm => {
                let (_, _, _, _, flat) = config.conv_dims()?;
                let (c1, c2) = (config.conv1_filters, config.conv2_filters);
                push(
                    "conv1.w",
                    orthogonal(&mut rng, vec![c1, 3, CONV1_KERNEL, CONV1_KERNEL], gain_hidden),
                );
                push("conv1.b", Tensor::zeros(vec![c1]));
                push(
                    "conv2.w",
                    orthogonal(&mut rng, vec![c2, c1, CONV2_KERNEL, CONV2_KERNEL], gain_hidden),
                );
                push("conv2.b", Tensor::zeros(vec![c2]));
                push("fc.w", orthogonal(&mut rng, vec![config.dense_units, flat], gain_hidden));
                push("fc.b", Tensor::zeros(vec![config.dense_units]));
                if config.kind == NetKind::CnnLstm {
                    let h = config.lstm_units;
                    push("lstm.wx", orthogonal(&mut rng, vec![4 * h, config.dense_units], 1.0));
                    push("lstm.wh", orthogonal(&mut rng, vec![4 * h, h], 1.0));
                    push("lstm.b", Tensor::zeros(vec![4 * h]));
                }
            }
            NetKind::Mlp => {
                let u = config.mlp_units;
                push("fc1.w", orthogonal(&mut rng, vec![u, PROPRIO_DIM], gain_hidden));
                push("fc1.b", Tensor::zeros(vec![u]));
                push("fc2.w", orthogonal(&mut rng, vec![u, u], gain_hidden));
                push("fc2.b", Tensor::zeros(vec![u]));
            }
        }
        let head = config.head_input();
        push("pi.w", orthogonal(&mut rng, vec![2, head], 0.01));
        push("pi.b", Tensor::zeros(vec![2]));
        push("vf.w", orthogonal(&mut rng, vec![1, head], 1.0));
        push("vf.b", Tensor::zeros(vec![1]));
        push("log_std", Tensor::zeros(vec![2]));

        Ok(Self {
            config: config.clone(),
            names,
            params,
            version: 0,
        })
    }

    fn index(&self, name: &str) -> usize {
        self.names.iter().position(|&n| n == name).expect("unknown parameter name")
    }

    fn p(&self, name: &str) -> &Tensor {
        &self.params[self.index(name)]
    }

    /// (name, shape) pairs in storage order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.names
            .iter()
            .zip(&self.params)
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for t in &self.params {
            flat.extend_from_slice(t.data());
        }
        flat
    }

    /// Replace all parameters from a flat vector in manifest order. Bumps
    /// the parameter version, invalidating outstanding forward caches.
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.n_params() {
            return Err(NnError::LengthMismatch {
                got: flat.len(),
                want: self.n_params(),
            });
        }
        let mut offset = 0;
        for t in &mut self.params {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        self.version += 1;
        Ok(())
    }

    /// Byte offsets of each named tensor inside the flat parameter vector.
    pub fn flat_offsets(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (name, t) in self.names.iter().zip(&self.params) {
            out.push((name.to_string(), offset, t.len()));
            offset += t.len();
        }
        out
    }

    fn clamped_log_std(&self) -> ([f64; 2], [f64; 2]) {
        let raw = self.p("log_std").data();
        let raw = [raw[0], raw[1]];
        (
            [
                raw[0].clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1),
                raw[1].clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1),
            ],
            raw,
        )
    }

    /// Run the network. Non-recurrent variants pass `state` through
    /// unchanged.
    pub fn forward(&self, obs: &Tensor, state: &RecurrentState) -> Result<(PolicyOutput, ForwardCache), NnError> {
        let want = self.config.obs_shape();
        if obs.shape() != want.as_slice() {
            return Err(NnError::ShapeMismatch {
                got: obs.shape().to_vec(),
                want,
            });
        }

        let mut cache = ForwardCache {
            version: self.version,
            obs: obs.clone(),
            conv1_pre: None,
            conv1_post: None,
            conv2_pre: None,
            fc_input: Vec::new(),
            fc_pre: Vec::new(),
            fc2_pre: None,
            fc2_input: None,
            lstm: None,
            features: Vec::new(),
            log_std_raw: [0.0; 2],
        };

        let mut features = match self.config.kind {
            NetKind::Cnn | NetKind::CnnLstm => {
                let a1 = conv2d_forward(self.p("conv1.w"), self.p("conv1.b"), obs, CONV1_STRIDE);
                let z1 = Tensor::from_vec(a1.shape().to_vec(), relu(a1.data()));
                let a2 = conv2d_forward(self.p("conv2.w"), self.p("conv2.b"), &z1, CONV2_STRIDE);
                let flat = relu(a2.data());
                let fc_pre = dense_forward(self.p("fc.w"), self.p("fc.b"), &flat);
                let feat = relu(&fc_pre);
                cache.conv1_pre = Some(a1);
                cache.conv1_post = Some(z1);
                cache.conv2_pre = Some(a2);
                cache.fc_input = flat;
                cache.fc_pre = fc_pre;
                feat
            }
            NetKind::Mlp => {
                let x = obs.data();
                let pre1 = dense_forward(self.p("fc1.w"), self.p("fc1.b"), x);
                let z1 = relu(&pre1);
                let pre2 = dense_forward(self.p("fc2.w"), self.p("fc2.b"), &z1);
                let feat = relu(&pre2);
                cache.fc_input = x.to_vec();
                cache.fc_pre = pre1;
                cache.fc2_input = Some(z1);
                cache.fc2_pre = Some(pre2);
                feat
            }
        };

        let mut next_state = state.clone();
        if self.config.kind == NetKind::CnnLstm {
            let width = self.config.lstm_units;
            if state.hidden.len() != width || state.cell.len() != width {
                return Err(NnError::BadRecurrentState {
                    got: state.hidden.len(),
                    want: width,
                });
            }
            let (h, c, gates) = lstm_forward(
                self.p("lstm.wx"),
                self.p("lstm.wh"),
                self.p("lstm.b"),
                &features,
                &state.hidden,
                &state.cell,
            );
            cache.lstm = Some((features, state.hidden.clone(), state.cell.clone(), gates));
            next_state = RecurrentState {
                hidden: h.clone(),
                cell: c,
            };
            features = h;
        }

        let mean_v = dense_forward(self.p("pi.w"), self.p("pi.b"), &features);
        let value_v = dense_forward(self.p("vf.w"), self.p("vf.b"), &features);
        let (log_std, raw) = self.clamped_log_std();
        cache.features = features;
        cache.log_std_raw = raw;

        let out = PolicyOutput {
            mean: [mean_v[0], mean_v[1]],
            log_std,
            value: value_v[0],
            state: next_state,
        };
        if !(out.mean[0].is_finite() && out.mean[1].is_finite() && out.value.is_finite()) {
            return Err(NnError::NonFinite("policy forward"));
        }
        Ok((out, cache))
    }

    /// Exact reverse-mode gradients of
    /// `d_mean . mean + d_log_std . log_std + d_value * value`
    /// with respect to every parameter, as a flat vector in manifest order.
    pub fn backward(&self, cache: ForwardCache, d_mean: [f64; 2], d_log_std: [f64; 2], d_value: f64) -> Result<Vec<f64>, NnError> {
        if cache.version != self.version {
            return Err(NnError::StaleCache);
        }
        let mut grads = vec![0.0; self.n_params()];
        let offsets = self.flat_offsets();
        let range = |name: &str| {
            let (_, start, len) = offsets.iter().find(|(n, _, _)| n == name).unwrap().clone();
            start..start + len
        };

        // log_std is a leaf parameter; the clamp gates its gradient.
        {
            let r = range("log_std");
            let slot = &mut grads[r];
            for d in 0..2 {
                let raw = cache.log_std_raw[d];
                if (LOG_STD_RANGE.0..=LOG_STD_RANGE.1).contains(&raw) {
                    slot[d] = d_log_std[d];
                }
            }
        }

        // Heads.
        let feat = &cache.features;
        let mut d_feat = vec![0.0; feat.len()];
        {
            let (pi_w_r, pi_b_r) = (range("pi.w"), range("pi.b"));
            let mut dw = vec![0.0; pi_w_r.len()];
            let mut db = vec![0.0; pi_b_r.len()];
            let dx = dense_backward(self.p("pi.w"), feat, &d_mean, &mut dw, &mut db);
            grads[pi_w_r].copy_from_slice(&dw);
            grads[pi_b_r].copy_from_slice(&db);
            for (a, b) in d_feat.iter_mut().zip(&dx) {
                *a += b;
            }
        }
        {
            let (vf_w_r, vf_b_r) = (range("vf.w"), range("vf.b"));
            let mut dw = vec![0.0; vf_w_r.len()];
            let mut db = vec![0.0; vf_b_r.len()];
            let dx = dense_backward(self.p("vf.w"), feat, &[d_value], &mut dw, &mut db);
            grads[vf_w_r].copy_from_slice(&dw);
            grads[vf_b_r].copy_from_slice(&db);
            for (a, b) in d_feat.iter_mut().zip(&dx) {
                *a += b;
            }
        }

        // Trunk.
        match self.config.kind {
            NetKind::Cnn | NetKind::CnnLstm => {
                let d_fc_out = if self.config.kind == NetKind::CnnLstm {
                    let (x, h_prev, c_prev, gates) = cache.lstm.as_ref().unwrap();
                    let (wx_r, wh_r, b_r) = (range("lstm.wx"), range("lstm.wh"), range("lstm.b"));
                    let mut dwx = vec![0.0; wx_r.len()];
                    let mut dwh = vec![0.0; wh_r.len()];
                    let mut db = vec![0.0; b_r.len()];
                    let zero = vec![0.0; h_prev.len()];
                    let (dx, _dh_prev, _dc_prev) = lstm_backward(
                        self.p("lstm.wx"),
                        self.p("lstm.wh"),
                        x,
                        h_prev,
                        c_prev,
                        gates,
                        &d_feat,
                        &zero,
                        &mut dwx,
                        &mut dwh,
                        &mut db,
                    );
                    grads[wx_r].copy_from_slice(&dwx);
                    grads[wh_r].copy_from_slice(&dwh);
                    grads[b_r].copy_from_slice(&db);
                    dx
                } else {
                    d_feat
                };

                // Dense trunk layer.
                let d_fc_pre = relu_backward(&cache.fc_pre, &d_fc_out);
                let (fc_w_r, fc_b_r) = (range("fc.w"), range("fc.b"));
                let mut dw = vec![0.0; fc_w_r.len()];
                let mut db = vec![0.0; fc_b_r.len()];
                let d_flat = dense_backward(self.p("fc.w"), &cache.fc_input, &d_fc_pre, &mut dw, &mut db);
                grads[fc_w_r].copy_from_slice(&dw);
                grads[fc_b_r].copy_from_slice(&db);

                // conv2.
                let conv2_pre = cache.conv2_pre.as_ref().unwrap();
                let d_conv2_out = relu_backward(conv2_pre.data(), &d_flat);
                let d_conv2 = Tensor::from_vec(conv2_pre.shape().to_vec(), d_conv2_out);
                let (c2_w_r, c2_b_r) = (range("conv2.w"), range("conv2.b"));
                let mut dw2 = vec![0.0; c2_w_r.len()];
                let mut db2 = vec![0.0; c2_b_r.len()];
                let d_z1 = conv2d_backward(
                    self.p("conv2.w"),
                    cache.conv1_post.as_ref().unwrap(),
                    &d_conv2,
                    CONV2_STRIDE,
                    &mut dw2,
                    &mut db2,
                );
                grads[c2_w_r].copy_from_slice(&dw2);
                grads[c2_b_r].copy_from_slice(&db2);

                // conv1.
                let conv1_pre = cache.conv1_pre.as_ref().unwrap();
                let d_conv1_out = relu_backward(conv1_pre.data(), d_z1.data());
                let d_conv1 = Tensor::from_vec(conv1_pre.shape().to_vec(), d_conv1_out);
                let (c1_w_r, c1_b_r) = (range("conv1.w"), range("conv1.b"));
                let mut dw1 = vec![0.0; c1_w_r.len()];
                let mut db1 = vec![0.0; c1_b_r.len()];
                let _ = conv2d_backward(self.p("conv1.w"), &cache.obs, &d_conv1, CONV1_STRIDE, &mut dw1, &mut db1);
                grads[c1_w_r].copy_from_slice(&dw1);
                grads[c1_b_r].copy_from_slice(&db1);
            }
            NetKind::Mlp => {
                let d_pre2 = relu_backward(cache.fc2_pre.as_ref().unwrap(), &d_feat);
                let (w2_r, b2_r) = (range("fc2.w"), range("fc2.b"));
                let mut dw2 = vec![0.0; w2_r.len()];
                let mut db2 = vec![0.0; b2_r.len()];
                let d_z1 = dense_backward(
                    self.p("fc2.w"),
                    cache.fc2_input.as_ref().unwrap(),
                    &d_pre2,
                    &mut dw2,
                    &mut db2,
                );
                grads[w2_r].copy_from_slice(&dw2);
                grads[b2_r].copy_from_slice(&db2);

                let d_pre1 = relu_backward(&cache.fc_pre, &d_z1);
                let (w1_r, b1_r) = (range("fc1.w"), range("fc1.b"));
                let mut dw1 = vec![0.0; w1_r.len()];
                let mut db1 = vec![0.0; b1_r.len()];
                let _ = dense_backward(self.p("fc1.w"), &cache.fc_input, &d_pre1, &mut dw1, &mut db1);
                grads[w1_r].copy_from_slice(&dw1);
                grads[b1_r].copy_from_slice(&db1);
            }
        }
        Ok(grads)
    }

    pub(super) fn raw_tensors(&self) -> (&[&'static str], &[Tensor]) {
        (&self.names, &self.params)
    }

    pub(super) fn from_raw(config: NetConfig, names: Vec<&'static str>, params: Vec<Tensor>) -> Self {
        Self {
            config,
            names,
            params,
            version: 0,
        }
    }
}

/// Orthogonal initialization via modified Gram-Schmidt on Gaussian rows,
/// scaled by `gain`. Tensors with more than two dims are treated as
/// (shape[0], rest) matrices.
fn orthogonal(rng: &mut ChaCha8Rng, shape: Vec<usize>, gain: f64) -> Tensor {
    let rows = shape[0];
    let cols: usize = shape[1..].iter().product();
    let (k, n, transpose) = if rows <= cols { (rows, cols, false) } else { (cols, rows, true) };

    // k orthonormal vectors of length n.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        for u in &basis {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= dot * ui;
            }
        }
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vi in &mut v {
                *vi /= norm;
            }
            basis.push(v);
        }
    }

    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let v = if transpose { basis[c][r] } else { basis[r][c] };
            data[r * cols + c] = v * gain;
        }
    }
    Tensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_cnn_config(kind: NetKind) -> NetConfig {
        NetConfig {
            kind,
            obs_width: 9,
            obs_height: 9,
            conv1_filters: 4,
            conv2_filters: 5,
            dense_units: 12,
            lstm_units: 6,
            mlp_units: 8,
        }
    }

    fn random_obs(config: &NetConfig, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = config.obs_shape();
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn parameter_counts_are_exact() {
        // 48x27 default CNN: conv1 (8*3*25+8), conv2 (16*8*9+16),
        // fc (12*22 -> wait, computed below), heads, log_std.
        let config = NetConfig::default();
        let net = PolicyNetwork::new(&config, 0).unwrap();
        let h1 = (27 - 5) / 2 + 1; // 12
        let w1 = (48 - 5) / 2 + 1; // 22
        let h2 = (h1 - 3) / 2 + 1; // 5
        let w2 = (w1 - 3) / 2 + 1; // 10
        let flat = 16 * h2 * w2;
        let expected = (8 * 3 * 25 + 8)
            + (16 * 8 * 9 + 16)
            + (128 * flat + 128)
            + (2 * 128 + 2)
            + (128 + 1)
            + 2;
        assert_eq!(net.n_params(), expected);

        let mlp = PolicyNetwork::new(
            &NetConfig {
                kind: NetKind::Mlp,
                ..config
            },
            0,
        )
        .unwrap();
        let expected_mlp = (64 * 7 + 64) + (64 * 64 + 64) + (2 * 64 + 2) + (64 + 1) + 2;
        assert_eq!(mlp.n_params(), expected_mlp);
    }

    #[test]
    fn zero_observation_gives_zero_heads() {
        for kind in [NetKind::Cnn, NetKind::CnnLstm, NetKind::Mlp] {
            let config = tiny_cnn_config(kind);
            let net = PolicyNetwork::new(&config, 3).unwrap();
            let obs = Tensor::zeros(config.obs_shape());
            let state = RecurrentState::zeroed(&config);
            let (out, _) = net.forward(&obs, &state).unwrap();
            assert_eq!(out.mean, [0.0, 0.0], "{kind:?}");
            assert_eq!(out.value, 0.0);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let config = tiny_cnn_config(NetKind::CnnLstm);
        let net = PolicyNetwork::new(&config, 7).unwrap();
        let obs = random_obs(&config, 1);
        let state = RecurrentState::zeroed(&config);
        let (a, _) = net.forward(&obs, &state).unwrap();
        let (b, _) = net.forward(&obs, &state).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let config = tiny_cnn_config(NetKind::Cnn);
        let net = PolicyNetwork::new(&config, 7).unwrap();
        let bad = Tensor::zeros(vec![3, 4, 4]);
        assert!(matches!(
            net.forward(&bad, &RecurrentState::zeroed(&config)),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let config = tiny_cnn_config(NetKind::Cnn);
        let mut net = PolicyNetwork::new(&config, 7).unwrap();
        let obs = random_obs(&config, 2);
        let (_, cache) = net.forward(&obs, &RecurrentState::zeroed(&config)).unwrap();
        let flat = net.params_flat();
        net.set_params_flat(&flat).unwrap(); // version bump, same values
        assert!(matches!(
            net.backward(cache, [1.0, 0.0], [0.0, 0.0], 0.0),
            Err(NnError::StaleCache)
        ));
    }

    #[test]
    fn zero_cotangents_give_zero_gradients() {
        let config = tiny_cnn_config(NetKind::CnnLstm);
        let net = PolicyNetwork::new(&config, 5).unwrap();
        let obs = random_obs(&config, 3);
        let (_, cache) = net.forward(&obs, &RecurrentState::zeroed(&config)).unwrap();
        let grads = net.backward(cache, [0.0, 0.0], [0.0, 0.0], 0.0).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    /// Full-network finite-difference check across all three variants.
    #[test]
    fn full_network_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for kind in [NetKind::Cnn, NetKind::CnnLstm, NetKind::Mlp] {
            let config = tiny_cnn_config(kind);
            for instance in 0..7 {
                let mut net = PolicyNetwork::new(&config, 100 + instance).unwrap();
                // Check at a generic point: zero-initialized biases can park
                // pre-activations exactly on the ReLU kink, where central
                // differences are meaningless.
                let mut flat = net.params_flat();
                for v in flat.iter_mut() {
                    *v = rng.gen_range(-0.4..0.4);
                }
                net.set_params_flat(&flat).unwrap();

                let obs = random_obs(&config, 50 + instance);
                let mut state = RecurrentState::zeroed(&config);
                for v in state.hidden.iter_mut().chain(state.cell.iter_mut()) {
                    *v = rng.gen_range(-0.5..0.5);
                }
                let d_mean = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let d_log_std = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let d_value = rng.gen_range(-1.0..1.0);

                let (_, cache) = net.forward(&obs, &state).unwrap();
                let grads = net.backward(cache, d_mean, d_log_std, d_value).unwrap();

                let scalar = |net: &PolicyNetwork| -> f64 {
                    let (out, _) = net.forward(&obs, &state).unwrap();
                    d_mean[0] * out.mean[0]
                        + d_mean[1] * out.mean[1]
                        + d_log_std[0] * out.log_std[0]
                        + d_log_std[1] * out.log_std[1]
                        + d_value * out.value
                };

                let h = 1e-5;
                let flat = net.params_flat();
                let stride = (flat.len() / 160).max(1);
                let mut checked = 0;
                for i in (0..flat.len()).step_by(stride) {
                    let mut probe = net.clone();
                    let mut fp = flat.clone();
                    fp[i] = flat[i] + h;
                    probe.set_params_flat(&fp).unwrap();
                    let up = scalar(&probe);
                    fp[i] = flat[i] - h;
                    probe.set_params_flat(&fp).unwrap();
                    let down = scalar(&probe);
                    let fd = (up - down) / (2.0 * h);
                    let rel = (grads[i] - fd).abs() / grads[i].abs().max(fd.abs()).max(1.0);
                    assert!(rel < 1e-6, "{kind:?} param {i}: analytic {} fd {}", grads[i], fd);
                    checked += 1;
                }
                assert!(checked >= 100, "{kind:?}: only {checked} params checked");
            }
        }
    }

    #[test]
    fn lstm_state_carries_like_a_loop() {
        let config = tiny_cnn_config(NetKind::CnnLstm);
        let net = PolicyNetwork::new(&config, 9).unwrap();
        let observations: Vec<Tensor> = (0..5).map(|i| random_obs(&config, 70 + i)).collect();

        // Step-by-step with explicitly carried state.
        let mut state = RecurrentState::zeroed(&config);
        let mut outputs = Vec::new();
        for obs in &observations {
            let (out, _) = net.forward(obs, &state).unwrap();
            state = out.state.clone();
            outputs.push(out);
        }
        // Re-run; no hidden global state may leak between calls.
        let mut state2 = RecurrentState::zeroed(&config);
        for (obs, expect) in observations.iter().zip(&outputs) {
            let (out, _) = net.forward(obs, &state2).unwrap();
            state2 = out.state.clone();
            assert_eq!(&out, expect);
        }
    }

    #[test]
    fn outputs_stay_finite_with_clamped_log_std() {
        let config = tiny_cnn_config(NetKind::Cnn);
        let mut net = PolicyNetwork::new(&config, 21).unwrap();
        let mut flat = net.params_flat();
        let n = flat.len();
        flat[n - 2] = -30.0; // below clamp range
        flat[n - 1] = 30.0; // above clamp range
        net.set_params_flat(&flat).unwrap();
        let obs = random_obs(&config, 4);
        let (out, cache) = net.forward(&obs, &RecurrentState::zeroed(&config)).unwrap();
        assert_eq!(out.log_std, [LOG_STD_RANGE.0, LOG_STD_RANGE.1]);
        // Clamped parameters receive zero gradient.
        let grads = net.backward(cache, [0.0, 0.0], [1.0, 1.0], 0.0).unwrap();
        assert_eq!(grads[n - 2], 0.0);
        assert_eq!(grads[n - 1], 0.0);
    }

    #[test]
    fn orthogonal_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = orthogonal(&mut rng, vec![4, 10], 1.0);
        for r in 0..4 {
            for s in 0..4 {
                let dot: f64 = (0..10).map(|c| t.data()[r * 10 + c] * t.data()[s * 10 + c]).sum();
                let expect = if r == s { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10);
            }
        }
    }
}
