//! The CNN and LSTM multi-label classifiers.

pub mod encode;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{grad_check as check_gradients, Container, GradCheckReport, LstmWeights, Tape, Tensor, Var};
use encode::{ALPHABET_SIZE, VOCAB_SIZE};

/// Heights of the four CNN filter banks; every bank spans the full alphabet.
pub const BANK_HEIGHTS: [usize; 4] = [1, 2, 3, 5];

/// Parameter count of the reference CNN (bank width 256, 126 outputs).
pub const PAPER_CNN_PARAMS: usize = 209_022;

pub const PAPER_OUT_DIM: usize = 126;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cnn,
    Lstm,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub max_len: usize,
    pub filters_per_bank: usize,
    pub out_dim: usize,
    /// Require the reference parameter count.
    pub paper_exact: bool,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            max_len: 500,
            filters_per_bank: 256,
            out_dim: PAPER_OUT_DIM,
            paper_exact: false,
        }
    }
}

impl CnnConfig {
    pub fn param_count(&self) -> usize {
        let f = self.filters_per_bank;
        let banks: usize = BANK_HEIGHTS.iter().map(|h| h * ALPHABET_SIZE * f + f).sum();
        banks + BANK_HEIGHTS.len() * f * self.out_dim + self.out_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_len < *BANK_HEIGHTS.iter().max().unwrap() || self.filters_per_bank == 0 || self.out_dim == 0 {
            return Err(Error::Config(format!(
                "cnn needs max_len >= 5 and positive widths (max_len {}, filters {}, out {})",
                self.max_len, self.filters_per_bank, self.out_dim
            )));
        }
        if self.paper_exact && (self.out_dim != PAPER_OUT_DIM || self.param_count() != PAPER_CNN_PARAMS) {
            return Err(Error::Config(format!(
                "paper_exact cnn must have {PAPER_CNN_PARAMS} parameters; this config has {} (out_dim {})",
                self.param_count(),
                self.out_dim
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub max_len: usize,
    pub embed_dim: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    /// Window and stride of the max pool after the convolution.
    pub pool: usize,
    pub lstm_hidden: usize,
    pub fc1_dim: usize,
    pub out_dim: usize,
    pub dropout: f64,
    /// Run each sequence only over its own length instead of the padded width.
    pub masking: bool,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            max_len: 500,
            embed_dim: 128,
            conv_filters: 128,
            conv_kernel: 5,
            pool: 2,
            lstm_hidden: 256,
            fc1_dim: 512,
            out_dim: PAPER_OUT_DIM,
            dropout: 0.0,
            masking: false,
        }
    }
}

impl LstmConfig {
    pub fn param_count(&self) -> usize {
        let (e, c, h) = (self.embed_dim, self.conv_filters, self.lstm_hidden);
        VOCAB_SIZE * e + self.conv_kernel * e * c + c + 2 * (c * 4 * h + h * 4 * h + 4 * h) + 2 * h * self.fc1_dim + self.fc1_dim + self.fc1_dim * self.out_dim + self.out_dim
    }

    /// Shortest input the layer stack accepts.
    pub fn min_len(&self) -> usize {
        self.conv_kernel + self.pool - 1
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.embed_dim, self.conv_filters, self.conv_kernel, self.pool, self.lstm_hidden, self.fc1_dim, self.out_dim];
        if dims.contains(&0) || self.max_len < self.min_len() {
            return Err(Error::Config(format!("invalid lstm config {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Cnn(CnnConfig),
    Lstm(LstmConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Cnn(_) => ModelKind::Cnn,
            ModelConfig::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            ModelConfig::Cnn(c) => c.out_dim,
            ModelConfig::Lstm(c) => c.out_dim,
        }
    }

    pub fn set_out_dim(&mut self, d: usize) {
        match self {
            ModelConfig::Cnn(c) => c.out_dim = d,
            ModelConfig::Lstm(c) => c.out_dim = d,
        }
    }

    pub fn max_len(&self) -> usize {
        match self {
            ModelConfig::Cnn(c) => c.max_len,
            ModelConfig::Lstm(c) => c.max_len,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelConfig::Cnn(c) => c.param_count(),
            ModelConfig::Lstm(c) => c.param_count(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Cnn(c) => c.validate(),
            ModelConfig::Lstm(c) => c.validate(),
        }
    }

    /// Parameter names, shapes and init bounds in storage order.
    fn layout(&self) -> Vec<ParamSpec> {
        let mut v = Vec::new();
        match self {
            ModelConfig::Cnn(c) => {
                let f = c.filters_per_bank;
                for h in BANK_HEIGHTS {
                    v.push(ParamSpec::weight(format!("conv{h}.kernel"), vec![h, ALPHABET_SIZE, f], h * ALPHABET_SIZE));
                    v.push(ParamSpec::zero(format!("conv{h}.bias"), vec![f]));
                }
                v.push(ParamSpec::weight("dense.weight".into(), vec![BANK_HEIGHTS.len() * f, c.out_dim], BANK_HEIGHTS.len() * f));
                v.push(ParamSpec::zero("dense.bias".into(), vec![c.out_dim]));
            }
            ModelConfig::Lstm(c) => {
                let (e, ch, h) = (c.embed_dim, c.conv_filters, c.lstm_hidden);
                v.push(ParamSpec {
                    name: "embedding".into(),
                    shape: vec![VOCAB_SIZE, e],
                    init: Init::Embedding,
                });
                v.push(ParamSpec::weight("conv.kernel".into(), vec![c.conv_kernel, e, ch], c.conv_kernel * e));
                v.push(ParamSpec::zero("conv.bias".into(), vec![ch]));
                for dir in ["fwd", "bwd"] {
                    v.push(ParamSpec::weight(format!("lstm.{dir}.w_ih"), vec![ch, 4 * h], h));
                    v.push(ParamSpec::weight(format!("lstm.{dir}.w_hh"), vec![h, 4 * h], h));
                    v.push(ParamSpec {
                        name: format!("lstm.{dir}.bias"),
                        shape: vec![4 * h],
                        init: Init::ForgetBias(h),
                    });
                }
                v.push(ParamSpec::weight("fc1.weight".into(), vec![2 * h, c.fc1_dim], 2 * h));
                v.push(ParamSpec::zero("fc1.bias".into(), vec![c.fc1_dim]));
                v.push(ParamSpec::weight("fc2.weight".into(), vec![c.fc1_dim, c.out_dim], c.fc1_dim));
                v.push(ParamSpec::zero("fc2.bias".into(), vec![c.out_dim]));
            }
        }
        v
    }
}

enum Init {
    Uniform(f64),
    Zero,
    /// Zero except +1 on the forget-gate block (gate order i, f, g, o).
    ForgetBias(usize),
    /// ±0.05, padding row zero.
    Embedding,
}

struct ParamSpec {
    name: String,
    shape: Vec<usize>,
    init: Init,
}

impl ParamSpec {
    fn weight(name: String, shape: Vec<usize>, fan_in: usize) -> Self {
        ParamSpec {
            name,
            shape,
            init: Init::Uniform(1.0 / (fan_in as f64).sqrt()),
        }
    }

    fn zero(name: String, shape: Vec<usize>) -> Self {
        ParamSpec { name, shape, init: Init::Zero }
    }

    fn materialize(&self, seed: u64) -> Tensor {
        let mut rng = rng::stream(seed, &format!("init/{}", self.name));
        match self.init {
            Init::Uniform(b) => {
                let d = Uniform::new_inclusive(-b, b);
                Tensor::from_fn(&self.shape, |_| d.sample(&mut rng))
            }
            Init::Zero => Tensor::zeros(&self.shape),
            Init::ForgetBias(h) => Tensor::from_fn(&self.shape, |i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }),
            Init::Embedding => {
                let width = self.shape[1];
                Tensor::from_fn(&self.shape, |i| if i < width { 0.0 } else { rng.gen_range(-0.05..=0.05) })
            }
        }
    }
}

/// One sequence in the form its model consumes.
#[derive(Clone, Debug, PartialEq)]
pub enum Encoded {
    /// `max_len × 28` one-hot image (CNN).
    OneHot(Tensor),
    /// Padded token ids and the unpadded length (LSTM).
    Tokens { ids: Vec<usize>, len: usize },
}

/// One row of the `inspect` table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerInfo {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl Model {
    pub fn build(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let layout = config.layout();
        let names = layout.iter().map(|s| s.name.clone()).collect();
        let values = layout.iter().map(|s| s.materialize(seed)).collect();
        Ok(Model { config, names, values })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind()
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.values
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn param_tensors(&self) -> Vec<Tensor> {
        self.values.clone()
    }

    pub fn set_params(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Checkpoint(format!("expected {} parameter arrays, got {}", self.values.len(), values.len())));
        }
        for ((name, old), new) in self.names.iter().zip(self.values.iter_mut()).zip(values) {
            if old.shape() != new.shape() {
                return Err(Error::Checkpoint(format!("parameter {name}: shape {:?} != {:?}", new.shape(), old.shape())));
            }
            *old = new;
        }
        Ok(())
    }

    pub fn encode(&self, residues: &str) -> Result<Encoded> {
        match &self.config {
            ModelConfig::Cnn(c) => Ok(Encoded::OneHot(encode::one_hot(residues, c.max_len)?)),
            ModelConfig::Lstm(c) => Ok(Encoded::Tokens {
                ids: encode::tokenize_pad(residues, c.max_len)?,
                len: residues.len().min(c.max_len),
            }),
        }
    }

    /// Registers every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Logits `B × out_dim`; each row depends only on its own input.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], batch: &[Encoded]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("forward on an empty batch"));
        }
        let rows = batch.iter().map(|x| self.forward_one(tape, params, x, None)).collect::<Result<Vec<_>>>()?;
        if rows.len() == 1 {
            Ok(rows[0])
        } else {
            tape.concat(&rows, 0)
        }
    }

    /// Forward pass of one sequence that also records named intermediates.
    /// The last tap, `features`, is the input of [`Model::head`].
    pub fn forward_traced(&self, tape: &mut Tape, params: &[Var], input: &Encoded) -> Result<(Var, Vec<(String, Var)>)> {
        let mut taps = Vec::new();
        let out = self.forward_one(tape, params, input, Some(&mut taps))?;
        Ok((out, taps))
    }

    /// Evaluation-mode logits for a batch.
    pub fn predict_logits(&self, batch: &[Encoded]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = self.forward(&mut tape, &vars, batch)?;
        Ok(tape.value(out).clone())
    }

    fn forward_one(&self, tape: &mut Tape, p: &[Var], input: &Encoded, mut taps: Option<&mut Vec<(String, Var)>>) -> Result<Var> {
        if p.len() != self.values.len() {
            return Err(Error::Internal(format!("{} parameter handles for {} parameters", p.len(), self.values.len())));
        }
        let tracing = taps.is_some();
        let mut tap = |name: &str, v: Var| {
            if let Some(t) = taps.as_deref_mut() {
                t.push((name.to_string(), v));
            }
        };
        let features = match (&self.config, input) {
            (ModelConfig::Cnn(c), Encoded::OneHot(x)) => {
                if x.shape() != [c.max_len, ALPHABET_SIZE] {
                    return Err(Error::EncodingMismatch(format!("cnn expects {}x{} input, got {:?}", c.max_len, ALPHABET_SIZE, x.shape())));
                }
                let x = tape.constant(x.clone());
                tap("input", x);
                let f = c.filters_per_bank;
                let mut pooled = Vec::with_capacity(BANK_HEIGHTS.len());
                for (b, h) in BANK_HEIGHTS.iter().enumerate() {
                    let (kernel, bias) = (p[2 * b], p[2 * b + 1]);
                    let conv = tape.conv2d_valid(x, kernel)?;
                    let positions = c.max_len + 1 - h;
                    let conv = tape.reshape(conv, vec![positions, f])?;
                    if tracing {
                        let pre = tape.bias_add(conv, bias)?;
                        tap(&format!("conv{h}"), pre);
                        let act = tape.elu(pre, 1.0)?;
                        tap(&format!("elu{h}"), act);
                    }
                    // Bias shift and ELU are strictly increasing, so pooling
                    // first yields the same values and gradients.
                    let m = tape.global_maxpool(conv)?;
                    let m = tape.reshape(m, vec![1, f])?;
                    let m = tape.bias_add(m, bias)?;
                    let m = tape.elu(m, 1.0)?;
                    let m = tape.reshape(m, vec![f])?;
                    tap(&format!("pool{h}"), m);
                    pooled.push(m);
                }
                tape.concat(&pooled, 0)?
            }
            (ModelConfig::Lstm(c), Encoded::Tokens { ids, len }) => {
                if ids.len() != c.max_len {
                    return Err(Error::EncodingMismatch(format!("lstm expects {} token ids, got {}", c.max_len, ids.len())));
                }
                let used = if c.masking { (*len).clamp(c.min_len(), c.max_len) } else { c.max_len };
                let emb = tape.embedding(p[0], &ids[..used])?;
                tap("embedding", emb);
                let conv = tape.conv1d_valid(emb, p[1])?;
                let conv = tape.bias_add(conv, p[2])?;
                let conv = tape.relu(conv)?;
                tap("conv", conv);
                let pooled = tape.maxpool1d(conv, c.pool, c.pool)?;
                tap("pool", pooled);
                let fwd = LstmWeights {
                    w_ih: p[3],
                    w_hh: p[4],
                    bias: p[5],
                };
                let bwd = LstmWeights {
                    w_ih: p[6],
                    w_hh: p[7],
                    bias: p[8],
                };
                let seq = tape.bidirectional_scan(pooled, &fwd, &bwd)?;
                tap("bilstm", seq);
                tape.global_maxpool(seq)?
            }
            (cfg, _) => {
                return Err(Error::EncodingMismatch(format!("input encoding does not match a {} model", cfg.kind())));
            }
        };
        tap("features", features);
        let logits = self.head(tape, p, features)?;
        tap("logits", logits);
        Ok(logits)
    }

    /// Layers after the pooled feature vector: `features` (1-D) → `1 × out_dim`.
    pub fn head(&self, tape: &mut Tape, p: &[Var], features: Var) -> Result<Var> {
        let width = tape.value(features).len();
        let x = tape.reshape(features, vec![1, width])?;
        let n = p.len();
        match &self.config {
            ModelConfig::Cnn(_) => {
                let y = tape.matmul(x, p[n - 2])?;
                tape.bias_add(y, p[n - 1])
            }
            ModelConfig::Lstm(c) => {
                let y = tape.matmul(x, p[n - 4])?;
                let y = tape.bias_add(y, p[n - 3])?;
                let y = tape.relu(y)?;
                let y = tape.dropout(y, c.dropout)?;
                let y = tape.matmul(y, p[n - 2])?;
                tape.bias_add(y, p[n - 1])
            }
        }
    }

    /// Per-layer output shapes (one sequence) and parameter counts.
    pub fn layers(&self) -> Vec<LayerInfo> {
        let count = |prefix: &str| -> usize { self.names.iter().zip(&self.values).filter(|(n, _)| n.starts_with(prefix)).map(|(_, t)| t.len()).sum() };
        let row = |name: &str, output_shape: Vec<usize>, params: usize| LayerInfo {
            name: name.to_string(),
            output_shape,
            params,
        };
        let mut v = Vec::new();
        match &self.config {
            ModelConfig::Cnn(c) => {
                let f = c.filters_per_bank;
                v.push(row("input", vec![c.max_len, ALPHABET_SIZE], 0));
                for h in BANK_HEIGHTS {
                    v.push(row(&format!("conv2d {h}x{ALPHABET_SIZE}"), vec![c.max_len + 1 - h, 1, f], count(&format!("conv{h}."))));
                    v.push(row(&format!("elu {h}"), vec![c.max_len + 1 - h, 1, f], 0));
                    v.push(row(&format!("global_maxpool {h}"), vec![f], 0));
                }
                v.push(row("concat", vec![BANK_HEIGHTS.len() * f], 0));
                v.push(row("dense", vec![c.out_dim], count("dense.")));
            }
            ModelConfig::Lstm(c) => {
                let conv_len = c.max_len + 1 - c.conv_kernel;
                let pooled = (conv_len - c.pool) / c.pool + 1;
                v.push(row("input", vec![c.max_len], 0));
                v.push(row("embedding", vec![c.max_len, c.embed_dim], count("embedding")));
                v.push(row(&format!("conv1d k{} + relu", c.conv_kernel), vec![conv_len, c.conv_filters], count("conv.")));
                v.push(row(&format!("maxpool1d {}", c.pool), vec![pooled, c.conv_filters], 0));
                v.push(row("bidirectional lstm", vec![pooled, 2 * c.lstm_hidden], count("lstm.")));
                v.push(row("global_maxpool", vec![2 * c.lstm_hidden], 0));
                v.push(row("fc1 + relu", vec![c.fc1_dim], count("fc1.")));
                v.push(row("fc2", vec![c.out_dim], count("fc2.")));
            }
        }
        v
    }

    /// Checkpoint container; `extra` fields are merged into the header.
    pub fn to_container(&self, extra: serde_json::Value) -> Result<Container> {
        let mut header = serde_json::json!({
            "format": "repurpose-model",
            "model": self.config,
        });
        if let (Some(h), serde_json::Value::Object(e)) = (header.as_object_mut(), extra) {
            for (k, v) in e {
                h.insert(k, v);
            }
        }
        let mut c = Container::new(header);
        for (name, t) in self.names.iter().zip(&self.values) {
            c.push(name.clone(), t.clone());
        }
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Model> {
        if c.header.get("format").and_then(|f| f.as_str()) != Some("repurpose-model") {
            return Err(Error::Checkpoint("not a model checkpoint".into()));
        }
        let config: ModelConfig = serde_json::from_value(c.header.get("model").cloned().unwrap_or_default()).map_err(|e| Error::Checkpoint(format!("model config: {e}")))?;
        config.validate()?;
        let layout = config.layout();
        let (mut names, mut values) = (Vec::with_capacity(layout.len()), Vec::with_capacity(layout.len()));
        for spec in layout {
            let t = c.get(&spec.name).ok_or_else(|| Error::Checkpoint(format!("missing array {}", spec.name)))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::Checkpoint(format!("array {}: shape {:?}, expected {:?}", spec.name, t.shape(), spec.shape)));
            }
            names.push(spec.name);
            values.push(t.clone());
        }
        Ok(Model { config, names, values })
    }
}

/// Small configurations used by the whole-model gradient check.
pub fn toy_config(kind: ModelKind) -> ModelConfig {
    match kind {
        ModelKind::Cnn => ModelConfig::Cnn(CnnConfig {
            max_len: 12,
            filters_per_bank: 3,
            out_dim: 4,
            paper_exact: false,
        }),
        ModelKind::Lstm => ModelConfig::Lstm(LstmConfig {
            max_len: 16,
            embed_dim: 4,
            conv_filters: 4,
            conv_kernel: 3,
            pool: 2,
            lstm_hidden: 3,
            fc1_dim: 5,
            out_dim: 4,
            dropout: 0.0,
            masking: false,
        }),
    }
}

/// Central-difference check of every parameter gradient of a toy model on
/// a batch of two random sequences under the weighted BCE loss.
pub fn grad_check_model(kind: ModelKind, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let config = toy_config(kind);
    let mut model = Model::build(config.clone(), seed)?;
    let mut r = rng::stream(seed, "gradcheck/model");
    // Larger random weights keep pre-activations away from kinks.
    let perturbed: Vec<Tensor> = model
        .values
        .iter()
        .map(|t| Tensor::from_fn(t.shape(), |_| r.gen_range(-0.6..0.6)))
        .collect();
    model.set_params(perturbed)?;
    let len = config.max_len();
    let batch: Vec<Encoded> = (0..2)
        .map(|b| {
            let n = if b == 0 { len } else { len - 3 };
            let s: String = (0..n).map(|_| encode::symbol(r.gen_range(0..20)).unwrap()).collect();
            model.encode(&s)
        })
        .collect::<Result<_>>()?;
    let d = config.out_dim();
    let targets: Vec<f64> = (0..2 * d).map(|_| r.gen_range(0..2) as f64).collect();
    let pos: Vec<f64> = (0..d).map(|_| r.gen_range(0.5..3.0)).collect();
    let neg: Vec<f64> = (0..d).map(|_| r.gen_range(0.5..3.0)).collect();
    let inputs = model.param_tensors();
    let flags = vec![true; inputs.len()];
    check_gradients(
        &format!("model/{kind}"),
        &inputs,
        &flags,
        |tape, vars| {
            let logits = model.forward(tape, vars, &batch)?;
            tape.bce_with_logits_weighted(logits, &targets, &pos, &neg)
        },
        30,
        seed,
        tolerance,
    )
}
