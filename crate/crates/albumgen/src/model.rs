//! The two-tier unconditional sample-level RNN. A frame-level LSTM stack
//! with skip connections turns each frame of recent audio into per-sample
//! conditioning vectors; a sample-level predictor combines the last few
//! quantized samples with that conditioning and emits a distribution over
//! the next sample's quantization level.
//!
//! Training and evaluation run through [`ModelGraph`], which records every
//! op on a tape for reverse-mode differentiation. Generation uses
//! [`Inference`], a tape-free path over materialized effective weights;
//! `teacher-forced` equivalence between the two paths is covered by tests.

use crate::numeric::{NumericError, Rng, Tensor, Tape, Var};
use crate::quantizer::dequantize_linear;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub q_levels: u16,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_rnn_layers: usize,
    /// Samples per frame-tier step.
    pub frame_size: usize,
    pub sample_rate: u32,
    /// Samples per truncated-backpropagation window; must be a multiple of
    /// frame_size.
    pub tbptt_len: usize,
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            q_levels: 256,
            embed_dim: 256,
            hidden_dim: 1024,
            n_rnn_layers: 5,
            frame_size: 16,
            sample_rate: 16000,
            tbptt_len: 512,
            batch_size: 128,
        }
    }
}

impl ModelConfig {
    /// Small preset that trains in seconds on a CPU; used throughout the
    /// test suite.
    pub fn desk() -> Self {
        ModelConfig {
            q_levels: 256,
            embed_dim: 16,
            hidden_dim: 64,
            n_rnn_layers: 1,
            frame_size: 4,
            sample_rate: 16000,
            tbptt_len: 128,
            batch_size: 8,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::InvalidConfig { reason });
        if self.q_levels < 2 {
            return bad(format!("q_levels must be >= 2, got {}", self.q_levels));
        }
        if self.embed_dim == 0
            || self.hidden_dim == 0
            || self.n_rnn_layers == 0
            || self.frame_size == 0
            || self.batch_size == 0
        {
            return bad("all dimensions must be positive".to_string());
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".to_string());
        }
        if self.tbptt_len == 0 || self.tbptt_len % self.frame_size != 0 {
            return bad(format!(
                "tbptt_len {} must be a positive multiple of frame_size {}",
                self.tbptt_len, self.frame_size
            ));
        }
        Ok(())
    }

    /// Canonical `key = value` text; identical configs serialize to
    /// identical bytes, which is what checkpoint compatibility compares.
    pub fn canonical_text(&self) -> String {
        format!(
            "batch_size = {}\nembed_dim = {}\nframe_size = {}\nhidden_dim = {}\n\
             n_rnn_layers = {}\nq_levels = {}\nsample_rate = {}\ntbptt_len = {}\n",
            self.batch_size,
            self.embed_dim,
            self.frame_size,
            self.hidden_dim,
            self.n_rnn_layers,
            self.q_levels,
            self.sample_rate,
            self.tbptt_len
        )
    }

    pub fn from_canonical_text(text: &str) -> Result<Self, ModelError> {
        let mut cfg = ModelConfig::default();
        let mut seen = 0;
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once(" = ").ok_or_else(|| ModelError::InvalidConfig {
                reason: format!("malformed config line {line:?}"),
            })?;
            let parse_err = |e: std::num::ParseIntError| ModelError::InvalidConfig {
                reason: format!("bad value for {key}: {e}"),
            };
            match key {
                "batch_size" => cfg.batch_size = value.parse().map_err(parse_err)?,
                "embed_dim" => cfg.embed_dim = value.parse().map_err(parse_err)?,
                "frame_size" => cfg.frame_size = value.parse().map_err(parse_err)?,
                "hidden_dim" => cfg.hidden_dim = value.parse().map_err(parse_err)?,
                "n_rnn_layers" => cfg.n_rnn_layers = value.parse().map_err(parse_err)?,
                "q_levels" => cfg.q_levels = value.parse().map_err(parse_err)?,
                "sample_rate" => cfg.sample_rate = value.parse().map_err(parse_err)?,
                "tbptt_len" => cfg.tbptt_len = value.parse().map_err(parse_err)?,
                other => {
                    return Err(ModelError::InvalidConfig {
                        reason: format!("unknown config key {other:?}"),
                    })
                }
            }
            seen += 1;
        }
        if seen != 8 {
            return Err(ModelError::InvalidConfig {
                reason: format!("expected 8 config keys, got {seen}"),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid model config: {reason}")]
    InvalidConfig { reason: String },
    #[error("window must be tbptt_len + frame_size = {expected} levels, got {got}")]
    WindowLength { expected: usize, got: usize },
    #[error("quantization level {level} out of range for {q} levels")]
    LevelOutOfRange { level: u16, q: u16 },
    #[error("recurrent state has batch {state}, input has batch {input}")]
    BatchMismatch { state: usize, input: usize },
    #[error("parameter {name} has shape {got:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

/// Weight-normalized matrix: direction rows v and per-row gains g. The
/// effective matrix is g[r] * v[r] / ||v[r]||.
#[derive(Clone, Debug, PartialEq)]
pub struct WnMatrix {
    pub v: Tensor,
    pub g: Tensor,
}

impl WnMatrix {
    /// Materialize the effective matrix outside any tape.
    pub fn effective(&self) -> Result<Tensor, ModelError> {
        let mut out = self.v.clone();
        for r in 0..out.rows() {
            let norm = self.v.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(ModelError::Numeric(NumericError::ZeroNormRow { row: r }));
            }
            let scale = self.g.data()[r] / norm;
            for x in out.row_mut(r) {
                *x *= scale;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlainLinear {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WnLinear {
    pub w: WnMatrix,
    pub b: Tensor,
}

/// One LSTM layer; gate order in the stacked matrices and bias is
/// [input, forget, output, candidate].
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub wx: WnMatrix,
    pub wh: WnMatrix,
    pub b: Tensor,
}

/// All learnable parameters of the two-tier model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub frame_in: PlainLinear,
    pub lstm: Vec<LstmLayer>,
    pub upsample: PlainLinear,
    pub embed: Tensor,
    pub pred1: WnLinear,
    pub pred2: WnLinear,
    pub pred3: WnLinear,
}

/// Named tensor shapes in canonical order; this list fixes the draw order at
/// init, the gradient/optimizer slot order, and the checkpoint layout.
pub fn tensor_spec(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let h = config.hidden_dim;
    let fs = config.frame_size;
    let e = config.embed_dim;
    let q = config.q_levels as usize;
    let mut spec = vec![
        ("frame_in.w".to_string(), vec![h, fs]),
        ("frame_in.b".to_string(), vec![h]),
    ];
    for l in 0..config.n_rnn_layers {
        spec.push((format!("lstm{l}.wx.v"), vec![4 * h, h]));
        spec.push((format!("lstm{l}.wx.g"), vec![4 * h]));
        spec.push((format!("lstm{l}.wh.v"), vec![4 * h, h]));
        spec.push((format!("lstm{l}.wh.g"), vec![4 * h]));
        spec.push((format!("lstm{l}.b"), vec![4 * h]));
    }
    spec.extend([
        ("upsample.w".to_string(), vec![fs * h, h]),
        ("upsample.b".to_string(), vec![fs * h]),
        ("embed".to_string(), vec![q, e]),
        ("pred1.v".to_string(), vec![h, fs * e]),
        ("pred1.g".to_string(), vec![h]),
        ("pred1.b".to_string(), vec![h]),
        ("pred2.v".to_string(), vec![h, h]),
        ("pred2.g".to_string(), vec![h]),
        ("pred2.b".to_string(), vec![h]),
        ("pred3.v".to_string(), vec![q, h]),
        ("pred3.g".to_string(), vec![q]),
        ("pred3.b".to_string(), vec![q]),
    ]);
    spec
}

/// Total learnable scalar count for a config.
pub fn param_count(config: &ModelConfig) -> usize {
    tensor_spec(config)
        .iter()
        .map(|(_, shape)| shape.iter().product::<usize>())
        .sum()
}

/// Draw a fresh model: matrices uniform in [-s, s] with s = 1/sqrt(fan_in)
/// (fan_in = column count), weight-norm gains set to the drawn row norms so
/// the effective matrix equals the draw, biases zero except the LSTM forget
/// gate which starts at 1.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelState, ModelError> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let h = config.hidden_dim;

    // Draw in canonical tensor order so the stream is reproducible.
    let frame_in = PlainLinear {
        w: draw_matrix(&mut rng, &[h, config.frame_size]),
        b: Tensor::zeros(&[h]),
    };
    let mut lstm = Vec::with_capacity(config.n_rnn_layers);
    for _ in 0..config.n_rnn_layers {
        let wx = draw_wn(&mut rng, &[4 * h, h]);
        let wh = draw_wn(&mut rng, &[4 * h, h]);
        let mut b = Tensor::zeros(&[4 * h]);
        for x in &mut b.data_mut()[h..2 * h] {
            *x = 1.0; // forget gate
        }
        lstm.push(LstmLayer { wx, wh, b });
    }
    let upsample = PlainLinear {
        w: draw_matrix(&mut rng, &[config.frame_size * h, h]),
        b: Tensor::zeros(&[config.frame_size * h]),
    };
    let embed = draw_matrix(&mut rng, &[config.q_levels as usize, config.embed_dim]);
    let pred1 = WnLinear {
        w: draw_wn(&mut rng, &[h, config.frame_size * config.embed_dim]),
        b: Tensor::zeros(&[h]),
    };
    let pred2 = WnLinear {
        w: draw_wn(&mut rng, &[h, h]),
        b: Tensor::zeros(&[h]),
    };
    let pred3 = WnLinear {
        w: draw_wn(&mut rng, &[config.q_levels as usize, h]),
        b: Tensor::zeros(&[config.q_levels as usize]),
    };

    Ok(ModelState {
        config: config.clone(),
        frame_in,
        lstm,
        upsample,
        embed,
        pred1,
        pred2,
        pred3,
    })
}

fn draw_matrix(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let fan_in = shape[1];
    let s = 1.0 / (fan_in as f64).sqrt();
    let data = (0..shape[0] * shape[1]).map(|_| rng.uniform(-s, s)).collect();
    Tensor::from_vec(shape, data).expect("shape product matches draw count")
}

fn draw_wn(rng: &mut Rng, shape: &[usize]) -> WnMatrix {
    let v = draw_matrix(rng, shape);
    let norms: Vec<f64> = (0..v.rows())
        .map(|r| v.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let g = Tensor::from_vec(&[v.rows()], norms).expect("one norm per row");
    WnMatrix { v, g }
}

impl ModelState {
    /// Tensors in canonical order, names matching [`tensor_spec`].
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("frame_in.w".into(), &self.frame_in.w),
            ("frame_in.b".into(), &self.frame_in.b),
        ];
        for (l, layer) in self.lstm.iter().enumerate() {
            out.push((format!("lstm{l}.wx.v"), &layer.wx.v));
            out.push((format!("lstm{l}.wx.g"), &layer.wx.g));
            out.push((format!("lstm{l}.wh.v"), &layer.wh.v));
            out.push((format!("lstm{l}.wh.g"), &layer.wh.g));
            out.push((format!("lstm{l}.b"), &layer.b));
        }
        out.extend([
            ("upsample.w".to_string(), &self.upsample.w),
            ("upsample.b".to_string(), &self.upsample.b),
            ("embed".to_string(), &self.embed),
            ("pred1.v".to_string(), &self.pred1.w.v),
            ("pred1.g".to_string(), &self.pred1.w.g),
            ("pred1.b".to_string(), &self.pred1.b),
            ("pred2.v".to_string(), &self.pred2.w.v),
            ("pred2.g".to_string(), &self.pred2.w.g),
            ("pred2.b".to_string(), &self.pred2.b),
            ("pred3.v".to_string(), &self.pred3.w.v),
            ("pred3.g".to_string(), &self.pred3.w.g),
            ("pred3.b".to_string(), &self.pred3.b),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![&mut self.frame_in.w, &mut self.frame_in.b];
        for layer in &mut self.lstm {
            out.push(&mut layer.wx.v);
            out.push(&mut layer.wx.g);
            out.push(&mut layer.wh.v);
            out.push(&mut layer.wh.g);
            out.push(&mut layer.b);
        }
        out.extend([
            &mut self.upsample.w,
            &mut self.upsample.b,
            &mut self.embed,
            &mut self.pred1.w.v,
            &mut self.pred1.w.g,
            &mut self.pred1.b,
            &mut self.pred2.w.v,
            &mut self.pred2.w.g,
            &mut self.pred2.b,
            &mut self.pred3.w.v,
            &mut self.pred3.w.g,
            &mut self.pred3.b,
        ]);
        out
    }

    /// Rebuild a model from named tensors in canonical order (checkpoint
    /// load path). Shapes and names are checked against the config.
    pub fn from_tensors(
        config: ModelConfig,
        tensors: Vec<(String, Tensor)>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let spec = tensor_spec(&config);
        if tensors.len() != spec.len() {
            return Err(ModelError::InvalidConfig {
                reason: format!("expected {} tensors, got {}", spec.len(), tensors.len()),
            });
        }
        for ((name, tensor), (want_name, want_shape)) in tensors.iter().zip(&spec) {
            if name != want_name || tensor.shape() != want_shape.as_slice() {
                return Err(ModelError::TensorShape {
                    name: name.clone(),
                    expected: want_shape.clone(),
                    got: tensor.shape().to_vec(),
                });
            }
        }
        let mut model = init_model(&config, 0)?;
        for (slot, (_, tensor)) in model.tensors_mut().into_iter().zip(tensors) {
            *slot = tensor;
        }
        Ok(model)
    }

    pub fn graph(&self) -> Result<ModelGraph<'_>, ModelError> {
        ModelGraph::new(self)
    }

    pub fn inference(&self) -> Result<Inference, ModelError> {
        Inference::new(self)
    }
}

/// Per-layer hidden and cell activations, one row per batch lane.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<Tensor>,
    pub c: Vec<Tensor>,
}

impl RecurrentState {
    pub fn zeros(config: &ModelConfig, batch: usize) -> Self {
        let shape = [batch, config.hidden_dim];
        RecurrentState {
            h: (0..config.n_rnn_layers).map(|_| Tensor::zeros(&shape)).collect(),
            c: (0..config.n_rnn_layers).map(|_| Tensor::zeros(&shape)).collect(),
        }
    }

    /// Single-lane state with every entry drawn i.i.d. gaussian(0, sigma²),
    /// layer by layer, h before c.
    pub fn randomized(config: &ModelConfig, sigma: f64, rng: &mut Rng) -> Self {
        let n = config.hidden_dim;
        let draw = |rng: &mut Rng| {
            let data = (0..n).map(|_| sigma * rng.gaussian()).collect();
            Tensor::from_vec(&[1, n], data).expect("hidden_dim values per row")
        };
        let mut h = Vec::with_capacity(config.n_rnn_layers);
        let mut c = Vec::with_capacity(config.n_rnn_layers);
        for _ in 0..config.n_rnn_layers {
            h.push(draw(rng));
            c.push(draw(rng));
        }
        RecurrentState { h, c }
    }

    pub fn batch(&self) -> usize {
        self.h[0].rows()
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(&self.c).all(Tensor::all_finite)
    }
}

struct WnVars {
    v: Var,
    g: Var,
    eff: Var,
}

struct LstmVars {
    wx: WnVars,
    wh: WnVars,
    b: Var,
}

struct ParamVars {
    frame_in_w: Var,
    frame_in_b: Var,
    lstm: Vec<LstmVars>,
    upsample_w: Var,
    upsample_b: Var,
    embed: Var,
    pred: [(WnVars, Var); 3],
}

/// Output of a teacher-forced window pass: logits row-major by position then
/// batch lane, plus the state to carry into the next window.
pub struct WindowOutput {
    pub logits: Var,
    pub state_out: RecurrentState,
}

/// One forward/backward episode over a tape. Parameters are copied in once
/// at construction; gradients come back in canonical tensor order.
pub struct ModelGraph<'m> {
    pub tape: Tape,
    model: &'m ModelState,
    params: ParamVars,
    /// Pre-activation inputs of every relu in creation order; lets callers
    /// fingerprint the active linear region (see `relu_pattern_token`).
    relu_inputs: Vec<Var>,
}

impl<'m> ModelGraph<'m> {
    fn new(model: &'m ModelState) -> Result<Self, ModelError> {
        let mut tape = Tape::new();
        let wn = |tape: &mut Tape, m: &WnMatrix| -> Result<WnVars, ModelError> {
            let v = tape.leaf(m.v.clone());
            let g = tape.leaf(m.g.clone());
            let eff = tape.weight_norm(v, g)?;
            Ok(WnVars { v, g, eff })
        };

        let frame_in_w = tape.leaf(model.frame_in.w.clone());
        let frame_in_b = tape.leaf(model.frame_in.b.clone());
        let mut lstm = Vec::with_capacity(model.lstm.len());
        for layer in &model.lstm {
            lstm.push(LstmVars {
                wx: wn(&mut tape, &layer.wx)?,
                wh: wn(&mut tape, &layer.wh)?,
                b: tape.leaf(layer.b.clone()),
            });
        }
        let upsample_w = tape.leaf(model.upsample.w.clone());
        let upsample_b = tape.leaf(model.upsample.b.clone());
        let embed = tape.leaf(model.embed.clone());
        let pred = [
            (wn(&mut tape, &model.pred1.w)?, tape.leaf(model.pred1.b.clone())),
            (wn(&mut tape, &model.pred2.w)?, tape.leaf(model.pred2.b.clone())),
            (wn(&mut tape, &model.pred3.w)?, tape.leaf(model.pred3.b.clone())),
        ];

        Ok(ModelGraph {
            tape,
            model,
            params: ParamVars {
                frame_in_w,
                frame_in_b,
                lstm,
                upsample_w,
                upsample_b,
                embed,
                pred,
            },
            relu_inputs: Vec::new(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    fn linear_nt(&mut self, x: Var, w: Var, b: Var) -> Result<Var, ModelError> {
        let prod = self.tape.matmul_nt(x, w)?;
        Ok(self.tape.add_row_broadcast(prod, b)?)
    }

    /// One LSTM step: gates [i,f,o,g] from x·Wxᵀ + h·Whᵀ + b, then
    /// c' = f⊙c + i⊙g and h' = o⊙tanh(c').
    pub fn lstm_cell(
        &mut self,
        layer: usize,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var), ModelError> {
        let hd = self.model.config.hidden_dim;
        let lv = &self.params.lstm[layer];
        let (wx, wh, b) = (lv.wx.eff, lv.wh.eff, lv.b);
        let from_x = self.tape.matmul_nt(x, wx)?;
        let from_h = self.tape.matmul_nt(h, wh)?;
        let sum = self.tape.add(from_x, from_h)?;
        let pre = self.tape.add_row_broadcast(sum, b)?;

        let i_pre = self.tape.slice_cols(pre, 0, hd)?;
        let f_pre = self.tape.slice_cols(pre, hd, hd)?;
        let o_pre = self.tape.slice_cols(pre, 2 * hd, hd)?;
        let g_pre = self.tape.slice_cols(pre, 3 * hd, hd)?;
        let i = self.tape.sigmoid(i_pre);
        let f = self.tape.sigmoid(f_pre);
        let o = self.tape.sigmoid(o_pre);
        let g = self.tape.tanh(g_pre);

        let fc = self.tape.mul(f, c)?;
        let ig = self.tape.mul(i, g)?;
        let c_next = self.tape.add(fc, ig)?;
        let c_act = self.tape.tanh(c_next);
        let h_next = self.tape.mul(o, c_act)?;
        Ok((h_next, c_next))
    }

    /// Run the frame tier over consecutive frames. Each frame is projected
    /// to hidden size, passed through the LSTM stack, and the SUM of all
    /// layer outputs (skip connections) is upsampled into frame_size
    /// conditioning vectors for the sample slots of the NEXT frame.
    ///
    /// `frames` are [batch × frame_size] tensors of dequantized amplitudes.
    /// Returns one group of frame_size conditioning vars per input frame,
    /// plus the carried-out recurrent state.
    pub fn frame_tier_forward(
        &mut self,
        frames: &[Tensor],
        state_in: &RecurrentState,
    ) -> Result<(Vec<Vec<Var>>, RecurrentState), ModelError> {
        let cfg = &self.model.config;
        let fs = cfg.frame_size;
        let hd = cfg.hidden_dim;
        let batch = state_in.batch();
        for f in frames {
            if f.shape() != [batch, fs] {
                return Err(ModelError::BatchMismatch { state: batch, input: f.rows() });
            }
        }

        let mut hs: Vec<Var> = state_in.h.iter().map(|t| self.tape.leaf(t.clone())).collect();
        let mut cs: Vec<Var> = state_in.c.iter().map(|t| self.tape.leaf(t.clone())).collect();

        let mut conditioning = Vec::with_capacity(frames.len());
        for frame in frames {
            let x = self.tape.leaf(frame.clone());
            let projected = self.linear_nt(x, self.params.frame_in_w, self.params.frame_in_b)?;
            let mut layer_input = projected;
            let mut tier_sum: Option<Var> = None;
            for l in 0..cfg.n_rnn_layers {
                let (h_next, c_next) = self.lstm_cell(l, layer_input, hs[l], cs[l])?;
                hs[l] = h_next;
                cs[l] = c_next;
                tier_sum = Some(match tier_sum {
                    None => h_next,
                    Some(acc) => self.tape.add(acc, h_next)?,
                });
                layer_input = h_next;
            }
            let tier_out = tier_sum.expect("n_rnn_layers >= 1");
            let up = self.linear_nt(tier_out, self.params.upsample_w, self.params.upsample_b)?;
            let slots = (0..fs)
                .map(|s| self.tape.slice_cols(up, s * hd, hd))
                .collect::<Result<Vec<_>, _>>()?;
            conditioning.push(slots);
        }

        let state_out = RecurrentState {
            h: hs.iter().map(|&v| self.tape.value(v).clone()).collect(),
            c: cs.iter().map(|&v| self.tape.value(v).clone()).collect(),
        };
        Ok((conditioning, state_out))
    }

    /// Sample-tier logits for a batch of prediction slots. `prev_levels`
    /// holds frame_size recent levels per output row, flattened row-major;
    /// `conditioning` is one hidden-size vector per row.
    pub fn sample_tier_logits(
        &mut self,
        prev_levels: &[u16],
        conditioning: Var,
    ) -> Result<Var, ModelError> {
        let cfg = &self.model.config;
        let fs = cfg.frame_size;
        if let Some(&bad) = prev_levels.iter().find(|&&l| l >= cfg.q_levels) {
            return Err(ModelError::LevelOutOfRange { level: bad, q: cfg.q_levels });
        }
        let indices: Vec<usize> = prev_levels.iter().map(|&l| l as usize).collect();
        let emb = self.tape.gather_concat(self.params.embed, &indices, fs)?;
        let (p1, b1) = (&self.params.pred[0].0.eff, self.params.pred[0].1);
        let (p2, b2) = (&self.params.pred[1].0.eff, self.params.pred[1].1);
        let (p3, b3) = (&self.params.pred[2].0.eff, self.params.pred[2].1);
        let (p1, p2, p3) = (*p1, *p2, *p3);

        let x1 = self.linear_nt(emb, p1, b1)?;
        let x1 = self.tape.add(x1, conditioning)?;
        self.relu_inputs.push(x1);
        let a1 = self.tape.relu(x1);
        let x2 = self.linear_nt(a1, p2, b2)?;
        self.relu_inputs.push(x2);
        let a2 = self.tape.relu(x2);
        Ok(self.linear_nt(a2, p3, b3)?)
    }

    /// Hash of the sign pattern of every relu input seen so far. Two forward
    /// passes in the same linear region share the token; a flipped
    /// activation changes it. Used to validate finite-difference probes.
    pub fn relu_pattern_token(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &v in &self.relu_inputs {
            for &x in self.tape.value(v).data() {
                h ^= u64::from(x > 0.0);
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        h
    }

    /// Teacher-forced pass over one truncated-backpropagation window per
    /// batch lane. Each window carries frame_size context levels in front;
    /// logits row p·batch + b predict windows[b][frame_size + p].
    pub fn forward_window(
        &mut self,
        windows: &[Vec<u16>],
        state_in: &RecurrentState,
    ) -> Result<WindowOutput, ModelError> {
        let cfg = self.model.config.clone();
        let fs = cfg.frame_size;
        let t_len = cfg.tbptt_len;
        let expected = t_len + fs;
        let batch = windows.len();
        if batch == 0 || state_in.batch() != batch {
            return Err(ModelError::BatchMismatch {
                state: state_in.batch(),
                input: batch,
            });
        }
        for w in windows {
            if w.len() != expected {
                return Err(ModelError::WindowLength { expected, got: w.len() });
            }
            if let Some(&bad) = w.iter().find(|&&l| l >= cfg.q_levels) {
                return Err(ModelError::LevelOutOfRange { level: bad, q: cfg.q_levels });
            }
        }

        // Frame tier consumes the first tbptt_len/fs frames; the trailing
        // context frame belongs to the next window.
        let n_frames = t_len / fs;
        let frames: Vec<Tensor> = (0..n_frames)
            .map(|j| {
                let mut data = Vec::with_capacity(batch * fs);
                for w in windows {
                    for s in 0..fs {
                        data.push(
                            dequantize_linear(w[j * fs + s], cfg.q_levels)
                                .expect("levels validated above"),
                        );
                    }
                }
                Tensor::from_vec(&[batch, fs], data).expect("batch*fs values")
            })
            .collect();
        let (conditioning, state_out) = self.frame_tier_forward(&frames, state_in)?;

        // One conditioning row per (position, lane), position-major.
        let cond_parts: Vec<Var> = (0..t_len).map(|p| conditioning[p / fs][p % fs]).collect();
        let cond_rows = self.tape.concat_rows(&cond_parts)?;

        let mut prev_levels = Vec::with_capacity(t_len * batch * fs);
        for p in 0..t_len {
            for w in windows {
                prev_levels.extend_from_slice(&w[p..p + fs]);
            }
        }
        let logits = self.sample_tier_logits(&prev_levels, cond_rows)?;
        Ok(WindowOutput { logits, state_out })
    }

    /// Targets aligned with [`forward_window`] logit rows.
    pub fn window_targets(&self, windows: &[Vec<u16>]) -> Vec<usize> {
        let fs = self.model.config.frame_size;
        let t_len = self.model.config.tbptt_len;
        let mut targets = Vec::with_capacity(t_len * windows.len());
        for p in 0..t_len {
            for w in windows {
                targets.push(w[fs + p] as usize);
            }
        }
        targets
    }

    /// Mean cross-entropy (nats) of the window logits against the window's
    /// own next-sample targets.
    pub fn window_loss(&mut self, logits: Var, windows: &[Vec<u16>]) -> Result<Var, ModelError> {
        let targets = self.window_targets(windows);
        Ok(self.tape.softmax_cross_entropy(logits, &targets)?)
    }

    /// Reverse pass, then gradients in canonical tensor order. Tensors
    /// untouched by the loss come back as zeros.
    pub fn backward(&mut self, loss: Var) -> Result<Vec<Tensor>, ModelError> {
        self.tape.backward(loss)?;
        let vars = self.param_vars();
        let mut grads = Vec::with_capacity(vars.len());
        for v in vars {
            let shape = self.tape.value(v).shape().to_vec();
            grads.push(
                self.tape
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(&shape)),
            );
        }
        Ok(grads)
    }

    fn param_vars(&self) -> Vec<Var> {
        let p = &self.params;
        let mut vars = vec![p.frame_in_w, p.frame_in_b];
        for l in &p.lstm {
            vars.extend([l.wx.v, l.wx.g, l.wh.v, l.wh.g, l.b]);
        }
        vars.extend([p.upsample_w, p.upsample_b, p.embed]);
        for (wn, b) in &p.pred {
            vars.extend([wn.v, wn.g, *b]);
        }
        vars
    }
}

/// Tape-free forward path over materialized effective weights; used for
/// autoregressive generation where no gradients are needed.
pub struct Inference {
    config: ModelConfig,
    frame_in: PlainLinear,
    lstm: Vec<(Tensor, Tensor, Tensor)>, // (wx_eff, wh_eff, b)
    upsample: PlainLinear,
    embed: Tensor,
    pred: [(Tensor, Tensor); 3], // (w_eff, b)
}

impl Inference {
    fn new(model: &ModelState) -> Result<Self, ModelError> {
        Ok(Inference {
            config: model.config.clone(),
            frame_in: model.frame_in.clone(),
            lstm: model
                .lstm
                .iter()
                .map(|l| Ok((l.wx.effective()?, l.wh.effective()?, l.b.clone())))
                .collect::<Result<_, ModelError>>()?,
            upsample: model.upsample.clone(),
            embed: model.embed.clone(),
            pred: [
                (model.pred1.w.effective()?, model.pred1.b.clone()),
                (model.pred2.w.effective()?, model.pred2.b.clone()),
                (model.pred3.w.effective()?, model.pred3.b.clone()),
            ],
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Advance the frame tier one frame (single lane) and return the
    /// frame_size conditioning vectors for the next frame's sample slots.
    pub fn frame_step(
        &self,
        state: &mut RecurrentState,
        frame: &[f64],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        let cfg = &self.config;
        let hd = cfg.hidden_dim;
        if frame.len() != cfg.frame_size || state.batch() != 1 {
            return Err(ModelError::BatchMismatch { state: state.batch(), input: 1 });
        }
        let mut layer_input = matvec(&self.frame_in.w, frame, Some(self.frame_in.b.data()));
        let mut tier_sum = vec![0.0; hd];
        for (l, (wx, wh, b)) in self.lstm.iter().enumerate() {
            let mut pre = matvec(wx, &layer_input, Some(b.data()));
            let from_h = matvec(wh, state.h[l].data(), None);
            for (p, f) in pre.iter_mut().zip(&from_h) {
                *p += f;
            }
            let c = state.c[l].data_mut();
            let h = state.h[l].data_mut();
            for j in 0..hd {
                let i_g = sigmoid(pre[j]);
                let f_g = sigmoid(pre[hd + j]);
                let o_g = sigmoid(pre[2 * hd + j]);
                let g_g = pre[3 * hd + j].tanh();
                c[j] = f_g * c[j] + i_g * g_g;
                h[j] = o_g * c[j].tanh();
            }
            for (acc, hj) in tier_sum.iter_mut().zip(h.iter()) {
                *acc += hj;
            }
            layer_input = h.to_vec();
        }
        let up = matvec(&self.upsample.w, &tier_sum, Some(self.upsample.b.data()));
        Ok((0..cfg.frame_size)
            .map(|s| up[s * hd..(s + 1) * hd].to_vec())
            .collect())
    }

    /// Sample-tier logits for one prediction slot.
    pub fn sample_logits(
        &self,
        prev_levels: &[u16],
        conditioning: &[f64],
    ) -> Result<Vec<f64>, ModelError> {
        let cfg = &self.config;
        if prev_levels.len() != cfg.frame_size || conditioning.len() != cfg.hidden_dim {
            return Err(ModelError::BatchMismatch { state: 1, input: prev_levels.len() });
        }
        if let Some(&bad) = prev_levels.iter().find(|&&l| l >= cfg.q_levels) {
            return Err(ModelError::LevelOutOfRange { level: bad, q: cfg.q_levels });
        }
        let e = cfg.embed_dim;
        let mut emb = Vec::with_capacity(cfg.frame_size * e);
        for &l in prev_levels {
            emb.extend_from_slice(self.embed.row(l as usize));
        }
        let mut x1 = matvec(&self.pred[0].0, &emb, Some(self.pred[0].1.data()));
        for (x, c) in x1.iter_mut().zip(conditioning) {
            *x += c;
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let mut x2 = matvec(&self.pred[1].0, &x1, Some(self.pred[1].1.data()));
        for x in &mut x2 {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        Ok(matvec(&self.pred[2].0, &x2, Some(self.pred[2].1.data())))
    }
}

/// Per-row negative log-likelihoods of targets under row-wise softmax,
/// computed outside the tape.
fn row_nlls(logits: &Tensor, targets: &[usize]) -> Vec<f64> {
    targets
        .iter()
        .enumerate()
        .map(|(r, &t)| {
            let row = logits.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            lse - row[t]
        })
        .collect()
}

/// Verify the full two-tier backward pass against central finite
/// differences of the window loss, probing every parameter tensor.
///
/// Two refinements keep the finite-difference oracle valid at 64-bit:
/// probes whose ±eps evaluations land in different relu regions straddle a
/// kink (no derivative exists to estimate) and are redrawn, counted in the
/// report's `skipped`; and the loss difference is accumulated per logit row
/// before averaging, which resolves differences far below one ulp of the
/// total loss and keeps small-magnitude gradients comparable.
pub fn grad_check_window(
    model: &ModelState,
    windows: &[Vec<u16>],
    state: &RecurrentState,
    eps: f64,
    samples_per_tensor: usize,
    probe_seed: u64,
) -> Result<crate::numeric::GradCheckReport, ModelError> {
    let mut graph = model.graph()?;
    let out = graph.forward_window(windows, state)?;
    let targets = graph.window_targets(windows);
    let loss = graph.window_loss(out.logits, windows)?;
    let analytic = graph.backward(loss)?;

    let params: Vec<Tensor> = model.tensors().into_iter().map(|(_, t)| t.clone()).collect();
    let mut work = params.clone();
    let eval = |ps: &[Tensor]| -> (Vec<f64>, u64) {
        let mut m = model.clone();
        for (slot, t) in m.tensors_mut().into_iter().zip(ps) {
            *slot = t.clone();
        }
        let mut g = m.graph().expect("weight norm stays valid under eps perturbation");
        let o = g
            .forward_window(windows, state)
            .expect("same shapes as the analytic pass");
        let nlls = row_nlls(g.tape.value(o.logits), &targets);
        (nlls, g.relu_pattern_token())
    };

    let mut rng = Rng::new(probe_seed);
    let mut report = crate::numeric::GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
        worst: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let n_rows = targets.len() as f64;
    for (ti, p) in params.iter().enumerate() {
        let n = p.len();
        let want = samples_per_tensor.min(n);
        let exhaustive = n <= samples_per_tensor;
        let budget = if exhaustive { n } else { want * 8 };
        let mut done = 0;
        let mut attempt = 0;
        while done < want && attempt < budget {
            let ci = if exhaustive {
                attempt
            } else {
                (rng.next_u64() % n as u64) as usize
            };
            attempt += 1;

            let orig = work[ti].data()[ci];
            work[ti].data_mut()[ci] = orig + eps;
            let (up, region_up) = eval(&work);
            work[ti].data_mut()[ci] = orig - eps;
            let (down, region_down) = eval(&work);
            work[ti].data_mut()[ci] = orig;

            if region_up != region_down {
                report.skipped += 1;
                continue;
            }
            let delta: f64 = up.iter().zip(&down).map(|(u, d)| u - d).sum();
            let numeric = delta / n_rows / (2.0 * eps);
            let a = analytic[ti].data()[ci];
            let err = crate::numeric::relative_error(a, numeric);
            report.checked += 1;
            done += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (ti, ci);
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn matvec(w: &Tensor, x: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let rows = w.rows();
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let mut acc = 0.0;
        for (wv, xv) in w.row(r).iter().zip(x) {
            acc += wv * xv;
        }
        if let Some(b) = bias {
            acc += b[r];
        }
        out.push(acc);
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
