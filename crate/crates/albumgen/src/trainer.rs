//! Truncated-BPTT training over manifest chunks, with deterministic
//! scheduling, per-boundary checkpointing, preview-clip generation, and
//! teacher-forced evaluation.
//!
//! Chunks are independent training examples: the recurrent state is carried
//! across the consecutive windows inside one chunk batch and reset to zeros
//! between batches. The schedule (chunk order per epoch) is a pure function
//! of the seed, so a run can resume from any written checkpoint and land on
//! the exact parameter bytes of an uninterrupted run. Checkpoints are
//! written only at state-reset boundaries; the live recurrent state is
//! never persisted.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::dataset::{Corpus, DatasetManifest, Split};
use crate::generator::{generate, GenError, GenParams};
use crate::model::{
    init_model, tensor_spec, ModelConfig, ModelError, ModelState, RecurrentState,
};
use crate::numeric::{adam_step, AdamConfig, AdamState, NumericError, Rng, Tensor, derive_seed};
use crate::quantizer::quantize_clip;

const CHECKPOINT_MAGIC: &[u8; 8] = b"SRNNCKPT";
const CHECKPOINT_VERSION: u32 = 1;

// Stage tags for deriving decorrelated seed streams from the train seed.
const STAGE_EPOCH_SHUFFLE: u64 = 1;
const STAGE_PREVIEW: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    /// Stop after this many optimizer steps; training always runs whole
    /// chunk batches, so with multi-window chunks the stop lands on the
    /// next state-reset boundary at or after the cap.
    pub max_steps: Option<u64>,
    /// Write a checkpoint (and preview) every this many optimizer steps,
    /// deferred to the next state-reset boundary; 0 checkpoints at epoch
    /// ends only.
    pub steps_per_checkpoint: u64,
    /// Preview clip length generated at every checkpoint; 0 disables.
    pub preview_seconds: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            max_steps: None,
            steps_per_checkpoint: 0,
            preview_seconds: 10.0,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: u32,
    pub train_bits_per_sample: f64,
    pub valid_bits_per_sample: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    pub steps: u64,
    pub wall_seconds: f64,
    pub checkpoints: Vec<PathBuf>,
    pub previews: Vec<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("preview generation failed: {0}")]
    Preview(#[from] GenError),
    #[error("training input invalid: {reason}")]
    InvalidInput { reason: String },
    #[error("non-finite loss {value} at step {step}")]
    NonFiniteLoss { step: u64, value: f64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} is not a checkpoint (bad magic)")]
    NotACheckpoint { path: String },
    #[error("checkpoint {path} has unsupported version {version}")]
    UnsupportedVersion { path: String, version: u32 },
    #[error("checkpoint {path} is corrupt: {reason}")]
    CorruptCheckpoint { path: String, reason: String },
    #[error("config mismatch on resume: checkpoint has\n{checkpoint}\nrun has\n{run}")]
    ConfigMismatch { checkpoint: String, run: String },
}

/// Serialized training snapshot: everything needed to continue bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub tensors: Vec<(String, Tensor)>,
    pub adam: AdamState,
    pub rng_state: u64,
    /// Epoch the next window belongs to.
    pub epoch: u32,
    /// Completed optimizer steps.
    pub step: u64,
    /// Running loss sum (bits/sample per window) and window count of the
    /// in-progress epoch.
    pub loss_sum_bits: f64,
    pub loss_count: u64,
}

impl Checkpoint {
    pub fn model(&self) -> Result<ModelState, ModelError> {
        ModelState::from_tensors(self.config.clone(), self.tensors.clone())
    }
}

/// Quantized corpus: each source clip mapped once to levels.
pub fn quantize_corpus(corpus: &Corpus, q_levels: u16) -> BTreeMap<String, Vec<u16>> {
    corpus
        .sources()
        .map(|(name, clip)| (name.clone(), quantize_clip(clip, q_levels)))
        .collect()
}

struct Schedule {
    train_indices: Vec<usize>,
    windows_per_chunk: u64,
    batches_per_epoch: u64,
    batch_size: usize,
}

impl Schedule {
    fn steps_per_epoch(&self) -> u64 {
        self.batches_per_epoch * self.windows_per_chunk
    }

    /// Chunk order for an epoch; pure in (seed, epoch).
    fn epoch_order(&self, seed: u64, epoch: u32) -> Vec<usize> {
        let mut order = self.train_indices.clone();
        let shuffle_seed = derive_seed(derive_seed(seed, STAGE_EPOCH_SHUFFLE), u64::from(epoch));
        Rng::new(shuffle_seed).shuffle(&mut order);
        order
    }
}

fn build_schedule(
    manifest: &DatasetManifest,
    config: &ModelConfig,
    levels: &BTreeMap<String, Vec<u16>>,
) -> Result<Schedule, TrainError> {
    let invalid = |reason: String| TrainError::InvalidInput { reason };
    if manifest.records.is_empty() {
        return Err(invalid("manifest has no records".into()));
    }
    if manifest.sample_rate != config.sample_rate {
        return Err(invalid(format!(
            "manifest sample rate {} != model sample rate {}",
            manifest.sample_rate, config.sample_rate
        )));
    }
    let chunk_len = manifest.records[0].length;
    let min_len = config.tbptt_len + config.frame_size;
    if chunk_len < min_len {
        return Err(invalid(format!(
            "chunk length {chunk_len} is shorter than one window of {min_len}"
        )));
    }
    for r in &manifest.records {
        if r.length != chunk_len {
            return Err(invalid(format!(
                "chunk lengths are not uniform: {} vs {chunk_len}",
                r.length
            )));
        }
        let source_len = levels
            .get(&r.source)
            .ok_or_else(|| invalid(format!("manifest references unknown source {:?}", r.source)))?
            .len();
        if r.start + r.length > source_len {
            return Err(invalid(format!(
                "chunk [{}, {}) exceeds source {:?} of {source_len} samples",
                r.start,
                r.start + r.length,
                r.source
            )));
        }
    }
    let train_indices: Vec<usize> = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    if train_indices.is_empty() {
        return Err(invalid("train split is empty".into()));
    }
    let windows_per_chunk = ((chunk_len - config.frame_size) / config.tbptt_len) as u64;
    let batches_per_epoch = train_indices.len().div_ceil(config.batch_size) as u64;
    Ok(Schedule {
        train_indices,
        windows_per_chunk,
        batches_per_epoch,
        batch_size: config.batch_size,
    })
}

fn window_slices(
    manifest: &DatasetManifest,
    levels: &BTreeMap<String, Vec<u16>>,
    lane_records: &[usize],
    window: u64,
    tbptt_len: usize,
    frame_size: usize,
) -> Vec<Vec<u16>> {
    lane_records
        .iter()
        .map(|&idx| {
            let r = &manifest.records[idx];
            let start = r.start + window as usize * tbptt_len;
            levels[&r.source][start..start + tbptt_len + frame_size].to_vec()
        })
        .collect()
}

/// Train a fresh model. Returns the trained model and a report; checkpoints
/// and preview clips land in out_dir.
pub fn train(
    model: ModelState,
    manifest: &DatasetManifest,
    corpus: &Corpus,
    cfg: &TrainConfig,
    out_dir: impl AsRef<Path>,
) -> Result<(ModelState, TrainReport), TrainError> {
    let adam = AdamState::new(
        cfg.adam,
        &tensor_spec(&model.config)
            .iter()
            .map(|(_, s)| s.as_slice())
            .collect::<Vec<_>>(),
    );
    run_loop(model, adam, cfg.seed, 0, 0, 0.0, 0, manifest, corpus, cfg, out_dir.as_ref())
}

/// Continue training from a checkpoint. The checkpoint's optimizer state
/// and seed stream are used, so the continuation reproduces an
/// uninterrupted run over the same manifest and corpus byte-for-byte.
pub fn resume(
    checkpoint: Checkpoint,
    manifest: &DatasetManifest,
    corpus: &Corpus,
    cfg: &TrainConfig,
    out_dir: impl AsRef<Path>,
) -> Result<(ModelState, TrainReport), TrainError> {
    let model = checkpoint.model()?;
    run_loop(
        model,
        checkpoint.adam,
        checkpoint.rng_state,
        checkpoint.epoch,
        checkpoint.step,
        checkpoint.loss_sum_bits,
        checkpoint.loss_count,
        manifest,
        corpus,
        cfg,
        out_dir.as_ref(),
    )
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    mut model: ModelState,
    mut adam: AdamState,
    seed: u64,
    start_epoch: u32,
    start_step: u64,
    loss_sum_bits: f64,
    loss_count: u64,
    manifest: &DatasetManifest,
    corpus: &Corpus,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<(ModelState, TrainReport), TrainError> {
    let t0 = Instant::now();
    let config = model.config.clone();
    let levels = quantize_corpus(corpus, config.q_levels);
    let schedule = build_schedule(manifest, &config, &levels)?;
    let steps_per_epoch = schedule.steps_per_epoch();

    let mut report = TrainReport::default();
    let mut step = start_step;
    if cfg.max_steps.is_some_and(|cap| step >= cap) {
        report.steps = step;
        report.wall_seconds = t0.elapsed().as_secs_f64();
        return Ok((model, report));
    }
    let mut epoch_loss_sum = loss_sum_bits;
    let mut epoch_loss_count = loss_count;
    let mut pending_checkpoint = false;
    let mut stop = false;

    let preview_stream = derive_seed(seed, STAGE_PREVIEW);

    'epochs: for epoch in start_epoch..cfg.epochs {
        let order = schedule.epoch_order(seed, epoch);
        // Steps of this epoch already completed before a resume; always a
        // whole number of chunk batches because checkpoints sit on
        // state-reset boundaries.
        let done_in_epoch = step - u64::from(epoch) * steps_per_epoch;
        if done_in_epoch % schedule.windows_per_chunk != 0 {
            return Err(TrainError::InvalidInput {
                reason: format!(
                    "checkpoint step {step} does not sit on a chunk boundary \
                     (windows per chunk {})",
                    schedule.windows_per_chunk
                ),
            });
        }
        let skip_batches = done_in_epoch / schedule.windows_per_chunk;

        for batch_idx in skip_batches..schedule.batches_per_epoch {
            let lo = batch_idx as usize * schedule.batch_size;
            let hi = (lo + schedule.batch_size).min(order.len());
            let lanes = &order[lo..hi];
            let mut state = RecurrentState::zeros(&config, lanes.len());

            for window in 0..schedule.windows_per_chunk {
                let windows = window_slices(
                    manifest,
                    &levels,
                    lanes,
                    window,
                    config.tbptt_len,
                    config.frame_size,
                );
                let mut graph = model.graph()?;
                let out = graph.forward_window(&windows, &state)?;
                let loss = graph.window_loss(out.logits, &windows)?;
                let loss_nats = graph.tape.value(loss).data()[0];
                if !loss_nats.is_finite() {
                    return Err(TrainError::NonFiniteLoss { step, value: loss_nats });
                }
                let mut grads = graph.backward(loss)?;
                state = out.state_out;
                drop(graph);

                let mut params = model.tensors_mut();
                adam_step(&mut params, &mut grads, &mut adam)?;

                step += 1;
                epoch_loss_sum += loss_nats / std::f64::consts::LN_2;
                epoch_loss_count += 1;
                if cfg.steps_per_checkpoint > 0 && step % cfg.steps_per_checkpoint == 0 {
                    pending_checkpoint = true;
                }
                if cfg.max_steps.is_some_and(|cap| step >= cap) {
                    stop = true;
                }
            }

            // State-reset boundary: safe to checkpoint or stop.
            if pending_checkpoint || stop {
                pending_checkpoint = false;
                let at_epoch_end = batch_idx + 1 == schedule.batches_per_epoch;
                let ckpt_epoch = if at_epoch_end { epoch + 1 } else { epoch };
                write_snapshot(
                    &model, &adam, seed, ckpt_epoch, step, epoch_loss_sum, epoch_loss_count,
                    preview_stream, cfg, out_dir, &mut report,
                )?;
            }
            if stop {
                break 'epochs;
            }
        }

        let train_bits = epoch_loss_sum / epoch_loss_count.max(1) as f64;
        let valid_bits = if manifest.split_records(Split::Valid).is_empty() {
            None
        } else {
            Some(evaluate(&model, manifest, Split::Valid, corpus)?)
        };
        report.epochs.push(EpochReport {
            epoch,
            train_bits_per_sample: train_bits,
            valid_bits_per_sample: valid_bits,
        });
        epoch_loss_sum = 0.0;
        epoch_loss_count = 0;

        // Epoch-end checkpoint, unless the boundary above just wrote one at
        // this exact step.
        let epoch_end_name = checkpoint_name(epoch + 1, step);
        let just_written = report
            .checkpoints
            .last()
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
            == Some(epoch_end_name.as_str());
        if !just_written {
            write_snapshot(
                &model, &adam, seed, epoch + 1, step, 0.0, 0, preview_stream, cfg, out_dir,
                &mut report,
            )?;
        }
    }

    report.steps = step;
    report.wall_seconds = t0.elapsed().as_secs_f64();
    Ok((model, report))
}

fn checkpoint_name(epoch: u32, step: u64) -> String {
    format!("epoch{epoch}_step{step}.ckpt")
}

#[allow(clippy::too_many_arguments)]
fn write_snapshot(
    model: &ModelState,
    adam: &AdamState,
    seed: u64,
    epoch: u32,
    step: u64,
    loss_sum_bits: f64,
    loss_count: u64,
    preview_stream: u64,
    cfg: &TrainConfig,
    out_dir: &Path,
    report: &mut TrainReport,
) -> Result<(), TrainError> {
    let checkpoint = Checkpoint {
        config: model.config.clone(),
        tensors: model
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect(),
        adam: adam.clone(),
        rng_state: seed,
        epoch,
        step,
        loss_sum_bits,
        loss_count,
    };
    let path = out_dir.join(checkpoint_name(epoch, step));
    save_checkpoint(&path, &checkpoint)?;
    report.checkpoints.push(path);

    if cfg.preview_seconds > 0.0 {
        let n_samples = (cfg.preview_seconds * f64::from(model.config.sample_rate)).round()
            as usize;
        let params = GenParams {
            n_samples: n_samples.max(model.config.frame_size),
            temperature: 1.0,
            seed: derive_seed(preview_stream, step),
            h0_sigma: 0.1,
        };
        let clip = generate(model, &params)?;
        let path = out_dir.join(format!("epoch{epoch}_step{step}.wav"));
        crate::audio_io::save_wav(&clip, &path).map_err(GenError::from)?;
        report.previews.push(path);
    }
    Ok(())
}

/// Teacher-forced mean negative log2-likelihood per sample over a split;
/// no parameter updates, deterministic.
pub fn evaluate(
    model: &ModelState,
    manifest: &DatasetManifest,
    split: Split,
    corpus: &Corpus,
) -> Result<f64, TrainError> {
    let config = &model.config;
    let levels = quantize_corpus(corpus, config.q_levels);
    let records: Vec<usize> = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == split)
        .map(|(i, _)| i)
        .collect();
    if records.is_empty() {
        return Err(TrainError::InvalidInput {
            reason: format!("split {split} is empty"),
        });
    }
    let chunk_len = manifest.records[records[0]].length;
    let min_len = config.tbptt_len + config.frame_size;
    if chunk_len < min_len {
        return Err(TrainError::InvalidInput {
            reason: format!("chunk length {chunk_len} shorter than one window of {min_len}"),
        });
    }
    if records.iter().any(|&i| manifest.records[i].length != chunk_len) {
        return Err(TrainError::InvalidInput {
            reason: "chunk lengths are not uniform".to_string(),
        });
    }
    let windows_per_chunk = (chunk_len - config.frame_size) / config.tbptt_len;

    let mut total_nats = 0.0;
    let mut total_positions = 0u64;
    for batch in records.chunks(config.batch_size) {
        let mut state = RecurrentState::zeros(config, batch.len());
        for window in 0..windows_per_chunk as u64 {
            let windows = window_slices(
                manifest,
                &levels,
                batch,
                window,
                config.tbptt_len,
                config.frame_size,
            );
            let mut graph = model.graph()?;
            let out = graph.forward_window(&windows, &state)?;
            let loss = graph.window_loss(out.logits, &windows)?;
            let positions = (config.tbptt_len * batch.len()) as u64;
            total_nats += graph.tape.value(loss).data()[0] * positions as f64;
            total_positions += positions;
            state = out.state_out;
        }
    }
    Ok(total_nats / total_positions as f64 / std::f64::consts::LN_2)
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
//
// magic "SRNNCKPT", u32 version, u64-length-prefixed canonical config text,
// each named parameter as (u32 name len, name bytes, u32 rank, u32 dims...,
// f64 data...), the Adam section (5 f64 hyperparameters, u64 t, then m and v
// in the same named-tensor encoding), u64 rng state, u32 epoch, u64 step,
// and the running loss stats (f64 sum, u64 count). All integers and reals
// little-endian.
// ---------------------------------------------------------------------------

fn put_tensor(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in t.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), TrainError> {
    let path = path.as_ref();
    let io_err = |source: std::io::Error| TrainError::Io {
        path: path.display().to_string(),
        source,
    };

    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config_text = ckpt.config.canonical_text();
    buf.extend_from_slice(&(config_text.len() as u64).to_le_bytes());
    buf.extend_from_slice(config_text.as_bytes());
    for (name, tensor) in &ckpt.tensors {
        put_tensor(&mut buf, name, tensor);
    }
    for x in [
        ckpt.adam.config.lr,
        ckpt.adam.config.beta1,
        ckpt.adam.config.beta2,
        ckpt.adam.config.eps,
        ckpt.adam.config.clip_norm,
    ] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf.extend_from_slice(&ckpt.adam.t.to_le_bytes());
    for (moment, tensors) in [("m", &ckpt.adam.m), ("v", &ckpt.adam.v)] {
        for ((name, _), tensor) in ckpt.tensors.iter().zip(tensors.iter()) {
            put_tensor(&mut buf, &format!("{moment}.{name}"), tensor);
        }
    }
    buf.extend_from_slice(&ckpt.rng_state.to_le_bytes());
    buf.extend_from_slice(&ckpt.epoch.to_le_bytes());
    buf.extend_from_slice(&ckpt.step.to_le_bytes());
    buf.extend_from_slice(&ckpt.loss_sum_bits.to_le_bytes());
    buf.extend_from_slice(&ckpt.loss_count.to_le_bytes());

    // atomic: write sibling temp file, then rename over the target
    let tmp = path.with_extension("ckpt.tmp");
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(&buf).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.pos + n > self.data.len() {
            return Err(TrainError::CorruptCheckpoint {
                path: self.path.to_string(),
                reason: format!(
                    "truncated: wanted {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.data.len()
                ),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, TrainError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn corrupt(&self, reason: impl Into<String>) -> TrainError {
        TrainError::CorruptCheckpoint {
            path: self.path.to_string(),
            reason: reason.into(),
        }
    }

    fn tensor(&mut self, want_name: &str, want_shape: &[usize]) -> Result<Tensor, TrainError> {
        let name_len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|e| self.corrupt(format!("bad tensor name: {e}")))?
            .to_string();
        if name != want_name {
            return Err(self.corrupt(format!("expected tensor {want_name:?}, found {name:?}")));
        }
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        if shape != want_shape {
            return Err(self.corrupt(format!(
                "tensor {name:?} has shape {shape:?}, expected {want_shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(self.f64()?);
        }
        Tensor::from_vec(&shape, data).map_err(|e| self.corrupt(e.to_string()))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, TrainError> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut data = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|source| TrainError::Io {
            path: path_str.clone(),
            source,
        })?;

    let mut r = Reader { data: &data, pos: 0, path: &path_str };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(TrainError::NotACheckpoint { path: path_str });
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::UnsupportedVersion { path: path_str, version });
    }
    let config_len = r.u64()? as usize;
    let config_text = std::str::from_utf8(r.take(config_len)?)
        .map_err(|e| r.corrupt(format!("bad config text: {e}")))?
        .to_string();
    let config = ModelConfig::from_canonical_text(&config_text)
        .map_err(|e| r.corrupt(e.to_string()))?;

    let spec = tensor_spec(&config);
    let mut tensors = Vec::with_capacity(spec.len());
    for (name, shape) in &spec {
        tensors.push((name.clone(), r.tensor(name, shape)?));
    }
    let adam_config = AdamConfig {
        lr: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
        clip_norm: r.f64()?,
    };
    let t = r.u64()?;
    let mut moments = Vec::new();
    for moment in ["m", "v"] {
        let mut list = Vec::with_capacity(spec.len());
        for (name, shape) in &spec {
            list.push(r.tensor(&format!("{moment}.{name}"), shape)?);
        }
        moments.push(list);
    }
    let v = moments.pop().expect("two moment lists");
    let m = moments.pop().expect("two moment lists");
    let rng_state = r.u64()?;
    let epoch = r.u32()?;
    let step = r.u64()?;
    let loss_sum_bits = r.f64()?;
    let loss_count = r.u64()?;
    if r.pos != data.len() {
        return Err(r.corrupt(format!("{} trailing bytes", data.len() - r.pos)));
    }

    Ok(Checkpoint {
        config,
        tensors,
        adam: AdamState { config: adam_config, t, m, v },
        rng_state,
        epoch,
        step,
        loss_sum_bits,
        loss_count,
    })
}

/// Guard for resuming: the run's model config must match the checkpoint's.
pub fn check_resume_config(ckpt: &Checkpoint, run: &ModelConfig) -> Result<(), TrainError> {
    if ckpt.config != *run {
        return Err(TrainError::ConfigMismatch {
            checkpoint: ckpt.config.canonical_text(),
            run: run.canonical_text(),
        });
    }
    Ok(())
}

/// Fresh model + zeroed optimizer wrapped as a step-0 checkpoint; handy for
/// callers that treat "initialized" and "resumed" uniformly.
pub fn initial_checkpoint(config: &ModelConfig, model_seed: u64, cfg: &TrainConfig) -> Result<Checkpoint, TrainError> {
    let model = init_model(config, model_seed)?;
    let adam = AdamState::new(
        cfg.adam,
        &tensor_spec(config).iter().map(|(_, s)| s.as_slice()).collect::<Vec<_>>(),
    );
    Ok(Checkpoint {
        config: config.clone(),
        tensors: model.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect(),
        adam,
        rng_state: cfg.seed,
        epoch: 0,
        step: 0,
        loss_sum_bits: 0.0,
        loss_count: 0,
    })
}
