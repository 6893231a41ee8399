//! Autoregressive synthesis from a trained model: one sample at a time,
//! temperature-scaled, seeded for bit-exact reproducibility; plus batch
//! generation with a text index and random track selection for the
//! fully-automated album workflow.

use std::fs;
use std::path::{Path, PathBuf};

use crate::audio_io::{save_wav, AudioClip, AudioIoError};
use crate::model::{ModelError, ModelState, RecurrentState};
use crate::numeric::{categorical, NumericError, Rng};
use crate::quantizer::{dequantize_levels, dequantize_linear, QuantizerError};

/// Below this temperature sampling collapses to argmax.
pub const ARGMAX_TEMPERATURE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub n_samples: usize,
    pub temperature: f64,
    pub seed: u64,
    /// Standard deviation of the randomized initial recurrent state.
    pub h0_sigma: f64,
}

impl GenParams {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        GenParams {
            n_samples,
            temperature: 1.0,
            seed,
            h0_sigma: 0.1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Audio(#[from] AudioIoError),
    #[error(transparent)]
    Quantizer(#[from] QuantizerError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("invalid generation params: {reason}")]
    InvalidParams { reason: String },
    #[error("cannot select {k} tracks from a batch of {n}")]
    SelectionTooLarge { k: usize, n: usize },
    #[error("batch index {path} line {line}: {reason}")]
    IndexParse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Temperature-scaled softmax over raw logits.
pub fn softmax_temperature(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|x| x / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = scaled.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_level(logits: &[f64], temperature: f64, rng: &mut Rng) -> Result<u16, GenError> {
    if temperature < ARGMAX_TEMPERATURE {
        return Ok(argmax(logits) as u16);
    }
    let probs = softmax_temperature(logits, temperature);
    let idx = categorical(&probs, rng.uniform01())?;
    Ok(idx as u16)
}

/// Synthesize n_samples of audio. The recurrent state starts gaussian
/// (0, h0_sigma²) from the seed, the first frame of output is pinned to the
/// midpoint level, and each further sample is drawn from the
/// temperature-scaled next-sample distribution; conditioning refreshes at
/// every frame boundary from the last generated frame.
pub fn generate(model: &ModelState, params: &GenParams) -> Result<AudioClip, GenError> {
    let cfg = &model.config;
    let fs = cfg.frame_size;
    if params.n_samples < fs {
        return Err(GenError::InvalidParams {
            reason: format!("n_samples {} is below frame_size {fs}", params.n_samples),
        });
    }
    if !(params.temperature > 0.0) {
        return Err(GenError::InvalidParams {
            reason: format!("temperature must be positive, got {}", params.temperature),
        });
    }

    let infer = model.inference()?;
    let mut rng = Rng::new(params.seed);
    let mut state = RecurrentState::randomized(cfg, params.h0_sigma, &mut rng);

    let midpoint = (cfg.q_levels - 1) / 2;
    let mut levels: Vec<u16> = vec![midpoint; fs];
    levels.reserve(params.n_samples);
    let mut conditioning: Vec<Vec<f64>> = Vec::new();

    for i in fs..params.n_samples {
        if i % fs == 0 {
            let frame: Vec<f64> = levels[i - fs..i]
                .iter()
                .map(|&l| dequantize_linear(l, cfg.q_levels))
                .collect::<Result<_, _>>()?;
            conditioning = infer.frame_step(&mut state, &frame)?;
        }
        let logits = infer.sample_logits(&levels[i - fs..i], &conditioning[i % fs])?;
        levels.push(sample_level(&logits, params.temperature, &mut rng)?);
    }

    Ok(dequantize_levels(&levels, cfg.q_levels, cfg.sample_rate)?)
}

/// One row of the batch index: everything needed to reproduce and curate a
/// generated clip.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchRecord {
    pub file: String,
    pub seed: u64,
    pub samples: usize,
    pub sample_rate: u32,
    pub checkpoint_id: String,
}

pub const BATCH_INDEX_FILE: &str = "batch_index.txt";

/// Generate n_clips clips of clip_seconds each into out_dir as
/// `gen_<k>.wav`, clip k seeded with base_seed + k, and write the text
/// index next to them.
pub fn generate_batch(
    model: &ModelState,
    n_clips: usize,
    clip_seconds: f64,
    base_seed: u64,
    temperature: f64,
    h0_sigma: f64,
    out_dir: impl AsRef<Path>,
    checkpoint_id: &str,
) -> Result<Vec<BatchRecord>, GenError> {
    let out_dir = out_dir.as_ref();
    if n_clips == 0 {
        return Err(GenError::InvalidParams {
            reason: "n_clips must be at least 1".to_string(),
        });
    }
    let cfg = &model.config;
    let n_samples =
        ((clip_seconds * f64::from(cfg.sample_rate)).round() as usize).max(cfg.frame_size);
    let mut records = Vec::with_capacity(n_clips);
    for k in 0..n_clips {
        let params = GenParams {
            n_samples,
            temperature,
            seed: base_seed.wrapping_add(k as u64),
            h0_sigma,
        };
        let clip = generate(model, &params)?;
        let file = format!("gen_{k}.wav");
        save_wav(&clip, out_dir.join(&file))?;
        records.push(BatchRecord {
            file,
            seed: params.seed,
            samples: clip.len(),
            sample_rate: clip.sample_rate(),
            checkpoint_id: checkpoint_id.to_string(),
        });
    }
    write_batch_index(&records, out_dir.join(BATCH_INDEX_FILE))?;
    Ok(records)
}

pub fn write_batch_index(
    records: &[BatchRecord],
    path: impl AsRef<Path>,
) -> Result<(), GenError> {
    let path = path.as_ref();
    let mut text = String::new();
    for r in records {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.file, r.seed, r.samples, r.sample_rate, r.checkpoint_id
        ));
    }
    fs::write(path, text).map_err(|source| GenError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_batch_index(path: impl AsRef<Path>) -> Result<Vec<BatchRecord>, GenError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GenError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let err = |line: usize, reason: String| GenError::IndexParse {
        path: path.display().to_string(),
        line,
        reason,
    };
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(line_no, format!("expected 5 fields, got {}", fields.len())));
        }
        records.push(BatchRecord {
            file: fields[0].to_string(),
            seed: fields[1]
                .parse()
                .map_err(|e| err(line_no, format!("bad seed: {e}")))?,
            samples: fields[2]
                .parse()
                .map_err(|e| err(line_no, format!("bad sample count: {e}")))?,
            sample_rate: fields[3]
                .parse()
                .map_err(|e| err(line_no, format!("bad sample rate: {e}")))?,
            checkpoint_id: fields[4].to_string(),
        });
    }
    Ok(records)
}

/// Choose k distinct clips by a seeded Fisher-Yates prefix; selection order
/// is track order.
pub fn select_random_tracks(
    records: &[BatchRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<BatchRecord>, GenError> {
    if k > records.len() {
        return Err(GenError::SelectionTooLarge { k, n: records.len() });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    Ok(order[..k].iter().map(|&i| records[i].clone()).collect())
}

/// Paths of the files a batch wrote, for callers that stage them further.
pub fn batch_file_paths(out_dir: impl AsRef<Path>, records: &[BatchRecord]) -> Vec<PathBuf> {
    records
        .iter()
        .map(|r| out_dir.as_ref().join(&r.file))
        .collect()
}
