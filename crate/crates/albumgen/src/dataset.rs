//! Corpus preparation: silence removal, overlapped chunking, seeded
//! shuffle/split, and the manifest text format that ties a training run to
//! the exact bytes it consumed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::audio_io::AudioClip;
use crate::numeric::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SilenceParams {
    pub window_ms: f64,
    pub threshold_dbfs: f64,
    pub min_run_ms: f64,
}

impl Default for SilenceParams {
    fn default() -> Self {
        SilenceParams {
            window_ms: 100.0,
            threshold_dbfs: -50.0,
            min_run_ms: 500.0,
        }
    }
}

impl SilenceParams {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.window_ms <= 0.0 || self.min_run_ms < self.window_ms {
            return Err(DatasetError::InvalidSilenceParams {
                window_ms: self.window_ms,
                min_run_ms: self.min_run_ms,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
    Valid,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Valid => "valid",
        }
    }

    fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            "valid" => Some(Split::Valid),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkRecord {
    pub source: String,
    pub start: usize,
    pub length: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<ChunkRecord>,
    pub seed: u64,
    pub sample_rate: u32,
    pub chunk_seconds: f64,
    pub fractions: (f64, f64, f64),
}

impl DatasetManifest {
    pub fn split_records(&self, split: Split) -> Vec<&ChunkRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for r in &self.records {
            match r.split {
                Split::Train => counts.0 += 1,
                Split::Test => counts.1 += 1,
                Split::Valid => counts.2 += 1,
            }
        }
        counts
    }
}

/// Silence-stripped source clips, keyed by the manifest's source identifier.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    clips: BTreeMap<String, AudioClip>,
}

impl Corpus {
    pub fn new() -> Self {
        Corpus::default()
    }

    pub fn insert(&mut self, source: impl Into<String>, clip: AudioClip) {
        self.clips.insert(source.into(), clip);
    }

    pub fn get(&self, source: &str) -> Result<&AudioClip, DatasetError> {
        self.clips
            .get(source)
            .ok_or_else(|| DatasetError::UnknownSource { name: source.to_string() })
    }

    pub fn sources(&self) -> impl Iterator<Item = (&String, &AudioClip)> {
        self.clips.iter()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("silence params invalid: window_ms={window_ms}, min_run_ms={min_run_ms}")]
    InvalidSilenceParams { window_ms: f64, min_run_ms: f64 },
    #[error("clip of {clip_len} samples is shorter than one chunk of {chunk_len}")]
    ClipShorterThanChunk { clip_len: usize, chunk_len: usize },
    #[error("cannot split an empty chunk list")]
    EmptyChunkList,
    #[error("split fractions {fractions:?} must be nonnegative and sum to 1")]
    InvalidFractions { fractions: (f64, f64, f64) },
    #[error("manifest {path} line {line}: {reason}")]
    ManifestParse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest references unknown source {name:?}")]
    UnknownSource { name: String },
}

/// Delete every maximal run of consecutive silent windows that spans at
/// least min_run_ms. A window is silent when its RMS amplitude is below
/// 10^(threshold_dbfs/20). The trailing partial window participates with its
/// actual length.
pub fn remove_silence(clip: &AudioClip, params: &SilenceParams) -> Result<AudioClip, DatasetError> {
    params.validate()?;
    let rate = f64::from(clip.sample_rate());
    let window = ((params.window_ms / 1000.0) * rate).round().max(1.0) as usize;
    let min_run_samples = ((params.min_run_ms / 1000.0) * rate).round() as usize;
    let threshold = 10f64.powf(params.threshold_dbfs / 20.0);

    let samples = clip.samples();
    let n_windows = samples.len().div_ceil(window);
    let silent: Vec<bool> = (0..n_windows)
        .map(|w| {
            let start = w * window;
            let end = (start + window).min(samples.len());
            let seg = &samples[start..end];
            let rms = (seg.iter().map(|x| x * x).sum::<f64>() / seg.len() as f64).sqrt();
            rms < threshold
        })
        .collect();

    // Mark maximal silent runs long enough to delete.
    let mut keep = vec![true; samples.len()];
    let mut w = 0;
    while w < n_windows {
        if silent[w] {
            let mut end_w = w;
            while end_w < n_windows && silent[end_w] {
                end_w += 1;
            }
            let start = w * window;
            let end = (end_w * window).min(samples.len());
            if end - start >= min_run_samples {
                for k in &mut keep[start..end] {
                    *k = false;
                }
            }
            w = end_w;
        } else {
            w += 1;
        }
    }

    let kept: Vec<f64> = samples
        .iter()
        .zip(&keep)
        .filter_map(|(&s, &k)| k.then_some(s))
        .collect();
    Ok(AudioClip::new(kept, clip.sample_rate()).expect("kept samples stay in range"))
}

/// Starts and lengths of n_chunks chunks of chunk_seconds each, spread
/// evenly (and overlapping when necessary) across the clip.
pub fn chunk(
    clip: &AudioClip,
    chunk_seconds: f64,
    n_chunks: usize,
) -> Result<Vec<(usize, usize)>, DatasetError> {
    let chunk_len = (chunk_seconds * f64::from(clip.sample_rate())).round() as usize;
    let clip_len = clip.len();
    if clip_len < chunk_len || chunk_len == 0 {
        return Err(DatasetError::ClipShorterThanChunk { clip_len, chunk_len });
    }
    if n_chunks <= 1 || clip_len == chunk_len {
        return Ok(vec![(0, chunk_len)]);
    }
    let hop = (clip_len - chunk_len) / (n_chunks - 1);
    if hop >= 1 {
        Ok((0..n_chunks).map(|i| (i * hop, chunk_len)).collect())
    } else {
        // clip too short for n_chunks distinct starts: emit every start
        Ok((0..=clip_len - chunk_len).map(|s| (s, chunk_len)).collect())
    }
}

/// Fisher-Yates shuffle of the chunk list followed by floor-based splitting:
/// the first floor(f_train·n) records train, the next floor(f_test·n) test,
/// the remainder valid.
pub fn shuffle_split(
    source: &str,
    chunks: &[(usize, usize)],
    seed: u64,
    sample_rate: u32,
    chunk_seconds: f64,
    fractions: (f64, f64, f64),
) -> Result<DatasetManifest, DatasetError> {
    if chunks.is_empty() {
        return Err(DatasetError::EmptyChunkList);
    }
    let (ft, fe, fv) = fractions;
    if ft < 0.0 || fe < 0.0 || fv < 0.0 || (ft + fe + fv - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidFractions { fractions });
    }

    let mut order: Vec<usize> = (0..chunks.len()).collect();
    Rng::new(seed).shuffle(&mut order);

    let n = chunks.len();
    let n_train = (ft * n as f64).floor() as usize;
    let n_test = (fe * n as f64).floor() as usize;

    let records = order
        .iter()
        .enumerate()
        .map(|(pos, &idx)| {
            let split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_test {
                Split::Test
            } else {
                Split::Valid
            };
            ChunkRecord {
                source: source.to_string(),
                start: chunks[idx].0,
                length: chunks[idx].1,
                split,
            }
        })
        .collect();

    Ok(DatasetManifest {
        records,
        seed,
        sample_rate,
        chunk_seconds,
        fractions,
    })
}

pub fn manifest_to_string(m: &DatasetManifest) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "seed={} sample_rate={} chunk_seconds={} fractions={},{},{}\n",
        m.seed, m.sample_rate, m.chunk_seconds, m.fractions.0, m.fractions.1, m.fractions.2
    ));
    for r in &m.records {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", r.source, r.start, r.length, r.split));
    }
    out
}

pub fn write_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    fs::write(path, manifest_to_string(m)).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn manifest_from_str(text: &str, path: &str) -> Result<DatasetManifest, DatasetError> {
    let err = |line: usize, reason: String| DatasetError::ManifestParse {
        path: path.to_string(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty manifest".to_string()))?;

    let mut seed = None;
    let mut sample_rate = None;
    let mut chunk_seconds = None;
    let mut fractions = None;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(1, format!("malformed header field {field:?}")))?;
        match key {
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| err(1, e.to_string()))?),
            "sample_rate" => {
                sample_rate = Some(value.parse::<u32>().map_err(|e| err(1, e.to_string()))?)
            }
            "chunk_seconds" => {
                chunk_seconds = Some(value.parse::<f64>().map_err(|e| err(1, e.to_string()))?)
            }
            "fractions" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|p| p.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| err(1, e.to_string()))?;
                if parts.len() != 3 {
                    return Err(err(1, format!("expected 3 fractions, got {}", parts.len())));
                }
                fractions = Some((parts[0], parts[1], parts[2]));
            }
            other => return Err(err(1, format!("unknown header key {other:?}"))),
        }
    }
    let seed = seed.ok_or_else(|| err(1, "missing seed".into()))?;
    let sample_rate = sample_rate.ok_or_else(|| err(1, "missing sample_rate".into()))?;
    let chunk_seconds = chunk_seconds.ok_or_else(|| err(1, "missing chunk_seconds".into()))?;
    let fractions = fractions.ok_or_else(|| err(1, "missing fractions".into()))?;

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(line_no, format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let start = fields[1]
            .parse::<usize>()
            .map_err(|e| err(line_no, format!("bad start: {e}")))?;
        let length = fields[2]
            .parse::<usize>()
            .map_err(|e| err(line_no, format!("bad length: {e}")))?;
        if length == 0 {
            return Err(err(line_no, "length must be positive".into()));
        }
        let split = Split::parse(fields[3])
            .ok_or_else(|| err(line_no, format!("unknown split token {:?}", fields[3])))?;
        records.push(ChunkRecord {
            source: fields[0].to_string(),
            start,
            length,
            split,
        });
    }
    Ok(DatasetManifest {
        records,
        seed,
        sample_rate,
        chunk_seconds,
        fractions,
    })
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    manifest_from_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clip(samples: Vec<f64>, rate: u32) -> AudioClip {
        AudioClip::new(samples, rate).unwrap()
    }

    fn tone(seconds: f64, rate: u32, amp: f64) -> Vec<f64> {
        let n = (seconds * f64::from(rate)).round() as usize;
        (0..n)
            .map(|i| amp * (std::f64::consts::TAU * 440.0 * i as f64 / f64::from(rate)).sin())
            .collect()
    }

    /// Independent brute-force silence oracle: label every window, mark
    /// qualifying runs, rebuild the expected output.
    fn silence_oracle(samples: &[f64], rate: u32, p: &SilenceParams) -> Vec<f64> {
        let window = ((p.window_ms / 1000.0) * f64::from(rate)).round() as usize;
        let min_run = ((p.min_run_ms / 1000.0) * f64::from(rate)).round() as usize;
        let thr = 10f64.powf(p.threshold_dbfs / 20.0);
        let mut silent_windows = Vec::new();
        let mut w = 0;
        while w * window < samples.len() {
            let seg = &samples[w * window..((w + 1) * window).min(samples.len())];
            let rms = (seg.iter().map(|x| x * x).sum::<f64>() / seg.len() as f64).sqrt();
            silent_windows.push(rms < thr);
            w += 1;
        }
        let mut drop = vec![false; samples.len()];
        let mut i = 0;
        while i < silent_windows.len() {
            if silent_windows[i] {
                let mut j = i;
                while j < silent_windows.len() && silent_windows[j] {
                    j += 1;
                }
                let start = i * window;
                let end = (j * window).min(samples.len());
                if end - start >= min_run {
                    for d in &mut drop[start..end] {
                        *d = true;
                    }
                }
                i = j;
            } else {
                i += 1;
            }
        }
        samples
            .iter()
            .zip(&drop)
            .filter_map(|(&s, &d)| (!d).then_some(s))
            .collect()
    }

    #[test]
    fn all_silent_input_becomes_empty() {
        let c = clip(vec![0.0; 32000], 16000);
        let out = remove_silence(&c, &SilenceParams::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.sample_rate(), 16000);
    }

    #[test]
    fn loud_input_is_untouched() {
        let c = clip(tone(1.0, 16000, 0.5), 16000);
        let out = remove_silence(&c, &SilenceParams::default()).unwrap();
        assert_eq!(out.samples(), c.samples());
    }

    #[test]
    fn interior_silence_run_is_removed() {
        let rate = 16000;
        let mut samples = tone(1.0, rate, 0.5);
        samples.extend(vec![0.0; 11200]); // 0.7 s of digital silence
        samples.extend(tone(1.0, rate, 0.5));
        let c = clip(samples.clone(), rate);
        let p = SilenceParams::default();
        let out = remove_silence(&c, &p).unwrap();
        assert_eq!(out.len(), 32000);
        assert_eq!(out.samples(), silence_oracle(&samples, rate, &p).as_slice());
    }

    #[test]
    fn short_rest_survives() {
        let rate = 16000;
        let mut samples = tone(0.5, rate, 0.5);
        samples.extend(vec![0.0; 4800]); // 0.3 s < 0.5 s minimum run
        samples.extend(tone(0.5, rate, 0.5));
        let c = clip(samples, rate);
        let out = remove_silence(&c, &SilenceParams::default()).unwrap();
        assert_eq!(out.len(), c.len());
    }

    #[test]
    fn remove_silence_is_idempotent_on_aligned_runs() {
        let rate = 10000; // 100 ms window = 1000 samples
        let mut samples = tone(0.4, rate, 0.6);
        samples.extend(vec![0.0; 8000]); // exactly 8 windows
        samples.extend(tone(0.4, rate, 0.6));
        let c = clip(samples, rate);
        let p = SilenceParams::default();
        let once = remove_silence(&c, &p).unwrap();
        let twice = remove_silence(&once, &p).unwrap();
        assert_eq!(once.samples(), twice.samples());
    }

    #[test]
    fn bad_silence_params_are_rejected() {
        let c = clip(vec![0.0; 100], 1000);
        let p = SilenceParams { window_ms: 100.0, threshold_dbfs: -50.0, min_run_ms: 50.0 };
        assert!(matches!(
            remove_silence(&c, &p),
            Err(DatasetError::InvalidSilenceParams { .. })
        ));
    }

    #[test]
    fn chunk_paper_scale_geometry() {
        let c = clip(vec![0.1; 256000], 16000);
        let chunks = chunk(&c, 8.0, 3200).unwrap();
        assert_eq!(chunks.len(), 3200);
        let hop = chunks[1].0 - chunks[0].0;
        assert_eq!(hop, 40);
        for (i, &(start, len)) in chunks.iter().enumerate() {
            assert_eq!(start, i * 40);
            assert_eq!(len, 128000);
            assert!(start + len <= 256000);
        }
        assert_eq!(chunks.last().unwrap().0, 127960);
    }

    #[test]
    fn chunk_degenerate_cases() {
        let c = clip(vec![0.1; 16000], 16000);
        // exactly one chunk long
        assert_eq!(chunk(&c, 1.0, 3200).unwrap(), vec![(0, 16000)]);
        // two non-overlapping chunks
        let c2 = clip(vec![0.1; 32000], 16000);
        assert_eq!(chunk(&c2, 1.0, 2).unwrap(), vec![(0, 16000), (16000, 16000)]);
        // too short entirely
        let c3 = clip(vec![0.1; 100], 16000);
        assert!(matches!(
            chunk(&c3, 1.0, 4),
            Err(DatasetError::ClipShorterThanChunk { .. })
        ));
    }

    #[test]
    fn chunk_hop_zero_fallback_emits_every_start() {
        let c = clip(vec![0.1; 1003], 1000);
        let chunks = chunk(&c, 1.0, 10).unwrap();
        assert_eq!(chunks.len(), 4); // starts 0..=3
        for (i, &(start, len)) in chunks.iter().enumerate() {
            assert_eq!(start, i);
            assert_eq!(len, 1000);
        }
    }

    #[test]
    fn split_counts_match_floor_rule_at_paper_scale() {
        let chunks: Vec<(usize, usize)> = (0..3200).map(|i| (i, 10)).collect();
        let m = shuffle_split("album", &chunks, 7, 16000, 8.0, (0.88, 0.06, 0.06)).unwrap();
        assert_eq!(m.split_counts(), (2816, 192, 192));
    }

    #[test]
    fn single_chunk_lands_in_valid() {
        let m = shuffle_split("album", &[(0, 10)], 7, 16000, 1.0, (0.88, 0.06, 0.06)).unwrap();
        assert_eq!(m.records[0].split, Split::Valid);
    }

    #[test]
    fn shuffle_split_is_deterministic() {
        let chunks: Vec<(usize, usize)> = (0..50).map(|i| (i * 3, 10)).collect();
        let a = shuffle_split("album", &chunks, 99, 8000, 1.0, (0.8, 0.1, 0.1)).unwrap();
        let b = shuffle_split("album", &chunks, 99, 8000, 1.0, (0.8, 0.1, 0.1)).unwrap();
        assert_eq!(manifest_to_string(&a), manifest_to_string(&b));
    }

    #[test]
    fn shuffle_permutation_depends_only_on_count_and_seed() {
        let chunks_a: Vec<(usize, usize)> = (0..20).map(|i| (i, 5)).collect();
        let chunks_b: Vec<(usize, usize)> = (0..20).map(|i| (i * 100, 7)).collect();
        let a = shuffle_split("x", &chunks_a, 3, 8000, 1.0, (1.0, 0.0, 0.0)).unwrap();
        let b = shuffle_split("y", &chunks_b, 3, 8000, 1.0, (1.0, 0.0, 0.0)).unwrap();
        let perm_a: Vec<usize> = a.records.iter().map(|r| r.start).collect();
        let perm_b: Vec<usize> = b.records.iter().map(|r| r.start / 100).collect();
        assert_eq!(perm_a, perm_b);
    }

    #[test]
    fn shuffle_split_rejects_bad_input() {
        assert!(matches!(
            shuffle_split("a", &[], 1, 8000, 1.0, (0.9, 0.05, 0.05)),
            Err(DatasetError::EmptyChunkList)
        ));
        assert!(matches!(
            shuffle_split("a", &[(0, 1)], 1, 8000, 1.0, (0.5, 0.1, 0.1)),
            Err(DatasetError::InvalidFractions { .. })
        ));
    }

    #[test]
    fn manifest_round_trip_and_shape() {
        let chunks: Vec<(usize, usize)> = (0..3).map(|i| (i * 7, 100)).collect();
        let m = shuffle_split("album", &chunks, 5, 16000, 8.0, (0.88, 0.06, 0.06)).unwrap();
        let text = manifest_to_string(&m);
        assert_eq!(text.lines().count(), 4); // header + 3 records
        let back = manifest_from_str(&text, "mem").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn manifest_write_read_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let chunks: Vec<(usize, usize)> = (0..10).map(|i| (i, 40)).collect();
        let m = shuffle_split("album", &chunks, 5, 2000, 0.02, (0.8, 0.1, 0.1)).unwrap();
        write_manifest(&m, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), m);
    }

    #[test]
    fn bad_split_token_names_the_line() {
        let text = "seed=1 sample_rate=8000 chunk_seconds=1 fractions=1,0,0\nalbum\t0\t10\tfoo\n";
        match manifest_from_str(text, "mem") {
            Err(DatasetError::ManifestParse { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("foo"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn corpus_lookup_errors_on_unknown_source() {
        let corpus = Corpus::new();
        assert!(matches!(
            corpus.get("missing"),
            Err(DatasetError::UnknownSource { .. })
        ));
    }

    proptest! {
        #[test]
        fn chunk_bounds_and_spacing(
            len in 100usize..5000,
            chunk_len in 50usize..100,
            n in 1usize..64,
        ) {
            let c = clip(vec![0.1; len], 1000);
            let secs = chunk_len as f64 / 1000.0;
            if let Ok(chunks) = chunk(&c, secs, n) {
                prop_assert!(!chunks.is_empty());
                for w in chunks.windows(2) {
                    prop_assert!(w[1].0 > w[0].0);
                    prop_assert_eq!(w[1].0 - w[0].0, chunks[1].0 - chunks[0].0);
                }
                for &(start, l) in &chunks {
                    prop_assert!(start + l <= len);
                }
            }
        }

        #[test]
        fn shuffle_split_is_a_permutation(n in 1usize..200, seed in any::<u64>()) {
            let chunks: Vec<(usize, usize)> = (0..n).map(|i| (i, 10)).collect();
            let m = shuffle_split("a", &chunks, seed, 8000, 1.0, (0.88, 0.06, 0.06)).unwrap();
            let mut starts: Vec<usize> = m.records.iter().map(|r| r.start).collect();
            starts.sort_unstable();
            prop_assert_eq!(starts, (0..n).collect::<Vec<_>>());
            let (tr, te, va) = m.split_counts();
            prop_assert_eq!(tr, (0.88 * n as f64).floor() as usize);
            prop_assert_eq!(te, (0.06 * n as f64).floor() as usize);
            prop_assert_eq!(va, n - tr - te);
        }

        #[test]
        fn silence_matches_brute_force_oracle(
            segs in proptest::collection::vec((any::<bool>(), 1usize..2500), 1..8)
        ) {
            let rate = 10000u32;
            let mut samples = Vec::new();
            for (loud, n) in segs {
                if loud {
                    samples.extend((0..n).map(|i| 0.5 * ((i as f64) * 0.7).sin()));
                } else {
                    samples.extend(std::iter::repeat(0.0).take(n));
                }
            }
            let c = clip(samples.clone(), rate);
            let p = SilenceParams::default();
            let out = remove_silence(&c, &p).unwrap();
            prop_assert!(out.len() <= c.len());
            let expected = silence_oracle(&samples, rate, &p);
            prop_assert_eq!(out.samples(), expected.as_slice());
        }
    }
}
