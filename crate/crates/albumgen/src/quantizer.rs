//! Linear quantization between real amplitudes in [-1, 1] and Q discrete
//! levels. The model classifies the next sample into one of these levels.

use crate::audio_io::AudioClip;

pub const DEFAULT_LEVELS: u16 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantizerConfig {
    pub levels: u16,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        QuantizerConfig { levels: DEFAULT_LEVELS }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum QuantizerError {
    #[error("level {level} out of range for {levels} quantization levels")]
    LevelOutOfRange { level: u16, levels: u16 },
}

/// Map an amplitude to a level in [0, Q-1]: clamp to [-1, 1], rescale to
/// [0, Q-1], round half-up.
pub fn quantize_linear(x: f64, levels: u16) -> u16 {
    debug_assert!(levels >= 2);
    let clamped = x.clamp(-1.0, 1.0);
    let scaled = (clamped + 1.0) / 2.0 * f64::from(levels - 1);
    (scaled + 0.5).floor() as u16
}

/// Map a level back to the center amplitude of its bucket.
pub fn dequantize_linear(level: u16, levels: u16) -> Result<f64, QuantizerError> {
    if level >= levels {
        return Err(QuantizerError::LevelOutOfRange { level, levels });
    }
    Ok(2.0 * f64::from(level) / f64::from(levels - 1) - 1.0)
}

pub fn quantize_clip(clip: &AudioClip, levels: u16) -> Vec<u16> {
    clip.samples().iter().map(|&x| quantize_linear(x, levels)).collect()
}

pub fn dequantize_levels(
    levels_seq: &[u16],
    levels: u16,
    sample_rate: u32,
) -> Result<AudioClip, QuantizerError> {
    let samples = levels_seq
        .iter()
        .map(|&l| dequantize_linear(l, levels))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AudioClip::new(samples, sample_rate).expect("dequantized amplitudes are in range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bounds_map_to_extreme_levels() {
        assert_eq!(quantize_linear(-1.0, 256), 0);
        assert_eq!(quantize_linear(1.0, 256), 255);
    }

    #[test]
    fn midpoint_rounds_half_up() {
        // 0.0 lands exactly between levels 127 and 128
        assert_eq!(quantize_linear(0.0, 256), 128);
    }

    #[test]
    fn out_of_range_input_is_clamped() {
        assert_eq!(quantize_linear(-3.0, 256), 0);
        assert_eq!(quantize_linear(42.0, 256), 255);
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize_linear(0, 256).unwrap(), -1.0);
        assert_eq!(dequantize_linear(255, 256).unwrap(), 1.0);
        let x = dequantize_linear(128, 256).unwrap();
        assert!((x - 1.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn dequantize_rejects_out_of_range_level() {
        assert!(matches!(
            dequantize_linear(256, 256),
            Err(QuantizerError::LevelOutOfRange { level: 256, levels: 256 })
        ));
    }

    #[test]
    fn quantize_dequantize_is_identity_on_all_levels() {
        for level in 0u16..256 {
            let x = dequantize_linear(level, 256).unwrap();
            assert_eq!(quantize_linear(x, 256), level, "level {level}");
        }
    }

    #[test]
    fn round_trip_error_is_within_one_step_on_dense_grid() {
        let q = 256u16;
        let bound = 1.0 / 255.0;
        for i in 0..=100_000 {
            let x = -1.0 + 2.0 * i as f64 / 100_000.0;
            let back = dequantize_linear(quantize_linear(x, q), q).unwrap();
            assert!((back - x).abs() <= bound, "x={x} back={back}");
        }
    }

    #[test]
    fn two_levels_splits_at_zero() {
        assert_eq!(quantize_linear(-0.2, 2), 0);
        assert_eq!(quantize_linear(0.2, 2), 1);
        assert_eq!(dequantize_linear(0, 2).unwrap(), -1.0);
        assert_eq!(dequantize_linear(1, 2).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn round_trip_within_bound(x in -1.0f64..=1.0) {
            let back = dequantize_linear(quantize_linear(x, 256), 256).unwrap();
            prop_assert!((back - x).abs() <= 1.0 / 255.0);
        }

        #[test]
        fn quantize_is_monotone(x in -1.2f64..=1.2, y in -1.2f64..=1.2) {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(quantize_linear(lo, 256) <= quantize_linear(hi, 256));
        }
    }
}
