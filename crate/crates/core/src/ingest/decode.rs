use std::io::Cursor;

use super::{IngestError, SampleBuffer, CANONICAL_RATE};

/// What the caller knows about the incoming bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatHint {
    /// RIFF/WAVE container, header is authoritative.
    Wav,
    /// Headerless little-endian PCM16.
    RawPcm16 { sample_rate: u32, channels: u16 },
}

/// Decode PCM16 audio into a mono buffer at the canonical rate.
///
/// Channels are downmixed by their mean and the result is resampled by
/// linear interpolation.
pub fn decode_pcm(bytes: &[u8], hint: FormatHint) -> Result<SampleBuffer, IngestError> {
    let (interleaved, sample_rate, channels) = match hint {
        FormatHint::Wav => read_wav(bytes)?,
        FormatHint::RawPcm16 {
            sample_rate,
            channels,
        } => {
            if sample_rate == 0 || channels == 0 {
                return Err(IngestError::Decode(
                    "raw pcm needs a non-zero rate and channel count".into(),
                ));
            }
            if bytes.len() % 2 != 0 {
                return Err(IngestError::Decode("odd byte count for pcm16".into()));
            }
            let samples = bytes
                .chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]))
                .collect();
            (samples, sample_rate, channels)
        }
    };

    let mono = downmix(&interleaved, channels as usize);
    let samples = resample_linear(&mono, sample_rate, CANONICAL_RATE);
    Ok(SampleBuffer::new(samples, CANONICAL_RATE))
}

fn read_wav(bytes: &[u8]) -> Result<(Vec<i16>, u32, u16), IngestError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(IngestError::UnsupportedFormat(format!(
            "{:?} with {} bits per sample (expected 16-bit PCM)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    Ok((samples, spec.sample_rate, spec.channels))
}

fn map_hound(err: hound::Error) -> IngestError {
    match err {
        hound::Error::Unsupported => IngestError::UnsupportedFormat("unsupported wav encoding".into()),
        hound::Error::IoError(e) => IngestError::Decode(e.to_string()),
        other => IngestError::Decode(other.to_string()),
    }
}

fn downmix(interleaved: &[i16], channels: usize) -> Vec<f64> {
    interleaved
        .chunks_exact(channels)
        .map(|frame| {
            let sum: f64 = frame.iter().map(|&s| s as f64 / 32768.0).sum();
            (sum / channels as f64).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Linear-interpolation resampler. Output length is `round(n * to / from)`.
pub fn resample_linear(input: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let out_len = ((input.len() as u64 * to as u64 + from as u64 / 2) / from as u64) as usize;
    let step = from as f64 / to as f64;
    let last = input.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let left = (pos.floor() as usize).min(last);
            let right = (left + 1).min(last);
            let frac = pos - left as f64;
            input[left] + (input[right] - input[left]) * frac
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(channels: u16, rate: u32, samples: &[i16]) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
            for &s in samples {
                w.write_sample(s).unwrap();
            }
            w.finalize().unwrap();
        }
        cursor.into_inner()
    }

    #[test]
    fn silence_decodes_to_zeros() {
        let bytes = wav_bytes(1, 16_000, &vec![0; 16_000]);
        let buf = decode_pcm(&bytes, FormatHint::Wav).unwrap();
        assert_eq!(buf.samples.len(), 16_000);
        assert!(buf.samples.iter().all(|&s| s == 0.0));
        assert_eq!(buf.sample_rate, 16_000);
        assert_eq!(buf.channel_count, 1);
    }

    #[test]
    fn opposite_stereo_channels_cancel() {
        let frames: Vec<i16> = (0..800).flat_map(|_| [16384i16, -16384]).collect();
        let buf = decode_pcm(&wav_bytes(2, 16_000, &frames), FormatHint::Wav).unwrap();
        assert_eq!(buf.samples.len(), 800);
        assert!(buf.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn garbage_header_is_decode_error() {
        let err = decode_pcm(b"RIFX\0\0\0\0nonsense", FormatHint::Wav).unwrap_err();
        assert!(matches!(err, IngestError::Decode(_)), "{err:?}");
    }

    #[test]
    fn float_wav_is_unsupported() {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, spec).unwrap();
            for _ in 0..10 {
                w.write_sample(0.1f32).unwrap();
            }
            w.finalize().unwrap();
        }
        let err = decode_pcm(&cursor.into_inner(), FormatHint::Wav).unwrap_err();
        assert!(matches!(err, IngestError::UnsupportedFormat(_)), "{err:?}");
    }

    #[test]
    fn raw_pcm_hint() {
        let bytes: Vec<u8> = [16384i16, -32768].iter().flat_map(|s| s.to_le_bytes()).collect();
        let buf = decode_pcm(
            &bytes,
            FormatHint::RawPcm16 {
                sample_rate: 16_000,
                channels: 1,
            },
        )
        .unwrap();
        assert_eq!(buf.samples, vec![0.5, -1.0]);
    }

    #[test]
    fn resample_length_and_endpoints() {
        let input: Vec<f64> = (0..441).map(|i| i as f64 / 440.0).collect();
        let out = resample_linear(&input, 44_100, 16_000);
        assert_eq!(out.len(), 160);
        assert_eq!(out[0], 0.0);
        // linear input stays linear
        for (i, v) in out.iter().enumerate() {
            let expected = i as f64 * 44_100.0 / 16_000.0 / 440.0;
            assert!((v - expected).abs() < 1e-12);
        }
    }
}
