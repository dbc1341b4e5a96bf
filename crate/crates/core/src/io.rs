//! WAV files and raw binary tensors.
//!
//! Binary tensors carry no header: values are row-major little-endian `f64`,
//! complex values interleaved as `re, im`. The reader supplies the shape.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::TimeSignal;

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    Pcm16,
    #[default]
    Float32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<TimeSignal> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_owned(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    let frames = interleaved.len() / channels;
    let data = (0..channels)
        .map(|m| (0..frames).map(|i| interleaved[i * channels + m]).collect())
        .collect();
    TimeSignal::new(data, spec.sample_rate)
}

pub fn write_wav(path: impl AsRef<Path>, signal: &TimeSignal, format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_owned(),
        source,
    };
    let spec = hound::WavSpec {
        channels: signal.num_channels() as u16,
        sample_rate: signal.sample_rate(),
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for i in 0..signal.len() {
        for ch in signal.channels() {
            match format {
                SampleFormat::Pcm16 => {
                    let v = (ch[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v).map_err(wav_err)?;
                }
                SampleFormat::Float32 => writer.write_sample(ch[i] as f32).map_err(wav_err)?,
            }
        }
    }
    writer.finalize().map_err(wav_err)
}

pub fn write_real_tensor(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for v in values {
        out.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_complex_tensor(path: impl AsRef<Path>, values: &[Complex64]) -> Result<()> {
    let flat: Vec<f64> = values.iter().flat_map(|z| [z.re, z.im]).collect();
    write_real_tensor(path, &flat)
}

pub fn read_real_tensor(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format(path, "tensor size is not a multiple of 8 bytes"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_complex_tensor(path: impl AsRef<Path>) -> Result<Vec<Complex64>> {
    let path = path.as_ref();
    let flat = read_real_tensor(path)?;
    if flat.len() % 2 != 0 {
        return Err(Error::format(path, "complex tensor has an odd number of values"));
    }
    Ok(flat.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}
