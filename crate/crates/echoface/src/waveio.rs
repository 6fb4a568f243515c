//! File formats: sample files, window dumps, CSV exports.
//!
//! Binary sample file (`.eewv`), little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EEWV"
//! 4       1     version (1)
//! 5       1     channels
//! 6       1     bit depth: 8 (signed i8) or 64 (f64)
//! 7       1     reserved (0)
//! 8       4     sample rate, u32
//! 12      8     samples per channel, u64
//! 20      ...   interleaved samples
//! ```
//!
//! Window dumps carry an 8-byte `{rows u32, cols u32}` header followed by
//! row-major f32 values, plus a CSV twin for plotting. Blendshape CSVs put
//! `frame_index,timestamp_s` before the 52 canonical parameter names.

use ndarray::Array2;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::blendshape::{BLENDSHAPE_COUNT, BLENDSHAPE_NAMES};
use crate::blink::BlinkEvent;
use crate::chirp::{StereoWaveform, Waveform};
use crate::dataset::SessionFeatures;
use crate::error::{Error, Result};
use crate::sim::Trajectory;
use crate::window::EchoWindow;
use crate::wire::{dequantize8, interleave, quantize8, split_channels};

const WAVE_MAGIC: [u8; 4] = *b"EEWV";
const FEATURES_MAGIC: [u8; 4] = *b"EEDS";

/// Decoded sample file.
#[derive(Debug, Clone, PartialEq)]
pub enum WaveData {
    I8(Vec<i8>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFile {
    pub fs: u32,
    pub channels: u8,
    /// Interleaved samples (ch0, ch1, ...).
    pub data: WaveData,
}

impl WaveFile {
    pub fn bit_depth(&self) -> u8 {
        match self.data {
            WaveData::I8(_) => 8,
            WaveData::F64(_) => 64,
        }
    }

    pub fn samples_per_channel(&self) -> usize {
        let total = match &self.data {
            WaveData::I8(v) => v.len(),
            WaveData::F64(v) => v.len(),
        };
        total / self.channels as usize
    }

    /// Quantize a 2-channel waveform to the 8-bit wire depth; returns the
    /// file plus the per-channel saturation counts.
    pub fn from_stereo_quantized(x: &StereoWaveform) -> (Self, [usize; 2]) {
        let q0 = quantize8(&Waveform::new(x.ch[0].clone(), x.fs));
        let q1 = quantize8(&Waveform::new(x.ch[1].clone(), x.fs));
        (
            Self {
                fs: x.fs as u32,
                channels: 2,
                data: WaveData::I8(interleave(&q0.codes, &q1.codes)),
            },
            [q0.saturated, q1.saturated],
        )
    }

    pub fn from_stereo_f64(x: &StereoWaveform) -> Self {
        let mut data = Vec::with_capacity(x.len() * 2);
        for i in 0..x.len() {
            data.push(x.ch[0][i]);
            data.push(x.ch[1][i]);
        }
        Self {
            fs: x.fs as u32,
            channels: 2,
            data: WaveData::F64(data),
        }
    }

    pub fn from_mono_f64(x: &Waveform) -> Self {
        Self {
            fs: x.fs as u32,
            channels: 1,
            data: WaveData::F64(x.samples.clone()),
        }
    }

    /// Decode to a 2-channel waveform (i8 data dequantizes to amplitudes).
    pub fn to_stereo(&self) -> Result<StereoWaveform> {
        if self.channels != 2 {
            return Err(Error::data(format!(
                "expected 2 channels, file has {}",
                self.channels
            )));
        }
        let fs = self.fs as f64;
        match &self.data {
            WaveData::I8(v) => {
                let (c0, c1) = split_channels(v);
                Ok(StereoWaveform::new(
                    dequantize8(&c0, fs).samples,
                    dequantize8(&c1, fs).samples,
                    fs,
                ))
            }
            WaveData::F64(v) => {
                let pairs = v.len() / 2;
                let mut c0 = Vec::with_capacity(pairs);
                let mut c1 = Vec::with_capacity(pairs);
                for p in 0..pairs {
                    c0.push(v[2 * p]);
                    c1.push(v[2 * p + 1]);
                }
                Ok(StereoWaveform::new(c0, c1, fs))
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        out.write_all(&WAVE_MAGIC)?;
        out.write_all(&[1u8, self.channels, self.bit_depth(), 0u8])?;
        out.write_all(&self.fs.to_le_bytes())?;
        out.write_all(&(self.samples_per_channel() as u64).to_le_bytes())?;
        match &self.data {
            WaveData::I8(v) => {
                let bytes: Vec<u8> = v.iter().map(|&b| b as u8).collect();
                out.write_all(&bytes)?;
            }
            WaveData::F64(v) => {
                for x in v {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;
        if data.len() < 16 || data[0..4] != WAVE_MAGIC {
            return Err(Error::data("not a sample file (bad magic)"));
        }
        let version = data[4];
        if version != 1 {
            return Err(Error::data(format!("unsupported sample file version {version}")));
        }
        let channels = data[5];
        let bit_depth = data[6];
        let fs = u32::from_le_bytes([data[8], data[9], data[10], data[11]]);
        if data.len() < 20 {
            return Err(Error::data("sample file truncated"));
        }
        let count = u64::from_le_bytes([
            data[12], data[13], data[14], data[15], data[16], data[17], data[18], data[19],
        ]);
        let count = count as usize * channels as usize;
        let body = &data[20..];
        let wave_data = match bit_depth {
            8 => {
                if body.len() < count {
                    return Err(Error::data("sample file truncated"));
                }
                WaveData::I8(body[..count].iter().map(|&b| b as i8).collect())
            }
            64 => {
                if body.len() < count * 8 {
                    return Err(Error::data("sample file truncated"));
                }
                let mut v = Vec::with_capacity(count);
                for i in 0..count {
                    let mut b = [0u8; 8];
                    b.copy_from_slice(&body[i * 8..i * 8 + 8]);
                    v.push(f64::from_le_bytes(b));
                }
                WaveData::F64(v)
            }
            d => return Err(Error::data(format!("unsupported bit depth {d}"))),
        };
        Ok(Self {
            fs,
            channels,
            data: wave_data,
        })
    }
}

/// Write a window dump: `{rows u32, cols u32}` then row-major f32.
pub fn write_window(path: &Path, window: &EchoWindow) -> Result<()> {
    let (rows, cols) = window.values.dim();
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&(rows as u32).to_le_bytes())?;
    out.write_all(&(cols as u32).to_le_bytes())?;
    for r in 0..rows {
        for c in 0..cols {
            out.write_all(&(window.values[[r, c]] as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a window dump back (as f64 values that went through f32).
pub fn read_window(path: &Path) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    if data.len() < 8 {
        return Err(Error::data("window dump truncated"));
    }
    let rows = u32::from_le_bytes([data[0], data[1], data[2], data[3]]) as usize;
    let cols = u32::from_le_bytes([data[4], data[5], data[6], data[7]]) as usize;
    if data.len() < 8 + rows * cols * 4 {
        return Err(Error::data("window dump truncated"));
    }
    let mut values = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let off = 8 + (r * cols + c) * 4;
            let mut b = [0u8; 4];
            b.copy_from_slice(&data[off..off + 4]);
            values[[r, c]] = f32::from_le_bytes(b) as f64;
        }
    }
    Ok(values)
}

/// CSV twin of a window dump (or any matrix) for plotting.
pub fn write_matrix_csv(path: &Path, values: &Array2<f64>) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for r in 0..values.nrows() {
        let row: Vec<String> = (0..values.ncols())
            .map(|c| format!("{}", values[[r, c]]))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Write a blendshape CSV: `frame_index,timestamp_s,<52 names>`.
pub fn write_blendshape_csv(
    path: &Path,
    rows: &Array2<f64>,
    frame_rate: f64,
    start_frame: usize,
) -> Result<()> {
    if rows.ncols() != BLENDSHAPE_COUNT {
        return Err(Error::data(format!(
            "expected {BLENDSHAPE_COUNT} columns, got {}",
            rows.ncols()
        )));
    }
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "frame_index,timestamp_s,{}", BLENDSHAPE_NAMES.join(","))?;
    for k in 0..rows.nrows() {
        let frame = start_frame + k;
        let t = frame as f64 / frame_rate;
        let values: Vec<String> = (0..BLENDSHAPE_COUNT)
            .map(|j| format!("{}", rows[[k, j]]))
            .collect();
        writeln!(out, "{frame},{t},{}", values.join(","))?;
    }
    Ok(())
}

/// Read a blendshape CSV back into rows plus its frame rate (from the
/// timestamp spacing).
pub fn read_blendshape_csv(path: &Path) -> Result<(Array2<f64>, f64)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::data("empty csv"))?;
    let names: Vec<&str> = header.split(',').collect();
    if names.len() != BLENDSHAPE_COUNT + 2 || names[0] != "frame_index" {
        return Err(Error::data("unexpected blendshape csv header"));
    }
    for (j, want) in BLENDSHAPE_NAMES.iter().enumerate() {
        if names[j + 2] != *want {
            return Err(Error::data(format!(
                "column {} is {:?}, expected {want:?}",
                j + 2,
                names[j + 2]
            )));
        }
    }
    let mut rows = Vec::new();
    let mut timestamps = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != BLENDSHAPE_COUNT + 2 {
            return Err(Error::data("short csv row"));
        }
        timestamps.push(
            fields[1]
                .parse::<f64>()
                .map_err(|e| Error::data(format!("bad timestamp: {e}")))?,
        );
        for f in &fields[2..] {
            rows.push(
                f.parse::<f64>()
                    .map_err(|e| Error::data(format!("bad value: {e}")))?,
            );
        }
    }
    let n = timestamps.len();
    if n < 2 {
        return Err(Error::data("csv needs at least 2 rows"));
    }
    let dt = (timestamps[n - 1] - timestamps[0]) / (n - 1) as f64;
    if dt <= 0.0 {
        return Err(Error::data("timestamps do not advance"));
    }
    let rows = Array2::from_shape_vec((n, BLENDSHAPE_COUNT), rows)
        .map_err(|e| Error::data(e.to_string()))?;
    Ok((rows, 1.0 / dt))
}

/// Read a blendshape CSV as a trajectory.
pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let (frames, frame_rate) = read_blendshape_csv(path)?;
    Ok(Trajectory { frames, frame_rate })
}

/// Write blink events as CSV: `onset_s,offset_s,peak`.
pub fn write_events_csv(path: &Path, events: &[BlinkEvent], frame_rate: f64) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "onset_s,offset_s,peak")?;
    for e in events {
        writeln!(
            out,
            "{},{},{}",
            e.onset as f64 / frame_rate,
            e.offset as f64 / frame_rate,
            e.peak
        )?;
    }
    Ok(())
}

/// Persist extracted session features (differential columns plus targets).
pub fn write_features(path: &Path, features: &SessionFeatures) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&FEATURES_MAGIC)?;
    let id = features.session_id.as_bytes();
    out.write_all(&(id.len() as u32).to_le_bytes())?;
    out.write_all(id)?;
    let (dr, dc) = features.diffs.dim();
    let (tr, tc) = features.targets.dim();
    for v in [dr, dc, tr, tc] {
        out.write_all(&(v as u64).to_le_bytes())?;
    }
    for v in features.diffs.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in features.targets.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read persisted session features.
pub fn read_features(path: &Path) -> Result<SessionFeatures> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    if data.len() < 8 || data[0..4] != FEATURES_MAGIC {
        return Err(Error::data("not a features file (bad magic)"));
    }
    let id_len = u32::from_le_bytes([data[4], data[5], data[6], data[7]]) as usize;
    let mut pos = 8;
    if data.len() < pos + id_len + 32 {
        return Err(Error::data("features file truncated"));
    }
    let session_id = String::from_utf8(data[pos..pos + id_len].to_vec())
        .map_err(|e| Error::data(e.to_string()))?;
    pos += id_len;
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        let mut b = [0u8; 8];
        b.copy_from_slice(&data[pos..pos + 8]);
        *d = u64::from_le_bytes(b) as usize;
        pos += 8;
    }
    let [dr, dc, tr, tc] = dims;
    let need = (dr * dc + tr * tc) * 8;
    if data.len() < pos + need {
        return Err(Error::data("features file truncated"));
    }
    let read_block = |rows: usize, cols: usize, pos: &mut usize| -> Array2<f64> {
        let mut v = Vec::with_capacity(rows * cols);
        for i in 0..rows * cols {
            let mut b = [0u8; 8];
            b.copy_from_slice(&data[*pos + i * 8..*pos + i * 8 + 8]);
            v.push(f64::from_le_bytes(b));
        }
        *pos += rows * cols * 8;
        Array2::from_shape_vec((rows, cols), v).unwrap()
    };
    let diffs = read_block(dr, dc, &mut pos);
    let targets = read_block(tr, tc, &mut pos);
    Ok(SessionFeatures {
        session_id,
        diffs,
        targets,
    })
}
