//! Synthetic beat streams and the stream CSV format.
//!
//! Each beat is a 1024-sample EGM-like waveform (P wave, QRS spike, T wave)
//! framed as 1x32x32. Normal and anomalous beats differ in amplitude and
//! QRS width, so the detector's scores form two clusters. Drift scales every
//! beat's amplitude linearly from 1 at the first beat to `1 + drift` at the
//! last.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::model::{Dims, Tensor, FRAME_DIMS};

#[derive(Clone, Debug, PartialEq)]
pub struct Beat {
    pub index: usize,
    /// Ground truth: true for an anomalous beat.
    pub label: bool,
    pub frame: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreamSpec {
    pub seed: u64,
    pub n_beats: usize,
    pub anomaly_rate: f64,
    /// Relative amplitude growth over the stream; 0.3 means +30% by the end.
    pub drift: f64,
    pub normal_amplitude: f64,
    pub anomaly_amplitude: f64,
    /// Standard deviation of the per-beat amplitude, relative to its mean.
    pub amplitude_jitter: f64,
    /// Standard deviation of per-sample noise in counts.
    pub noise: f64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        StreamSpec {
            seed: 7,
            n_beats: 100,
            anomaly_rate: 0.1,
            drift: 0.0,
            normal_amplitude: 50.0,
            anomaly_amplitude: 65.0,
            amplitude_jitter: 0.06,
            noise: 2.0,
        }
    }
}

impl StreamSpec {
    pub fn new(seed: u64, n_beats: usize, anomaly_rate: f64, drift: f64) -> Self {
        StreamSpec { seed, n_beats, anomaly_rate, drift, ..Default::default() }
    }
}

fn bump(t: f64, center: f64, width: f64) -> f64 {
    let z = (t - center) / width;
    (-z * z).exp()
}

/// Noise-free beat shape in `[0, 1]`-ish units.
pub fn beat_template(anomalous: bool, n: usize) -> Vec<f64> {
    let qrs_width = if anomalous { 0.03 } else { 0.025 };
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            0.15 * bump(t, 0.2, 0.03) + bump(t, 0.4, qrs_width) + 0.3 * bump(t, 0.7, 0.06)
        })
        .collect()
}

/// Seeded, reproducible stream. Exactly `round(anomaly_rate * n_beats)`
/// beats are anomalous, at seeded positions.
pub fn gen_stream(spec: &StreamSpec) -> Result<Vec<Beat>, IoError> {
    if !(0.0..=1.0).contains(&spec.anomaly_rate) {
        return Err(IoError::InvalidRate(spec.anomaly_rate));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_anom = (spec.anomaly_rate * spec.n_beats as f64).round() as usize;
    let mut labels = vec![false; spec.n_beats];
    labels[..n_anom].iter_mut().for_each(|l| *l = true);
    // Fisher-Yates with the stream's own generator
    for i in (1..labels.len()).rev() {
        labels.swap(i, rng.gen_range(0..=i));
    }
    let n = FRAME_DIMS.numel();
    let templates = [beat_template(false, n), beat_template(true, n)];
    let noise = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| IoError::Stream(e.to_string()))?;
    let jitter = Normal::new(1.0, spec.amplitude_jitter.max(0.0)).map_err(|e| IoError::Stream(e.to_string()))?;
    let span = spec.n_beats.saturating_sub(1).max(1) as f64;
    let beats = labels
        .into_iter()
        .enumerate()
        .map(|(index, label)| {
            let base = if label { spec.anomaly_amplitude } else { spec.normal_amplitude };
            let amp = base * (1.0 + spec.drift * index as f64 / span) * jitter.sample(&mut rng);
            let data = templates[label as usize]
                .iter()
                .map(|&v| (amp * v + noise.sample(&mut rng)).round().clamp(-128.0, 127.0) as i8)
                .collect();
            Beat { index, label, frame: Tensor::from_i8(FRAME_DIMS, data).expect("frame size") }
        })
        .collect();
    Ok(beats)
}

/// `beat_index,label,s0..s{n-1}` with one beat per row.
pub fn write_stream_csv<W: Write>(beats: &[Beat], out: W) -> Result<(), IoError> {
    let n = beats.first().map_or(FRAME_DIMS.numel(), |b| b.frame.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["beat_index".to_string(), "label".to_string()];
    header.extend((0..n).map(|i| format!("s{i}")));
    w.write_record(&header)?;
    for b in beats {
        let mut rec = vec![b.index.to_string(), (b.label as u8).to_string()];
        rec.extend(b.frame.data().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a stream CSV; frames are shaped as `dims`, which must match the
/// row width.
pub fn read_stream_csv<R: Read>(input: R, dims: Dims) -> Result<Vec<Beat>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    let width = r.headers()?.len();
    if width != dims.numel() + 2 {
        return Err(IoError::Stream(format!("rows have {} samples, frames need {}", width.saturating_sub(2), dims.numel())));
    }
    let mut beats = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| IoError::Stream(format!("row {row}: {what}"));
        let index = rec[0].parse().map_err(|_| bad("bad beat_index"))?;
        let label = match &rec[1] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("label must be 0 or 1")),
        };
        let data = rec
            .iter()
            .skip(2)
            .map(|s| s.parse::<i8>().map_err(|_| bad("sample outside signed 8-bit range")))
            .collect::<Result<Vec<_>, _>>()?;
        beats.push(Beat { index, label, frame: Tensor::from_i8(dims, data).map_err(|e| bad(&e.to_string()))? });
    }
    Ok(beats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_anomalies_at_zero_rate() {
        let beats = gen_stream(&StreamSpec::new(7, 100, 0.0, 0.0)).unwrap();
        assert_eq!(beats.len(), 100);
        assert!(beats.iter().all(|b| !b.label));
    }

    #[test]
    fn rate_is_exact_and_validated() {
        let beats = gen_stream(&StreamSpec::new(3, 200, 0.1, 0.0)).unwrap();
        assert_eq!(beats.iter().filter(|b| b.label).count(), 20);
        assert!(matches!(gen_stream(&StreamSpec::new(3, 10, 1.5, 0.0)), Err(IoError::InvalidRate(_))));
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let beats = gen_stream(&StreamSpec::new(7, 5, 0.2, 0.3)).unwrap();
        let mut a = Vec::new();
        write_stream_csv(&beats, &mut a).unwrap();
        let mut b = Vec::new();
        write_stream_csv(&gen_stream(&StreamSpec::new(7, 5, 0.2, 0.3)).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(read_stream_csv(a.as_slice(), FRAME_DIMS).unwrap(), beats);
    }
}
