//! Detection threshold adaptation.
//!
//! Detector outputs are binned into a windowed histogram. Once the window is
//! full, the least-occupied bin inside the sensitive range is found (ties to
//! the lowest bin) and the threshold moves to the middle of that bin's value
//! interval. All binning is integer arithmetic, mirroring a comparator chain.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdaptError {
    #[error("window holds {have} of {need} samples")]
    WindowNotFull { have: usize, need: usize },
    #[error("invalid adaptation config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Ring buffer: each new sample evicts the oldest.
    #[default]
    Sliding,
    /// The window empties once full and refills from scratch.
    Tumbling,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Middle of the chosen bin's value interval.
    #[default]
    Midpoint,
    /// Mean of the window samples that fell in the chosen bin; the midpoint
    /// when the bin is empty.
    SampleMean,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    /// Bin over the configured `[lo, hi)`.
    #[default]
    Fixed,
    /// Re-bin the window over its own `[min, max + 1)` at every update, so
    /// the histogram follows outputs that drift out of the configured range.
    Window,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub num_bins: usize,
    /// Inclusive lower edge of the binned range.
    pub lo: i32,
    /// Exclusive upper edge of the binned range.
    pub hi: i32,
    pub window_samples: usize,
    /// Reporting label for the span the window stands for.
    pub t_days: u32,
    /// Inclusive bin range searched by the argmin; `None` means every
    /// interior bin.
    pub sensitive_range: Option<(usize, usize)>,
    pub window: WindowKind,
    pub rule: ThresholdRule,
    pub range_mode: RangeMode,
    /// Samples between refreshes once the window is full; `None` means a
    /// quarter window.
    pub refresh_interval: Option<usize>,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            num_bins: 16,
            lo: i16::MIN as i32,
            hi: i16::MAX as i32 + 1,
            window_samples: 4096,
            t_days: 3,
            sensitive_range: None,
            window: WindowKind::Sliding,
            rule: ThresholdRule::Midpoint,
            range_mode: RangeMode::Fixed,
            refresh_interval: None,
        }
    }
}

impl AdaptConfig {
    pub fn new(num_bins: usize, lo: i32, hi: i32, window_samples: usize) -> Self {
        AdaptConfig { num_bins, lo, hi, window_samples, ..Default::default() }
    }

    /// Range spanning the given calibration outputs.
    pub fn with_range_from(mut self, samples: &[i16]) -> Self {
        if let (Some(&min), Some(&max)) = (samples.iter().min(), samples.iter().max()) {
            self.lo = min as i32;
            self.hi = max as i32 + 1;
        }
        self
    }

    pub fn sensitive_bins(&self) -> (usize, usize) {
        self.sensitive_range.unwrap_or(if self.num_bins >= 3 { (1, self.num_bins - 2) } else { (0, self.num_bins - 1) })
    }

    pub fn refresh(&self) -> usize {
        match self.window {
            WindowKind::Tumbling => self.window_samples,
            WindowKind::Sliding => self.refresh_interval.unwrap_or(self.window_samples / 4).max(1),
        }
    }

    pub fn validate(&self) -> Result<(), AdaptError> {
        let bad = |m: &str| Err(AdaptError::InvalidConfig(m.to_string()));
        if self.num_bins < 2 {
            return bad("need at least 2 bins");
        }
        if self.lo >= self.hi {
            return bad("range must satisfy lo < hi");
        }
        if self.lo < i16::MIN as i32 || self.hi > i16::MAX as i32 + 1 {
            return bad("range must lie within signed 16-bit outputs");
        }
        if self.window_samples < self.num_bins {
            return bad("window must hold at least one sample per bin");
        }
        let (b_lo, b_hi) = self.sensitive_bins();
        if b_lo > b_hi || b_hi >= self.num_bins {
            return bad("sensitive range must satisfy b_lo <= b_hi < bins");
        }
        if self.refresh_interval == Some(0) {
            return bad("refresh interval must be positive");
        }
        Ok(())
    }

    /// `floor(B (x - lo) / (hi - lo))`, clamped to the edge bins.
    pub fn bin_of(&self, x: i16) -> usize {
        let num = self.num_bins as i64 * (x as i64 - self.lo as i64);
        let b = num.div_euclid(self.hi as i64 - self.lo as i64);
        b.clamp(0, self.num_bins as i64 - 1) as usize
    }

    /// Midpoint of bin `b`'s value interval, rounded half up.
    pub fn bin_midpoint(&self, b: usize) -> i32 {
        let den = 2 * self.num_bins as i64;
        let num = den * self.lo as i64 + (2 * b as i64 + 1) * (self.hi as i64 - self.lo as i64);
        (2 * num + den).div_euclid(2 * den) as i32
    }
}

/// Bin counts over the current window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistogramState {
    counts: Vec<u64>,
    sums: Vec<i64>,
    window: VecDeque<i16>,
    samples_seen: u64,
}

impl HistogramState {
    pub fn new(cfg: &AdaptConfig) -> Self {
        HistogramState {
            counts: vec![0; cfg.num_bins],
            sums: vec![0; cfg.num_bins],
            window: VecDeque::with_capacity(cfg.window_samples),
            samples_seen: 0,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn occupancy(&self) -> usize {
        self.window.len()
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn is_full(&self, cfg: &AdaptConfig) -> bool {
        self.window.len() == cfg.window_samples
    }

    fn evict(&mut self, cfg: &AdaptConfig) {
        if let Some(old) = self.window.pop_front() {
            let b = cfg.bin_of(old);
            self.counts[b] -= 1;
            self.sums[b] -= old as i64;
        }
    }

    pub fn observe(&mut self, cfg: &AdaptConfig, x: i16) {
        if self.is_full(cfg) {
            match cfg.window {
                WindowKind::Sliding => self.evict(cfg),
                WindowKind::Tumbling => {
                    self.window.clear();
                    self.counts.iter_mut().for_each(|c| *c = 0);
                    self.sums.iter_mut().for_each(|s| *s = 0);
                }
            }
        }
        let b = cfg.bin_of(x);
        self.counts[b] += 1;
        self.sums[b] += x as i64;
        self.window.push_back(x);
        self.samples_seen += 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ThresholdState {
    pub threshold: i16,
    pub last_update_sample: u64,
    pub update_count: u64,
}

impl ThresholdState {
    pub fn new(threshold: i16) -> Self {
        ThresholdState { threshold, last_update_sample: 0, update_count: 0 }
    }
}

/// Lowest-index least-occupied bin within `[b_lo, b_hi]`.
pub fn argmin_bin(counts: &[u64], (b_lo, b_hi): (usize, usize)) -> usize {
    (b_lo..=b_hi).min_by_key(|&b| (counts[b], b)).expect("nonempty sensitive range")
}

/// Recomputes the threshold from a full window.
pub fn adapt_threshold(hist: &HistogramState, cfg: &AdaptConfig, state: &ThresholdState) -> Result<ThresholdState, AdaptError> {
    if !hist.is_full(cfg) {
        return Err(AdaptError::WindowNotFull { have: hist.occupancy(), need: cfg.window_samples });
    }
    let rebinned;
    let (cfg, counts, sums) = match cfg.range_mode {
        RangeMode::Fixed => (*cfg, &hist.counts, &hist.sums),
        RangeMode::Window => {
            let lo = *hist.window.iter().min().expect("full window") as i32;
            let hi = *hist.window.iter().max().expect("full window") as i32 + 1;
            let wcfg = AdaptConfig { lo, hi, ..*cfg };
            let mut counts = vec![0u64; cfg.num_bins];
            let mut sums = vec![0i64; cfg.num_bins];
            for &x in &hist.window {
                let b = wcfg.bin_of(x);
                counts[b] += 1;
                sums[b] += x as i64;
            }
            rebinned = (counts, sums);
            (wcfg, &rebinned.0, &rebinned.1)
        }
    };
    let b = argmin_bin(counts, cfg.sensitive_bins());
    let t = match cfg.rule {
        ThresholdRule::SampleMean if counts[b] > 0 => {
            let n = counts[b] as i64;
            (2 * sums[b] + n).div_euclid(2 * n) as i32
        }
        _ => cfg.bin_midpoint(b),
    };
    let t = t.clamp(cfg.lo, cfg.hi - 1) as i16;
    Ok(ThresholdState { threshold: t, last_update_sample: hist.samples_seen, update_count: state.update_count + 1 })
}

/// Anomaly decision: strictly above the threshold.
pub fn detect(output: i16, threshold: i16) -> bool {
    output > threshold
}

/// Histogram, threshold and refresh cadence together: the first update
/// fires when the window fills, later ones every refresh interval.
#[derive(Clone, Debug)]
pub struct AdaptationEngine {
    cfg: AdaptConfig,
    hist: HistogramState,
    state: ThresholdState,
    since_update: usize,
}

impl AdaptationEngine {
    pub fn new(cfg: AdaptConfig, initial_threshold: i16) -> Result<Self, AdaptError> {
        cfg.validate()?;
        Ok(AdaptationEngine { hist: HistogramState::new(&cfg), cfg, state: ThresholdState::new(initial_threshold), since_update: 0 })
    }

    pub fn config(&self) -> &AdaptConfig {
        &self.cfg
    }

    pub fn threshold(&self) -> i16 {
        self.state.threshold
    }

    pub fn state(&self) -> ThresholdState {
        self.state
    }

    pub fn histogram(&self) -> &HistogramState {
        &self.hist
    }

    pub fn detect(&self, output: i16) -> bool {
        detect(output, self.state.threshold)
    }

    /// Records an output; returns the new threshold when a refresh fired.
    pub fn observe(&mut self, output: i16) -> Option<i16> {
        self.hist.observe(&self.cfg, output);
        if !self.hist.is_full(&self.cfg) {
            return None;
        }
        let due = self.state.update_count == 0 || {
            self.since_update += 1;
            self.since_update >= self.cfg.refresh()
        };
        if !due {
            return None;
        }
        self.since_update = 0;
        self.state = adapt_threshold(&self.hist, &self.cfg, &self.state).expect("window is full");
        Some(self.state.threshold)
    }
}
