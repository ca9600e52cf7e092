//! First-order auto-regressive prediction of the next interval's value.
//!
//! `û = μ + φ·(u_t − μ)`, with μ the window mean and φ the conditional
//! least-squares AR(1) coefficient of the window, clipped to a
//! configurable range (default `[0, 1]`). Fewer than three samples force
//! φ = 0, so the prediction is the mean.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ForecastError {
    #[error("insufficient history")]
    InsufficientHistory,
    #[error("insufficient history in cell ({row},{col})")]
    InsufficientHistoryAt { row: usize, col: usize },
    #[error("dimension mismatch: {histories} histories vs {current} current values")]
    DimensionMismatch { histories: usize, current: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Config {
    /// Number of past intervals retained.
    pub window: usize,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl Default for Ar1Config {
    fn default() -> Self {
        Ar1Config { window: 10, phi_min: 0.0, phi_max: 1.0 }
    }
}

/// Bounded history of per-interval averages, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    window: usize,
    values: VecDeque<f64>,
}

impl SampleSeries {
    pub fn new(window: usize) -> Self {
        SampleSeries { window: window.max(1), values: VecDeque::with_capacity(window.max(1)) }
    }

    pub fn from_values(window: usize, values: &[f64]) -> Self {
        let mut s = Self::new(window);
        for &v in values {
            s.push(v);
        }
        s
    }

    /// Appends a sample, clamped to ≥ 0, evicting the oldest beyond the window.
    pub fn push(&mut self, value: f64) {
        let v = if value.is_finite() { value.max(0.0) } else { 0.0 };
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.back().copied()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn mean(&self) -> Option<f64> {
        if self.values.is_empty() {
            None
        } else {
            // Shifted by the first sample so a constant window averages exactly.
            let base = self.values[0];
            Some(base + self.values.iter().map(|v| v - base).sum::<f64>() / self.values.len() as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Prediction(pub f64);

/// Lag-1 regression coefficient of the mean-centred window.
pub fn estimate_phi(series: &SampleSeries, cfg: &Ar1Config) -> f64 {
    if series.len() < 3 {
        return 0.0;
    }
    let mu = series.mean().unwrap_or(0.0);
    let dev: Vec<f64> = series.values().map(|v| v - mu).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for w in dev.windows(2) {
        num += w[0] * w[1];
        den += w[0] * w[0];
    }
    if den <= f64::EPSILON * 1e3 {
        return 0.0;
    }
    (num / den).clamp(cfg.phi_min, cfg.phi_max)
}

pub fn predict_next_with(series: &SampleSeries, u_t: f64, cfg: &Ar1Config) -> Result<Prediction, ForecastError> {
    let mu = series.mean().ok_or(ForecastError::InsufficientHistory)?;
    let phi = estimate_phi(series, cfg);
    let v = mu + phi * (u_t - mu);
    Ok(Prediction(if v.is_finite() { v.max(0.0) } else { 0.0 }))
}

pub fn predict_next(series: &SampleSeries, u_t: f64) -> Result<Prediction, ForecastError> {
    predict_next_with(series, u_t, &Ar1Config::default())
}

/// Element-wise [`predict_next`] over a row-major n×n grid.
pub fn predict_matrix(
    histories: &[SampleSeries],
    current: &[f64],
    cfg: &Ar1Config,
) -> Result<Vec<f64>, ForecastError> {
    if histories.len() != current.len() {
        return Err(ForecastError::DimensionMismatch { histories: histories.len(), current: current.len() });
    }
    let n = isqrt(histories.len());
    histories
        .iter()
        .zip(current)
        .enumerate()
        .map(|(i, (h, &u))| {
            predict_next_with(h, u, cfg)
                .map(|p| p.0)
                .map_err(|_| ForecastError::InsufficientHistoryAt { row: i / n.max(1), col: i % n.max(1) })
        })
        .collect()
}

fn isqrt(len: usize) -> usize {
    let mut n = 0;
    while (n + 1) * (n + 1) <= len {
        n += 1;
    }
    n
}

/// Per-cell histories for an n×n matrix, fed one interval mean at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixForecaster {
    n: usize,
    cfg: Ar1Config,
    series: Vec<SampleSeries>,
}

impl MatrixForecaster {
    pub fn new(n: usize, cfg: Ar1Config) -> Self {
        MatrixForecaster { n, cfg, series: (0..n * n).map(|_| SampleSeries::new(cfg.window)).collect() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Records the finished interval's means and predicts the next interval.
    pub fn advance(&mut self, interval_means: &[f64]) -> Result<Vec<f64>, ForecastError> {
        if interval_means.len() != self.series.len() {
            return Err(ForecastError::DimensionMismatch {
                histories: self.series.len(),
                current: interval_means.len(),
            });
        }
        for (s, &u) in self.series.iter_mut().zip(interval_means) {
            s.push(u);
        }
        predict_matrix(&self.series, interval_means, &self.cfg)
    }

    pub fn history(&self, row: usize, col: usize) -> &SampleSeries {
        &self.series[row * self.n + col]
    }
}
