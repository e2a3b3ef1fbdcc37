use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real multichannel series stored row-major as (sample, channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TimeSeries {
    pub fn new(samples: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if samples == 0 || channels == 0 {
            return Err(Error::validation("series must have at least one sample and channel"));
        }
        if data.len() != samples * channels {
            return Err(Error::validation(format!(
                "series data has {} values, expected {samples} x {channels}",
                data.len()
            )));
        }
        Ok(TimeSeries { samples, channels, data })
    }

    pub fn zeros(samples: usize, channels: usize) -> Self {
        TimeSeries { samples, channels, data: vec![0.0; samples * channels] }
    }

    /// Build from per-channel columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let channels = columns.len();
        let samples = columns.first().map(Vec::len).unwrap_or(0);
        if columns.iter().any(|c| c.len() != samples) {
            return Err(Error::validation("columns differ in length"));
        }
        let mut data = vec![0.0; samples * channels];
        for (j, col) in columns.iter().enumerate() {
            for (k, v) in col.iter().enumerate() {
                data[k * channels + j] = *v;
            }
        }
        TimeSeries::new(samples, channels, data)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.channels + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, j: usize, v: f64) {
        self.data[k * self.channels + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.samples).map(|k| self.get(k, j)).collect()
    }

    /// Keep the listed channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        if channels.iter().any(|&j| j >= self.channels) {
            return Err(Error::validation("channel index out of range"));
        }
        let cols: Vec<Vec<f64>> = channels.iter().map(|&j| self.column(j)).collect();
        TimeSeries::from_columns(&cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_round_trip() {
        let cols = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let s = TimeSeries::from_columns(&cols).unwrap();
        assert_eq!(s.get(2, 1), 6.0);
        assert_eq!(s.column(0), cols[0]);
        assert_eq!(s.select_channels(&[1]).unwrap().column(0), cols[1]);
    }

    #[test]
    fn rejects_bad_length() {
        assert!(TimeSeries::new(3, 2, vec![0.0; 5]).is_err());
    }
}
