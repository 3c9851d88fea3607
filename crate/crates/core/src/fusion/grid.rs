use rand::Rng;

use crate::error::{Error, Result};

/// `rows × cols × channels` token grid, channel-fastest row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TokenGrid {
    pub fn new(rows: usize, cols: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "token grid dimensions must be positive, got {rows}x{cols}x{channels}"
            )));
        }
        if data.len() != rows * cols * channels {
            return Err(Error::invalid(format!(
                "token grid data has {} values, expected {}",
                data.len(),
                rows * cols * channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("token grid contains non-finite values"));
        }
        Ok(TokenGrid {
            rows,
            cols,
            channels,
            data,
        })
    }

    pub fn filled(rows: usize, cols: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, channels, vec![value; rows * cols * channels])
    }

    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Result<Self> {
        Self::filled(rows, cols, channels, 0.0)
    }

    pub fn random(
        rows: usize,
        cols: usize,
        channels: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let data = (0..rows * cols * channels)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        Self::new(rows, cols, channels, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn num_tokens(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn token(&self, r: usize, c: usize) -> &[f64] {
        let start = (r * self.cols + c) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn token_at(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    pub fn tokens(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    pub(crate) fn from_parts_unchecked(
        rows: usize,
        cols: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), rows * cols * channels);
        TokenGrid {
            rows,
            cols,
            channels,
            data,
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &TokenGrid, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::invalid(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub(crate) fn zip_map(&self, other: &TokenGrid, f: impl Fn(f64, f64) -> f64) -> TokenGrid {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        TokenGrid::from_parts_unchecked(self.rows, self.cols, self.channels, data)
    }

    pub fn max_abs_diff(&self, other: &TokenGrid) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-token, per-channel gate values, each strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct GateField(TokenGrid);

impl GateField {
    pub fn new(grid: TokenGrid) -> Result<Self> {
        if let Some(v) = grid.data().iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::invalid(format!("gate value {v} outside (0, 1)")));
        }
        Ok(GateField(grid))
    }

    /// Constant gate; `value` must lie in (0, 1).
    pub fn uniform(rows: usize, cols: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(TokenGrid::filled(rows, cols, channels, value)?)
    }

    pub(crate) fn from_grid_unchecked(grid: TokenGrid) -> Self {
        GateField(grid)
    }

    pub fn grid(&self) -> &TokenGrid {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }

    pub fn mean(&self) -> f64 {
        self.values().iter().sum::<f64>() / self.values().len() as f64
    }
}
