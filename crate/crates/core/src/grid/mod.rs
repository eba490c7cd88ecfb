//! Dense grid containers: multi-channel feature maps, single-channel
//! heatmaps and two-channel displacement fields.
//!
//! Coordinates follow image convention: `x` is the column, `y` is the row,
//! and the texel `(x, y)` sits at integer coordinates. Multi-channel data is
//! stored channel-planar, each plane row-major.

mod codec;
mod sample;

pub use codec::{read_grid, read_grid_file, write_grid, write_grid_file, GRID_MAGIC, GRID_VERSION};
pub use sample::{bilinear_sample, resize_flow, warp};

use crate::error::{invalid, Result};

fn check_finite(data: &[f64], what: &str) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(invalid(format!("{what}: non-finite value at index {i}"))),
        None => Ok(()),
    }
}

/// An `H×W×d` pixel embedding map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height * width * channels != data.len() {
            return Err(invalid(format!(
                "feature grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        check_finite(&data, "feature grid")?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Builds a grid from a per-pixel closure returning the channel vector.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let mut grid = Self::zeros(height, width, channels);
        let mut buf = vec![0.0; channels];
        for y in 0..height {
            for x in 0..width {
                buf.iter_mut().for_each(|v| *v = 0.0);
                f(x, y, &mut buf);
                for (c, v) in buf.iter().enumerate() {
                    grid.data[c * height * width + y * width + x] = *v;
                }
            }
        }
        check_finite(&grid.data, "feature grid")?;
        Ok(grid)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.data[channel * self.pixels() + y * self.width + x]
    }

    pub(crate) fn set(&mut self, x: usize, y: usize, channel: usize, value: f64) {
        let n = self.pixels();
        self.data[channel * n + y * self.width + x] = value;
    }

    /// Channel vector at pixel `(x, y)`.
    pub fn pixel(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(x, y, c)).collect()
    }

    /// Copies the channel vector at flat pixel index `p` into `out`.
    pub fn pixel_into(&self, p: usize, out: &mut [f64]) {
        let n = self.pixels();
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            *o = self.data[c * n + p];
        }
    }

    /// Element-wise `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &FeatureGrid, b: f64) -> Result<Self> {
        self.expect_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        FeatureGrid::new(self.height, self.width, self.channels, data)
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        FeatureGrid::new(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|v| v * s).collect(),
        )
    }

    /// 2×2 average pooling; odd trailing rows/columns are dropped.
    pub fn downsample2(&self) -> Result<Self> {
        let (h, w) = (self.height / 2, self.width / 2);
        if h == 0 || w == 0 {
            return Err(invalid(format!(
                "cannot downsample a {}x{} grid",
                self.height, self.width
            )));
        }
        let mut out = FeatureGrid::zeros(h, w, self.channels);
        for c in 0..self.channels {
            for y in 0..h {
                for x in 0..w {
                    let s = self.get(2 * x, 2 * y, c)
                        + self.get(2 * x + 1, 2 * y, c)
                        + self.get(2 * x, 2 * y + 1, c)
                        + self.get(2 * x + 1, 2 * y + 1, c);
                    out.set(x, y, c, 0.25 * s);
                }
            }
        }
        Ok(out)
    }

    pub(crate) fn expect_same_shape(&self, other: &FeatureGrid) -> Result<()> {
        if self.height != other.height || self.width != other.width || self.channels != other.channels
        {
            return Err(invalid(format!(
                "shape mismatch: {}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )));
        }
        Ok(())
    }
}

/// A single-channel `H×W` grid: similarity weights and object heatmaps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Per-object center heatmap.
pub type Heatmap = ScalarGrid;

impl ScalarGrid {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height * width != data.len() {
            return Err(invalid(format!(
                "scalar grid {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        check_finite(&data, "scalar grid")?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Position and value of the maximum; ties resolve to the first pixel in
    /// row-major order.
    pub fn argmax(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.data.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, v)| (i % self.width, i / self.width, v))
    }

    /// Bilinear sample with zero border padding.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        sample::sample_plane(&self.data, self.height, self.width, x, y)
    }

    /// Moves content by `(dx, dy)` pixels: `out(p) = self(p − d)`, zero fill.
    pub fn translate(&self, dx: f64, dy: f64) -> ScalarGrid {
        let mut out = ScalarGrid::zeros(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.data[y * self.width + x] = self.sample(x as f64 - dx, y as f64 - dy);
            }
        }
        out
    }

    /// Bilinear resampling to new dims (half-pixel centers, edge clamp).
    pub fn resize(&self, height: usize, width: usize) -> Result<ScalarGrid> {
        if height == 0 || width == 0 || self.is_empty() {
            return Err(invalid("resize needs non-empty source and target"));
        }
        if (height, width) == self.dims() {
            return Ok(self.clone());
        }
        let data = sample::resample_plane(&self.data, self.height, self.width, height, width);
        ScalarGrid::new(height, width, data)
    }

    pub fn into_feature(self) -> FeatureGrid {
        FeatureGrid {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data,
        }
    }

    pub fn from_feature(grid: &FeatureGrid, channel: usize) -> Result<Self> {
        if channel >= grid.channels() {
            return Err(invalid(format!(
                "channel {channel} out of range for {} channels",
                grid.channels()
            )));
        }
        Ok(Self {
            height: grid.height(),
            width: grid.width(),
            data: grid.plane(channel).to_vec(),
        })
    }
}

/// Per-pixel displacement in pixel units; `(dx, dy)` at `p` points at the
/// location the warped output reads from.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, dx: Vec<f64>, dy: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if dx.len() != n || dy.len() != n {
            return Err(invalid(format!(
                "flow {height}x{width} needs {n} values per axis, got {} and {}",
                dx.len(),
                dy.len()
            )));
        }
        check_finite(&dx, "flow dx")?;
        check_finite(&dy, "flow dy")?;
        Ok(Self {
            height,
            width,
            dx,
            dy,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0, 0.0)
    }

    pub fn constant(height: usize, width: usize, dx: f64, dy: f64) -> Self {
        Self {
            height,
            width,
            dx: vec![dx; height * width],
            dy: vec![dy; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    pub(crate) fn set(&mut self, x: usize, y: usize, dx: f64, dy: f64) {
        let i = y * self.width + x;
        self.dx[i] = dx;
        self.dy[i] = dy;
    }

    /// Two-channel grid view (channel 0 = dx, channel 1 = dy).
    pub fn to_feature(&self) -> FeatureGrid {
        let mut data = self.dx.clone();
        data.extend_from_slice(&self.dy);
        FeatureGrid {
            height: self.height,
            width: self.width,
            channels: 2,
            data,
        }
    }

    pub fn from_feature(grid: &FeatureGrid) -> Result<Self> {
        if grid.channels() != 2 {
            return Err(invalid(format!(
                "flow needs 2 channels, got {}",
                grid.channels()
            )));
        }
        FlowField::new(
            grid.height(),
            grid.width(),
            grid.plane(0).to_vec(),
            grid.plane(1).to_vec(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch_and_nan() {
        assert!(FeatureGrid::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(FeatureGrid::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(ScalarGrid::new(1, 2, vec![0.0, f64::INFINITY]).is_err());
        assert!(FlowField::new(1, 1, vec![0.0], vec![]).is_err());
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let g = ScalarGrid::new(2, 2, vec![0.5, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(g.argmax(), Some((1, 0, 1.0)));
    }

    #[test]
    fn integer_translation_moves_peak() {
        let mut g = ScalarGrid::zeros(5, 8);
        g.set(2, 1, 1.0);
        let t = g.translate(3.0, 2.0);
        assert_eq!(t.argmax(), Some((5, 3, 1.0)));
        assert_eq!(t.sum(), 1.0);
    }

    #[test]
    fn downsample_averages_blocks() {
        let g = FeatureGrid::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(g.downsample2().unwrap().data(), &[2.5]);
        assert!(FeatureGrid::zeros(1, 4, 1).downsample2().is_err());
    }
}
