use super::{FeatureGrid, FlowField};
use crate::error::{invalid, Result};

#[inline]
fn texel(plane: &[f64], height: usize, width: usize, ix: i64, iy: i64) -> f64 {
    if ix < 0 || iy < 0 || ix >= width as i64 || iy >= height as i64 {
        0.0
    } else {
        plane[iy as usize * width + ix as usize]
    }
}

/// Bilinear sample of one row-major plane; outside texels read as zero.
pub(crate) fn sample_plane(plane: &[f64], height: usize, width: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (ix, iy) = (x0 as i64, y0 as i64);
    let t00 = texel(plane, height, width, ix, iy);
    let t10 = texel(plane, height, width, ix + 1, iy);
    let t01 = texel(plane, height, width, ix, iy + 1);
    let t11 = texel(plane, height, width, ix + 1, iy + 1);
    (1.0 - fx) * (1.0 - fy) * t00 + fx * (1.0 - fy) * t10 + (1.0 - fx) * fy * t01 + fx * fy * t11
}

/// Resamples a plane with half-pixel centers and edge clamping.
pub(crate) fn resample_plane(
    plane: &[f64],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    let sy = src_h as f64 / dst_h as f64;
    let sx = src_w as f64 / dst_w as f64;
    let max_x = (src_w - 1) as f64;
    let max_y = (src_h - 1) as f64;
    let mut out = Vec::with_capacity(dst_h * dst_w);
    for j in 0..dst_h {
        let y = ((j as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
        for i in 0..dst_w {
            let x = ((i as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            out.push(sample_plane(plane, src_h, src_w, x, y));
        }
    }
    out
}

/// Bilinear interpolation of all channels at `(x, y)`; samples outside the
/// grid read as zero.
pub fn bilinear_sample(grid: &FeatureGrid, x: f64, y: f64) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(invalid("cannot sample an empty grid"));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(invalid(format!("non-finite sample location ({x}, {y})")));
    }
    Ok((0..grid.channels())
        .map(|c| sample_plane(grid.plane(c), grid.height(), grid.width(), x, y))
        .collect())
}

/// Backward warp: `out(p) = grid(p + flow(p))` for every pixel and channel.
pub fn warp(grid: &FeatureGrid, flow: &FlowField) -> Result<FeatureGrid> {
    if grid.dims() != flow.dims() {
        return Err(invalid(format!(
            "flow {:?} does not match grid {:?}",
            flow.dims(),
            grid.dims()
        )));
    }
    let (h, w) = grid.dims();
    let mut out = FeatureGrid::zeros(h, w, grid.channels());
    for c in 0..grid.channels() {
        let plane = grid.plane(c);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = flow.at(x, y);
                let v = sample_plane(plane, h, w, x as f64 + dx, y as f64 + dy);
                out.set(x, y, c, v);
            }
        }
    }
    Ok(out)
}

/// Resamples a flow field to new dims and rescales the displacements by the
/// per-axis resolution ratio.
pub fn resize_flow(flow: &FlowField, height: usize, width: usize) -> Result<FlowField> {
    if height == 0 || width == 0 {
        return Err(invalid(format!("invalid flow target {height}x{width}")));
    }
    if flow.dims() == (height, width) {
        return Ok(flow.clone());
    }
    if flow.height() == 0 || flow.width() == 0 {
        return Err(invalid("cannot resize an empty flow field"));
    }
    let ax = width as f64 / flow.width() as f64;
    let ay = height as f64 / flow.height() as f64;
    let dx = resample_plane(flow.dx(), flow.height(), flow.width(), height, width)
        .into_iter()
        .map(|v| v * ax)
        .collect();
    let dy = resample_plane(flow.dy(), flow.height(), flow.width(), height, width)
        .into_iter()
        .map(|v| v * ay)
        .collect();
    FlowField::new(height, width, dx, dy)
}
