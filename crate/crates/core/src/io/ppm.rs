use std::fs;
use std::path::Path;

use crate::error::{file_error, invalid, Result};
use crate::grid::Heatmap;
use crate::tracker::BBox;

pub type Rgb = [u8; 3];

/// Distinct, stable color for an id.
pub fn id_color(id: u64) -> Rgb {
    const PALETTE: [Rgb; 10] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
        [210, 245, 60],
        [250, 190, 190],
    ];
    PALETTE[(id % PALETTE.len() as u64) as usize]
}

/// RGB raster written as binary PPM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    height: usize,
    width: usize,
    rgb: Vec<u8>,
}

impl Canvas {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            rgb: vec![0; height * width * 3],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = (y as usize * self.width + x as usize) * 3;
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    /// Adds `color · value` per pixel, saturating; values are clipped to
    /// `[0, 1]`.
    pub fn add_heatmap(&mut self, map: &Heatmap, color: Rgb) -> Result<()> {
        if map.dims() != (self.height, self.width) {
            return Err(invalid(format!(
                "heatmap {:?} does not match canvas {:?}",
                map.dims(),
                (self.height, self.width)
            )));
        }
        for (p, &v) in map.data().iter().enumerate() {
            let v = v.clamp(0.0, 1.0);
            for (k, &c) in color.iter().enumerate() {
                let cur = self.rgb[p * 3 + k] as f64;
                self.rgb[p * 3 + k] = (cur + v * c as f64).round().min(255.0) as u8;
            }
        }
        Ok(())
    }

    /// One-pixel outline of `b`, clipped to the canvas.
    pub fn draw_box(&mut self, b: &BBox, color: Rgb) {
        let x0 = b.left().round() as i64;
        let y0 = b.top().round() as i64;
        let x1 = (b.left() + b.w).round() as i64 - 1;
        let y1 = (b.top() + b.h).round() as i64 - 1;
        for x in x0..=x1 {
            self.put(x, y0, color);
            self.put(x, y1, color);
        }
        for y in y0..=y1 {
            self.put(x0, y, color);
            self.put(x1, y, color);
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ppm()).map_err(file_error(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_size() {
        let c = Canvas::new(3, 4);
        let ppm = c.to_ppm();
        assert!(ppm.starts_with(b"P6\n4 3\n255\n"));
        assert_eq!(ppm.len(), 11 + 36);
    }

    #[test]
    fn heatmap_blends_and_saturates() {
        let mut c = Canvas::new(1, 2);
        let map = Heatmap::new(1, 2, vec![0.5, 2.0]).unwrap();
        c.add_heatmap(&map, [200, 100, 0]).unwrap();
        assert_eq!(c.pixel(0, 0), [100, 50, 0]);
        c.add_heatmap(&map, [200, 100, 0]).unwrap();
        assert_eq!(c.pixel(1, 0), [255, 200, 0]);
        assert!(c.add_heatmap(&Heatmap::zeros(2, 2), [1, 1, 1]).is_err());
    }

    #[test]
    fn box_outline_is_clipped() {
        let mut c = Canvas::new(10, 10);
        c.draw_box(&BBox::from_tlwh(2.0, 3.0, 4.0, 5.0), [9, 9, 9]);
        assert_eq!(c.pixel(2, 3), [9, 9, 9]);
        assert_eq!(c.pixel(5, 7), [9, 9, 9]);
        assert_eq!(c.pixel(3, 4), [0, 0, 0]);
        c.draw_box(&BBox::from_tlwh(-5.0, -5.0, 30.0, 30.0), [1, 2, 3]);
    }
}
