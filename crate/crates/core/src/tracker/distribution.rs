use crate::error::{invalid, Result};
use crate::grid::Heatmap;

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Support {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Support {
    fn union(self, other: Support) -> Support {
        Support {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    fn intersects(&self, other: &Support) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }
}

/// A heatmap together with the bounding rectangle of its nonzero pixels and
/// its total mass, so that pairwise costs only touch the overlap region.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDistribution {
    map: Heatmap,
    support: Option<Support>,
    mass: f64,
}

impl PixelDistribution {
    pub fn new(map: Heatmap) -> Self {
        let (h, w) = map.dims();
        let full = Support {
            x0: 0,
            y0: 0,
            x1: w.saturating_sub(1),
            y1: h.saturating_sub(1),
        };
        Self::within(map, full)
    }

    /// Like [`PixelDistribution::new`] but only scans `region`; the caller
    /// guarantees the map is zero outside it.
    fn within(map: Heatmap, region: Support) -> Self {
        let w = map.width();
        let mut support: Option<Support> = None;
        let mut mass = 0.0;
        if !map.is_empty() {
            for y in region.y0..=region.y1 {
                let row = &map.data()[y * w + region.x0..=y * w + region.x1];
                let Some(first) = row.iter().position(|&v| v != 0.0) else {
                    continue;
                };
                let last = row.iter().rposition(|&v| v != 0.0).unwrap_or(first);
                mass += row[first..=last].iter().sum::<f64>();
                let s = Support {
                    x0: region.x0 + first,
                    y0: y,
                    x1: region.x0 + last,
                    y1: y,
                };
                support = Some(support.map_or(s, |cur| cur.union(s)));
            }
        }
        Self { map, support, mass }
    }

    pub fn map(&self) -> &Heatmap {
        &self.map
    }

    pub fn into_map(self) -> Heatmap {
        self.map
    }

    pub fn support(&self) -> Option<Support> {
        self.support
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn peak(&self) -> Option<(usize, usize, f64)> {
        self.map.argmax()
    }

    /// Bilinear translation by `(dx, dy)` heatmap pixels with zero fill;
    /// only the shifted support is evaluated.
    pub fn translate(&self, dx: f64, dy: f64) -> PixelDistribution {
        let (h, w) = self.map.dims();
        let Some(s) = self.support else {
            return self.clone();
        };
        if dx == 0.0 && dy == 0.0 {
            return self.clone();
        }
        let mut out = Heatmap::zeros(h, w);
        let lo_x = ((s.x0 as f64 + dx).floor() as i64).max(0);
        let hi_x = ((s.x1 as f64 + dx).ceil() as i64).min(w as i64 - 1);
        let lo_y = ((s.y0 as f64 + dy).floor() as i64).max(0);
        let hi_y = ((s.y1 as f64 + dy).ceil() as i64).min(h as i64 - 1);
        if lo_x > hi_x || lo_y > hi_y {
            return PixelDistribution {
                map: out,
                support: None,
                mass: 0.0,
            };
        }
        for y in lo_y..=hi_y {
            for x in lo_x..=hi_x {
                out.set(
                    x as usize,
                    y as usize,
                    self.map.sample(x as f64 - dx, y as f64 - dy),
                );
            }
        }
        let region = Support {
            x0: lo_x as usize,
            y0: lo_y as usize,
            x1: hi_x as usize,
            y1: hi_y as usize,
        };
        PixelDistribution::within(out, region)
    }

    /// Normalized L1 distance `Σ|a−b| / (Σa + Σb)`, computed over the union
    /// of the two supports.
    pub fn cost(&self, other: &PixelDistribution) -> Result<f64> {
        if self.map.dims() != other.map.dims() {
            return Err(invalid(format!(
                "heatmap dims {:?} vs {:?}",
                self.map.dims(),
                other.map.dims()
            )));
        }
        let denom = self.mass + other.mass + HEATMAP_COST_EPS;
        let (a, b) = match (self.support, other.support) {
            (None, None) => return Ok(0.0),
            (Some(_), None) | (None, Some(_)) => return Ok((self.mass + other.mass) / denom),
            (Some(a), Some(b)) => (a, b),
        };
        if !a.intersects(&b) {
            return Ok((self.mass + other.mass) / denom);
        }
        let u = a.union(b);
        let mut num = 0.0;
        for y in u.y0..=u.y1 {
            for x in u.x0..=u.x1 {
                num += (self.map.get(x, y) - other.map.get(x, y)).abs();
            }
        }
        Ok(num / denom)
    }
}

/// Guards the cost denominator against two empty maps.
pub const HEATMAP_COST_EPS: f64 = 1e-9;

/// Association cost between two heatmaps: `Σ|a−b| / (Σa + Σb + 1e-9)`.
pub fn heatmap_cost(a: &Heatmap, b: &Heatmap) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(invalid(format!("heatmap dims {:?} vs {:?}", a.dims(), b.dims())));
    }
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum();
    Ok(num / (a.sum() + b.sum() + HEATMAP_COST_EPS))
}
