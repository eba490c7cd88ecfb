use super::{GroundTruthObject, TargetConfig};
use crate::error::{invalid, Result};
use crate::grid::Heatmap;

/// Isotropic Gaussian bump with peak value 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    pub cx: f64,
    pub cy: f64,
    pub sigma: f64,
}

impl GaussianKernel {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        (-(dx * dx + dy * dy) / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Half-width of the square window outside which rendering writes zeros.
    pub fn radius(&self) -> usize {
        (3.0 * self.sigma).ceil() as usize
    }
}

/// `σ = max(min_sigma, min(w, h) / (3·radius_divisor))`: the Gaussian
/// radius is `min(w, h) / radius_divisor` and σ is a third of it.
pub fn gaussian_sigma(width: f64, height: f64, config: &TargetConfig) -> f64 {
    (width.min(height) / (3.0 * config.radius_divisor)).max(config.min_sigma)
}

/// Renders an object's center heatmap on an `height × width` grid.
///
/// The peak sits on the pixel nearest to the object center and has value
/// exactly 1; pixels farther than the Gaussian radius (3σ per axis) are 0.
/// Centers outside the grid are clamped to the border.
pub fn render_gaussian(
    obj: &GroundTruthObject,
    height: usize,
    width: usize,
    config: &TargetConfig,
) -> Result<Heatmap> {
    let sigma = gaussian_sigma(obj.size.0, obj.size.1, config);
    render_gaussian_at(obj.center, sigma, 1.0, height, width)
}

/// Renders `amplitude · exp(−d²/2σ²)` around the pixel nearest `center`.
pub fn render_gaussian_at(
    center: (f64, f64),
    sigma: f64,
    amplitude: f64,
    height: usize,
    width: usize,
) -> Result<Heatmap> {
    if height == 0 || width == 0 {
        return Err(invalid(format!("heatmap dims {height}x{width} must be positive")));
    }
    if sigma.is_nan() || sigma <= 0.0 || !center.0.is_finite() || !center.1.is_finite() {
        return Err(invalid(format!("bad gaussian center {center:?} / sigma {sigma}")));
    }
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    let (mut cx, mut cy) = (center.0.round(), center.1.round());
    if cx < 0.0 || cx > max_x || cy < 0.0 || cy > max_y {
        log::warn!(
            "gaussian center ({:.2}, {:.2}) outside {width}x{height}, clamping",
            center.0,
            center.1
        );
        cx = cx.clamp(0.0, max_x);
        cy = cy.clamp(0.0, max_y);
    }
    let kernel = GaussianKernel { cx, cy, sigma };
    let r = kernel.radius() as i64;
    let mut map = Heatmap::zeros(height, width);
    let (icx, icy) = (cx as i64, cy as i64);
    for y in (icy - r).max(0)..=(icy + r).min(height as i64 - 1) {
        for x in (icx - r).max(0)..=(icx + r).min(width as i64 - 1) {
            map.set(
                x as usize,
                y as usize,
                amplitude * kernel.value(x as f64, y as f64),
            );
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obj(cx: f64, cy: f64, w: f64, h: f64) -> GroundTruthObject {
        GroundTruthObject {
            center: (cx, cy),
            size: (w, h),
            class_id: 0,
            track_id: 1,
        }
    }

    #[test]
    fn peak_is_one_at_nearest_pixel() {
        let cfg = TargetConfig::default();
        let map = render_gaussian(&obj(10.4, 7.6, 12.0, 24.0), 20, 30, &cfg).unwrap();
        assert_eq!(map.get(10, 8), 1.0);
        assert_eq!(map.argmax(), Some((10, 8, 1.0)));
    }

    #[test]
    fn half_width_identity() {
        let k = GaussianKernel {
            cx: 3.0,
            cy: -2.0,
            sigma: 1.7,
        };
        let d = k.sigma * (2.0 * std::f64::consts::LN_2).sqrt();
        assert!((k.value(3.0 + d, -2.0) - 0.5).abs() < 1e-9);
        let diag = d / std::f64::consts::SQRT_2;
        assert!((k.value(3.0 - diag, -2.0 + diag) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn sigma_rule() {
        let cfg = TargetConfig::default();
        assert_eq!(gaussian_sigma(12.0, 24.0, &cfg), 2.0);
        assert_eq!(gaussian_sigma(3.0, 24.0, &cfg), 1.0);
    }

    #[test]
    fn window_is_zero_outside_radius() {
        let cfg = TargetConfig::default();
        let map = render_gaussian(&obj(15.0, 15.0, 12.0, 12.0), 31, 31, &cfg).unwrap();
        // sigma 2 -> radius 6
        assert!(map.get(21, 15) > 0.0);
        assert_eq!(map.get(22, 15), 0.0);
        assert_eq!(map.get(15, 8), 0.0);
    }

    #[test]
    fn outside_center_is_clamped() {
        let cfg = TargetConfig::default();
        let map = render_gaussian(&obj(-4.0, 50.0, 12.0, 12.0), 10, 10, &cfg).unwrap();
        assert_eq!(map.get(0, 9), 1.0);
        assert!(render_gaussian(&obj(1.0, 1.0, 6.0, 6.0), 0, 4, &cfg).is_err());
    }

    #[test]
    fn objects_render_to_separate_maps() {
        let cfg = TargetConfig::default();
        let a = render_gaussian(&obj(5.0, 5.0, 12.0, 12.0), 20, 20, &cfg).unwrap();
        let b = render_gaussian(&obj(14.0, 14.0, 12.0, 12.0), 20, 20, &cfg).unwrap();
        assert_eq!(a.argmax().unwrap().0, 5);
        assert_eq!(b.argmax().unwrap().0, 14);
        assert_eq!(a.get(14, 14), 0.0);
    }

    proptest! {
        #[test]
        fn reflection_symmetric(c in 8usize..20, w in 4.0f64..30.0, h in 4.0f64..30.0) {
            let cfg = TargetConfig::default();
            let n = 2 * c + 1;
            let map = render_gaussian(&obj(c as f64, c as f64, w, h), n, n, &cfg).unwrap();
            for y in 0..n {
                for x in 0..n {
                    let v = map.get(x, y);
                    prop_assert_eq!(v, map.get(n - 1 - x, y));
                    prop_assert_eq!(v, map.get(x, n - 1 - y));
                }
            }
        }
    }
}
