//! Toy-scale object decoder: learnable queries attend to fused pixel
//! embeddings through masked attention, and three MLP heads turn each query
//! into a class distribution, a center heatmap and a two-channel size map.
//!
//! Forward pass only; parameters are either loaded from a manifest file or
//! drawn from a seeded uniform distribution.

mod attention;
mod heads;
mod layers;
mod params;

pub use attention::{
    feed_forward, masked_attention, masked_attention_weights, self_attention, sinusoidal_embedding,
    AttentionMask, MASK_SENTINEL,
};
pub use heads::{predict_heads, update_mask};
pub use layers::{layer_norm, Linear, Mlp, NormParams};
pub use params::{
    read_params, read_params_file, write_params, write_params_file, DecoderParams,
    FeedForwardParams, LayerParams, MaskedAttentionParams, SelfAttentionParams,
};

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::grid::{FeatureGrid, Heatmap};

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub num_queries: usize,
    pub num_levels: usize,
    pub channels: usize,
    /// Includes the trailing no-object class.
    pub num_classes: usize,
    pub mask_threshold: f64,
    pub ffn_dim: usize,
    /// Divide attention scores by √d inside masked attention.
    pub scale_scores: bool,
    /// Add sinusoidal position and per-level embeddings to the keys.
    pub positional_embedding: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            num_queries: 100,
            num_levels: 3,
            channels: 128,
            num_classes: 2,
            mask_threshold: 0.5,
            ffn_dim: 512,
            scale_scores: false,
            positional_embedding: true,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_queries == 0 || self.num_levels == 0 || self.channels == 0 || self.ffn_dim == 0
        {
            return Err(invalid("decoder sizes must be positive"));
        }
        if self.num_classes < 2 {
            return Err(invalid("need at least one object class plus no-object"));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(invalid(format!(
                "mask threshold {} outside (0,1)",
                self.mask_threshold
            )));
        }
        Ok(())
    }

    pub fn no_object_class(&self) -> usize {
        self.num_classes - 1
    }
}

/// Decoded objects for one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub level: usize,
    /// `N` rows of class probabilities; the last entry is no-object.
    pub class_dist: Vec<Vec<f64>>,
    /// Per-query center heatmap.
    pub center: Vec<Heatmap>,
    /// Per-query size map; channel 0 is normalized width, channel 1 height.
    pub size: Vec<FeatureGrid>,
}

impl FramePrediction {
    pub fn num_queries(&self) -> usize {
        self.class_dist.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.center.first().map_or((0, 0), Heatmap::dims)
    }

    pub fn no_object_class(&self) -> usize {
        self.class_dist.first().map_or(0, |r| r.len().saturating_sub(1))
    }
}

/// Runs the full decoder over the fused feature map of each level and
/// returns one prediction per level.
pub fn decode(
    levels: &[FeatureGrid],
    config: &DecoderConfig,
    params: &DecoderParams,
) -> Result<Vec<FramePrediction>> {
    config.validate()?;
    params.check(config)?;
    if levels.len() != config.num_levels {
        return Err(invalid(format!(
            "expected {} feature levels, got {}",
            config.num_levels,
            levels.len()
        )));
    }
    let mut x: DMatrix<f64> = params.query_init.clone();
    let mut mask = AttentionMask::zeros(config.num_queries, levels[0].pixels());
    let mut out = Vec::with_capacity(levels.len());
    for (l, (features, layer)) in levels.iter().zip(&params.layers).enumerate() {
        if features.channels() != config.channels {
            return Err(invalid(format!(
                "level {l} has {} channels, decoder expects {}",
                features.channels(),
                config.channels
            )));
        }
        let key_embedding = config.positional_embedding.then(|| {
            let mut e = sinusoidal_embedding(features.height(), features.width(), config.channels);
            let level = params.level_embed.row(l);
            for mut row in e.row_iter_mut() {
                row += level;
            }
            e
        });
        let attended = masked_attention(
            &x,
            features,
            &mask,
            &layer.masked,
            config.scale_scores,
            key_embedding.as_ref(),
        )?;
        x = layer_norm(&attended, &layer.norms[0]);
        let sa = self_attention(&x, &layer.self_attn);
        x = layer_norm(&(&x + sa), &layer.norms[1]);
        let ff = feed_forward(&x, &layer.ffn);
        x = layer_norm(&(&x + ff), &layer.norms[2]);

        let pred = predict_heads(&x, features, params, l)?;
        if let Some(next) = levels.get(l + 1) {
            let (h, w) = next.dims();
            let resized = pred
                .center
                .iter()
                .map(|c| c.resize(h, w))
                .collect::<Result<Vec<_>>>()?;
            mask = update_mask(&resized, config.mask_threshold);
        }
        out.push(pred);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DecoderConfig {
        DecoderConfig {
            num_queries: 4,
            num_levels: 2,
            channels: 6,
            num_classes: 3,
            ffn_dim: 8,
            ..DecoderConfig::default()
        }
    }

    fn features(h: usize, w: usize, d: usize, phase: f64) -> FeatureGrid {
        FeatureGrid::new(
            h,
            w,
            d,
            (0..h * w * d).map(|i| (i as f64 * 0.37 + phase).sin()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn defaults() {
        let c = DecoderConfig::default();
        assert_eq!((c.num_queries, c.num_levels, c.channels), (100, 3, 128));
        assert_eq!(c.mask_threshold, 0.5);
        assert!(!c.scale_scores);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_configs() {
        let mut c = small();
        c.mask_threshold = 1.0;
        assert!(c.validate().is_err());
        c = small();
        c.num_classes = 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn decode_levels_of_different_resolution() {
        let cfg = small();
        let params = DecoderParams::random(&cfg, 3);
        let levels = vec![features(4, 4, 6, 0.0), features(8, 8, 6, 1.0)];
        let preds = decode(&levels, &cfg, &params).unwrap();
        assert_eq!(preds.len(), 2);
        assert_eq!(preds[0].dims(), (4, 4));
        assert_eq!(preds[1].dims(), (8, 8));
        for p in &preds {
            assert_eq!(p.num_queries(), 4);
            for row in &p.class_dist {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for c in &p.center {
                assert!(c.data().iter().all(|&v| v > 0.0 && v < 1.0));
            }
        }
    }

    #[test]
    fn decode_checks_level_count_and_channels() {
        let cfg = small();
        let params = DecoderParams::random(&cfg, 3);
        assert!(decode(&[features(4, 4, 6, 0.0)], &cfg, &params).is_err());
        let bad = vec![features(4, 4, 5, 0.0), features(4, 4, 5, 0.0)];
        assert!(decode(&bad, &cfg, &params).is_err());
    }
}
