use nalgebra::DMatrix;

use super::params::{FeedForwardParams, MaskedAttentionParams, SelfAttentionParams};
use crate::error::{invalid, Result};
use crate::grid::FeatureGrid;

/// Additive score bias for a blocked query/pixel pair.
pub const MASK_SENTINEL: f64 = f64::NEG_INFINITY;

/// `N × (H·W)` attention mask whose entries are either 0 or [`MASK_SENTINEL`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    queries: usize,
    pixels: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    /// All-zero mask: every query may attend everywhere.
    pub fn zeros(queries: usize, pixels: usize) -> Self {
        Self {
            queries,
            pixels,
            allowed: vec![true; queries * pixels],
        }
    }

    pub fn from_allowed(queries: usize, pixels: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != queries * pixels {
            return Err(invalid(format!(
                "mask {queries}x{pixels} needs {} entries, got {}",
                queries * pixels,
                allowed.len()
            )));
        }
        Ok(Self {
            queries,
            pixels,
            allowed,
        })
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn is_allowed(&self, query: usize, pixel: usize) -> bool {
        self.allowed[query * self.pixels + pixel]
    }

    pub fn entry(&self, query: usize, pixel: usize) -> f64 {
        if self.is_allowed(query, pixel) {
            0.0
        } else {
            MASK_SENTINEL
        }
    }

    /// True when every pixel of the row is blocked.
    pub fn row_blocked(&self, query: usize) -> bool {
        !self.allowed[query * self.pixels..(query + 1) * self.pixels]
            .iter()
            .any(|&a| a)
    }
}

/// Flattens a feature grid to an `(H·W) × d` matrix, one row per pixel.
pub(crate) fn flatten(features: &FeatureGrid) -> DMatrix<f64> {
    let n = features.pixels();
    let data = features.data();
    DMatrix::from_fn(n, features.channels(), |p, c| data[c * n + p])
}

/// Row-wise `softmax(M + scores)`. A row whose mask blocks every position
/// falls back to an unmasked softmax.
pub fn masked_attention_weights(scores: &DMatrix<f64>, mask: &AttentionMask) -> Result<DMatrix<f64>> {
    if scores.nrows() != mask.queries() || scores.ncols() != mask.pixels() {
        return Err(invalid(format!(
            "scores {}x{} do not match mask {}x{}",
            scores.nrows(),
            scores.ncols(),
            mask.queries(),
            mask.pixels()
        )));
    }
    let mut out = DMatrix::zeros(scores.nrows(), scores.ncols());
    for i in 0..scores.nrows() {
        let unmasked = mask.row_blocked(i);
        let open = |j: usize| unmasked || mask.is_allowed(i, j);
        let max = (0..scores.ncols())
            .filter(|&j| open(j))
            .map(|j| scores[(i, j)])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for j in 0..scores.ncols() {
            if open(j) {
                let e = (scores[(i, j)] - max).exp();
                out[(i, j)] = e;
                total += e;
            }
        }
        for j in 0..scores.ncols() {
            out[(i, j)] /= total;
        }
    }
    Ok(out)
}

/// `X = softmax(M + Q·Kᵀ)·V + X_prev` with `Q = f_Q(X_prev)`,
/// `K = f_K(features + key_embedding)` and `V = f_V(features)`.
pub fn masked_attention(
    x_prev: &DMatrix<f64>,
    features: &FeatureGrid,
    mask: &AttentionMask,
    params: &MaskedAttentionParams,
    scale_scores: bool,
    key_embedding: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let d = features.channels();
    if x_prev.ncols() != d || params.query.input_dim() != d || params.key.input_dim() != d {
        return Err(invalid(format!(
            "query width {} / feature channels {d} / projection width {} disagree",
            x_prev.ncols(),
            params.query.input_dim()
        )));
    }
    if mask.queries() != x_prev.nrows() || mask.pixels() != features.pixels() {
        return Err(invalid(format!(
            "mask {}x{} does not match {} queries over {} pixels",
            mask.queries(),
            mask.pixels(),
            x_prev.nrows(),
            features.pixels()
        )));
    }
    let flat = flatten(features);
    let keys_in = match key_embedding {
        Some(e) => {
            if e.shape() != flat.shape() {
                return Err(invalid("key embedding shape mismatch"));
            }
            &flat + e
        }
        None => flat.clone(),
    };
    let q = params.query.forward(x_prev);
    let k = params.key.forward(&keys_in);
    let v = params.value.forward(&flat);
    let mut scores = &q * k.transpose();
    if scale_scores {
        scores /= (q.ncols() as f64).sqrt();
    }
    let weights = masked_attention_weights(&scores, mask)?;
    Ok(weights * v + x_prev)
}

/// Single-head scaled dot-product self-attention over the queries.
pub fn self_attention(x: &DMatrix<f64>, params: &SelfAttentionParams) -> DMatrix<f64> {
    let q = params.query.forward(x);
    let k = params.key.forward(x);
    let v = params.value.forward(x);
    let scores = (&q * k.transpose()) / (q.ncols() as f64).sqrt();
    let open = AttentionMask::zeros(x.nrows(), x.nrows());
    let weights = masked_attention_weights(&scores, &open).expect("square score matrix");
    params.output.forward(&(weights * v))
}

pub fn feed_forward(x: &DMatrix<f64>, params: &FeedForwardParams) -> DMatrix<f64> {
    let mut h = params.hidden.forward(x);
    h.apply(|v| *v = v.max(0.0));
    params.output.forward(&h)
}

/// Two-dimensional sine/cosine position code, one row per pixel. The first
/// half of the channels encodes the row, the second half the column.
pub fn sinusoidal_embedding(height: usize, width: usize, channels: usize) -> DMatrix<f64> {
    let half = channels / 2;
    let tau = std::f64::consts::TAU;
    let code = |pos: f64, extent: usize, k: usize, span: usize| -> f64 {
        let norm = (pos + 0.5) / extent as f64 * tau;
        let pair = (k / 2) as f64;
        let freq = 10000f64.powf(2.0 * pair / span.max(1) as f64);
        if k.is_multiple_of(2) {
            (norm / freq).sin()
        } else {
            (norm / freq).cos()
        }
    };
    DMatrix::from_fn(height * width, channels, |p, c| {
        let (y, x) = ((p / width) as f64, (p % width) as f64);
        if c < half {
            code(y, height, c, half)
        } else {
            code(x, width, c - half, channels - half)
        }
    })
}
