//! Decoder parameters and their on-disk manifest: a flat sequence of
//! `(u32 LE name length, UTF-8 name, grid blob)` entries read until EOF.
//! Matrices are stored as `rows × cols × 1` grids, vectors as `1 × n × 1`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Linear, Mlp, NormParams};
use super::DecoderConfig;
use crate::error::{file_error, invalid, Error, Result};
use crate::grid::{read_grid, write_grid, FeatureGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedAttentionParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttentionParams {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardParams {
    pub hidden: Linear,
    pub output: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub masked: MaskedAttentionParams,
    pub self_attn: SelfAttentionParams,
    pub ffn: FeedForwardParams,
    /// After masked attention, self-attention and feed-forward.
    pub norms: [NormParams; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    /// `N × d` initial query features.
    pub query_init: DMatrix<f64>,
    /// `L × d` per-level key embedding.
    pub level_embed: DMatrix<f64>,
    pub layers: Vec<LayerParams>,
    pub class_head: Mlp,
    pub center_head: Mlp,
    pub size_head: Mlp,
}

fn head(d: usize, out: usize, bound: f64, rng: &mut ChaCha8Rng) -> Mlp {
    Mlp {
        layers: vec![
            Linear::random(d, d, bound, rng),
            Linear::random(d, d, bound, rng),
            Linear::random(d, out, bound, rng),
        ],
    }
}

impl DecoderParams {
    /// Uniform initialization in `[−1/√d, 1/√d]`; normalization layers start
    /// as the identity.
    pub fn random(config: &DecoderConfig, seed: u64) -> Self {
        let d = config.channels;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mat = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
            use rand::Rng;
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-bound..=bound))
        };
        let query_init = mat(config.num_queries, d, &mut rng);
        let level_embed = mat(config.num_levels, d, &mut rng);
        let layers = (0..config.num_levels)
            .map(|_| LayerParams {
                masked: MaskedAttentionParams {
                    query: Linear::random(d, d, bound, &mut rng),
                    key: Linear::random(d, d, bound, &mut rng),
                    value: Linear::random(d, d, bound, &mut rng),
                },
                self_attn: SelfAttentionParams {
                    query: Linear::random(d, d, bound, &mut rng),
                    key: Linear::random(d, d, bound, &mut rng),
                    value: Linear::random(d, d, bound, &mut rng),
                    output: Linear::random(d, d, bound, &mut rng),
                },
                ffn: FeedForwardParams {
                    hidden: Linear::random(d, config.ffn_dim, bound, &mut rng),
                    output: Linear::random(config.ffn_dim, d, bound, &mut rng),
                },
                norms: [
                    NormParams::identity(d),
                    NormParams::identity(d),
                    NormParams::identity(d),
                ],
            })
            .collect();
        let class_head = head(d, config.num_classes, bound, &mut rng);
        let center_head = head(d, d, bound, &mut rng);
        let size_head = head(d, 2 * d, bound, &mut rng);
        Self {
            query_init,
            level_embed,
            layers,
            class_head,
            center_head,
            size_head,
        }
    }

    /// Verifies every tensor shape against `config`.
    pub fn check(&self, config: &DecoderConfig) -> Result<()> {
        let d = config.channels;
        let mut problems = Vec::new();
        let mut expect = |name: String, got: (usize, usize), want: (usize, usize)| {
            if got != want {
                problems.push(format!("{name}: {got:?} != {want:?}"));
            }
        };
        expect("query_init".into(), self.query_init.shape(), (config.num_queries, d));
        expect("level_embed".into(), self.level_embed.shape(), (config.num_levels, d));
        if self.layers.len() != config.num_levels {
            return Err(invalid(format!(
                "params have {} layers, config wants {}",
                self.layers.len(),
                config.num_levels
            )));
        }
        for (name, lin) in self.named_linears() {
            if let Some(want) = shape_for(&name, d, config) {
                expect(format!("{name}.weight"), lin.weight.shape(), want);
            }
            expect(format!("{name}.bias"), (lin.bias.len(), 1), (lin.output_dim(), 1));
        }
        for (name, mlp, out) in [
            ("head.class", &self.class_head, config.num_classes),
            ("head.center", &self.center_head, d),
            ("head.size", &self.size_head, 2 * d),
        ] {
            let first = mlp.layers.first().map_or(0, Linear::input_dim);
            expect(format!("{name} in/out"), (first, mlp.output_dim()), (d, out));
        }
        for (name, norm) in self.named_norms() {
            expect(format!("{name}.scale"), (norm.scale.len(), 1), (d, 1));
            expect(format!("{name}.shift"), (norm.shift.len(), 1), (d, 1));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(invalid(format!("parameter shapes: {}", problems.join("; "))))
        }
    }

    fn named_linears(&self) -> Vec<(String, &Linear)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let p = format!("layer{l}");
            out.push((format!("{p}.masked.query"), &layer.masked.query));
            out.push((format!("{p}.masked.key"), &layer.masked.key));
            out.push((format!("{p}.masked.value"), &layer.masked.value));
            out.push((format!("{p}.self.query"), &layer.self_attn.query));
            out.push((format!("{p}.self.key"), &layer.self_attn.key));
            out.push((format!("{p}.self.value"), &layer.self_attn.value));
            out.push((format!("{p}.self.output"), &layer.self_attn.output));
            out.push((format!("{p}.ffn.hidden"), &layer.ffn.hidden));
            out.push((format!("{p}.ffn.output"), &layer.ffn.output));
        }
        for (name, mlp) in [
            ("head.class", &self.class_head),
            ("head.center", &self.center_head),
            ("head.size", &self.size_head),
        ] {
            for (i, lin) in mlp.layers.iter().enumerate() {
                out.push((format!("{name}.{i}"), lin));
            }
        }
        out
    }

    fn named_norms(&self) -> Vec<(String, &NormParams)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, layer)| {
                layer
                    .norms
                    .iter()
                    .enumerate()
                    .map(move |(k, n)| (format!("layer{l}.norm{k}"), n))
            })
            .collect()
    }

    /// Every tensor under its manifest name.
    pub fn to_tensors(&self) -> BTreeMap<String, DMatrix<f64>> {
        let mut out = BTreeMap::new();
        out.insert("query_init".to_string(), self.query_init.clone());
        out.insert("level_embed".to_string(), self.level_embed.clone());
        for (name, lin) in self.named_linears() {
            out.insert(format!("{name}.weight"), lin.weight.clone());
            out.insert(format!("{name}.bias"), row(&lin.bias));
        }
        for (name, norm) in self.named_norms() {
            out.insert(format!("{name}.scale"), row(&norm.scale));
            out.insert(format!("{name}.shift"), row(&norm.shift));
        }
        out
    }

    /// Rebuilds parameters from named tensors; layer and head depth are
    /// inferred from the names present.
    pub fn from_tensors(mut t: BTreeMap<String, DMatrix<f64>>) -> Result<Self> {
        let mut take = |name: &str| {
            t.remove(name)
                .ok_or_else(|| invalid(format!("parameter file lacks tensor {name}")))
        };
        let linear = |name: &str, take: &mut dyn FnMut(&str) -> Result<DMatrix<f64>>| {
            let weight = take(&format!("{name}.weight"))?;
            let bias = take(&format!("{name}.bias"))?;
            Ok::<_, Error>(Linear {
                weight,
                bias: DVector::from_iterator(bias.len(), bias.iter().copied()),
            })
        };
        let query_init = take("query_init")?;
        let level_embed = take("level_embed")?;
        let num_levels = level_embed.nrows();
        let mut layers = Vec::with_capacity(num_levels);
        for l in 0..num_levels {
            let p = format!("layer{l}");
            let mut norm = |k: usize| -> Result<NormParams> {
                let s = take(&format!("{p}.norm{k}.scale"))?;
                let b = take(&format!("{p}.norm{k}.shift"))?;
                Ok(NormParams {
                    scale: DVector::from_iterator(s.len(), s.iter().copied()),
                    shift: DVector::from_iterator(b.len(), b.iter().copied()),
                })
            };
            let norms = [norm(0)?, norm(1)?, norm(2)?];
            layers.push(LayerParams {
                masked: MaskedAttentionParams {
                    query: linear(&format!("{p}.masked.query"), &mut take)?,
                    key: linear(&format!("{p}.masked.key"), &mut take)?,
                    value: linear(&format!("{p}.masked.value"), &mut take)?,
                },
                self_attn: SelfAttentionParams {
                    query: linear(&format!("{p}.self.query"), &mut take)?,
                    key: linear(&format!("{p}.self.key"), &mut take)?,
                    value: linear(&format!("{p}.self.value"), &mut take)?,
                    output: linear(&format!("{p}.self.output"), &mut take)?,
                },
                ffn: FeedForwardParams {
                    hidden: linear(&format!("{p}.ffn.hidden"), &mut take)?,
                    output: linear(&format!("{p}.ffn.output"), &mut take)?,
                },
                norms,
            });
        }
        let mut mlp = |name: &str| -> Result<Mlp> {
            let mut layers = Vec::new();
            let mut i = 0;
            loop {
                let key = format!("{name}.{i}");
                match linear(&key, &mut take) {
                    Ok(l) => layers.push(l),
                    Err(_) if i > 0 => break,
                    Err(e) => return Err(e),
                }
                i += 1;
            }
            Ok(Mlp { layers })
        };
        let class_head = mlp("head.class")?;
        let center_head = mlp("head.center")?;
        let size_head = mlp("head.size")?;
        Ok(Self {
            query_init,
            level_embed,
            layers,
            class_head,
            center_head,
            size_head,
        })
    }
}

fn shape_for(name: &str, d: usize, config: &DecoderConfig) -> Option<(usize, usize)> {
    if name.ends_with("ffn.hidden") {
        Some((config.ffn_dim, d))
    } else if name.ends_with("ffn.output") {
        Some((d, config.ffn_dim))
    } else if name.starts_with("layer") {
        Some((d, d))
    } else {
        // head layers: only the input of the first and output of the last are fixed
        None
    }
}

fn row(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, v.len(), v.as_slice())
}

fn to_grid(m: &DMatrix<f64>) -> FeatureGrid {
    let data = (0..m.nrows())
        .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
        .collect();
    FeatureGrid::new(m.nrows(), m.ncols(), 1, data).expect("finite parameters")
}

pub fn write_params<W: Write>(mut out: W, params: &DecoderParams) -> Result<()> {
    for (name, tensor) in params.to_tensors() {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        write_grid(&mut out, &to_grid(&tensor))?;
    }
    Ok(())
}

pub fn read_params<R: Read>(mut input: R) -> Result<DecoderParams> {
    let mut tensors = BTreeMap::new();
    loop {
        let mut len = [0u8; 4];
        match input.read(&mut len[..1])? {
            0 => break,
            _ => input
                .read_exact(&mut len[1..])
                .map_err(|_| Error::Format("truncated name length".into()))?,
        }
        let len = u32::from_le_bytes(len) as usize;
        if len > 4096 {
            return Err(Error::Format(format!("tensor name length {len} too large")));
        }
        let mut name = vec![0u8; len];
        input
            .read_exact(&mut name)
            .map_err(|_| Error::Format("truncated tensor name".into()))?;
        let name =
            String::from_utf8(name).map_err(|_| Error::Format("tensor name not UTF-8".into()))?;
        let grid = read_grid(&mut input)?;
        if grid.channels() != 1 {
            return Err(Error::Format(format!("tensor {name} has {} channels", grid.channels())));
        }
        let m = DMatrix::from_row_slice(grid.height(), grid.width(), grid.data());
        tensors.insert(name, m);
    }
    DecoderParams::from_tensors(tensors)
}

pub fn write_params_file(path: impl AsRef<Path>, params: &DecoderParams) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(file_error(path))?);
    write_params(&mut out, params)?;
    out.flush().map_err(file_error(path))?;
    Ok(())
}

pub fn read_params_file(path: impl AsRef<Path>) -> Result<DecoderParams> {
    let path = path.as_ref();
    read_params(BufReader::new(File::open(path).map_err(file_error(path))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DecoderConfig {
        DecoderConfig {
            num_queries: 3,
            num_levels: 2,
            channels: 4,
            num_classes: 3,
            ffn_dim: 5,
            ..DecoderConfig::default()
        }
    }

    #[test]
    fn random_init_is_seeded_and_bounded() {
        let a = DecoderParams::random(&cfg(), 9);
        assert_eq!(a, DecoderParams::random(&cfg(), 9));
        assert_ne!(a, DecoderParams::random(&cfg(), 10));
        assert!(a.query_init.iter().all(|v| v.abs() <= 0.5));
        a.check(&cfg()).unwrap();
    }

    #[test]
    fn manifest_round_trip_within_f32() {
        let p = DecoderParams::random(&cfg(), 1);
        let mut buf = Vec::new();
        write_params(&mut buf, &p).unwrap();
        let q = read_params(&buf[..]).unwrap();
        q.check(&cfg()).unwrap();
        let (a, b) = (p.to_tensors(), q.to_tensors());
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
        for (k, m) in &a {
            let diff = (m - &b[k]).abs().max();
            assert!(diff < 1e-7, "{k}: {diff}");
        }
    }

    #[test]
    fn missing_tensor_and_shape_errors() {
        let p = DecoderParams::random(&cfg(), 1);
        let mut t = p.to_tensors();
        t.remove("layer1.ffn.hidden.bias");
        assert!(DecoderParams::from_tensors(t).is_err());
        let mut wrong = cfg();
        wrong.channels = 5;
        assert!(p.check(&wrong).is_err());
    }
}
