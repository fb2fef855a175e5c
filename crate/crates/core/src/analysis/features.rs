//! Feature-map grids and channel-descriptor similarity.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::harness::Model;
use crate::nn::Ctx;
use crate::srp::{Mode, SrpRng};
use crate::tensor::Tensor;

use super::{prepare, prepare_batch};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureBranch {
    Identity,
    Residual,
}

impl fmt::Display for FeatureBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureBranch::Identity => "identity",
            FeatureBranch::Residual => "residual",
        })
    }
}

impl FromStr for FeatureBranch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(FeatureBranch::Identity),
            "residual" => Ok(FeatureBranch::Residual),
            other => Err(Error::config(format!(
                "unknown branch `{other}` (expected identity or residual)"
            ))),
        }
    }
}

/// Min-max scaling to `[0, 1]`; a constant map becomes 0.5 everywhere.
pub fn normalize_channel(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|&v| (v - min) / (max - min)).collect()
}

/// Channels tiled row by row, `cols = ceil(sqrt(count))`. Unused tiles are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub tile_h: usize,
    pub tile_w: usize,
    pub rows: usize,
    pub cols: usize,
    pub count: usize,
    pub values: Vec<f64>,
}

impl FeatureGrid {
    pub fn width(&self) -> usize {
        self.cols * self.tile_w
    }

    pub fn height(&self) -> usize {
        self.rows * self.tile_h
    }

    /// Pixel `(i, j)` of tile `(r, c)`.
    pub fn at(&self, r: usize, c: usize, i: usize, j: usize) -> f64 {
        self.values[(r * self.tile_h + i) * self.width() + c * self.tile_w + j]
    }
}

/// Tiles the first `count` channels of `maps: [C, h, w]`, each normalized
/// on its own.
pub fn tile_channels(maps: &[f64], channels: usize, h: usize, w: usize, count: usize) -> FeatureGrid {
    let count = count.clamp(1, channels);
    let cols = (1..=count).find(|c| c * c >= count).unwrap_or(1);
    let rows = count.div_ceil(cols);
    let width = cols * w;
    let mut values = vec![0.0; rows * h * width];
    for k in 0..count {
        let (r, c) = (k / cols, k % cols);
        let tile = normalize_channel(&maps[k * h * w..(k + 1) * h * w]);
        for i in 0..h {
            let dst = (r * h + i) * width + c * w;
            values[dst..dst + w].copy_from_slice(&tile[i * w..(i + 1) * w]);
        }
    }
    FeatureGrid {
        tile_h: h,
        tile_w: w,
        rows,
        cols,
        count,
        values,
    }
}

fn block_tap(model: &Model, block: usize, suffix: &str) -> Result<String> {
    let blocks = model.net.blocks().len();
    if block >= blocks {
        return Err(Error::config(format!(
            "block {block} out of range, the network has {blocks} blocks"
        )));
    }
    Ok(format!("block{block}.{suffix}"))
}

/// Eval-mode value of the named tap for a batch of normalized images.
fn eval_tap(model: &Model, x: Tensor<f32>, tap: &str) -> Result<Tensor<f32>> {
    let mut buffers = model.buffers.clone();
    let mut ctx = Ctx::new(&model.params, &mut buffers, Mode::Eval, SrpRng::new(0, 0), false)?;
    let xv = ctx.g.input(x)?;
    model.net.forward(&mut ctx, xv)?;
    let v = ctx
        .tapped(tap)
        .ok_or_else(|| Error::Invariant(format!("forward pass recorded no `{tap}`")))?;
    Ok(ctx.g.value(v).clone())
}

/// Grid of the first `count` channels of one branch of `block` for one raw
/// image.
pub fn dump_feature_maps(
    model: &Model,
    image: &[f32],
    block: usize,
    branch: FeatureBranch,
    count: usize,
) -> Result<FeatureGrid> {
    let tap = block_tap(model, block, &branch.to_string())?;
    let t = eval_tap(model, prepare(model, image)?, &tap)?;
    let (_, c, h, w) = t.dims4("dump_feature_maps")?;
    let maps: Vec<f64> = t.data().iter().map(|&v| v as f64).collect();
    Ok(tile_channels(&maps, c, h, w, count))
}

/// Mean cosine similarity over all unordered pairs. A pair involving a zero
/// vector counts as 0.
pub fn mean_pairwise_cosine(vectors: &[Vec<f64>]) -> f64 {
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let (mut sum, mut pairs) = (0.0, 0usize);
    for a in 0..vectors.len() {
        for b in a + 1..vectors.len() {
            let denom = norms[a] * norms[b];
            if denom > 0.0 {
                let dot: f64 = vectors[a].iter().zip(&vectors[b]).map(|(x, y)| x * y).sum();
                sum += dot / denom;
            }
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}

/// Homogeneity of the residual-branch channel descriptors of `block`: each
/// channel's globally pooled value across the probe batch forms one vector,
/// and the result is the mean pairwise cosine of those vectors. `probe`
/// holds raw images in `[0, 1]`.
pub fn descriptor_similarity(model: &Model, probe: &[f32], block: usize) -> Result<f64> {
    let tap = block_tap(model, block, "residual")?;
    let x = prepare_batch(model, probe)?;
    let n = x.shape()[0];
    let t = eval_tap(model, x, &tap)?;
    let (_, channels, th, tw) = t.dims4("descriptor_similarity")?;
    let tplane = th * tw;
    let vectors: Vec<Vec<f64>> = (0..channels)
        .map(|k| {
            (0..n)
                .map(|s| {
                    let off = (s * channels + k) * tplane;
                    t.data()[off..off + tplane].iter().map(|&v| v as f64).sum::<f64>()
                        / tplane as f64
                })
                .collect()
        })
        .collect();
    Ok(mean_pairwise_cosine(&vectors))
}
