//! Covered-area statistics of the sampled pooling regions per block.

use std::fmt::Write as _;

use crate::error::Result;
use crate::harness::NetworkConfig;
use crate::harness::ResNet;
use crate::srp::rng::{stream, Domain};
use crate::srp::{area_ratio, region_dims, sample_mask, SrpConfig, SrpMode};

#[derive(Clone, Debug, PartialEq)]
pub struct AreaRatioRow {
    pub block: usize,
    pub height: usize,
    pub width: usize,
    pub lambda: f64,
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
    /// Single-square ratio `H'W' / (HW)` at this block's λ.
    pub ss_ratio: f64,
}

pub const AREA_RATIO_HEADER: &str = "block,height,width,lambda,mean,p2_5,p97_5,ss_ratio";

/// Nearest-rank percentile of sorted values, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Monte-Carlo area ratio for every block, block `l` having feature maps of
/// `sizes[l]`. Pooling off is treated as the full map. Trial `t` of block
/// `l` uses its own stream, so rows do not depend on each other.
pub fn area_ratio_curve(
    sizes: &[(usize, usize)],
    cfg: &SrpConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<AreaRatioRow>> {
    cfg.validate()?;
    let total = sizes.len();
    sizes
        .iter()
        .enumerate()
        .map(|(block, &(h, w))| {
            let lambda = match cfg.mode {
                SrpMode::Off => 1.0,
                _ => cfg.lambda_for(block, total),
            };
            let (rh, rw) = region_dims(h, w, lambda)?;
            let ss_ratio = (rh * rw) as f64 / (h * w) as f64;
            let mut ratios = (0..trials)
                .map(|t| {
                    let mut rng = stream(seed, block as u64, Domain::Analysis, t as u64);
                    sample_mask(&mut rng, h, w, lambda, cfg.effective_regions())
                        .map(|m| area_ratio(&m))
                })
                .collect::<Result<Vec<f64>>>()?;
            ratios.sort_by(f64::total_cmp);
            let mean = ratios.iter().sum::<f64>() / trials.max(1) as f64;
            Ok(AreaRatioRow {
                block,
                height: h,
                width: w,
                lambda,
                mean,
                p2_5: percentile(&ratios, 0.025),
                p97_5: percentile(&ratios, 0.975),
                ss_ratio,
            })
        })
        .collect()
}

/// Curve over the attention blocks of `net`, at their actual feature sizes.
pub fn network_area_ratio_curve(
    net: &NetworkConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<AreaRatioRow>> {
    let (model, _, _) = ResNet::init::<f32>(net, 0)?;
    area_ratio_curve(&model.block_feature_sizes(), &net.srp, trials, seed)
}

pub fn area_ratio_csv(rows: &[AreaRatioRow]) -> String {
    let mut s = format!("{AREA_RATIO_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.block, r.height, r.width, r.lambda, r.mean, r.p2_5, r.p97_5, r.ss_ratio
        );
    }
    s
}
