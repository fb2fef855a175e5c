//! Stochastic region pooling.
//!
//! During training the channel descriptor of a feature map is the mean over
//! a randomly placed square (single-square mode) or over the union of `M`
//! random squares (multi-square mode) instead of the whole map. At
//! evaluation time, or with pooling switched off, it is exact global average
//! pooling and no random numbers are drawn.

mod mask;
pub mod rng;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Var};

pub use mask::RegionMask;
pub use rng::{Branch, SrpRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SrpMode {
    Off,
    SingleSquare,
    MultiSquare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Schedule {
    Fixed,
    LinearDepth,
}

/// Forward-pass mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

impl fmt::Display for SrpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SrpMode::Off => "off",
            SrpMode::SingleSquare => "ss",
            SrpMode::MultiSquare => "ms",
        })
    }
}

impl FromStr for SrpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(SrpMode::Off),
            "ss" => Ok(SrpMode::SingleSquare),
            "ms" => Ok(SrpMode::MultiSquare),
            other => Err(Error::config(format!(
                "unknown srp mode `{other}` (expected off, ss or ms)"
            ))),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::Fixed => "fixed",
            Schedule::LinearDepth => "linear",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Schedule::Fixed),
            "linear" => Ok(Schedule::LinearDepth),
            other => Err(Error::config(format!(
                "unknown srp schedule `{other}` (expected fixed or linear)"
            ))),
        }
    }
}

/// Pooling configuration shared by every attention block of a network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrpConfig {
    pub mode: SrpMode,
    /// Target scale ratio, in (0, 1].
    pub lambda: f64,
    /// Number of squares in multi-square mode.
    pub regions: usize,
    pub schedule: Schedule,
}

impl SrpConfig {
    pub const SS_DEFAULT_LAMBDA: f64 = 0.8;
    pub const MS_DEFAULT_LAMBDA: f64 = 0.6;
    pub const MS_DEFAULT_REGIONS: usize = 5;

    pub fn off() -> Self {
        SrpConfig {
            mode: SrpMode::Off,
            lambda: 1.0,
            regions: 1,
            schedule: Schedule::LinearDepth,
        }
    }

    /// Single square, scheduled, λ = 0.8.
    pub fn single_square() -> Self {
        SrpConfig {
            mode: SrpMode::SingleSquare,
            lambda: Self::SS_DEFAULT_LAMBDA,
            regions: 1,
            schedule: Schedule::LinearDepth,
        }
    }

    /// Five squares, scheduled, λ = 0.6.
    pub fn multi_square() -> Self {
        SrpConfig {
            mode: SrpMode::MultiSquare,
            lambda: Self::MS_DEFAULT_LAMBDA,
            regions: Self::MS_DEFAULT_REGIONS,
            schedule: Schedule::LinearDepth,
        }
    }

    pub fn for_mode(mode: SrpMode) -> Self {
        match mode {
            SrpMode::Off => Self::off(),
            SrpMode::SingleSquare => Self::single_square(),
            SrpMode::MultiSquare => Self::multi_square(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_regions(mut self, regions: usize) -> Self {
        self.regions = regions;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.regions == 0 {
            return Err(Error::config("srp.regions must be at least 1"));
        }
        Ok(())
    }

    /// Single-square mode always uses one region.
    pub fn effective_regions(&self) -> usize {
        match self.mode {
            SrpMode::SingleSquare => 1,
            _ => self.regions,
        }
    }

    /// Scale ratio used by attention block `block` of `total`.
    pub fn lambda_for(&self, block: usize, total: usize) -> f64 {
        match self.schedule {
            Schedule::Fixed => self.lambda,
            Schedule::LinearDepth => scheduled_lambda(block, total, self.lambda),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "scale ratio lambda must lie in (0, 1], got {lambda}"
        )))
    }
}

/// Side lengths of the pooling square: `floor(λ·H + 1/2)` and
/// `floor(λ·W + 1/2)`, clamped to `1..=H` and `1..=W`.
pub fn region_dims(height: usize, width: usize, lambda: f64) -> Result<(usize, usize)> {
    check_lambda(lambda)?;
    if height == 0 || width == 0 {
        return Err(Error::config("feature map must be at least 1x1"));
    }
    let side = |extent: usize| ((lambda * extent as f64 + 0.5).floor() as usize).clamp(1, extent);
    Ok((side(height), side(width)))
}

/// `count` top-left corners drawn uniformly (with replacement) from rows
/// `0..=H-H'` and columns `0..=W-W'`.
pub fn sample_positions<R: Rng + ?Sized>(
    rng: &mut R,
    height: usize,
    width: usize,
    region_h: usize,
    region_w: usize,
    count: usize,
) -> Vec<(usize, usize)> {
    assert!(
        region_h >= 1 && region_w >= 1 && region_h <= height && region_w <= width,
        "region {region_h}x{region_w} does not fit {height}x{width}"
    );
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..=height - region_h);
            let j = rng.random_range(0..=width - region_w);
            (i, j)
        })
        .collect()
}

/// Linear depth schedule: 1 at the first attention block, `target` at the
/// last, linear in between. A single block uses `target`.
pub fn scheduled_lambda(block: usize, total: usize, target: f64) -> f64 {
    if total <= 1 || block + 1 >= total {
        return target;
    }
    if block == 0 {
        return 1.0;
    }
    1.0 - (1.0 - target) * block as f64 / (total - 1) as f64
}

/// Covered fraction `|Ω*| / (H·W)`.
pub fn area_ratio(mask: &RegionMask) -> f64 {
    mask.cardinality() as f64 / (mask.height() * mask.width()) as f64
}

/// Draws the mask for one feature map of size `height x width`.
pub fn sample_mask<R: Rng + ?Sized>(
    rng: &mut R,
    height: usize,
    width: usize,
    lambda: f64,
    regions: usize,
) -> Result<RegionMask> {
    let (rh, rw) = region_dims(height, width, lambda)?;
    let positions = sample_positions(rng, height, width, rh, rw, regions);
    RegionMask::union(&positions, rh, rw, height, width)
}

/// Where in the network a pooling call happens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSite {
    /// Ordinal of the attention block, from 0.
    pub block: usize,
    /// Number of attention blocks in the network.
    pub total_blocks: usize,
    pub branch: Branch,
}

/// Per-sample masks for a training-mode call; `None` means the call reduces
/// to global average pooling (eval mode or pooling off).
pub fn masks_for(
    cfg: &SrpConfig,
    site: PoolSite,
    mode: Mode,
    rng: &SrpRng,
    batch: usize,
    height: usize,
    width: usize,
) -> Result<Option<Vec<RegionMask>>> {
    if mode == Mode::Eval || cfg.mode == SrpMode::Off {
        return Ok(None);
    }
    cfg.validate()?;
    let lambda = cfg.lambda_for(site.block, site.total_blocks);
    let regions = cfg.effective_regions();
    (0..batch)
        .map(|s| {
            let mut r = rng.stream(site.block, site.branch, s);
            sample_mask(&mut r, height, width, lambda, regions)
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Channel descriptors `[N, C]` of `u: [N, C, H, W]`.
pub fn srp_pool<T: Scalar>(
    g: &mut Graph<T>,
    u: Var,
    cfg: &SrpConfig,
    site: PoolSite,
    mode: Mode,
    rng: &SrpRng,
) -> Result<Var> {
    let (n, _, h, w) = g.value(u).dims4("srp_pool")?;
    match masks_for(cfg, site, mode, rng, n, h, w)? {
        None => Ok(g.global_avg_pool(u)?),
        Some(masks) => pool_with_masks(g, u, &masks),
    }
}

/// Mean over explicit per-sample masks; the masks are constants of
/// differentiation.
pub fn pool_with_masks<T: Scalar>(g: &mut Graph<T>, u: Var, masks: &[RegionMask]) -> Result<Var> {
    let cells: Vec<&[bool]> = masks.iter().map(|m| m.cells()).collect();
    Ok(g.masked_mean(u, &cells)?)
}
