//! Channel-attention blocks whose squeeze step is stochastic region pooling.
//!
//! The one-branch block gates the residual branch with a gate computed from
//! the residual descriptor through two affine maps. The double-branch block
//! also pools the identity branch, folds both descriptors into a `2 x C`
//! single-channel grid, mixes them with a 3x3 convolution and maps the
//! result to `C` gate values.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{fan_in_uniform, Ctx, Linear, ParamId, ParamStore};
use crate::srp::{srp_pool, Branch, PoolSite, SrpConfig};
use crate::tensor::{Scalar, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    None,
    OneBranch,
    DoubleBranch,
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionKind::None => "none",
            AttentionKind::OneBranch => "one",
            AttentionKind::DoubleBranch => "double",
        })
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttentionKind::None),
            "one" => Ok(AttentionKind::OneBranch),
            "double" => Ok(AttentionKind::DoubleBranch),
            other => Err(Error::config(format!(
                "unknown attention kind `{other}` (expected none, one or double)"
            ))),
        }
    }
}

/// Hidden width of the excitation bottleneck: `ceil(C / r)`, at least 1.
pub fn reduced_width(channels: usize, reduction: usize) -> usize {
    channels.div_ceil(reduction.max(1)).max(1)
}

fn check_channels<T: Scalar>(ctx: &Ctx<'_, T>, v: Var, channels: usize) -> Result<()> {
    let shape = ctx.g.value(v).shape();
    if shape.len() != 4 || shape[1] != channels {
        return Err(Error::Tensor(crate::error::TensorError::shape(
            "attention",
            format!("block expects {channels} channels, got feature map {shape:?}"),
        )));
    }
    Ok(())
}

/// Squeeze-and-excitation style gate: `sigmoid(W2 relu(W1 z + b1) + b2)`.
#[derive(Clone, Debug)]
pub struct OneBranch {
    pub channels: usize,
    pub hidden: usize,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl OneBranch {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        reduction: usize,
    ) -> Self {
        let hidden = reduced_width(channels, reduction);
        OneBranch {
            channels,
            hidden,
            fc1: Linear::new(store, rng, &format!("{name}.fc1"), channels, hidden),
            fc2: Linear::new(store, rng, &format!("{name}.fc2"), hidden, channels),
        }
    }

    /// Gate `[N, C]` from the residual descriptor.
    pub fn gate<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, z: Var) -> Result<Var> {
        let h = self.fc1.forward(ctx, z)?;
        let h = ctx.g.relu(h)?;
        let a = self.fc2.forward(ctx, h)?;
        Ok(ctx.g.sigmoid(a)?)
    }

    /// Recalibrated residual activation.
    pub fn forward<T: Scalar>(
        &self,
        ctx: &mut Ctx<'_, T>,
        u_res: Var,
        cfg: &SrpConfig,
        block: usize,
        total_blocks: usize,
    ) -> Result<Var> {
        check_channels(ctx, u_res, self.channels)?;
        let site = PoolSite {
            block,
            total_blocks,
            branch: Branch::Residual,
        };
        let (mode, rng) = (ctx.mode, ctx.rng);
        let z = srp_pool(&mut ctx.g, u_res, cfg, site, mode, &rng)?;
        let alpha = self.gate(ctx, z)?;
        Ok(ctx.g.mul_channelwise(u_res, alpha)?)
    }
}

/// Gate from both branches through a folded-descriptor 3x3 convolution.
#[derive(Clone, Debug)]
pub struct DoubleBranch {
    pub channels: usize,
    pub fold_channels: usize,
    /// `[k, 1, 3, 3]`, same padding, no bias.
    pub fold: ParamId,
    /// `(k * 2 * C) -> C`.
    pub head: Linear,
}

impl DoubleBranch {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        fold_channels: usize,
    ) -> Self {
        let fold = store.register(
            format!("{name}.fold.weight"),
            fan_in_uniform(rng, &[fold_channels, 1, 3, 3], 9),
        );
        let head = Linear::new(
            store,
            rng,
            &format!("{name}.head"),
            fold_channels * 2 * channels,
            channels,
        );
        DoubleBranch {
            channels,
            fold_channels,
            fold,
            head,
        }
    }

    /// Gate `[N, C]` from identity and residual descriptors.
    pub fn gate<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, z_id: Var, z_res: Var) -> Result<Var> {
        let grid = ctx.g.fold_rows(z_id, z_res)?;
        let k = ctx.p(self.fold);
        let mixed = ctx.g.conv2d(grid, k, 1, 1)?;
        let n = ctx.g.value(mixed).shape()[0];
        let flat = ctx
            .g
            .reshape(mixed, &[n, self.fold_channels * 2 * self.channels])?;
        let a = self.head.forward(ctx, flat)?;
        Ok(ctx.g.sigmoid(a)?)
    }

    pub fn forward<T: Scalar>(
        &self,
        ctx: &mut Ctx<'_, T>,
        u_id: Var,
        u_res: Var,
        cfg: &SrpConfig,
        block: usize,
        total_blocks: usize,
    ) -> Result<Var> {
        check_channels(ctx, u_res, self.channels)?;
        if ctx.g.value(u_id).shape() != ctx.g.value(u_res).shape() {
            return Err(Error::Tensor(crate::error::TensorError::shape(
                "double_branch",
                format!(
                    "identity {:?} vs residual {:?}",
                    ctx.g.value(u_id).shape(),
                    ctx.g.value(u_res).shape()
                ),
            )));
        }
        let (mode, rng) = (ctx.mode, ctx.rng);
        let site = |branch| PoolSite {
            block,
            total_blocks,
            branch,
        };
        let z_id = srp_pool(&mut ctx.g, u_id, cfg, site(Branch::Identity), mode, &rng)?;
        let z_res = srp_pool(&mut ctx.g, u_res, cfg, site(Branch::Residual), mode, &rng)?;
        let alpha = self.gate(ctx, z_id, z_res)?;
        Ok(ctx.g.mul_channelwise(u_res, alpha)?)
    }
}

#[derive(Clone, Debug)]
pub enum Attention {
    None,
    One(OneBranch),
    Double(DoubleBranch),
}

impl Attention {
    pub fn new<T: Scalar>(
        kind: AttentionKind,
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        channels: usize,
        reduction: usize,
        fold_channels: usize,
    ) -> Self {
        match kind {
            AttentionKind::None => Attention::None,
            AttentionKind::OneBranch => {
                Attention::One(OneBranch::new(store, rng, name, channels, reduction))
            }
            AttentionKind::DoubleBranch => {
                Attention::Double(DoubleBranch::new(store, rng, name, channels, fold_channels))
            }
        }
    }

    /// Gated residual activation (unchanged for `None`).
    pub fn apply<T: Scalar>(
        &self,
        ctx: &mut Ctx<'_, T>,
        u_id: Var,
        u_res: Var,
        cfg: &SrpConfig,
        block: usize,
        total_blocks: usize,
    ) -> Result<Var> {
        match self {
            Attention::None => Ok(u_res),
            Attention::One(b) => b.forward(ctx, u_res, cfg, block, total_blocks),
            Attention::Double(b) => b.forward(ctx, u_id, u_res, cfg, block, total_blocks),
        }
    }
}
