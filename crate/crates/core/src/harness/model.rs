//! Basic-block residual classifier with channel attention on every block.

use crate::attention::Attention;
use crate::error::Result;
use crate::nn::{BatchNorm, BufferStore, Conv, Ctx, Linear, ParamStore};
use crate::srp::rng::{stream, Domain};
use crate::tensor::{Scalar, Var};

use super::config::NetworkConfig;

/// conv-bn-relu-conv-bn residual branch, identity or 1x1 projection
/// shortcut, attention on the residual branch, then `relu(id + gated)`.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    /// Attention-block ordinal, 0 for the shallowest.
    pub index: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    shortcut: Option<(Conv, BatchNorm)>,
    attention: Attention,
}

impl BasicBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        cfg: &NetworkConfig,
        store: &mut ParamStore<T>,
        buffers: &mut BufferStore<T>,
        rng: &mut rand_chacha::ChaCha8Rng,
        index: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
    ) -> Self {
        let name = format!("block{index}");
        let conv1 = Conv::new(
            store,
            rng,
            &format!("{name}.conv1"),
            in_channels,
            out_channels,
            3,
            stride,
            1,
        );
        let bn1 = BatchNorm::new(store, buffers, &format!("{name}.bn1"), out_channels);
        let conv2 = Conv::new(
            store,
            rng,
            &format!("{name}.conv2"),
            out_channels,
            out_channels,
            3,
            1,
            1,
        );
        let bn2 = BatchNorm::new(store, buffers, &format!("{name}.bn2"), out_channels);
        let shortcut = (stride != 1 || in_channels != out_channels).then(|| {
            (
                Conv::new(
                    store,
                    rng,
                    &format!("{name}.proj"),
                    in_channels,
                    out_channels,
                    1,
                    stride,
                    0,
                ),
                BatchNorm::new(store, buffers, &format!("{name}.proj_bn"), out_channels),
            )
        });
        let attention = Attention::new(
            cfg.attention,
            store,
            rng,
            &format!("{name}.attn"),
            out_channels,
            cfg.reduction,
            cfg.fold_channels,
        );
        BasicBlock {
            index,
            in_channels,
            out_channels,
            stride,
            conv1,
            bn1,
            conv2,
            bn2,
            shortcut,
            attention,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        ctx: &mut Ctx<'_, T>,
        x: Var,
        cfg: &NetworkConfig,
    ) -> Result<Var> {
        let name = format!("block{}", self.index);
        let h = self.conv1.forward(ctx, x)?;
        ctx.tap(format!("{name}.conv1"), h);
        let h = ctx.batchnorm(h, &self.bn1)?;
        let h = ctx.g.relu(h)?;
        let h = self.conv2.forward(ctx, h)?;
        ctx.tap(format!("{name}.conv2"), h);
        let u_res = ctx.batchnorm(h, &self.bn2)?;
        let u_id = match &self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(ctx, x)?;
                ctx.batchnorm(s, bn)?
            }
            None => x,
        };
        ctx.tap(format!("{name}.identity"), u_id);
        ctx.tap(format!("{name}.residual"), u_res);
        let gated = self.attention.apply(
            ctx,
            u_id,
            u_res,
            &cfg.srp,
            self.index,
            cfg.attention_blocks(),
        )?;
        let sum = ctx.g.add(u_id, gated)?;
        let out = ctx.g.relu(sum)?;
        ctx.tap(name, out);
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct ResNet {
    pub cfg: NetworkConfig,
    stem: Conv,
    stem_bn: BatchNorm,
    blocks: Vec<BasicBlock>,
    fc: Linear,
}

impl ResNet {
    /// Builds the network and its freshly initialized parameters. The
    /// initialization depends on `seed` and the architecture only, never on
    /// the pooling configuration.
    pub fn init<T: Scalar>(
        cfg: &NetworkConfig,
        seed: u64,
    ) -> Result<(Self, ParamStore<T>, BufferStore<T>)> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut buffers = BufferStore::new();
        let mut rng = stream(seed, 0, Domain::Init, 0);
        let stem = Conv::new(
            &mut store,
            &mut rng,
            "stem.conv",
            cfg.input_channels,
            cfg.widths[0],
            3,
            1,
            1,
        );
        let stem_bn = BatchNorm::new(&mut store, &mut buffers, "stem.bn", cfg.widths[0]);
        let n = cfg.blocks_per_stage();
        let mut blocks = Vec::with_capacity(3 * n);
        let mut in_ch = cfg.widths[0];
        for (stage, &width) in cfg.widths.iter().enumerate() {
            for b in 0..n {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                let index = blocks.len();
                blocks.push(BasicBlock::new(
                    cfg,
                    &mut store,
                    &mut buffers,
                    &mut rng,
                    index,
                    in_ch,
                    width,
                    stride,
                ));
                in_ch = width;
            }
        }
        let fc = Linear::new(&mut store, &mut rng, "fc", in_ch, cfg.classes);
        Ok((
            ResNet {
                cfg: cfg.clone(),
                stem,
                stem_bn,
                blocks,
                fc,
            },
            store,
            buffers,
        ))
    }

    pub fn blocks(&self) -> &[BasicBlock] {
        &self.blocks
    }

    /// Spatial size of the feature maps each attention block pools.
    pub fn block_feature_sizes(&self) -> Vec<(usize, usize)> {
        let mut size = self.cfg.input_size;
        self.blocks
            .iter()
            .map(|b| {
                size = size.div_ceil(b.stride);
                (size, size)
            })
            .collect()
    }

    /// Names of every convolution output tap, shallowest first.
    pub fn conv_layer_names(&self) -> Vec<String> {
        let mut names = vec!["stem.conv".to_string()];
        for b in &self.blocks {
            names.push(format!("block{}.conv1", b.index));
            names.push(format!("block{}.conv2", b.index));
        }
        names
    }

    /// Logits `[N, classes]` for images `x: [N, C, H, W]`.
    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.stem.forward(ctx, x)?;
        ctx.tap("stem.conv", h);
        let h = ctx.batchnorm(h, &self.stem_bn)?;
        let mut h = ctx.g.relu(h)?;
        for block in &self.blocks {
            h = block.forward(ctx, h, &self.cfg)?;
        }
        let pooled = ctx.g.global_avg_pool(h)?;
        self.fc.forward(ctx, pooled)
    }
}
