//! Flat `key = value` run configuration.
//!
//! Keys are dotted (`model.depth`, `srp.mode`, `train.lr`, ...). Blank lines
//! and `#` comments are ignored; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::srp::{Schedule, SrpConfig, SrpMode};

/// Residual classifier shape.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    /// `6n + 2` layers, `n` basic blocks per stage.
    pub depth: usize,
    pub widths: [usize; 3],
    pub classes: usize,
    pub attention: AttentionKind,
    pub srp: SrpConfig,
    pub reduction: usize,
    pub fold_channels: usize,
    pub input_channels: usize,
    pub input_size: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            depth: 14,
            widths: [16, 32, 64],
            classes: 10,
            attention: AttentionKind::OneBranch,
            srp: SrpConfig::multi_square(),
            reduction: 16,
            fold_channels: 4,
            input_channels: 3,
            input_size: 32,
        }
    }
}

impl NetworkConfig {
    pub fn blocks_per_stage(&self) -> usize {
        (self.depth - 2) / 6
    }

    /// Number of residual blocks, which is also the length of the λ schedule.
    pub fn attention_blocks(&self) -> usize {
        3 * self.blocks_per_stage()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 8 || !(self.depth - 2).is_multiple_of(6) {
            return Err(Error::config(format!(
                "model.depth must be 6n+2 with n >= 1, got {}",
                self.depth
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::config("model.widths must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::config("model.classes must be at least 2"));
        }
        if self.reduction == 0 || self.fold_channels == 0 {
            return Err(Error::config(
                "model.reduction and model.fold_channels must be positive",
            ));
        }
        if !self.input_size.is_multiple_of(4) || self.input_size == 0 {
            return Err(Error::config("input size must be a positive multiple of 4"));
        }
        self.srp.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub crop: bool,
    pub flip: bool,
    pub mixup: bool,
    pub mixup_alpha: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop: true,
            flip: true,
            mixup: false,
            mixup_alpha: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Timing {
    /// Record wall-clock seconds per epoch.
    Wall,
    /// Write 0 in the seconds column so metrics files are reproducible.
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Epoch indices (0-based) at which the learning rate is multiplied by `decay`.
    pub milestones: Vec<usize>,
    pub decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub timing: Timing,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 128,
            lr: 0.1,
            milestones: vec![10],
            decay: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
            augment: AugmentConfig::default(),
            train_subset: None,
            test_subset: None,
            timing: Timing::Wall,
        }
    }
}

impl TrainConfig {
    /// `lr * decay^k`, `k` = number of milestones `<= epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = self.milestones.iter().filter(|&&m| m <= epoch).count();
        self.lr * self.decay.powi(k as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be at least 1"));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("train.milestones must be strictly increasing"));
        }
        if !(self.lr > 0.0) || !(self.decay > 0.0) {
            return Err(Error::config("train.lr and train.decay must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::config(
                "train.momentum must be in [0, 1) and train.weight_decay non-negative",
            ));
        }
        if self.augment.mixup && !(self.augment.mixup_alpha > 0.0) {
            return Err(Error::config("augment.mixup_alpha must be positive"));
        }
        Ok(())
    }
}

/// Network plus training settings, as read from a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub net: NetworkConfig,
    pub train: TrainConfig,
}

const KEYS: &[&str] = &[
    "model.depth",
    "model.widths",
    "model.classes",
    "model.reduction",
    "model.fold_channels",
    "attention.kind",
    "srp.mode",
    "srp.lambda",
    "srp.regions",
    "srp.schedule",
    "train.epochs",
    "train.batch_size",
    "train.lr",
    "train.milestones",
    "train.decay",
    "train.momentum",
    "train.weight_decay",
    "train.seed",
    "train.timing",
    "augment.crop",
    "augment.flip",
    "augment.mixup",
    "augment.mixup_alpha",
    "data.train_subset",
    "data.test_subset",
];

fn parse_value<V: FromStr>(key: &str, raw: &str) -> Result<V> {
    raw.parse()
        .map_err(|_| Error::config(format!("invalid value `{raw}` for {key}")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|p| parse_value(key, p.trim())).collect()
}

fn parse_subset(key: &str, raw: &str) -> Result<Option<usize>> {
    match raw {
        "all" => Ok(None),
        _ => parse_value(key, raw).map(Some),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::config(format!("line {}: unknown key `{k}`", lineno + 1)));
            }
            if kv.insert(k, v).is_some() {
                return Err(Error::config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }

        let mut net = NetworkConfig::default();
        let mut train = TrainConfig::default();
        let get = |k: &str| kv.get(k).copied();

        if let Some(v) = get("model.depth") {
            net.depth = parse_value("model.depth", v)?;
        }
        if let Some(v) = get("model.widths") {
            let w = parse_list("model.widths", v)?;
            net.widths = w
                .try_into()
                .map_err(|_| Error::config("model.widths needs exactly three values"))?;
        }
        if let Some(v) = get("model.classes") {
            net.classes = parse_value("model.classes", v)?;
        }
        if let Some(v) = get("model.reduction") {
            net.reduction = parse_value("model.reduction", v)?;
        }
        if let Some(v) = get("model.fold_channels") {
            net.fold_channels = parse_value("model.fold_channels", v)?;
        }
        if let Some(v) = get("attention.kind") {
            net.attention = v.parse()?;
        }
        let mode: SrpMode = match get("srp.mode") {
            Some(v) => v.parse()?,
            None => SrpMode::MultiSquare,
        };
        let mut srp = SrpConfig::for_mode(mode);
        if let Some(v) = get("srp.lambda") {
            srp.lambda = parse_value("srp.lambda", v)?;
        }
        if let Some(v) = get("srp.regions") {
            srp.regions = parse_value("srp.regions", v)?;
        }
        if let Some(v) = get("srp.schedule") {
            srp.schedule = v.parse::<Schedule>()?;
        }
        net.srp = srp;

        if let Some(v) = get("train.epochs") {
            train.epochs = parse_value("train.epochs", v)?;
        }
        if let Some(v) = get("train.batch_size") {
            train.batch_size = parse_value("train.batch_size", v)?;
        }
        if let Some(v) = get("train.lr") {
            train.lr = parse_value("train.lr", v)?;
        }
        if let Some(v) = get("train.milestones") {
            train.milestones = parse_list("train.milestones", v)?;
        }
        if let Some(v) = get("train.decay") {
            train.decay = parse_value("train.decay", v)?;
        }
        if let Some(v) = get("train.momentum") {
            train.momentum = parse_value("train.momentum", v)?;
        }
        if let Some(v) = get("train.weight_decay") {
            train.weight_decay = parse_value("train.weight_decay", v)?;
        }
        if let Some(v) = get("train.seed") {
            train.seed = parse_value("train.seed", v)?;
        }
        if let Some(v) = get("train.timing") {
            train.timing = match v {
                "wall" => Timing::Wall,
                "off" => Timing::Off,
                other => {
                    return Err(Error::config(format!(
                        "invalid value `{other}` for train.timing (expected wall or off)"
                    )))
                }
            };
        }
        if let Some(v) = get("augment.crop") {
            train.augment.crop = parse_value("augment.crop", v)?;
        }
        if let Some(v) = get("augment.flip") {
            train.augment.flip = parse_value("augment.flip", v)?;
        }
        if let Some(v) = get("augment.mixup") {
            train.augment.mixup = parse_value("augment.mixup", v)?;
        }
        if let Some(v) = get("augment.mixup_alpha") {
            train.augment.mixup_alpha = parse_value("augment.mixup_alpha", v)?;
        }
        if let Some(v) = get("data.train_subset") {
            train.train_subset = parse_subset("data.train_subset", v)?;
        }
        if let Some(v) = get("data.test_subset") {
            train.test_subset = parse_subset("data.test_subset", v)?;
        }

        let cfg = RunConfig { net, train };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.train.validate()
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let (n, t) = (&self.net, &self.train);
        let subset = |s: Option<usize>| s.map_or("all".to_string(), |v| v.to_string());
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("model.depth", n.depth.to_string());
        line("model.widths", list(&n.widths));
        line("model.classes", n.classes.to_string());
        line("model.reduction", n.reduction.to_string());
        line("model.fold_channels", n.fold_channels.to_string());
        line("attention.kind", n.attention.to_string());
        line("srp.mode", n.srp.mode.to_string());
        line("srp.lambda", format!("{:?}", n.srp.lambda));
        line("srp.regions", n.srp.regions.to_string());
        line("srp.schedule", n.srp.schedule.to_string());
        line("train.epochs", t.epochs.to_string());
        line("train.batch_size", t.batch_size.to_string());
        line("train.lr", format!("{:?}", t.lr));
        line("train.milestones", list(&t.milestones));
        line("train.decay", format!("{:?}", t.decay));
        line("train.momentum", format!("{:?}", t.momentum));
        line("train.weight_decay", format!("{:?}", t.weight_decay));
        line("train.seed", t.seed.to_string());
        line(
            "train.timing",
            match t.timing {
                Timing::Wall => "wall",
                Timing::Off => "off",
            }
            .to_string(),
        );
        line("augment.crop", t.augment.crop.to_string());
        line("augment.flip", t.augment.flip.to_string());
        line("augment.mixup", t.augment.mixup.to_string());
        line("augment.mixup_alpha", format!("{:?}", t.augment.mixup_alpha));
        line("data.train_subset", subset(t.train_subset));
        line("data.test_subset", subset(t.test_subset));
        s
    }

    /// Every accepted key, for documentation and error messages.
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }
}
