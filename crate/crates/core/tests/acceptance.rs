//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test --test acceptance`, or a subset with
//! `cargo test --test acceptance -- 1 4 8`. Criteria 7 and 8 train on the
//! CIFAR-10 binaries in `$SRP_CIFAR_DIR` (default
//! `/root/data/cifar-10-batches-bin`) and are reported as SKIP when the
//! files are absent. Criterion 7 trains six depth-14 networks and takes
//! about an hour and a half on one core.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{
    brute_force_region_mean, exact_expected_area_ratio, mc_area_ratio, random_tensor, rng,
};
use rand::RngExt;
use srp::analysis::image::gray_image;
use srp::analysis::{
    area_ratio_curve, default_layer, descriptor_similarity, dump_feature_maps, gradcam,
    FeatureBranch,
};
use srp::attention::{AttentionKind, DoubleBranch, OneBranch};
use srp::harness::data::{read_batch, Dataset, Normalization, TEST_FILE, TRAIN_FILES};
use srp::harness::train::{accuracy, metrics_csv};
use srp::harness::{
    default_cifar_dir, load_cifar, train, Checkpoint, Cifar, Model, NetworkConfig, RunConfig,
    Timing, Trainer,
};
use srp::nn::{BufferStore, Ctx, ParamStore};
use srp::srp::{
    pool_with_masks, region_dims, sample_positions, scheduled_lambda, srp_pool, Branch, Mode,
    PoolSite, RegionMask, Schedule, SrpConfig, SrpMode, SrpRng,
};
use srp::tensor::gradcheck::grad_check;
use srp::tensor::BnStats;
use srp::{Error, Graph, Tensor, TensorError, Var};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn site(block: usize, total_blocks: usize, branch: Branch) -> PoolSite {
    PoolSite {
        block,
        total_blocks,
        branch,
    }
}

fn pooled(u: &Tensor<f64>, cfg: &SrpConfig, s: PoolSite, mode: Mode, r: SrpRng) -> Tensor<f64> {
    let mut g = Graph::new();
    let x = g.input(u.clone()).unwrap();
    let z = srp_pool(&mut g, x, cfg, s, mode, &r).unwrap();
    g.value(z).clone()
}

/// Eq. 1 style global average, summed cell by cell in row-major order.
fn gap_loop(u: &Tensor<f64>) -> Vec<f64> {
    let (n, c, h, w) = u.dims4("gap").unwrap();
    let mut out = Vec::with_capacity(n * c);
    for s in 0..n {
        for ch in 0..c {
            let plane = &u.sample(s)[ch * h * w..(ch + 1) * h * w];
            let mut acc = 0.0;
            for &v in plane {
                acc += v;
            }
            out.push(acc / (h * w) as f64);
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let configs = [
        SrpConfig::off(),
        SrpConfig::single_square(),
        SrpConfig::multi_square(),
        SrpConfig::multi_square().with_lambda(0.2).with_regions(3),
        SrpConfig::single_square().with_schedule(Schedule::Fixed),
    ];
    let mut bad = 0;
    for k in 0..200 {
        let shape = [
            r.random_range(1..4),
            r.random_range(1..6),
            r.random_range(1..17),
            r.random_range(1..17),
        ];
        let u = random_tensor(&mut r, &shape, -5.0, 5.0);
        let want = gap_loop(&u);
        for cfg in &configs {
            let s = site(k % 3, 3, Branch::Residual);
            let z = pooled(&u, cfg, s, Mode::Eval, SrpRng::new(k as u64, 3));
            bad += usize::from(z.data() != &want[..]);
        }
        for mode in [SrpMode::SingleSquare, SrpMode::MultiSquare] {
            let cfg = SrpConfig::for_mode(mode)
                .with_lambda(1.0)
                .with_schedule(Schedule::Fixed);
            let z = pooled(&u, &cfg, site(1, 3, Branch::Identity), Mode::Train, SrpRng::new(k as u64, 0));
            bad += usize::from(z.data() != &want[..]);
        }
    }
    let t = start.elapsed();
    verdict(
        bad == 0 && within(t, 10.0),
        format!("200 maps x 7 settings, {bad} mismatches, {:.2}s", t.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let (mut mismatches, mut bound_violations) = (0, 0);
    for k in 0..1000u64 {
        let (h, w) = (r.random_range(1..=12), r.random_range(1..=12));
        let m = r.random_range(1..=6);
        let lambda = r.random_range(0.2..=1.0);
        let (n, c) = (r.random_range(1..3), r.random_range(1..4));
        let u = random_tensor(&mut r, &[n, c, h, w], -3.0, 3.0);
        let cfg = SrpConfig::multi_square()
            .with_lambda(lambda)
            .with_regions(m)
            .with_schedule(Schedule::Fixed);
        let key = SrpRng::new(k, 1);
        let z = pooled(&u, &cfg, site(0, 1, Branch::Residual), Mode::Train, key);
        let (rh, rw) = region_dims(h, w, lambda).unwrap();
        for s in 0..n {
            let mut stream = key.stream(0, Branch::Residual, s);
            let positions = sample_positions(&mut stream, h, w, rh, rw, m);
            let mask = RegionMask::union(&positions, rh, rw, h, w).unwrap();
            let card = mask.cardinality();
            if card < rh * rw || card > (m * rh * rw).min(h * w) {
                bound_violations += 1;
            }
            for ch in 0..c {
                let plane = &u.sample(s)[ch * h * w..(ch + 1) * h * w];
                let want = brute_force_region_mean(plane, h, w, &positions, rh, rw);
                mismatches += usize::from(z.data()[s * c + ch] != want);
            }
        }
    }
    let t = start.elapsed();
    verdict(
        mismatches == 0 && bound_violations == 0 && within(t, 30.0),
        format!(
            "1000 instances, {mismatches} value mismatches, {bound_violations} bound violations, {:.2}s",
            t.as_secs_f64()
        ),
    )
}

fn tensor_err(e: Error) -> TensorError {
    match e {
        Error::Tensor(t) => t,
        other => TensorError::Backward(other.to_string()),
    }
}

fn criterion_3() -> Outcome {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let start = Instant::now();
    let mut r = rng(3);
    let mut results: Vec<(&str, f64)> = Vec::new();
    let mut run = |name: &'static str,
                   f: &dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
                   inputs: Vec<Tensor<f64>>| {
        let rep = grad_check(f, &inputs, H, TOL).unwrap();
        results.push((name, rep.max_rel_err));
    };

    let x = random_tensor(&mut r, &[2, 3, 6, 6], -1.0, 1.0);
    let k = random_tensor(&mut r, &[4, 3, 3, 3], -1.0, 1.0);
    run("conv2d", &|g, v| g.conv2d(v[0], v[1], 2, 1), vec![x, k]);

    let (a, w, b) = (
        random_tensor(&mut r, &[3, 5], -1.0, 1.0),
        random_tensor(&mut r, &[5, 4], -1.0, 1.0),
        random_tensor(&mut r, &[4], -1.0, 1.0),
    );
    run("affine", &|g, v| g.affine(v[0], v[1], v[2]), vec![a, w, b]);

    let bx = random_tensor(&mut r, &[3, 2, 3, 3], -2.0, 2.0);
    let gamma = random_tensor(&mut r, &[2], 0.5, 1.5);
    let beta = random_tensor(&mut r, &[2], -0.5, 0.5);
    run(
        "batchnorm",
        &|g, v| g.batchnorm2d(v[0], v[1], v[2], &mut BnStats::new(2), true),
        vec![bx, gamma, beta],
    );

    let p: Vec<f64> = (0..24)
        .map(|i| (0.1 + (i as f64 * 0.37).fract()) * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let p = Tensor::from_vec(&[2, 3, 2, 2], p).unwrap();
    run("sigmoid", &|g, v| g.sigmoid(v[0]), vec![p.clone()]);
    run("relu", &|g, v| g.relu(v[0]), vec![p]);

    let u = random_tensor(&mut r, &[2, 3, 4, 4], -1.0, 1.0);
    let alpha = random_tensor(&mut r, &[2, 3], 0.0, 1.0);
    run("mul_channelwise", &|g, v| g.mul_channelwise(v[0], v[1]), vec![u.clone(), alpha]);

    let logits = random_tensor(&mut r, &[4, 6], -2.0, 2.0);
    run("softmax_xent", &|g, v| g.softmax_xent(v[0], &[0, 5, 2, 2]), vec![logits]);

    let masks = [
        RegionMask::union(&[(0, 0), (1, 2)], 3, 2, 4, 4).unwrap(),
        RegionMask::union(&[(1, 1)], 3, 2, 4, 4).unwrap(),
    ];
    run(
        "srp_pool (fixed mask)",
        &|g, v| pool_with_masks(g, v[0], &masks).map_err(tensor_err),
        vec![u],
    );

    let buffers = BufferStore::<f64>::new();
    let bound = |g: &mut Graph<f64>,
                 v: &[Var],
                 inputs: usize,
                 f: &dyn Fn(&mut Ctx<'_, f64>, &[Var]) -> srp::Result<Var>|
     -> Result<Var, TensorError> {
        let mut buffers = buffers.clone();
        let graph = std::mem::take(g);
        let mut ctx = Ctx::bind(graph, v[inputs..].to_vec(), &mut buffers, Mode::Train, SrpRng::new(3, 7));
        let out = f(&mut ctx, &v[..inputs]);
        *g = ctx.g;
        out.map_err(tensor_err)
    };
    let cfg = SrpConfig::multi_square();

    let mut store = ParamStore::<f64>::new();
    let one = OneBranch::new(&mut store, &mut r, "one", 8, 4);
    let mut inputs = vec![random_tensor(&mut r, &[2, 8, 4, 4], -1.0, 1.0)];
    inputs.extend(store.values().iter().cloned());
    run(
        "one-branch block",
        &|g, v| bound(g, v, 1, &|ctx, x| one.forward(ctx, x[0], &cfg, 2, 3)),
        inputs,
    );

    let mut store = ParamStore::<f64>::new();
    let double = DoubleBranch::new(&mut store, &mut r, "double", 4, 4);
    let mut inputs = vec![
        random_tensor(&mut r, &[2, 4, 5, 5], -1.0, 1.0),
        random_tensor(&mut r, &[2, 4, 5, 5], -1.0, 1.0),
    ];
    inputs.extend(store.values().iter().cloned());
    run(
        "double-branch block",
        &|g, v| bound(g, v, 2, &|ctx, x| double.forward(ctx, x[0], x[1], &cfg, 2, 3)),
        inputs,
    );

    let t = start.elapsed();
    let failed: Vec<String> = results
        .iter()
        .filter(|(_, e)| !(*e < TOL))
        .map(|(n, e)| format!("{n} ({e:.1e})"))
        .collect();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    verdict(
        failed.is_empty() && within(t, 120.0),
        format!(
            "{} ops, worst rel err {worst:.1e}{}, {:.2}s",
            results.len(),
            if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(", ")) },
            t.as_secs_f64()
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut bad = Vec::new();
    for target in [0.2, 0.6, 0.8] {
        for total in 1..=30 {
            let lambdas: Vec<f64> = (0..total).map(|l| scheduled_lambda(l, total, target)).collect();
            if total > 1 && lambdas[0] != 1.0 {
                bad.push(format!("L={total} first {}", lambdas[0]));
            }
            if lambdas[total - 1] != target {
                bad.push(format!("L={total} last {}", lambdas[total - 1]));
            }
            if lambdas.windows(2).any(|p| p[1] > p[0]) {
                bad.push(format!("L={total} not monotone"));
            }
        }
    }
    let (ss, ms) = (SrpConfig::single_square(), SrpConfig::multi_square());
    let defaults_ok = ss.lambda == 0.8 && ss.effective_regions() == 1 && ms.lambda == 0.6 && ms.regions == 5;
    if !defaults_ok {
        bad.push("defaults".into());
    }
    verdict(
        bad.is_empty(),
        format!(
            "L in 1..=30, targets 0.2/0.6/0.8; defaults SS λ={} MS λ={} M={}{}",
            ss.lambda,
            ms.lambda,
            ms.regions,
            if bad.is_empty() { String::new() } else { format!("; problems: {}", bad.join(", ")) }
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let single = area_ratio_curve(&[(8, 8)], &SrpConfig::multi_square().with_regions(1), 10_000, 5).unwrap();
    let single_ok = single[0].mean == 0.390625 && single[0].p2_5 == single[0].p97_5;

    let trials = 100_000;
    let ms = &area_ratio_curve(&[(8, 8)], &SrpConfig::multi_square(), trials, 55).unwrap()[0];
    let (rh, rw) = region_dims(8, 8, 0.6).unwrap();
    let (oracle, var) = mc_area_ratio(8, 8, rh, rw, 5, trials, 0x5eed);
    let se = (2.0 * var / trials as f64).sqrt();
    let exact = exact_expected_area_ratio(8, 8, rh, rw, 5);
    let ms_ok = (ms.mean - oracle).abs() < 3.0 * se;

    let full = area_ratio_curve(&[(8, 8); 4], &SrpConfig::multi_square().with_lambda(1.0), 1000, 5).unwrap();
    let full_ok = full.iter().all(|r| r.mean == 1.0 && r.p2_5 == 1.0 && r.p97_5 == 1.0);

    let t = start.elapsed();
    verdict(
        single_ok && ms_ok && full_ok && within(t, 60.0),
        format!(
            "M=1 mean {} band [{}, {}]; M=5 mean {:.5} vs independent MC {:.5} (3 SE = {:.5}, closed form {:.5}); λ=1 band {}; {:.2}s",
            single[0].mean,
            single[0].p2_5,
            single[0].p97_5,
            ms.mean,
            oracle,
            3.0 * se,
            exact,
            if full_ok { "collapses to 1.0" } else { "DOES NOT collapse" },
            t.as_secs_f64()
        ),
    )
}

fn variants() -> Vec<(AttentionKind, SrpConfig)> {
    let mut out = Vec::new();
    for kind in [AttentionKind::OneBranch, AttentionKind::DoubleBranch] {
        for srp in [SrpConfig::off(), SrpConfig::single_square(), SrpConfig::multi_square()] {
            out.push((kind, srp));
        }
    }
    out
}

fn variant_name(kind: AttentionKind, srp: &SrpConfig) -> String {
    match srp.mode {
        SrpMode::Off => format!("{kind}/off"),
        SrpMode::SingleSquare => format!("{kind}/ss({})", srp.lambda),
        SrpMode::MultiSquare => format!("{kind}/ms({},{})", srp.lambda, srp.regions),
    }
}

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let x: Vec<f32> = (0..4 * 3 * 32 * 32).map(|_| r.random_range(-2.0f32..2.0)).collect();
    let x = Tensor::from_vec(&[4, 3, 32, 32], x).unwrap();
    let mut bad = Vec::new();
    for (kind, srp) in variants() {
        let cfg = NetworkConfig {
            attention: kind,
            srp,
            ..NetworkConfig::default()
        };
        let model = Model::init(&cfg, 6).unwrap();
        // Through the checkpoint format, as a trained model would be.
        let ck = Checkpoint {
            model,
            run: RunConfig {
                net: cfg.clone(),
                ..RunConfig::default()
            },
            epoch: 0,
            seed: 6,
        };
        let loaded = Checkpoint::from_bytes(&ck.to_bytes()).unwrap().model;
        let on = loaded.predict_logits(x.clone()).unwrap();
        let off_model = loaded.with_srp(SrpConfig::off());
        let off = off_model.predict_logits(x.clone()).unwrap();
        let (_, fresh_off, _) = srp::harness::ResNet::init::<f32>(
            &NetworkConfig {
                srp: SrpConfig::off(),
                ..cfg.clone()
            },
            6,
        )
        .unwrap();
        if on != off || loaded.params.count() != fresh_off.count() {
            bad.push(variant_name(kind, &srp));
        }
    }
    verdict(
        bad.is_empty(),
        format!(
            "6 depth-14 variants: parameter counts equal and eval logits bit-identical with SRP on vs off{}",
            if bad.is_empty() { String::new() } else { format!("; differing: {}", bad.join(", ")) }
        ),
    )
}

struct Trained {
    name: String,
    model: Model,
    metrics_csv: String,
    top1: f64,
    seconds: f64,
}

fn cifar_available() -> Option<std::path::PathBuf> {
    let dir = default_cifar_dir();
    let all = TRAIN_FILES.iter().chain([&TEST_FILE]).all(|f| dir.join(f).is_file());
    all.then_some(dir)
}

fn desk_run(kind: AttentionKind, srp: SrpConfig, epochs: usize) -> RunConfig {
    let mut run = RunConfig::default();
    run.net.depth = 14;
    run.net.attention = kind;
    run.net.srp = srp;
    run.train.epochs = epochs;
    run.train.batch_size = 128;
    run.train.lr = 0.1;
    run.train.milestones = vec![10];
    run.train.seed = 0;
    run.train.timing = Timing::Off;
    run.train.train_subset = Some(5000);
    run.train.test_subset = Some(1000);
    run
}

fn criterion_7(trained: &mut Vec<Trained>) -> Outcome {
    let Some(dir) = cifar_available() else {
        return Outcome::Skip(format!("no CIFAR-10 binaries in {}", default_cifar_dir().display()));
    };
    let data: Cifar = load_cifar(&dir, Some(5000), Some(1000)).unwrap();
    let mut lines = Vec::new();
    let (mut completed, mut accurate, mut fast) = (true, true, true);
    for (kind, srp) in variants() {
        let name = variant_name(kind, &srp);
        let run = desk_run(kind, srp, 15);
        let start = Instant::now();
        let outcome = train(&run, &data, |m| {
            eprintln!(
                "  [{name}] epoch {:>2} loss {:.4} test top1 {:.3} ({:.0}s)",
                m.epoch,
                m.train_loss,
                m.test_acc,
                start.elapsed().as_secs_f64()
            )
        });
        let seconds = start.elapsed().as_secs_f64();
        match outcome {
            Ok(out) => {
                let top1 = out.metrics.last().map_or(0.0, |m| m.test_acc);
                accurate &= top1 >= 0.35;
                fast &= seconds < 45.0 * 60.0;
                lines.push(format!("{name} {top1:.3} in {:.1} min", seconds / 60.0));
                trained.push(Trained {
                    name,
                    metrics_csv: metrics_csv(&out.metrics),
                    model: out.model,
                    top1,
                    seconds,
                });
            }
            Err(e) => {
                completed = false;
                lines.push(format!("{name} failed: {e}"));
            }
        }
    }

    // Reproducibility: rerun the most stochastic variant for two epochs and
    // compare with the first two rows of its full run.
    let (kind, srp) = (AttentionKind::DoubleBranch, SrpConfig::multi_square());
    let name = variant_name(kind, &srp);
    let again = train(&desk_run(kind, srp, 2), &data, |_| {}).map(|o| metrics_csv(&o.metrics));
    let reproduced = match (trained.iter().find(|t| t.name == name), again) {
        (Some(full), Ok(short)) => full.metrics_csv.starts_with(&short),
        _ => false,
    };

    for t in trained.iter() {
        eprintln!("  [{}] final top1 {:.3}, {:.1} min", t.name, t.top1, t.seconds / 60.0);
    }
    let baseline = |kind: AttentionKind| {
        trained
            .iter()
            .find(|t| t.name == format!("{kind}/off"))
            .map(|t| t.top1)
    };
    let deltas: Vec<String> = trained
        .iter()
        .filter(|t| !t.name.ends_with("/off"))
        .filter_map(|t| {
            let kind = if t.name.starts_with("one") { AttentionKind::OneBranch } else { AttentionKind::DoubleBranch };
            baseline(kind).map(|b| format!("{} {:+.3}", t.name, t.top1 - b))
        })
        .collect();
    verdict(
        completed && accurate && reproduced && fast,
        format!(
            "(a) no divergence: {completed}; (b) all top1 >= 0.35: {accurate} [{}]; (c) byte-exact rerun: {reproduced}; under 45 min each: {fast}; SRP minus baseline (reported only): {}",
            lines.join(", "),
            deltas.join(", ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let Some(dir) = cifar_available() else {
        return Outcome::Skip(format!("no CIFAR-10 binaries in {}", default_cifar_dir().display()));
    };
    let mut data: Dataset = read_batch(&dir.join(TRAIN_FILES[0]), Some(64)).unwrap();
    Normalization::fit(&data).apply(&mut data);
    let indices: Vec<usize> = (0..64).collect();
    let (x, labels) = data.batch(&indices);
    let mut lines = Vec::new();
    let mut all = true;
    for (kind, srp) in variants() {
        let cfg = NetworkConfig {
            depth: 8,
            attention: kind,
            srp,
            ..NetworkConfig::default()
        };
        let mut trainer = Trainer::new(Model::init(&cfg, 8).unwrap(), 8, 0.9, 0.0);
        let mut reached = None;
        for step in 1..=200 {
            trainer.step(x.clone(), &labels, 0.05).unwrap();
            if step % 5 == 0 {
                let predicted = trainer.model.predict(&data, 64).unwrap();
                if accuracy(&predicted, &labels) == 1.0 {
                    reached = Some(step);
                    break;
                }
            }
        }
        all &= reached.is_some();
        lines.push(match reached {
            Some(s) => format!("{} by step {s}", variant_name(kind, &srp)),
            None => format!("{} never", variant_name(kind, &srp)),
        });
    }
    verdict(all, format!("100% train accuracy on 64 samples: {}", lines.join(", ")))
}

fn quick_models() -> Vec<Trained> {
    // Used when criterion 7 did not run in this invocation: one epoch on a
    // small subset, enough to give the similarity diagnostic real weights.
    let Some(dir) = cifar_available() else {
        return Vec::new();
    };
    let data = load_cifar(&dir, Some(1000), Some(200)).unwrap();
    [SrpConfig::off(), SrpConfig::multi_square()]
        .into_iter()
        .map(|srp| {
            let mut run = desk_run(AttentionKind::OneBranch, srp, 1);
            run.net.depth = 8;
            run.train.train_subset = Some(1000);
            let out = train(&run, &data, |_| {}).unwrap();
            Trained {
                name: variant_name(AttentionKind::OneBranch, &srp),
                top1: out.metrics[0].test_acc,
                metrics_csv: metrics_csv(&out.metrics),
                model: out.model,
                seconds: 0.0,
            }
        })
        .collect()
}

fn criterion_9(trained: &[Trained]) -> Outcome {
    let mut r = rng(9);
    let image: Vec<f32> = (0..3 * 32 * 32).map(|_| r.random_range(0.0f32..1.0)).collect();
    let cfg = NetworkConfig {
        attention: AttentionKind::DoubleBranch,
        ..NetworkConfig::default()
    };

    let mut heat_ok = true;
    for seed in 0..2 {
        let model = Model::init(&cfg, seed).unwrap();
        for layer in [default_layer(&model), "stem.conv".to_string(), "block3.conv1".to_string()] {
            for class in [0, 7] {
                let hm = gradcam(&model, &image, class, &layer).unwrap();
                heat_ok &= hm.height == 32
                    && hm.width == 32
                    && hm.values.len() == 1024
                    && hm.values.iter().all(|v| (0.0..=1.0).contains(v));
            }
        }
    }

    let grid_bytes = || {
        let model = Model::init(&cfg, 42).unwrap();
        let grid = dump_feature_maps(&model, &image, 5, FeatureBranch::Residual, 20).unwrap();
        gray_image(grid.width(), grid.height(), &grid.values).to_ppm()
    };
    let grids_ok = grid_bytes() == grid_bytes();

    let fallback;
    let models: &[Trained] = if trained.is_empty() {
        fallback = quick_models();
        &fallback
    } else {
        trained
    };
    let probe = cifar_available()
        .map(|dir| read_batch(&dir.join(TEST_FILE), Some(256)).unwrap().images)
        .unwrap_or_else(|| (0..8 * 3 * 32 * 32).map(|_| r.random_range(0.0f32..1.0)).collect());
    let mut sims = BTreeMap::new();
    let mut sims_ok = true;
    for t in models {
        let block = t.model.net.blocks().len() - 1;
        match descriptor_similarity(&t.model, &probe, block) {
            Ok(s) => {
                sims_ok &= (-1.0..=1.0).contains(&s);
                sims.insert(t.name.clone(), s);
            }
            Err(_) => sims_ok = false,
        }
    }
    let sims_text = if sims.is_empty() {
        "no trained models available".to_string()
    } else {
        sims.iter()
            .map(|(n, s)| format!("{n} {s:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    verdict(
        heat_ok && grids_ok && sims_ok && !sims.is_empty(),
        format!(
            "Grad-CAM 32x32 in [0,1]: {heat_ok}; grids byte-reproducible: {grids_ok}; descriptor similarity (reported only, last block): {sims_text}"
        ),
    )
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|n| (1..=9).contains(n))
        .collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let titles = [
        "GAP reduction",
        "union-mask oracle",
        "gradient suite",
        "schedule",
        "area-ratio statistics",
        "test-time cost parity",
        "desk-scale training",
        "overfit sanity",
        "analysis outputs",
    ];
    let mut trained = Vec::new();
    let mut failures = 0;
    for n in 1..=9 {
        if !wanted(n) {
            continue;
        }
        let outcome = match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(&mut trained),
            8 => criterion_8(),
            _ => criterion_9(&trained),
        };
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failures += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {n} ({}): {detail}", titles[n - 1]);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
