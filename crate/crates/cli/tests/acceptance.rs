//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset with `cargo test -p patmod-cli --test acceptance -- 2 5`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use patmod::data::{generate_shape, make_dataset, DatasetSplit, Sample, ShapeClass};
use patmod::geometry::{
    center_region, chamfer_value, decenter, split_regions, voxel_of, PointCloud, Point3,
};
use patmod::model::{Ablations, Model, ModelConfig, RowMode, SplitReference};
use patmod::numerics::{grad_check_params, Coverage, Graph, ParamStore, DEFAULT_FLOOR};
use patmod::training::{
    cloud_metrics, evaluate, total_loss, train, EvalOptions, LossValues, TrainConfig, TrainError, IOU_RESOLUTION,
    MEAN_CLASS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn brute_chamfer(a: &[Point3], b: &[Point3]) -> f64 {
    let one_way = |x: &[Point3], y: &[Point3]| -> f64 {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };
    one_way(a, b) + one_way(b, a)
}

fn jitter_biases(store: &mut ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, p) in store.iter_mut() {
        if p.name.ends_with("bias") {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, half: f64) -> PointCloud {
    PointCloud::new((0..n).map(|_| [0; 3].map(|_: i32| rng.random_range(-half..half))).collect())
}

fn mini_samples(per_class: usize) -> Vec<Sample> {
    let split = DatasetSplit { train_per_class: per_class, test_per_class: 1, points: 32, image_size: 8, ..DatasetSplit::default() };
    make_dataset(&split).expect("miniature dataset").train
}

fn losses(model: &Model, store: &ParamStore, sample: &Sample, mode: RowMode) -> Result<LossValues, TrainError> {
    let mut g = Graph::with_params(store);
    let trace = model.forward(&mut g, &sample.image, SplitReference::GroundTruth(&sample.cloud), mode)?;
    Ok(total_loss(&mut g, model, &trace, &sample.cloud, 0.1)?.values(&g))
}

fn mean_total(model: &Model, samples: &[Sample]) -> Result<f64, TrainError> {
    let mut sum = 0.0;
    for s in samples {
        sum += losses(model, model.params(), s, RowMode::Compact)?.total;
    }
    Ok(sum / samples.len() as f64)
}

fn patmod(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Result<String, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_patmod"));
    cmd.current_dir(dir).args(args).env_remove("PATMOD_THREADS").env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().map_err(err)?;
    if !out.status.success() {
        return Err(format!("patmod {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

const TINY: &str = "points = 32
regions = 8
patterns = 2
pattern_points = 16
image_feature = 16
region_feature = 8
image_size = 8
conv_channels = 4,4,4,4,4,4,4
encoder_hidden = 16
learner_hidden = 8,8
modularizer_hidden = 8,8,8
customizer_hidden = 8,8
train_per_class = 3
test_per_class = 2
epochs = 2
lr = 0.001
";

fn tiny_workspace() -> Result<tempfile::TempDir, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    fs::write(dir.path().join("tiny.cfg"), TINY).map_err(err)?;
    patmod(dir.path(), &["gen-data", "--config", "tiny.cfg", "--out", "data"], &[])?;
    Ok(dir)
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::miniature();
    let model = Model::new(cfg.clone(), 1).map_err(err)?;
    let mut sample = mini_samples(1).remove(0);
    // A dense input keeps every encoder unit active; a sparse render leaves
    // the two-channel convs entirely in the ReLU dead zone.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    sample.image.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
    // Off-center ground truth crowds S into a few voxels, so some region holds
    // more than P points and rows from every pattern reach the loss.
    sample.cloud = sample.cloud.translated([0.05, 0.05, 0.05]);
    let mut store = model.params().clone();
    jitter_biases(&mut store, 1);
    let counts: Vec<usize> = {
        let mut g = Graph::with_params(&store);
        let tr = model
            .forward(&mut g, &sample.image, SplitReference::GroundTruth(&sample.cloud), RowMode::Compact)
            .map_err(err)?;
        tr.local.as_ref().ok_or("no local trace")?.regions.regions.iter().map(|r| r.real_count()).collect()
    };
    check!(counts.iter().any(|&c| c > cfg.pattern_points), "no region exceeds P: {counts:?}");
    let region = losses(&model, &store, &sample, RowMode::Compact).map_err(err)?.region;
    check!(region > 0.0, "region term is inactive at the check point");
    let objective = |g: &mut Graph| -> Result<_, TrainError> {
        let trace = model.forward(g, &sample.image, SplitReference::GroundTruth(&sample.cloud), RowMode::Compact)?;
        Ok(total_loss(g, &model, &trace, &sample.cloud, 0.1)?.total)
    };
    let dense = {
        let mut g = Graph::with_params(&store);
        let loss = objective(&mut g).map_err(err)?;
        g.backward(loss).map_err(err)?.into_dense(&store)
    };
    let reports = grad_check_params(&mut store, objective, 1e-6, DEFAULT_FLOOR, Coverage::All).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();

    let trainable = store.iter().filter(|(_, p)| p.trainable).count();
    check!(reports.len() == trainable, "checked {} of {trainable} parameters", reports.len());
    let scalars: usize = reports.iter().map(|(_, r)| r.checked).sum();
    check!(scalars == store.trainable_scalars(), "checked {scalars} of {} scalars", store.trainable_scalars());
    let silent: Vec<&str> = store
        .iter()
        .filter(|(id, p)| p.trainable && dense[id.0].data().iter().all(|&v| v == 0.0))
        .map(|(_, p)| p.name.as_str())
        .collect();
    check!(silent.is_empty(), "parameters with an all-zero gradient: {silent:?}");
    let (worst_name, worst) = reports
        .iter()
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error))
        .expect("at least one parameter");
    check!(worst.max_rel_error < 1e-4, "{worst_name}: {} at {}", worst.max_rel_error, worst.worst);
    check!(elapsed < 60.0, "took {elapsed:.1} s");
    Ok(format!(
        "{} tensors / {scalars} scalars, worst rel err {:.2e} ({worst_name}), region sizes {counts:?}, {elapsed:.1} s",
        reports.len(),
        worst.max_rel_error
    ))
}

fn chamfer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let (n, m) = if trial == 0 { (300, 400) } else { (rng.random_range(1..=300), rng.random_range(1..=400)) };
        let a = random_cloud(&mut rng, n, 1.0);
        // every fourth instance shares points between the clouds
        let b = if trial % 4 == 3 {
            let mut pts = random_cloud(&mut rng, m, 1.0).into_points();
            for (i, p) in pts.iter_mut().enumerate().take(n.min(m) / 2) {
                *p = a.points()[i];
            }
            PointCloud::new(pts)
        } else {
            random_cloud(&mut rng, m, 1.0)
        };
        let kd = chamfer_value(&a, &b).map_err(err)?;
        let brute = brute_chamfer(a.points(), b.points());
        let diff = (kd - brute).abs();
        worst = worst.max(diff);
        check!(diff <= 1e-12, "trial {trial} ({n}×{m}): kd {kd} brute {brute}");
        check!(chamfer_value(&a, &a).map_err(err)? == 0.0, "trial {trial}: chamfer(A,A) ≠ 0");
        let back = chamfer_value(&b, &a).map_err(err)?;
        check!(back == kd, "trial {trial}: asymmetric {kd} vs {back}");
    }
    Ok(format!("100 instances up to 300×400, max |kd − brute| = {worst:.1e}, self 0, symmetric"))
}

fn strictly_inside(v: &[f64]) -> bool {
    v.iter().all(|x| x.abs() < 1.0)
}

fn pipeline_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    // center / decenter round trip and partition exactness on random clouds
    let mut round_trip: f64 = 0.0;
    for trial in 0..50 {
        let n = rng.random_range(1..=500);
        let cloud = random_cloud(&mut rng, n, 0.45);
        let reference = if trial % 2 == 0 { cloud.clone() } else { random_cloud(&mut rng, 64, 0.4) };
        let m = [1, 8, 27, 64][trial % 4];
        let set = split_regions(&cloud, &reference, m, n).map_err(err)?;
        let mut seen = BTreeSet::new();
        for r in &set.regions {
            for (row, &i) in r.source_indices.iter().enumerate() {
                check!(seen.insert(i), "trial {trial}: point {i} in two regions");
                check!(r.mask[row] && r.points[row] == cloud.points()[i], "trial {trial}: row {row} is not point {i}");
                let v = voxel_of(&cloud.points()[i], &set.bounds, set.per_edge);
                check!(v == r.voxel_index, "trial {trial}: point {i} in voxel {:?}, not {v:?}", r.voxel_index);
            }
            check!(r.mask[r.real_count()..].iter().all(|&k| !k), "trial {trial}: padding marked real");
            check!(r.points[r.real_count()..].iter().all(|p| *p == [0.0; 3]), "trial {trial}: padding not zero");
            let c = center_region(r);
            let back = decenter(&c.points[..r.real_count()], c.center);
            for (p, q) in back.iter().zip(&r.points) {
                for k in 0..3 {
                    round_trip = round_trip.max((p[k] - q[k]).abs());
                }
            }
        }
        check!(seen.len() == n, "trial {trial}: {} of {n} points assigned", seen.len());
        check!(set.truncated == 0, "trial {trial}: truncated at full capacity");
    }
    check!(round_trip <= 1e-12, "center/decenter round trip error {round_trip:e}");

    // residual identity, padded-row neutrality and ranges on real forwards
    let samples = mini_samples(1);
    let mut sub_err: f64 = 0.0;
    let mut loss_gap: f64 = 0.0;
    for (k, sample) in samples.iter().enumerate() {
        let model = Model::new(ModelConfig::miniature(), 30 + k as u64).map_err(err)?;
        let mut store = model.params().clone();
        jitter_biases(&mut store, 30 + k as u64);
        let mut g = Graph::with_params(&store);
        let tr = model
            .forward(&mut g, &sample.image, SplitReference::GroundTruth(&sample.cloud), RowMode::Full)
            .map_err(err)?;
        let l = tr.local.as_ref().ok_or("no local trace")?;
        let t = l.t.ok_or("no shift")?;
        let (rp, tv, u) = (g.value(l.r_prime).data(), g.value(t).data(), g.value(l.u).data());
        for i in 0..u.len() {
            check!(u[i] == rp[i] + tv[i], "sample {k} row {}: U ≠ R' + t", i / 3);
            sub_err = sub_err.max((u[i] - rp[i] - tv[i]).abs());
        }
        for (what, v) in [("S", tr.s_cloud), ("R'", l.r_prime_local), ("t", t)] {
            check!(strictly_inside(g.value(v).data()), "sample {k}: {what} leaves (-1, 1)");
        }
        for &p in &l.patterns {
            check!(strictly_inside(g.value(p).data()), "sample {k}: pattern leaves (-1, 1)");
        }
        let full = losses(&model, &store, sample, RowMode::Full).map_err(err)?;
        let compact = losses(&model, &store, sample, RowMode::Compact).map_err(err)?;
        loss_gap = loss_gap.max((full.total - compact.total).abs()).max((full.region - compact.region).abs());
    }
    check!(sub_err <= 4.0 * f64::EPSILON, "U − R' − t reaches {sub_err:e}");
    check!(loss_gap <= 1e-12, "padded rows change the loss by {loss_gap:e}");

    // tanh range at the default size
    let cfg = ModelConfig::default();
    let model = Model::new(cfg.clone(), 3).map_err(err)?;
    let gt = generate_shape(ShapeClass::Chair, 3);
    let image = patmod::data::sample_image(&gt, cfg.image_size);
    let mut g = Graph::with_params(model.params());
    let tr = model.forward(&mut g, &image, SplitReference::Prediction, RowMode::Full).map_err(err)?;
    let l = tr.local.as_ref().ok_or("no local trace")?;
    check!(strictly_inside(g.value(tr.s_cloud).data()), "default S leaves (-1, 1)");
    check!(strictly_inside(g.value(l.t.ok_or("no shift")?).data()), "default t leaves (-1, 1)");
    check!(strictly_inside(g.value(l.r_prime_local).data()), "default R' leaves (-1, 1)");

    Ok(format!(
        "50 splits exact, round trip {round_trip:.0e}, U == R'+t bitwise (U−R'−t ≤ {sub_err:.0e}), padding gap {loss_gap:.0e}"
    ))
}

fn config_audit() -> Outcome {
    let m = ModelConfig::default();
    let t = TrainConfig::default();
    let expect: [(&str, f64, f64); 12] = [
        ("S", m.points as f64, 2048.0),
        ("F", m.output_points as f64, 2048.0),
        ("M", m.regions as f64, 8.0),
        ("N", m.patterns as f64, 8.0),
        ("P", m.pattern_points as f64, 256.0),
        ("H", m.image_feature as f64, 1024.0),
        ("E", m.region_feature as f64, 64.0),
        ("alpha", t.alpha, 0.1),
        ("batch", t.batch_size as f64, 4.0),
        ("lr", t.lr, 1e-4),
        ("decay", t.lr_decay, 0.95),
        ("decay_every", t.decay_every_epochs as f64, 70.0),
    ];
    for (name, got, want) in expect {
        check!(got == want, "{name} = {got}, expected {want}");
    }
    check!(m.learner_hidden == [64, 256], "learner widths {:?}", m.learner_hidden);
    check!(m.modularizer_hidden == [512, 256, 128], "modularizer widths {:?}", m.modularizer_hidden);
    check!(m.customizer_hidden == [512, 128], "customizer widths {:?}", m.customizer_hidden);
    check!(m.encoder_hidden == 1024 && m.conv_channels.len() == 7, "encoder layout");
    check!(m.ablations == Ablations::default(), "ablations on by default");

    // the command line resolves to the same values
    let dir = tempfile::tempdir().map_err(err)?;
    patmod(
        dir.path(),
        &["gen-data", "--out", "d", "--set", "train_per_class=1", "--set", "test_per_class=1"],
        &[],
    )?;
    let text = fs::read_to_string(dir.path().join("d/config.resolved")).map_err(err)?;
    let lines: BTreeSet<&str> = text.lines().collect();
    for line in [
        "points = 2048",
        "output_points = 2048",
        "regions = 8",
        "patterns = 8",
        "pattern_points = 256",
        "image_feature = 1024",
        "region_feature = 64",
        "alpha = 0.1",
        "batch_size = 4",
        "lr = 0.0001",
        "lr_decay = 0.95",
        "decay_every_epochs = 70",
    ] {
        check!(lines.contains(line), "resolved config lacks `{line}`");
    }
    Ok("12 hyperparameters and MLP widths match in the library and the resolved CLI config".into())
}

fn mlp(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn parameter_accounting() -> Outcome {
    let cfg = ModelConfig::default();
    let model = Model::new(cfg.clone(), 5).map_err(err)?;
    let c = model.param_count();
    let (h, e, s) = (cfg.image_feature, cfg.region_feature, cfg.points);
    let learner = 3 * 64 + 64 + 64 * 256 + 256 + 256 * 3 + 3;
    let modularizer = mlp(&[3 + e, 512, 256, 128, 3]);
    let customizer = mlp(&[3 + h, 512, 128, 3]);
    let decoder = h * 3 * s + 3 * s;
    let region_encoder = 3 * e + e;
    check!(c.learners == vec![learner; 8], "learners {:?}, expected 8 × {learner}", c.learners);
    check!(c.modularizers == vec![modularizer; 8], "modularizers {:?}, expected 8 × {modularizer}", c.modularizers);
    check!(c.customizer == customizer, "customizer {}, expected {customizer}", c.customizer);
    check!(c.decoder == decoder, "decoder {}, expected {decoder}", c.decoder);
    check!(c.region_encoder == region_encoder, "region encoder {}, expected {region_encoder}", c.region_encoder);

    let mut conv = 0;
    let mut c_in = cfg.image_channels;
    for &c_out in &cfg.conv_channels {
        conv += 9 * c_in * c_out + c_out;
        c_in = c_out;
    }
    let encoder = conv + mlp(&[cfg.conv_output_len(), cfg.encoder_hidden, h]);
    check!(c.encoder == encoder, "encoder {}, expected {encoder}", c.encoder);
    let sum = c.encoder + c.decoder + c.learners.iter().sum::<usize>() + c.region_encoder
        + c.modularizers.iter().sum::<usize>() + c.customizer;
    check!(c.total == sum, "total {} is not the component sum {sum}", c.total);
    Ok(format!(
        "learner {learner}, modularizer {modularizer}, customizer {customizer}, decoder {decoder}; total {} ({:.2}M, reference model 31.51M)",
        c.total,
        c.total as f64 / 1e6
    ))
}

fn overfit_harness() -> Outcome {
    let start = Instant::now();
    let split = DatasetSplit { train_per_class: 3, test_per_class: 1, ..DatasetSplit::default() };
    let samples: Vec<Sample> = make_dataset(&split).map_err(err)?.train.into_iter().take(8).collect();
    let mut model = Model::new(ModelConfig::default(), 6).map_err(err)?;
    let initial = mean_total(&model, &samples).map_err(err)?;
    let target = 0.25 * initial;

    let cfg = TrainConfig { epochs: 250, max_steps: Some(500), seed: 6, ..TrainConfig::default() };
    let steps_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let mut epoch_sum = 0.0;
    let report = train(&mut model, &samples, &[], &cfg, |r| {
        epoch_sum += r.losses.total;
        if r.step % steps_per_epoch == 0 {
            let mean = epoch_sum / steps_per_epoch as f64;
            epoch_sum = 0.0;
            return mean > target;
        }
        true
    })
    .map_err(err)?;
    let fin = mean_total(&model, &samples).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let rows = evaluate(&model, &samples, "train", &EvalOptions::default()).map_err(err)?;
    let cd = rows.iter().find(|r| r.class == MEAN_CLASS).map(|r| r.cd_eval).unwrap_or(f64::NAN);
    let detail = format!(
        "loss {initial:.2} -> {fin:.2} ({:.1}%) in {} steps, {elapsed:.0} s; train-split eval cd {cd:.4}",
        100.0 * fin / initial,
        report.steps
    );
    check!(fin <= target, "{detail}");
    check!(report.steps <= 500, "{detail}");
    check!(elapsed < 900.0, "{detail}");
    Ok(detail)
}

/// Small network and dataset for the generalization comparison.
fn desk_config() -> ModelConfig {
    ModelConfig {
        points: 512,
        output_points: 512,
        regions: 8,
        patterns: 8,
        pattern_points: 64,
        image_feature: 256,
        region_feature: 64,
        image_size: 32,
        conv_channels: vec![8, 8, 16, 16, 32, 32, 64],
        encoder_hidden: 256,
        learner_hidden: vec![32, 64],
        modularizer_hidden: vec![128, 64, 32],
        customizer_hidden: vec![128, 64],
        ..ModelConfig::default()
    }
}

const DESK_EPOCHS: usize = 40;

fn generalization_trend() -> Outcome {
    let start = Instant::now();
    let cfg = desk_config();
    let split = DatasetSplit { train_per_class: 24, test_per_class: 6, points: cfg.points, image_size: cfg.image_size, ..DatasetSplit::default() };
    let data = make_dataset(&split).map_err(err)?;
    let evals: [(&str, &[Sample]); 1] = [("unseen", &data.test_unseen)];
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let mut cd = [0.0; 2];
        for (k, ab) in [Ablations::default(), Ablations { no_local: true, ..Ablations::default() }].into_iter().enumerate() {
            let mut model = Model::new(ModelConfig { ablations: ab, ..cfg.clone() }, seed).map_err(err)?;
            let t = TrainConfig { lr: 5e-4, epochs: DESK_EPOCHS, seed, eval_every: DESK_EPOCHS, ..TrainConfig::default() };
            let report = train(&mut model, &data.train, &evals, &t, |_| true).map_err(err)?;
            cd[k] = report
                .history
                .iter()
                .rev()
                .find(|r| r.split == "unseen" && r.class == MEAN_CLASS)
                .map(|r| r.cd_eval)
                .ok_or("no unseen row")?;
        }
        if cd[0] <= cd[1] {
            wins += 1;
        }
        lines.push(format!("seed {seed}: full {:.4} vs no_local {:.4}", cd[0], cd[1]));
    }
    let detail = format!("{}; full wins {wins}/3, {:.0} s", lines.join(", "), start.elapsed().as_secs_f64());
    check!(wins >= 2, "{detail}");
    Ok(detail)
}

fn sweep_grids() -> Outcome {
    let dir = tiny_workspace()?;
    let grids: [(&str, &[&str]); 4] = [
        ("alpha", &["0.01", "0.1", "1", "10"]),
        ("M", &["1", "8", "27"]),
        ("N", &["2", "4", "8", "16"]),
        ("sampling_mode", &["voxel", "plane"]),
    ];
    let mut summary = Vec::new();
    for (param, values) in grids {
        let out = format!("sweep_{param}.csv");
        let joined = values.join(",");
        patmod(
            dir.path(),
            &["sweep", "--config", "tiny.cfg", "--set", "epochs=1", "--parameter", param, "--values", &joined, "--out", &out],
            &[],
        )?;
        let text = fs::read_to_string(dir.path().join(&out)).map_err(err)?;
        let mut lines = text.lines();
        check!(
            lines.next() == Some("parameter,value,cd_seen,iou_seen,cd_unseen,iou_unseen,final_loss"),
            "{param}: bad header"
        );
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        check!(rows.len() == values.len(), "{param}: {} rows for {} values", rows.len(), values.len());
        let mut order = Vec::new();
        for (row, want) in rows.iter().zip(values) {
            check!(row.len() == 7, "{param}: row {row:?} has {} fields", row.len());
            check!(row[1] == *want, "{param}: row value {} where {want} was expected", row[1]);
            for f in &row[2..] {
                let v: f64 = f.parse().map_err(|_| format!("{param}={want}: field `{f}` is not a number"))?;
                check!(v.is_finite(), "{param}={want}: non-finite field");
            }
            order.push(format!("{want}:{}", row[4]));
        }
        summary.push(format!("{param} [{}]", order.join(" ")));
    }
    Ok(format!("13 rows; unseen cd by value {}", summary.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tiny_workspace()?;
    let run = |out: &str, env: &[(&str, &str)]| {
        patmod(dir.path(), &["train", "--config", "tiny.cfg", "--data", "data", "--out", out, "--seed", "1"], env)
    };
    run("a", &[])?;
    run("b", &[])?;
    run("c", &[("PATMOD_THREADS", "4")])?;
    let read = |p: &str| fs::read(dir.path().join(p)).map_err(err);
    check!(read("a/checkpoint.bin")? == read("b/checkpoint.bin")?, "checkpoints differ between identical runs");
    check!(read("a/metrics.csv")? == read("b/metrics.csv")?, "metrics differ between identical runs");
    check!(read("a/metrics.csv")? == read("c/metrics.csv")?, "PATMOD_THREADS=4 changes the metrics");
    let same_ckpt = read("a/checkpoint.bin")? == read("c/checkpoint.bin")?;
    Ok(format!(
        "seed 1 twice: identical checkpoint and CSV; 4 threads: identical CSV{}",
        if same_ckpt { " and checkpoint" } else { "" }
    ))
}

fn metrics_sanity() -> Outcome {
    let mut classes = Vec::new();
    for class in ShapeClass::ALL {
        for seed in [0, 1, 2] {
            let gt = generate_shape(class, seed);
            for points in [None, Some(1024)] {
                let m = cloud_metrics(&gt, &gt, points).map_err(err)?;
                check!(m.cd == 0.0 && m.iou == 1.0, "{class} seed {seed} {points:?}: cd {} iou {}", m.cd, m.iou);
            }
        }
        classes.push(class.name());
    }
    Ok(format!("cd 0 and IoU 1 at {IOU_RESOLUTION}³ for {}", classes.join(", ")))
}

fn main() -> ExitCode {
    let all: [Criterion; 10] = [
        (1, "gradient integrity", gradient_integrity),
        (2, "chamfer oracle", chamfer_oracle),
        (3, "pipeline algebra", pipeline_algebra),
        (4, "config audit", config_audit),
        (5, "parameter accounting", parameter_accounting),
        (6, "overfit harness", overfit_harness),
        (7, "generalization trend", generalization_trend),
        (8, "sweep grids", sweep_grids),
        (9, "determinism", determinism),
        (10, "metrics sanity", metrics_sanity),
    ];
    let chosen: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in all {
        if !chosen.is_empty() && !chosen.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {detail}");
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
