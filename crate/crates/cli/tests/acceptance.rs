//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned.
//!
//! A criterion marked "reported" cannot be met on this host or with these
//! constants; it still prints FAIL but does not fail the run. Every other
//! failure exits non-zero.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pyramid_core::clstm::{sweep_forward, sweep_inference, ClstmParams, Direction};
use pyramid_core::datapipe::Augmentation;
use pyramid_core::format::{read_labels, read_vol};
use pyramid_core::metrics::{avd, dice, hausdorff95, pixel_error, rand_error, Connectivity, SegmentationPair};
use pyramid_core::network::{pyramid_inference, Activation, Architecture, LayerSpec, PyramidLayer};
use pyramid_core::oracle::{brute_hausdorff95, brute_rand_error, finite_diff, naive_sweep};
use pyramid_core::synth::hollow_ellipsoid;
use pyramid_core::train::{
    loss_and_grad, lr, train_loop, voxel_accuracy, Control, OptimizerState, Schedule, Stage, TrainState,
    TrainingSet, LR_FLOOR, LR_SCALE,
};
use pyramid_core::{Dims, LabelVolume, Network, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_TOL: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-5;
const GRAD_H: f64 = 1e-5;
/// Absolute tolerance below which central differences at GRAD_H are roundoff
/// (loss ~0.25, so ulp(loss)/2h is ~1e-11); the relative bound applies above it.
const GRAD_ATOL: f64 = 1e-10;
const CONTEXT_MIN: f64 = 1e-12;
const LR_REL_TOL: f64 = 1e-15;
const OPT_STEPS: usize = 500;
const OPT_TOL: f64 = 0.01;
const TOY_ACCURACY: f64 = 0.95;
const TOY_BUDGET_S: f64 = 15.0 * 60.0;
const SPEEDUP_MIN: f64 = 2.5;
const SPEEDUP_THREADS: usize = 8;
const SIMPLEX_TOL: f64 = 1e-10;

struct Outcome {
    id: &'static str,
    name: &'static str,
    pass: bool,
    /// Failures that do not fail the run, with the reason.
    reported: Option<String>,
    detail: String,
}

fn outcome(id: &'static str, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome {
        id,
        name,
        pass,
        reported: None,
        detail,
    }
}

fn random_volume(rng: &mut ChaCha8Rng, dims: Dims) -> Volume {
    Volume::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, c: usize, o: usize, k: usize, scale: f64) -> ClstmParams {
    let mut p = ClstmParams::zeros(c, o, k, k);
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|w| *w = rng.random_range(-scale..scale));
    }
    p
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let configs = 60;
    let mut worst: f64 = 0.0;
    let mut inference_exact = true;
    for _ in 0..configs {
        let dims = Dims::new(
            rng.random_range(1..=9),
            rng.random_range(1..=8),
            rng.random_range(1..=7),
            rng.random_range(1..=3),
        );
        let hidden = rng.random_range(1..=4);
        let k = if rng.random_bool(0.5) { 3 } else { 5 };
        let x = random_volume(&mut rng, dims);
        for dir in Direction::ALL {
            let p = random_params(&mut rng, dims.channels, hidden, k, 0.5);
            let (h, _) = sweep_forward(&x, &p, dir).unwrap();
            worst = worst.max(h.max_abs_diff(&naive_sweep(&x, &p, dir)).unwrap());
            inference_exact &= sweep_inference(&x, &p, dir).unwrap().data() == h.data();
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        "1",
        "oracle equivalence",
        worst <= ORACLE_TOL && inference_exact && secs < 60.0,
        format!(
            "{configs} configs x 6 directions, max |diff| {worst:.2e} (tol {ORACLE_TOL:e}), inference bit-equal {inference_exact}, {secs:.1}s (limit 60s)"
        ),
    )
}

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let arch = Architecture {
        input_channels: 2,
        filter: 3,
        layers: vec![
            LayerSpec::Pyramid { hidden: 2 },
            LayerSpec::Fc { units: 2, activation: Activation::Tanh },
            LayerSpec::Pyramid { hidden: 2 },
            LayerSpec::Fc { units: 2, activation: Activation::Softmax },
        ],
    };
    let mut net = Network::init_uniform(&arch, 7).unwrap();
    // larger weights than the default init so every path carries signal
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let theta: Vec<f64> = net.to_flat().iter().map(|_| rng.random_range(-0.5..0.5)).collect();
    net.set_flat(&theta).unwrap();
    let x = random_volume(&mut rng, Dims::new(4, 4, 3, 2));
    let target = LabelVolume::from_fn([4, 4, 3], 2, |_, _, _| rng.random_range(0..2)).unwrap();

    let (y, cache) = net.forward(&x).unwrap();
    let (_, dy) = loss_and_grad(&y, &target).unwrap();
    let analytic = net.backward(&cache, &dy).unwrap().to_flat();
    let mut probe = net.clone();
    let numeric = finite_diff(
        |v| {
            probe.set_flat(v).unwrap();
            loss_and_grad(&probe.predict(&x).unwrap(), &target).unwrap().0
        },
        &theta,
        GRAD_H,
    );
    let pairs = || analytic.iter().zip(&numeric);
    let failing = pairs()
        .filter(|(a, n)| (*a - *n).abs() > GRAD_ATOL + GRAD_TOL * a.abs().max(n.abs()))
        .count();
    let max_abs = pairs().map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let strict = pairs().map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    outcome(
        "2",
        "gradient correctness",
        failing == 0,
        format!(
            "{} parameters, h {GRAD_H:e}, {failing} outside |a-n| <= {GRAD_ATOL:e} + {GRAD_TOL:e}*max(|a|,|n|); max abs error {max_abs:.2e}, unfloored max relative {strict:.2e}, {:.1}s",
            theta.len(),
            started.elapsed().as_secs_f64()
        ),
    )
}

fn full_context() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let layer = PyramidLayer {
        params: Direction::ALL
            .iter()
            .map(|_| random_params(&mut rng, 1, 2, 3, 1.0))
            .collect(),
    };
    let x = random_volume(&mut rng, Dims::new(5, 5, 5, 1));
    let probe = [2, 2, 2];
    let out = |v: &Volume| pyramid_inference(v, &layer).unwrap().get(probe[0], probe[1], probe[2], 0);
    let h = 1e-5;
    let mut weakest = f64::INFINITY;
    for i in 0..x.data().len() {
        let mut up = x.clone();
        up.data_mut()[i] += h;
        let mut down = x.clone();
        down.data_mut()[i] -= h;
        weakest = weakest.min((out(&up) - out(&down)).abs());
    }
    outcome(
        "3",
        "full context",
        weakest > CONTEXT_MIN,
        format!(
            "125 voxels perturbed by ±{h:e}, smallest change at probe {probe:?} is {weakest:.2e} (must exceed {CONTEXT_MIN:e})"
        ),
    )
}

fn learning_rate() -> Outcome {
    let exact = lr(0) == LR_FLOOR + LR_SCALE && lr(100) == LR_FLOOR + LR_SCALE / 2.0;
    let literal = (lr(0) - 0.010001).abs() <= f64::EPSILON * 0.010001 && (lr(100) - 0.005001).abs() <= f64::EPSILON * 0.005001;
    let worst = [0, 50, 250]
        .iter()
        .map(|&e| {
            let a = lr(e + 100) - LR_FLOOR;
            let b = (lr(e) - LR_FLOOR) / 2.0;
            (a - b).abs() / b
        })
        .fold(0.0, f64::max);
    outcome(
        "4",
        "learning-rate schedule",
        exact && literal && worst <= LR_REL_TOL,
        format!(
            "lr(0) = {}, lr(100) = {}, half-life identity max relative error {worst:.1e} for e in {{0, 50, 250}} (tol {LR_REL_TOL:e})",
            lr(0),
            lr(100)
        ),
    )
}

fn optimizer_normalization() -> Outcome {
    let rate = 0.01;
    let mut ratios = Vec::new();
    for g in [1e-6, 1.0, 1e6] {
        let mut opt = OptimizerState::new(1);
        let mut theta = [0.0];
        let mut last = 0.0;
        for _ in 0..OPT_STEPS {
            let before = theta[0];
            opt.step(&mut theta, &[g], rate).unwrap();
            last = (theta[0] - before).abs();
        }
        ratios.push((g, last / rate));
    }
    let pass = ratios.iter().all(|(_, r)| (r - 1.0).abs() <= OPT_TOL);
    let detail = ratios
        .iter()
        .map(|(g, r)| format!("|g| {g:e}: step/lr {r:.6}"))
        .collect::<Vec<_>>()
        .join(", ");
    let mut o = outcome("5", "optimizer normalization", pass, format!("{detail} (tol {OPT_TOL}, {OPT_STEPS} steps)"));
    if !pass {
        o.reported = Some(
            "with eps = 1e-5 the step for |g| = 1e-6 is g/(|g| + eps) = 1/11 of lr; the scale-independence claim needs |g| >> eps".into(),
        );
    }
    o
}

fn toy_architecture() -> Architecture {
    Architecture {
        input_channels: 1,
        filter: 3,
        layers: vec![
            LayerSpec::Pyramid { hidden: 4 },
            LayerSpec::Fc { units: 8, activation: Activation::Tanh },
            LayerSpec::Pyramid { hidden: 8 },
            LayerSpec::Fc { units: 2, activation: Activation::Softmax },
        ],
    }
}

fn toy_segmentation() -> Outcome {
    let started = Instant::now();
    let seed = 2024;
    let size = [32, 32, 16];
    let train: Vec<_> = (0..16).map(|i| hollow_ellipsoid(size, seed, i).unwrap()).collect();
    let test: Vec<_> = (1000..1004).map(|i| hollow_ellipsoid(size, seed, i).unwrap()).collect();
    let data = TrainingSet {
        volumes: train,
        augmentation: Augmentation {
            rotate_z: false,
            flip_x: true,
            flip_y: true,
            flip_z: true,
        },
    };
    let schedule = Schedule {
        stages: vec![
            Stage { epochs: 200, size: [16, 16, 8] },
            Stage { epochs: 60, size },
        ],
    };
    let mut state = TrainState::new(Network::init_uniform(&toy_architecture(), seed).unwrap(), seed);
    train_loop(&mut state, &data, &schedule, |_, _| Ok(Control::Continue)).unwrap();
    let mut hits = 0.0;
    let mut majority = 0.0;
    for (v, l) in &test {
        hits += voxel_accuracy(&state.net.predict(v).unwrap(), l).unwrap();
        majority += l.count(0) as f64 / l.labels().len() as f64;
    }
    let acc = hits / test.len() as f64;
    let majority = majority / test.len() as f64;
    let secs = started.elapsed().as_secs_f64();
    let threads = rayon::current_num_threads();
    outcome(
        "6",
        "toy segmentation",
        acc >= TOY_ACCURACY && secs <= TOY_BUDGET_S,
        format!(
            "held-out voxel accuracy {:.2}% (need {:.0}%, all-background baseline {:.2}%), {} epochs in {secs:.0}s on {threads} thread(s) (budget {TOY_BUDGET_S:.0}s)",
            acc * 100.0,
            TOY_ACCURACY * 100.0,
            majority * 100.0,
            schedule.total_epochs()
        ),
    )
}

fn pyramid() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pyramid"))
}

fn run_ok(cmd: &mut Command) -> Result<String, String> {
    let out = cmd.output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{:?} exited {:?}: {}",
            cmd.get_args().collect::<Vec<_>>(),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn bench_rows(stdout: &str) -> Vec<(usize, f64, f64)> {
    stdout
        .lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?))
        })
        .collect()
}

fn parallel_identity(dir: &Path) -> Outcome {
    let cfg = dir.join("bench-small.toml");
    fs::write(
        &cfg,
        "[network]\nfilter = 3\n\n[bench]\nsize = \"24x24x8\"\nthreads = [1, 2, 4, 8]\n",
    )
    .unwrap();
    let res = run_ok(pyramid().arg("bench").arg("--config").arg(&cfg).arg("--out").arg(dir.join("bench-small")));
    match res {
        Ok(stdout) => {
            let rows = bench_rows(&stdout);
            outcome(
                "7a",
                "parallel determinism",
                rows.len() == 4,
                format!(
                    "reference widths, 3x3 filters, 24x24x8x1: outputs bit-identical at threads {:?}",
                    rows.iter().map(|r| r.0).collect::<Vec<_>>()
                ),
            )
        }
        Err(e) => outcome("7a", "parallel determinism", false, e),
    }
}

fn parallel_speedup(dir: &Path) -> Outcome {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cores < SPEEDUP_THREADS {
        let mut o = outcome(
            "7b",
            "parallel speedup",
            false,
            format!("host exposes {cores} hardware thread(s); a {SPEEDUP_THREADS}-thread speedup of {SPEEDUP_MIN}x cannot be measured"),
        );
        o.reported = Some("hardware-bound: needs at least 8 cores".into());
        return o;
    }
    let cfg = dir.join("bench.toml");
    fs::write(&cfg, format!("[bench]\nsize = \"128x128x16\"\nthreads = [1, {SPEEDUP_THREADS}]\n")).unwrap();
    match run_ok(pyramid().arg("bench").arg("--config").arg(&cfg).arg("--out").arg(dir.join("bench"))) {
        Ok(stdout) => {
            let rows = bench_rows(&stdout);
            let speedup = rows.last().map(|r| r.2).unwrap_or(0.0);
            outcome(
                "7b",
                "parallel speedup",
                speedup >= SPEEDUP_MIN,
                format!("128x128x16x1, reference widths, 7x7: {speedup:.2}x at {SPEEDUP_THREADS} threads (need {SPEEDUP_MIN}x)"),
            )
        }
        Err(e) => outcome("7b", "parallel speedup", false, e),
    }
}

fn random_labels(rng: &mut ChaCha8Rng, max: usize, classes: u8) -> (LabelVolume, LabelVolume) {
    let s = [0, 1, 2].map(|_| rng.random_range(1..=max));
    let n = s[0] * s[1] * s[2];
    // sparse foreground for some instances, dense for others
    let p1 = rng.random_range(0.05..0.9);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<u8> {
        (0..n)
            .map(|_| if rng.random_bool(p1) { rng.random_range(1..classes) } else { 0 })
            .collect()
    };
    let a = draw(rng);
    let b = draw(rng);
    (
        LabelVolume::new(s, classes as usize, a).unwrap(),
        LabelVolume::new(s, classes as usize, b).unwrap(),
    )
}

fn metrics_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut hd_ok = 0;
    for _ in 0..200 {
        let (p, r) = random_labels(&mut rng, 10, 3);
        let spacing = [rng.random_range(0.5..2.0), 1.0, rng.random_range(0.5..3.0)];
        let pair = SegmentationPair::new(&p, &r, spacing).unwrap();
        let fast = hausdorff95(&pair, 1);
        let slow = brute_hausdorff95(&p, &r, 1, spacing);
        if fast.map(f64::to_bits) == slow.map(f64::to_bits) {
            hd_ok += 1;
        }
    }
    let mut rand_ok = 0;
    for i in 0..200 {
        let (p, r) = random_labels(&mut rng, 6, 3);
        let pair = SegmentationPair::new(&p, &r, [1.0; 3]).unwrap();
        let slice = i % 2 == 1;
        let conn = if slice { Connectivity::Slice2d } else { Connectivity::Face3d };
        if rand_error(&pair, 1, conn) == brute_rand_error(&p, &r, 1, slice) {
            rand_ok += 1;
        }
    }
    let fixtures = metric_fixtures();
    outcome(
        "8",
        "metrics oracle equivalence",
        hd_ok == 200 && rand_ok == 200 && fixtures.is_empty(),
        format!(
            "hausdorff95 exact on {hd_ok}/200, rand error exact on {rand_ok}/200, hand fixtures {}",
            if fixtures.is_empty() { "all match".to_string() } else { format!("mismatched: {}", fixtures.join(", ")) }
        ),
    )
}

fn metric_fixtures() -> Vec<&'static str> {
    let lab = |s: [usize; 3], f: &dyn Fn(usize) -> bool| LabelVolume::from_fn(s, 2, |x, _, _| u8::from(f(x))).unwrap();
    let mut bad = Vec::new();
    let a = lab([4, 2, 1], &|x| x < 2);
    let b = lab([4, 2, 1], &|x| x >= 2);
    let c = lab([4, 2, 1], &|x| x == 1 || x == 2);
    if dice(&pair(&a, &a), 1) != 1.0 || dice(&pair(&a, &b), 1) != 0.0 || dice(&pair(&a, &c), 1) != 0.5 {
        bad.push("dice");
    }
    let full = lab([110, 1, 1], &|_| true);
    let hundred = lab([110, 1, 1], &|x| x < 100);
    let empty = lab([110, 1, 1], &|_| false);
    if avd(&pair(&full, &hundred), 1) != Some(10.0) || avd(&pair(&full, &empty), 1).is_some() {
        bad.push("avd");
    }
    let r = lab([5, 1, 1], &|x| x < 3);
    let p = lab([5, 1, 1], &|x| x == 0 || x == 1 || x == 4);
    if (pixel_error(&pair(&p, &r), 1) - 1.0 / 3.0).abs() > 1e-15 || pixel_error(&pair(&r, &r), 1) != 0.0 {
        bad.push("pixel_error");
    }
    bad
}

fn pair<'a>(a: &'a LabelVolume, b: &'a LabelVolume) -> SegmentationPair<'a> {
    SegmentationPair::new(a, b, [1.0; 3]).unwrap()
}

const PIPELINE_CONFIG: &str = r#"[run]
seed = 11

[paths]
raw_dir = "synth/raw"
data_dir = "prep"
label_dir = "synth/labels"
prediction_dir = "pred"
model = "train/model.pnet"
train_cases = ["train_000", "train_001", "train_002", "train_003"]
test_cases = ["test_000", "test_001"]

[dataset]
rotate_z = false

[network]
filter = 3
layers = ["pyramid 4", "fc 8 tanh", "pyramid 8", "fc 2 softmax"]

[train]
checkpoint_every = 50

[predict]
tile = "32x32x16"

[synth]
size = "48x48x16"
train_count = 4
test_count = 2
"#;

fn pipeline(dir: &Path) -> Outcome {
    match run_pipeline(dir) {
        Ok((detail, pass)) => outcome("9", "pipeline integrity", pass, detail),
        Err(e) => outcome("9", "pipeline integrity", false, e),
    }
}

fn run_pipeline(dir: &Path) -> Result<(String, bool), String> {
    let started = Instant::now();
    let cfg = dir.join("run.toml");
    fs::write(&cfg, PIPELINE_CONFIG).unwrap();
    let step = |cmd: &str, out: &str, extra: &[&str]| {
        run_ok(
            pyramid()
                .current_dir(dir)
                .arg(cmd)
                .arg("--config")
                .arg("run.toml")
                .arg("--out")
                .arg(out)
                .args(extra),
        )
    };
    step("synth", "synth", &[])?;
    step("preprocess", "prep", &[])?;
    step("train", "train", &[])?;
    step("predict", "pred", &[])?;
    let metrics = step("evaluate", "eval", &[])?;

    let mut worst: f64 = 0.0;
    let mut acc = 0.0;
    for case in ["test_000", "test_001"] {
        let probs = read_vol(dir.join(format!("pred/{case}.probs.pvol"))).map_err(|e| e.to_string())?;
        let n = probs.dims().voxels();
        for i in 0..n {
            worst = worst.max((probs.data()[i] + probs.data()[i + n] - 1.0).abs());
        }
        let reference = read_labels(dir.join(format!("synth/labels/{case}.pvol"))).map_err(|e| e.to_string())?;
        acc += voxel_accuracy(&probs, &reference).map_err(|e| e.to_string())? / 2.0;
    }

    // interrupted run: resume from an intermediate checkpoint in a fresh directory
    step("train", "resumed", &["--resume", "train/checkpoint-000550.pnet"])?;
    let full = fs::read(dir.join("train/model.pnet")).map_err(|e| e.to_string())?;
    let resumed = fs::read(dir.join("resumed/model.pnet")).map_err(|e| e.to_string())?;
    let identical = full == resumed;

    // a prediction scored against itself
    fs::create_dir_all(dir.join("self")).unwrap();
    for case in ["test_000", "test_001"] {
        fs::copy(dir.join(format!("pred/{case}.labels.pvol")), dir.join(format!("self/{case}.pvol"))).unwrap();
    }
    let self_cfg = PIPELINE_CONFIG.replace("label_dir = \"synth/labels\"", "label_dir = \"self\"");
    fs::write(dir.join("self.toml"), self_cfg).unwrap();
    let self_metrics = run_ok(
        pyramid()
            .current_dir(dir)
            .args(["evaluate", "--config", "self.toml", "--out", "self-eval"]),
    )?;
    let self_dice = self_metrics
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2).and_then(|d| d.parse::<f64>().ok()) == Some(1.0));

    let rows = metrics.lines().count() - 1;
    let pass = worst <= SIMPLEX_TOL && identical && self_dice && rows > 0;
    Ok((
        format!(
            "desk schedule (300/200/100 epochs) on 48x48x16 toy volumes in {:.0}s; stitched probability sum max |1 - sum| {worst:.1e} (tol {SIMPLEX_TOL:e}); resume from epoch 550 bit-identical {identical}; self-evaluation dice 1.0 {self_dice}; {rows} metric rows; test accuracy {:.2}%",
            started.elapsed().as_secs_f64(),
            acc * 100.0
        ),
        pass,
    ))
}

fn random_architecture(rng: &mut ChaCha8Rng) -> Architecture {
    let mut layers: Vec<LayerSpec> = (0..rng.random_range(1..6))
        .map(|_| {
            if rng.random_bool(0.5) {
                LayerSpec::Pyramid { hidden: rng.random_range(1..7) }
            } else {
                LayerSpec::Fc { units: rng.random_range(1..9), activation: Activation::Tanh }
            }
        })
        .collect();
    layers.push(LayerSpec::Fc { units: rng.random_range(2..6), activation: Activation::Softmax });
    Architecture {
        input_channels: rng.random_range(1..6),
        filter: [3, 5, 7][rng.random_range(0..3)],
        layers,
    }
}

fn parameter_accounting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut agree = 0;
    for _ in 0..20 {
        let arch = random_architecture(&mut rng);
        let net = Network::zeros(&arch).unwrap();
        let enumerated: usize = net.tensors().iter().map(|t| t.len()).sum();
        if enumerated == arch.param_count() && enumerated == net.to_flat().len() {
            agree += 1;
        }
    }
    let mr = Architecture::reference(5, 4, 7);
    let per_layer = mr.layer_param_counts();
    outcome(
        "10",
        "parameter accounting",
        agree == 20,
        format!(
            "closed form equals enumeration for {agree}/20 random architectures; reference stack (5 channels, 4 classes, 7x7) = {per_layer:?} = {} (published figure 10751549, not asserted)",
            mr.param_count()
        ),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let started = Instant::now();
    let checks: Vec<Box<dyn Fn() -> Outcome>> = vec![
        Box::new(oracle_equivalence),
        Box::new(gradient_check),
        Box::new(full_context),
        Box::new(learning_rate),
        Box::new(optimizer_normalization),
        Box::new(toy_segmentation),
        Box::new(|| parallel_identity(dir.path())),
        Box::new(|| parallel_speedup(dir.path())),
        Box::new(metrics_equivalence),
        Box::new(|| pipeline(dir.path())),
        Box::new(parameter_accounting),
    ];
    let mut gated_failures = 0;
    let mut reported = 0;
    for check in checks {
        let o = check();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("{status} [{:>3}] {}: {}", o.id, o.name, o.detail);
        if !o.pass {
            match &o.reported {
                Some(why) => {
                    reported += 1;
                    println!("           reported, not gated: {why}");
                }
                None => gated_failures += 1,
            }
        }
    }
    println!(
        "acceptance: {gated_failures} gated failure(s), {reported} reported failure(s), {:.0}s",
        started.elapsed().as_secs_f64()
    );
    if gated_failures > 0 {
        std::process::exit(1);
    }
}
