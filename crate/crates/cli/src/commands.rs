use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pyramid_core::checkpoint;
use pyramid_core::datapipe::{assemble_channels, predict_tiled};
use pyramid_core::format::{read_labels, read_vol, write_labels, write_vol};
use pyramid_core::metrics::{avd, dice, hausdorff95, pixel_error, rand_error, Connectivity, SegmentationPair};
use pyramid_core::rng::{stream, Stream};
use pyramid_core::synth::hollow_ellipsoid;
use pyramid_core::train::{train_loop, Control, EpochRecord, TrainState, TrainingSet};
use pyramid_core::{Error, Network, Volume};
use rand::Rng;

use crate::config::{format_layer, RunConfig};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_RUNTIME: u8 = 4;

/// Synthetic test cases get indices far from the training ones.
const TEST_INDEX_BASE: u64 = 1_000_000;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.code {
            EXIT_CONFIG => "config",
            EXIT_DATA => "data",
            _ => "runtime",
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } => EXIT_CONFIG,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let out = cfg.run.out.clone();
    fs::create_dir_all(&out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    fs::write(out.join("config.resolved.toml"), cfg.to_toml())
        .map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

/// Output writes that fail are runtime failures, not bad input.
fn written(r: pyramid_core::Result<()>) -> CmdResult {
    r.map_err(|e| Failure::runtime(e.to_string()))
}

fn require_cases<'a>(cases: &'a [String], field: &str) -> Result<&'a [String], Failure> {
    if cases.is_empty() {
        return Err(Error::config(field, "no cases listed").into());
    }
    Ok(cases)
}

pub fn synth(cfg: &RunConfig) -> CmdResult {
    let size = cfg.synth_size()?;
    if cfg.dataset.modalities.len() != 1 || cfg.dataset.num_classes != 2 {
        return Err(Error::config("dataset", "the toy dataset has one modality and two classes").into());
    }
    let out = out_dir(cfg)?;
    let (raw, labels) = (out.join("raw"), out.join("labels"));
    for d in [&raw, &labels] {
        fs::create_dir_all(d).map_err(|e| Failure::runtime(format!("{}: {e}", d.display())))?;
    }
    let modality = &cfg.dataset.modalities[0];
    let cases = (0..cfg.synth.train_count)
        .map(|i| (format!("train_{i:03}"), i as u64))
        .chain((0..cfg.synth.test_count).map(|i| (format!("test_{i:03}"), TEST_INDEX_BASE + i as u64)));
    for (name, index) in cases {
        let (v, l) = hollow_ellipsoid(size, cfg.run.seed, index)?;
        written(write_vol(raw.join(format!("{name}_{modality}.pvol")), &v))?;
        written(write_labels(labels.join(format!("{name}.pvol")), &l))?;
        println!("{name}");
    }
    Ok(())
}

pub fn preprocess(cfg: &RunConfig) -> CmdResult {
    let dataset = cfg.dataset()?;
    let cases: Vec<&String> = cfg.paths.train_cases.iter().chain(&cfg.paths.test_cases).collect();
    if cases.is_empty() {
        return Err(Error::config("paths.train_cases", "no cases listed").into());
    }
    let out = out_dir(cfg)?;
    for case in cases {
        let raw = dataset
            .modalities
            .iter()
            .map(|m| read_vol(cfg.paths.raw(case, &m.name)))
            .collect::<pyramid_core::Result<Vec<_>>>()?;
        let x = assemble_channels(&raw, &dataset)?;
        written(write_vol(out.join(format!("{case}.pvol")), &x))?;
        println!("{case} {}", x.dims());
    }
    Ok(())
}

fn loss_log(path: &Path, resume_epoch: Option<u64>) -> Result<String, Failure> {
    let mut text = format!("{}\n", EpochRecord::CSV_HEADER);
    if let Some(epoch) = resume_epoch {
        // keep rows for epochs the checkpoint already contains
        if let Ok(old) = fs::read_to_string(path) {
            for line in old.lines().skip(1) {
                let e = line.split(',').next().and_then(|s| s.parse::<u64>().ok());
                if e.is_some_and(|e| e < epoch) {
                    text.push_str(line);
                    text.push('\n');
                }
            }
        }
    }
    Ok(text)
}

pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> CmdResult {
    let arch = cfg.architecture()?;
    let schedule = cfg.schedule()?;
    let dataset = cfg.dataset()?;
    let cases = require_cases(&cfg.paths.train_cases, "paths.train_cases")?;
    let volumes = cases
        .iter()
        .map(|c| Ok((read_vol(cfg.paths.data(c))?, read_labels(cfg.paths.labels(c))?)))
        .collect::<pyramid_core::Result<Vec<_>>>()?;
    for (c, (_, l)) in cases.iter().zip(&volumes) {
        if l.num_classes() != dataset.num_classes {
            return Err(Error::config(
                "dataset.num_classes",
                format!("labels of {c} have {} classes", l.num_classes()),
            )
            .into());
        }
    }
    let data = TrainingSet {
        volumes,
        augmentation: dataset.augmentation,
    };
    let mut state = match resume {
        Some(p) => {
            let st = checkpoint::load(p)?;
            if st.net.architecture() != &arch {
                return Err(Error::config("--resume", "checkpoint architecture differs from the configuration").into());
            }
            st
        }
        None => TrainState::new(Network::init_uniform(&arch, cfg.run.seed)?, cfg.run.seed),
    };
    let out = out_dir(cfg)?;
    let log_path = out.join("loss.csv");
    let mut log = loss_log(&log_path, resume.map(|_| state.epoch))?;
    let every = cfg.train.checkpoint_every;
    let mut failure = None;
    train_loop(&mut state, &data, &schedule, |r, st| {
        if !r.loss.is_finite() {
            failure = Some(Failure::runtime(format!("non-finite loss at epoch {}", r.epoch)));
            return Ok(Control::Stop);
        }
        let _ = writeln!(log, "{}", r.csv_row());
        if st.epoch % every == 0 {
            checkpoint::save(out.join(format!("checkpoint-{:06}.pnet", st.epoch)), st)?;
            if let Err(e) = fs::write(&log_path, &log) {
                failure = Some(Failure::runtime(format!("{}: {e}", log_path.display())));
                return Ok(Control::Stop);
            }
        }
        Ok(Control::Continue)
    })
    .map_err(|e| match e {
        Error::Io { .. } => Failure::runtime(e.to_string()),
        other => other.into(),
    })?;
    write_text(&log_path, &log)?;
    if let Some(f) = failure {
        return Err(f);
    }
    written(checkpoint::save(out.join("model.pnet"), &state))?;
    println!("trained {} epochs", state.epoch);
    Ok(())
}

pub fn predict(cfg: &RunConfig) -> CmdResult {
    let dataset = cfg.dataset()?;
    let tile = cfg.predict_tile()?;
    let net = checkpoint::load(&cfg.paths.model)?.net;
    let cases = require_cases(&cfg.paths.test_cases, "paths.test_cases")?;
    let out = out_dir(cfg)?;
    for case in cases {
        let x = read_vol(cfg.paths.data(case))?;
        let probs = predict_tiled(&net, &x, tile, dataset.overlap, dataset.sigma_frac)?;
        if !probs.is_finite() {
            return Err(Failure::runtime(format!("non-finite prediction for {case}")));
        }
        written(write_vol(out.join(format!("{case}.probs.pvol")), &probs))?;
        written(write_labels(out.join(format!("{case}.labels.pvol")), &probs.argmax()))?;
        println!("{case}");
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn evaluate(cfg: &RunConfig) -> CmdResult {
    let dataset = cfg.dataset()?;
    let cases = require_cases(&cfg.paths.test_cases, "paths.test_cases")?;
    let mut csv = String::from("case,class,dice,hausdorff95,avd,pixel_error,rand_error\n");
    for case in cases {
        let pred = read_labels(cfg.paths.prediction(case))?;
        let reference = read_labels(cfg.paths.labels(case))?;
        let pair = SegmentationPair::new(&pred, &reference, cfg.dataset.spacing)?;
        for class in 0..dataset.num_classes as u8 {
            if pred.count(class) == 0 && reference.count(class) == 0 {
                continue;
            }
            let _ = writeln!(
                csv,
                "{case},{class},{},{},{},{},{}",
                dice(&pair, class),
                opt(hausdorff95(&pair, class)),
                opt(avd(&pair, class)),
                pixel_error(&pair, class),
                rand_error(&pair, class, Connectivity::Face3d),
            );
        }
    }
    let out = out_dir(cfg)?;
    write_text(&out.join("metrics.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn bench(cfg: &RunConfig) -> CmdResult {
    let size = cfg.bench_size()?;
    let mut arch = cfg.layer_stack()?;
    arch.input_channels = cfg.bench.channels;
    let net = Network::init_uniform(&arch, cfg.run.seed)?;
    let mut rng = stream(cfg.run.seed, Stream::Synthetic, u64::MAX);
    let dims = pyramid_core::Dims::new(size[0], size[1], size[2], cfg.bench.channels);
    let x = Volume::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0))?;
    let out = out_dir(cfg)?;
    let mut csv = String::from("threads,wall_ms,speedup\n");
    print!("{csv}");
    let mut baseline: Option<(f64, Volume)> = None;
    for &t in &cfg.bench.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
        let mut best = f64::INFINITY;
        let mut y = None;
        for _ in 0..cfg.bench.repeats {
            let started = Instant::now();
            let out = pool.install(|| net.predict(&x))?;
            best = best.min(started.elapsed().as_secs_f64() * 1e3);
            y = Some(out);
        }
        let y = y.expect("at least one repeat");
        let base_ms = match &baseline {
            Some((ms, reference)) => {
                if reference.data().iter().zip(y.data()).any(|(a, b)| a.to_bits() != b.to_bits()) {
                    return Err(Failure::runtime(format!("output at {t} threads differs from the first run")));
                }
                *ms
            }
            None => {
                baseline = Some((best, y));
                best
            }
        };
        let row = format!("{t},{best:.3},{:.3}\n", base_ms / best);
        print!("{row}");
        csv.push_str(&row);
    }
    write_text(&out.join("bench.csv"), &csv)
}

pub fn param_count(cfg: &RunConfig) -> CmdResult {
    let arch = cfg.layer_stack()?;
    let counts = arch.layer_param_counts();
    for (i, (l, n)) in arch.layers.iter().zip(&counts).enumerate() {
        println!("layer {i} {:<16} {n}", format_layer(l));
    }
    println!("total {}", arch.param_count());
    Ok(())
}
