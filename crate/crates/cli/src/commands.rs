use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rrae::data::{read_dataset, write_dataset, Dataset};
use rrae::eval::{
    entropy, evaluate, interpolation_set, rank_of_spectrum, spectrum, write_spectrum_csv, write_spectrum_svg, EvalReport,
};
use rrae::io::{read_matrix_csv, write_atomic, write_matrix_csv, write_records_csv};
use rrae::models::{load_checkpoint, save_checkpoint, Checkpoint, LatentFactorization};
use rrae::pipeline::fit_best_of;
use rrae::train::TrainStatus;

use crate::config::ExperimentConfig;
use crate::manifest::{host, write_manifest, Outputs, RunManifest, Seeds};
use crate::{Cli, Command};

pub const EXIT_DIVERGED: u8 = 2;

pub const DATASET_DIR: &str = "dataset";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const RESTARTS: &str = "restarts.csv";
pub const TIMING: &str = "timing.json";
pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const SPECTRUM_CSV: &str = "spectrum.csv";
pub const SPECTRUM_SVG: &str = "spectrum.svg";
pub const INTERP_CSV: &str = "interp_set.csv";
pub const REPORT_CSV: &str = "report.csv";

/// Wall-clock measurements of a training run, kept apart from the
/// deterministic outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub ms_per_100_batches: Option<f64>,
    pub batches: u64,
    pub train_wall_s: f64,
}

struct Ctx {
    cfg: Option<ExperimentConfig>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    dry_run: bool,
    threads: usize,
    started: Instant,
}

impl Ctx {
    fn cfg(&self) -> Result<&ExperimentConfig> {
        self.cfg.as_ref().context("this command needs --config")
    }

    fn out(&self) -> Result<&Path> {
        self.out.as_deref().context("no run directory: pass --out or set `out` in the config")
    }

    fn seed(&self) -> u64 {
        self.seed.or(self.cfg.as_ref().map(|c| c.seed)).unwrap_or(0)
    }

    fn data_dir(&self, data: Option<PathBuf>) -> Result<PathBuf> {
        Ok(data.unwrap_or(self.out()?.join(DATASET_DIR)))
    }

    fn finish(&self, command: &str, outputs: &Outputs, seeds: Seeds) -> Result<()> {
        let dir = self.out()?;
        let manifest = RunManifest {
            command: command.to_string(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.cfg.as_ref().map(serde_json::to_value).transpose()?,
            seeds,
            threads: self.threads,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            host: host(),
            outputs: outputs.inventory(dir)?,
        };
        let path = write_manifest(dir, &manifest)?;
        log::info!("manifest written to {}", path.display());
        Ok(())
    }

    fn seeds(&self, train: Vec<u64>, interpolation: Option<u64>) -> Seeds {
        let data = self.cfg.as_ref().map(|c| c.data_config()).map_or_else(Vec::new, |d| {
            d.seeds.unwrap_or_else(|| rrae::data::default_seeds(d.family))
        });
        Seeds { train, data, interpolation }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
    if cli.threads == 0 {
        bail!("--threads must be at least 1");
    }
    if cli.threads > 1 {
        log::warn!("computation is single-threaded; --threads {} is recorded only", cli.threads);
    }
    let out = cli.out.clone().or_else(|| cfg.as_ref().and_then(|c| c.out.clone()));
    let ctx = Ctx { cfg, out, seed: cli.seed, dry_run: cli.dry_run, threads: cli.threads, started: Instant::now() };
    match cli.command {
        Command::Generate => generate(&ctx),
        Command::Train { data } => train(&ctx, data),
        Command::Eval { data } => eval(&ctx, data),
        Command::Spectrum { data } => spectrum_cmd(&ctx, data),
        Command::InterpSet { pairs, steps } => interp_set(&ctx, pairs, steps),
        Command::Report { runs } => report(&ctx, &runs),
        Command::Entropy { probs } => entropy_cmd(&probs),
    }
}

fn generate(ctx: &Ctx) -> Result<ExitCode> {
    let cfg = ctx.cfg()?;
    let dir = ctx.out()?;
    let ds = cfg.build_dataset()?;
    let target = dir.join(DATASET_DIR);
    if ctx.dry_run {
        println!(
            "dry run: would write {} training and {} test columns of length {} to {}",
            ds.train.cols(),
            ds.test.cols(),
            ds.time_points(),
            target.display()
        );
        return Ok(ExitCode::SUCCESS);
    }
    write_dataset(&ds, &target)?;
    if read_dataset(&target)? != ds {
        bail!("dataset in {} does not read back identically", target.display());
    }
    let mut outputs = Outputs::default();
    for f in ["train.csv", "test.csv", "dataset.json"] {
        outputs.add(Path::new(DATASET_DIR).join(f));
    }
    ctx.finish("generate", &outputs, ctx.seeds(Vec::new(), None))?;
    println!(
        "{}: {} training and {} test columns written to {}",
        ds.family,
        ds.train.cols(),
        ds.test.cols(),
        target.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.join("dataset.json").exists() {
        bail!("no dataset in {}; run `rrae generate` first", dir.display());
    }
    read_dataset(dir).with_context(|| format!("reading dataset {}", dir.display()))
}

fn train(ctx: &Ctx, data: Option<PathBuf>) -> Result<ExitCode> {
    let cfg = ctx.cfg()?;
    let dir = ctx.out()?.to_path_buf();
    let ds = load_dataset(&ctx.data_dir(data)?)?;
    let spec = cfg.model_spec(&ds)?;
    let seeds = cfg.restart_seeds(ctx.seed());
    let tcfg = cfg.train_config(seeds[0]);
    tcfg.validate()?;
    if ctx.dry_run {
        println!(
            "dry run: would train {} (L = {}) on {} columns with seeds {seeds:?}, writing to {}",
            spec.variant,
            spec.latent_dim,
            ds.train.cols(),
            dir.display()
        );
        return Ok(ExitCode::SUCCESS);
    }

    let t0 = Instant::now();
    let (fitted, summaries) = fit_best_of(&ds, &spec, &tcfg, &seeds)?;
    let train_wall_s = t0.elapsed().as_secs_f64();
    let batches = fitted.log.records.len() as u64;

    let ck = Checkpoint::new(fitted.state.clone(), batches, fitted.factorization.clone());
    let ck_path = dir.join(CHECKPOINT);
    save_checkpoint(&ck, &ck_path)?;
    if load_checkpoint(&ck_path)? != ck {
        bail!("checkpoint {} does not read back identically", ck_path.display());
    }
    let rows: Vec<Vec<String>> = fitted
        .log
        .records
        .iter()
        .map(|r| vec![r.batch.to_string(), r.stage.to_string(), format!("{:?}", r.lr), format!("{:?}", r.loss)])
        .collect();
    write_records_csv(&dir.join(TRAIN_LOG), &["batch", "stage", "lr", "loss"], &rows)?;
    let timing = Timing { ms_per_100_batches: fitted.log.ms_per_100_batches(), batches, train_wall_s };
    write_atomic(&dir.join(TIMING), &serde_json::to_vec_pretty(&timing)?)?;

    let mut outputs = Outputs::default();
    outputs.add(CHECKPOINT);
    outputs.add(TRAIN_LOG);
    outputs.add_timing(TIMING);
    if seeds.len() > 1 {
        let rows: Vec<Vec<String>> = summaries
            .iter()
            .map(|s| {
                vec![s.seed.to_string(), format!("{:?}", s.status), s.train_recon.map_or(String::new(), |v| format!("{v:?}"))]
            })
            .collect();
        write_records_csv(&dir.join(RESTARTS), &["seed", "status", "train_recon"], &rows)?;
        outputs.add(RESTARTS);
    }
    ctx.finish("train", &outputs, ctx.seeds(seeds, None))?;

    if let TrainStatus::Diverged { batch } = fitted.log.status {
        eprintln!(
            "error: training diverged at batch {batch}; the last finite parameters are in {} and the loss history in {}",
            ck_path.display(),
            dir.join(TRAIN_LOG).display()
        );
        return Ok(ExitCode::from(EXIT_DIVERGED));
    }
    let fact = fitted.factorization.as_ref().expect("converged run");
    let rep = evaluate(&fitted.state, fact, &ds, cfg.eval.metric)?;
    println!("variant: {}", spec.variant);
    println!("batches: {batches} ({:?})", fitted.log.status);
    println!("train error: {:.6}%", rep.train_error);
    if let Some(t) = rep.test_error {
        println!("test error: {t:.6}%");
    }
    match timing.ms_per_100_batches {
        Some(ms) => println!("time per 100 batches: {:.3} s", ms / 1e3),
        None => println!("time per 100 batches: n/a (fewer than 100 timed batches)"),
    }
    Ok(ExitCode::SUCCESS)
}

fn load_trained(ctx: &Ctx, data: Option<PathBuf>) -> Result<(Checkpoint, LatentFactorization, Dataset)> {
    let dir = ctx.out()?;
    let ck = load_checkpoint(&dir.join(CHECKPOINT)).with_context(|| format!("refusing {}", dir.join(CHECKPOINT).display()))?;
    let ds = load_dataset(&ctx.data_dir(data)?)?;
    if ck.state.spec.input_dim != ds.time_points() {
        bail!("checkpoint expects columns of length {}, dataset has {}", ck.state.spec.input_dim, ds.time_points());
    }
    let fact = ck.factorization.clone().context("checkpoint has no latent factorization (training diverged)")?;
    Ok((ck, fact, ds))
}

fn metric(ctx: &Ctx) -> rrae::eval::ErrorMetric {
    ctx.cfg.as_ref().map(|c| c.eval.metric).unwrap_or_default()
}

fn eval(ctx: &Ctx, data: Option<PathBuf>) -> Result<ExitCode> {
    let (ck, fact, ds) = load_trained(ctx, data)?;
    let rep = evaluate(&ck.state, &fact, &ds, metric(ctx))?;
    if ctx.dry_run {
        println!("dry run: checkpoint and dataset are compatible; nothing written");
        return Ok(ExitCode::SUCCESS);
    }
    let dir = ctx.out()?;
    rep.write_csv(&dir.join(EVAL_CSV))?;
    write_atomic(&dir.join(EVAL_JSON), &serde_json::to_vec_pretty(&rep)?)?;
    let mut outputs = Outputs::default();
    outputs.add(EVAL_CSV);
    outputs.add(EVAL_JSON);
    ctx.finish("eval", &outputs, ctx.seeds(Vec::new(), None))?;
    println!("variant: {}", ck.state.variant());
    println!("train error: {:.6}%", rep.train_error);
    if let Some(t) = rep.test_error {
        println!("test error: {t:.6}%");
    }
    println!("latent rank: {}", rep.rank);
    println!("factorization residual: {:.3e}", rep.factorization_residual);
    Ok(ExitCode::SUCCESS)
}

fn spectrum_cmd(ctx: &Ctx, data: Option<PathBuf>) -> Result<ExitCode> {
    let (ck, fact, ds) = load_trained(ctx, data)?;
    let tau = ctx.cfg.as_ref().map_or(rrae::eval::RANK_TOLERANCE, |c| c.eval.rank_tolerance);
    let latent = spectrum(&fact.u.matmul(&fact.a)?)?;
    let encoded = spectrum(&ck.state.encode_matrix(&ds.train_normalized()?)?)?;
    let rank = rank_of_spectrum(&latent, tau);
    if ctx.dry_run {
        println!("dry run: latent rank {rank}; nothing written");
        return Ok(ExitCode::SUCCESS);
    }
    let dir = ctx.out()?;
    write_spectrum_csv(&dir.join(SPECTRUM_CSV), &latent)?;
    write_spectrum_svg(&dir.join(SPECTRUM_SVG), &[("latent", &latent), ("encoder output", &encoded)])?;
    let mut outputs = Outputs::default();
    outputs.add(SPECTRUM_CSV);
    outputs.add(SPECTRUM_SVG);
    ctx.finish("spectrum", &outputs, ctx.seeds(Vec::new(), None))?;
    println!("latent rank: {rank} (tolerance {tau:e})");
    for (i, v) in latent.iter().take(8).enumerate() {
        println!("  sigma_{}/sigma_1 = {v:.3e}", i + 1);
    }
    Ok(ExitCode::SUCCESS)
}

fn interp_set(ctx: &Ctx, pairs: Option<usize>, steps: Option<usize>) -> Result<ExitCode> {
    let dir = ctx.out()?;
    let ck = load_checkpoint(&dir.join(CHECKPOINT)).with_context(|| format!("refusing {}", dir.join(CHECKPOINT).display()))?;
    let fact = ck.factorization.clone().context("checkpoint has no latent factorization (training diverged)")?;
    let defaults = ctx.cfg.as_ref().map(|c| c.eval.clone()).unwrap_or_default();
    let pairs = pairs.unwrap_or(defaults.pairs);
    let steps = steps.unwrap_or(defaults.steps);
    let seed = ctx.seed.unwrap_or(defaults.interp_seed);
    let set = interpolation_set(&ck.state, &fact, pairs, steps, seed)?;
    if ctx.dry_run {
        println!("dry run: would write {} generated columns; nothing written", set.columns.cols());
        return Ok(ExitCode::SUCCESS);
    }
    let header: Vec<String> = set
        .pairs
        .iter()
        .flat_map(|&(a, b)| set.weights.iter().map(move |w| format!("{a}-{b}@{w:?}")))
        .collect();
    write_matrix_csv(&dir.join(INTERP_CSV), &header, &set.columns)?;
    let mut outputs = Outputs::default();
    outputs.add(INTERP_CSV);
    ctx.finish("interp-set", &outputs, ctx.seeds(Vec::new(), Some(seed)))?;
    println!("{} generated columns ({pairs} pairs x {steps} steps) written to {}", set.columns.cols(), dir.join(INTERP_CSV).display());
    Ok(ExitCode::SUCCESS)
}

fn report(ctx: &Ctx, runs: &[PathBuf]) -> Result<ExitCode> {
    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        let ck = load_checkpoint(&run.join(CHECKPOINT)).with_context(|| format!("refusing {}", run.join(CHECKPOINT).display()))?;
        let rep: EvalReport = serde_json::from_slice(
            &std::fs::read(run.join(EVAL_JSON)).with_context(|| format!("{} has no {EVAL_JSON}; run `rrae eval`", run.display()))?,
        )?;
        let timing: Option<Timing> = std::fs::read(run.join(TIMING)).ok().map(|b| serde_json::from_slice(&b)).transpose()?;
        let family = std::fs::read(run.join(DATASET_DIR).join("dataset.json"))
            .ok()
            .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
            .and_then(|v| v.get("family").and_then(|f| f.as_str()).map(str::to_string))
            .unwrap_or_default();
        rows.push(vec![
            run.display().to_string(),
            family,
            ck.state.variant().to_string(),
            ck.state.spec.latent_dim.to_string(),
            format!("{:?}", rep.metric).to_lowercase(),
            format!("{:.6}", rep.train_error),
            rep.test_error.map_or(String::new(), |t| format!("{t:.6}")),
            rep.rank.to_string(),
            timing.and_then(|t| t.ms_per_100_batches).map_or(String::new(), |ms| format!("{:.4}", ms / 1e3)),
        ]);
    }
    let header = ["run", "family", "variant", "latent_dim", "metric", "train_error_pct", "test_error_pct", "rank", "s_per_100_batches"];
    if ctx.dry_run {
        println!("dry run: {} runs readable; nothing written", rows.len());
        return Ok(ExitCode::SUCCESS);
    }
    let dir = ctx.out()?;
    write_records_csv(&dir.join(REPORT_CSV), &header, &rows)?;
    let mut outputs = Outputs::default();
    outputs.add(REPORT_CSV);
    ctx.finish("report", &outputs, ctx.seeds(Vec::new(), None))?;
    println!("{}", header.join("\t"));
    for r in &rows {
        println!("{}", r.join("\t"));
    }
    Ok(ExitCode::SUCCESS)
}

fn entropy_cmd(probs: &Path) -> Result<ExitCode> {
    let (_, p) = read_matrix_csv(probs).with_context(|| format!("reading {}", probs.display()))?;
    let h = entropy(&p)?;
    println!("entropy: {h:.12} over {} rows and {} classes", p.rows(), p.cols());
    Ok(ExitCode::SUCCESS)
}
