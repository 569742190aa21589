use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use dnarc::baselines::LookaheadConfig;
use dnarc::config::{Precision, RunConfig, KEYS};
use dnarc::contam::ContaminationLevel;
use dnarc::dataset::{self, Cluster};
use dnarc::eval::{self, BenchReport, Divider, Lookahead, Neural, Reconstructor};
use dnarc::neural::{checkpoint, train, train_resampled, Resampler, RrccModel, Variant};
use dnarc::scalar::Scalar;
use dnarc::seqcore::{write_sequences, DnaSequence};

#[derive(Parser, Debug)]
#[command(name = "dnarc", version, about = "Simulate, reconstruct and benchmark noisy DNA read clusters")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `-s ids.p_sub=0.02`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (out.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic clusters file and manifest.
    Simulate,
    /// Cluster raw reads around references by nearest edit distance.
    Ingest {
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        reads: PathBuf,
    },
    /// Train a model and write a checkpoint and a per-epoch log.
    Train {
        /// Training clusters; without it the training half of a synthetic set is used.
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        variant: Option<Variant>,
        /// Checkpoint path (default `<out>/model.ckpt`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Reconstruct every cluster in a clusters file.
    Reconstruct {
        #[arg(long)]
        clusters: PathBuf,
        #[command(flatten)]
        algo: AlgoArgs,
    },
    /// Score reconstructors and write report, histogram and verdict CSVs.
    Bench {
        /// Scored clusters; without it the synthetic test half is drawn per level.
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Contamination levels in percent, comma separated (bench.levels).
        #[arg(long)]
        levels: Option<String>,
        #[command(flatten)]
        algo: AlgoArgs,
    },
    /// Train and score every model variant at every level.
    Ablate {
        #[arg(long)]
        levels: Option<String>,
        /// Comma list of variants (default: all).
        #[arg(long)]
        variants: Option<String>,
    },
    /// Print trainable parameter counts for the configured model.
    ParamsCount,
}

#[derive(Args, Debug)]
struct AlgoArgs {
    /// Comma list of algorithms (bench.algo).
    #[arg(long)]
    algo: Option<String>,
    /// BMA lookahead window (bench.window).
    #[arg(long)]
    window: Option<usize>,
    /// Trained model, required by the `neural` algorithm.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn keys_help() -> String {
    let w = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (file lines `key = value`, or `-s key=value`):\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<w$}  {d}\n"));
    }
    s.push_str("\nDNARC_SEED overrides `seed` from the config file; `-s` and flags override both.");
    s
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    if let Ok(seed) = std::env::var("DNARC_SEED") {
        cfg.set("seed", &seed).context("DNARC_SEED")?;
    }
    for a in &cli.set {
        cfg.set_assignment(a)?;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    match &cli.command {
        Command::Train { variant: Some(v), .. } => cfg.model.variant = *v,
        Command::Bench { levels, algo, .. } => {
            if let Some(l) = levels {
                cfg.set("bench.levels", l)?;
            }
            apply_algo(&mut cfg, algo)?;
        }
        Command::Reconstruct { algo, .. } => apply_algo(&mut cfg, algo)?,
        Command::Ablate { levels: Some(l), .. } => cfg.set("bench.levels", l)?,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_algo(cfg: &mut RunConfig, a: &AlgoArgs) -> Result<()> {
    if let Some(x) = &a.algo {
        cfg.set("bench.algo", x)?;
    }
    if let Some(w) = a.window {
        cfg.window = w;
    }
    Ok(())
}

fn out_file(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(cfg.out_dir.join(name))
}

fn write_config_echo(cfg: &RunConfig) -> Result<()> {
    let p = out_file(cfg, "run.cfg")?;
    std::fs::write(&p, cfg.to_text()).with_context(|| format!("writing {}", p.display()))
}

fn main() -> Result<()> {
    let matches = Cli::command().after_long_help(keys_help()).get_matches();
    let cli = Cli::from_arg_matches(&matches)?;
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = resolve(&cli)?;
    rayon::ThreadPoolBuilder::new().num_threads(cfg.threads.max(1)).build_global()?;
    match cfg.precision {
        Precision::F64 => run::<f64>(&cli.command, &cfg),
        Precision::F32 => run::<f32>(&cli.command, &cfg),
    }
}

fn run<T: Scalar>(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Simulate => simulate(cfg),
        Command::Ingest { references, reads } => ingest(cfg, references, reads),
        Command::Train { clusters, checkpoint, .. } => train_cmd::<T>(cfg, clusters.as_deref(), checkpoint.as_deref()),
        Command::Reconstruct { clusters, algo } => reconstruct::<T>(cfg, clusters, algo.checkpoint.as_deref()),
        Command::Bench { clusters, algo, .. } => bench::<T>(cfg, clusters.as_deref(), algo.checkpoint.as_deref()),
        Command::Ablate { variants, .. } => ablate::<T>(cfg, variants.as_deref()),
        Command::ParamsCount => params_count(cfg),
    }
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let clusters = dataset::generate_synthetic(&cfg.dataset)?;
    let path = out_file(cfg, "clusters.txt")?;
    dataset::write_clusters(&path, &clusters)?;
    dataset::write_manifest(cfg.out_dir.join("manifest.csv"), &clusters)?;
    write_config_echo(cfg)?;
    log::info!("wrote {} clusters to {}", clusters.len(), path.display());
    Ok(())
}

fn ingest(cfg: &RunConfig, references: &Path, reads: &Path) -> Result<()> {
    let got = dataset::ingest(references, reads)?;
    let path = out_file(cfg, "clusters.txt")?;
    dataset::write_clusters(&path, &got.clusters)?;
    dataset::write_manifest(cfg.out_dir.join("manifest.csv"), &got.clusters)?;
    log::info!("wrote {} clusters to {} ({} empty references dropped)", got.clusters.len(), path.display(), got.dropped);
    Ok(())
}

fn references_of(clusters: &[Cluster]) -> Vec<DnaSequence> {
    clusters.iter().filter_map(|c| c.reference.clone()).collect()
}

fn train_cmd<T: Scalar>(cfg: &RunConfig, clusters: Option<&Path>, ckpt: Option<&Path>) -> Result<()> {
    let (train_set, references) = match clusters {
        Some(p) => {
            let c = dataset::read_clusters(p)?;
            let refs = references_of(&c);
            (c, refs)
        }
        None => {
            let d = eval::level_data(&cfg.dataset, cfg.dataset.level, cfg.seed)?;
            (d.train, d.references)
        }
    };
    log::info!("training {} on {} clusters ({} parameters)", cfg.model.variant, train_set.len(), RrccModel::<T>::new(cfg.model.clone())?.num_params());
    let (model, report) = if cfg.resample {
        if train_set.iter().any(|c| c.reference.is_none()) {
            bail!("train.resample needs a reference for every training cluster");
        }
        let rs = Resampler::from_clusters(&train_set, references, cfg.dataset.clone());
        train_resampled::<T>(&rs, &cfg.model)?
    } else {
        train::<T>(&train_set, &cfg.model)?
    };
    let path = match ckpt {
        Some(p) => p.to_path_buf(),
        None => out_file(cfg, "model.ckpt")?,
    };
    checkpoint::save(&model, &path)?;
    report.write_csv(out_file(cfg, "train_log.csv")?)?;
    write_config_echo(cfg)?;
    if let Some(last) = report.epochs.last() {
        log::info!("final loss {:.6}, train success {:.4}; checkpoint {}", last.mean_loss, last.train_success_rate, path.display());
    }
    Ok(())
}

fn load_model<T: Scalar>(cfg: &RunConfig, ckpt: Option<&Path>) -> Result<RrccModel<T>> {
    let path = ckpt.context("the neural algorithm needs --checkpoint")?;
    let model = checkpoint::load::<T>(path, None)?;
    let (m, r) = (model.config(), &cfg.model);
    if m.len != r.len || m.d_model != r.d_model {
        bail!(
            "checkpoint {} was trained with len={} d_model={}, run config has len={} d_model={}; refusing to run",
            path.display(),
            m.len,
            m.d_model,
            r.len,
            r.d_model
        );
    }
    Ok(model)
}

fn with_algos<T: Scalar, R>(
    cfg: &RunConfig,
    ckpt: Option<&Path>,
    f: impl FnOnce(&[&dyn Reconstructor]) -> Result<R>,
) -> Result<R> {
    let model = if cfg.algos.iter().any(|a| a == "neural") { Some(load_model::<T>(cfg, ckpt)?) } else { None };
    let lookahead = Lookahead(LookaheadConfig { window: cfg.window });
    let neural = model.as_ref().map(Neural::new);
    let algos: Vec<&dyn Reconstructor> = cfg
        .algos
        .iter()
        .map(|a| match a.as_str() {
            "bma-lookahead" => &lookahead as &dyn Reconstructor,
            "divider-bma" => &Divider,
            _ => neural.as_ref().expect("model loaded for neural") as &dyn Reconstructor,
        })
        .collect();
    f(&algos)
}

fn reconstruct<T: Scalar>(cfg: &RunConfig, clusters: &Path, ckpt: Option<&Path>) -> Result<()> {
    let clusters = dataset::read_clusters(clusters)?;
    with_algos::<T, _>(cfg, ckpt, |algos| {
        for algo in algos {
            let preds = algo.reconstruct_all(&clusters, cfg.model.len)?;
            let path = out_file(cfg, &format!("predictions.{}.txt", algo.name()))?;
            write_sequences(&path, &preds)?;
            log::info!("{}: {} predictions to {}", algo.name(), preds.len(), path.display());
        }
        Ok(())
    })
}

fn bench<T: Scalar>(cfg: &RunConfig, clusters: Option<&Path>, ckpt: Option<&Path>) -> Result<()> {
    let sets: Vec<(f64, Vec<Cluster>)> = match clusters {
        Some(p) => vec![(cfg.dataset.level.fraction(), dataset::read_clusters(p)?)],
        None => cfg
            .levels
            .iter()
            .map(|&l| Ok((l, eval::level_data(&cfg.dataset, ContaminationLevel::new(l)?, cfg.seed)?.test)))
            .collect::<Result<_>>()?,
    };
    let mut report = BenchReport { config: cfg.pairs(), ..Default::default() };
    with_algos::<T, _>(cfg, ckpt, |algos| {
        for (level, set) in &sets {
            let r = eval::compare_baselines(set, algos, cfg.model.len, *level, &cfg.k_values)?;
            for row in &r.rows {
                log::info!(
                    "{} level {:.2} k>={}: success {}",
                    row.algo,
                    row.level,
                    row.k_min,
                    row.success_rate.map_or("NA".into(), |s| format!("{s:.4}"))
                );
            }
            report.rows.extend(r.rows);
            report.histogram.extend(r.histogram);
            report.verdicts.extend(r.verdicts);
        }
        Ok(())
    })?;
    report.write_to(&cfg.out_dir)?;
    Ok(())
}

fn ablate<T: Scalar>(cfg: &RunConfig, variants: Option<&str>) -> Result<()> {
    let variants: Vec<Variant> = match variants {
        Some(v) => v.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?,
        None => Variant::ALL.to_vec(),
    };
    let data = cfg
        .levels
        .iter()
        .map(|&l| Ok(eval::level_data(&cfg.dataset, ContaminationLevel::new(l)?, cfg.seed)?))
        .collect::<Result<Vec<_>>>()?;
    let report = eval::ablate::<T>(&data, &cfg.dataset, &cfg.model, &variants, cfg.resample)?;
    let mut body: String = cfg.pairs().iter().map(|(k, v)| format!("# {k} = {v}\n")).collect();
    body.push_str(&report.to_csv());
    let path = out_file(cfg, "ablation.csv")?;
    std::fs::write(&path, &body).with_context(|| format!("writing {}", path.display()))?;
    print!("{}", report.to_csv());
    Ok(())
}

fn params_count(cfg: &RunConfig) -> Result<()> {
    let model = RrccModel::<f64>::new(cfg.model.clone())?;
    let p = model.params();
    for id in p.ids() {
        println!("{:<32} {:>10}", p.name(id), p.value(id).len());
    }
    println!("{:<32} {:>10}", "total", model.num_params());
    Ok(())
}
