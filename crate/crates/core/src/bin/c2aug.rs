use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use c2aug::bagdata::{decode_header, load_bags, save_bags, stratify_by_tumor_ratio, Bag, ClassPool, Stratum, MAGIC};
use c2aug::crossbag::{augment, AugmentConfig, AugmenterParams, Lineage, MaskStrategy};
use c2aug::harness::{evaluate, load_data, run_experiment, RunConfig};
use c2aug::milmodel::{decode_params, load_params, MilParams, CHECKPOINT_MAGIC};
use c2aug::{rng, Exec};

#[derive(Parser)]
#[command(name = "c2aug", version, about = "Cross-bag augmentation and contrastive MIL on feature bags")]
struct Cli {
    /// Run data-parallel stages on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic data described by a run config.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate (or hold out) and write report, losses, checkpoints, embeddings.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on an MBAG1 file without augmentation.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Include per-bag predictions.
        #[arg(long)]
        predictions: bool,
    },
    /// Write one augmented pseudo-bag per input bag plus a lineage sidecar.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint holding trained `aug.*` weights; fresh weights otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "row")]
        strategy: MaskStrategy,
        #[arg(long, default_value_t = 4)]
        views: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 4)]
        crmax: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Describe an MBAG1 or checkpoint file.
    Inspect { path: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match run(cli.cmd, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd, exec: Exec) -> anyhow::Result<()> {
    match cmd {
        Cmd::GenData { config, out } => gen_data(&config, &out),
        Cmd::Train { config, out, seed } => train(&config, &out, seed, exec),
        Cmd::Eval {
            checkpoint,
            data,
            predictions,
        } => eval(&checkpoint, &data, predictions, exec),
        Cmd::Augment {
            data,
            out,
            checkpoint,
            strategy,
            views,
            p,
            crmax,
            seed,
        } => {
            let cfg = AugmentConfig {
                strategy,
                views,
                p,
                cr_max: crmax,
                ..AugmentConfig::default()
            };
            augment_file(&data, &out, checkpoint.as_deref(), &cfg, seed)
        }
        Cmd::Inspect { path } => inspect(&path),
    }
}

fn gen_data(config: &Path, out: &Path) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config)?;
    let (bags, test) = load_data(&cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    save_bags(&bags, out.join("data.mbag"))?;
    println!("wrote {} bags to {}", bags.len(), out.join("data.mbag").display());
    if let Some(t) = test {
        save_bags(&t, out.join("test.mbag"))?;
        println!("wrote {} bags to {}", t.len(), out.join("test.mbag").display());
    }
    Ok(())
}

fn train(config: &Path, out: &Path, seed: Option<u64>, exec: Exec) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let exp = run_experiment(&cfg, Some(out), exec)?;
    let s = &exp.report.summary;
    println!("mode {} folds {}", exp.report.mode, exp.report.folds.len());
    println!("ACC {:.4} ± {:.4}", s.acc.mean, s.acc.std);
    match s.auc {
        Some(a) => println!("AUC {:.4} ± {:.4}", a.mean, a.std),
        None => println!("AUC n/a"),
    }
    println!("F1  {:.4} ± {:.4}", s.f1.mean, s.f1.std);
    for st in s.strata.iter().flatten() {
        match st.acc {
            Some(a) => println!("  {:>7} n={:<4} ACC {:.4}", st.stratum, st.count, a.mean),
            None => println!("  {:>7} n={:<4} ACC n/a", st.stratum, st.count),
        }
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn eval(checkpoint: &Path, data: &Path, predictions: bool, exec: Exec) -> anyhow::Result<()> {
    let params = MilParams::from_set(load_params(checkpoint)?.subset(&["mil.", "head."]))?;
    let bags = load_bags(data)?;
    let mut ev = evaluate(&params, &bags, exec)?;
    if !predictions {
        ev.predictions.clear();
    }
    println!("{}", serde_json::to_string_pretty(&ev)?);
    Ok(())
}

#[derive(Serialize)]
struct LineageRecord<'a> {
    source_id: u64,
    label: u8,
    lineage: &'a [Lineage],
}

fn augment_file(data: &Path, out: &Path, checkpoint: Option<&Path>, cfg: &AugmentConfig, seed: u64) -> anyhow::Result<()> {
    cfg.validate()?;
    let bags = load_bags(data)?;
    if bags.is_empty() {
        bail!("{} holds no bags", data.display());
    }
    let d = bags[0].dim();
    let params = match checkpoint {
        Some(p) => {
            let set = load_params(p)?.strip_prefix("aug.");
            if set.is_empty() {
                bail!("{} holds no aug.* parameters", p.display());
            }
            AugmenterParams::from_set(set)
        }
        None => AugmenterParams::init(d, &mut rng::stream(seed, rng::INIT)),
    };
    if params.dim() != d {
        bail!("augmenter width {} does not match data width {d}", params.dim());
    }
    let pool = ClassPool::build(&bags)?;
    let mut r = rng::stream(seed, rng::STUDENT_AUG);
    let mut pseudo = Vec::with_capacity(bags.len());
    for b in &bags {
        pseudo.push(augment(b, &pool, &params, cfg, &mut r)?);
    }
    let out_bags = pseudo
        .iter()
        .map(|p| Bag::new(p.source_id, p.label, p.instances.clone(), None))
        .collect::<Result<Vec<_>, _>>()?;
    save_bags(&out_bags, out)?;
    let records: Vec<LineageRecord<'_>> = pseudo
        .iter()
        .map(|p| LineageRecord {
            source_id: p.source_id,
            label: p.label,
            lineage: &p.lineage,
        })
        .collect();
    let sidecar = sidecar_path(out);
    fs::write(&sidecar, serde_json::to_string_pretty(&records)? + "\n")
        .with_context(|| format!("writing {}", sidecar.display()))?;
    println!("wrote {} pseudo-bags to {} and lineage to {}", out_bags.len(), out.display(), sidecar.display());
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".lineage.json");
    PathBuf::from(s)
}

fn inspect(path: &Path) -> anyhow::Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(&MAGIC[..4]) {
        let h = decode_header(&bytes)?;
        let bags = c2aug::bagdata::decode_bags(&bytes)?;
        println!("MBAG1: d = {}, {} bags", h.dim, h.count);
        let mut classes = std::collections::BTreeMap::new();
        for b in &bags {
            *classes.entry(b.label).or_insert(0usize) += 1;
        }
        for (c, n) in classes {
            println!("  label {c}: {n} bags");
        }
        if let (Some(lo), Some(hi)) = (bags.iter().map(Bag::len).min(), bags.iter().map(Bag::len).max()) {
            let total: usize = bags.iter().map(Bag::len).sum();
            println!("  instances: {total} total, bag size {lo}..={hi}");
        }
        if let Ok(strata) = stratify_by_tumor_ratio(&bags) {
            for s in Stratum::ALL {
                println!("  {:>7}: {} bags", s.name(), strata.get(s).len());
            }
        }
    } else if bytes.starts_with(&CHECKPOINT_MAGIC) {
        let set = decode_params(&bytes)?;
        println!("checkpoint: {} tensors, {} scalars", set.len(), set.num_scalars());
        for (name, t) in set.iter() {
            println!("  {name:<14} {:?}", t.shape());
        }
    } else {
        bail!("{} is neither an MBAG1 file nor a checkpoint", path.display());
    }
    Ok(())
}
