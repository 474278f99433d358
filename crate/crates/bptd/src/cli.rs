//! Command-line interface. [`run`] parses arguments and dispatches; `main`
//! only maps the result to an exit code.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use bptd_core::geweke::GewekeConfig;
use bptd_core::model::{ModelDims, DEFAULT_ACTIVE_FRACTION};
use bptd_core::{BptdState, ModelKind, Vocabulary};

use crate::bench::{benchmark, write_bench};
use crate::checkpoint::load_checkpoint;
use crate::compare::{write_comparison, Comparison};
use crate::config::{parse_alloc, parse_dims, MaskKind, RunConfig};
use crate::error::{AppError, Result};
use crate::export::{export_state, Labels};
use crate::fit::fit;
use crate::geweke::{run_geweke, write_report, Z_THRESHOLD};
use crate::ingest::{parse_events, IngestOptions, Schema, TimeBinning, YearMonth};
use crate::simulate::{simulate_from_checkpoint, simulate_prior};
use crate::tensor_io::{load_tensor, load_vocabulary, save_tensor, save_vocabulary};

#[derive(Debug, Parser)]
#[command(name = "bptd", version, about = "Poisson Tucker models of dyadic event counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn an event file into a count tensor and vocabularies.
    Ingest(IngestArgs),
    /// Draw a synthetic tensor from the prior or from a fitted state.
    Simulate(SimulateArgs),
    /// Run a sampler on a tensor.
    Fit(FitArgs),
    /// Held-out comparison of models and masks.
    Evaluate(EvaluateArgs),
    /// Cost and timing of joint against compositional allocation.
    BenchmarkAlloc(BenchArgs),
    /// Write a BPTD checkpoint as TSV tables.
    Export(ExportArgs),
    /// Joint-distribution test of a sampler.
    Geweke(GewekeArgs),
}

/// Flags shared by the commands that build a model.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// `key = value` file applied before the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// bptd, bptf, gpirm or dcgpirm.
    #[arg(long)]
    pub model: Option<String>,
    /// Latent sizes as C,K,R.
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// joint or compositional.
    #[arg(long)]
    pub alloc: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ModelArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("model", self.model.clone()),
            ("dims", self.dims.clone()),
            ("sweeps", self.sweeps.map(|v| v.to_string())),
            ("alloc", self.alloc.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| AppError::Usage(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Tab-separated events: sender, receiver, action code, date or step.
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Column positions as sender,receiver,action,time.
    #[arg(long, default_value = "0,1,2,3")]
    pub schema: String,
    /// Treat the time column as integer steps instead of dates.
    #[arg(long)]
    pub steps: bool,
    /// Month that becomes step 0; defaults to the earliest one.
    #[arg(long)]
    pub anchor: Option<YearMonth>,
    /// Fail on the first malformed line.
    #[arg(long)]
    pub strict: bool,
    /// Sort country labels so indices do not depend on input order.
    #[arg(long)]
    pub canonicalize: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output tensor file.
    #[arg(long)]
    pub out: PathBuf,
    /// Simulate from this BPTD checkpoint instead of the prior.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Tensor shape as countries,actions,steps (prior draws only).
    #[arg(long, default_value = "20,20,12")]
    pub shape: String,
    /// Latent sizes as C,K,R (prior draws only).
    #[arg(long, default_value = "4,3,2")]
    pub dims: String,
    #[arg(long, default_value_t = 1.0)]
    pub eps0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Tensor file written by `ingest` or `simulate`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output TSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated models.
    #[arg(long, default_value = "bptd,bptf,gpirm,dcgpirm")]
    pub models: String,
    /// Comma-separated masks such as top15,inverse-top15.
    #[arg(long)]
    pub mask: Option<String>,
    /// Number of seeds per model and mask, counted from --seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// 500 training and 200 test sweeps.
    #[arg(long)]
    pub reduced: bool,
    /// Runs executed at once.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Tensor to allocate; a prior draw when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Latent sizes as C,K,R separated by semicolons.
    #[arg(long, default_value = "10,5,3;20,6,3;50,10,5")]
    pub grid: String,
    #[arg(long, default_value_t = 3)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// A BPTD checkpoint.
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub countries: Option<PathBuf>,
    #[arg(long)]
    pub actions: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<PathBuf>,
    /// Fraction of the largest weight below which a component is inactive.
    #[arg(long, default_value_t = DEFAULT_ACTIVE_FRACTION)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct GewekeArgs {
    #[arg(long, default_value = "bptd")]
    pub model: String,
    /// Tensor shape as countries,actions,steps.
    #[arg(long, default_value = "4,3,3")]
    pub shape: String,
    /// Latent sizes as C,K,R.
    #[arg(long, default_value = "2,2,2")]
    pub dims: String,
    #[arg(long, default_value = "compositional")]
    pub alloc: String,
    #[arg(long, default_value_t = 10.0)]
    pub eps0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma0: f64,
    #[arg(long, default_value_t = 10_000)]
    pub forward: usize,
    #[arg(long, default_value_t = 10_000)]
    pub successive: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize)> {
    parse_dims(s).map_err(|_| AppError::Usage(format!("shape must be countries,actions,steps, got {s:?}")))
}

fn model_dims(shape: &str, dims: &str) -> Result<ModelDims> {
    let (v, a, t) = parse_shape(shape)?;
    let (c, k, r) = parse_dims(dims)?;
    Ok(ModelDims::new(v, a, t, c, k, r)?)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(AppError::io(format!("creating {}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| AppError::Usage(format!("missing {what}; pass --{what} or set it in the config")))
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let cols = a
        .schema
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| AppError::Usage(format!("bad schema {:?}", a.schema)))?;
    let [sender, receiver, action, time] = cols[..] else {
        return Err(AppError::Usage("schema needs four column positions".into()));
    };
    let opts = IngestOptions {
        schema: Schema {
            sender,
            receiver,
            action,
            time,
        },
        binning: if a.steps {
            TimeBinning::Steps
        } else {
            TimeBinning::Monthly { anchor: a.anchor }
        },
        strict: a.strict,
        canonicalize: a.canonicalize,
    };
    let f = File::open(&a.input).map_err(AppError::io(format!("opening {}", a.input.display())))?;
    let ing = parse_events(BufReader::new(f), &opts)?;
    let r = &ing.report;
    for (line, msg) in &r.problems {
        log::warn!("line {line}: {msg}");
    }
    std::fs::create_dir_all(&a.out).map_err(AppError::io(format!("creating {}", a.out.display())))?;
    let tensor = ing.tensor()?;
    save_tensor(&a.out.join("tensor.tsv"), &tensor)?;
    save_vocabulary(&a.out.join("countries.txt"), &ing.countries)?;
    save_vocabulary(&a.out.join("actions.txt"), &ing.actions)?;
    if let Some(anchor) = ing.anchor {
        let labels = (0..ing.steps).map(|t| {
            let m = anchor.year as i64 * 12 + anchor.month as i64 - 1 + t as i64;
            YearMonth {
                year: m.div_euclid(12) as i32,
                month: m.rem_euclid(12) as u32 + 1,
            }
            .to_string()
        });
        save_vocabulary(&a.out.join("steps.txt"), &Vocabulary::from_labels(labels)?)?;
    }
    let d = tensor.dims();
    println!(
        "{} lines, {} events, {} self-loops dropped, {} malformed; tensor {}x{}x{}x{} with {} tokens",
        r.lines, r.parsed, r.self_loops, r.malformed, d.countries, d.countries, d.actions, d.steps,
        tensor.total()
    );
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let tensor = match &a.from {
        Some(p) => simulate_from_checkpoint(&load_checkpoint(p)?, a.seed)?,
        None => {
            let dims = model_dims(&a.shape, &a.dims)?;
            simulate_prior(dims, bptd_core::Hyperparams::new(a.eps0, a.gamma0)?, a.seed)?.1
        }
    };
    save_tensor(&a.out, &tensor)?;
    println!("{} tokens in {} nonzero cells", tensor.total(), tensor.nnz());
    Ok(())
}

fn fit_cmd(a: &FitArgs) -> Result<()> {
    let mut cfg = a.model.resolve()?;
    if let Some(d) = &a.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    let data = load_tensor(required(&cfg.data, "data")?)?;
    let out = required(&cfg.out, "out")?.to_path_buf();
    let s = fit(&cfg, data, &out)?;
    println!(
        "{} sweeps of {}, final log-likelihood {:.4}, outputs in {}",
        s.sweeps,
        cfg.model,
        s.final_log_likelihood,
        out.display()
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut cfg = a.model.resolve()?;
    if let Some(d) = &a.data {
        cfg.data = Some(d.clone());
    }
    if let Some(m) = &a.mask {
        // validated below; the config keeps only the first
        cfg.set("mask", m.split(',').next().unwrap_or(""))?;
    }
    let full = load_tensor(required(&cfg.data, "data")?)?;
    let models = a
        .models
        .split(',')
        .map(|m| m.trim().parse::<ModelKind>().map_err(|e| AppError::Usage(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let masks = match &a.mask {
        Some(m) => m.split(',').map(|s| s.trim().parse::<MaskKind>()).collect::<Result<Vec<_>>>()?,
        None => vec![cfg.mask],
    };
    let protocol = if a.reduced {
        bptd_core::evaluation::Protocol::reduced()
    } else {
        cfg.protocol()?
    };
    let cmp = Comparison {
        models,
        masks,
        seeds: (cfg.seed..cfg.seed + a.seeds.max(1)).collect(),
        holdout: cfg.holdout,
        protocol,
        model_config: cfg.model_config()?,
        parallel: a.parallel,
    };
    let rows = cmp.run(&full)?;
    write_comparison(output(a.out.as_deref())?, &rows)
}

fn bench(a: &BenchArgs) -> Result<()> {
    let grid = a
        .grid
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(parse_dims)
        .collect::<Result<Vec<_>>>()?;
    let data = match &a.data {
        Some(p) => load_tensor(p)?,
        None => {
            let dims = ModelDims::new(30, 20, 12, 4, 3, 2)?;
            simulate_prior(dims, bptd_core::Hyperparams::new(1.0, 1.0)?, a.seed)?.1
        }
    };
    if data.is_empty() {
        return Err(AppError::Data("tensor has no events to allocate".into()));
    }
    let rows = benchmark(&data, &grid, a.sweeps, a.seed)?;
    write_bench(output(a.out.as_deref())?, &rows)
}

fn export(a: &ExportArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    if ck.model != ModelKind::Bptd {
        return Err(AppError::Usage(format!("export needs a bptd checkpoint, got {}", ck.model)));
    }
    let state = BptdState::from_arrays(&ck.arrays).map_err(|e| AppError::Data(format!("checkpoint: {e}")))?;
    let load = |p: &Option<PathBuf>| p.as_deref().map(load_vocabulary).transpose();
    let (countries, actions, steps) = (load(&a.countries)?, load(&a.actions)?, load(&a.steps)?);
    let d = state.dims();
    for (name, v, n) in [
        ("countries", &countries, d.countries),
        ("actions", &actions, d.actions),
        ("steps", &steps, d.steps),
    ] {
        if let Some(v) = v {
            if v.len() != n {
                return Err(AppError::Data(format!("{name} vocabulary has {} labels, state has {n}", v.len())));
            }
        }
    }
    let labels = Labels {
        countries: countries.as_ref(),
        actions: actions.as_ref(),
        steps: steps.as_ref(),
    };
    export_state(&state, labels, a.threshold, &a.out)?;
    println!("exported to {}", a.out.display());
    Ok(())
}

fn geweke(a: &GewekeArgs) -> Result<()> {
    let model: ModelKind = a.model.parse().map_err(|e: bptd_core::Error| AppError::Usage(e.to_string()))?;
    let dims = model_dims(&a.shape, &a.dims)?;
    let cfg = GewekeConfig {
        forward: a.forward,
        successive: a.successive,
        ..GewekeConfig::default()
    };
    let hyper = bptd_core::Hyperparams::new(a.eps0, a.gamma0)?;
    let report = run_geweke(model, dims, hyper, parse_alloc(&a.alloc)?, cfg, a.seed)?;
    write_report(std::io::stdout().lock(), &report)?;
    if !report.passes(Z_THRESHOLD) {
        return Err(AppError::Numerical(format!(
            "largest |z| is {:.2}, above {Z_THRESHOLD}",
            report.max_abs_z()
        )));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::BenchmarkAlloc(a) => bench(a),
        Command::Export(a) => export(a),
        Command::Geweke(a) => geweke(a),
    }
}
