mod commands;
mod config;
mod output;
mod plot;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{ConfigError, Dither};
use output::{sha256_hex, version, write_atomic, Manifest, Outputs};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "qser", version = version(), about = "Symbol error rates of oversampled receivers with low-resolution ADCs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic SER over the SNR grid.
    SerSweep(Common),
    /// Distribution of the detection variable per amplitude.
    Pmf(Common),
    /// Decision thresholds of the threshold detectors.
    Thresholds(Common),
    /// Monte Carlo SER next to the analytic value.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// off, auto, or a complex noise variance.
        #[arg(long)]
        dither: Option<Dither>,
        /// Complex variance of the channel estimation error.
        #[arg(long = "ch-err")]
        ch_err: Option<f64>,
    },
    /// Iso-power ADC configurations.
    Power(Common),
    /// Grid search for the constellation with the smallest minimum SER.
    Optimize(Common),
    /// Per-amplitude error rates at the operating SNR.
    PerSymbol(Common),
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<ConfigError>()) {
        2
    } else if e
        .chain()
        .any(|c| c.downcast_ref::<qser::Error>().is_some_and(|q| q.is_budget()))
    {
        3
    } else {
        1
    }
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let (name, common, overrides) = match &cli.command {
        Command::SerSweep(c) => ("ser-sweep", c, json!({})),
        Command::Pmf(c) => ("pmf", c, json!({})),
        Command::Thresholds(c) => ("thresholds", c, json!({})),
        Command::Power(c) => ("power", c, json!({})),
        Command::Optimize(c) => ("optimize", c, json!({})),
        Command::PerSymbol(c) => ("per-symbol", c, json!({})),
        Command::Mc {
            common,
            trials,
            seed,
            dither,
            ch_err,
        } => (
            "mc",
            common,
            json!({ "trials": trials, "seed": seed, "dither": dither, "ch_err": ch_err }),
        ),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(ConfigError("--threads: must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("starting thread pool")?;
    }
    let (mut cfg, bytes) = config::load(&common.config)?;
    if let Command::Mc {
        trials,
        seed,
        dither,
        ch_err,
        ..
    } = &cli.command
    {
        let mc = cfg.mc.get_or_insert_with(Default::default);
        if let Some(t) = trials {
            mc.trials = *t;
        }
        if let Some(s) = seed {
            mc.seed = *s;
        }
        if let Some(d) = dither {
            mc.dither = *d;
        }
        if let Some(e) = ch_err {
            mc.channel_error_var = *e;
        }
    }
    let res = cfg.resolve()?;
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let mut run = commands::Run {
        cfg: &cfg,
        res,
        plot: common.plot,
        out: Outputs::new(dir)?,
    };
    let summary = match &cli.command {
        Command::SerSweep(_) => run.ser_sweep(),
        Command::Pmf(_) => run.pmf(),
        Command::Thresholds(_) => run.thresholds(),
        Command::Mc { .. } => run.mc(),
        Command::Power(_) => run.power(),
        Command::Optimize(_) => run.optimize(),
        Command::PerSymbol(_) => run.per_symbol(),
    }?;

    let mut hashed = bytes.clone();
    hashed.extend_from_slice(overrides.to_string().as_bytes());
    let manifest = Manifest {
        tool: "qser",
        version: version(),
        subcommand: name,
        config_path: common.config.display().to_string(),
        inputs_hash: sha256_hex(&hashed),
        config: serde_json::to_value(&cfg)?,
        overrides,
        seed: (name == "mc").then(|| cfg.mc.as_ref().map_or(0, |m| m.seed)),
        threads: rayon::current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: &run.out.files,
        summary,
    };
    let path = run.out.dir().join(format!("{name}.manifest.json"));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    for f in &run.out.files {
        println!("{}", run.out.dir().join(&f.file).display());
    }
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
