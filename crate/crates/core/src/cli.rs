use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use iccss::airmodel::ScenarioConfig;
use iccss::evaluate::{
    export_constellation, run_ablation_no_aircomp, run_roc, run_sweep, Method, Pipeline, SweepAxis,
};
use iccss::fusion::hdf_theoretical_pd;
use iccss::neuralsc::{load_checkpoint, save_checkpoint, train_with_progress, Arch, ModelParams, TrainConfig};
use iccss::numerics::{bpsk_ber, RngStream};
use iccss::simplified::{verify_proposition3, SimplifiedModel};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "iccss", version, about = "Cooperative spectrum sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form values
    #[command(subcommand)]
    Theory(Theory),
    /// Train the semantic transceiver
    Train(TrainArgs),
    /// Monte Carlo evaluation
    #[command(subcommand)]
    Eval(Eval),
}

#[derive(Subcommand, Debug)]
enum Theory {
    /// Majority-rule detection ceiling over a BPSK reporting link
    HdfBound {
        #[arg(long, allow_negative_numbers = true)]
        snr_report_db: f64,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        p_local: f64,
    },
    /// BPSK bit error rate
    Ber {
        #[arg(long, allow_negative_numbers = true)]
        snr_report_db: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ArchPreset {
    TableOne,
    Desk,
    Miniature,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Scenario JSON
    #[arg(long)]
    config: PathBuf,
    /// Training JSON (defaults apply to missing keys)
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "table-one")]
    arch: ArchPreset,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario JSON; the built-in default scenario when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Eval {
    /// ROC curve of one method
    Roc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.2,0.5")]
        pfa_grid: Vec<f64>,
    },
    /// P_d along one scenario axis at a fixed P_fa
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated method names
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
        /// snr_sense_db, snr_report_db, n_samples, k_sensors or k_factor_iota
        #[arg(long)]
        axis: String,
        /// Comma-separated values; `k_factor_iota` takes `kc:iota` pairs
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long, default_value_t = 0.1)]
        pfa: f64,
    },
    /// The checkpoint with and without over-the-air aggregation
    Ablation {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.2,0.5")]
        pfa_grid: Vec<f64>,
    },
    /// Transmitted symbols of every sensor
    Constellation {
        #[command(flatten)]
        common: Common,
    },
    /// Rank identities of the simplified model (forces rho = 0)
    VerifyProp3 {
        #[command(flatten)]
        common: Common,
        /// Simplified-model JSON; a random nonnegative model when omitted
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: Vec<String>,
    config: Option<PathBuf>,
    seed: u64,
    output_dir: PathBuf,
    toolkit_version: &'static str,
    started: String,
    finished: String,
}

/// A usage or configuration problem (exit code 2) rather than a runtime failure.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<iccss::Error>() {
            return match e {
                iccss::Error::InvalidConfig(_) | iccss::Error::Json(_) | iccss::Error::Io { .. } => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Theory(t) => theory(t),
        Command::Train(a) => train(a),
        Command::Eval(e) => eval(e),
    }
}

fn theory(t: Theory) -> Result<()> {
    match t {
        Theory::HdfBound { snr_report_db, k, p_local } => {
            if k == 0 {
                return Err(usage("--k must be at least 1"));
            }
            if !(0.0..=1.0).contains(&p_local) {
                return Err(usage(format!("--p-local must lie in [0, 1], got {p_local}")));
            }
            println!("{:.6}", hdf_theoretical_pd(p_local, snr_report_db, k));
        }
        Theory::Ber { snr_report_db } => {
            let p = bpsk_ber(snr_report_db);
            if p >= 1e-3 {
                println!("{p:.6}");
            } else {
                println!("{p:.6e}");
            }
        }
    }
    Ok(())
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the worker pool")?;
    }
    Ok(())
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading scenario {}", p.display())),
        None => Ok(ScenarioConfig::default()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn write_sidecar(csv: &Path, cfg: &ScenarioConfig, seed: u64, extra: serde_json::Value) -> Result<()> {
    let mut side = serde_json::json!({ "scenario": cfg.to_json_value(), "seed": seed });
    if let (Some(obj), serde_json::Value::Object(more)) = (side.as_object_mut(), extra) {
        obj.extend(more);
    }
    write_json(&csv.with_extension("json"), &side)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn finish(out: &Path, config: Option<&Path>, seed: u64, started: String) -> Result<()> {
    let manifest = RunManifest {
        command: std::env::args().collect(),
        config: config.map(Path::to_path_buf),
        seed,
        output_dir: out.to_path_buf(),
        toolkit_version: env!("CARGO_PKG_VERSION"),
        started,
        finished: now(),
    };
    write_json(&out.join("manifest.json"), &manifest)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn train(a: TrainArgs) -> Result<()> {
    let started = now();
    set_threads(a.threads)?;
    let cfg = load_scenario(Some(&a.config))?;
    let mut tcfg = match &a.train_config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading training config {}", p.display()))?;
            TrainConfig::from_json(&text).with_context(|| format!("loading training config {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        tcfg.epochs = e;
    }
    if let Some(s) = a.seed {
        tcfg.seed = s;
    }
    tcfg.validate()?;
    let arch = match a.arch {
        ArchPreset::TableOne => Arch::table_one(cfg.m),
        ArchPreset::Desk => Arch::desk(cfg.m),
        ArchPreset::Miniature => Arch::miniature(cfg.m),
    };
    arch.validate()?;
    prepare_out(&a.out)?;

    let init = ModelParams::init_seeded(&arch, tcfg.seed)?;
    log::info!("training {} parameters for {} epochs", init.param_count(), tcfg.epochs);
    let (model, log) = train_with_progress(&init, &tcfg, &cfg, |_, _| {})?;
    save_checkpoint(&model, &a.out.join("model.ckpt"))?;
    let loss = a.out.join("loss.csv");
    write(&loss, &log.to_csv())?;
    write_sidecar(&loss, &cfg, tcfg.seed, serde_json::json!({ "train_config": tcfg, "arch": arch }))?;
    finish(&a.out, Some(&a.config), tcfg.seed, started)
}

fn load_model(common: &Common) -> Result<Option<Arc<ModelParams>>> {
    common
        .checkpoint
        .as_ref()
        .map(|p| {
            load_checkpoint(p).map(Arc::new).with_context(|| format!("loading checkpoint {}", p.display()))
        })
        .transpose()
}

fn pipeline(name: &str, model: Option<Arc<ModelParams>>) -> Result<Pipeline> {
    let method: Method = name.parse()?;
    if method.needs_checkpoint() && model.is_none() {
        return Err(usage(format!("method `{method}` needs --checkpoint")));
    }
    Ok(Pipeline::new(method, model)?)
}

fn parse_values(axis: SweepAxis, text: &str) -> Result<Vec<Vec<f64>>> {
    let width = axis.columns().len();
    text.split(',')
        .map(|item| {
            let v: Vec<f64> = item
                .split(':')
                .map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("bad value `{item}` in --values"))))
                .collect::<Result<_>>()?;
            if v.len() != width {
                bail!(usage(format!("axis {} takes {width} number(s) per value, got `{item}`", axis.columns().join(","))));
            }
            Ok(v)
        })
        .collect()
}

fn eval(e: Eval) -> Result<()> {
    let started = now();
    let common = match &e {
        Eval::Roc { common, .. }
        | Eval::Sweep { common, .. }
        | Eval::Ablation { common, .. }
        | Eval::Constellation { common }
        | Eval::VerifyProp3 { common, .. } => common.clone(),
    };
    set_threads(common.threads)?;
    if common.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let mut cfg = load_scenario(common.config.as_deref())?;
    let root = RngStream::new(common.seed, 0);
    let out = common.out.clone();
    prepare_out(&out)?;
    let model = load_model(&common)?;

    match e {
        Eval::Roc { method, pfa_grid, .. } => {
            let p = pipeline(&method, model)?;
            let roc = run_roc(&p, &cfg, &pfa_grid, common.trials, &root)?;
            if !roc.monotonicity_violations.is_empty() {
                log::warn!("P_d is not monotone in P_fa at points {:?}", roc.monotonicity_violations);
            }
            let path = out.join("roc.csv");
            write(&path, &roc.to_csv())?;
            write_sidecar(&path, &cfg, common.seed, serde_json::json!({ "method": roc.method, "trials": common.trials }))?;
        }
        Eval::Sweep { method, axis, values, pfa, .. } => {
            let axis: SweepAxis = axis.parse()?;
            let values = parse_values(axis, &values)?;
            if method.is_empty() {
                return Err(usage("--method needs at least one method"));
            }
            let pipes = method.iter().map(|m| pipeline(m, model.clone())).collect::<Result<Vec<_>>>()?;
            let table = run_sweep(&pipes, &cfg, axis, &values, pfa, common.trials, &root)?;
            let path = out.join("sweep.csv");
            write(&path, &table.to_csv())?;
            write_sidecar(
                &path,
                &cfg,
                common.seed,
                serde_json::json!({ "axis": axis, "methods": method, "target_pfa": pfa, "trials": common.trials }),
            )?;
        }
        Eval::Ablation { pfa_grid, .. } => {
            let model = model.ok_or_else(|| usage("ablation needs --checkpoint"))?;
            let rep = run_ablation_no_aircomp(model, &cfg, &pfa_grid, common.trials, &root)?;
            for (name, roc) in [("roc_aircomp.csv", &rep.aircomp), ("roc_orthogonal.csv", &rep.orthogonal)] {
                let path = out.join(name);
                write(&path, &roc.to_csv())?;
                write_sidecar(&path, &cfg, common.seed, serde_json::json!({ "method": roc.method, "trials": common.trials }))?;
            }
            println!(
                "subchannels: {} with AirComp, {} without (K = {})",
                rep.subchannels_aircomp, rep.subchannels_orthogonal, cfg.k
            );
        }
        Eval::Constellation { .. } => {
            let model = model.ok_or_else(|| usage("constellation needs --checkpoint"))?;
            let path = out.join("constellation.csv");
            write(&path, &export_constellation(&model, &cfg, common.trials, &root)?)?;
            write_sidecar(&path, &cfg, common.seed, serde_json::json!({ "slots": common.trials }))?;
        }
        Eval::VerifyProp3 { model: model_path, .. } => {
            if cfg.rho != 0.0 {
                log::info!("setting rho = 0 (was {})", cfg.rho);
                cfg.rho = 0.0;
            }
            let sm = match &model_path {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<SimplifiedModel>(&text)
                        .map_err(|err| usage(format!("{}: {err}", p.display())))?
                }
                None => SimplifiedModel::random(cfg.m, 3, 4, &cfg, &mut root.derive(1))?,
            };
            let report = verify_proposition3(&sm, &cfg, common.trials, &root)?;
            println!(
                "spearman(simplified, ed) = {}  spearman(ed, ec) = {}  roc identical: {}",
                report.spearman_simplified_ed, report.spearman_ed_ec, report.roc_identical
            );
            let path = out.join("prop3.json");
            write_json(&path, &serde_json::json!({ "report": report, "model": sm, "scenario": cfg.to_json_value(), "seed": common.seed }))?;
            if !report.passed() {
                finish(&out, common.config.as_deref(), common.seed, started)?;
                return Err(anyhow!("rank identities did not hold"));
            }
        }
    }
    finish(&out, common.config.as_deref(), common.seed, started)
}
