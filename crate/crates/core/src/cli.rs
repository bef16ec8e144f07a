//! Command-line front end.
//!
//! Every subcommand prints exactly one JSON object on stdout. Diagnostics go
//! to stderr. Exit codes: 0 success, 2 configuration, 3 I/O or file format,
//! 4 numerical failure.
//!
//! `--config FILE` reads a JSON object with the same option names as the
//! flags (snake_case). Flags given on the command line take precedence.
//! Relative paths in the file are resolved against the file's directory.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};

use crate::data::{
    generate_synthetic_dataset, load_snapshot_tensor, parse_dwell_list, save_snapshot_tensor, split_dataset, write_snpt, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::gca::{build_graph, final_fields, train_gca, GcaCheckpoint, GcaTrainConfig, MANIFEST_FILE as GCA_MANIFEST};
use crate::metrics::{emit_coefficient_plot, emit_max_displacement_plot, time_predict, EvalReport, Timing};
use crate::rom::{load_rom, save_rom, train_pod_gpr, PodGprRom, RomConfig};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "ROMFORGE_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "romforge",
    version,
    about = "Reduced-order surrogates for powder-bed-fusion distortion fields"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate a synthetic snapshot dataset.
    Gen(GenArgs),
    /// Train a POD-GPR or GCA surrogate.
    Train(TrainArgs),
    /// Predict the final distortion field at one dwell time.
    Predict(PredictArgs),
    /// Evaluate a trained model on held-out dwell times.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    PodGpr,
    Gca,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::PodGpr => "pod-gpr",
            ModelKind::Gca => "gca",
        }
    }
}

/// Lists may be given in a config file as a string (`"20:80:5"`) or as an
/// array of numbers.
fn list_spec<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Spec {
        Text(String),
        Values(Vec<f64>),
    }
    Ok(Option::<Spec>::deserialize(d)?.map(|s| match s {
        Spec::Text(t) => t,
        Spec::Values(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
    }))
}

macro_rules! merge_from {
    ($self:ident, $other:ident; $($field:ident),*) => {
        $( if $self.$field.is_none() { $self.$field = $other.$field; } )*
    };
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenArgs {
    /// JSON file with defaults for any of these options.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `start:stop:step` or comma list. Default 20:80:5.
    #[arg(long)]
    #[serde(default, deserialize_with = "list_spec")]
    pub dwell_times: Option<String>,
    /// Deposited layers, one time step each. Default 12.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Radial node count per ring. Default 5.
    #[arg(long)]
    pub radial: Option<usize>,
    /// Angular node count per ring. Default 24.
    #[arg(long)]
    pub theta: Option<usize>,
    /// Standard deviation of additive noise in mm. Default 0.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training dwell times.
    #[arg(long)]
    #[serde(default, deserialize_with = "list_spec")]
    pub train: Option<String>,
    /// Validation dwell times for GCA early stopping.
    #[arg(long)]
    #[serde(default, deserialize_with = "list_spec")]
    pub val: Option<String>,
    /// Output model directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// POD energy threshold. Default 0.9999.
    #[arg(long)]
    pub energy_threshold: Option<f64>,
    /// GPR optimizer restarts. Default 8.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// GPR diagonal jitter. Default scales with the target variance.
    #[arg(long)]
    pub jitter: Option<f64>,

    /// Weight of the latent consistency term. Default 0.5.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Early-stopping patience in epochs. Default 50.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    /// Input corruption in mm. Default 1% of the data standard deviation.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Full GCA training configuration (config file only).
    #[arg(skip)]
    pub gca: Option<GcaTrainConfig>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Output SNPT file. A JSON sidecar is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(default, deserialize_with = "list_spec")]
    pub test: Option<String>,
    /// Directory for plot CSV/SVG files and `report.json`.
    #[arg(long)]
    pub plots: Option<PathBuf>,
    /// Report path. Default `<plots>/report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Timed prediction sweeps. Default 5.
    #[arg(long)]
    pub timing_repeats: Option<usize>,
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<(T, PathBuf)> {
    match path {
        None => Ok((T::default(), PathBuf::new())),
        Some(p) => {
            let raw = fs::read(p).map_err(|e| Error::io(p, e))?;
            let cfg = serde_json::from_slice(&raw).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((cfg, base))
        }
    }
}

fn rebase(path: Option<PathBuf>, base: &Path) -> Option<PathBuf> {
    path.map(|p| if p.is_relative() { base.join(p) } else { p })
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required option --{flag}")))
}

fn list(value: &Option<String>, flag: &str) -> Result<Vec<f64>> {
    let spec = required(value.as_ref(), flag)?;
    parse_dwell_list(spec)
}

impl GenArgs {
    fn resolve(mut self) -> Result<Self> {
        let (file, base): (GenArgs, _) = load_config(self.config.as_deref())?;
        let file_out = rebase(file.out, &base);
        merge_from!(self, file; dwell_times, layers, radial, theta, noise, seed);
        if self.out.is_none() {
            self.out = file_out;
        }
        Ok(self)
    }
}

impl TrainArgs {
    fn resolve(mut self) -> Result<Self> {
        let (file, base): (TrainArgs, _) = load_config(self.config.as_deref())?;
        let (file_data, file_out) = (rebase(file.data, &base), rebase(file.out, &base));
        merge_from!(self, file; model, train, val, seed, energy_threshold, restarts, jitter, lambda, patience, max_epochs, lr_max, lr_min, noise_sigma, gca);
        if self.data.is_none() {
            self.data = file_data;
        }
        if self.out.is_none() {
            self.out = file_out;
        }
        Ok(self)
    }

    fn rom_config(&self) -> RomConfig {
        let d = RomConfig::default();
        RomConfig {
            energy_threshold: self.energy_threshold.unwrap_or(d.energy_threshold),
            jitter: self.jitter.or(d.jitter),
            restarts: self.restarts.unwrap_or(d.restarts),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    fn gca_config(&self) -> GcaTrainConfig {
        let mut c = self.gca.clone().unwrap_or_default();
        c.lambda = self.lambda.unwrap_or(c.lambda);
        c.patience = self.patience.unwrap_or(c.patience);
        c.max_epochs = self.max_epochs.unwrap_or(c.max_epochs);
        c.lr_max = self.lr_max.unwrap_or(c.lr_max);
        c.lr_min = self.lr_min.unwrap_or(c.lr_min);
        c.noise_sigma = self.noise_sigma.or(c.noise_sigma);
        c.seed = self.seed.unwrap_or(c.seed);
        c
    }
}

impl PredictArgs {
    fn resolve(mut self) -> Result<Self> {
        let (file, base): (PredictArgs, _) = load_config(self.config.as_deref())?;
        let (file_dir, file_out) = (rebase(file.model_dir, &base), rebase(file.out, &base));
        merge_from!(self, file; dt);
        self.model_dir = self.model_dir.or(file_dir);
        self.out = self.out.or(file_out);
        Ok(self)
    }
}

impl EvalArgs {
    fn resolve(mut self) -> Result<Self> {
        let (file, base): (EvalArgs, _) = load_config(self.config.as_deref())?;
        let file_dir = rebase(file.model_dir, &base);
        let file_data = rebase(file.data, &base);
        let file_plots = rebase(file.plots, &base);
        let file_report = rebase(file.report, &base);
        merge_from!(self, file; test, timing_repeats);
        self.model_dir = self.model_dir.or(file_dir);
        self.data = self.data.or(file_data);
        self.plots = self.plots.or(file_plots);
        self.report = self.report.or(file_report);
        Ok(self)
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_gen(args: GenArgs) -> Result<Value> {
    let args = args.resolve()?;
    let out = required(args.out, "out")?;
    let dwell_times = parse_dwell_list(args.dwell_times.as_deref().unwrap_or("20:80:5"))?;
    let config = SyntheticConfig {
        n_radial: args.radial.unwrap_or(5),
        n_theta: args.theta.unwrap_or(24),
        n_layers: args.layers.unwrap_or(12),
        dwell_times,
        noise_sigma: args.noise.unwrap_or(0.0),
        seed: args.seed.unwrap_or(0),
    };
    let tensor = generate_synthetic_dataset(&config)?;
    save_snapshot_tensor(&tensor, &out)?;
    Ok(json!({
        "command": "gen",
        "out": path_str(&out),
        "n_mu": tensor.n_params(),
        "n_h": tensor.n_nodes(),
        "n_t": tensor.n_steps(),
    }))
}

fn cmd_train(args: TrainArgs) -> Result<Value> {
    let args = args.resolve()?;
    let model = required(args.model, "model")?;
    let data = required(args.data.clone(), "data")?;
    let out = required(args.out.clone(), "out")?;
    let train = list(&args.train, "train")?;
    let val = match &args.val {
        Some(v) => parse_dwell_list(v)?,
        None => Vec::new(),
    };
    if train.is_empty() {
        return Err(Error::EmptyInput("training list is empty".into()));
    }
    let tensor = load_snapshot_tensor(&data)?;
    let started = Instant::now();
    match model {
        ModelKind::PodGpr => {
            if !val.is_empty() {
                eprintln!("note: --val is ignored for pod-gpr");
            }
            let (train_set, _) = split_dataset(&tensor, &train, &val)?;
            let rom = train_pod_gpr(&train_set, &args.rom_config())?;
            let seconds = started.elapsed().as_secs_f64();
            save_rom(&rom, &out)?;
            Ok(json!({
                "command": "train",
                "model": model.name(),
                "out": path_str(&out),
                "rank": rom.rank(),
                "energy_captured": rom.basis().energy_captured(),
                "n_train": train.len(),
                "train_seconds": seconds,
            }))
        }
        ModelKind::Gca => {
            // split checks that the lists are disjoint and present
            split_dataset(&tensor, &train, &val)?;
            let config = args.gca_config();
            let graph = build_graph(tensor.mesh());
            let train_fields = final_fields(&tensor, &train)?;
            let val_fields = final_fields(&tensor, &val)?;
            let (model_out, history) = train_gca(&train_fields, &val_fields, &graph, &config)?;
            let seconds = started.elapsed().as_secs_f64();
            let checkpoint = GcaCheckpoint {
                model: model_out,
                graph,
                config,
                training_dwell_times: train.clone(),
            };
            checkpoint.save(&out)?;
            let history_path = out.join("history.csv");
            history.write_csv(&history_path)?;
            Ok(json!({
                "command": "train",
                "model": model.name(),
                "out": path_str(&out),
                "epochs": history.epochs.len(),
                "best_epoch": history.best_epoch,
                "best_val_loss": history.best_val_loss,
                "history": path_str(&history_path),
                "n_train": train.len(),
                "train_seconds": seconds,
            }))
        }
    }
}

enum Loaded {
    Rom(PodGprRom),
    Gca(Box<GcaCheckpoint>),
}

impl Loaded {
    fn open(dir: &Path) -> Result<Self> {
        if dir.join("manifest.json").is_file() {
            Ok(Loaded::Rom(load_rom(dir)?))
        } else if dir.join(GCA_MANIFEST).is_file() {
            Ok(Loaded::Gca(Box::new(GcaCheckpoint::load(dir)?)))
        } else {
            Err(Error::format(dir, format!("no manifest.json or {GCA_MANIFEST} in model directory")))
        }
    }

    fn kind(&self) -> ModelKind {
        match self {
            Loaded::Rom(_) => ModelKind::PodGpr,
            Loaded::Gca(_) => ModelKind::Gca,
        }
    }

    fn predict(&self, dt: f64) -> Result<(Vec<f64>, bool)> {
        match self {
            Loaded::Rom(rom) => {
                let p = rom.predict(dt);
                Ok((p.mean_field, p.extrapolated))
            }
            Loaded::Gca(ck) => {
                let (lo, hi) = ck.training_range();
                Ok((ck.predict(dt)?, dt < lo || dt > hi))
            }
        }
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn cmd_predict(args: PredictArgs) -> Result<Value> {
    let args = args.resolve()?;
    let dir = required(args.model_dir, "model-dir")?;
    let dt = required(args.dt, "dt")?;
    let out = required(args.out, "out")?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dwell time must be positive, got {dt}")));
    }
    let model = Loaded::open(&dir)?;
    let (field, extrapolated) = model.predict(dt)?;
    if extrapolated {
        eprintln!("warning: dwell time {dt} lies outside the training range");
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_snpt(&out, &nalgebra::DMatrix::from_column_slice(field.len(), 1, &field))?;
    let max = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sidecar = json!({
        "model": model.kind().name(),
        "dwell_time": dt,
        "n_nodes": field.len(),
        "max_displacement": max,
        "extrapolated": extrapolated,
    });
    let side = sidecar_path(&out);
    let mut text = serde_json::to_string_pretty(&sidecar).expect("json value");
    text.push('\n');
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(json!({
        "command": "predict",
        "out": path_str(&out),
        "sidecar": path_str(&side),
        "model": model.kind().name(),
        "dwell_time": dt,
        "max_displacement": max,
        "extrapolated": extrapolated,
    }))
}

fn cmd_eval(args: EvalArgs) -> Result<Value> {
    let args = args.resolve()?;
    let dir = required(args.model_dir, "model-dir")?;
    let data = required(args.data, "data")?;
    let plots = required(args.plots, "plots")?;
    let test = list(&args.test, "test")?;
    if test.is_empty() {
        return Err(Error::EmptyInput("test list is empty".into()));
    }
    let report_path = args.report.unwrap_or_else(|| plots.join("report.json"));
    let repeats = args.timing_repeats.unwrap_or(5);

    let model = Loaded::open(&dir)?;
    let tensor = load_snapshot_tensor(&data)?;
    let (test_set, _) = split_dataset(&tensor, &test, &[])?;
    let truths: Vec<Vec<f64>> = test_set.matrices().iter().map(|m| m.final_field()).collect();
    let preds: Vec<Vec<f64>> = test.iter().map(|&dt| model.predict(dt).map(|p| p.0)).collect::<Result<_>>()?;
    let report = EvalReport::from_cases(
        model.kind().name(),
        test.iter()
            .zip(preds.iter().zip(&truths))
            .map(|(&dt, (p, t))| (dt, p.as_slice(), t.as_slice())),
    )?;

    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let md = emit_max_displacement_plot(&report.rows, &plots.join("max_displacement"))?;
    let mut files = vec![path_str(&md.csv), path_str(&md.svg)];
    let timing = match &model {
        Loaded::Rom(rom) => {
            let k = rom.rank().min(4);
            let cp = emit_coefficient_plot(rom, &test, k, &plots.join("coefficients"))?;
            files.extend([path_str(&cp.csv), path_str(&cp.svg)]);
            time_predict(rom, &test, repeats)?.mean_seconds
        }
        Loaded::Gca(ck) => {
            let start = Instant::now();
            for _ in 0..repeats.max(1) {
                for &dt in &test {
                    std::hint::black_box(ck.predict(dt)?);
                }
            }
            start.elapsed().as_secs_f64() / (repeats.max(1) * test.len()) as f64
        }
    };

    // Timing lives in its own file so that report.json is reproducible.
    crate::rom::write_json(&report_path, &report)?;
    let timing_path = plots.join("timing.json");
    let timing_record = Timing {
        train_seconds: None,
        predict_seconds_mean: timing,
    };
    crate::rom::write_json(&timing_path, &timing_record)?;
    Ok(json!({
        "command": "eval",
        "model": model.kind().name(),
        "report": path_str(&report_path),
        "timing": path_str(&timing_path),
        "plots": files,
        "n_test": report.rows.len(),
        "worst_relative_l2": report.worst_relative_l2(),
        "worst_max_disp_delta": report.worst_max_disp_delta(),
        "predict_seconds_mean": timing,
    }))
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Run one parsed command and return its JSON summary.
pub fn run(cli: Cli) -> Result<Value> {
    configure_threads()?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Parse `args`, run, print, and return the process exit code.
/// Usage line of the subcommand named in `args`, or of the whole program.
fn usage_for(args: &[OsString]) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    let name = args
        .iter()
        .skip(1)
        .find_map(|a| a.to_str().filter(|s| !s.starts_with('-')).map(str::to_owned));
    let usage = match name.and_then(|n| cmd.find_subcommand_mut(&n).map(|c| c.render_usage())) {
        Some(u) => u,
        None => cmd.render_usage(),
    };
    usage.to_string()
}

pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            if !e.render().to_string().contains("Usage:") {
                eprintln!("\n{}", usage_for(&args));
            }
            return 2;
        }
    };
    match run(cli) {
        Ok(summary) => {
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
