use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use marginflow::harness::{
    benchmark_decision_schemes, default_c_ladder, evaluate_bank, evaluate_mlp, grid_search_svm, hidden_size_sweep,
    load_csv_dataset, make_synthetic_blobs, preprocess_directory, split_half, write_surface_csv, ConfigValues, Dataset,
    Evaluation, GridSpec, InitScheme, Sigma2Axis, SweepConfig,
};
use marginflow::imageprep::Polarity;
use marginflow::kernels::{heuristic_sigma2, DEFAULT_SUBSAMPLE_CAP};
use marginflow::multiclass::{train_one_vs_all, train_one_vs_one, EvalOptions, MulticlassSvmModel, Scheme};
use marginflow::neural::{one_of_c_targets, rprop_train, Activation, MlpModel, RpropConfig, TargetEncoding};
use marginflow::{Error, KernelSetting, Result, SmoConfig};

#[derive(Parser)]
#[command(name = "marginflow", version, about = "Train and evaluate multiclass SVMs and MLPs")]
struct Cli {
    /// `key = value` file; `MF_<KEY>` environment variables override it and flags override both.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Data CSV files start with a header row.
    #[arg(long, global = true)]
    header: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a directory of PGM images into a labelled CSV.
    Preprocess(PreprocessArgs),
    /// Train a multiclass SVM bank.
    TrainSvm(TrainSvmArgs),
    /// Train a single-hidden-layer perceptron with Rprop.
    TrainMlp(TrainMlpArgs),
    /// Print the kappa report of a saved model on a dataset.
    Evaluate(EvaluateArgs),
    /// Coarse-to-fine (C, sigma2) search over a half split of the data.
    GridSearch(GridArgs),
    /// Hidden-layer size sweep over init schemes and seeds.
    SweepMlp(SweepArgs),
    /// Compare decision schemes of a saved SVM bank.
    Benchmark(BenchmarkArgs),
    /// Write a Gaussian-blob dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Foreground is darker than the background.
    #[arg(long)]
    invert: bool,
}

#[derive(Args)]
struct TrainSvmArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// linear, poly:<degree>:<offset>, gauss:<sigma2> or gauss:auto
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    c: Option<f64>,
    /// voting, ddag or ova
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct TrainMlpArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    /// uniform or nguyen-widrow
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// sigmoid or bipolar-sigmoid
    #[arg(long)]
    activation: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated values or `default`.
    #[arg(long)]
    c_grid: Option<String>,
    /// Comma-separated values or `auto`.
    #[arg(long)]
    sigma2_grid: Option<String>,
    #[arg(long)]
    refine: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated hidden sizes.
    #[arg(long)]
    sizes: Option<String>,
    /// Number of seeds per (size, init); seeds are 0..k.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional per-run table.
    #[arg(long)]
    runs_out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed of the train/validation split.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    spread: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Merges a flag with the file and environment layers.
struct Settings {
    values: ConfigValues,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut values = match path {
            Some(p) => ConfigValues::load(p)?,
            None => ConfigValues::default(),
        };
        values.apply_env(std::env::vars());
        Ok(Settings { values })
    }

    fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.values.get(key),
        }
    }

    fn req<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(flag, key)?.ok_or_else(|| {
            Error::InvalidInput(format!(
                "missing --{} (or `{key}` in the config file, or MF_{})",
                key.replace('_', "-"),
                key.to_ascii_uppercase()
            ))
        })
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.values.get::<bool>(key)?.unwrap_or(false))
    }
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::InvalidInput(format!("{what}: `{s}` is not a valid value"))))
        .collect::<Result<Vec<T>>>()?;
    if values.is_empty() {
        return Err(Error::InvalidInput(format!("{what}: empty list")));
    }
    Ok(values)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn report_block(eval: &Evaluation) -> String {
    let mut out = match &eval.kappa {
        Some(k) => k.to_key_value(),
        None => "kappa = undefined\n".to_string(),
    };
    let _ = writeln!(out, "accuracy = {}", eval.recall.accuracy);
    let _ = writeln!(out, "zero_recall_classes = {}", eval.recall.zero_recall_classes());
    out
}

fn run(cli: Cli) -> Result<()> {
    let s = Settings::load(cli.config.as_deref())?;
    let header = s.flag(cli.header, "header")?;
    let load = |flag: Option<PathBuf>| -> Result<Dataset> { load_csv_dataset(s.req(flag, "data")?, header) };

    match cli.command {
        Command::Preprocess(a) => {
            let input: PathBuf = s.req(a.input, "in")?;
            let out: PathBuf = s.req(a.out, "out")?;
            let polarity =
                if s.flag(a.invert, "invert")? { Polarity::DarkForeground } else { Polarity::BrightForeground };
            let data = preprocess_directory(&input, polarity)?;
            data.save_csv(&out)?;
            println!("wrote {} images in {} classes to {}", data.len(), data.classes(), out.display());
        }
        Command::TrainSvm(a) => {
            let data = load(a.data)?;
            let kernel: KernelSetting = s.req(a.kernel.as_deref().map(str::parse).transpose()?, "kernel")?;
            let c: f64 = s.req(a.c, "c")?;
            let scheme: Scheme = s.or(a.scheme.as_deref().map(str::parse).transpose()?, "scheme", Scheme::Ddag)?;
            let model_out: PathBuf = s.req(a.model_out, "model_out")?;
            let seed = s.or(a.seed, "seed", 0)?;
            let kernel = match kernel {
                KernelSetting::Fixed(k) => k,
                KernelSetting::AutoGaussian => {
                    let h = heuristic_sigma2(data.samples(), DEFAULT_SUBSAMPLE_CAP, seed)?;
                    println!("heuristic sigma2 = {}", h.sigma2);
                    marginflow::KernelSpec::gaussian(h.sigma2)?
                }
            };
            let mut cfg = SmoConfig::new(c, kernel).with_seed(seed);
            if let Some(tol) = s.opt(a.tolerance, "tolerance")? {
                cfg = cfg.with_tolerance(tol);
            }
            let bank = if scheme == Scheme::OneVsAll {
                train_one_vs_all(data.samples(), data.labels(), data.classes(), &cfg)?
            } else {
                let mut bank = train_one_vs_one(data.samples(), data.labels(), data.classes(), &cfg)?;
                bank.set_scheme_default(scheme)?;
                bank
            };
            bank.save_dir(&model_out)?;
            println!(
                "trained {} machines (kernel {kernel}, C = {c}): {} support vectors, {} unique",
                bank.machines().len(),
                bank.total_support_vectors(),
                bank.unique_support_vectors()
            );
        }
        Command::TrainMlp(a) => {
            let data = load(a.data)?;
            let hidden: usize = s.req(a.hidden, "hidden")?;
            let init: InitScheme =
                s.or(a.init.as_deref().map(str::parse).transpose()?, "init", InitScheme::NguyenWidrow)?;
            let activation: Activation =
                s.or(a.activation.as_deref().map(str::parse).transpose()?, "activation", Activation::Sigmoid)?;
            let model_out: PathBuf = s.req(a.model_out, "model_out")?;
            let seed = s.or(a.seed, "seed", 0)?;
            let rprop = RpropConfig { max_epochs: s.or(a.epochs, "epochs", 1000)?, seed, ..RpropConfig::default() };
            let start = init.build((data.dimension(), hidden, data.classes()), activation, 0.5, seed)?;
            let targets = one_of_c_targets(data.labels(), data.classes(), activation, TargetEncoding::Softened)?;
            let (model, report) = rprop_train(&start, data.samples(), &targets, &rprop)?;
            model.save(&model_out)?;
            println!(
                "epochs = {}\nfinal_mse = {}\nconverged = {}",
                report.epochs_run, report.final_mse, report.converged
            );
        }
        Command::Evaluate(a) => {
            let model_path: PathBuf = s.req(a.model, "model")?;
            let data = load(a.data)?;
            let scheme: Option<Scheme> = s.opt(a.scheme.as_deref().map(str::parse).transpose()?, "scheme")?;
            let eval = if model_path.is_dir() {
                let bank = MulticlassSvmModel::load_dir(&model_path)?;
                evaluate_bank(&bank, &data, scheme.unwrap_or(bank.scheme_default()), EvalOptions::default())?
            } else {
                if scheme.is_some() {
                    return Err(Error::InvalidInput("--scheme applies to SVM models only".into()));
                }
                evaluate_mlp(&MlpModel::load(&model_path)?, &data)?
            };
            print!("{}", report_block(&eval));
        }
        Command::GridSearch(a) => {
            let data = load(a.data)?;
            let seed = s.or(a.seed, "seed", 0)?;
            let c_text: String = s.or(a.c_grid, "c_grid", "default".into())?;
            let sigma_text: String = s.or(a.sigma2_grid, "sigma2_grid", "auto".into())?;
            let out: PathBuf = s.req(a.out, "out")?;
            let defaults = GridSpec::default();
            let grid = GridSpec {
                c_values: if c_text.trim() == "default" {
                    default_c_ladder()
                } else {
                    parse_list(&c_text, "--c-grid")?
                },
                sigma2: if sigma_text.trim() == "auto" {
                    defaults.sigma2.clone()
                } else {
                    Sigma2Axis::Values(parse_list(&sigma_text, "--sigma2-grid")?)
                },
                refine_rounds: s.or(a.refine, "refine", defaults.refine_rounds)?,
                refine_factor: defaults.refine_factor,
            };
            let (train, validation) = split_half(&data, seed)?;
            let smo = SmoConfig::new(1.0, marginflow::KernelSpec::Linear).with_seed(seed);
            let rows = grid_search_svm(&train, &validation, &grid, &smo)?;
            write_surface_csv(&rows, &out)?;
            let best = rows.iter().filter(|r| r.kappa.is_some()).fold(
                None,
                |b: Option<&marginflow::harness::GridSurfaceRow>, r| match b {
                    Some(b) if b.kappa >= r.kappa => Some(b),
                    _ => Some(r),
                },
            );
            println!("wrote {} cells to {}", rows.len(), out.display());
            if let Some(b) = best {
                println!("best c_reg = {} sigma2 = {} kappa = {}", b.c_reg, b.sigma2, b.kappa.unwrap_or(f64::NAN));
            }
        }
        Command::SweepMlp(a) => {
            let data = load(a.data)?;
            let sizes: Vec<usize> = parse_list(&s.req::<String>(a.sizes, "sizes")?, "--sizes")?;
            let seeds: u64 = s.or(a.seeds, "seeds", 3)?;
            let out: PathBuf = s.req(a.out, "out")?;
            let split_seed = s.or(a.seed, "seed", 0)?;
            let defaults = SweepConfig::default();
            let cfg = SweepConfig {
                sizes,
                seeds: (0..seeds).collect(),
                rprop: RpropConfig { max_epochs: s.or(a.epochs, "epochs", 1000)?, ..RpropConfig::default() },
                ..defaults
            };
            let (train, validation) = split_half(&data, split_seed)?;
            let report = hidden_size_sweep(&train, &validation, &cfg)?;
            write_file(&out, &report.summary_csv())?;
            if let Some(runs) = s.opt(a.runs_out, "runs_out")? {
                write_file(&runs, &report.runs_csv())?;
            }
            print!("{}", report.summary_csv());
        }
        Command::Benchmark(a) => {
            let bank = MulticlassSvmModel::load_dir(s.req::<PathBuf>(a.model, "model")?)?;
            let data = load(a.data)?;
            let out: PathBuf = s.req(a.out, "out")?;
            let report = benchmark_decision_schemes(&bank, &data)?;
            write_file(&out, &report.to_text())?;
            print!("{}", report.to_text());
        }
        Command::Synth(a) => {
            let data = make_synthetic_blobs(
                s.req(a.classes, "classes")?,
                s.req(a.dim, "dim")?,
                s.req(a.per_class, "per_class")?,
                s.or(a.spread, "spread", 0.2)?,
                s.or(a.seed, "seed", 0)?,
            )?;
            let out: PathBuf = s.req(a.out, "out")?;
            data.save_csv(&out)?;
            println!("wrote {} samples to {}", data.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
