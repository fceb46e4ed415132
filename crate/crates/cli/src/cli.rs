//! Command-line surface and subcommand dispatch.

use std::path::{Path, PathBuf};

use amcdef_core::analysis::{self, AttackKind, System};
use amcdef_core::attacks::{self, db_to_linear, linear_to_db, pnr_from_epsilon, AttackOutcome};
use amcdef_core::dataset::{load_dataset, save_dataset, DatasetBundle, EvalSplit, LabeledExample, SynthConfig};
use amcdef_core::nn::{load_cnn, save_cnn, Arch, CnnModel, Optimizer, TrainConfig};
use amcdef_core::rejection::{NrBundle, NrModel};
use amcdef_core::svm::{load_svm, save_svm, CvGrid, GammaSpec};
use amcdef_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::artifacts::{hash_file, write_atomic, write_attack_set, AttackRecord};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment;
use crate::pipeline::{self, write_json};
use crate::report::{self, CvSummary, EpsilonLFile};

#[derive(Debug, Parser)]
#[command(
    name = "amcdef",
    version,
    about = "Neural-rejection defenses for modulation classifiers under FGM attack"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled I/Q dataset (AMCD file).
    GenData(GenDataArgs),
    /// Validate an externally converted AMCD file and optionally rescale it.
    Import(ImportArgs),
    /// Train the CNN classifier on the training half of a dataset.
    TrainCnn(TrainCnnArgs),
    /// Fit the one-vs-all RBF SVM head on CNN features.
    TrainSvm(TrainSvmArgs),
    /// Calibrate the rejection threshold and write an NR bundle.
    Calibrate(CalibrateArgs),
    /// Generate FGM adversarial examples and write an attack set.
    Attack(AttackArgs),
    /// Accuracy of one system under an attack sweep.
    Evaluate(EvaluateArgs),
    /// Per-layer cosine-distance profile of adversarial vs noisy inputs.
    Amplification(AmplificationArgs),
    /// Margin-to-gradient robustness statistic of an NR system.
    EpsilonL(EpsilonLArgs),
    /// Merge run directories into CSV tables and a JSON summary.
    Report(ReportArgs),
    /// Run every stage from a config file, with caching.
    Pipeline(PipelineArgs),
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Comma-separated scheme names; all 11 when omitted.
    #[arg(long)]
    pub schemes: Option<String>,
    /// Comma-separated SNR levels in dB; -20..18 step 2 when omitted.
    #[arg(long, value_parser = parse_list::<i32>, allow_hyphen_values = true)]
    pub snrs: Option<std::vec::Vec<i32>>,
    #[arg(long, default_value_t = 100)]
    pub per_cell: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub target_power: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// AMCD file produced by an external converter.
    #[arg(long)]
    pub input: PathBuf,
    /// Rescale every frame to this mean power.
    #[arg(long)]
    pub normalize_power: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Seed of the train/test split; defaults to --seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainCnnArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Label smoothing; 0 disables it.
    #[arg(long, default_value_t = 0.1)]
    pub ls_alpha: f64,
    /// Gaussian input-noise variance; 0 disables it.
    #[arg(long, default_value_t = 0.003)]
    pub gna_var: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Momentum)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = Arch::VT_CNN2.conv1_filters)]
    pub conv1: usize,
    #[arg(long, default_value_t = Arch::VT_CNN2.conv2_filters)]
    pub conv2: usize,
    #[arg(long, default_value_t = Arch::VT_CNN2.dense_width)]
    pub dense: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OptimizerArg {
    Momentum,
    Adam,
}

#[derive(Debug, Args)]
pub struct TrainSvmArgs {
    #[arg(long)]
    pub cnn: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10000)]
    pub n_features: usize,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// Comma-separated C grid.
    #[arg(long, value_parser = parse_list::<f64>, default_value = "0.1,1,10,100")]
    pub c: std::vec::Vec<f64>,
    /// Comma-separated gamma grid; `1/d` and `scale` are accepted.
    #[arg(long, default_value = "1/d,0.01,0.1,1")]
    pub gamma: String,
    /// Train on raw features instead of z-scored ones.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalSampleArgs {
    /// SNR of the evaluation samples.
    #[arg(long, default_value_t = 10)]
    pub snr_db: i32,
    /// Evaluation sample size, capped by availability.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub split: SplitArgs,
}

impl EvalSampleArgs {
    fn split_seed(&self) -> u64 {
        self.split.split_seed.unwrap_or(self.seed)
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub cnn: PathBuf,
    #[arg(long)]
    pub svm: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.10)]
    pub rate: f64,
    #[command(flatten)]
    pub eval: EvalSampleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    Dnn,
    Nr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    Set1,
    Set2,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttackMode {
    Fixed,
    MinEps,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub system: SystemArg,
    /// `CNN` for dnn; `CNN SVM NR-BUNDLE` for nr.
    #[arg(long, num_args = 1..=3, required = true)]
    pub model: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Set1)]
    pub split: SplitChoice,
    /// Comma-separated PNR values in dB (fixed mode).
    #[arg(long, value_parser = parse_list::<f64>, default_value = "-20,-15,-10,-5,0", allow_hyphen_values = true)]
    pub pnr_db: std::vec::Vec<f64>,
    #[arg(long, value_enum, default_value_t = AttackMode::Fixed)]
    pub mode: AttackMode,
    #[command(flatten)]
    pub eval: EvalSampleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_list::<f64>, default_value = "-20,-15,-10,-5,0", allow_hyphen_values = true)]
    pub pnr_db: std::vec::Vec<f64>,
    /// Comma-separated attack kinds: fgm, jamming.
    #[arg(long, default_value = "fgm,jamming")]
    pub attacks: String,
    /// System tag written into the report; defaults to the system name.
    #[arg(long)]
    pub tag: Option<String>,
    #[command(flatten)]
    pub eval: EvalSampleArgs,
    /// Output JSON; name it `eval-<tag>.json` inside `seed-<n>/` for `report`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AmplificationArgs {
    #[arg(long)]
    pub cnn: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub pnr_db: f64,
    #[command(flatten)]
    pub eval: EvalSampleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EpsilonLArgs {
    /// `CNN SVM NR-BUNDLE`
    #[arg(long, num_args = 3, required = true)]
    pub model: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "nr")]
    pub tag: String,
    #[command(flatten)]
    pub eval: EvalSampleArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories holding `seed-<n>/` subdirectories.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Clean-accuracy floor of the per-scheme table.
    #[arg(long, default_value_t = 0.40)]
    pub floor: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// TOML experiment config.
    #[arg(long)]
    pub config: PathBuf,
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn halves(data: &Path, seed: u64) -> CliResult<(DatasetBundle, DatasetBundle)> {
    experiment::halves(&load_dataset(data)?, seed)
}

enum Loaded {
    Dnn(CnnModel),
    Nr(NrModel),
}

impl Loaded {
    fn load(args: &ModelArgs) -> CliResult<Self> {
        match (args.system, args.model.as_slice()) {
            (SystemArg::Dnn, [cnn]) => Ok(Loaded::Dnn(load_cnn(cnn)?)),
            (SystemArg::Nr, [cnn, svm, nr]) => Ok(Loaded::Nr(load_nr(cnn, svm, nr)?)),
            (SystemArg::Dnn, _) => Err(CliError::Config("--model: dnn takes one CNN checkpoint".into())),
            (SystemArg::Nr, _) => Err(CliError::Config(
                "--model: nr takes CNN, SVM and NR bundle paths".into(),
            )),
        }
    }

    fn system(&self) -> &dyn System {
        match self {
            Loaded::Dnn(m) => m,
            Loaded::Nr(m) => m,
        }
    }

    fn split(&self, test: &DatasetBundle, eval: &EvalSampleArgs) -> CliResult<EvalSplit> {
        match self {
            Loaded::Dnn(m) => experiment::dnn_split(m, test, eval.snr_db, eval.samples, eval.seed),
            Loaded::Nr(m) => experiment::nr_split(m, test, eval.snr_db, eval.samples, eval.seed),
        }
    }

    fn min_epsilon(&self, frame: &amcdef_core::dataset::IqFrame, y: usize) -> amcdef_core::Result<f64> {
        match self {
            Loaded::Dnn(m) => attacks::min_epsilon_dnn(m, frame, y).map(|r| r.epsilon),
            Loaded::Nr(m) => attacks::min_epsilon_nr(m, frame, y).map(|r| r.epsilon),
        }
    }
}

fn load_nr(cnn: &Path, svm: &Path, bundle: &Path) -> CliResult<NrModel> {
    Ok(NrBundle::load(bundle)?.resolve(cnn, svm)?)
}

fn parse_attacks(s: &str) -> CliResult<Vec<AttackKind>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| match p.trim() {
            "fgm" => Ok(AttackKind::Fgm),
            "jamming" => Ok(AttackKind::Jamming),
            other => Err(CliError::Config(format!("--attacks: unknown kind {other:?}"))),
        })
        .collect()
}

fn parse_gamma(s: &str) -> CliResult<Vec<GammaSpec>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| match p.trim() {
            "1/d" => Ok(GammaSpec::InverseDim),
            "scale" => Ok(GammaSpec::Scale),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|g| *g > 0.0 && g.is_finite())
                .map(GammaSpec::Value)
                .ok_or_else(|| CliError::Config(format!("--gamma: bad entry {v:?}"))),
        })
        .collect()
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Import(a) => import(a),
        Command::TrainCnn(a) => train_cnn(a),
        Command::TrainSvm(a) => train_svm(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Attack(a) => attack(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Amplification(a) => amplification(a),
        Command::EpsilonL(a) => epsilon_l(a),
        Command::Report(a) => {
            let runs: Vec<&Path> = a.runs.iter().map(PathBuf::as_path).collect();
            let results = report::collect_runs(&runs)?;
            let files = report::write_report(&results, a.floor, &a.out)?;
            for f in files {
                println!("{}", a.out.join(f).display());
            }
            Ok(())
        }
        Command::Pipeline(a) => {
            let config = ExperimentConfig::load(&a.config)?;
            let manifest = pipeline::run_pipeline(&config)?;
            println!(
                "{} stages; report in {}",
                manifest.stages.len(),
                config.output_dir.join("report").display()
            );
            Ok(())
        }
    }
}

fn gen_data(a: GenDataArgs) -> CliResult<()> {
    let mut config = SynthConfig::full(a.per_cell);
    if let Some(s) = &a.schemes {
        let names: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
        config = SynthConfig::from_names(&names, config.snrs_db, a.per_cell)
            .map_err(|e| CliError::Config(format!("--schemes: {e}")))?;
    }
    if let Some(snrs) = a.snrs {
        config.snrs_db = snrs;
    }
    config.target_power = a.target_power;
    let bundle = experiment::generate(&config, a.seed).map_err(|e| match e {
        CliError::Core(Error::InvalidArgument(m)) => CliError::Config(m),
        other => other,
    })?;
    save_dataset(&bundle, &a.out)?;
    println!("{} examples -> {}", bundle.len(), a.out.display());
    Ok(())
}

fn import(a: ImportArgs) -> CliResult<()> {
    let mut bundle = load_dataset(&a.input)?;
    bundle.validate()?;
    if let Some(p) = a.normalize_power {
        if !(p > 0.0 && p.is_finite()) {
            return Err(CliError::Config(format!("--normalize-power must be positive, got {p}")));
        }
        experiment::normalize(&mut bundle, p);
    }
    save_dataset(&bundle, &a.out)?;
    println!("{} examples -> {}", bundle.len(), a.out.display());
    Ok(())
}

fn train_cnn(a: TrainCnnArgs) -> CliResult<()> {
    let (train_half, _) = halves(&a.data, a.split.split_seed.unwrap_or(a.seed))?;
    let config = TrainConfig {
        optimizer: match a.optimizer {
            OptimizerArg::Momentum => Optimizer::Momentum,
            OptimizerArg::Adam => Optimizer::Adam,
        },
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.learning_rate,
        momentum: a.momentum,
        ls_alpha: a.ls_alpha,
        gna_variance: a.gna_var,
        seed: a.seed,
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let arch = Arch {
        conv1_filters: a.conv1,
        conv2_filters: a.conv2,
        dense_width: a.dense,
    };
    let (model, report) = experiment::train_cnn(&train_half, arch, &config)?;
    save_cnn(&model, &a.out)?;
    print_json(&report)
}

fn train_svm(a: TrainSvmArgs) -> CliResult<()> {
    let (train_half, _) = halves(&a.data, a.split.split_seed.unwrap_or(a.seed))?;
    let cnn = load_cnn(&a.cnn)?;
    let grid = CvGrid {
        c_values: a.c,
        gamma_values: parse_gamma(&a.gamma)?,
        folds: a.folds,
        standardize: !a.no_standardize,
    };
    let (svm, cv) = experiment::train_svm(&cnn, &train_half, a.n_features, &grid, a.seed)?;
    save_svm(&svm, &a.out)?;
    print_json(&CvSummary::from(&cv))
}

fn calibrate(a: CalibrateArgs) -> CliResult<()> {
    let (_, test) = halves(&a.data, a.eval.split_seed())?;
    let untuned = NrModel::new(load_cnn(&a.cnn)?, load_svm(&a.svm)?, f64::NEG_INFINITY)?;
    let split = experiment::nr_split(&untuned, &test, a.eval.snr_db, a.eval.samples, a.eval.seed)?;
    let theta = experiment::calibrate(&untuned, &test, &split, a.rate)?;
    NrBundle {
        cnn_sha256: hash_file(&a.cnn)?,
        svm_sha256: hash_file(&a.svm)?,
        theta,
    }
    .save(&a.out)?;
    print_json(&serde_json::json!({ "theta": theta, "set_one": split.set_one.len() }))
}

fn selected(split: &EvalSplit, choice: SplitChoice) -> Vec<usize> {
    match choice {
        SplitChoice::Set1 => split.set_one.clone(),
        SplitChoice::Set2 => split.set_two.clone(),
        SplitChoice::All => split.all().collect(),
    }
}

fn attack(a: AttackArgs) -> CliResult<()> {
    let (_, test) = halves(&a.data, a.eval.split_seed())?;
    let model = Loaded::load(&a.model)?;
    let split = model.split(&test, &a.eval)?;
    let indices = selected(&split, a.split);
    let snr_lin = db_to_linear(a.eval.snr_db as f64);
    let jobs: Vec<(usize, Option<f64>)> = match a.mode {
        AttackMode::Fixed => {
            if a.pnr_db.is_empty() {
                return Err(CliError::Config("--pnr-db must not be empty".into()));
            }
            a.pnr_db
                .iter()
                .flat_map(|&p| indices.iter().map(move |&i| (i, Some(p))))
                .collect()
        }
        AttackMode::MinEps => indices.iter().map(|&i| (i, None)).collect(),
    };
    let system = model.system();
    let results = jobs
        .par_iter()
        .map(|&(i, pnr)| -> CliResult<(LabeledExample, AttackRecord)> {
            let ex = &test.examples[i];
            let y = ex.label as usize;
            let (outcome, pnr_db): (AttackOutcome, f64) = match pnr {
                Some(p) => {
                    let eps = amcdef_core::attacks::AttackBudget::Pnr {
                        pnr_db: p,
                        snr_db: ex.snr_db as f64,
                    }
                    .epsilon_for(&ex.frame)?;
                    (system.fgm(&ex.frame, y, eps)?, p)
                }
                None => match model.min_epsilon(&ex.frame, y) {
                    Ok(eps) => {
                        let pnr_db = if eps > 0.0 {
                            linear_to_db(pnr_from_epsilon(eps, snr_lin, ex.frame.norm_sq())?)
                        } else {
                            f64::NEG_INFINITY
                        };
                        (system.fgm(&ex.frame, y, eps)?, pnr_db)
                    }
                    Err(Error::Unattackable { .. }) => {
                        let mut o = system.fgm(&ex.frame, y, 0.0)?;
                        o.epsilon_used = f64::INFINITY;
                        o.succeeded = false;
                        (o, f64::INFINITY)
                    }
                    Err(e) => return Err(e.into()),
                },
            };
            let record = AttackRecord::from_outcome(i, pnr_db, &outcome);
            let example = LabeledExample {
                frame: outcome.adversarial,
                label: ex.label,
                snr_db: ex.snr_db,
            };
            Ok((example, record))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let succeeded = results.iter().filter(|(_, r)| r.succeeded).count();
    let (examples, records): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let total = records.len();
    write_atomic(&a.out, None, |buf| {
        write_attack_set(buf, &test.class_names, examples, &records)
    })?;
    println!("{succeeded}/{total} attacks succeeded -> {}", a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let (_, test) = halves(&a.data, a.eval.split_seed())?;
    let model = Loaded::load(&a.model)?;
    let split = model.split(&test, &a.eval)?;
    let attacks = parse_attacks(&a.attacks)?;
    let tag = a.tag.unwrap_or_else(|| {
        match a.model.system {
            SystemArg::Dnn => "dnn",
            SystemArg::Nr => "nr",
        }
        .to_string()
    });
    let rep = analysis::evaluate(&tag, model.system(), &test, &split, &a.pnr_db, &attacks, a.eval.seed).map_err(
        |e| match e {
            Error::InvalidArgument(m) => CliError::Config(m),
            other => other.into(),
        },
    )?;
    write_json(&a.out, &rep)?;
    for row in &rep.rows {
        println!(
            "{:>8} {:>8} set I {:.3}  set II {:.3}  all {:.3}",
            row.attack.map_or("clean", |k| match k {
                AttackKind::Fgm => "fgm",
                AttackKind::Jamming => "jamming",
            }),
            row.pnr_db.map_or("-".to_string(), |p| format!("{p}")),
            row.set_one_accuracy,
            row.set_two_accuracy,
            row.combined_accuracy
        );
    }
    Ok(())
}

fn amplification(a: AmplificationArgs) -> CliResult<()> {
    let (_, test) = halves(&a.data, a.eval.split_seed())?;
    let cnn = load_cnn(&a.cnn)?;
    let split = experiment::dnn_split(&cnn, &test, a.eval.snr_db, a.eval.samples, a.eval.seed)?;
    let profile = experiment::amplification(&cnn, &test, &split, a.pnr_db, a.eval.seed)?;
    write_json(&a.out, &profile)?;
    print_json(&profile)
}

fn epsilon_l(a: EpsilonLArgs) -> CliResult<()> {
    let (_, test) = halves(&a.data, a.eval.split_seed())?;
    let nr = load_nr(&a.model[0], &a.model[1], &a.model[2])?;
    let split = experiment::nr_split(&nr, &test, a.eval.snr_db, a.eval.samples, a.eval.seed)?;
    let values = experiment::epsilon_l_values(&nr, &test, &split)?;
    let file = EpsilonLFile::new(&a.tag, &values);
    write_json(&a.out, &file)?;
    let mean = file.mean.map_or("undefined".to_string(), |m| format!("{m:.6}"));
    println!(
        "mean {mean} over {} frames ({} infinite)",
        file.n_finite, file.n_infinite
    );
    Ok(())
}
