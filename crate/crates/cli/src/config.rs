//! Experiment configuration: a flat TOML file of top-level keys.
//!
//! Every key is optional; an empty file yields the defaults below. Unknown
//! keys are rejected.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `dataset` | unset | AMCD file to import instead of generating data |
//! | `schemes` | all 11 | synthetic schemes |
//! | `snrs_db` | -20..18 step 2 | synthetic SNR levels |
//! | `frames_per_cell` | 100 | synthetic frames per (scheme, SNR) |
//! | `target_power` | 1.0 | mean power of the noise-free synthetic signal |
//! | `normalize_power` | unset | rescale every frame to this mean power after loading |
//! | `conv1_filters`, `conv2_filters`, `dense_width` | 256, 80, 256 | CNN shape |
//! | `optimizer` | `"momentum"` | `"momentum"` or `"adam"` |
//! | `epochs`, `batch_size` | 30, 128 | |
//! | `learning_rate`, `momentum` | 1e-3, 0.9 | |
//! | `ls_alpha` | 0.1 | label smoothing for the LS-GNA recipe |
//! | `gna_variance` | 0.003 | input noise variance for the LS-GNA recipe |
//! | `svm_features` | 5000 | training examples used to fit the SVM head |
//! | `svm_c` | [0.1, 1, 10, 100] | C grid |
//! | `svm_gamma` | ["1/d", 0.01, 0.1, 1] | gamma grid; `"1/d"` is one over the feature width, `"scale"` is one over (width times feature variance) |
//! | `svm_standardize` | true | z-score the features before the SVM |
//! | `cv_folds` | 3 | |
//! | `rejection_rate` | 0.10 | benign rejection rate on set I |
//! | `eval_snr_db` | 10 | SNR of the evaluation samples |
//! | `eval_samples` | 1000 | evaluation sample size (capped by availability) |
//! | `pnr_db` | [-20, -15, -10, -5, 0] | attack sweep |
//! | `attacks` | ["fgm", "jamming"] | |
//! | `systems` | ["dnn", "nr", "ls-gna-nr"] | |
//! | `amplification_pnr_db` | 0.0 | budget of the amplification profile |
//! | `table_floor` | 0.40 | clean-accuracy floor of the per-scheme table |
//! | `seeds` | [0] | one full replicate per seed |
//! | `output_dir` | `"amcdef-run"` | |

use std::path::{Path, PathBuf};

use amcdef_core::analysis::AttackKind;
use amcdef_core::dataset::{corpus_snrs, Modulation, SynthConfig};
use amcdef_core::nn::{Arch, Optimizer, TrainConfig};
use amcdef_core::svm::{CvGrid, GammaSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Dnn,
    Nr,
    LsGnaNr,
}

impl SystemKind {
    pub fn tag(self) -> &'static str {
        match self {
            SystemKind::Dnn => "dnn",
            SystemKind::Nr => "nr",
            SystemKind::LsGnaNr => "ls-gna-nr",
        }
    }

    /// Whether the system's CNN is trained with smoothing and noise.
    pub fn augmented(self) -> bool {
        self == SystemKind::LsGnaNr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaEntry {
    Value(f64),
    Named(String),
}

impl GammaEntry {
    fn resolve(&self) -> CliResult<GammaSpec> {
        match self {
            GammaEntry::Value(v) if *v > 0.0 && v.is_finite() => Ok(GammaSpec::Value(*v)),
            GammaEntry::Named(s) if s == "1/d" => Ok(GammaSpec::InverseDim),
            GammaEntry::Named(s) if s == "scale" => Ok(GammaSpec::Scale),
            other => Err(CliError::Config(format!(
                "svm_gamma entries must be positive numbers, \"1/d\" or \"scale\", got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub schemes: Vec<String>,
    pub snrs_db: Vec<i32>,
    pub frames_per_cell: usize,
    pub target_power: f64,
    pub normalize_power: Option<f64>,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub dense_width: usize,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub ls_alpha: f64,
    pub gna_variance: f64,
    pub svm_features: usize,
    pub svm_c: Vec<f64>,
    pub svm_gamma: Vec<GammaEntry>,
    pub svm_standardize: bool,
    pub cv_folds: usize,
    pub rejection_rate: f64,
    pub eval_snr_db: i32,
    pub eval_samples: usize,
    pub pnr_db: Vec<f64>,
    pub attacks: Vec<AttackKind>,
    pub systems: Vec<SystemKind>,
    pub amplification_pnr_db: f64,
    pub table_floor: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let grid = CvGrid::default();
        ExperimentConfig {
            dataset: None,
            schemes: Modulation::ALL.iter().map(|m| m.name().to_string()).collect(),
            snrs_db: corpus_snrs(),
            frames_per_cell: 100,
            target_power: 1.0,
            normalize_power: None,
            conv1_filters: Arch::VT_CNN2.conv1_filters,
            conv2_filters: Arch::VT_CNN2.conv2_filters,
            dense_width: Arch::VT_CNN2.dense_width,
            optimizer: train.optimizer,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            ls_alpha: train.ls_alpha,
            gna_variance: train.gna_variance,
            svm_features: 5000,
            svm_c: grid.c_values,
            svm_gamma: grid
                .gamma_values
                .iter()
                .map(|g| match g {
                    GammaSpec::InverseDim => GammaEntry::Named("1/d".into()),
                    GammaSpec::Scale => GammaEntry::Named("scale".into()),
                    GammaSpec::Value(v) => GammaEntry::Value(*v),
                })
                .collect(),
            svm_standardize: true,
            cv_folds: grid.folds,
            rejection_rate: 0.10,
            eval_snr_db: 10,
            eval_samples: 1000,
            pnr_db: vec![-20.0, -15.0, -10.0, -5.0, 0.0],
            attacks: vec![AttackKind::Fgm, AttackKind::Jamming],
            systems: vec![SystemKind::Dnn, SystemKind::Nr, SystemKind::LsGnaNr],
            amplification_pnr_db: 0.0,
            table_floor: 0.40,
            seeds: vec![0],
            output_dir: PathBuf::from("amcdef-run"),
        }
    }
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> CliResult<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file. Relative `dataset` and
    /// `output_dir` paths are resolved against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &config.dataset {
            if d.is_relative() {
                config.dataset = Some(base.join(d));
            }
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        if let Some(d) = &self.dataset {
            if !d.is_file() {
                return bad("dataset", format!("file {} does not exist", d.display()));
            }
        } else {
            self.synth_config()
                .map_err(|e| CliError::Config(format!("schemes/snrs_db/frames_per_cell: {e}")))?;
        }
        if let Some(p) = self.normalize_power {
            if !(p > 0.0 && p.is_finite()) {
                return bad("normalize_power", format!("must be positive, got {p}"));
            }
        }
        if self.conv1_filters == 0 || self.conv2_filters == 0 || self.dense_width == 0 {
            return bad("conv1_filters/conv2_filters/dense_width", "must be positive".into());
        }
        self.train_config(true, 0)
            .validate()
            .map_err(|e| CliError::Config(format!("training: {e}")))?;
        if self.svm_features < self.cv_folds {
            return bad("svm_features", format!("{} is below cv_folds", self.svm_features));
        }
        self.cv_grid()?;
        if !(0.0..1.0).contains(&self.rejection_rate) {
            return bad("rejection_rate", format!("{} outside [0, 1)", self.rejection_rate));
        }
        if self.eval_samples == 0 {
            return bad("eval_samples", "must be positive".into());
        }
        if self.pnr_db.is_empty() {
            return bad("pnr_db", "must not be empty".into());
        }
        if self
            .pnr_db
            .iter()
            .chain([&self.amplification_pnr_db])
            .any(|p| !p.is_finite())
        {
            return bad("pnr_db", "values must be finite".into());
        }
        if self.systems.is_empty() {
            return bad("systems", "must not be empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds", "must list at least one seed".into());
        }
        if !(0.0..=f64::MAX).contains(&self.table_floor) {
            return bad("table_floor", format!("{} is negative", self.table_floor));
        }
        Ok(())
    }

    pub fn arch(&self) -> Arch {
        Arch {
            conv1_filters: self.conv1_filters,
            conv2_filters: self.conv2_filters,
            dense_width: self.dense_width,
        }
    }

    pub fn synth_config(&self) -> amcdef_core::Result<SynthConfig> {
        let mut c = SynthConfig::from_names(&self.schemes, self.snrs_db.clone(), self.frames_per_cell)?;
        c.target_power = self.target_power;
        c.validate()?;
        Ok(c)
    }

    /// Training settings for one recipe: plain (no smoothing, no noise) or
    /// LS-GNA.
    pub fn train_config(&self, augmented: bool, seed: u64) -> TrainConfig {
        let c = TrainConfig {
            optimizer: self.optimizer,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            ls_alpha: self.ls_alpha,
            gna_variance: self.gna_variance,
            seed,
        };
        if augmented {
            c
        } else {
            c.without_augmentation()
        }
    }

    pub fn cv_grid(&self) -> CliResult<CvGrid> {
        if self.svm_c.is_empty() || self.svm_gamma.is_empty() {
            return Err(CliError::Config("svm_c/svm_gamma: grid must not be empty".into()));
        }
        if self.svm_c.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(CliError::Config("svm_c: values must be positive".into()));
        }
        if self.cv_folds < 2 {
            return Err(CliError::Config("cv_folds: need at least 2".into()));
        }
        Ok(CvGrid {
            c_values: self.svm_c.clone(),
            gamma_values: self
                .svm_gamma
                .iter()
                .map(GammaEntry::resolve)
                .collect::<CliResult<_>>()?,
            folds: self.cv_folds,
            standardize: self.svm_standardize,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::parse_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(
            (c.ls_alpha, c.gna_variance, c.rejection_rate, c.cv_folds),
            (0.1, 0.003, 0.10, 3)
        );
    }

    #[test]
    fn unknown_keys_and_bad_ranges_fail() {
        assert!(matches!(
            ExperimentConfig::parse_str("lr_warmup = 3"),
            Err(CliError::Config(_))
        ));
        let e = ExperimentConfig::parse_str("ls_alpha = 1.5").unwrap_err();
        assert!(e.to_string().contains("alpha"), "{e}");
        assert!(ExperimentConfig::parse_str("epochs = \"ten\"").is_err());
        assert!(ExperimentConfig::parse_str("pnr_db = []").is_err());
        assert!(ExperimentConfig::parse_str("svm_gamma = [\"auto\"]").is_err());
    }

    #[test]
    fn missing_dataset_names_the_field() {
        let e = ExperimentConfig::parse_str("dataset = \"/no/such/file.amcd\"").unwrap_err();
        assert!(e.to_string().contains("dataset"));
        assert_eq!(e.exit_code(), crate::error::EXIT_CONFIG);
    }

    #[test]
    fn mixed_gamma_grid_parses() {
        let c = ExperimentConfig::parse_str("svm_gamma = [\"1/d\", 0.5]\nsystems = [\"ls-gna-nr\"]").unwrap();
        let g = c.cv_grid().unwrap();
        assert_eq!(g.gamma_values, vec![GammaSpec::InverseDim, GammaSpec::Value(0.5)]);
        assert_eq!(c.systems, vec![SystemKind::LsGnaNr]);
    }
}
