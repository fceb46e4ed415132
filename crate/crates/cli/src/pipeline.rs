//! The end-to-end experiment as a chain of content-addressed stages.
//!
//! Each stage is keyed by the SHA-256 of its name, parameters and input
//! hashes. Outputs live in `<cache>/<key>/` and a stage whose outputs are
//! already present with matching hashes is skipped. Results are copied to
//! `<output_dir>/seed-<s>/`, and the run ends with `manifest.json`,
//! `manifest-timing.json` and the merged report in `<output_dir>/report/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use amcdef_core::codec::content_hash;
use amcdef_core::dataset::{load_dataset, save_dataset, DatasetBundle, EvalSplit};
use amcdef_core::nn::{load_cnn, save_cnn, CnnModel};
use amcdef_core::rejection::{NrBundle, NrModel};
use amcdef_core::svm::{load_svm, save_svm};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::{hash_file, write_atomic, RunLock};
use crate::config::{ExperimentConfig, SystemKind};
use crate::error::{CliError, CliResult};
use crate::experiment;
use crate::report;

/// Environment variable selecting the stage cache directory.
pub const CACHE_ENV: &str = "AMCDEF_CACHE_DIR";
const STAGE_VERSION: u32 = 1;
const STAGE_META: &str = "stage.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub seed: Option<u64>,
    pub key: String,
    pub params: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seed: Option<u64>,
    pub seconds: f64,
    pub cached: bool,
}

/// Content hashes of everything a run consumed and produced. Wall-clock
/// timings go to a sidecar file so that the manifest itself is
/// reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub stages: Vec<StageRecord>,
    pub report: BTreeMap<String, String>,
}

pub struct StageOutput {
    pub dir: PathBuf,
    pub hashes: BTreeMap<String, String>,
}

impl StageOutput {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn hash(&self, name: &str) -> String {
        self.hashes[name].clone()
    }
}

/// Runs stages against a cache directory and records what happened.
pub struct StageRunner {
    cache: PathBuf,
    quarantine: PathBuf,
    pub records: Vec<StageRecord>,
    pub timings: Vec<StageTiming>,
}

fn mkdir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

fn cached_outputs(dir: &Path, outputs: &[&str]) -> Option<BTreeMap<String, String>> {
    let meta = fs::read(dir.join(STAGE_META)).ok()?;
    let hashes: BTreeMap<String, String> = serde_json::from_slice(&meta).ok()?;
    let complete = outputs.len() == hashes.len()
        && outputs.iter().all(|o| {
            hashes
                .get(*o)
                .is_some_and(|h| hash_file(&dir.join(o)).ok().as_ref() == Some(h))
        });
    complete.then_some(hashes)
}

impl StageRunner {
    pub fn new(cache: PathBuf) -> CliResult<Self> {
        mkdir(&cache)?;
        let quarantine = cache.join("quarantine");
        Ok(StageRunner {
            cache,
            quarantine,
            records: Vec::new(),
            timings: Vec::new(),
        })
    }

    /// Runs `produce` into a scratch directory unless a cached result with
    /// the same key exists. A failed stage's partial outputs are moved to
    /// `<cache>/quarantine/<key>-<stage>`.
    pub fn run<F>(
        &mut self,
        stage: &str,
        seed: Option<u64>,
        params: serde_json::Value,
        inputs: &[(&str, String)],
        outputs: &[&str],
        produce: F,
    ) -> CliResult<StageOutput>
    where
        F: FnOnce(&Path) -> CliResult<()>,
    {
        let inputs: BTreeMap<String, String> = inputs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let key_doc = json!({
            "stage": stage,
            "version": STAGE_VERSION,
            "toolkit": env!("CARGO_PKG_VERSION"),
            "params": params,
            "inputs": inputs,
        });
        let key = content_hash(&serde_json::to_vec(&key_doc)?);
        let dir = self.cache.join(&key);
        let start = Instant::now();
        let (hashes, cached) = match cached_outputs(&dir, outputs) {
            Some(h) => (h, true),
            None => (
                self.produce(stage, &key, &dir, outputs, produce)
                    .map_err(|e| e.in_stage(stage))?,
                false,
            ),
        };
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seed,
            seconds: start.elapsed().as_secs_f64(),
            cached,
        });
        self.records.push(StageRecord {
            stage: stage.to_string(),
            seed,
            key,
            params,
            inputs,
            outputs: hashes.clone(),
        });
        Ok(StageOutput { dir, hashes })
    }

    fn produce<F>(
        &self,
        stage: &str,
        key: &str,
        dir: &Path,
        outputs: &[&str],
        produce: F,
    ) -> CliResult<BTreeMap<String, String>>
    where
        F: FnOnce(&Path) -> CliResult<()>,
    {
        let partial = self.cache.join(format!("{key}.partial"));
        if partial.exists() {
            fs::remove_dir_all(&partial).map_err(|e| CliError::io(format!("clearing {}", partial.display()), e))?;
        }
        mkdir(&partial)?;
        let result = produce(&partial).and_then(|()| {
            outputs
                .iter()
                .map(|o| Ok((o.to_string(), hash_file(&partial.join(o))?)))
                .collect::<CliResult<BTreeMap<_, _>>>()
        });
        let hashes = match result {
            Ok(h) => h,
            Err(e) => {
                let target = self.quarantine.join(format!("{key}-{stage}"));
                let _ = mkdir(&self.quarantine);
                let _ = fs::remove_dir_all(&target);
                let _ = fs::rename(&partial, &target);
                return Err(e);
            }
        };
        fs::write(partial.join(STAGE_META), serde_json::to_vec_pretty(&hashes)?)
            .map_err(|e| CliError::io(format!("writing {STAGE_META}"), e))?;
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| CliError::io(format!("clearing {}", dir.display()), e))?;
        }
        fs::rename(&partial, dir).map_err(|e| CliError::io(format!("publishing {}", dir.display()), e))?;
        Ok(hashes)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, None, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value)?;
        buf.push(b'\n');
        Ok(())
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn copy_outputs(out: &StageOutput, dest: &Path) -> CliResult<()> {
    mkdir(dest)?;
    for name in out.hashes.keys() {
        let target = dest.join(name);
        fs::copy(out.path(name), &target).map_err(|e| CliError::io(format!("copying to {}", target.display()), e))?;
    }
    Ok(())
}

/// Cache directory: `$AMCDEF_CACHE_DIR` when set, else `<output_dir>/cache`.
pub fn cache_dir(config: &ExperimentConfig) -> PathBuf {
    std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| config.output_dir.join("cache"))
}

fn load_halves(data: &Path, seed: u64) -> CliResult<(DatasetBundle, DatasetBundle)> {
    experiment::halves(&load_dataset(data)?, seed)
}

fn load_nr(cnn: &Path, svm: &Path, bundle: &Path) -> CliResult<NrModel> {
    Ok(NrBundle::load(bundle)?.resolve(cnn, svm)?)
}

/// Cached artifacts of one calibrated rejection system.
struct NrArtifacts {
    cnn_path: PathBuf,
    svm_path: PathBuf,
    nr_path: PathBuf,
    split_path: PathBuf,
    nr_hash: String,
    split_hash: String,
}

fn cnn_name(augmented: bool) -> &'static str {
    if augmented {
        "ls-gna"
    } else {
        "plain"
    }
}

/// Runs one replicate and copies its artifacts to `seed_dir`.
fn run_seed(runner: &mut StageRunner, config: &ExperimentConfig, seed: u64, seed_dir: &Path) -> CliResult<()> {
    let s = Some(seed);
    let data = if let Some(path) = &config.dataset {
        let source = hash_file(path)?;
        runner.run(
            "import",
            None,
            json!({ "normalize_power": config.normalize_power }),
            &[("source", source)],
            &["data.amcd"],
            |dir| {
                let mut bundle = load_dataset(path)?;
                bundle.validate()?;
                if let Some(p) = config.normalize_power {
                    experiment::normalize(&mut bundle, p);
                }
                save_dataset(&bundle, dir.join("data.amcd"))?;
                Ok(())
            },
        )?
    } else {
        let synth = config.synth_config()?;
        runner.run(
            "gen-data",
            s,
            json!({
                "schemes": config.schemes,
                "snrs_db": config.snrs_db,
                "frames_per_cell": config.frames_per_cell,
                "target_power": config.target_power,
                "normalize_power": config.normalize_power,
                "seed": seed,
            }),
            &[],
            &["data.amcd"],
            |dir| {
                let mut bundle = experiment::generate(&synth, seed)?;
                if let Some(p) = config.normalize_power {
                    experiment::normalize(&mut bundle, p);
                }
                save_dataset(&bundle, dir.join("data.amcd"))?;
                Ok(())
            },
        )?
    };
    copy_outputs(&data, seed_dir)?;
    let data_path = data.path("data.amcd");
    let data_hash = data.hash("data.amcd");

    let arch = config.arch();
    let mut cnns: BTreeMap<bool, StageOutput> = BTreeMap::new();
    let mut recipes = vec![false];
    if config.systems.contains(&SystemKind::LsGnaNr) {
        recipes.push(true);
    }
    for augmented in recipes {
        let name = cnn_name(augmented);
        let train_config = config.train_config(augmented, seed);
        let ckpt = format!("cnn-{name}.amcm");
        let log = format!("train-{name}.json");
        let out = runner.run(
            &format!("train-cnn-{name}"),
            s,
            json!({ "arch": arch, "train": train_config, "split_seed": seed }),
            &[("data", data_hash.clone())],
            &[&ckpt, &log],
            |dir| {
                let (train_half, _) = load_halves(&data_path, seed)?;
                let (model, report) = experiment::train_cnn(&train_half, arch, &train_config)?;
                save_cnn(&model, dir.join(&ckpt))?;
                write_json(&dir.join(&log), &report)
            },
        )?;
        copy_outputs(&out, seed_dir)?;
        cnns.insert(augmented, out);
    }
    let plain_ckpt = "cnn-plain.amcm";
    let plain_hash = cnns[&false].hash(plain_ckpt);
    let plain_path = cnns[&false].path(plain_ckpt);

    let eval_params = json!({
        "eval_snr_db": config.eval_snr_db,
        "eval_samples": config.eval_samples,
        "seed": seed,
    });
    let dnn_split = runner.run(
        "split-dnn",
        s,
        eval_params.clone(),
        &[("data", data_hash.clone()), ("cnn", plain_hash.clone())],
        &["split-dnn.json"],
        |dir| {
            let (_, test) = load_halves(&data_path, seed)?;
            let cnn = load_cnn(&plain_path)?;
            let split = experiment::dnn_split(&cnn, &test, config.eval_snr_db, config.eval_samples, seed)?;
            write_json(&dir.join("split-dnn.json"), &split)
        },
    )?;
    copy_outputs(&dnn_split, seed_dir)?;
    let dnn_split_path = dnn_split.path("split-dnn.json");
    let dnn_split_hash = dnn_split.hash("split-dnn.json");

    let grid = config.cv_grid()?;
    let mut nr_stages: BTreeMap<SystemKind, NrArtifacts> = BTreeMap::new();
    for &kind in config.systems.iter().filter(|k| experiment::system_needs_svm(**k)) {
        let tag = kind.tag();
        let cnn = &cnns[&kind.augmented()];
        let ckpt_name = format!("cnn-{}.amcm", cnn_name(kind.augmented()));
        let cnn_path = cnn.path(&ckpt_name);
        let cnn_hash = cnn.hash(&ckpt_name);
        let svm_name = format!("svm-{tag}.amcs");
        let cv_name = format!("cv-{tag}.json");
        let svm = runner.run(
            &format!("train-svm-{tag}"),
            s,
            json!({ "n_features": config.svm_features, "grid": grid, "seed": seed }),
            &[("data", data_hash.clone()), ("cnn", cnn_hash.clone())],
            &[&svm_name, &cv_name],
            |dir| {
                let (train_half, _) = load_halves(&data_path, seed)?;
                let cnn = load_cnn(&cnn_path)?;
                let (svm, cv) = experiment::train_svm(&cnn, &train_half, config.svm_features, &grid, seed)?;
                save_svm(&svm, dir.join(&svm_name))?;
                write_json(&dir.join(&cv_name), &report::CvSummary::from(&cv))
            },
        )?;
        copy_outputs(&svm, seed_dir)?;
        let svm_path = svm.path(&svm_name);
        let nr_name = format!("nr-{tag}.amcn");
        let split_name = format!("split-{tag}.json");
        let nr = runner.run(
            &format!("calibrate-{tag}"),
            s,
            json!({ "rate": config.rejection_rate, "eval": eval_params }),
            &[
                ("data", data_hash.clone()),
                ("cnn", cnn_hash.clone()),
                ("svm", svm.hash(&svm_name)),
            ],
            &[&nr_name, &split_name],
            |dir| {
                let (_, test) = load_halves(&data_path, seed)?;
                let cnn = load_cnn(&cnn_path)?;
                let svm = load_svm(&svm_path)?;
                let untuned = NrModel::new(cnn, svm, f64::NEG_INFINITY)?;
                let split = experiment::nr_split(&untuned, &test, config.eval_snr_db, config.eval_samples, seed)?;
                let theta = experiment::calibrate(&untuned, &test, &split, config.rejection_rate)?;
                let bundle = NrBundle {
                    cnn_sha256: hash_file(&cnn_path)?,
                    svm_sha256: hash_file(&svm_path)?,
                    theta,
                };
                bundle.save(dir.join(&nr_name))?;
                write_json(&dir.join(&split_name), &split)
            },
        )?;
        copy_outputs(&nr, seed_dir)?;
        nr_stages.insert(
            kind,
            NrArtifacts {
                cnn_path,
                svm_path,
                nr_path: nr.path(&nr_name),
                split_path: nr.path(&split_name),
                nr_hash: nr.hash(&nr_name),
                split_hash: nr.hash(&split_name),
            },
        );
    }

    for &kind in &config.systems {
        let tag = kind.tag();
        let eval_name = format!("eval-{tag}.json");
        let params = json!({
            "pnr_db": config.pnr_db,
            "attacks": config.attacks,
            "seed": seed,
        });
        let out = if kind == SystemKind::Dnn {
            runner.run(
                "evaluate-dnn",
                s,
                params,
                &[
                    ("data", data_hash.clone()),
                    ("cnn", plain_hash.clone()),
                    ("split", dnn_split_hash.clone()),
                ],
                &[&eval_name],
                |dir| {
                    let (_, test) = load_halves(&data_path, seed)?;
                    let cnn = load_cnn(&plain_path)?;
                    let split: EvalSplit = read_json(&dnn_split_path)?;
                    let rep = amcdef_core::analysis::evaluate(
                        tag,
                        &cnn,
                        &test,
                        &split,
                        &config.pnr_db,
                        &config.attacks,
                        seed,
                    )?;
                    write_json(&dir.join(&eval_name), &rep)
                },
            )?
        } else {
            let NrArtifacts {
                cnn_path,
                svm_path,
                nr_path,
                split_path,
                nr_hash,
                split_hash,
            } = &nr_stages[&kind];
            let eval = runner.run(
                &format!("evaluate-{tag}"),
                s,
                params,
                &[
                    ("data", data_hash.clone()),
                    ("nr", nr_hash.clone()),
                    ("split", split_hash.clone()),
                ],
                &[&eval_name],
                |dir| {
                    let (_, test) = load_halves(&data_path, seed)?;
                    let nr = load_nr(cnn_path, svm_path, nr_path)?;
                    let split: EvalSplit = read_json(split_path)?;
                    let rep = amcdef_core::analysis::evaluate(
                        tag,
                        &nr,
                        &test,
                        &split,
                        &config.pnr_db,
                        &config.attacks,
                        seed,
                    )?;
                    write_json(&dir.join(&eval_name), &rep)
                },
            )?;
            copy_outputs(&eval, seed_dir)?;
            let el_name = format!("epsilon-l-{tag}.json");
            let el = runner.run(
                &format!("epsilon-l-{tag}"),
                s,
                json!({}),
                &[
                    ("data", data_hash.clone()),
                    ("nr", nr_hash.clone()),
                    ("split", split_hash.clone()),
                ],
                &[&el_name],
                |dir| {
                    let (_, test) = load_halves(&data_path, seed)?;
                    let nr = load_nr(cnn_path, svm_path, nr_path)?;
                    let split: EvalSplit = read_json(split_path)?;
                    let values = experiment::epsilon_l_values(&nr, &test, &split)?;
                    write_json(&dir.join(&el_name), &report::EpsilonLFile::new(tag, &values))
                },
            )?;
            el
        };
        copy_outputs(&out, seed_dir)?;
    }

    let amp = runner.run(
        "amplification",
        s,
        json!({ "pnr_db": config.amplification_pnr_db, "seed": seed }),
        &[
            ("data", data_hash.clone()),
            ("cnn", plain_hash.clone()),
            ("split", dnn_split_hash.clone()),
        ],
        &["amplification.json"],
        |dir| {
            let (_, test) = load_halves(&data_path, seed)?;
            let cnn: CnnModel = load_cnn(&plain_path)?;
            let split: EvalSplit = read_json(&dnn_split_path)?;
            let profile = experiment::amplification(&cnn, &test, &split, config.amplification_pnr_db, seed)?;
            write_json(&dir.join("amplification.json"), &profile)
        },
    )?;
    copy_outputs(&amp, seed_dir)?;
    Ok(())
}

pub fn seed_dir(output_dir: &Path, seed: u64) -> PathBuf {
    output_dir.join(format!("seed-{seed}"))
}

/// Runs every replicate, then writes the report, the manifest and the
/// timing sidecar into `config.output_dir`.
pub fn run_pipeline(config: &ExperimentConfig) -> CliResult<RunManifest> {
    run_pipeline_with_cache(config, &cache_dir(config))
}

pub fn run_pipeline_with_cache(config: &ExperimentConfig, cache: &Path) -> CliResult<RunManifest> {
    config.validate()?;
    let out = &config.output_dir;
    let _lock = RunLock::acquire(out)?;
    let mut runner = StageRunner::new(cache.to_path_buf())?;
    for &seed in &config.seeds {
        run_seed(&mut runner, config, seed, &seed_dir(out, seed))?;
    }
    let runs = config
        .seeds
        .iter()
        .map(|&s| report::SeedResults::load(&seed_dir(out, s), s))
        .collect::<CliResult<Vec<_>>>()?;
    let report_dir = out.join("report");
    let files = report::write_report(&runs, config.table_floor, &report_dir).map_err(|e| e.in_stage("report"))?;
    let report = files
        .iter()
        .map(|name| Ok((name.clone(), hash_file(&report_dir.join(name))?)))
        .collect::<CliResult<BTreeMap<_, _>>>()?;
    let manifest = RunManifest {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        stages: runner.records,
        report,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    write_json(&out.join("manifest-timing.json"), &runner.timings)?;
    Ok(manifest)
}
