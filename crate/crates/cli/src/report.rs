//! Report assembly: per-seed result files in, CSV tables and a JSON
//! summary out. Non-finite numbers are written as empty cells / `null`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use amcdef_core::analysis::{
    aggregate, per_modulation_table, summarize_epsilon_l, AmplificationProfile, AttackKind, EvalReport, EvalRow,
    EvalSet,
};
use amcdef_core::dataset::class_names;
use amcdef_core::svm::CvResult;
use serde::{Deserialize, Serialize};

use crate::artifacts::write_atomic;
use crate::error::{CliError, CliResult};
use crate::pipeline::{read_json, write_json};

pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const MODULATION_CSV: &str = "modulation.csv";
pub const AMPLIFICATION_CSV: &str = "amplification.csv";
pub const EPSILON_L_CSV: &str = "epsilon_l.csv";
pub const SUMMARY_JSON: &str = "summary.json";

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub c: f64,
    pub gamma: f64,
    /// Mean validation accuracy; absent when cross-validation was skipped.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub c: f64,
    pub gamma: f64,
    pub cells: Vec<CvCell>,
}

impl From<&CvResult> for CvSummary {
    fn from(cv: &CvResult) -> Self {
        CvSummary {
            c: cv.c,
            gamma: cv.gamma,
            cells: cv
                .cells
                .iter()
                .map(|&(c, gamma, acc)| CvCell {
                    c,
                    gamma,
                    accuracy: finite(acc),
                })
                .collect(),
        }
    }
}

/// Per-frame margin statistics of one system; `None` marks an infinite
/// value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonLFile {
    pub system: String,
    pub values: Vec<Option<f64>>,
    /// Mean over the finite values.
    pub mean: Option<f64>,
    pub n_finite: usize,
    pub n_infinite: usize,
}

impl EpsilonLFile {
    pub fn new(system: &str, values: &[f64]) -> Self {
        let s = summarize_epsilon_l(values);
        EpsilonLFile {
            system: system.to_string(),
            values: values.iter().map(|&v| finite(v)).collect(),
            mean: finite(s.mean),
            n_finite: s.n_finite,
            n_infinite: s.n_infinite,
        }
    }
}

/// Everything one replicate produced.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedResults {
    pub seed: u64,
    pub evals: BTreeMap<String, EvalReport>,
    pub epsilon_l: BTreeMap<String, EpsilonLFile>,
    pub amplification: Option<AmplificationProfile>,
}

impl SeedResults {
    /// Reads `eval-*.json`, `epsilon-l-*.json` and `amplification.json`
    /// from a seed directory. Missing files are simply absent.
    pub fn load(dir: &Path, seed: u64) -> CliResult<Self> {
        let mut out = SeedResults {
            seed,
            evals: BTreeMap::new(),
            epsilon_l: BTreeMap::new(),
            amplification: None,
        };
        let entries = fs::read_dir(dir).map_err(|e| CliError::io(format!("listing {}", dir.display()), e))?;
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for name in names {
            let path = dir.join(&name);
            if let Some(tag) = name.strip_prefix("eval-").and_then(|n| n.strip_suffix(".json")) {
                out.evals.insert(tag.to_string(), read_json(&path)?);
            } else if let Some(tag) = name.strip_prefix("epsilon-l-").and_then(|n| n.strip_suffix(".json")) {
                out.epsilon_l.insert(tag.to_string(), read_json(&path)?);
            } else if name == "amplification.json" {
                out.amplification = Some(read_json(&path)?);
            }
        }
        Ok(out)
    }
}

/// Collects the `seed-<s>` directories of several run directories. A seed
/// present in more than one run is an error.
pub fn collect_runs(run_dirs: &[&Path]) -> CliResult<Vec<SeedResults>> {
    let mut by_seed: BTreeMap<u64, SeedResults> = BTreeMap::new();
    for run in run_dirs {
        let entries = fs::read_dir(run).map_err(|e| CliError::io(format!("listing {}", run.display()), e))?;
        for entry in entries.filter_map(|e| e.ok()) {
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(seed) = name.strip_prefix("seed-").and_then(|s| s.parse::<u64>().ok()) else {
                continue;
            };
            if by_seed.contains_key(&seed) {
                return Err(CliError::Config(format!(
                    "seed {seed} appears in more than one run directory"
                )));
            }
            by_seed.insert(seed, SeedResults::load(&entry.path(), seed)?);
        }
    }
    if by_seed.is_empty() {
        return Err(CliError::Config(
            "no seed-<n> directories found in the given runs".into(),
        ));
    }
    Ok(by_seed.into_values().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: Option<f64>,
    /// Sample standard deviation across seeds.
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        match aggregate(values) {
            Ok(m) => Stat {
                mean: finite(m.mean),
                std: finite(m.std),
                n: m.n,
            },
            Err(_) => Stat {
                mean: None,
                std: None,
                n: 0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSummary {
    pub attack: Option<AttackKind>,
    pub pnr_db: Option<f64>,
    pub set_one_accuracy: Stat,
    pub set_two_accuracy: Stat,
    pub combined_accuracy: Stat,
    pub set_one_rejection_rate: Stat,
    pub set_two_rejection_rate: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub system: String,
    pub set_one_size: Stat,
    pub set_two_size: Stat,
    pub rows: Vec<RowSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonLSummaryRow {
    pub system: String,
    /// Per-seed means, in seed order.
    pub per_seed: Vec<Option<f64>>,
    pub mean: Stat,
    pub n_infinite: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationSummary {
    pub layers: Vec<String>,
    pub adversarial: Vec<Stat>,
    pub noisy: Vec<Stat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub schemes: Vec<String>,
    pub columns: Vec<(String, f64)>,
    pub cells: Vec<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: Vec<u64>,
    pub systems: Vec<SystemSummary>,
    pub epsilon_l: Vec<EpsilonLSummaryRow>,
    pub amplification: Option<AmplificationSummary>,
    pub modulation_table: TableSummary,
}

impl Summary {
    pub fn system(&self, tag: &str) -> Option<&SystemSummary> {
        self.systems.iter().find(|s| s.system == tag)
    }
}

impl SystemSummary {
    pub fn row(&self, attack: Option<AttackKind>, pnr_db: Option<f64>) -> Option<&RowSummary> {
        self.rows.iter().find(|r| r.attack == attack && r.pnr_db == pnr_db)
    }
}

fn find_row(rep: &EvalReport, attack: Option<AttackKind>, pnr_db: Option<f64>) -> Option<&EvalRow> {
    rep.rows.iter().find(|r| r.attack == attack && r.pnr_db == pnr_db)
}

fn system_tags(runs: &[SeedResults]) -> Vec<String> {
    let mut tags: Vec<String> = runs.iter().flat_map(|r| r.evals.keys().cloned()).collect();
    tags.sort();
    tags.dedup();
    tags
}

fn summarize_system(runs: &[SeedResults], tag: &str) -> SystemSummary {
    let reports: Vec<&EvalReport> = runs.iter().filter_map(|r| r.evals.get(tag)).collect();
    let keys: Vec<(Option<AttackKind>, Option<f64>)> = reports
        .first()
        .map(|r| r.rows.iter().map(|row| (row.attack, row.pnr_db)).collect())
        .unwrap_or_default();
    let rows = keys
        .into_iter()
        .map(|(attack, pnr_db)| {
            let found: Vec<&EvalRow> = reports.iter().filter_map(|r| find_row(r, attack, pnr_db)).collect();
            let stat = |f: fn(&EvalRow) -> f64| Stat::of(&found.iter().map(|r| f(r)).collect::<Vec<_>>());
            RowSummary {
                attack,
                pnr_db,
                set_one_accuracy: stat(|r| r.set_one_accuracy),
                set_two_accuracy: stat(|r| r.set_two_accuracy),
                combined_accuracy: stat(|r| r.combined_accuracy),
                set_one_rejection_rate: stat(|r| r.set_one_rejection_rate),
                set_two_rejection_rate: stat(|r| r.set_two_rejection_rate),
            }
        })
        .collect();
    SystemSummary {
        system: tag.to_string(),
        set_one_size: Stat::of(&reports.iter().map(|r| r.set_one_size as f64).collect::<Vec<_>>()),
        set_two_size: Stat::of(&reports.iter().map(|r| r.set_two_size as f64).collect::<Vec<_>>()),
        rows,
    }
}

/// One report per system with the per-example records of every seed
/// concatenated row by row.
fn pooled_report(runs: &[SeedResults], tag: &str) -> Option<EvalReport> {
    let mut reports = runs.iter().filter_map(|r| r.evals.get(tag));
    let mut pooled = reports.next()?.clone();
    for rep in reports {
        for row in &mut pooled.rows {
            if let Some(other) = find_row(rep, row.attack, row.pnr_db) {
                row.records.extend(other.records.iter().cloned());
            }
        }
        pooled.set_one_size += rep.set_one_size;
        pooled.set_two_size += rep.set_two_size;
    }
    Some(pooled)
}

/// Systems in table order: the most defended system first, since its clean
/// accuracy selects the table rows.
fn table_order(tags: &[String]) -> Vec<String> {
    let mut order: Vec<String> = ["ls-gna-nr", "nr", "dnn"]
        .iter()
        .map(|s| s.to_string())
        .filter(|s| tags.contains(s))
        .collect();
    let rest: Vec<String> = tags.iter().filter(|t| !order.contains(t)).cloned().collect();
    order.extend(rest);
    order
}

pub fn summarize(runs: &[SeedResults], floor: f64) -> Summary {
    let tags = system_tags(runs);
    let systems = tags.iter().map(|t| summarize_system(runs, t)).collect();

    let mut el_tags: Vec<String> = runs.iter().flat_map(|r| r.epsilon_l.keys().cloned()).collect();
    el_tags.sort();
    el_tags.dedup();
    let epsilon_l = el_tags
        .iter()
        .map(|tag| {
            let files: Vec<&EpsilonLFile> = runs.iter().filter_map(|r| r.epsilon_l.get(tag)).collect();
            let per_seed: Vec<Option<f64>> = files.iter().map(|f| f.mean).collect();
            EpsilonLSummaryRow {
                system: tag.clone(),
                mean: Stat::of(&per_seed.iter().flatten().copied().collect::<Vec<_>>()),
                per_seed,
                n_infinite: files.iter().map(|f| f.n_infinite).sum(),
            }
        })
        .collect();

    let profiles: Vec<&AmplificationProfile> = runs.iter().filter_map(|r| r.amplification.as_ref()).collect();
    let amplification = profiles.first().map(|first| {
        let layer_stat = |get: fn(&AmplificationProfile) -> &Vec<f64>, l: usize| {
            Stat::of(&profiles.iter().map(|p| get(p)[l]).collect::<Vec<_>>())
        };
        AmplificationSummary {
            layers: first.layer_names.clone(),
            adversarial: (0..first.layer_names.len())
                .map(|l| layer_stat(|p| &p.mean_cosine_adv, l))
                .collect(),
            noisy: (0..first.layer_names.len())
                .map(|l| layer_stat(|p| &p.mean_cosine_noisy, l))
                .collect(),
        }
    });

    let pooled: Vec<EvalReport> = table_order(&tags)
        .iter()
        .filter_map(|t| pooled_report(runs, t))
        .collect();
    let table = per_modulation_table(&pooled.iter().collect::<Vec<_>>(), &class_names(), floor);
    Summary {
        seeds: runs.iter().map(|r| r.seed).collect(),
        systems,
        epsilon_l,
        amplification,
        modulation_table: TableSummary {
            schemes: table.schemes,
            columns: table.columns,
            cells: table
                .cells
                .iter()
                .map(|row| row.iter().map(|&v| finite(v)).collect())
                .collect(),
        },
    }
}

#[derive(Serialize)]
struct AccuracyLine<'a> {
    seed: u64,
    system: &'a str,
    attack: &'a str,
    pnr_db: Option<f64>,
    set: &'a str,
    scheme: &'a str,
    n: usize,
    correct: usize,
    rejected: usize,
    accuracy: Option<f64>,
}

fn attack_name(a: Option<AttackKind>) -> &'static str {
    match a {
        None => "none",
        Some(AttackKind::Fgm) => "fgm",
        Some(AttackKind::Jamming) => "jamming",
    }
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Config(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))
}

fn accuracy_lines(runs: &[SeedResults]) -> CliResult<Vec<u8>> {
    let names = class_names();
    let mut lines = Vec::new();
    for run in runs {
        for (tag, rep) in &run.evals {
            for row in &rep.rows {
                // (set, scheme) -> (n, correct, rejected)
                let mut counts: BTreeMap<(u8, usize), (usize, usize, usize)> = BTreeMap::new();
                for r in &row.records {
                    let set = match r.set {
                        EvalSet::One => 0,
                        EvalSet::Two => 1,
                    };
                    for key in [(set, r.label), (set, usize::MAX), (2, r.label), (2, usize::MAX)] {
                        let c = counts.entry(key).or_default();
                        c.0 += 1;
                        c.1 += r.correct as usize;
                        c.2 += r.verdict.is_reject() as usize;
                    }
                }
                for (&(set, scheme), &(n, correct, rejected)) in &counts {
                    lines.push(AccuracyLine {
                        seed: run.seed,
                        system: tag,
                        attack: attack_name(row.attack),
                        pnr_db: row.pnr_db,
                        set: ["I", "II", "all"][set as usize],
                        scheme: if scheme == usize::MAX { "all" } else { &names[scheme] },
                        n,
                        correct,
                        rejected,
                        accuracy: (n > 0).then(|| correct as f64 / n as f64),
                    });
                }
            }
        }
    }
    csv_bytes(lines)
}

#[derive(Serialize)]
struct ModulationLine<'a> {
    scheme: &'a str,
    system: &'a str,
    pnr_db: f64,
    accuracy: Option<f64>,
}

#[derive(Serialize)]
struct AmplificationLine<'a> {
    seed: u64,
    layer: &'a str,
    adversarial: f64,
    noisy: f64,
}

#[derive(Serialize)]
struct EpsilonLLine<'a> {
    seed: u64,
    system: &'a str,
    mean: Option<f64>,
    n_finite: usize,
    n_infinite: usize,
}

/// Writes the CSV tables and the JSON summary into `dir` and returns the
/// file names written.
pub fn write_report(runs: &[SeedResults], floor: f64, dir: &Path) -> CliResult<Vec<String>> {
    let summary = summarize(runs, floor);
    let table = &summary.modulation_table;
    let modulation = csv_bytes(table.schemes.iter().enumerate().flat_map(|(i, scheme)| {
        table
            .columns
            .iter()
            .enumerate()
            .map(move |(j, (system, pnr))| ModulationLine {
                scheme,
                system,
                pnr_db: *pnr,
                accuracy: table.cells[i][j],
            })
    }))?;
    let amplification = csv_bytes(runs.iter().flat_map(|run| {
        run.amplification.iter().flat_map(move |p| {
            p.layer_names
                .iter()
                .enumerate()
                .map(move |(l, layer)| AmplificationLine {
                    seed: run.seed,
                    layer,
                    adversarial: p.mean_cosine_adv[l],
                    noisy: p.mean_cosine_noisy[l],
                })
        })
    }))?;
    let epsilon_l = csv_bytes(runs.iter().flat_map(|run| {
        run.epsilon_l.iter().map(move |(tag, f)| EpsilonLLine {
            seed: run.seed,
            system: tag,
            mean: f.mean,
            n_finite: f.n_finite,
            n_infinite: f.n_infinite,
        })
    }))?;
    let files = [
        (ACCURACY_CSV, accuracy_lines(runs)?),
        (MODULATION_CSV, modulation),
        (AMPLIFICATION_CSV, amplification),
        (EPSILON_L_CSV, epsilon_l),
    ];
    let mut names = Vec::new();
    for (name, bytes) in files {
        write_atomic(&dir.join(name), None, |buf| {
            buf.extend_from_slice(&bytes);
            Ok(())
        })?;
        names.push(name.to_string());
    }
    write_json(&dir.join(SUMMARY_JSON), &summary)?;
    names.push(SUMMARY_JSON.to_string());
    Ok(names)
}
