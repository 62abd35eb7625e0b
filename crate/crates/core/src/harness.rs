//! Seeded sweeps over `n` grids and replicas, persistence, and fits.
//!
//! Replica `r` uses the environment keyed by `(master seed, r)` and the walk
//! stream `(master seed, Walk, r)`; one walk per replica is observed at every
//! `n` of the grid in increasing order. Output files are written in a fixed
//! order so that a repeated sweep reproduces them byte for byte (wall times
//! go to a separate `timings.jsonl`).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvironmentParams, EnvironmentStore, IncrementLaw, LawFamily, OffspringLaw};
use crate::range::{compute_range, normalized_statistic, FSpec, GSpec, Phi, RangeFunctional, Theorem};
use crate::rng::{mix64, purpose_seed, stream, Purpose};
use crate::stats::{ols, Accumulator, LineFit};
use crate::walk::{Walker, DEFAULT_STEP_BUDGET};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingRule {
    /// Observe after `n` steps.
    #[default]
    AtSteps,
    /// Observe at `T^n`, the `n`-th return to `e*`.
    AtExcursions,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default)]
    pub offspring: OffspringLaw,
    /// Calibrated to the boundary case; Gaussian when neither this nor
    /// `increment` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<LawFamily>,
    /// Explicit displacement law, used as is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment: Option<IncrementLaw>,
}

impl EnvironmentConfig {
    pub fn params(&self) -> Result<EnvironmentParams> {
        match (&self.family, &self.increment) {
            (Some(_), Some(_)) => Err(Error::Config(
                "give either environment.family or environment.increment, not both".into(),
            )),
            (_, Some(inc)) => EnvironmentParams::new(self.offspring.clone(), inc.clone()),
            (family, None) => EnvironmentParams::calibrated(
                family.as_ref().unwrap_or(&LawFamily::Gaussian),
                self.offspring.clone(),
            ),
        }
    }
}

/// One functional of a sweep. With `theorem` set, `g` and `f` default to the
/// theorem's functional and records carry the normalized statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<GSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<FSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<Theorem>,
}

impl FunctionalConfig {
    pub fn plain() -> Self {
        FunctionalConfig {
            name: None,
            g: Some(GSpec::indicator(0.0)),
            f: Some(FSpec::Constant),
            theorem: None,
        }
    }

    pub fn of_theorem(theorem: Theorem) -> Self {
        FunctionalConfig {
            name: None,
            g: None,
            f: None,
            theorem: Some(theorem),
        }
    }

    pub fn functional(&self) -> Result<RangeFunctional> {
        let base = self.theorem.map(|t| t.functional());
        let g = self.g.or(base.map(|b| b.g));
        let f = self.f.or(base.map(|b| b.f));
        let (Some(g), Some(f)) = (g, f) else {
            return Err(Error::Config("a functional needs g and f, or a theorem".into()));
        };
        if let Some(b) = base {
            if b.g != g || b.f != f {
                return Err(Error::Config(format!(
                    "functional ({g:?}, {f:?}) does not match {:?}",
                    self.theorem
                )));
            }
        }
        let fun = RangeFunctional { g, f };
        fun.validate()?;
        if let Some(t) = self.theorem {
            t.validate()?;
        }
        Ok(fun)
    }

    /// File-safe name, derived from the functional when not given.
    pub fn label(&self) -> Result<String> {
        let raw = match &self.name {
            Some(n) => n.clone(),
            None => {
                let fun = self.functional()?;
                let phi = match fun.g.phi {
                    Phi::One => "",
                    Phi::Identity => "_id",
                };
                format!("{}_g{}{phi}", fun.f.label(), fun.g.b)
            }
        };
        Ok(raw
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
            .collect())
    }
}

fn default_step_budget() -> u64 {
    DEFAULT_STEP_BUDGET
}

fn default_replications() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_replications")]
    pub replications: u32,
    pub n_grid: Vec<u64>,
    #[serde(default)]
    pub stopping: StoppingRule,
    #[serde(default = "default_step_budget")]
    pub step_budget: u64,
    /// Worker threads (all cores when absent). Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    pub functionals: Vec<FunctionalConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.n_grid.is_empty() || self.n_grid[0] < 2 {
            return Err(Error::Config("n_grid must be non-empty with n ≥ 2".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.stopping == StoppingRule::AtSteps && *self.n_grid.last().unwrap() > self.step_budget {
            return Err(Error::StepBudgetExceeded(self.step_budget));
        }
        if self.functionals.is_empty() {
            return Err(Error::Config("at least one functional is required".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        let mut names = std::collections::HashSet::new();
        for f in &self.functionals {
            if !names.insert(f.label()?) {
                return Err(Error::Config(format!("duplicate functional name {}", f.label()?)));
            }
        }
        self.environment.params()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, without `threads` and `out_dir`.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig {
            threads: None,
            out_dir: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub experiment_id: String,
    pub functional: String,
    pub n: u64,
    pub replica: u32,
    pub seed: u64,
    pub value: f64,
    #[serde(rename = "logPlus")]
    pub log_plus: f64,
    /// Present when the functional names a theorem.
    pub normalized_statistic: Option<f64>,
    pub vertex_count: u64,
    /// Steps taken when observed (`T^n` under the excursion rule).
    pub steps: u64,
    pub excursions: u64,
    pub max_depth_seen: u32,
    pub min_potential_seen: f64,
    pub config_hash: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaTiming {
    pub replica: u32,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: u64,
    #[serde(rename = "mean_logPlus")]
    pub mean_log_plus: f64,
    pub se: f64,
    pub normalized_mean: Option<f64>,
    pub normalized_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment_id: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub records: usize,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub records: Vec<EstimateRecord>,
    pub timings: Vec<ReplicaTiming>,
    pub summaries: BTreeMap<String, Vec<SummaryRow>>,
}

/// Environment seed of replica `r`.
pub fn environment_seed(master: u64, replica: u32) -> u64 {
    mix64(purpose_seed(master, Purpose::Environment) ^ u64::from(replica))
}

struct Prepared {
    params: EnvironmentParams,
    functionals: Vec<(String, RangeFunctional, Option<Theorem>)>,
    hash: String,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let functionals = config
        .functionals
        .iter()
        .map(|f| Ok((f.label()?, f.functional()?, f.theorem)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        params: config.environment.params()?,
        functionals,
        hash: config.hash(),
    })
}

fn run_replica(config: &ExperimentConfig, prep: &Prepared, replica: u32) -> Result<(Vec<EstimateRecord>, ReplicaTiming)> {
    let start = Instant::now();
    let store = EnvironmentStore::lazy(prep.params.clone(), environment_seed(config.master_seed, replica));
    let mut walker = Walker::new(store, stream(config.master_seed, Purpose::Walk, u64::from(replica)))
        .with_step_budget(config.step_budget);
    let mut out = Vec::with_capacity(config.n_grid.len() * prep.functionals.len());
    for &n in &config.n_grid {
        match config.stopping {
            StoppingRule::AtSteps => walker.run_until_steps(n)?,
            StoppingRule::AtExcursions => walker.run_until_excursions(n)?,
        }
        let state = *walker.state();
        let nf = n as f64;
        for (name, fun, theorem) in &prep.functionals {
            let r = compute_range(walker.ledger(), walker.store(), fun, nf);
            let normalized = theorem
                .map(|t| normalized_statistic(r.log_plus, &t, nf))
                .transpose()?;
            out.push(EstimateRecord {
                experiment_id: config.experiment_id.clone(),
                functional: name.clone(),
                n,
                replica,
                seed: config.master_seed,
                value: r.value,
                log_plus: r.log_plus,
                normalized_statistic: normalized,
                vertex_count: r.vertex_count,
                steps: state.steps,
                excursions: state.excursions,
                max_depth_seen: state.max_depth_seen,
                min_potential_seen: state.min_potential_seen,
                config_hash: prep.hash.clone(),
            });
        }
    }
    let timing = ReplicaTiming {
        replica,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((out, timing))
}

fn run_all(config: &ExperimentConfig, prep: &Prepared) -> Vec<Result<(Vec<EstimateRecord>, ReplicaTiming)>> {
    let replicas = 0..config.replications;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let job = || replicas.into_par_iter().map(|r| run_replica(config, prep, r)).collect();
        match config.threads {
            Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                Ok(pool) => pool.install(job),
                Err(_) => job(),
            },
            None => job(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    replicas.map(|r| run_replica(config, prep, r)).collect()
}

/// Per-functional summaries over the replicas at each `n`.
pub fn summarize(records: &[EstimateRecord]) -> BTreeMap<String, Vec<SummaryRow>> {
    let mut groups: BTreeMap<(String, u64), (Accumulator, Accumulator, bool)> = BTreeMap::new();
    for r in records {
        let e = groups
            .entry((r.functional.clone(), r.n))
            .or_insert((Accumulator::new(), Accumulator::new(), true));
        e.0.push(r.log_plus);
        match r.normalized_statistic {
            Some(s) => e.1.push(s),
            None => e.2 = false,
        }
    }
    let mut out: BTreeMap<String, Vec<SummaryRow>> = BTreeMap::new();
    for ((name, n), (lp, ns, has)) in groups {
        out.entry(name).or_default().push(SummaryRow {
            n,
            mean_log_plus: lp.mean,
            se: lp.std_error(),
            normalized_mean: has.then_some(ns.mean),
            normalized_se: has.then_some(ns.std_error()),
        });
    }
    out
}

fn sort_records(records: &mut [EstimateRecord], order: &[String]) {
    let rank = |name: &str| order.iter().position(|o| o == name).unwrap_or(usize::MAX);
    records.sort_by(|a, b| {
        (rank(&a.functional), a.n, a.replica).cmp(&(rank(&b.functional), b.n, b.replica))
    });
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write_records(path: &Path, records: &[EstimateRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<EstimateRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

fn write_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    hash: &str,
    result: &SweepResult,
    started: u64,
    complete: bool,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_records(&dir.join("records.jsonl"), &result.records)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("timings.jsonl"))?);
    for t in &result.timings {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    for (name, rows) in &result.summaries {
        let mut csv = csv::Writer::from_path(dir.join(format!("summary_{name}.csv")))?;
        for row in rows {
            csv.serialize(row)?;
        }
        csv.flush()?;
    }
    let manifest = Manifest {
        experiment_id: config.experiment_id.clone(),
        config_hash: hash.to_string(),
        master_seed: config.master_seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        records: result.records.len(),
        complete,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

/// Runs the sweep in memory.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    let prep = prepare(config)?;
    let (result, first_error) = collect(config, &prep);
    match first_error {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

fn collect(config: &ExperimentConfig, prep: &Prepared) -> (SweepResult, Option<Error>) {
    let order: Vec<String> = prep.functionals.iter().map(|f| f.0.clone()).collect();
    let mut records = Vec::new();
    let mut timings = Vec::new();
    let mut first_error = None;
    for r in run_all(config, prep) {
        match r {
            Ok((recs, t)) => {
                records.extend(recs);
                timings.push(t);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    sort_records(&mut records, &order);
    timings.sort_by_key(|t| t.replica);
    let summaries = summarize(&records);
    (
        SweepResult {
            records,
            timings,
            summaries,
        },
        first_error,
    )
}

/// Runs the sweep and writes `records.jsonl`, `summary_<functional>.csv`,
/// `timings.jsonl` and `manifest.json` to `dir`. Completed replicas are
/// written even when another replica fails; the error is returned afterwards.
pub fn run_sweep_to(config: &ExperimentConfig, dir: &Path) -> Result<SweepResult> {
    let started = unix_now();
    let prep = prepare(config)?;
    let (result, first_error) = collect(config, &prep);
    write_outputs(dir, config, &prep.hash, &result, started, first_error.is_none())?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

fn check_single_config(records: &[EstimateRecord]) -> Result<()> {
    if let Some(first) = records.first() {
        if let Some(other) = records.iter().find(|r| r.config_hash != first.config_hash) {
            return Err(Error::ConfigMismatch(format!(
                "{} and {}",
                first.config_hash, other.config_hash
            )));
        }
    }
    Ok(())
}

/// Least squares of the per-`n` mean of `log⁺ R` on `ln n` for one
/// functional.
pub fn fit_slope(records: &[EstimateRecord], functional: &str) -> Result<LineFit> {
    check_single_config(records)?;
    let mut by_n: BTreeMap<u64, Accumulator> = BTreeMap::new();
    for r in records.iter().filter(|r| r.functional == functional) {
        by_n.entry(r.n).or_default().push(r.log_plus);
    }
    if by_n.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} distinct n for {functional}, need 3",
            by_n.len()
        )));
    }
    let x: Vec<f64> = by_n.keys().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = by_n.values().map(|a| a.mean).collect();
    ols(&x, &y)
}

/// Normalized statistic of one record under `theorem`.
pub fn record_statistic(record: &EstimateRecord, theorem: &Theorem) -> Result<f64> {
    normalized_statistic(record.log_plus, theorem, record.n as f64)
}

/// Records of one functional at one `n`, ordered by replica.
pub fn select<'a>(records: &'a [EstimateRecord], functional: &str, n: u64) -> Vec<&'a EstimateRecord> {
    let mut v: Vec<_> = records
        .iter()
        .filter(|r| r.functional == functional && r.n == n)
        .collect();
    v.sort_by_key(|r| r.replica);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            experiment_id: "t".into(),
            master_seed: 5,
            replications: 3,
            n_grid: vec![64, 128, 256],
            stopping: StoppingRule::AtSteps,
            step_budget: DEFAULT_STEP_BUDGET,
            threads: None,
            out_dir: None,
            environment: EnvironmentConfig::default(),
            functionals: vec![
                FunctionalConfig::plain(),
                FunctionalConfig::of_theorem(Theorem::T1 { alpha: 1.2, b: 0.0 }),
            ],
        }
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
experiment_id = "demo"
master_seed = 9
replications = 2
n_grid = [100, 200, 400]
stopping = "at_excursions"

[environment]
offspring = { kind = "deterministic", m = 3 }
family = { family = "two_point", gap = 3.0 }

[[functionals]]
g = { b = 0.0 }
f = { family = "constant" }

[[functionals]]
name = "thm1"
theorem = { theorem = "t1", alpha = 1.3, b = 0.2 }
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.stopping, StoppingRule::AtExcursions);
        assert_eq!(c.functionals[1].label().unwrap(), "thm1");
        assert_eq!(c.functionals[0].label().unwrap(), "constant_g0");
        assert!(c.environment.params().unwrap().is_boundary_case());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("experiment_id = \"x\"\nn_grid = [2]\nfunctionals = []\nbogus = 1").is_err());
    }

    #[test]
    fn grid_must_increase() {
        let mut c = small();
        c.n_grid = vec![10, 10, 20];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn one_record_for_single_point() {
        let mut c = small();
        c.replications = 1;
        c.n_grid = vec![100];
        c.functionals = vec![FunctionalConfig::plain()];
        assert_eq!(run_sweep(&c).unwrap().records.len(), 1);
    }

    #[test]
    fn cardinality_and_order() {
        let r = run_sweep(&small()).unwrap();
        assert_eq!(r.records.len(), 3 * 3 * 2);
        assert_eq!(r.records[0].functional, "constant_g0");
        assert!(r.records[..9].iter().all(|x| x.normalized_statistic.is_none()));
        assert!(r.records[9..].iter().all(|x| x.normalized_statistic.is_some()));
        assert_eq!(r.summaries["constant_g0"].len(), 3);
    }

    #[test]
    fn thread_count_does_not_change_records() {
        let mut one = small();
        one.threads = Some(1);
        let mut four = small();
        four.threads = Some(4);
        assert_eq!(one.hash(), four.hash());
        assert_eq!(run_sweep(&one).unwrap().records, run_sweep(&four).unwrap().records);
    }

    #[test]
    fn excursion_rule_records_returns() {
        let mut c = small();
        c.stopping = StoppingRule::AtExcursions;
        c.n_grid = vec![3, 6, 9];
        let r = run_sweep(&c).unwrap();
        for rec in &r.records {
            assert_eq!(rec.excursions, rec.n);
        }
    }

    #[test]
    fn fit_recovers_exact_line() {
        let mk = |n: u64, y: f64| EstimateRecord {
            experiment_id: "s".into(),
            functional: "f".into(),
            n,
            replica: 0,
            seed: 0,
            value: y.exp(),
            log_plus: y,
            normalized_statistic: None,
            vertex_count: 0,
            steps: n,
            excursions: 0,
            max_depth_seen: 0,
            min_potential_seen: 0.0,
            config_hash: "h".into(),
        };
        let recs: Vec<_> = [10u64, 100, 1000, 10000]
            .iter()
            .map(|&n| mk(n, 2.0 * (n as f64).ln()))
            .collect();
        let fit = fit_slope(&recs, "f").unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12 && fit.stderr < 1e-10);
        let mut mixed = recs.clone();
        mixed[1].config_hash = "other".into();
        assert!(matches!(fit_slope(&mixed, "f"), Err(Error::ConfigMismatch(_))));
        assert!(matches!(fit_slope(&recs[..2], "f"), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn outputs_are_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_sweep_to(&small(), a.path()).unwrap();
        run_sweep_to(&small(), b.path()).unwrap();
        for f in ["records.jsonl", "summary_constant_g0.csv"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
        let back = read_records(&a.path().join("records.jsonl")).unwrap();
        assert_eq!(back, run_sweep(&small()).unwrap().records);
    }

    #[test]
    fn partial_results_are_flushed() {
        let mut c = small();
        c.stopping = StoppingRule::AtExcursions;
        c.n_grid = vec![2, 1_000_000];
        c.step_budget = 5_000;
        let dir = tempfile::tempdir().unwrap();
        let err = run_sweep_to(&c, dir.path()).unwrap_err();
        assert!(matches!(err, Error::StepBudgetExceeded(5_000)));
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert!(!manifest.complete);
    }
}
