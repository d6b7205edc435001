//! Experiment configurations, table and sweep runners, and CSV output.
//!
//! This is the only place where times are converted to days for display;
//! every other module works in seconds.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{analytic_policy, closed_form_waste};
use crate::engine::{SimResult, SimSetup, Summary, TraceSet};
use crate::model::{
    ExpectedFaultOffset, Platform, PolicyConfig, Predictor, Strategy, SECONDS_PER_DAY,
    SECONDS_PER_YEAR,
};
use crate::search::{best_period, geometric_grid, search_policy, SearchSpec};
use crate::tracegen::{DistKind, FalsePredictionLaw, FaultModel, TraceConfig};
use crate::{Error, Result};

/// Proactive checkpoint cost relative to the regular one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CpMode {
    /// Cp = C.
    #[default]
    Eq,
    /// Cp = 0.1 C.
    Tenth,
    /// Cp = 2 C.
    Double,
}

impl CpMode {
    pub fn factor(self) -> f64 {
        match self {
            CpMode::Eq => 1.0,
            CpMode::Tenth => 0.1,
            CpMode::Double => 2.0,
        }
    }
}

impl fmt::Display for CpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CpMode::Eq => "eq",
            CpMode::Tenth => "0.1",
            CpMode::Double => "2",
        })
    }
}

impl FromStr for CpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "eq" | "1" => Ok(CpMode::Eq),
            "0.1" => Ok(CpMode::Tenth),
            "2" => Ok(CpMode::Double),
            _ => Err(Error::Config(format!(
                "unknown Cp mode `{s}` (expected eq, 0.1 or 2)"
            ))),
        }
    }
}

/// Named predictor presets, or explicit precision/recall written `p=..,r=..`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PredictorPreset {
    /// p = 0.82, r = 0.85.
    Accurate,
    /// p = 0.4, r = 0.7.
    Weak,
    Custom {
        precision: f64,
        recall: f64,
    },
}

impl PredictorPreset {
    pub fn precision_recall(self) -> (f64, f64) {
        match self {
            PredictorPreset::Accurate => (0.82, 0.85),
            PredictorPreset::Weak => (0.4, 0.7),
            PredictorPreset::Custom { precision, recall } => (precision, recall),
        }
    }

    pub fn with_window(self, window: f64) -> Result<Predictor> {
        let (p, r) = self.precision_recall();
        Predictor::new(p, r, window)
    }
}

impl fmt::Display for PredictorPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictorPreset::Accurate => f.write_str("accurate"),
            PredictorPreset::Weak => f.write_str("weak"),
            PredictorPreset::Custom { precision, recall } => {
                write!(f, "p={precision},r={recall}")
            }
        }
    }
}

impl FromStr for PredictorPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "accurate" => return Ok(PredictorPreset::Accurate),
            "weak" => return Ok(PredictorPreset::Weak),
            _ => {}
        }
        let bad = || {
            Error::Config(format!(
                "unknown predictor `{s}` (accurate, weak or p=..,r=..)"
            ))
        };
        let (mut precision, mut recall) = (None, None);
        for part in s.split(',') {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            let value: f64 = value.trim().parse().map_err(|_| bad())?;
            match key.trim() {
                "p" => precision = Some(value),
                "r" => recall = Some(value),
                _ => return Err(bad()),
            }
        }
        let (precision, recall) = precision.zip(recall).ok_or_else(bad)?;
        Predictor::new(precision, recall, 1.0)?;
        Ok(PredictorPreset::Custom { precision, recall })
    }
}

macro_rules! string_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(
                &self,
                s: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(
                d: D,
            ) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(CpMode);
string_serde!(PredictorPreset);

/// Parameter swept by [`run_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Number of components N.
    NProcs,
    /// Regular period T_R.
    TRegular,
    /// Prediction window I.
    IWindow,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NProcs => "n",
            SweepAxis::TRegular => "tr",
            SweepAxis::IWindow => "i",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepAxis::NProcs),
            "tr" => Ok(SweepAxis::TRegular),
            "i" => Ok(SweepAxis::IWindow),
            _ => Err(Error::Config(format!(
                "unknown sweep axis `{s}` (n, tr or i)"
            ))),
        }
    }
}

/// A batch of experiments. Serialized as a flat JSON object; missing fields
/// take the values of [`preset_paper_defaults`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Individual component MTBF, in years.
    pub mu_ind_years: f64,
    pub c_regular: f64,
    pub downtime: f64,
    pub recovery: f64,
    pub cp_mode: CpMode,
    pub predictors: Vec<PredictorPreset>,
    pub dist: DistKind,
    pub false_predictions: FalsePredictionLaw,
    /// Age of the components when the job starts. `None` draws platform
    /// faults from a single renewal process of mean μ instead of superposing
    /// per-component processes.
    pub burn_in_years: Option<f64>,
    /// Prediction windows I, in seconds.
    pub windows: Vec<f64>,
    pub n_procs: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub n_reps: usize,
    pub base_seed: u64,
    /// Total work in component-years: t_base = work_years / N.
    pub work_years: f64,
    /// Values of T_R for the `tr` sweep; empty means a default geometric grid.
    pub t_regular: Vec<f64>,
    /// Also run the BestPeriod search for every row.
    pub best_period: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        preset_paper_defaults()
    }
}

/// Reference settings: C = R = 600 s, D = 60 s, Cp = C, μ_ind = 125 years,
/// N from 2^16 to 2^19, t_base = 10000 years / N, five prediction windows,
/// Weibull faults of shape 0.7 on one-year-old components, 100 replications.
pub fn preset_paper_defaults() -> ExperimentConfig {
    ExperimentConfig {
        mu_ind_years: 125.0,
        c_regular: 600.0,
        downtime: 60.0,
        recovery: 600.0,
        cp_mode: CpMode::Eq,
        predictors: vec![PredictorPreset::Accurate],
        dist: DistKind::Weibull { shape: 0.7 },
        false_predictions: FalsePredictionLaw::Same,
        burn_in_years: Some(1.0),
        windows: vec![300.0, 600.0, 900.0, 1200.0, 3000.0],
        n_procs: vec![1 << 16, 1 << 17, 1 << 18, 1 << 19],
        strategies: Strategy::ALL.to_vec(),
        n_reps: 100,
        base_seed: 0,
        work_years: 10_000.0,
        t_regular: Vec::new(),
        best_period: false,
        output: None,
    }
}

/// The grid of the published makespan tables: N ∈ {2^16, 2^19},
/// I ∈ {300, 1200, 3000} s, both predictors, Weibull faults of `shape`.
pub fn preset_table(shape: f64) -> ExperimentConfig {
    ExperimentConfig {
        predictors: vec![PredictorPreset::Accurate, PredictorPreset::Weak],
        dist: DistKind::Weibull { shape },
        windows: vec![300.0, 1200.0, 3000.0],
        n_procs: vec![1 << 16, 1 << 19],
        ..preset_paper_defaults()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// JSON of everything that affects results (the output path does not).
    pub fn canonical_json(&self) -> String {
        ExperimentConfig {
            output: None,
            ..self.clone()
        }
        .to_json()
    }

    /// Short stable hash of the configuration, ignoring the output path.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::Config(format!("`{what}` must not be empty")));
        if self.predictors.is_empty() {
            return empty("predictors");
        }
        if self.windows.is_empty() {
            return empty("windows");
        }
        if self.n_procs.is_empty() {
            return empty("n_procs");
        }
        if self.strategies.is_empty() {
            return empty("strategies");
        }
        if self.n_reps == 0 {
            return Err(Error::invalid("n_reps", 0.0, "must be at least 1"));
        }
        if !(self.work_years > 0.0 && self.work_years.is_finite()) {
            return Err(Error::invalid(
                "work_years",
                self.work_years,
                "must be finite and > 0",
            ));
        }
        if let Some(b) = self.burn_in_years {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::invalid(
                    "burn_in_years",
                    b,
                    "must be finite and >= 0",
                ));
            }
        }
        for &n in &self.n_procs {
            self.platform(n)?;
        }
        for preset in &self.predictors {
            for &window in &self.windows {
                preset.with_window(window)?;
            }
        }
        Ok(())
    }

    pub fn c_proactive(&self) -> f64 {
        self.c_regular * self.cp_mode.factor()
    }

    pub fn platform(&self, n_procs: u64) -> Result<Platform> {
        Platform::new(
            n_procs,
            self.mu_ind_years * SECONDS_PER_YEAR,
            self.c_regular,
            self.c_proactive(),
            self.downtime,
            self.recovery,
        )
    }

    /// Fault-free execution time for N components, in seconds.
    pub fn t_base(&self, n_procs: u64) -> f64 {
        self.work_years * SECONDS_PER_YEAR / n_procs as f64
    }

    pub fn fault_model(&self) -> FaultModel {
        match self.burn_in_years {
            Some(burn_in_years) => FaultModel::PerComponent { burn_in_years },
            None => FaultModel::Platform,
        }
    }

    pub fn setup(&self, n_procs: u64, predictor: PredictorPreset, window: f64) -> Result<SimSetup> {
        Ok(SimSetup {
            trace: TraceConfig {
                platform: self.platform(n_procs)?,
                predictor: predictor.with_window(window)?,
                faults: self.dist,
                false_predictions: self.false_predictions,
                fault_model: self.fault_model(),
            },
            t_base: self.t_base(n_procs),
        })
    }

    /// Whether this configuration is the one the published tables used, so
    /// that their values are meaningful references.
    fn matches_published_setup(&self) -> bool {
        self.mu_ind_years == 125.0
            && self.c_regular == 600.0
            && self.recovery == 600.0
            && self.downtime == 60.0
            && self.cp_mode == CpMode::Eq
            && self.work_years == 10_000.0
    }
}

/// Published mean makespans, in days, for the Weibull tables. Daly and RFO
/// do not depend on the predictor or the window.
pub fn published_reference(
    shape: f64,
    predictor: PredictorPreset,
    strategy: Strategy,
    n_procs: u64,
    window: f64,
) -> Option<f64> {
    let col = match (n_procs, window as u64) {
        (65_536, 300) => 0,
        (524_288, 300) => 1,
        (65_536, 1200) => 2,
        (524_288, 1200) => 3,
        (65_536, 3000) => 4,
        (524_288, 3000) => 5,
        _ => return None,
    };
    if window.fract() != 0.0 {
        return None;
    }
    let (p, r) = predictor.precision_recall();
    let which = if (p, r) == (0.82, 0.85) {
        0
    } else if (p, r) == (0.4, 0.7) {
        1
    } else {
        2
    };
    let row: [f64; 6] = match (shape, strategy, which) {
        (0.7, Strategy::Daly, _) => [81.3, 31.0, 81.3, 31.0, 81.3, 31.0],
        (0.7, Strategy::Rfo, _) => [80.2, 25.5, 80.2, 25.5, 80.2, 25.5],
        (0.7, Strategy::NoCkptI, 0) => [66.4, 17.0, 67.9, 20.2, 71.0, 24.7],
        (0.7, Strategy::WithCkptI, 0) => [66.4, 17.0, 68.3, 20.6, 70.6, 23.1],
        (0.7, Strategy::Instant, 0) => [66.5, 17.0, 68.0, 20.3, 70.9, 24.1],
        (0.7, Strategy::NoCkptI, 1) => [70.2, 20.6, 71.8, 24.2, 75.0, 28.7],
        (0.7, Strategy::WithCkptI, 1) => [70.2, 20.6, 73.6, 25.5, 75.1, 26.6],
        (0.7, Strategy::Instant, 1) => [70.3, 20.9, 72.0, 24.6, 75.0, 27.7],
        (0.5, Strategy::Daly, _) => [125.7, 185.0, 125.7, 185.0, 125.7, 185.0],
        (0.5, Strategy::Rfo, _) => [120.1, 114.8, 120.1, 114.8, 120.1, 114.8],
        (0.5, Strategy::NoCkptI, 0) => [77.4, 44.9, 81.8, 60.7, 90.0, 71.5],
        (0.5, Strategy::WithCkptI, 0) => [77.4, 44.9, 83.6, 64.4, 89.8, 66.2],
        (0.5, Strategy::Instant, 0) => [77.4, 45.2, 82.0, 60.8, 89.7, 70.6],
        (0.5, Strategy::NoCkptI, 1) => [84.4, 58.3, 89.1, 76.8, 97.9, 83.7],
        (0.5, Strategy::WithCkptI, 1) => [84.4, 58.3, 93.8, 75.4, 97.8, 77.7],
        (0.5, Strategy::Instant, 1) => [84.5, 59.6, 89.4, 76.64, 97.7, 81.9],
        _ => return None,
    };
    Some(row[col])
}

/// One row of a result table. Absent values are empty cells, never
/// substitutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// `table`, `sweep-n`, `sweep-tr` or `sweep-i`.
    pub experiment: String,
    pub strategy: Strategy,
    pub dist: DistKind,
    pub n_procs: u64,
    pub mtbf_s: f64,
    pub window_s: f64,
    pub cp_s: f64,
    pub precision: f64,
    pub recall: f64,
    pub trust_prob: f64,
    pub t_base_s: f64,
    pub t_base_days: f64,
    pub t_regular_s: Option<f64>,
    pub t_proactive_s: Option<f64>,
    pub t_regular_clamped: bool,
    pub t_proactive_clamped: bool,
    pub analytic_waste: Option<f64>,
    pub sim_waste: Option<f64>,
    pub sim_waste_stderr: Option<f64>,
    pub makespan_s: Option<f64>,
    pub makespan_days: Option<f64>,
    pub makespan_stderr_days: Option<f64>,
    /// `(makespan_Daly − makespan) / makespan_Daly` in percent, on the same
    /// traces.
    pub gain_vs_daly_pct: Option<f64>,
    pub best_t_regular_s: Option<f64>,
    pub best_waste: Option<f64>,
    pub published_days: Option<f64>,
    pub published_abs_diff_days: Option<f64>,
    pub n_reps: usize,
    pub base_seed: u64,
    pub config_hash: String,
    /// BestPeriod grid layout, recorded so the search is auditable.
    pub search: String,
    /// `ok`, or why the row has no simulation.
    pub status: String,
}

fn describe_search(spec: &SearchSpec) -> String {
    format!(
        "geom[{}..{}]x{}+{}x{}/{}",
        spec.t_r_range.0,
        spec.t_r_range.1,
        spec.n_grid,
        spec.refinement_rounds,
        spec.refine_points,
        spec.n_traces
    )
}

fn status_of(error: &Error) -> String {
    match error {
        Error::StrategyInapplicable { reason, .. } => format!("inapplicable: {reason}"),
        Error::ModelValidity { what, value } => format!("model-validity: {what} = {value}"),
        Error::Diverged { .. } => format!("diverged: {error}"),
        other => format!("error: {other}"),
    }
}

/// Everything shared by the rows of one (N, predictor, window) cell.
struct Cell<'a> {
    config: &'a ExperimentConfig,
    experiment: &'a str,
    setup: SimSetup,
    preset: PredictorPreset,
    hash: String,
}

impl Cell<'_> {
    fn blank_row(&self, strategy: Strategy) -> ResultRow {
        let platform = &self.setup.trace.platform;
        let predictor = &self.setup.trace.predictor;
        let n_procs = platform.n_procs;
        let window = predictor.window;
        let published_days = match self.config.dist {
            DistKind::Weibull { shape } if self.config.matches_published_setup() => {
                published_reference(shape, self.preset, strategy, n_procs, window)
            }
            _ => None,
        };
        ResultRow {
            experiment: self.experiment.to_owned(),
            strategy,
            dist: self.config.dist,
            n_procs,
            mtbf_s: platform.mtbf(),
            window_s: window,
            cp_s: platform.c_proactive,
            precision: predictor.precision,
            recall: predictor.recall,
            trust_prob: if strategy.uses_predictions() {
                1.0
            } else {
                0.0
            },
            t_base_s: self.setup.t_base,
            t_base_days: self.setup.t_base / SECONDS_PER_DAY,
            t_regular_s: None,
            t_proactive_s: None,
            t_regular_clamped: false,
            t_proactive_clamped: false,
            analytic_waste: None,
            sim_waste: None,
            sim_waste_stderr: None,
            makespan_s: None,
            makespan_days: None,
            makespan_stderr_days: None,
            gain_vs_daly_pct: None,
            best_t_regular_s: None,
            best_waste: None,
            published_days,
            published_abs_diff_days: None,
            n_reps: self.config.n_reps,
            base_seed: self.config.base_seed,
            config_hash: self.hash.clone(),
            search: String::new(),
            status: "ok".to_owned(),
        }
    }

    /// Fill the simulation columns of `row` from `results`.
    fn record(&self, row: &mut ResultRow, policy: &PolicyConfig, results: &[SimResult]) {
        let platform = &self.setup.trace.platform;
        let predictor = &self.setup.trace.predictor;
        let e_fault = ExpectedFaultOffset::midpoint(predictor);
        row.t_regular_s = Some(policy.t_regular);
        if policy.strategy == Strategy::WithCkptI {
            row.t_proactive_s = Some(policy.t_proactive);
        }
        row.trust_prob = policy.trust_prob;
        row.analytic_waste = closed_form_waste(
            policy.strategy,
            policy.t_regular,
            policy.t_proactive,
            platform,
            predictor,
            e_fault,
        )
        .ok()
        .map(|b| b.waste);
        let makespans: Vec<f64> = results.iter().map(|r| r.makespan).collect();
        let wastes: Vec<f64> = results.iter().map(|r| r.waste).collect();
        let makespan = Summary::of(&makespans);
        let waste = Summary::of(&wastes);
        row.sim_waste = Some(waste.mean);
        row.sim_waste_stderr = Some(waste.stderr);
        row.makespan_s = Some(makespan.mean);
        row.makespan_days = Some(makespan.mean / SECONDS_PER_DAY);
        row.makespan_stderr_days = Some(makespan.stderr / SECONDS_PER_DAY);
        row.published_abs_diff_days = row
            .published_days
            .map(|reference| (makespan.mean / SECONDS_PER_DAY - reference).abs());
    }

    fn search(&self, row: &mut ResultRow, traces: &TraceSet) {
        let platform = &self.setup.trace.platform;
        let spec = SearchSpec::default_for(platform, self.setup.t_base);
        row.search = describe_search(&spec);
        let subset = traces.truncated(spec.n_traces);
        let predictor = &self.setup.trace.predictor;
        let e_fault = ExpectedFaultOffset::midpoint(predictor);
        let outcome = best_period(row.strategy, &subset, &spec).and_then(|out| {
            let policy = search_policy(row.strategy, out.t_r_star, platform, predictor, e_fault)?;
            Ok((out.t_r_star, traces.stats(&policy)?.waste.mean))
        });
        match outcome {
            Ok((t, w)) => {
                row.best_t_regular_s = Some(t);
                row.best_waste = Some(w);
            }
            Err(e) => row.search = format!("{} ({})", row.search, status_of(&e)),
        }
    }
}

fn policy_for(
    strategy: Strategy,
    t_regular: Option<f64>,
    setup: &SimSetup,
) -> Result<(PolicyConfig, bool, bool)> {
    let platform = &setup.trace.platform;
    let predictor = &setup.trace.predictor;
    let e_fault = ExpectedFaultOffset::midpoint(predictor);
    let (policy, reg_clamped, pro_clamped) = match t_regular {
        Some(t) => (
            search_policy(strategy, t, platform, predictor, e_fault)?,
            false,
            false,
        ),
        None => analytic_policy(strategy, platform, predictor, e_fault)?,
    };
    policy.validate(platform, predictor)?;
    Ok((policy, reg_clamped, pro_clamped))
}

/// Simulate every strategy of the configuration in one cell. With
/// `t_regular`, strategies run at that period instead of their analytic one.
fn run_cell(cell: &Cell<'_>, t_regular: Option<f64>, gains: bool) -> Result<Vec<ResultRow>> {
    let config = cell.config;
    let traces = TraceSet::new(cell.setup, config.base_seed, config.n_reps)?;
    let daly = if gains {
        policy_for(Strategy::Daly, None, &cell.setup)
            .ok()
            .and_then(|(policy, _, _)| traces.run(&policy).ok())
    } else {
        None
    };
    let mut rows = Vec::with_capacity(config.strategies.len());
    for &strategy in &config.strategies {
        let mut row = cell.blank_row(strategy);
        row.t_regular_s = t_regular;
        match policy_for(strategy, t_regular, &cell.setup) {
            Ok((policy, reg_clamped, pro_clamped)) => {
                row.t_regular_clamped = reg_clamped;
                row.t_proactive_clamped = pro_clamped;
                let run = if strategy == Strategy::Daly && t_regular.is_none() {
                    daly.clone().map_or_else(|| traces.run(&policy), Ok)
                } else {
                    traces.run(&policy)
                };
                let results = match run {
                    Ok(results) => results,
                    Err(e) if e.is_model_validity() => {
                        row.status = status_of(&e);
                        rows.push(row);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                cell.record(&mut row, &policy, &results);
                if let Some(daly) = &daly {
                    let reference: f64 = daly.iter().map(|r| r.makespan).sum();
                    let ours: f64 = results.iter().map(|r| r.makespan).sum();
                    row.gain_vs_daly_pct = Some(100.0 * (reference - ours) / reference);
                }
                if config.best_period && t_regular.is_none() {
                    cell.search(&mut row, &traces);
                }
            }
            Err(e) if e.is_model_validity() => row.status = status_of(&e),
            Err(e) => return Err(e),
        }
        rows.push(row);
    }
    Ok(rows)
}

fn sort_rows(rows: &mut [ResultRow]) {
    // Only `tr` sweeps are keyed by period; elsewhere T_R is an output.
    let period = |r: &ResultRow| match r.experiment.as_str() {
        "sweep-tr" => r.t_regular_s.unwrap_or(0.0),
        _ => 0.0,
    };
    rows.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.n_procs.cmp(&b.n_procs))
            .then(b.precision.total_cmp(&a.precision))
            .then(b.recall.total_cmp(&a.recall))
            .then(a.window_s.total_cmp(&b.window_s))
            .then(period(a).total_cmp(&period(b)))
            .then(a.strategy.cmp(&b.strategy))
    });
}

fn cells(config: &ExperimentConfig) -> Vec<(u64, PredictorPreset, f64)> {
    let mut out = Vec::new();
    for &n in &config.n_procs {
        for &preset in &config.predictors {
            for &window in &config.windows {
                out.push((n, preset, window));
            }
        }
    }
    out
}

/// Simulate every (N, predictor, window, strategy) combination at the
/// analytic periods, with gains relative to Daly on the same traces.
pub fn run_table(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let hash = config.hash();
    let mut rows = Vec::new();
    for (n, preset, window) in cells(config) {
        let cell = Cell {
            config,
            experiment: "table",
            setup: config.setup(n, preset, window)?,
            preset,
            hash: hash.clone(),
        };
        rows.extend(run_cell(&cell, None, true)?);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Waste along one axis. For `n` and `i` every strategy runs at its analytic
/// periods; for `tr` every strategy runs at each listed T_R (WithCkptI keeps
/// its analytic T_P). Cells outside the model's validity region are
/// reported through the status column.
pub fn run_sweep(config: &ExperimentConfig, axis: SweepAxis) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let hash = config.hash();
    let experiment = format!("sweep-{}", axis.name());
    let mut rows = Vec::new();
    for (n, preset, window) in cells(config) {
        let cell = Cell {
            config,
            experiment: &experiment,
            setup: config.setup(n, preset, window)?,
            preset,
            hash: hash.clone(),
        };
        match axis {
            SweepAxis::NProcs | SweepAxis::IWindow => rows.extend(run_cell(&cell, None, true)?),
            SweepAxis::TRegular => {
                let values = if config.t_regular.is_empty() {
                    let spec =
                        SearchSpec::default_for(&cell.setup.trace.platform, cell.setup.t_base);
                    geometric_grid(spec.t_r_range.0, spec.t_r_range.1, 24)
                } else {
                    config.t_regular.clone()
                };
                for t in values {
                    rows.extend(run_cell(&cell, Some(t), false)?);
                }
            }
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Comment lines echoing the configuration and unit conventions.
pub fn csv_header_comments(config: &ExperimentConfig) -> Vec<String> {
    vec![
        "ckptwin results".to_owned(),
        "units: seconds unless suffixed; 1 day = 86400 s; 1 year = 365.25 days".to_owned(),
        format!("config_hash: {}", config.hash()),
        format!("config: {}", config.canonical_json()),
    ]
}

/// Write `rows` as CSV, preceded by `# `-prefixed `comments`.
pub fn write_csv<W: Write>(rows: &[ResultRow], comments: &[String], mut out: W) -> csv::Result<()> {
    for line in comments {
        writeln!(out, "# {line}")?;
    }
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    writer.write_record(csv_columns())?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Column names of [`ResultRow`], in order.
pub fn csv_columns() -> Vec<&'static str> {
    vec![
        "experiment",
        "strategy",
        "dist",
        "n_procs",
        "mtbf_s",
        "window_s",
        "cp_s",
        "precision",
        "recall",
        "trust_prob",
        "t_base_s",
        "t_base_days",
        "t_regular_s",
        "t_proactive_s",
        "t_regular_clamped",
        "t_proactive_clamped",
        "analytic_waste",
        "sim_waste",
        "sim_waste_stderr",
        "makespan_s",
        "makespan_days",
        "makespan_stderr_days",
        "gain_vs_daly_pct",
        "best_t_regular_s",
        "best_waste",
        "published_days",
        "published_abs_diff_days",
        "n_reps",
        "base_seed",
        "config_hash",
        "search",
        "status",
    ]
}

pub fn to_csv_string(rows: &[ResultRow], comments: &[String]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, comments, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

/// Write rows to `path` with the configuration echoed as comments.
pub fn emit_csv(rows: &[ResultRow], config: &ExperimentConfig, path: &Path) -> Result<()> {
    let text = to_csv_string(rows, &csv_header_comments(config));
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

/// Parse CSV produced by [`write_csv`], skipping comment lines.
pub fn parse_csv(text: &str) -> csv::Result<Vec<ResultRow>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_csv(&text).map_err(|source| Error::Csv {
        path: path.to_owned(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;
    use proptest::prelude::*;

    fn small(dist: DistKind) -> ExperimentConfig {
        ExperimentConfig {
            dist,
            burn_in_years: None,
            windows: vec![300.0],
            n_procs: vec![1 << 16],
            n_reps: 4,
            ..preset_paper_defaults()
        }
    }

    #[test]
    fn defaults_expand_to_reference_values() {
        let c = preset_paper_defaults();
        let mu = c.platform(1 << 16).unwrap().mtbf();
        assert!((mu / 60.0 - 1003.19).abs() < 0.01);
        assert!((c.platform(1 << 14).unwrap().mtbf() / 60.0 - 4012.76).abs() < 0.01);
        let t_base = c.t_base(1 << 19);
        assert!((t_base - 10_000.0 * 365.25 * 86_400.0 / 524_288.0).abs() < 1e-6);
        assert!((t_base / SECONDS_PER_DAY - 6.967).abs() < 1e-3);
        let tenth = ExperimentConfig {
            cp_mode: CpMode::Tenth,
            ..c.clone()
        };
        assert!((tenth.c_proactive() - 60.0).abs() < 1e-12);
        assert_eq!(c.windows, [300.0, 600.0, 900.0, 1200.0, 3000.0]);
        assert_eq!(c.n_reps, 100);
    }

    #[test]
    fn presets_parse_and_print() {
        for s in ["accurate", "weak", "p=0.9,r=0.5"] {
            assert_eq!(s.parse::<PredictorPreset>().unwrap().to_string(), s);
        }
        assert!("p=0.9".parse::<PredictorPreset>().is_err());
        assert!("p=1.5,r=0.5".parse::<PredictorPreset>().is_err());
        for s in ["eq", "0.1", "2"] {
            assert_eq!(s.parse::<CpMode>().unwrap().to_string(), s);
        }
        assert!("3".parse::<CpMode>().is_err());
        assert_eq!("tr".parse::<SweepAxis>().unwrap(), SweepAxis::TRegular);
    }

    #[test]
    fn config_json_is_flat_and_round_trips() {
        let c = preset_table(0.5);
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let partial =
            ExperimentConfig::from_json(r#"{"n_reps": 7, "predictors": ["weak"]}"#).unwrap();
        assert_eq!(partial.n_reps, 7);
        assert_eq!(partial.windows, preset_paper_defaults().windows);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"windows": []}"#).is_err());
    }

    #[test]
    fn reference_lookup() {
        let acc = PredictorPreset::Accurate;
        assert_eq!(
            published_reference(0.7, acc, Strategy::Daly, 1 << 16, 300.0),
            Some(81.3)
        );
        assert_eq!(
            published_reference(0.7, acc, Strategy::Rfo, 1 << 19, 3000.0),
            Some(25.5)
        );
        assert_eq!(
            published_reference(0.5, acc, Strategy::Daly, 1 << 19, 1200.0),
            Some(185.0)
        );
        assert_eq!(
            published_reference(0.7, acc, Strategy::WithCkptI, 1 << 19, 3000.0),
            Some(23.1)
        );
        assert_eq!(
            published_reference(0.7, acc, Strategy::Daly, 1 << 17, 300.0),
            None
        );
        let custom = PredictorPreset::Custom {
            precision: 0.5,
            recall: 0.5,
        };
        assert_eq!(
            published_reference(0.7, custom, Strategy::NoCkptI, 1 << 16, 300.0),
            None
        );
    }

    #[test]
    fn table_rows_report_inapplicable_strategies_and_zero_daly_gain() {
        let rows = run_table(&small(DistKind::Exponential)).unwrap();
        assert_eq!(rows.len(), 5);
        let daly = rows.iter().find(|r| r.strategy == Strategy::Daly).unwrap();
        assert_eq!(daly.gain_vs_daly_pct, Some(0.0));
        let with = rows
            .iter()
            .find(|r| r.strategy == Strategy::WithCkptI)
            .unwrap();
        assert!(with.status.starts_with("inapplicable"), "{}", with.status);
        assert_eq!(with.sim_waste, None);
        for r in rows.iter().filter(|r| r.status == "ok") {
            let days = r.makespan_days.unwrap();
            assert!((days * SECONDS_PER_DAY - r.makespan_s.unwrap()).abs() < 1e-6);
            assert!(r.analytic_waste.is_some());
            assert_eq!(r.published_days, None, "exponential runs have no reference");
        }
    }

    #[test]
    fn weibull_rows_carry_reference_difference() {
        let config = ExperimentConfig {
            dist: DistKind::Weibull { shape: 0.7 },
            strategies: vec![Strategy::Daly],
            n_reps: 2,
            ..small(DistKind::Exponential)
        };
        let rows = run_table(&config).unwrap();
        assert_eq!(rows[0].published_days, Some(81.3));
        let diff = (rows[0].makespan_days.unwrap() - 81.3).abs();
        assert_eq!(rows[0].published_abs_diff_days, Some(diff));
    }

    #[test]
    fn sweep_with_single_value_gives_single_row() {
        let config = ExperimentConfig {
            strategies: vec![Strategy::Rfo],
            t_regular: vec![20_000.0],
            ..small(DistKind::Exponential)
        };
        let rows = run_sweep(&config, SweepAxis::TRegular).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].t_regular_s, Some(20_000.0));
        assert_eq!(rows[0].experiment, "sweep-tr");
        let text = to_csv_string(&rows, &[]);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn sweep_records_validity_failures_and_continues() {
        // μ = 125 y / 2^22 ≈ 940 s lies between C and D + R, so RFO has no
        // period while Daly still does.
        let config = ExperimentConfig {
            strategies: vec![Strategy::Rfo, Strategy::Daly],
            n_procs: vec![1 << 22],
            downtime: 400.0,
            work_years: 1000.0,
            n_reps: 1,
            ..small(DistKind::Exponential)
        };
        let rows = run_sweep(&config, SweepAxis::NProcs).unwrap();
        let rfo = rows.iter().find(|r| r.strategy == Strategy::Rfo).unwrap();
        assert!(rfo.status.starts_with("model-validity"), "{}", rfo.status);
        let daly = rows.iter().find(|r| r.strategy == Strategy::Daly).unwrap();
        assert_eq!(daly.status, "ok");
    }

    #[test]
    fn best_period_columns_are_filled_on_request() {
        let config = ExperimentConfig {
            strategies: vec![Strategy::NoCkptI],
            best_period: true,
            n_reps: 3,
            ..small(DistKind::Exponential)
        };
        let rows = run_table(&config).unwrap();
        assert!(rows[0].best_t_regular_s.is_some());
        assert!(rows[0].search.starts_with("geom["));
    }

    #[test]
    fn empty_rows_give_header_only() {
        let text = to_csv_string(&[], &["hello".to_owned()]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, ["# hello", &csv_columns().join(",")]);
        assert!(parse_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn emit_surfaces_path_in_io_errors() {
        let err = emit_csv(
            &[],
            &preset_paper_defaults(),
            Path::new("/nonexistent/dir/x.csv"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.csv"));
    }

    #[test]
    fn emit_and_read_back_from_disk() {
        let config = ExperimentConfig {
            strategies: vec![Strategy::Daly, Strategy::WithCkptI],
            n_reps: 2,
            ..small(DistKind::Exponential)
        };
        let rows = run_table(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        emit_csv(&rows, &config, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# ckptwin results\n"));
        assert!(text.contains("365.25 days"));
    }

    fn opt() -> impl proptest::strategy::Strategy<Value = Option<f64>> {
        proptest::option::of(-1e12f64..1e12)
    }

    prop_compose! {
        fn row()(
            strategy in 0usize..5,
            n in 1u64..1 << 24,
            window in 1.0f64..1e4,
            reals in proptest::collection::vec(-1e9f64..1e9, 6),
            opts in proptest::collection::vec(opt(), 13),
            flags in (any::<bool>(), any::<bool>()),
            n_reps in 1usize..1000,
            base_seed in any::<u64>(),
            text in "[a-z ,\"=:]{0,12}",
        ) -> ResultRow {
            ResultRow {
                experiment: "table".to_owned(),
                strategy: Strategy::ALL[strategy],
                dist: DistKind::Weibull { shape: 0.7 },
                n_procs: n,
                mtbf_s: reals[0],
                window_s: window,
                cp_s: reals[1],
                precision: reals[2],
                recall: reals[3],
                trust_prob: 1.0,
                t_base_s: reals[4],
                t_base_days: reals[5],
                t_regular_s: opts[0],
                t_proactive_s: opts[1],
                t_regular_clamped: flags.0,
                t_proactive_clamped: flags.1,
                analytic_waste: opts[2],
                sim_waste: opts[3],
                sim_waste_stderr: opts[4],
                makespan_s: opts[5],
                makespan_days: opts[6],
                makespan_stderr_days: opts[7],
                gain_vs_daly_pct: opts[8],
                best_t_regular_s: opts[9],
                best_waste: opts[10],
                published_days: opts[11],
                published_abs_diff_days: opts[12],
                n_reps,
                base_seed,
                config_hash: "0123abcd".to_owned(),
                search: text.clone(),
                status: text,
            }
        }
    }

    proptest! {
        #[test]
        fn csv_round_trips(rows in proptest::collection::vec(row(), 0..6)) {
            let text = to_csv_string(&rows, &csv_header_comments(&preset_paper_defaults()));
            prop_assert_eq!(parse_csv(&text).unwrap(), rows.clone());
            prop_assert_eq!(to_csv_string(&rows, &csv_header_comments(&preset_paper_defaults())), text);
        }
    }
}
