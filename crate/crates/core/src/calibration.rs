//! Threshold calibration: pick the symmetric SPRT threshold `η1 = −η0 = η`
//! so that the group reaches a target wrong-decision probability, then
//! compare the fastest and majority rules at equal group accuracy.

use std::collections::HashMap;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::aggregate::{aggregate_hypothesis, AggregateOptions};
use crate::error::{Result, SdaError};
use crate::profile::{ExpectedTime, GroupSpec, Hypothesis, HypothesisProfile};
use crate::sprt::{sprt_hypothesis_profile, ProfileOptions, SprtModel};

/// Slack allowed when checking that group `p_w` decreases in `η`.
pub const MONOTONE_SLACK: f64 = 1e-6;
/// Below this calibrated `η` the SDMs barely sample before deciding.
const DEGENERATE_ETA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Fastest,
    Majority,
}

impl Rule {
    pub fn spec(self, n: usize) -> Result<GroupSpec> {
        match self {
            Rule::Fastest => GroupSpec::fastest(n),
            Rule::Majority => GroupSpec::majority(n),
        }
    }
}

impl std::str::FromStr for Rule {
    type Err = SdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fastest" => Ok(Rule::Fastest),
            "majority" => Ok(Rule::Majority),
            _ => Err(SdaError::InvalidArgument(format!("unknown rule {s:?}; expected fastest or majority"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationTask {
    pub target_pw: f64,
    pub n: usize,
    pub rule: Rule,
    /// Model whose thresholds are replaced by `(−η, η)`.
    pub template: SprtModel,
    pub bracket: (f64, f64),
    pub pw_tol: f64,
    pub eta_tol: f64,
    pub max_iter: usize,
}

impl CalibrationTask {
    pub fn new(template: SprtModel, n: usize, rule: Rule, target_pw: f64) -> Self {
        Self { target_pw, n, rule, template, bracket: (0.01, 15.0), pw_tol: 1e-4, eta_tol: 1e-6, max_iter: 60 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.target_pw > 0.0 && self.target_pw < 0.5) {
            return Err(SdaError::InvalidArgument(format!("target p_w must lie in (0, 0.5), got {}", self.target_pw)));
        }
        let (lo, hi) = self.bracket;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(SdaError::InvalidArgument(format!("bad bracket ({lo}, {hi})")));
        }
        if !(self.pw_tol > 0.0 && self.eta_tol > 0.0 && self.max_iter > 0) {
            return Err(SdaError::InvalidArgument("tolerances and max_iter must be positive".into()));
        }
        self.rule.spec(self.n).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub n: usize,
    pub rule: Rule,
    pub target_pw: f64,
    pub eta: f64,
    pub achieved_pw: f64,
    pub expected_time: ExpectedTime,
    pub iterations: usize,
    /// `(η, p_w)` for every evaluation, in order.
    pub trace: Vec<(f64, f64)>,
}

/// SDM profiles under `H1` keyed by the bit pattern of `η`.
#[derive(Debug, Default)]
pub struct ProfileCache {
    profiles: HashMap<u64, HypothesisProfile>,
    pub hits: usize,
    pub misses: usize,
}

impl ProfileCache {
    fn get(&mut self, template: &SprtModel, eta: f64, opts: &ProfileOptions) -> Result<&HypothesisProfile> {
        use std::collections::hash_map::Entry;
        match self.profiles.entry(eta.to_bits()) {
            Entry::Occupied(e) => {
                self.hits += 1;
                Ok(e.into_mut())
            }
            Entry::Vacant(e) => {
                self.misses += 1;
                let model = template.with_symmetric_threshold(eta)?;
                Ok(e.insert(sprt_hypothesis_profile(&model, Hypothesis::H1, opts)?))
            }
        }
    }
}

struct Evaluator<'a> {
    task: &'a CalibrationTask,
    spec: GroupSpec,
    profile_opts: ProfileOptions,
    agg_opts: AggregateOptions,
    cache: &'a mut ProfileCache,
    trace: Vec<(f64, f64)>,
}

impl Evaluator<'_> {
    fn eval(&mut self, eta: f64) -> Result<(f64, ExpectedTime)> {
        let h = self.cache.get(&self.task.template, eta, &self.profile_opts)?;
        let out = aggregate_hypothesis(h, self.spec, Hypothesis::H1, &self.agg_opts)?;
        self.trace.push((eta, out.p_w));
        debug!("calibrate N={} {:?}: eta={eta:.6} p_w={:.6e}", self.spec.n, self.task.rule, out.p_w);
        Ok((out.p_w, out.expected_time))
    }
}

/// Bisection on `η` for the group wrong-decision probability under `H1`,
/// evaluated through the full aggregation recursion.
pub fn calibrate(task: &CalibrationTask) -> Result<Calibration> {
    calibrate_cached(task, &mut ProfileCache::default())
}

pub fn calibrate_cached(task: &CalibrationTask, cache: &mut ProfileCache) -> Result<Calibration> {
    task.validate()?;
    let mut ev = Evaluator {
        task,
        spec: task.rule.spec(task.n)?,
        profile_opts: ProfileOptions::default(),
        agg_opts: AggregateOptions::default(),
        cache,
        trace: Vec::new(),
    };
    let target = task.target_pw;
    let (mut lo, mut hi) = task.bracket;
    let (mut p_lo, _) = ev.eval(lo)?;
    let (mut p_hi, et) = ev.eval(hi)?;
    if !(p_lo >= target && target >= p_hi) {
        return Err(SdaError::Calibration(format!(
            "bracket does not straddle target {target}: p_w({lo}) = {p_lo:.6e}, p_w({hi}) = {p_hi:.6e}"
        )));
    }
    // closest evaluation to the target so far
    let mut best = (hi, p_hi, et);
    let mut iterations = 0;
    while iterations < task.max_iter && hi - lo >= task.eta_tol {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let (p, et) = ev.eval(mid)?;
        if p > p_lo + MONOTONE_SLACK || p < p_hi - MONOTONE_SLACK {
            return Err(SdaError::Calibration(format!(
                "group p_w not monotone in eta: p_w({lo}) = {p_lo:.6e}, p_w({mid}) = {p:.6e}, p_w({hi}) = {p_hi:.6e}"
            )));
        }
        if (p - target).abs() <= (best.1 - target).abs() {
            best = (mid, p, et);
        }
        if (p - target).abs() < task.pw_tol {
            break;
        }
        if p > target {
            (lo, p_lo) = (mid, p);
        } else {
            (hi, p_hi) = (mid, p);
        }
    }
    let (eta, achieved_pw, expected_time) = best;
    if eta < DEGENERATE_ETA {
        warn!("calibrated eta = {eta:.3e} is close to 0; target {target} is barely informative");
    }
    Ok(Calibration {
        n: task.n,
        rule: task.rule,
        target_pw: target,
        eta,
        achieved_pw,
        expected_time,
        iterations,
        trace: ev.trace,
    })
}

/// Outcome of one calibration inside a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub eta: Option<f64>,
    pub achieved_pw: Option<f64>,
    pub expected_time: Option<ExpectedTime>,
    pub error: Option<String>,
}

impl From<Result<Calibration>> for CellResult {
    fn from(r: Result<Calibration>) -> Self {
        match r {
            Ok(c) => Self {
                eta: Some(c.eta),
                achieved_pw: Some(c.achieved_pw),
                expected_time: Some(c.expected_time),
                error: None,
            },
            Err(e) => Self { eta: None, achieved_pw: None, expected_time: None, error: Some(e.to_string()) },
        }
    }
}

impl CellResult {
    fn time(&self) -> Option<f64> {
        self.expected_time.map(ExpectedTime::value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonCell {
    pub target_pw: f64,
    pub n: usize,
    pub fastest: CellResult,
    pub majority: CellResult,
    /// Rule with the smaller calibrated expected time; `None` on ties or failures.
    pub winner: Option<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossover {
    pub target_pw: f64,
    /// Smallest grid `N` from which majority wins at every larger grid point.
    pub n: Option<usize>,
    /// Fastest wins (or ties) at every grid point below the crossover.
    pub clean_split: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub cells: Vec<ComparisonCell>,
    pub crossovers: Vec<Crossover>,
}

/// Relative gap under which two calibrated times count as a tie.
const TIE_REL: f64 = 1e-9;

/// Calibrates both rules for every `(target, N)` pair and locates, per target,
/// the group size where the majority rule becomes faster.
pub fn compare_rules(template: &SprtModel, targets: &[f64], n_grid: &[usize]) -> Result<ComparisonTable> {
    if targets.is_empty() || n_grid.is_empty() {
        return Err(SdaError::InvalidArgument("targets and N grid must be nonempty".into()));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let mut cache = ProfileCache::default();
    let mut cells = Vec::new();
    let mut crossovers = Vec::new();
    for &target in targets {
        let mut row = Vec::with_capacity(grid.len());
        for &n in &grid {
            let run = |rule, cache: &mut ProfileCache| {
                calibrate_cached(&CalibrationTask::new(*template, n, rule, target), cache)
            };
            let fastest: CellResult = run(Rule::Fastest, &mut cache).into();
            // both rules coincide for a single SDM
            let majority: CellResult = if n == 1 { fastest.clone() } else { run(Rule::Majority, &mut cache).into() };
            let winner = match (fastest.time(), majority.time()) {
                (Some(f), Some(m)) if (f - m).abs() > TIE_REL * f.abs().max(m.abs()) => {
                    Some(if m < f { Rule::Majority } else { Rule::Fastest })
                }
                _ => None,
            };
            row.push(ComparisonCell { target_pw: target, n, fastest, majority, winner });
        }
        crossovers.push(crossover(target, &row));
        cells.extend(row);
    }
    debug!("profile cache: {} hits, {} misses", cache.hits, cache.misses);
    Ok(ComparisonTable { cells, crossovers })
}

fn crossover(target: f64, row: &[ComparisonCell]) -> Crossover {
    let k = row.iter().rposition(|c| c.winner != Some(Rule::Majority)).map_or(0, |i| i + 1);
    if k == row.len() {
        return Crossover { target_pw: target, n: None, clean_split: false };
    }
    let clean_split = row[..k].iter().all(|c| c.winner != Some(Rule::Majority) && c.fastest.error.is_none());
    Crossover { target_pw: target, n: Some(row[k].n), clean_split }
}
