use rayon::prelude::*;
use sda_core::aggregate::AggregateOptions;
use sda_core::asymptotics::{
    earliest_decision_time, fastest_limits, majority_et_limit, majority_pw, majority_pw_asymptote, majority_pw_small_p,
    monotonicity_suite,
};
use sda_core::calibration::{calibrate, compare_rules, Calibration, CalibrationTask, ComparisonTable};
use sda_core::io::{
    fmt_f64, write_empirical_csv, write_group_csv, write_profile_csv, write_schema_line, EmpiricalSummary,
    GroupSidecar, ProfileSidecar, EMPIRICAL_SCHEMA, GROUP_SCHEMA, PROFILE_SCHEMA, SWEEP_SCHEMA,
};
use sda_core::oracle::{simulate_group, SdmSource, SimConfig};
use sda_core::profile::expected_decision_time;
use sda_core::{
    aggregate, sprt_profile, DecisionProfile, ExpectedTime, GroupSpec, Hypothesis, HypothesisProfile, SdaError,
    SprtModel,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::{
    AggregateArgs, AsymptoticsArgs, CalibrateArgs, Cli, Command, CompareArgs, Format, Global, ProfileArgs,
    SimulateArgs, SweepArgs, SweepRule, TemplateArgs,
};
use crate::emit::Emitter;
use crate::error::{usage, CliResult};
use crate::model::{build_model, profile_options, resolve, resolve_model_only};

const MONOTONICITY_SCHEMA: &str = "sda-monotonicity/1";
const CALIBRATION_SCHEMA: &str = "sda-calibration/1";
const COMPARISON_SCHEMA: &str = "sda-comparison/1";

pub fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    if !(g.tail_tol > 0.0 && g.tail_tol < 1.0) {
        return usage(format!("--tail-tol must lie in (0, 1), got {}", g.tail_tol));
    }
    if g.horizon == Some(0) {
        return usage("--horizon must be at least 1");
    }
    match &cli.command {
        Command::Profile(a) => profile(a, g),
        Command::Aggregate(a) => aggregate_cmd(a, g),
        Command::Sweep(a) => sweep(a, g),
        Command::Asymptotics(a) => asymptotics(a, g),
        Command::Simulate(a) => simulate(a, g),
        Command::Calibrate(a) => calibrate_cmd(a, g),
        Command::Compare(a) => compare(a, g),
    }
}

/// CSV bytes with the schema comment line in front.
fn csv_body(schema: &str, fill: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    write_schema_line(&mut buf, schema)?;
    let mut w = csv::Writer::from_writer(&mut buf);
    fill(&mut w).map_err(SdaError::from)?;
    w.flush()?;
    drop(w);
    Ok(buf)
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Serialized value, or `{"error": ...}` when the computation failed.
fn outcome<T: Serialize>(r: sda_core::Result<T>) -> CliResult<Value> {
    Ok(match r {
        Ok(v) => serde_json::to_value(v)?,
        Err(e) => json!({ "error": e.to_string() }),
    })
}

fn aggregate_options(g: &Global) -> AggregateOptions {
    match g.horizon {
        Some(h) => AggregateOptions { tail_tol: g.tail_tol, ..AggregateOptions::with_horizon(h) },
        None => AggregateOptions { tail_tol: g.tail_tol, ..AggregateOptions::default() },
    }
}

fn group_spec(n: usize, q: Option<usize>) -> CliResult<GroupSpec> {
    Ok(GroupSpec::new(n, q.unwrap_or(n / 2 + 1))?)
}

#[derive(Serialize)]
struct HypothesisSummary {
    p_say0: f64,
    p_say1: f64,
    p_nd: f64,
    expected_time: ExpectedTime,
    t_bar: Option<usize>,
}

impl HypothesisSummary {
    fn of(h: &HypothesisProfile, tail_tol: f64) -> Self {
        Self {
            p_say0: h.mass_for(Hypothesis::H0),
            p_say1: h.mass_for(Hypothesis::H1),
            p_nd: h.p_nd(),
            expected_time: expected_decision_time(h, tail_tol).expected,
            t_bar: earliest_decision_time(h).ok(),
        }
    }
}

fn profile(a: &ProfileArgs, g: &Global) -> CliResult<()> {
    let model = build_model(&a.model, a.trials)?;
    let opts = profile_options(g, a.model.delta);
    let mut em = Emitter::new("profile", g, Format::Csv);
    em.set_parameters(&json!({ "model": model, "options": opts }))?;
    let p = sprt_profile(&model, &opts)?;
    let summary = json!({
        "under_h0": HypothesisSummary::of(&p.under_h0, g.tail_tol),
        "under_h1": HypothesisSummary::of(&p.under_h1, g.tail_tol),
    });
    match em.format {
        Format::Csv => {
            let mut body = Vec::new();
            write_profile_csv(&mut body, &p)?;
            let mut side = serde_json::to_value(ProfileSidecar::of(&p))?;
            side["model"] = serde_json::to_value(model)?;
            side["summary"] = summary;
            em.table(body, Some(side))
        }
        Format::Json => em.json(&json!({
            "schema": PROFILE_SCHEMA,
            "model": model,
            "sidecar": ProfileSidecar::of(&p),
            "summary": summary,
            "p0_h0": p.under_h0.p_say0(),
            "p1_h0": p.under_h0.p_say1(),
            "p0_h1": p.under_h1.p_say0(),
            "p1_h1": p.under_h1.p_say1(),
        })),
    }
}

fn aggregate_cmd(a: &AggregateArgs, g: &Global) -> CliResult<()> {
    let src = resolve(&a.source, g)?;
    let spec = group_spec(a.n, a.q)?;
    let truth: Hypothesis = a.hypothesis.into();
    let opts = aggregate_options(g);
    let mut em = Emitter::new("aggregate", g, Format::Csv);
    em.set_parameters(&json!({ "source": src.record, "n": spec.n, "q": spec.q, "truth": truth, "options": opts }))?;
    let out = aggregate(&src.profile, spec, truth, &opts)?;
    match em.format {
        Format::Csv => {
            let mut body = Vec::new();
            write_group_csv(&mut body, &out)?;
            let side = GroupSidecar { metrics: out.metrics(), truth, manifest: None };
            em.table(body, Some(serde_json::to_value(side)?))
        }
        Format::Json => em.json(&json!({
            "schema": GROUP_SCHEMA,
            "truth": truth,
            "metrics": out.metrics(),
            "peak_state_cells": out.peak_state_cells,
            "p0_group": out.p_say0,
            "p1_group": out.p_say1,
        })),
    }
}

#[derive(Serialize)]
struct SweepRow {
    #[serde(rename = "N")]
    n: usize,
    q: usize,
    p_c: Option<f64>,
    p_w: Option<f64>,
    p_nd: Option<f64>,
    e_t: Option<ExpectedTime>,
    error: Option<String>,
}

fn sweep_cells(grid: &[usize], rule: SweepRule) -> Vec<(usize, usize)> {
    grid.iter()
        .flat_map(|&n| {
            let qs: Vec<usize> = match rule {
                SweepRule::Fastest => vec![1],
                SweepRule::Majority => vec![n / 2 + 1],
                SweepRule::AllQ => (1..=n).collect(),
            };
            qs.into_iter().map(move |q| (n, q))
        })
        .collect()
}

fn sweep_row(profile: &DecisionProfile, n: usize, q: usize, truth: Hypothesis, opts: &AggregateOptions) -> SweepRow {
    let r = GroupSpec::new(n, q).and_then(|spec| aggregate(profile, spec, truth, opts));
    match r {
        Ok(out) => {
            let m = out.metrics();
            SweepRow { n, q, p_c: Some(m.p_c), p_w: Some(m.p_w), p_nd: Some(m.p_nd), e_t: Some(m.e_t), error: None }
        }
        Err(e) => SweepRow { n, q, p_c: None, p_w: None, p_nd: None, e_t: None, error: Some(e.to_string()) },
    }
}

fn sweep(a: &SweepArgs, g: &Global) -> CliResult<()> {
    let src = resolve(&a.source, g)?;
    let truth: Hypothesis = a.hypothesis.into();
    let opts = aggregate_options(g);
    let rule = format!("{:?}", a.rule).to_lowercase().replace("allq", "all-q");
    let mut em = Emitter::new("sweep", g, Format::Csv);
    em.set_parameters(
        &json!({ "source": src.record, "n_grid": a.n_grid.0, "rule": rule, "truth": truth, "options": opts }),
    )?;
    let cells = sweep_cells(&a.n_grid.0, a.rule);
    // collect keeps grid order whatever the completion order
    let rows: Vec<SweepRow> = cells.par_iter().map(|&(n, q)| sweep_row(&src.profile, n, q, truth, &opts)).collect();
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} sweep cells failed", rows.len());
    }
    match em.format {
        Format::Csv => {
            let body = csv_body(SWEEP_SCHEMA, |w| {
                w.write_record(["N", "q", "p_c", "p_w", "p_nd", "e_t", "error"])?;
                for r in &rows {
                    w.write_record([
                        r.n.to_string(),
                        r.q.to_string(),
                        opt_f64(r.p_c),
                        opt_f64(r.p_w),
                        opt_f64(r.p_nd),
                        opt_f64(r.e_t.map(ExpectedTime::value)),
                        r.error.clone().unwrap_or_default(),
                    ])?;
                }
                Ok(())
            })?;
            let side =
                json!({ "schema": SWEEP_SCHEMA, "rule": rule, "truth": truth, "cells": rows.len(), "failed": failed });
            em.table(body, Some(side))
        }
        Format::Json => em.json(&json!({ "schema": SWEEP_SCHEMA, "rule": rule, "truth": truth, "rows": rows })),
    }
}

#[derive(Serialize)]
struct ClosedFormRow {
    #[serde(rename = "N")]
    n: usize,
    p_w: f64,
    asymptote: Option<f64>,
    small_p: f64,
}

fn closed_form_rows(p: f64, grid: &[usize]) -> CliResult<Vec<ClosedFormRow>> {
    let mut rows = Vec::new();
    for &n in grid.iter().filter(|n| *n % 2 == 1) {
        rows.push(ClosedFormRow {
            n,
            p_w: majority_pw(p, n)?,
            asymptote: majority_pw_asymptote(p, n).ok(),
            small_p: majority_pw_small_p(p, n)?,
        });
    }
    Ok(rows)
}

fn asymptotics(a: &AsymptoticsArgs, g: &Global) -> CliResult<()> {
    let src = resolve(&a.source, g)?;
    let truth: Hypothesis = a.hypothesis.into();
    let opts = aggregate_options(g);
    let mut em = Emitter::new("asymptotics", g, Format::Json);
    em.set_parameters(
        &json!({ "source": src.record, "truth": truth, "n_grid": a.n_grid.0, "p": a.p, "options": opts }),
    )?;
    let limits = outcome(fastest_limits(&src.profile, truth))?;
    let majority = outcome(majority_et_limit(&src.profile, truth, g.tail_tol))?;
    let report = monotonicity_suite(&src.profile, truth, &a.n_grid.0, &opts)?;
    let closed = match a.p {
        Some(p) => Some(closed_form_rows(p, &a.n_grid.0)?),
        None => None,
    };
    match em.format {
        Format::Csv => {
            let body = csv_body(MONOTONICITY_SCHEMA, |w| {
                w.write_record(["N", "q", "metric", "kind", "value", "monotone_ok"])?;
                for r in &report.records {
                    let kind = format!("{:?}", r.kind).to_lowercase();
                    w.write_record([
                        &r.n.to_string(),
                        &r.q.to_string(),
                        r.metric,
                        &kind,
                        &fmt_f64(r.value),
                        &r.monotone_ok.to_string(),
                    ])?;
                }
                Ok(())
            })?;
            let side = json!({
                "truth": truth,
                "fastest_limits": limits,
                "majority_time_case": majority,
                "theorem_violations": report.theorem_violations,
                "conjecture_violations": report.conjecture_violations,
                "majority_closed_form": closed,
            });
            em.table(body, Some(side))
        }
        Format::Json => em.json(&json!({
            "truth": truth,
            "fastest_limits": limits,
            "majority_time_case": majority,
            "monotonicity": report,
            "majority_closed_form": closed,
        })),
    }
}

fn simulate(a: &SimulateArgs, g: &Global) -> CliResult<()> {
    let (model, record, loaded) = resolve_model_only(&a.source, g)?;
    let source = match (model, loaded) {
        (Some(m), _) => SdmSource::Model(m),
        (None, Some(p)) => SdmSource::Profile(p),
        (None, None) => unreachable!("a source is either a model or a file"),
    };
    let spec = group_spec(a.n, a.q)?;
    let truth: Hypothesis = a.hypothesis.into();
    let mut cfg = SimConfig::new(spec, source, a.replicates, g.seed);
    if let Some(h) = g.horizon {
        cfg.cap = h;
    }
    let mut em = Emitter::new("simulate", g, Format::Csv);
    em.add_seed(g.seed);
    em.set_parameters(&json!({
        "source": record, "n": spec.n, "q": spec.q, "truth": truth,
        "replicates": a.replicates, "seed": g.seed, "cap": cfg.cap,
    }))?;
    let out = simulate_group(&cfg, truth)?;
    let summary = EmpiricalSummary::of(&out);
    match em.format {
        Format::Csv => {
            let mut body = Vec::new();
            write_empirical_csv(&mut body, &out)?;
            em.table(body, Some(serde_json::to_value(summary)?))
        }
        Format::Json => em.json(&json!({
            "schema": EMPIRICAL_SCHEMA,
            "summary": summary,
            "count_say0": out.count_say0,
            "count_say1": out.count_say1,
            "count_none": out.count_none,
        })),
    }
}

fn template_model(t: &TemplateArgs) -> CliResult<SprtModel> {
    if t.model.delta.is_some() {
        return usage("--delta is not used by calibration; the default chain step is applied at every η");
    }
    build_model(&t.model, t.trials)
}

fn calibrate_cmd(a: &CalibrateArgs, g: &Global) -> CliResult<()> {
    let template = template_model(&a.template)?;
    let task = CalibrationTask {
        bracket: (a.eta_lo, a.eta_hi),
        pw_tol: a.pw_tol,
        ..CalibrationTask::new(template, a.n, a.rule, a.target)
    };
    let mut em = Emitter::new("calibrate", g, Format::Csv);
    em.set_parameters(&task)?;
    let c: Calibration = calibrate(&task)?;
    match em.format {
        Format::Csv => {
            let body = csv_body(CALIBRATION_SCHEMA, |w| {
                w.write_record(["N", "rule", "target_pw", "eta", "achieved_pw", "e_t", "iterations"])?;
                w.write_record([
                    c.n.to_string(),
                    format!("{:?}", c.rule).to_lowercase(),
                    fmt_f64(c.target_pw),
                    fmt_f64(c.eta),
                    fmt_f64(c.achieved_pw),
                    fmt_f64(c.expected_time.value()),
                    c.iterations.to_string(),
                ])
            })?;
            em.table(body, Some(serde_json::to_value(&c)?))
        }
        Format::Json => em.json(&c),
    }
}

fn compare(a: &CompareArgs, g: &Global) -> CliResult<()> {
    let template = template_model(&a.template)?;
    let mut em = Emitter::new("compare", g, Format::Json);
    em.set_parameters(&json!({ "template": template, "targets": a.targets, "n_grid": a.n_grid.0 }))?;
    let table: ComparisonTable = compare_rules(&template, &a.targets, &a.n_grid.0)?;
    match em.format {
        Format::Csv => {
            let body = csv_body(COMPARISON_SCHEMA, |w| {
                w.write_record(["target_pw", "N", "rule", "eta", "achieved_pw", "e_t", "winner", "error"])?;
                for c in &table.cells {
                    let winner = c.winner.map(|r| format!("{r:?}").to_lowercase()).unwrap_or_default();
                    for (rule, cell) in [("fastest", &c.fastest), ("majority", &c.majority)] {
                        w.write_record([
                            fmt_f64(c.target_pw),
                            c.n.to_string(),
                            rule.to_owned(),
                            opt_f64(cell.eta),
                            opt_f64(cell.achieved_pw),
                            opt_f64(cell.expected_time.map(ExpectedTime::value)),
                            winner.clone(),
                            cell.error.clone().unwrap_or_default(),
                        ])?;
                    }
                }
                Ok(())
            })?;
            em.table(body, Some(json!({ "crossovers": table.crossovers })))
        }
        Format::Json => {
            em.json(&json!({ "schema": COMPARISON_SCHEMA, "cells": table.cells, "crossovers": table.crossovers }))
        }
    }
}
