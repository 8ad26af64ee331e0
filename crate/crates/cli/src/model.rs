//! Resolution of model flags into an SPRT model or a loaded profile.

use std::path::PathBuf;

use sda_core::io::load_profile;
use sda_core::{sprt_profile, DecisionProfile, ProfileOptions, SprtModel};
use serde::Serialize;

use crate::cli::{Dist, Global, ModelArgs, SourceArgs};
use crate::error::{usage, CliResult};
use crate::manifest::file_digest;

const DEFAULT_ERROR: f64 = 0.1;

pub fn build_model(args: &ModelArgs, trials: u32) -> CliResult<SprtModel> {
    let pmd = args.pmd.unwrap_or(DEFAULT_ERROR);
    let pfa = args.pfa.unwrap_or(DEFAULT_ERROR);
    let model = match args.dist {
        Dist::Gaussian => {
            if args.eps.is_some() {
                return usage("--eps applies to --dist binomial only");
            }
            let Some(sigma) = args.sigma else {
                return usage("--sigma is required for --dist gaussian");
            };
            SprtModel::gaussian_wald(args.theta0.unwrap_or(0.0), args.theta1.unwrap_or(1.0), sigma, pmd, pfa)?
        }
        Dist::Binomial => {
            if args.sigma.is_some() {
                return usage("--sigma applies to --dist gaussian only");
            }
            if args.delta.is_some() {
                return usage("--delta applies to --dist gaussian only");
            }
            let (theta0, theta1) = match (args.eps, args.theta0, args.theta1) {
                (Some(eps), None, None) => (0.5 - eps, 0.5 + eps),
                (None, Some(t0), Some(t1)) => (t0, t1),
                (Some(_), _, _) => return usage("give either --eps or --theta0/--theta1, not both"),
                _ => return usage("--dist binomial needs --eps or both --theta0 and --theta1"),
            };
            SprtModel::binomial_wald(trials, theta0, theta1, pmd, pfa)?
        }
    };
    Ok(model)
}

pub fn profile_options(global: &Global, delta: Option<f64>) -> ProfileOptions {
    ProfileOptions { horizon: global.horizon, tail_tol: global.tail_tol, delta, ..ProfileOptions::default() }
}

/// Where the single-SDM behaviour comes from, as recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceRecord {
    Model { model: SprtModel, options: ProfileOptions },
    File { path: PathBuf, sha256: String },
}

pub struct Resolved {
    pub profile: DecisionProfile,
    pub record: SourceRecord,
}

fn any_model_flag(m: &ModelArgs) -> bool {
    [m.theta0, m.theta1, m.sigma, m.eps, m.pmd, m.pfa, m.delta].iter().any(Option::is_some)
}

/// Model for Monte Carlo runs or profile from file, without building a profile for the model.
pub fn resolve_model_only(
    src: &SourceArgs,
    global: &Global,
) -> CliResult<(Option<SprtModel>, SourceRecord, Option<DecisionProfile>)> {
    if let Some(path) = &src.profile {
        if any_model_flag(&src.model) {
            return usage("--profile cannot be combined with model flags");
        }
        let profile = load_profile(path)?;
        let record = SourceRecord::File { path: path.clone(), sha256: file_digest(path)? };
        return Ok((None, record, Some(profile)));
    }
    let model = build_model(&src.model, src.trials)?;
    let options = profile_options(global, src.model.delta);
    Ok((Some(model), SourceRecord::Model { model, options }, None))
}

/// Profile from file, or generated from the model flags.
pub fn resolve(src: &SourceArgs, global: &Global) -> CliResult<Resolved> {
    let (_, record, loaded) = resolve_model_only(src, global)?;
    let profile = match (loaded, &record) {
        (Some(p), _) => p,
        (None, SourceRecord::Model { model, options }) => sprt_profile(model, options)?,
        (None, SourceRecord::File { .. }) => unreachable!("file sources are loaded above"),
    };
    Ok(Resolved { profile, record })
}
