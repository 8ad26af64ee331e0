//! File formats: profile CSV with a JSON sidecar, group outcome CSV with a
//! metrics sidecar, and simulation tallies. Every CSV starts with a
//! `# schema: <name>/<version>` comment line.
//!
//! Probabilities are written with 17 significant digits, which round-trips
//! every `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::{GroupMetrics, GroupOutcome};
use crate::error::{Result, SdaError};
use crate::oracle::EmpiricalOutcome;
use crate::profile::{DecisionProfile, Hypothesis, HypothesisProfile};

pub const PROFILE_SCHEMA: &str = "sda-profile/1";
pub const GROUP_SCHEMA: &str = "sda-group-outcome/1";
pub const EMPIRICAL_SCHEMA: &str = "sda-empirical/1";
pub const SWEEP_SCHEMA: &str = "sda-sweep/1";

/// Exact decimal form of a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the schema comment line.
pub fn write_schema_line<W: Write>(w: &mut W, schema: &str) -> Result<()> {
    writeln!(w, "# schema: {schema}")?;
    Ok(())
}

/// Sidecar of a profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSidecar {
    pub p_nd_h0: f64,
    pub p_nd_h1: f64,
    pub t_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_mass_h0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_mass_h1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl ProfileSidecar {
    pub fn of(profile: &DecisionProfile) -> Self {
        Self {
            p_nd_h0: profile.under_h0.p_nd(),
            p_nd_h1: profile.under_h1.p_nd(),
            t_max: profile.t_max(),
            tail_mass_h0: Some(profile.under_h0.tail_mass()),
            tail_mass_h1: Some(profile.under_h1.tail_mass()),
            manifest: None,
        }
    }
}

/// Path of the JSON sidecar next to a CSV file.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Rows `t,p0_h0,p1_h0,p0_h1,p1_h1`.
pub fn write_profile_csv<W: Write>(mut w: W, profile: &DecisionProfile) -> Result<()> {
    profile.check_structure()?;
    write_schema_line(&mut w, PROFILE_SCHEMA)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["t", "p0_h0", "p1_h0", "p0_h1", "p1_h1"])?;
    let (h0, h1) = (&profile.under_h0, &profile.under_h1);
    for k in 0..profile.t_max() {
        csv.write_record([
            (k + 1).to_string(),
            fmt_f64(h0.p_say0()[k]),
            fmt_f64(h0.p_say1()[k]),
            fmt_f64(h1.p_say0()[k]),
            fmt_f64(h1.p_say1()[k]),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn comment_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn parse_f64(field: &str, what: &str, line: usize) -> Result<f64> {
    field.parse().map_err(|_| SdaError::Parse(format!("line {line}: bad {what} value {field:?}")))
}

/// Reads a profile CSV; without a sidecar the missing mass becomes `p_nd`.
pub fn read_profile_csv<R: Read>(r: R, sidecar: Option<&ProfileSidecar>) -> Result<DecisionProfile> {
    let mut csv = comment_reader(r);
    let headers = csv.headers()?.clone();
    let expected = ["t", "p0_h0", "p1_h0", "p0_h1", "p1_h1"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(SdaError::Parse(format!("profile header must be {}, got {:?}", expected.join(","), headers)));
    }
    let mut cols: [Vec<f64>; 4] = Default::default();
    for (k, rec) in csv.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k + 2, |p| p.line() as usize);
        let t: usize = rec[0].parse().map_err(|_| SdaError::Parse(format!("line {line}: bad t {:?}", &rec[0])))?;
        if t != k + 1 {
            return Err(SdaError::Parse(format!("line {line}: expected t = {}, got {t}", k + 1)));
        }
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(parse_f64(&rec[c + 1], expected[c + 1], line)?);
        }
    }
    let [p0_h0, p1_h0, p0_h1, p1_h1] = cols;
    let profile = match sidecar {
        Some(s) => {
            if s.t_max != p0_h0.len() {
                return Err(SdaError::Parse(format!("sidecar t_max {} but {} rows", s.t_max, p0_h0.len())));
            }
            let mut h0 = HypothesisProfile::new(p0_h0, p1_h0, s.p_nd_h0);
            let mut h1 = HypothesisProfile::new(p0_h1, p1_h1, s.p_nd_h1);
            h0.set_tail_mass(s.tail_mass_h0.unwrap_or(0.0));
            h1.set_tail_mass(s.tail_mass_h1.unwrap_or(0.0));
            DecisionProfile::new(h0, h1)
        }
        None => DecisionProfile::new(
            HypothesisProfile::with_folded_tail(p0_h0, p1_h0),
            HypothesisProfile::with_folded_tail(p0_h1, p1_h1),
        ),
    };
    profile.check_structure()?;
    Ok(profile)
}

/// Writes `path` and its sidecar; returns the sidecar path.
pub fn save_profile(path: &Path, profile: &DecisionProfile, manifest: Option<&str>) -> Result<PathBuf> {
    write_profile_csv(BufWriter::new(File::create(path)?), profile)?;
    let side = sidecar_path(path);
    let mut meta = ProfileSidecar::of(profile);
    meta.manifest = manifest.map(str::to_owned);
    write_json(&side, &meta)?;
    Ok(side)
}

/// Loads a profile CSV, using its sidecar when present.
pub fn load_profile(path: &Path) -> Result<DecisionProfile> {
    let side = sidecar_path(path);
    let meta: Option<ProfileSidecar> = if side.exists() && side != path {
        Some(serde_json::from_reader(BufReader::new(File::open(&side)?))?)
    } else {
        None
    };
    read_profile_csv(BufReader::new(File::open(path)?), meta.as_ref())
}

/// Rows `t,p0_group,p1_group`.
pub fn write_group_csv<W: Write>(mut w: W, out: &GroupOutcome) -> Result<()> {
    write_schema_line(&mut w, GROUP_SCHEMA)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["t", "p0_group", "p1_group"])?;
    for k in 0..out.horizon() {
        csv.write_record([(k + 1).to_string(), fmt_f64(out.p_say0[k]), fmt_f64(out.p_say1[k])])?;
    }
    csv.flush()?;
    Ok(())
}

/// Reads the `(p_say0, p_say1)` series of a group outcome CSV.
pub fn read_group_csv<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut csv = comment_reader(r);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (k, rec) in csv.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(SdaError::Parse(format!("row {}: expected 3 fields", k + 1)));
        }
        a.push(parse_f64(&rec[1], "p0_group", k + 2)?);
        b.push(parse_f64(&rec[2], "p1_group", k + 2)?);
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSidecar {
    #[serde(flatten)]
    pub metrics: GroupMetrics,
    pub truth: Hypothesis,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

pub fn save_group_outcome(path: &Path, out: &GroupOutcome, manifest: Option<&str>) -> Result<PathBuf> {
    write_group_csv(BufWriter::new(File::create(path)?), out)?;
    let side = sidecar_path(path);
    let meta = GroupSidecar { metrics: out.metrics(), truth: out.truth, manifest: manifest.map(str::to_owned) };
    write_json(&side, &meta)?;
    Ok(side)
}

/// Rows `t,count_say0,count_say1,freq_say0,se_say0,freq_say1,se_say1`.
pub fn write_empirical_csv<W: Write>(mut w: W, out: &EmpiricalOutcome) -> Result<()> {
    write_schema_line(&mut w, EMPIRICAL_SCHEMA)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["t", "count_say0", "count_say1", "freq_say0", "se_say0", "freq_say1", "se_say1"])?;
    for t in 1..=out.horizon() {
        csv.write_record([
            t.to_string(),
            out.count_say0[t - 1].to_string(),
            out.count_say1[t - 1].to_string(),
            fmt_f64(out.freq(Hypothesis::H0, t)),
            fmt_f64(out.se(Hypothesis::H0, t)),
            fmt_f64(out.freq(Hypothesis::H1, t)),
            fmt_f64(out.se(Hypothesis::H1, t)),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Summary of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSummary {
    pub n: usize,
    pub q: usize,
    pub truth: Hypothesis,
    pub replicates: u64,
    pub seed: u64,
    pub freq_say0: f64,
    pub se_say0: f64,
    pub freq_say1: f64,
    pub se_say1: f64,
    pub freq_none: f64,
    pub se_none: f64,
    pub mean_time: Option<f64>,
    pub mean_time_se: Option<f64>,
}

impl EmpiricalSummary {
    pub fn of(out: &EmpiricalOutcome) -> Self {
        let mt = out.mean_time();
        Self {
            n: out.spec.n,
            q: out.spec.q,
            truth: out.truth,
            replicates: out.replicates,
            seed: out.seed,
            freq_say0: out.freq_total(Hypothesis::H0),
            se_say0: out.se_total(Hypothesis::H0),
            freq_say1: out.freq_total(Hypothesis::H1),
            se_say1: out.se_total(Hypothesis::H1),
            freq_none: out.freq_none(),
            se_none: out.se_none(),
            mean_time: mt.map(|m| m.0),
            mean_time_se: mt.map(|m| m.1).filter(|s| s.is_finite()),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Schema named in the first comment line, if any.
pub fn read_schema<R: Read>(r: R) -> Result<Option<String>> {
    let mut line = String::new();
    BufReader::new(r).read_line(&mut line)?;
    Ok(line.trim().strip_prefix("# schema:").map(|s| s.trim().to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn awkward_profile() -> DecisionProfile {
        let h0 = HypothesisProfile::new(vec![0.1 + 0.2, 1.0 / 3.0, 5e-324], vec![1e-17, 0.0, 0.1], 0.2666666666666667);
        let h1 =
            HypothesisProfile::with_folded_tail(vec![std::f64::consts::PI / 100.0, 0.0, 0.0], vec![0.5, 0.25, 0.1]);
        DecisionProfile::new(h0, h1)
    }

    #[test]
    fn profile_round_trip_is_bit_exact() {
        let p = awkward_profile();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        save_profile(&path, &p, None).unwrap();
        let back = load_profile(&path).unwrap();
        assert_eq!(back, p);
        let schema = read_schema(File::open(&path).unwrap()).unwrap();
        assert_eq!(schema.as_deref(), Some(PROFILE_SCHEMA));
    }

    #[test]
    fn profile_without_sidecar_folds_tail() {
        let text = "t,p0_h0,p1_h0,p0_h1,p1_h1\n1,0.5,0.25,0.25,0.5\n";
        let p = read_profile_csv(text.as_bytes(), None).unwrap();
        assert_eq!(p.under_h1.p_nd(), 0.25);
    }

    #[test]
    fn malformed_profiles_are_rejected() {
        let bad_header = "t,a,b,c,d\n1,0,0,0,0\n";
        assert!(read_profile_csv(bad_header.as_bytes(), None).is_err());
        let gap = "t,p0_h0,p1_h0,p0_h1,p1_h1\n2,0.5,0.5,0.5,0.5\n";
        assert!(read_profile_csv(gap.as_bytes(), None).is_err());
        let nan = "t,p0_h0,p1_h0,p0_h1,p1_h1\n1,x,0.5,0.5,0.5\n";
        assert!(matches!(read_profile_csv(nan.as_bytes(), None), Err(SdaError::Parse(_))));
    }

    #[test]
    fn group_round_trip() {
        use crate::aggregate::{aggregate, AggregateOptions};
        use crate::profile::GroupSpec;
        let p = awkward_profile();
        let out = aggregate(&p, GroupSpec::new(3, 2).unwrap(), Hypothesis::H1, &AggregateOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_group_csv(&mut buf, &out).unwrap();
        let (a, b) = read_group_csv(buf.as_slice()).unwrap();
        assert_eq!((a, b), (out.p_say0.clone(), out.p_say1.clone()));
    }
}
