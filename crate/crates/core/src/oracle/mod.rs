//! Ground-truth engines: exhaustive enumeration for small groups and a seeded
//! Monte Carlo simulator of the full fusion protocol.

pub mod enumerate;
pub mod montecarlo;

pub use enumerate::{enumerate_exact, DEFAULT_ENUMERATION_CAP};
pub use montecarlo::{simulate_group, EmpiricalOutcome, SdmSource, SimConfig};

use crate::profile::Hypothesis;

/// Replays the fusion counters over decisions sorted by time.
///
/// `decisions` holds `(time, verdict)` pairs; times beyond every real decision
/// act as silence. Returns the group decision, if any.
pub(crate) fn fuse(decisions: &mut [(usize, Hypothesis)], q: usize) -> Option<(usize, Hypothesis)> {
    decisions.sort_unstable_by_key(|d| d.0);
    let (mut c0, mut c1) = (0usize, 0usize);
    let mut i = 0;
    while i < decisions.len() {
        let t = decisions[i].0;
        while i < decisions.len() && decisions[i].0 == t {
            match decisions[i].1 {
                Hypothesis::H0 => c0 += 1,
                Hypothesis::H1 => c1 += 1,
            }
            i += 1;
        }
        if c1 >= q && c1 > c0 {
            return Some((t, Hypothesis::H1));
        }
        if c0 >= q && c0 > c1 {
            return Some((t, Hypothesis::H0));
        }
    }
    None
}
