//! Detection scoring of estimated reflections against ground truth.
//!
//! An estimate and a true reflection may be paired when both the delay
//! error and the angular error are within tolerance. Pairs are chosen as a
//! one-to-one assignment that first maximizes the number of pairs and then
//! minimizes the summed normalized error `|Δτ|/tol_τ + ΔΩ/tol_Ω`. Because
//! the pair count is a maximum matching over the admissible pairs,
//! tightening either tolerance can never raise the detection rate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room_sim::ReflectionList;
use crate::scene::angular_distance;

pub const DEFAULT_TOL_TAU: f64 = 0.0005;
pub const DEFAULT_TOL_OMEGA_DEG: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub estimate: usize,
    pub truth: usize,
    /// Seconds.
    pub delay_error: f64,
    /// Radians.
    pub angular_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub truth: usize,
    pub detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub misses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Seconds.
    pub tol_tau: f64,
    /// Radians.
    pub tol_omega: f64,
    pub counts: Counts,
    pub pd: f64,
    pub pd_percent: f64,
    pub pfa: f64,
    pub pfa_percent: f64,
    pub matches: Vec<Match>,
}

impl EvalReport {
    fn check(&self) -> Result<()> {
        let c = &self.counts;
        let ok = c.true_positives + c.false_positives == c.detections
            && c.true_positives + c.misses == c.truth
            && self.matches.len() == c.true_positives
            && (0.0..=1.0).contains(&self.pd)
            && (0.0..=1.0).contains(&self.pfa);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("evaluation report", "inconsistent counts"))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        self.check()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let report: Self = crate::scene::parse_json(path, &text)?;
        report.check()?;
        Ok(report)
    }
}

/// Scores `estimates` against `truth`. Tolerances are in seconds and
/// radians. An empty estimate list scores PD = PFA = 0.
pub fn match_reflections(
    estimates: &ReflectionList,
    truth: &ReflectionList,
    tol_tau: f64,
    tol_omega: f64,
) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::invalid("evaluation", "ground truth is empty"));
    }
    if !(tol_tau > 0.0 && tol_omega > 0.0) {
        return Err(Error::invalid("evaluation", "tolerances must be > 0"));
    }
    let est = estimates.as_slice();
    let tru = truth.as_slice();
    let (ne, nt) = (est.len(), tru.len());
    let n = ne.max(nt);
    // any admissible pair costs at most 2, so one extra pair outweighs
    // every possible cost saving
    let forbidden = 2.0 * n as f64 + 1.0;
    let mut cost = vec![vec![forbidden; n]; n];
    let mut errors = vec![vec![None; nt]; ne];
    for (i, e) in est.iter().enumerate() {
        for (j, t) in tru.iter().enumerate() {
            let dt = (e.delay - t.delay).abs();
            let dw = angular_distance(&e.doa, &t.doa);
            if dt <= tol_tau && dw <= tol_omega {
                cost[i][j] = dt / tol_tau + dw / tol_omega;
                errors[i][j] = Some((dt, dw));
            }
        }
    }
    let assignment = if n == 0 { Vec::new() } else { hungarian(&cost) };
    let mut matches: Vec<Match> = assignment
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < ne && j < nt)
        .filter_map(|(i, &j)| {
            errors[i][j].map(|(dt, dw)| Match {
                estimate: i,
                truth: j,
                delay_error: dt,
                angular_error: dw,
            })
        })
        .collect();
    matches.sort_by_key(|m| m.estimate);
    let tp = matches.len();
    let pd = tp as f64 / nt as f64;
    let pfa = if ne == 0 { 0.0 } else { (ne - tp) as f64 / ne as f64 };
    Ok(EvalReport {
        tol_tau,
        tol_omega,
        counts: Counts {
            truth: nt,
            detections: ne,
            true_positives: tp,
            false_positives: ne - tp,
            misses: nt - tp,
        },
        pd,
        pd_percent: 100.0 * pd,
        pfa,
        pfa_percent: 100.0 * pfa,
        matches,
    })
}

/// Minimum-cost perfect assignment on a square matrix (shortest augmenting
/// path form). Returns the column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    row_to_col
}
