//! Density clustering of candidates in (delay, direction) space.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::phalcor::Candidate;
use crate::room_sim::{Reflection, ReflectionList};
use crate::scene::{angular_distance, AlgoConfig, Direction};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    /// Radians.
    pub gamma_omega: f64,
    /// Seconds.
    pub gamma_tau: f64,
    pub density_threshold: f64,
    pub min_pts: Option<usize>,
    /// Delay grid step used to count occupied cells.
    pub tau_step: f64,
}

impl From<&AlgoConfig> for ClusterParams {
    fn from(cfg: &AlgoConfig) -> Self {
        Self {
            gamma_omega: cfg.gamma_omega,
            gamma_tau: cfg.gamma_tau,
            density_threshold: cfg.density_threshold,
            min_pts: cfg.min_pts,
            tau_step: cfg.tau_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Candidate indices in ascending order.
    pub members: Vec<usize>,
    pub delay: f64,
    pub doa: Direction,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub clusters: Vec<Cluster>,
    pub noise: Vec<usize>,
    pub min_pts: usize,
}

impl ClusterResult {
    /// Cluster id per candidate, `-1` for noise.
    pub fn labels(&self, n: usize) -> Vec<i64> {
        let mut labels = vec![-1; n];
        for (id, c) in self.clusters.iter().enumerate() {
            for &m in &c.members {
                labels[m] = id as i64;
            }
        }
        labels
    }
}

/// `max(2, ⌈density_threshold · N / occupied⌉)`, where `occupied` counts
/// distinct delay-grid cells holding at least one candidate.
pub fn min_pts_for(candidates: &[Candidate], density_threshold: f64, tau_step: f64) -> usize {
    if candidates.is_empty() {
        return 2;
    }
    let cells: BTreeSet<i64> = candidates.iter().map(|c| (c.tau / tau_step).round() as i64).collect();
    let raw = (density_threshold * candidates.len() as f64 / cells.len() as f64).ceil();
    (raw as usize).max(2)
}

pub fn neighbors(a: &Candidate, b: &Candidate, gamma_omega: f64, gamma_tau: f64) -> bool {
    (a.tau - b.tau).abs() <= gamma_tau && angular_distance(&a.doa, &b.doa) <= gamma_omega
}

pub fn dbscan(candidates: &[Candidate], params: &ClusterParams) -> ClusterResult {
    let min_pts = params
        .min_pts
        .unwrap_or_else(|| min_pts_for(candidates, params.density_threshold, params.tau_step));
    dbscan_min_pts(candidates, params.gamma_omega, params.gamma_tau, min_pts)
}

/// DBSCAN with the box neighborhood `|Δτ| ≤ γ_τ ∧ ΔΩ ≤ γ_Ω`. A point's
/// neighborhood includes itself. Clusters grow from core points in input
/// order; a border point joins the first cluster that reaches it. A
/// cluster left with fewer than `min_pts` members because its border points
/// were already taken is dissolved into noise.
pub fn dbscan_min_pts(candidates: &[Candidate], gamma_omega: f64, gamma_tau: f64, min_pts: usize) -> ClusterResult {
    let n = candidates.len();
    let mut by_tau: Vec<usize> = (0..n).collect();
    by_tau.sort_by(|&a, &b| candidates[a].tau.total_cmp(&candidates[b].tau).then(a.cmp(&b)));
    let taus: Vec<f64> = by_tau.iter().map(|&i| candidates[i].tau).collect();
    let region = |p: usize| -> Vec<usize> {
        let t = candidates[p].tau;
        let lo = taus.partition_point(|&x| x < t - gamma_tau);
        let hi = taus.partition_point(|&x| x <= t + gamma_tau);
        let mut out: Vec<usize> = by_tau[lo..hi]
            .iter()
            .copied()
            .filter(|&q| neighbors(&candidates[p], &candidates[q], gamma_omega, gamma_tau))
            .collect();
        out.sort_unstable();
        out
    };

    let neigh: Vec<Vec<usize>> = (0..n).map(region).collect();
    let core: Vec<bool> = neigh.iter().map(|v| v.len() >= min_pts).collect();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for p in 0..n {
        if !core[p] || label[p].is_some() {
            continue;
        }
        let id = members.len();
        members.push(Vec::new());
        label[p] = Some(id);
        let mut queue = VecDeque::from([p]);
        while let Some(x) = queue.pop_front() {
            members[id].push(x);
            if !core[x] {
                continue;
            }
            for &y in &neigh[x] {
                if label[y].is_none() {
                    label[y] = Some(id);
                    queue.push_back(y);
                }
            }
        }
    }
    let undersized: Vec<bool> = members.iter().map(|m| m.len() < min_pts).collect();
    let clusters = members
        .into_iter()
        .filter(|m| m.len() >= min_pts)
        .map(|mut m| {
            m.sort_unstable();
            centroid_of(m, candidates)
        })
        .collect::<Vec<_>>();
    let mut noise: Vec<usize> = (0..n).filter(|&i| label[i].is_none()).collect();
    for (id, _) in label.iter().enumerate().filter(|(_, l)| l.is_some_and(|l| undersized[l])) {
        noise.push(id);
    }
    noise.sort_unstable();
    ClusterResult {
        clusters,
        noise,
        min_pts,
    }
}

/// Score-weighted mean delay and normalized score-weighted mean of unit
/// vectors.
fn centroid_of(members: Vec<usize>, candidates: &[Candidate]) -> Cluster {
    let mut w = 0.0;
    let mut tau = 0.0;
    let mut v = [0.0; 3];
    for &m in &members {
        let c = &candidates[m];
        w += c.score;
        tau += c.score * c.tau;
        let u = c.doa.unit_vector();
        for i in 0..3 {
            v[i] += c.score * u[i];
        }
    }
    let doa = if v.iter().all(|x| *x == 0.0) {
        candidates[members[0]].doa
    } else {
        Direction::from_vector(v)
    };
    Cluster {
        delay: if w > 0.0 { tau / w } else { candidates[members[0]].tau },
        doa,
        score: w,
        members,
    }
}

/// One reflection per cluster, sorted by delay, with amplitude equal to the
/// cluster score relative to the largest cluster score.
pub fn centroids(result: &ClusterResult) -> Result<ReflectionList> {
    let top = result.clusters.iter().map(|c| c.score).fold(0.0, f64::max);
    let refl = result
        .clusters
        .iter()
        .map(|c| Reflection {
            delay: c.delay.max(0.0),
            doa: c.doa,
            amplitude: if top > 0.0 { c.score / top } else { 0.0 },
        })
        .collect();
    ReflectionList::new(refl, false)
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterRow {
    cluster_id: i64,
    tau_ms: f64,
    colatitude_deg: f64,
    azimuth_deg: f64,
    score: f64,
}

/// One row per candidate with its cluster id (`-1` for noise).
pub fn write_clusters_csv(path: impl AsRef<Path>, result: &ClusterResult, candidates: &[Candidate]) -> Result<()> {
    let labels = result.labels(candidates.len());
    let mut w = csv::Writer::from_path(path)?;
    for (c, id) in candidates.iter().zip(labels) {
        let (colat, az) = c.doa.to_degrees();
        w.serialize(ClusterRow {
            cluster_id: id,
            tau_ms: c.tau * 1e3,
            colatitude_deg: colat,
            azimuth_deg: az,
            score: c.score,
        })?;
    }
    w.flush()?;
    Ok(())
}
