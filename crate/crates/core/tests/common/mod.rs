#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refloc::clustering::neighbors;
use refloc::phalcor::Candidate;
use refloc::room_sim::{self, ArrayRecording, Reflection, ReflectionList};
use refloc::scene::{angular_distance, shipped_scenario, AlgoConfig, Direction, Scenario};

pub fn cand(tau: f64, colat_deg: f64, az_deg: f64, score: f64) -> Candidate {
    Candidate {
        tau,
        doa: Direction::from_degrees(colat_deg, az_deg).unwrap(),
        score,
        direct_corr: 1.0,
        residual: 0.0,
    }
}

/// Points packed densely enough that neighborhoods overlap.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Vec<Candidate> {
    let n = rng.random_range(1..=50);
    (0..n)
        .map(|_| {
            cand(
                rng.random_range(0.0..2e-3),
                rng.random_range(60.0..100.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(0.1..2.0),
            )
        })
        .collect()
}

/// Connected components of core points under the neighbor relation, each
/// border point attached to the adjacent component with the smallest core
/// index, as sets of member indices; plus the noise set. Components left
/// below `min_pts` members are noise.
pub fn brute_force(c: &[Candidate], go: f64, gt: f64, min_pts: usize) -> (BTreeSet<BTreeSet<usize>>, BTreeSet<usize>) {
    let n = c.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| neighbors(&c[i], &c[j], go, gt)).collect())
        .collect();
    let core: Vec<bool> = (0..n).map(|i| adj[i].iter().filter(|&&x| x).count() >= min_pts).collect();
    // label each core point with the smallest core index reachable through cores
    let mut comp: Vec<Option<usize>> = vec![None; n];
    for s in 0..n {
        if !core[s] || comp[s].is_some() {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = Some(s);
        while let Some(x) = stack.pop() {
            for y in 0..n {
                if core[y] && adj[x][y] && comp[y].is_none() {
                    comp[y] = Some(s);
                    stack.push(y);
                }
            }
        }
    }
    for b in 0..n {
        if core[b] {
            continue;
        }
        comp[b] = (0..n).filter(|&x| core[x] && adj[b][x]).filter_map(|x| comp[x]).min();
    }
    let mut clusters = std::collections::BTreeMap::<usize, BTreeSet<usize>>::new();
    let mut noise = BTreeSet::new();
    for i in 0..n {
        match comp[i] {
            Some(k) => {
                clusters.entry(k).or_default().insert(i);
            }
            None => {
                noise.insert(i);
            }
        }
    }
    for small in clusters.values().filter(|m| m.len() < min_pts) {
        noise.extend(small.iter().copied());
    }
    clusters.retain(|_, m| m.len() >= min_pts);
    (clusters.into_values().collect(), noise)
}

fn random_direction(rng: &mut ChaCha8Rng) -> Direction {
    let z: f64 = rng.random_range(-1.0..1.0);
    Direction::from_degrees(z.acos().to_degrees(), rng.random_range(-180.0..180.0)).unwrap()
}

/// Noiseless room-like scene: a direct sound and three reflections within
/// 20 ms of it, every pair at least 1 ms and 20° apart, rendered on the
/// room 1 array.
pub struct OracleScene {
    pub scenario: Scenario,
    pub config: AlgoConfig,
    /// Normalized: direct sound first, at delay 0.
    pub truth: ReflectionList,
    pub recording: ArrayRecording,
}

pub fn oracle_scene(seed: u64) -> OracleScene {
    let (scenario, config) = shipped_scenario(1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = 0.01;
    let mut paths = vec![Reflection { delay: t0, doa: random_direction(&mut rng), amplitude: 1.0 }];
    while paths.len() < 4 {
        let r = Reflection {
            delay: t0 + rng.random_range(1e-3..20e-3),
            doa: random_direction(&mut rng),
            amplitude: rng.random_range(0.3..0.8),
        };
        if paths
            .iter()
            .all(|p| (p.delay - r.delay).abs() >= 1e-3 && angular_distance(&p.doa, &r.doa) >= 20f64.to_radians())
        {
            paths.push(r);
        }
    }
    let refl = ReflectionList::new(paths, false).unwrap();
    let source = room_sim::synth_source(scenario.source_duration, scenario.fs, seed).unwrap();
    let recording = room_sim::synthesize_recording(&refl, &source, &scenario).unwrap();
    let truth = room_sim::ground_truth_early(&refl, 1.0).unwrap();
    OracleScene { scenario, config, truth, recording }
}
