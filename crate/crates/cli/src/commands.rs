use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde::Serialize;

use refloc::acoustics::{self, load_params, replace_early, schroeder_decay, synthesize_parametric_rir};
use refloc::clustering::write_clusters_csv;
use refloc::eval::{match_reflections, EvalReport};
use refloc::phalcor::write_candidates_csv;
use refloc::pipeline::{Estimate, Estimator};
use refloc::room_sim::{simulate, write_mono_wav, ArrayRecording, ReflectionList, SceneSummary};
use refloc::scene::{self, AlgoConfig, AlgoFile, ArraySpec, Scenario, SHIPPED_ROOMS};

use crate::manifest::{sha256_hex, RunManifest};

/// Bad command-line input that clap cannot catch; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Scenario given by file or by bundled room number, with the text it was
/// parsed from.
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub algo: AlgoConfig,
    pub text: String,
}

pub fn load_scenario(file: Option<&Path>, room: Option<usize>) -> Result<LoadedScenario> {
    let (text, origin) = match (file, room) {
        (Some(p), _) => (
            fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            p.to_path_buf(),
        ),
        (None, Some(k)) => (scene::shipped_scenario_json(k)?.to_string(), PathBuf::from(format!("room{k}.json"))),
        (None, None) => return Err(usage("either --scenario or --room is required")),
    };
    let (scenario, algo) = scene::parse_scenario(&origin, &text)?;
    Ok(LoadedScenario { scenario, algo, text })
}

fn config_hash(algo: &AlgoConfig) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(&AlgoFile::from_config(algo))?.as_bytes()))
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn simulate_cmd(scenario: Option<&Path>, room: Option<usize>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut loaded = load_scenario(scenario, room)?;
    if let Some(s) = seed {
        loaded.scenario.rng_seed = s;
    }
    create_dir(out)?;
    let mut m = RunManifest::new("simulate", out);
    m.scenario_sha256 = Some(sha256_hex(loaded.text.as_bytes()));
    m.seed = Some(loaded.scenario.rng_seed);
    let sim = m.time("simulate", || simulate(&loaded.scenario))?;
    let summary = m.time("summary", || SceneSummary::from_reflections(&loaded.scenario, &sim.reflections))?;
    sim.recording.write_wav(m.output("recording.wav"))?;
    sim.truth.write_csv(m.output("truth.csv"))?;
    write_json(&m.output("summary.json"), &summary)?;
    info!(
        "{} early reflections, DRR {:.2} dB, distance {:.3} m",
        summary.early_reflections, summary.drr_db, summary.distance
    );
    m.write()?;
    Ok(())
}

/// Array and estimator settings from a config file, a bundled room, or
/// the defaults.
fn load_estimate_config(config: Option<&Path>, room: Option<usize>) -> Result<(ArraySpec, AlgoConfig, String)> {
    if let Some(p) = config {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let (array, algo) = scene::load_estimate_config(p)?;
        return Ok((array, algo, text));
    }
    if let Some(k) = room {
        let loaded = load_scenario(None, Some(k))?;
        return Ok((loaded.scenario.array, loaded.algo, loaded.text));
    }
    let file = scene::EstimateConfigFile::default();
    let (array, algo) = file.resolve()?;
    Ok((array, algo, String::new()))
}

fn write_estimate(m: &mut RunManifest, est: &Estimate) -> Result<()> {
    write_candidates_csv(m.output("candidates.csv"), &est.candidates)?;
    write_clusters_csv(m.output("clusters.csv"), &est.clusters, &est.candidates)?;
    est.reflections.write_csv(m.output("estimates.csv"))?;
    Ok(())
}

pub fn estimate_cmd(input: &Path, config: Option<&Path>, room: Option<usize>, out: &Path) -> Result<()> {
    let (array, algo, text) = load_estimate_config(config, room)?;
    let recording = ArrayRecording::read_wav(input)?;
    create_dir(out)?;
    let mut m = RunManifest::new("estimate", out);
    m.input(input)?;
    if !text.is_empty() {
        m.scenario_sha256 = Some(sha256_hex(text.as_bytes()));
    }
    m.config_sha256 = Some(config_hash(&algo)?);
    let estimator = m.time("setup", || Estimator::new(&array, &algo, recording.fs))?;
    let est = m.time("estimate", || estimator.estimate(&recording))?;
    info!(
        "{} candidates, {} reflections including the direct sound",
        est.candidates.len(),
        est.reflections.len()
    );
    write_estimate(&mut m, &est)?;
    m.write()?;
    Ok(())
}

pub fn eval_cmd(estimates: &Path, truth: &Path, tol_tau_ms: f64, tol_omega_deg: f64, out: &Path) -> Result<EvalReport> {
    let est = ReflectionList::read_csv(estimates)?;
    let tru = ReflectionList::read_csv(truth)?;
    let report = match_reflections(&est, &tru, tol_tau_ms * 1e-3, tol_omega_deg.to_radians())?;
    create_dir(out)?;
    let mut m = RunManifest::new("eval", out);
    m.input(estimates)?;
    m.input(truth)?;
    report.write_json(m.output("report.json"))?;
    m.write()?;
    Ok(report)
}

#[derive(Debug, Serialize)]
struct SynthSummary {
    t60_schroeder: f64,
    drr_db: f64,
    energy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    hybrid_energy: Option<f64>,
}

pub fn synth_cmd(params: &Path, estimates: Option<&Path>, fs_hz: f64, seed: u64, out: &Path) -> Result<()> {
    let p = load_params(params)?;
    let est = estimates.map(ReflectionList::read_csv).transpose()?;
    create_dir(out)?;
    let mut m = RunManifest::new("synth", out);
    m.input(params)?;
    if let Some(e) = estimates {
        m.input(e)?;
    }
    m.seed = Some(seed);
    let (rir, list) = m.time("anchor", || synthesize_parametric_rir(&p, fs_hz, seed))?;
    write_mono_wav(m.output("anchor.wav"), &rir.samples, rir.fs)?;
    list.write_csv(m.output("anchor_reflections.csv"))?;
    let mut summary = SynthSummary {
        t60_schroeder: schroeder_decay(&rir).t60()?,
        drr_db: acoustics::drr(&rir, acoustics::DIRECT_WINDOW),
        energy: rir.energy(),
        hybrid_energy: None,
    };
    if let Some(est) = est {
        let (hybrid, hlist) = m.time("hybrid", || replace_early((&rir, &list), &est.normalize()?, acoustics::EARLY_WINDOW))?;
        write_mono_wav(m.output("hybrid.wav"), &hybrid.samples, hybrid.fs)?;
        hlist.write_csv(m.output("hybrid_reflections.csv"))?;
        summary.hybrid_energy = Some(hybrid.energy());
    }
    write_json(&m.output("summary.json"), &summary)?;
    m.write()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Table1Row {
    room: usize,
    length: f64,
    width: f64,
    height: f64,
    t60: f64,
    critical_distance: f64,
    distance: f64,
    drr_db: f64,
    early_reflections: usize,
}

#[derive(Debug, Serialize)]
struct Table2Row {
    room: usize,
    reflections: usize,
    detections: usize,
    true_positives: usize,
    pd_percent: f64,
    pfa_percent: f64,
    direct_error_deg: f64,
}

fn rooms(room: Option<usize>) -> Result<Vec<usize>> {
    match room {
        Some(k) if (1..=SHIPPED_ROOMS).contains(&k) => Ok(vec![k]),
        Some(k) => Err(usage(format!("--room {k} is not in 1..={SHIPPED_ROOMS}"))),
        None => Ok((1..=SHIPPED_ROOMS).collect()),
    }
}

pub fn reproduce_cmd(table: u8, room: Option<usize>, seed: Option<u64>, out: &Path) -> Result<()> {
    let rooms = rooms(room)?;
    create_dir(out)?;
    let mut m = RunManifest::new("reproduce", out);
    m.seed = seed;
    match table {
        1 => {
            let mut w = csv::Writer::from_path(m.output("table1.csv"))?;
            for k in rooms {
                let loaded = load_scenario(None, Some(k))?;
                let s = m.time(&format!("room{k}"), || SceneSummary::of(&loaded.scenario))?;
                let d = loaded.scenario.room.dimensions;
                w.serialize(Table1Row {
                    room: k,
                    length: d[0],
                    width: d[1],
                    height: d[2],
                    t60: s.t60.unwrap_or(f64::INFINITY),
                    critical_distance: s.critical_distance.unwrap_or(f64::INFINITY),
                    distance: s.distance,
                    drr_db: s.drr_db,
                    early_reflections: s.early_reflections,
                })?;
            }
            w.flush()?;
        }
        2 => {
            let mut rows = Vec::new();
            let mut cached: Option<((ArraySpec, AlgoConfig, f64), Estimator)> = None;
            for k in rooms {
                let mut loaded = load_scenario(None, Some(k))?;
                if let Some(s) = seed {
                    loaded.scenario.rng_seed = s;
                }
                let sc = &loaded.scenario;
                let sim = m.time(&format!("room{k}_simulate"), || simulate(sc))?;
                // steering does not depend on where the array sits
                let mut key_array = sc.array.clone();
                key_array.center = [0.0; 3];
                let key = (key_array, loaded.algo.clone(), sc.fs);
                if cached.as_ref().is_none_or(|(k0, _)| *k0 != key) {
                    let e = m.time(&format!("room{k}_setup"), || Estimator::new(&sc.array, &loaded.algo, sc.fs))?;
                    cached = Some((key, e));
                }
                let estimator = &cached.as_ref().expect("estimator built above").1;
                let est = m.time(&format!("room{k}_estimate"), || estimator.estimate(&sim.recording))?;
                let report = match_reflections(
                    &est.reflections,
                    &sim.truth,
                    refloc::eval::DEFAULT_TOL_TAU,
                    refloc::eval::DEFAULT_TOL_OMEGA_DEG.to_radians(),
                )?;
                let dir = format!("room{k}");
                create_dir(&out.join(&dir))?;
                sim.truth.write_csv(m.output(&format!("{dir}/truth.csv")))?;
                write_candidates_csv(m.output(&format!("{dir}/candidates.csv")), &est.candidates)?;
                write_clusters_csv(m.output(&format!("{dir}/clusters.csv")), &est.clusters, &est.candidates)?;
                est.reflections.write_csv(m.output(&format!("{dir}/estimates.csv")))?;
                report.write_json(m.output(&format!("{dir}/report.json")))?;
                let truth_direct = sim.truth.direct().context("truth has no direct sound")?.doa;
                info!("room {k}: PD {:.1}% PFA {:.1}%", report.pd_percent, report.pfa_percent);
                rows.push(Table2Row {
                    room: k,
                    reflections: report.counts.truth,
                    detections: report.counts.detections,
                    true_positives: report.counts.true_positives,
                    pd_percent: report.pd_percent,
                    pfa_percent: report.pfa_percent,
                    direct_error_deg: scene::angular_distance(&est.direct_doa, &truth_direct).to_degrees(),
                });
            }
            let mut w = csv::Writer::from_path(m.output("table2.csv"))?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        t => return Err(usage(format!("--table {t} is not 1 or 2"))),
    }
    m.write()?;
    Ok(())
}
