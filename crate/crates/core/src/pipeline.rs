//! End-to-end estimation: STFT, focusing, delay scan, clustering.

use log::info;

use crate::array_model::{build_dictionary, SteeringDictionary};
use crate::clustering::{centroids, dbscan, ClusterParams, ClusterResult};
use crate::error::{Error, Result};
use crate::focusing::{compute_focusing, apply_focusing, FocusingSet};
use crate::phalcor::{estimate_correlation, scan_correlation, BandDictionary, Candidate};
use crate::room_sim::{ArrayRecording, Reflection, ReflectionList};
use crate::scene::{AlgoConfig, ArraySpec, Direction};
use crate::tf::stft_bins;

/// Everything that depends only on the array, the configuration and the
/// sampling rate. Building it dominates the cost of a single estimate, so
/// keep one around when processing several recordings.
#[derive(Debug, Clone)]
pub struct Estimator {
    array: ArraySpec,
    cfg: AlgoConfig,
    fs: f64,
    dict: SteeringDictionary,
    fset: FocusingSet,
    bands: Vec<BandDictionary>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub direct_doa: Direction,
    pub candidates: Vec<Candidate>,
    pub clusters: ClusterResult,
    /// Direct sound first (delay 0, amplitude 1), then one entry per cluster.
    pub reflections: ReflectionList,
}

impl Estimator {
    pub fn new(array: &ArraySpec, cfg: &AlgoConfig, fs: f64) -> Result<Self> {
        array.validate()?;
        cfg.validate()?;
        if !(fs > 0.0) {
            return Err(Error::invalid("sampling rate", "must be > 0"));
        }
        let w = (cfg.window_len * fs).round() as usize;
        if w < 2 {
            return Err(Error::invalid("stft", "window shorter than two samples"));
        }
        let bin_hz = fs / w as f64;
        let centers: Vec<f64> = crate::focusing::plan_bands(cfg.band, cfg.focus_bw, bin_hz, w)?
            .iter()
            .map(|b| b.center)
            .collect();
        let dict = build_dictionary(&centers, array, cfg.grid_size)?;
        let fset = compute_focusing(&dict, cfg.band, cfg.focus_bw, cfg.focus_lambda, bin_hz, w)?;
        info!(
            "focusing: {} bands, median residual {:.2e}",
            fset.bands.len(),
            fset.median_residual()
        );
        let bands = fset.bands.iter().map(|b| BandDictionary::new(&dict, b.center)).collect();
        Ok(Self {
            array: array.clone(),
            cfg: cfg.clone(),
            fs,
            dict,
            fset,
            bands,
        })
    }

    pub fn config(&self) -> &AlgoConfig {
        &self.cfg
    }

    pub fn array(&self) -> &ArraySpec {
        &self.array
    }

    pub fn dictionary(&self) -> &SteeringDictionary {
        &self.dict
    }

    pub fn focusing(&self) -> &FocusingSet {
        &self.fset
    }

    /// Candidate scan of one recording, without clustering.
    pub fn candidates(&self, rec: &ArrayRecording) -> Result<(Direction, Vec<Candidate>)> {
        if (rec.fs - self.fs).abs() > 1e-9 * self.fs {
            return Err(Error::invalid(
                "recording",
                format!("sampled at {} Hz, estimator built for {} Hz", rec.fs, self.fs),
            ));
        }
        if rec.num_channels() != self.array.num_mics() {
            return Err(Error::invalid(
                "recording",
                format!(
                    "{} channels, array has {} microphones",
                    rec.num_channels(),
                    self.array.num_mics()
                ),
            ));
        }
        let tensor = stft_bins(rec, self.cfg.window_len, self.cfg.overlap, Some(self.fset.bins()))?;
        let focused = apply_focusing(&tensor, &self.fset)?;
        let cset = estimate_correlation(&focused)?;
        let out = scan_correlation(&cset, &self.bands, &self.fset, &self.cfg)?;
        Ok((out.direct_doa, out.candidates))
    }

    pub fn estimate(&self, rec: &ArrayRecording) -> Result<Estimate> {
        let (direct_doa, candidates) = self.candidates(rec)?;
        let clusters = dbscan(&candidates, &ClusterParams::from(&self.cfg));
        info!(
            "{} candidates, {} clusters, {} noise, minPts {}",
            candidates.len(),
            clusters.clusters.len(),
            clusters.noise.len(),
            clusters.min_pts
        );
        let reflections = with_direct(direct_doa, &centroids(&clusters)?)?;
        Ok(Estimate {
            direct_doa,
            candidates,
            clusters,
            reflections,
        })
    }
}

/// Prepends the direct sound (delay 0, amplitude 1) to cluster estimates.
pub fn with_direct(direct_doa: Direction, clusters: &ReflectionList) -> Result<ReflectionList> {
    let mut all = vec![Reflection {
        delay: 0.0,
        doa: direct_doa,
        amplitude: 1.0,
    }];
    all.extend(clusters.iter().copied());
    ReflectionList::new(all, true)
}
