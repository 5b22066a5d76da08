//! Phase-aligned spatial correlation analysis.
//!
//! Focused spatial correlation matrices are combined across frequency with
//! a delay-dependent phase so that the cross term between the direct sound
//! and a reflection at delay `τ` adds coherently. The dominant singular pair
//! of the aligned matrix then carries the reflection steering vectors (left)
//! and the direct-sound steering vector (right).

use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::array_model::special::C64;
use crate::array_model::{SteeringAt, SteeringDictionary, SteeringVector};
use crate::error::{Error, Result};
use crate::focusing::FocusingSet;
use crate::par::parallel_map;
use crate::scene::{angular_distance, AlgoConfig, Direction};
use crate::tf::StftTensor;

/// OMP stops once an extra atom lowers the relative residual by less than this.
pub const OMP_STALL: f64 = 1e-3;

/// Left singular vectors correlating with the direct sound at least this
/// much are the direct sound's own autocorrelation.
pub const DIRECT_LEAK_CORR: f64 = 0.9;

/// Step sizes of the off-grid direction search, coarse to fine.
pub const REFINE_STEPS_DEG: [f64; 4] = [2.0, 1.0, 0.5, 0.25];

/// Sample spatial correlation matrices of a focused spectrogram.
#[derive(Debug, Clone)]
pub struct CorrelationSet {
    /// Indexed by `bin - first_bin`.
    pub matrices: Vec<DMatrix<C64>>,
    pub first_bin: usize,
    pub bin_hz: f64,
    pub frames: usize,
}

impl CorrelationSet {
    pub fn bins(&self) -> Range<usize> {
        self.first_bin..self.first_bin + self.matrices.len()
    }

    pub fn get(&self, bin: usize) -> Option<&DMatrix<C64>> {
        bin.checked_sub(self.first_bin).and_then(|i| self.matrices.get(i))
    }
}

/// `R(f) = (1/L) Σ_l p(f,l) p(f,l)ᴴ`, symmetrized.
pub fn estimate_correlation(tensor: &StftTensor) -> Result<CorrelationSet> {
    let frames = tensor.num_frames();
    if frames < 2 {
        return Err(Error::invalid(
            "correlation",
            format!("{frames} frame(s); averaging needs at least 2"),
        ));
    }
    let q = tensor.num_mics();
    let bins: Vec<usize> = (0..tensor.num_bins()).collect();
    let matrices = parallel_map(&bins, |&k| {
        let p = DMatrix::from_fn(q, frames, |m, l| tensor.data[[m, k, l]]);
        let r = &p * p.adjoint() / C64::new(frames as f64, 0.0);
        (&r + r.adjoint()) * C64::new(0.5, 0.0)
    });
    Ok(CorrelationSet {
        matrices,
        first_bin: tensor.first_bin,
        bin_hz: tensor.bin_hz,
        frames,
    })
}

/// Top singular triple of a matrix and the ratio `σ₂/σ₁`.
#[derive(Debug, Clone)]
pub struct Rank1 {
    pub sigma1: f64,
    pub u: SteeringVector,
    pub v: SteeringVector,
    pub sigma_ratio: f64,
}

pub fn svd_rank1(m: &DMatrix<C64>) -> Result<Rank1> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::numerical("svd of a non-finite matrix"));
    }
    // nalgebra's complex SVD can misreport σ₁ (by several percent on exact
    // rank-1 input), so decompose the real embedding [[Re, -Im], [Im, Re]]
    // instead. Each singular value of M shows up there twice, and a real
    // singular vector [x; y] is x + iy up to a phase shared by u and v.
    let (r, c) = m.shape();
    let big = DMatrix::<f64>::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let svd = big.svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = |k: usize| order.get(k).map_or(0.0, |&i| svd.singular_values[i]);
    let (sigma1, second) = (s(0), s(2));
    let top = order[0];
    let ur = svd.u.as_ref().expect("u requested").column(top);
    let vr = svd.v_t.as_ref().expect("vᵀ requested").row(top);
    let u = SteeringVector::from_fn(r, |i, _| C64::new(ur[i], ur[i + r]));
    let v = SteeringVector::from_fn(c, |i, _| C64::new(vr[i], vr[i + c]));
    Ok(Rank1 {
        sigma1,
        u,
        v,
        sigma_ratio: if sigma1 > 0.0 { second / sigma1 } else { 1.0 },
    })
}

/// `R̄(τ, f)` with its dominant singular pair.
#[derive(Debug, Clone)]
pub struct AlignedMatrix {
    pub tau: f64,
    /// Frequency of the first bin in the sum.
    pub f: f64,
    pub matrix: DMatrix<C64>,
    pub sigma1: f64,
    pub u: SteeringVector,
    pub v: SteeringVector,
    pub sigma_ratio: f64,
}

/// The weighted terms `ω_j R(f_j)` of one phase-aligned sum, reusable across
/// delays.
#[derive(Debug, Clone)]
pub struct PhaseAligner {
    terms: Vec<DMatrix<C64>>,
    weights: Vec<f64>,
    bin_hz: f64,
    f: f64,
}

impl PhaseAligner {
    /// Weights `ω_j ∝ 1/trace R(f_j)` summing to one; bins with zero trace
    /// get weight zero.
    pub fn new(cset: &CorrelationSet, bins: Range<usize>) -> Result<Self> {
        let own = cset.bins();
        if bins.is_empty() || bins.start < own.start || bins.end > own.end {
            return Err(Error::invalid(
                "phase alignment",
                format!("bins {bins:?} not within {own:?}"),
            ));
        }
        let mats: Vec<&DMatrix<C64>> = bins.clone().map(|b| cset.get(b).expect("in range")).collect();
        let raw: Vec<f64> = mats
            .iter()
            .map(|r| {
                // |trace| rather than its real part: a global phase on every
                // R(f) must not change the weights
                let t = r.trace().norm();
                if t > 0.0 && t.is_finite() {
                    1.0 / t
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::numerical("every correlation matrix in the sum has zero trace"));
        }
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let terms = mats
            .iter()
            .zip(&weights)
            .map(|(r, w)| *r * C64::new(*w, 0.0))
            .collect();
        Ok(Self {
            terms,
            weights,
            bin_hz: cset.bin_hz,
            f: bins.start as f64 * cset.bin_hz,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_j ω_j R(f_j)`.
    pub fn weighted_sum(&self) -> DMatrix<C64> {
        self.matrix(0.0)
    }

    /// `Σ_j ω_j R(f_j) e^{i2πτ jΔf}`.
    pub fn matrix(&self, tau: f64) -> DMatrix<C64> {
        let (rows, cols) = self.terms[0].shape();
        let mut acc = DMatrix::<C64>::zeros(rows, cols);
        let step = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * tau * self.bin_hz);
        let mut phase = C64::new(1.0, 0.0);
        for (j, t) in self.terms.iter().enumerate() {
            if j % 64 == 0 {
                // re-anchor the recurrence
                phase = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * tau * self.bin_hz * j as f64);
            }
            acc.zip_apply(t, |a, b| *a += b * phase);
            phase *= step;
        }
        acc
    }

    pub fn align(&self, tau: f64) -> Result<AlignedMatrix> {
        let matrix = self.matrix(tau);
        let r1 = svd_rank1(&matrix)?;
        Ok(AlignedMatrix {
            tau,
            f: self.f,
            matrix,
            sigma1: r1.sigma1,
            u: r1.u,
            v: r1.v,
            sigma_ratio: r1.sigma_ratio,
        })
    }
}

/// Phase-aligned transform over `j_f` bins starting at `start_bin`.
pub fn phase_align(cset: &CorrelationSet, tau: f64, start_bin: usize, j_f: usize) -> Result<AlignedMatrix> {
    PhaseAligner::new(cset, start_bin..start_bin + j_f)?.align(tau)
}

/// A detected (delay, direction) pair before clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tau: f64,
    pub doa: Direction,
    pub score: f64,
    /// Normalized correlation between `v_τ` and the direct-sound steering vector.
    pub direct_corr: f64,
    /// Relative residual of the sparse decomposition of `u_τ`.
    pub residual: f64,
}

/// Unit-norm dictionary atoms at one focusing center, with on-demand
/// atoms for off-grid directions.
#[derive(Debug, Clone)]
pub struct BandDictionary {
    pub f0: f64,
    grid: Vec<Direction>,
    atoms: DMatrix<C64>,
    steering: SteeringAt,
}

impl BandDictionary {
    pub fn new(dict: &SteeringDictionary, f0: f64) -> Self {
        let mut atoms = dict.matrix_at(f0);
        for mut col in atoms.column_iter_mut() {
            let n = col.norm();
            if n > 0.0 {
                col /= C64::new(n, 0.0);
            }
        }
        Self {
            f0,
            grid: dict.grid().to_vec(),
            atoms,
            steering: SteeringAt::new(f0, dict.array()),
        }
    }

    pub fn grid(&self) -> &[Direction] {
        &self.grid
    }

    pub fn atoms(&self) -> &DMatrix<C64> {
        &self.atoms
    }

    /// Normalized steering vector for any direction.
    pub fn atom(&self, dir: &Direction) -> SteeringVector {
        let h = self.steering.vector(dir);
        let n = h.norm();
        h / C64::new(n, 0.0)
    }
}

/// Least-squares fit of `u` on the columns of `a`: coefficients and
/// residual norm. `None` for a rank-deficient basis.
fn lstsq(a: &DMatrix<C64>, u: &SteeringVector) -> Option<(DVector<C64>, f64)> {
    let gram = a.adjoint() * a;
    let chol = gram.cholesky()?;
    let x = chol.solve(&(a.adjoint() * u));
    let r = (u - a * &x).norm();
    r.is_finite().then_some((x, r))
}

fn tangent_basis(u: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if u[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let e1 = cross(u, helper);
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    let e1 = [e1[0] / n, e1[1] / n, e1[2] / n];
    (e1, cross(u, e1))
}

/// Best-improvement pattern search on the sphere, maximizing `objective`.
pub fn refine_direction(start: &Direction, mut objective: impl FnMut(&Direction) -> f64) -> Direction {
    let mut best = *start;
    let mut best_val = objective(&best);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let moves = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (s, s), (s, -s), (-s, s), (-s, -s)];
    for step_deg in REFINE_STEPS_DEG {
        let step = step_deg.to_radians();
        for _ in 0..32 {
            let u = best.unit_vector();
            let (e1, e2) = tangent_basis(u);
            let mut round_best: Option<(Direction, f64)> = None;
            for (a, b) in moves {
                let v = [0, 1, 2].map(|i| u[i] + step * (a * e1[i] + b * e2[i]));
                let cand = Direction::from_vector(v);
                let val = objective(&cand);
                if val > best_val + 1e-12 && round_best.as_ref().is_none_or(|(_, bv)| val > *bv) {
                    round_best = Some((cand, val));
                }
            }
            match round_best {
                Some((d, v)) => {
                    best = d;
                    best_val = v;
                }
                None => break,
            }
        }
    }
    best
}

struct Decomposition {
    dirs: Vec<Direction>,
    coefs: DVector<C64>,
    residual: f64,
}

/// Orthogonal matching pursuit of a unit vector over the band atoms. Each
/// picked atom is moved off the grid before the fit is judged, and with more
/// than one atom all directions get a final joint pass. `None` when no
/// sparse representation reaches `eps_u`.
fn decompose(u: &SteeringVector, band: &BandDictionary, s_max: usize, eps_u: f64) -> Option<Decomposition> {
    let mut selected: Vec<usize> = Vec::new();
    let mut dirs: Vec<Direction> = Vec::new();
    let mut atoms: Vec<SteeringVector> = Vec::new();
    let mut prev = u.norm();
    let mut fit = None;
    let mut residual = u.clone();
    for _ in 0..s_max {
        let corr = band.atoms.adjoint() * &residual;
        let mut pick: Option<(usize, f64)> = None;
        for (g, c) in corr.iter().enumerate() {
            let m = c.norm();
            if !selected.contains(&g) && pick.is_none_or(|(_, b)| m > b) {
                pick = Some((g, m));
            }
        }
        let (g, _) = pick?;
        selected.push(g);
        // move the new atom off the grid before judging the fit, otherwise a
        // path between grid points is split over two neighboring atoms
        let refined = refine_direction(&band.grid[g], |d| {
            let mut cols = atoms.clone();
            cols.push(band.atom(d));
            lstsq(&DMatrix::from_columns(&cols), u).map_or(f64::NEG_INFINITY, |(_, r)| -r)
        });
        dirs.push(refined);
        atoms.push(band.atom(&refined));
        let a = DMatrix::from_columns(&atoms);
        let (x, r) = lstsq(&a, u)?;
        residual = u - &a * &x;
        let improved = prev - r;
        prev = r;
        if r <= eps_u {
            fit = Some(());
            break;
        }
        if improved < OMP_STALL {
            break;
        }
    }
    fit?;

    if dirs.len() > 1 {
        for i in 0..dirs.len() {
            let others: Vec<SteeringVector> = atoms.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, a)| a.clone()).collect();
            let objective = |d: &Direction| {
                let mut cols = others.clone();
                cols.push(band.atom(d));
                lstsq(&DMatrix::from_columns(&cols), u).map_or(f64::NEG_INFINITY, |(_, r)| -r)
            };
            let refined = refine_direction(&dirs[i], objective);
            dirs[i] = refined;
            atoms[i] = band.atom(&refined);
        }
    }
    let (coefs, residual) = lstsq(&DMatrix::from_columns(&atoms), u)?;
    Some(Decomposition { dirs, coefs, residual })
}

/// Candidates carried by one aligned matrix.
///
/// The right singular vector must match the direct-sound steering vector
/// with normalized correlation at least `rho_min`, and the left singular
/// vector must stay below [`DIRECT_LEAK_CORR`] (above it, it is the direct
/// sound correlated with itself, which dominates near τ = 0). The left
/// singular vector is then decomposed into at most `s_max` atoms; the
/// decomposition is kept when its relative residual is at most `eps_u`.
/// Atoms within `omega_th` of the direct sound are dropped and the rest are
/// scored `σ_τ · |coef|`.
pub fn extract_candidates(
    aligned: &AlignedMatrix,
    band: &BandDictionary,
    direct_doa: &Direction,
    cfg: &AlgoConfig,
) -> Vec<Candidate> {
    if !(aligned.sigma1 > 0.0) {
        return Vec::new();
    }
    let h0 = band.atom(direct_doa);
    let rho = (aligned.v.dotc(&h0).norm() / aligned.v.norm()).min(1.0);
    if rho < cfg.rho_min {
        return Vec::new();
    }
    // u aligned with the direct sound as well: the direct autocorrelation
    // around τ = 0, not a reflection
    if aligned.u.dotc(&h0).norm() / aligned.u.norm() >= DIRECT_LEAK_CORR {
        return Vec::new();
    }
    let Some(dec) = decompose(&aligned.u, band, cfg.s_max, cfg.eps_u) else {
        return Vec::new();
    };
    let residual = dec.residual.clamp(0.0, 1.0);
    dec.dirs
        .iter()
        .zip(dec.coefs.iter())
        .filter(|(d, _)| angular_distance(d, direct_doa) > cfg.omega_th)
        .map(|(d, c)| Candidate {
            tau: aligned.tau,
            doa: *d,
            score: aligned.sigma1 * c.norm(),
            direct_corr: rho,
            residual,
        })
        .filter(|c| c.score > 0.0)
        .collect()
}

/// Diagonal loading of the MVDR inverse, relative to `trace / Q`.
pub const MVDR_LOADING: f64 = 1e-4;

/// Local maxima of the grid spectrum refined off-grid before picking the
/// direct sound.
pub const MVDR_STARTS: usize = 8;

/// Neighborhood of a local maximum, in units of the mean grid spacing.
pub const MVDR_PEAK_RADIUS: f64 = 1.5;

/// Direct-sound direction: maximizer of the minimum-variance
/// distortionless-response spectrum `Σ_b 1 / (âᴴ M_b⁻¹ â)`, searched from the
/// strongest [`MVDR_STARTS`] local maxima of the grid. `M_b` is the trace-weighted correlation sum of band
/// `b`, normalized to unit trace and lightly loaded.
///
/// Low-order arrays have wide conventional beams that strong early
/// reflections pull toward themselves; the adaptive spectrum is much
/// sharper.
pub fn estimate_direct_doa(aligners: &[(&BandDictionary, &PhaseAligner)]) -> Result<Direction> {
    if aligners.is_empty() {
        return Err(Error::invalid("direct sound", "no focusing bands"));
    }
    let mut inverses = Vec::with_capacity(aligners.len());
    for (_, al) in aligners {
        let mut m = al.weighted_sum();
        let q = m.nrows();
        let t = m.trace().re;
        if !(t > 0.0) {
            return Err(Error::numerical("zero correlation power"));
        }
        m /= C64::new(t, 0.0);
        for i in 0..q {
            m[(i, i)] += C64::new(MVDR_LOADING / q as f64, 0.0);
        }
        let inv = m
            .cholesky()
            .ok_or_else(|| Error::numerical("correlation sum is not positive definite"))?
            .inverse();
        inverses.push(inv);
    }
    let grid = aligners[0].0.grid();
    let mut power = vec![0.0; grid.len()];
    for ((band, _), inv) in aligners.iter().zip(&inverses) {
        let ia = inv * band.atoms();
        for (g, p) in power.iter_mut().enumerate() {
            *p += 1.0 / band.atoms().column(g).dotc(&ia.column(g)).re;
        }
    }
    let spectrum = |d: &Direction| -> f64 {
        aligners
            .iter()
            .zip(&inverses)
            .map(|((band, _), inv)| {
                let a = band.atom(d);
                1.0 / a.dotc(&(inv * &a)).re
            })
            .sum()
    };
    // On clean data the peaks are far narrower than the grid spacing, so the
    // grid value says more about how close a path sits to a grid point than
    // about its power. Refine several local maxima and compare afterwards.
    let radius = MVDR_PEAK_RADIUS * (4.0 * std::f64::consts::PI / grid.len() as f64).sqrt();
    let mut peaks: Vec<usize> = (0..grid.len())
        .filter(|&g| {
            (0..grid.len()).all(|h| h == g || power[h] <= power[g] || angular_distance(&grid[g], &grid[h]) > radius)
        })
        .collect();
    peaks.sort_by(|&a, &b| power[b].total_cmp(&power[a]));
    peaks.truncate(MVDR_STARTS);
    let mut best: Option<(Direction, f64)> = None;
    for g in peaks {
        let d = refine_direction(&grid[g], &spectrum);
        let v = spectrum(&d);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((d, v));
        }
    }
    best.map(|(d, _)| d).ok_or_else(|| Error::numerical("empty direction grid"))
}

/// Bin windows of a focusing band: the whole band, or consecutive
/// non-overlapping runs of `j_f` bins (a band shorter than `j_f` is used
/// whole).
pub fn band_windows(bins: Range<usize>, j_f: Option<usize>) -> Vec<Range<usize>> {
    match j_f {
        Some(j) if j < bins.len() => (0..bins.len() / j)
            .map(|w| bins.start + w * j..bins.start + (w + 1) * j)
            .collect(),
        _ => vec![bins],
    }
}

#[derive(Debug, Clone)]
pub struct ScanOutput {
    pub direct_doa: Direction,
    pub candidates: Vec<Candidate>,
}

/// Full delay scan of a focused spectrogram: direct-sound bootstrap, then
/// phase alignment and candidate extraction for every band window and
/// every delay of the grid.
pub fn scan(focused: &StftTensor, dict: &SteeringDictionary, fset: &FocusingSet, cfg: &AlgoConfig) -> Result<ScanOutput> {
    let cset = estimate_correlation(focused)?;
    let bands: Vec<BandDictionary> = fset.bands.iter().map(|b| BandDictionary::new(dict, b.center)).collect();
    scan_correlation(&cset, &bands, fset, cfg)
}

/// `scan` on precomputed correlation matrices and band dictionaries.
pub fn scan_correlation(
    cset: &CorrelationSet,
    bands: &[BandDictionary],
    fset: &FocusingSet,
    cfg: &AlgoConfig,
) -> Result<ScanOutput> {
    let whole: Vec<PhaseAligner> = fset
        .bands
        .iter()
        .map(|b| PhaseAligner::new(cset, b.bins.clone()))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&BandDictionary, &PhaseAligner)> = bands.iter().zip(&whole).collect();
    let direct_doa = estimate_direct_doa(&pairs)?;

    let mut windows: Vec<(usize, PhaseAligner)> = Vec::new();
    for (b, band) in fset.bands.iter().enumerate() {
        for w in band_windows(band.bins.clone(), cfg.j_f) {
            windows.push((b, PhaseAligner::new(cset, w)?));
        }
    }
    let taus = cfg.tau_grid();
    let items: Vec<(usize, f64)> = (0..windows.len())
        .flat_map(|w| taus.iter().map(move |&t| (w, t)))
        .collect();
    let found = parallel_map(&items, |&(w, tau)| -> Result<Vec<Candidate>> {
        let (b, aligner) = &windows[w];
        Ok(extract_candidates(&aligner.align(tau)?, &bands[*b], &direct_doa, cfg))
    });
    let mut candidates = Vec::new();
    for c in found {
        candidates.extend(c?);
    }
    Ok(ScanOutput { direct_doa, candidates })
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRow {
    tau_ms: f64,
    colatitude_deg: f64,
    azimuth_deg: f64,
    score: f64,
    rho: f64,
    residual: f64,
}

pub fn write_candidates_csv(path: impl AsRef<Path>, candidates: &[Candidate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in candidates {
        let (colat, az) = c.doa.to_degrees();
        w.serialize(CandidateRow {
            tau_ms: c.tau * 1e3,
            colatitude_deg: colat,
            azimuth_deg: az,
            score: c.score,
            rho: c.direct_corr,
            residual: c.residual,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_candidates_csv(path: impl AsRef<Path>) -> Result<Vec<Candidate>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: CandidateRow = row?;
        out.push(Candidate {
            tau: row.tau_ms * 1e-3,
            doa: Direction::from_degrees(row.colatitude_deg, row.azimuth_deg)?,
            score: row.score,
            direct_corr: row.rho,
            residual: row.residual,
        });
    }
    Ok(out)
}
