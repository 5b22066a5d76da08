//! Frequency focusing: per-bin matrices mapping steering vectors at `f`
//! onto those at a band center `f₀`, solved in the regularized
//! least-squares sense over the whole steering dictionary.

use std::ops::Range;

use nalgebra::{Cholesky, DMatrix};

use crate::array_model::special::C64;
use crate::array_model::SteeringDictionary;
use crate::error::{Error, Result};
use crate::par::parallel_map;
use crate::tf::{bin_range, StftTensor};

/// Median in-band residual the default configuration is expected to reach.
pub const MEDIAN_RESIDUAL_BOUND: f64 = 0.1;

/// A focusing band: the bins mapped onto one center frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusBand {
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub bins: Range<usize>,
}

/// Splits `band` into consecutive `focus_bw` sub-bands starting at the lower
/// edge, each centered at `lower + focus_bw / 2`. A remainder narrower than
/// `focus_bw` is absorbed by the final band, which keeps its center. A band
/// narrower than `focus_bw` forms a single sub-band centered at its
/// midpoint. Each bin belongs to exactly one sub-band.
pub fn plan_bands(band: (f64, f64), focus_bw: f64, bin_hz: f64, window_len: usize) -> Result<Vec<FocusBand>> {
    if !(focus_bw > 0.0 && band.0 < band.1) {
        return Err(Error::invalid("focusing band", "need focus_bw > 0 and f_low < f_high"));
    }
    let all = bin_range(bin_hz, window_len, band)?;
    let width = band.1 - band.0;
    let full = ((width / focus_bw) + 1e-9).floor() as usize;
    let mut out = Vec::new();
    let mut next = all.start;
    let count = full.max(1);
    for k in 0..count {
        let lower = band.0 + k as f64 * focus_bw;
        let last = k + 1 == count;
        let upper = if last { band.1 } else { lower + focus_bw };
        let center = if full == 0 { 0.5 * (band.0 + band.1) } else { lower + 0.5 * focus_bw };
        // bins with center in [lower, upper), the final band closed on the right
        let end = if last {
            all.end
        } else {
            ((upper / bin_hz - 1e-9).ceil() as usize).clamp(next, all.end)
        };
        if end > next {
            out.push(FocusBand {
                center,
                lower,
                upper,
                bins: next..end,
            });
        }
        next = end;
    }
    Ok(out)
}

/// `T(f, f₀)` and its relative residual `‖T H(f) − H(f₀)‖_F / ‖H(f₀)‖_F`.
#[derive(Debug, Clone)]
pub struct FocusingMatrix {
    pub matrix: DMatrix<C64>,
    pub residual: f64,
}

/// Regularized least-squares focusing matrix
/// `T = H(f₀) H(f)ᴴ (H(f) H(f)ᴴ + λI)⁻¹` with
/// `λ = lambda_rel · trace(H(f) H(f)ᴴ) / Q`.
pub fn focusing_matrix(h: &DMatrix<C64>, h0: &DMatrix<C64>, lambda_rel: f64) -> Result<FocusingMatrix> {
    let q = h.nrows();
    let mut a = h * h.adjoint();
    let lambda = lambda_rel * a.trace().re / q as f64;
    for i in 0..q {
        a[(i, i)] += C64::new(lambda, 0.0);
    }
    let singular = || Error::numerical("focusing normal matrix is singular; use a regularization weight > 0");
    let diag: Vec<f64> = (0..q).map(|i| a[(i, i)].re).collect();
    let chol = Cholesky::new(a).ok_or_else(singular)?;
    // rounding lets a rank-deficient matrix through with pivots at noise level
    let l = chol.l_dirty();
    if (0..q).any(|i| l[(i, i)].norm_sqr() <= q as f64 * f64::EPSILON * diag[i]) {
        return Err(singular());
    }
    // Tᴴ = A⁻¹ H H₀ᴴ
    let t = chol.solve(&(h * h0.adjoint())).adjoint();
    let residual = (&t * h - h0).norm() / h0.norm();
    if !residual.is_finite() {
        return Err(Error::numerical("focusing residual is not finite"));
    }
    Ok(FocusingMatrix { matrix: t, residual })
}

/// Focusing matrices for every bin of the operating band.
#[derive(Debug, Clone)]
pub struct FocusingSet {
    pub bands: Vec<FocusBand>,
    pub bin_hz: f64,
    pub lambda_rel: f64,
    /// Indexed by `bin - first_bin`.
    pub matrices: Vec<FocusingMatrix>,
    pub first_bin: usize,
}

impl FocusingSet {
    pub fn bins(&self) -> Range<usize> {
        self.first_bin..self.first_bin + self.matrices.len()
    }

    pub fn band_of(&self, bin: usize) -> Option<usize> {
        self.bands.iter().position(|b| b.bins.contains(&bin))
    }

    pub fn get(&self, bin: usize) -> Option<&FocusingMatrix> {
        bin.checked_sub(self.first_bin).and_then(|i| self.matrices.get(i))
    }

    pub fn residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.matrices.iter().map(|m| m.residual)
    }

    pub fn median_residual(&self) -> f64 {
        let mut r: Vec<f64> = self.residuals().collect();
        r.sort_by(f64::total_cmp);
        let n = r.len();
        if n % 2 == 1 {
            r[n / 2]
        } else {
            0.5 * (r[n / 2 - 1] + r[n / 2])
        }
    }
}

/// Focusing matrices for all bins of `band` on an STFT grid with spacing
/// `bin_hz` and window length `window_len` samples.
pub fn compute_focusing(
    dict: &SteeringDictionary,
    band: (f64, f64),
    focus_bw: f64,
    lambda_rel: f64,
    bin_hz: f64,
    window_len: usize,
) -> Result<FocusingSet> {
    if !(lambda_rel >= 0.0) {
        return Err(Error::invalid("focusing", "regularization weight must be >= 0"));
    }
    let bands = plan_bands(band, focus_bw, bin_hz, window_len)?;
    let first_bin = bands[0].bins.start;
    let mut work: Vec<(usize, f64, f64)> = Vec::new();
    for band in &bands {
        for bin in band.bins.clone() {
            work.push((bin, bin as f64 * bin_hz, band.center));
        }
    }
    let centers: Vec<(f64, DMatrix<C64>)> = bands.iter().map(|b| (b.center, dict.matrix_at(b.center))).collect();
    let results = parallel_map(&work, |&(_, f, f0)| {
        let h0 = &centers.iter().find(|(c, _)| *c == f0).expect("band center").1;
        focusing_matrix(&dict.matrix_at(f), h0, lambda_rel)
    });
    let matrices = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FocusingSet {
        bands,
        bin_hz,
        lambda_rel,
        matrices,
        first_bin,
    })
}

/// Applies `T(f, f₀)` to every frame of every bin in the focusing set.
/// The result holds only the focused bins.
pub fn apply_focusing(tensor: &StftTensor, fset: &FocusingSet) -> Result<StftTensor> {
    let bins = fset.bins();
    let own = tensor.bins();
    if bins.start < own.start || bins.end > own.end {
        return Err(Error::invalid(
            "focusing",
            format!("tensor bins {own:?} do not cover focusing bins {bins:?}"),
        ));
    }
    if (tensor.bin_hz - fset.bin_hz).abs() > 1e-9 * fset.bin_hz {
        return Err(Error::invalid("focusing", "bin spacing differs from the focusing set"));
    }
    let mut out = tensor.slice_bins(bins.clone())?;
    let q = tensor.num_mics();
    let frames = tensor.num_frames();
    for (i, bin) in bins.enumerate() {
        let t = &fset.matrices[i].matrix;
        if t.nrows() != q {
            return Err(Error::invalid("focusing", "channel count differs from the array"));
        }
        let k = bin - tensor.first_bin;
        let p = DMatrix::from_fn(q, frames, |m, l| tensor.data[[m, k, l]]);
        let focused = t * p;
        for m in 0..q {
            for l in 0..frames {
                out.data[[m, i, l]] = focused[(m, l)];
            }
        }
    }
    Ok(out)
}
