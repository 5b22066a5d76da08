use std::sync::OnceLock;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refloc::array_model::layout::fibonacci_sphere;
use refloc::array_model::special::C64;
use refloc::array_model::{build_dictionary, SteeringDictionary};
use refloc::focusing::{apply_focusing, compute_focusing, focusing_matrix, plan_bands, FocusingSet, MEDIAN_RESIDUAL_BOUND};
use refloc::scene::{AlgoConfig, ArraySpec};
use refloc::tf::StftTensor;

const FS: f64 = 48_000.0;
const W: usize = 7200;

fn bin_hz() -> f64 {
    FS / W as f64
}

/// Default dictionary and focusing set, built once for the whole file.
fn defaults() -> &'static (SteeringDictionary, FocusingSet) {
    static CELL: OnceLock<(SteeringDictionary, FocusingSet)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = AlgoConfig::default();
        let array = ArraySpec::default();
        let centers: Vec<f64> = plan_bands(cfg.band, cfg.focus_bw, bin_hz(), W)
            .unwrap()
            .iter()
            .map(|b| b.center)
            .collect();
        let dict = build_dictionary(&centers, &array, cfg.grid_size).unwrap();
        let fset = compute_focusing(&dict, cfg.band, cfg.focus_bw, cfg.focus_lambda, bin_hz(), W).unwrap();
        (dict, fset)
    })
}

fn frobenius(m: &nalgebra::DMatrix<C64>) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn self_focusing_at_the_band_centers() {
    let (_, fset) = defaults();
    for band in &fset.bands {
        let bin = (band.center / bin_hz()).round() as usize;
        assert!((bin as f64 * bin_hz() - band.center).abs() < 1e-9);
        let r = fset.get(bin).unwrap().residual;
        assert!(r <= 1e-6, "center {} Hz: residual {r}", band.center);
    }
}

#[test]
fn default_median_residual_is_bounded() {
    let (_, fset) = defaults();
    assert!(fset.residuals().all(f64::is_finite));
    let m = fset.median_residual();
    assert!(m <= MEDIAN_RESIDUAL_BOUND, "median residual {m}");
}

#[test]
fn square_system_is_solved_exactly() {
    let array = ArraySpec::default();
    let grid = fibonacci_sphere(array.num_mics());
    let dict = SteeringDictionary::new(&[1500.0, 3500.0], &array, grid).unwrap();
    // nonsingular, so no regularization is needed
    let fset = compute_focusing(&dict, (500.0, 5000.0), 2000.0, 0.0, bin_hz(), W).unwrap();
    for bin in fset.bins().step_by(7) {
        let r = fset.get(bin).unwrap().residual;
        assert!(r <= 1e-6, "bin {bin}: residual {r}");
    }
}

#[test]
fn unregularized_rank_deficient_system_is_an_error() {
    let array = ArraySpec::default();
    let dict = SteeringDictionary::new(&[1500.0], &array, fibonacci_sphere(8)).unwrap();
    let h = dict.matrix_at(1400.0);
    let h0 = dict.matrix_at(1500.0);
    assert!(focusing_matrix(&h, &h0, 0.0).is_err());
    assert!(focusing_matrix(&h, &h0, 1e-8).is_ok());
}

/// Self-focusing residual from the eigenvalues s of H Hᴴ:
/// r² = Σ s (λ / (s + λ))² / Σ s.
#[test]
fn self_focusing_residual_matches_the_eigenvalue_formula() {
    let (dict, _) = defaults();
    for &f in &[1500.0, 3500.0] {
        let h = dict.matrix_at(f);
        let s = (&h * h.adjoint()).symmetric_eigenvalues();
        let tr: f64 = s.iter().sum();
        for lr in [1e-4, 1e-6, 1e-8] {
            let l = lr * tr / 32.0;
            let want = (s.iter().map(|&x| x * (l / (x + l)).powi(2)).sum::<f64>() / tr).sqrt();
            let got = focusing_matrix(&h, &h, lr).unwrap().residual;
            assert!((got - want).abs() <= 1e-6 * want + 1e-12, "{f} Hz, {lr:e}: {got} vs {want}");
        }
    }
}

#[test]
fn residual_shrinks_with_regularization() {
    let (dict, fset) = defaults();
    for &f in &[900.0, 2300.0, 4100.0] {
        let band = &fset.bands[fset.band_of((f / bin_hz()).round() as usize).unwrap()];
        let h = dict.matrix_at(f);
        let h0 = dict.matrix_at(band.center);
        let mut last = f64::INFINITY;
        for lambda in [1e-2, 1e-4, 1e-6, 1e-8] {
            let r = focusing_matrix(&h, &h0, lambda).unwrap().residual;
            assert!(r <= last * (1.0 + 1e-9), "{f} Hz, lambda {lambda}: {r} > {last}");
            last = r;
        }
    }
}

fn tensor(fset: &FocusingSet, frames: usize, f: impl Fn(usize, usize, usize) -> C64) -> StftTensor {
    let bins = fset.bins();
    StftTensor {
        data: Array3::from_shape_fn((32, bins.len(), frames), |(m, k, l)| f(m, bins.start + k, l)),
        fs: FS,
        bin_hz: bin_hz(),
        hop: W / 4,
        window_len: W,
        first_bin: bins.start,
    }
}

#[test]
fn single_plane_wave_is_focused_onto_the_center_response() {
    let (dict, fset) = defaults();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = 417;
    let frames = 3;
    let s: Vec<C64> = (0..fset.matrices.len() * frames)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let src = |bin: usize, l: usize| s[(bin - fset.first_bin) * frames + l];
    let x = tensor(fset, frames, |m, bin, l| dict.column_at(bin as f64 * bin_hz(), g)[m] * src(bin, l));
    let y = apply_focusing(&x, fset).unwrap();
    assert_eq!((y.num_mics(), y.num_frames()), (32, frames));
    for (i, bin) in fset.bins().enumerate() {
        let center = fset.bands[fset.band_of(bin).unwrap()].center;
        let h0 = dict.column_at(center, g);
        let h0_all = dict.matrix_at(center);
        // one column's error is at most the whole Frobenius error
        let bound = fset.matrices[i].residual * frobenius(&h0_all) / h0.norm();
        for l in 0..frames {
            let want = &h0 * src(bin, l);
            let err = (0..32).map(|m| (y.data[[m, i, l]] - want[m]).norm_sqr()).sum::<f64>().sqrt();
            assert!(err <= bound * want.norm() * (1.0 + 1e-9), "bin {bin}: {err} vs {}", bound * want.norm());
        }
    }
}

#[test]
fn zero_in_zero_out_and_linearity() {
    let (_, fset) = defaults();
    let zero = tensor(fset, 2, |_, _, _| C64::new(0.0, 0.0));
    assert!(apply_focusing(&zero, fset).unwrap().data.iter().all(|v| v.norm() == 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut draw = || -> Vec<C64> {
        (0..32 * fset.matrices.len() * 2)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    };
    let (u, v) = (draw(), draw());
    let n = fset.matrices.len();
    let idx = move |m: usize, bin: usize, l: usize| (m * n + (bin - fset.first_bin)) * 2 + l;
    let (a, b) = (C64::new(0.3, -1.2), C64::new(2.0, 0.5));
    let x = tensor(fset, 2, |m, bin, l| u[idx(m, bin, l)]);
    let y = tensor(fset, 2, |m, bin, l| v[idx(m, bin, l)]);
    let z = tensor(fset, 2, |m, bin, l| u[idx(m, bin, l)] * a + v[idx(m, bin, l)] * b);
    let (fx, fy, fz) = (apply_focusing(&x, fset).unwrap(), apply_focusing(&y, fset).unwrap(), apply_focusing(&z, fset).unwrap());
    for ((p, q), r) in fx.data.iter().zip(fy.data.iter()).zip(fz.data.iter()) {
        assert!((p * a + q * b - r).norm() <= 1e-9 * (1.0 + r.norm()));
    }
}
