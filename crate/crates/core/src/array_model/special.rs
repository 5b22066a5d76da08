//! Spherical Bessel functions, Legendre polynomials and real spherical
//! harmonics.

use std::f64::consts::PI;

use nalgebra::Complex;

pub type C64 = Complex<f64>;

/// `j_n(x)` for `n = 0..=order`.
///
/// Miller's downward recurrence, normalized against whichever of `j_0`, `j_1`
/// is better conditioned at `x`.
pub fn spherical_jn(order: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    if x.abs() < 1e-4 {
        // leading two terms of the power series
        let mut dfact = 1.0; // (2n+1)!!
        let mut xn = 1.0;
        for (n, o) in out.iter_mut().enumerate() {
            dfact *= (2 * n + 1) as f64;
            *o = xn / dfact * (1.0 - x * x / (2.0 * (2 * n + 3) as f64));
            xn *= x;
        }
        return out;
    }
    let start = order + x.abs() as usize + 25;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-280;
    for k in (0..start).rev() {
        vals[k] = (2 * k + 3) as f64 / x * vals[k + 1] - vals[k + 2];
        if vals[k].abs() > 1e250 {
            for v in vals[k..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    let scale = if j0.abs() >= j1.abs() {
        j0 / vals[0]
    } else {
        j1 / vals[1]
    };
    for (o, v) in out.iter_mut().zip(&vals) {
        *o = v * scale;
    }
    out
}

/// `y_n(x)` for `n = 0..=order` by upward recurrence. `x` must be positive.
pub fn spherical_yn(order: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    let (s, c) = x.sin_cos();
    out[0] = -c / x;
    if order >= 1 {
        out[1] = -c / (x * x) - s / x;
    }
    for n in 2..=order {
        out[n] = (2 * n - 1) as f64 / x * out[n - 1] - out[n - 2];
    }
    out
}

/// Derivatives from `f_n' = f_{n-1} - (n+1)/x f_n`, valid for `j_n` and `y_n`.
/// `vals` must hold one more order than requested.
fn derivative(vals: &[f64], x: f64, order: usize) -> Vec<f64> {
    (0..=order)
        .map(|n| {
            if n == 0 {
                -vals[1]
            } else {
                vals[n - 1] - (n as f64 + 1.0) / x * vals[n]
            }
        })
        .collect()
}

/// Rigid-sphere radial terms `R_n(x) = j_n(x) - j_n'(x) h_n(x) / h_n'(x)` for
/// `n = 0..=order`, with `h_n = j_n - i y_n` (outgoing under `e^{iωt}`).
pub fn rigid_sphere_radial(order: usize, x: f64) -> Vec<C64> {
    if x < 1e-9 {
        let mut out = vec![C64::new(0.0, 0.0); order + 1];
        out[0] = C64::new(1.0, 0.0);
        return out;
    }
    let j = spherical_jn(order + 1, x);
    let y = spherical_yn(order + 1, x);
    let jd = derivative(&j, x, order);
    let yd = derivative(&y, x, order);
    (0..=order)
        .map(|n| {
            let h = C64::new(j[n], -y[n]);
            let hd = C64::new(jd[n], -yd[n]);
            C64::new(j[n], 0.0) - h * (jd[n] / hd)
        })
        .collect()
}

/// Per-order weights `i^n (2n+1) R_n(kr)` of the plane-wave response
/// `Σ_n w_n P_n(cos Θ)` on a rigid sphere.
pub fn modal_weights(order: usize, kr: f64) -> Vec<C64> {
    rigid_sphere_radial(order, kr)
        .into_iter()
        .enumerate()
        .map(|(n, r)| i_pow(n) * r * (2 * n + 1) as f64)
        .collect()
}

pub fn i_pow(n: usize) -> C64 {
    match n % 4 {
        0 => C64::new(1.0, 0.0),
        1 => C64::new(0.0, 1.0),
        2 => C64::new(-1.0, 0.0),
        _ => C64::new(0.0, -1.0),
    }
}

/// Legendre polynomials `P_0(t) ..= P_order(t)`.
pub fn legendre(order: usize, t: f64) -> Vec<f64> {
    let mut p = vec![0.0; order + 1];
    p[0] = 1.0;
    if order >= 1 {
        p[1] = t;
    }
    for n in 1..order {
        p[n + 1] = ((2 * n + 1) as f64 * t * p[n] - n as f64 * p[n - 1]) / (n + 1) as f64;
    }
    p
}

/// Number of spherical-harmonic channels up to `order`.
pub fn sh_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Orthonormal real spherical harmonics up to `order` in ACN order
/// (`index = n² + n + m`).
pub fn real_sh(order: usize, colatitude: f64, azimuth: f64) -> Vec<f64> {
    let (st, ct) = colatitude.sin_cos();
    let size = order + 1;
    // normalized associated Legendre, pbar[n][m] for m <= n
    let mut pbar = vec![vec![0.0; size]; size];
    pbar[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..size {
        pbar[m][m] = -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st * pbar[m - 1][m - 1];
    }
    for m in 0..order {
        pbar[m + 1][m] = ((2 * m + 3) as f64).sqrt() * ct * pbar[m][m];
    }
    for m in 0..size {
        for n in (m + 2)..size {
            let nf = n as f64;
            let mf = m as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0).powi(2) - mf * mf) / (4.0 * (nf - 1.0).powi(2) - 1.0)).sqrt();
            pbar[n][m] = a * (ct * pbar[n - 1][m] - b * pbar[n - 2][m]);
        }
    }
    let mut out = vec![0.0; sh_count(order)];
    for n in 0..size {
        let base = n * n + n;
        out[base] = pbar[n][0];
        for m in 1..=n {
            let (s, c) = (m as f64 * azimuth).sin_cos();
            let v = std::f64::consts::SQRT_2 * pbar[n][m];
            out[base + m] = v * c;
            out[base - m] = v * s;
        }
    }
    out
}
