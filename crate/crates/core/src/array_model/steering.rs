//! Plane-wave responses of a rigid spherical array.
//!
//! A unit plane wave arriving from `Ω` produces at microphone `q`
//!
//! ```text
//! h_q(f, Ω) = Σ_{n=0}^{N} i^n (2n+1) R_n(kr) P_n(cos Θ_q)
//! ```
//!
//! where `Θ_q` is the angle between `Ω` and the microphone direction and
//! `R_n` the rigid-sphere radial term. Time dependence is `e^{iωt}`, so a
//! delay `τ` multiplies a spectrum by `e^{-i2πfτ}`.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};

use super::layout;
use super::special::{legendre, modal_weights, C64};
use crate::error::{Error, Result};
use crate::scene::{angular_distance, ArraySpec, Direction};

pub type SteeringVector = DVector<C64>;

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Dimensionless frequency `kr`.
pub fn wavenumber_radius(f: f64, array: &ArraySpec) -> f64 {
    2.0 * PI * f / array.speed_of_sound * array.radius
}

fn check_truncation(f: f64, array: &ArraySpec) {
    let kr = wavenumber_radius(f, array);
    if (array.sh_order as f64) < kr.ceil() + 1.0 {
        warn!(
            "order {} under-resolves kr = {kr:.2} at {f:.0} Hz",
            array.sh_order
        );
    }
}

fn response(weights: &[C64], legendre_row: &[f64]) -> C64 {
    weights
        .iter()
        .zip(legendre_row)
        .fold(C64::new(0.0, 0.0), |acc, (w, p)| acc + w * *p)
}

pub fn steering_vector(f: f64, dir: &Direction, array: &ArraySpec) -> SteeringVector {
    SteeringAt::new(f, array).vector(dir)
}

/// Steering vectors at one frequency for arbitrary directions, with the
/// modal weights computed once.
#[derive(Debug, Clone)]
pub struct SteeringAt {
    weights: Vec<C64>,
    mics: Vec<[f64; 3]>,
    order: usize,
}

impl SteeringAt {
    pub fn new(f: f64, array: &ArraySpec) -> Self {
        check_truncation(f, array);
        Self {
            weights: modal_weights(array.sh_order, wavenumber_radius(f, array)),
            mics: array.mic_directions.iter().map(|d| d.unit_vector()).collect(),
            order: array.sh_order,
        }
    }

    pub fn vector(&self, dir: &Direction) -> SteeringVector {
        let u = dir.unit_vector();
        DVector::from_iterator(
            self.mics.len(),
            self.mics.iter().map(|m| response(&self.weights, &legendre(self.order, dot(u, *m)))),
        )
    }
}

/// Steering matrix with one column per direction.
pub fn steering_matrix(f: f64, dirs: &[Direction], array: &ArraySpec) -> DMatrix<C64> {
    let cols: Vec<SteeringVector> = dirs.iter().map(|d| steering_vector(f, d, array)).collect();
    DMatrix::from_columns(&cols)
}

/// Steering vectors of a fixed direction grid at a set of frequencies.
///
/// Only the Legendre table is stored; `matrix` evaluates `Q × G` matrices on
/// demand, so a dictionary spanning hundreds of bins stays small.
#[derive(Debug, Clone)]
pub struct SteeringDictionary {
    grid: Vec<Direction>,
    freqs: Vec<f64>,
    array: ArraySpec,
    /// `legendre[(g * Q + q) * (N + 1) + n] = P_n(cos Θ_{q,g})`
    legendre: Vec<f64>,
}

impl SteeringDictionary {
    pub fn new(freqs: &[f64], array: &ArraySpec, grid: Vec<Direction>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::invalid("dictionary", "grid must not be empty"));
        }
        if freqs.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::invalid("dictionary", "frequencies must be > 0"));
        }
        let mics: Vec<[f64; 3]> = array.mic_directions.iter().map(|d| d.unit_vector()).collect();
        let mut table = Vec::with_capacity(grid.len() * mics.len() * (array.sh_order + 1));
        for g in &grid {
            let u = g.unit_vector();
            for m in &mics {
                table.extend(legendre(array.sh_order, dot(u, *m)));
            }
        }
        for &f in freqs {
            check_truncation(f, array);
        }
        Ok(Self {
            grid,
            freqs: freqs.to_vec(),
            array: array.clone(),
            legendre: table,
        })
    }

    pub fn grid(&self) -> &[Direction] {
        &self.grid
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn array(&self) -> &ArraySpec {
        &self.array
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Steering matrix at an arbitrary frequency.
    pub fn matrix_at(&self, f: f64) -> DMatrix<C64> {
        let q = self.array.num_mics();
        let order = self.array.sh_order;
        let weights = modal_weights(order, wavenumber_radius(f, &self.array));
        DMatrix::from_fn(q, self.grid.len(), |row, col| {
            let base = (col * q + row) * (order + 1);
            response(&weights, &self.legendre[base..base + order + 1])
        })
    }

    /// Steering matrix at `freqs()[index]`.
    pub fn matrix(&self, index: usize) -> DMatrix<C64> {
        self.matrix_at(self.freqs[index])
    }

    pub fn column_at(&self, f: f64, g: usize) -> SteeringVector {
        let q = self.array.num_mics();
        let order = self.array.sh_order;
        let weights = modal_weights(order, wavenumber_radius(f, &self.array));
        DVector::from_fn(q, |row, _| {
            let base = (g * q + row) * (order + 1);
            response(&weights, &self.legendre[base..base + order + 1])
        })
    }
}

pub fn build_dictionary(freqs: &[f64], array: &ArraySpec, grid_size: usize) -> Result<SteeringDictionary> {
    SteeringDictionary::new(freqs, array, layout::direction_grid(grid_size)?)
}

/// Closest grid node and its angular distance. Ties go to the lower index.
pub fn nearest_grid_direction(dir: &Direction, dict: &SteeringDictionary) -> (usize, f64) {
    nearest_in(dir, dict.grid())
}

pub fn nearest_in(dir: &Direction, grid: &[Direction]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, g) in grid.iter().enumerate() {
        let d = angular_distance(dir, g);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}
