//! Microphone layouts and direction grids.
//!
//! The shipped 900-point grid (`data/grid_900.txt`) is the spherical
//! Fibonacci lattice rounded to 1e-6 degrees.

use crate::error::{Error, Result};
use crate::scene::{angular_distance, Direction};

/// The 32 vertices of a pentakis dodecahedron: 12 icosahedron vertices and
/// 20 dodecahedron vertices, the same directions as the face centers of a
/// truncated icosahedron.
pub fn pentakis_dodecahedron() -> Vec<Direction> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let inv = 1.0 / phi;
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(32);
    for &a in &[-1.0, 1.0] {
        for &b in &[-phi, phi] {
            pts.push([0.0, a, b]);
            pts.push([a, b, 0.0]);
            pts.push([b, 0.0, a]);
        }
    }
    for &x in &[-1.0, 1.0] {
        for &y in &[-1.0, 1.0] {
            for &z in &[-1.0, 1.0] {
                pts.push([x, y, z]);
            }
        }
    }
    // dual orientation: one dodecahedron vertex above each icosahedron face
    for &a in &[-inv, inv] {
        for &b in &[-phi, phi] {
            pts.push([a, 0.0, b]);
            pts.push([0.0, b, a]);
            pts.push([b, a, 0.0]);
        }
    }
    pts.into_iter().map(Direction::from_vector).collect()
}

/// Spherical Fibonacci lattice with `n` points.
pub fn fibonacci_sphere(n: usize) -> Vec<Direction> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            Direction::from_vector([r * a.cos(), r * a.sin(), z])
        })
        .collect()
}

const GRID_900: &str = include_str!("../../data/grid_900.txt");

/// Largest angle from any point on the sphere to its nearest node of the
/// shipped 900-point grid, in degrees. A dense scan measures 5.05.
pub const GRID_900_COVERAGE_DEG: f64 = 5.1;

/// Parse the "colatitude_deg azimuth_deg" grid format.
pub fn parse_grid(text: &str) -> Result<Vec<Direction>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace().map(str::parse::<f64>);
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(c)), Some(Ok(a)), None) => out.push(Direction::from_degrees(c, a)?),
            _ => {
                return Err(Error::invalid(
                    "grid file",
                    format!("line {}: expected two numbers", lineno + 1),
                ))
            }
        }
    }
    Ok(out)
}

pub fn format_grid(dirs: &[Direction]) -> String {
    let mut s = String::with_capacity(dirs.len() * 24);
    for d in dirs {
        let (c, a) = d.to_degrees();
        s.push_str(&format!("{c:.6} {a:.6}\n"));
    }
    s
}

pub const MAX_GENERATED_GRID: usize = 10_000;

/// Direction grid of size `g`: the shipped grid for 900, a Fibonacci lattice
/// for any other size up to [`MAX_GENERATED_GRID`].
pub fn direction_grid(g: usize) -> Result<Vec<Direction>> {
    match g {
        900 => parse_grid(GRID_900),
        1..=MAX_GENERATED_GRID => Ok(fibonacci_sphere(g)),
        _ => Err(Error::invalid(
            "grid size",
            format!("unsupported grid size {g} (900 or 1..={MAX_GENERATED_GRID})"),
        )),
    }
}

pub fn min_pairwise_angle(dirs: &[Direction]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in dirs.iter().enumerate() {
        for b in &dirs[i + 1..] {
            best = best.min(angular_distance(a, b));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pentakis_has_32_distinct_unit_directions() {
        let dirs = pentakis_dodecahedron();
        assert_eq!(dirs.len(), 32);
        // nearest neighbours of the truncated-icosahedron face centers sit
        // about 37.4 degrees apart
        let min = min_pairwise_angle(&dirs).to_degrees();
        assert!(min > 37.0 && min < 38.0, "min angle {min}");
    }

    #[test]
    fn grid_format_round_trip() {
        let dirs = fibonacci_sphere(17);
        let back = parse_grid(&format_grid(&dirs)).unwrap();
        for (a, b) in dirs.iter().zip(&back) {
            assert!(angular_distance(a, b) < 1e-7);
        }
        assert!(parse_grid("1 2 3\n").is_err());
    }

    #[test]
    fn unsupported_grid_sizes() {
        assert!(direction_grid(0).is_err());
        assert!(direction_grid(MAX_GENERATED_GRID + 1).is_err());
        assert_eq!(direction_grid(32).unwrap().len(), 32);
    }
}
