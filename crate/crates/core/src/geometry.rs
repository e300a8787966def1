//! Least-squares positioning geometry: line-of-sight matrix, its left
//! pseudo-inverse, per-link geometric dilution λ and horizontal accuracy Ψ.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn planar(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeometryMode {
    #[default]
    TwoD,
    ThreeD,
}

impl GeometryMode {
    pub fn dim(self) -> usize {
        match self {
            GeometryMode::TwoD => 2,
            GeometryMode::ThreeD => 3,
        }
    }
}

const MIN_DISTANCE: f64 = 1e-9;
const MAX_CONDITION: f64 = 1e12;

/// K×d line-of-sight matrix, row-major; row k is the unit vector from gNB k to the user.
pub fn los_matrix(gnbs: &[Position], user: &Position, mode: GeometryMode) -> Result<Vec<f64>> {
    let d = mode.dim();
    let mut g = Vec::with_capacity(gnbs.len() * d);
    for (k, b) in gnbs.iter().enumerate() {
        let r = user.distance(b);
        if !(r >= MIN_DISTANCE) {
            return Err(Error::DegenerateGeometry(format!("user coincides with gNB {}", k + 1)));
        }
        let comps = [(user.x - b.x) / r, (user.y - b.y) / r, (user.z - b.z) / r];
        g.extend_from_slice(&comps[..d]);
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryResult {
    pub dim: usize,
    /// K×d, row-major.
    pub g_matrix: Vec<f64>,
    /// d×K, row-major.
    pub h_matrix: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl GeometryResult {
    pub fn h(&self, row: usize, k0: usize) -> f64 {
        self.h_matrix[row * self.lambda.len() + k0]
    }
}

fn invert_small(a: &[f64], d: usize) -> Option<Vec<f64>> {
    match d {
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            Some(vec![a[3] / det, -a[1] / det, -a[2] / det, a[0] / det])
        }
        3 => {
            let c = |i: usize, j: usize| a[i * 3 + j];
            let cof = [
                c(1, 1) * c(2, 2) - c(1, 2) * c(2, 1),
                c(0, 2) * c(2, 1) - c(0, 1) * c(2, 2),
                c(0, 1) * c(1, 2) - c(0, 2) * c(1, 1),
                c(1, 2) * c(2, 0) - c(1, 0) * c(2, 2),
                c(0, 0) * c(2, 2) - c(0, 2) * c(2, 0),
                c(0, 2) * c(1, 0) - c(0, 0) * c(1, 2),
                c(1, 0) * c(2, 1) - c(1, 1) * c(2, 0),
                c(0, 1) * c(2, 0) - c(0, 0) * c(2, 1),
                c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0),
            ];
            let det = c(0, 0) * cof[0] + c(0, 1) * cof[3] + c(0, 2) * cof[6];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            Some(cof.iter().map(|v| v / det).collect())
        }
        _ => None,
    }
}

fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// H = (GᵀG)⁻¹Gᵀ and λ_k = √(H_{1k}² + H_{2k}²).
pub fn dilution(gnbs: &[Position], user: &Position, mode: GeometryMode) -> Result<GeometryResult> {
    let d = mode.dim();
    let k = gnbs.len();
    if k < d {
        return Err(Error::DegenerateGeometry(format!("{k} gNBs cannot fix {d} coordinates")));
    }
    let g = los_matrix(gnbs, user, mode)?;
    let mut gtg = vec![0.0; d * d];
    for r in 0..k {
        for i in 0..d {
            for j in 0..d {
                gtg[i * d + j] += g[r * d + i] * g[r * d + j];
            }
        }
    }
    let singular = || Error::DegenerateGeometry("line-of-sight vectors do not span the space".into());
    let inv = invert_small(&gtg, d).ok_or_else(singular)?;
    if frobenius(&gtg) * frobenius(&inv) > MAX_CONDITION {
        return Err(singular());
    }
    let mut h = vec![0.0; d * k];
    for i in 0..d {
        for c in 0..k {
            h[i * k + c] = (0..d).map(|j| inv[i * d + j] * g[c * d + j]).sum();
        }
    }
    let lambda = (0..k).map(|c| (h[c].powi(2) + h[k + c].powi(2)).sqrt()).collect();
    Ok(GeometryResult { dim: d, g_matrix: g, h_matrix: h, lambda })
}

/// Ψ² = Σ_k (λ_k σ_k)².
pub fn horizontal_accuracy_sq(lambda: &[f64], sigma: &[f64]) -> Result<f64> {
    if lambda.len() != sigma.len() {
        return Err(Error::LengthMismatch { left: lambda.len(), right: sigma.len() });
    }
    Ok(lambda.iter().zip(sigma).map(|(l, s)| (l * s).powi(2)).sum())
}

/// Ψ = √Σ_k (λ_k σ_k)².
pub fn horizontal_accuracy(lambda: &[f64], sigma: &[f64]) -> Result<f64> {
    horizontal_accuracy_sq(lambda, sigma).map(f64::sqrt)
}
