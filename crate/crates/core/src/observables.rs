//! Readout vectors for quadratic-form expectations and the normalisation
//! constants of the lifted initial state.

use crate::assembly::build_velocity_quadrature;
use crate::error::{Error, Result};
use crate::grid::{Kind, PhaseSpaceGrid};
use crate::lift::Quantity;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Unit vector supported on one x-cell of one time block of the stacked
/// trajectory `U = [u¹, …, u^{N_t}]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutVector {
    pub quantity: Quantity,
    /// Time index `n` in `1..=N_t`.
    pub time_index: usize,
    pub x_index: usize,
    /// Position of the first amplitude in the stacked trajectory.
    pub offset: usize,
    pub amplitudes: Vec<f64>,
    pub total_len: usize,
    /// `⟨G,U⟩² = normalization_factor · q²` for the recovered quantity `q`.
    pub normalization_factor: f64,
}

impl ReadoutVector {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.total_len];
        v[self.offset..self.offset + self.amplitudes.len()].copy_from_slice(&self.amplitudes);
        v
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// Build the readout for `quantity` at time index `n` and x-cell `j`.
///
/// `n_steps` is the number of blocks in the trajectory the vector will be
/// applied to. Flux and energy are Boltzmann only.
pub fn build_readout(
    quantity: Quantity,
    n: usize,
    j: usize,
    grid: &PhaseSpaceGrid,
    n_steps: usize,
) -> Result<ReadoutVector> {
    if n == 0 || n > n_steps {
        return Err(Error::Config(format!("time index {n} outside 1..={n_steps}")));
    }
    if j >= grid.x_cells() {
        return Err(Error::Config(format!("x-cell {j} outside 0..{}", grid.x_cells())));
    }
    let np = grid.p_cells();
    let coeffs: Vec<f64> = match (quantity, grid.kind) {
        (Quantity::Mean | Quantity::Density, Kind::Boltzmann) | (Quantity::Flux | Quantity::Energy, Kind::Boltzmann) => {
            let tq = build_velocity_quadrature(grid.n_ord)?.tensor(grid.d);
            let mut c = Vec::with_capacity(grid.aux_size());
            for (w, v) in tq.weights.iter().zip(&tq.nodes) {
                let a = match quantity {
                    Quantity::Flux => w * v[0],
                    Quantity::Energy => w * 0.5 * v.iter().map(|x| x * x).sum::<f64>(),
                    _ => *w,
                };
                c.extend(std::iter::repeat(a).take(np));
            }
            c
        }
        (Quantity::Mean | Quantity::Density, _) => vec![1.0; grid.aux_size()],
        (q, k) => return Err(Error::KindMismatch(format!("{q:?} readout is not defined for {k}"))),
    };
    let norm_sq: f64 = coeffs.iter().map(|c| c * c).sum();
    if norm_sq == 0.0 {
        return Err(Error::Contract("readout vanishes identically".into()));
    }
    let inv = 1.0 / norm_sq.sqrt();
    let vol = grid.aux_cell_volume();
    let bs = grid.state_size();
    Ok(ReadoutVector {
        quantity,
        time_index: n,
        x_index: j,
        offset: (n - 1) * bs + j * grid.aux_size(),
        amplitudes: coeffs.iter().map(|c| c * inv).collect(),
        total_len: n_steps * bs,
        normalization_factor: 1.0 / (vol * vol * norm_sq),
    })
}

/// `|⟨G, U⟩|²` for a stacked trajectory.
pub fn expectation_quadratic<T: Scalar>(trajectory: &[T], g: &ReadoutVector) -> Result<f64> {
    if trajectory.len() != g.total_len {
        return Err(Error::Layout(format!("trajectory has {} entries, readout {}", trajectory.len(), g.total_len)));
    }
    let s = trajectory[g.offset..g.offset + g.amplitudes.len()]
        .iter()
        .zip(&g.amplitudes)
        .fold(T::zero(), |acc, (u, a)| acc + u.scale(*a));
    Ok(s.norm_sqr())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationReport {
    /// `Σ |V₀|²`.
    pub big_n0_sq: f64,
    /// `𝒩₀²` divided by the auxiliary cell count.
    pub n0_sq: f64,
    /// Nonzero entries of the slice.
    pub sigma0: usize,
    /// `d`-th root of the occupied fraction of x-cells.
    pub beta: f64,
    pub lambda: f64,
    /// `σ₀ · n₀² · Λ`.
    pub iof: f64,
}

pub fn normalization_constants<T: Scalar>(slice: &[T], grid: &PhaseSpaceGrid, lambda: f64) -> Result<NormalizationReport> {
    if slice.len() != grid.state_size() {
        return Err(Error::Layout("slice does not match the grid".into()));
    }
    let naux = grid.aux_size();
    let big: f64 = slice.iter().map(|v| v.norm_sqr()).sum();
    let sigma0 = slice.iter().filter(|v| v.abs() > 1e-300).count();
    let occupied = slice.chunks(naux).filter(|c| c.iter().any(|v| v.abs() > 1e-300)).count();
    let beta = (occupied as f64 / grid.x_cells() as f64).powf(1.0 / grid.d as f64);
    let n0_sq = big / naux as f64;
    Ok(NormalizationReport { big_n0_sq: big, n0_sq, sigma0, beta, lambda, iof: sigma0 as f64 * n0_sq * lambda })
}
