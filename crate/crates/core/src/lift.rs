//! Lifted initial data and recovery of ensemble statistics by quadrature.
//!
//! For heat and Boltzmann the kernel `2^{-L} Πᵢ aᵢ e^{-aᵢ|pᵢ|}` integrates to 1
//! over `p`; for the wave-type kinds `Πᵢ aᵢ e^{-√aᵢ (pᵢ+qᵢ)}` integrates to 1
//! over the quadrant `p, q > 0`. Summing the kernel times the per-sample data
//! over the ensemble and integrating the auxiliary variables returns the mean.

use crate::assembly::{build_velocity_quadrature, TensorQuadrature};
use crate::coeff::{CoefficientModel, SampleSet};
use crate::error::{Error, Result};
use crate::grid::{unflatten, Kind, PhaseSpaceGrid};
use crate::scalar::{Scalar, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Lifted field slices keyed by time index.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedField<T> {
    pub grid: PhaseSpaceGrid,
    pub slices: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> LiftedField<T> {
    pub fn new(grid: PhaseSpaceGrid) -> Self {
        Self { grid, slices: BTreeMap::new() }
    }

    pub fn with_initial(grid: PhaseSpaceGrid, u0: Vec<T>) -> Result<Self> {
        if u0.len() != grid.state_size() {
            return Err(Error::Layout(format!("slice has {} entries, grid {}", u0.len(), grid.state_size())));
        }
        let mut f = Self::new(grid);
        f.slices.insert(0, u0);
        Ok(f)
    }

    pub fn insert(&mut self, n: usize, slice: Vec<T>) -> Result<()> {
        if slice.len() != self.grid.state_size() {
            return Err(Error::Layout(format!("slice has {} entries, grid {}", slice.len(), self.grid.state_size())));
        }
        self.slices.insert(n, slice);
        Ok(())
    }

    pub fn slice(&self, n: usize) -> Result<&[T]> {
        self.slices
            .get(&n)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::State(format!("time slice {n} was not recorded")))
    }

    pub fn last_index(&self) -> Option<usize> {
        self.slices.keys().next_back().copied()
    }
}

/// What a [`RecoveredField`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Mean,
    Density,
    Flux,
    Energy,
    Variance,
}

/// A statistic on the x-grid, `inner` values per x-cell (velocity ordinates for
/// Boltzmann means, 1 otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredField<T> {
    pub quantity: Quantity,
    pub time_index: usize,
    pub inner: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> RecoveredField<T> {
    pub fn at(&self, j: usize, inner: usize) -> T {
        self.values[j * self.inner + inner]
    }
}

/// Deterministic initial data `u₀(x, v, z)`; `v` is empty except for Boltzmann.
pub trait InitialData: Sync {
    fn eval(&self, x: &[f64], v: &[f64], z: &[f64]) -> f64;

    /// Complex data for the Schrödinger kind; defaults to the real part only.
    fn eval_c64(&self, x: &[f64], v: &[f64], z: &[f64]) -> C64 {
        C64::new(self.eval(x, v, z), 0.0)
    }
}

impl<F> InitialData for F
where
    F: Fn(&[f64], &[f64], &[f64]) -> f64 + Sync,
{
    fn eval(&self, x: &[f64], v: &[f64], z: &[f64]) -> f64 {
        self(x, v, z)
    }
}

/// Built-in initial data, selectable from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialCondition {
    /// `Π_a sin(k_a π x_a)`.
    SineProduct { modes: Vec<u32> },
    Constant { value: f64 },
    /// Indicator of `[lo, hi]^d`.
    Box { lo: f64, hi: f64 },
    /// Indicator of the max-norm ball of radius `half_width` around `center`.
    Point { center: Vec<f64>, half_width: f64 },
    Gaussian { center: Vec<f64>, width: f64 },
    /// `e^{i k·2πx}` (Schrödinger); the real part elsewhere.
    PlaneWave { wavenumbers: Vec<i32> },
    /// `base(x) · (1 + slope · v₀)` for Boltzmann velocity dependence.
    Tilted { base: Box<InitialCondition>, slope: f64 },
}

impl InitialCondition {
    fn phase(&self, x: &[f64]) -> Option<f64> {
        match self {
            InitialCondition::PlaneWave { wavenumbers } => {
                Some(x.iter().zip(wavenumbers).map(|(xa, k)| 2.0 * PI * *k as f64 * xa).sum())
            }
            _ => None,
        }
    }
}

impl InitialData for InitialCondition {
    fn eval(&self, x: &[f64], v: &[f64], z: &[f64]) -> f64 {
        match self {
            InitialCondition::SineProduct { modes } => x
                .iter()
                .enumerate()
                .map(|(a, xa)| (*modes.get(a).or(modes.last()).unwrap_or(&1) as f64 * PI * xa).sin())
                .product(),
            InitialCondition::Constant { value } => *value,
            InitialCondition::Box { lo, hi } => {
                if x.iter().all(|xa| *xa >= *lo && *xa <= *hi) {
                    1.0
                } else {
                    0.0
                }
            }
            InitialCondition::Point { center, half_width } => {
                if x.iter().zip(center).all(|(xa, c)| (xa - c).abs() < *half_width) {
                    1.0
                } else {
                    0.0
                }
            }
            InitialCondition::Gaussian { center, width } => {
                let r2: f64 = x.iter().zip(center).map(|(xa, c)| (xa - c).powi(2)).sum();
                (-r2 / (2.0 * width * width)).exp()
            }
            InitialCondition::PlaneWave { .. } => self.phase(x).unwrap().cos(),
            InitialCondition::Tilted { base, slope } => {
                base.eval(x, v, z) * (1.0 + slope * v.first().copied().unwrap_or(0.0))
            }
        }
    }

    fn eval_c64(&self, x: &[f64], v: &[f64], z: &[f64]) -> C64 {
        match self.phase(x) {
            Some(t) => C64::new(t.cos(), t.sin()),
            None => C64::new(self.eval(x, v, z), 0.0),
        }
    }
}

/// Per-sample coefficients `aᵢ(z_m)`, refusing non-positive values.
pub fn sample_coefficients(model: &CoefficientModel, samples: &SampleSet) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(samples.m());
    for (m, z) in samples.samples.iter().enumerate() {
        if z.len() != model.input_dim() {
            return Err(Error::Layout(format!(
                "sample {m} has {} inputs, model needs {}",
                z.len(),
                model.input_dim()
            )));
        }
        let a = model.a(z);
        for (i, v) in a.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(Error::Positivity { i, m, value: *v });
            }
        }
        out.push(a);
    }
    Ok(out)
}

/// Kernel values over the auxiliary block (`mid × p` cells) for one sample.
fn kernel(grid: &PhaseSpaceGrid, a: &[f64]) -> Vec<f64> {
    let np = grid.p_cells();
    let l = grid.l;
    match grid.kind {
        Kind::Heat | Kind::Boltzmann => {
            let axis: Vec<Vec<f64>> = a
                .iter()
                .map(|ai| (0..grid.n_p).map(|k| 0.5 * ai * (-ai * grid.p_coord(k).abs()).exp()).collect())
                .collect();
            (0..np)
                .map(|k| unflatten(k, grid.n_p, l).iter().enumerate().map(|(i, ki)| axis[i][*ki]).product())
                .collect()
        }
        Kind::Advection | Kind::Schrodinger => {
            let nq = grid.mid_cells();
            let ep: Vec<Vec<f64>> = a
                .iter()
                .map(|ai| (0..grid.n_p).map(|k| (-ai.sqrt() * grid.p_coord(k)).exp()).collect())
                .collect();
            let eq: Vec<Vec<f64>> = a
                .iter()
                .map(|ai| (0..grid.n_q).map(|k| ai * (-ai.sqrt() * grid.q_coord(k)).exp()).collect())
                .collect();
            let mut out = Vec::with_capacity(nq * np);
            for ql in 0..nq {
                let qi = unflatten(ql, grid.n_q, l);
                let qf: f64 = qi.iter().enumerate().map(|(i, k)| eq[i][*k]).product();
                for k in 0..np {
                    let pi = unflatten(k, grid.n_p, l);
                    let pf: f64 = pi.iter().enumerate().map(|(i, k)| ep[i][*k]).product();
                    out.push(qf * pf);
                }
            }
            out
        }
    }
}

fn velocity_nodes(grid: &PhaseSpaceGrid) -> Result<Option<TensorQuadrature>> {
    if grid.kind == Kind::Boltzmann {
        Ok(Some(build_velocity_quadrature(grid.n_ord)?.tensor(grid.d)))
    } else {
        Ok(None)
    }
}

fn lift_generic<T: Scalar>(
    model: &CoefficientModel,
    samples: &SampleSet,
    grid: &PhaseSpaceGrid,
    data: impl Fn(&[f64], &[f64], &[f64]) -> T + Sync,
) -> Result<Vec<T>> {
    if model.d != grid.d || model.l() != grid.l {
        return Err(Error::Layout("model and grid dimensions differ".into()));
    }
    if samples.m() == 0 {
        return Err(Error::Config("empty sample set".into()));
    }
    let coeffs = sample_coefficients(model, samples)?;
    let kernels: Vec<Vec<f64>> = coeffs.iter().map(|a| kernel(grid, a)).collect();
    let vel = velocity_nodes(grid)?;
    let np = grid.p_cells();
    let mid = grid.mid_cells();
    let naux = grid.aux_size();
    let mut out = vec![T::zero(); grid.state_size()];
    let empty: Vec<f64> = Vec::new();
    out.par_chunks_mut(naux).enumerate().for_each(|(j, block)| {
        let x = grid.x_point(j);
        // samples in fixed order so the sum is reproducible across thread counts
        for (m, z) in samples.samples.iter().enumerate() {
            let km = &kernels[m];
            match &vel {
                Some(tq) => {
                    for l in 0..mid {
                        let u = data(&x, &tq.nodes[l], z);
                        for k in 0..np {
                            block[l * np + k] += u.scale(km[k]);
                        }
                    }
                }
                None => {
                    let u = data(&x, &empty, z);
                    for (b, kv) in block.iter_mut().zip(km) {
                        *b += u.scale(*kv);
                    }
                }
            }
        }
    });
    Ok(out)
}

/// `V(0, x, ·) = (1/M) Σ_m u₀(x, z_m) K(·; a(z_m))` as slice 0 of a lifted field.
pub fn lift_initial(
    model: &CoefficientModel,
    samples: &SampleSet,
    data: &dyn InitialData,
    grid: &PhaseSpaceGrid,
) -> Result<LiftedField<f64>> {
    if grid.kind == Kind::Schrodinger {
        return Err(Error::KindMismatch("use lift_initial_complex for schrodinger".into()));
    }
    let inv_m = 1.0 / samples.m() as f64;
    let v = lift_generic(model, samples, grid, |x, v, z| data.eval(x, v, z) * inv_m)?;
    LiftedField::with_initial(grid.clone(), v)
}

pub fn lift_initial_complex(
    model: &CoefficientModel,
    samples: &SampleSet,
    data: &dyn InitialData,
    grid: &PhaseSpaceGrid,
) -> Result<LiftedField<C64>> {
    let inv_m = 1.0 / samples.m() as f64;
    let v = lift_generic(model, samples, grid, |x, v, z| data.eval_c64(x, v, z) * inv_m)?;
    LiftedField::with_initial(grid.clone(), v)
}

/// `ū_j = Σ_aux V · cell volume` at time slice `n`.
///
/// Boltzmann keeps the velocity index (`inner = N_v^d`).
pub fn recover_mean<T: Scalar>(field: &LiftedField<T>, n: usize) -> Result<RecoveredField<T>> {
    let g = &field.grid;
    let v = field.slice(n)?;
    let vol = g.aux_cell_volume();
    let (inner, chunk) = match g.kind {
        Kind::Boltzmann => (g.mid_cells(), g.p_cells()),
        _ => (1, g.aux_size()),
    };
    let values = v.chunks(chunk).map(|c| c.iter().fold(T::zero(), |a, b| a + *b).scale(vol)).collect();
    Ok(RecoveredField { quantity: Quantity::Mean, time_index: n, inner, values })
}

/// Velocity moments of the recovered Boltzmann mean at slice `n`:
/// density `Σ w f`, flux `Σ w v₀ f`, energy `Σ w |v|²/2 f`.
pub fn recover_boltzmann_moments(
    field: &LiftedField<f64>,
    n: usize,
) -> Result<[RecoveredField<f64>; 3]> {
    let g = &field.grid;
    if g.kind != Kind::Boltzmann {
        return Err(Error::KindMismatch(format!("moments need a boltzmann field, got {}", g.kind)));
    }
    let tq = build_velocity_quadrature(g.n_ord)?.tensor(g.d);
    let mean = recover_mean(field, n)?;
    let nv = mean.inner;
    let mut rho = Vec::with_capacity(g.x_cells());
    let mut flux = Vec::with_capacity(g.x_cells());
    let mut energy = Vec::with_capacity(g.x_cells());
    for j in 0..g.x_cells() {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for l in 0..nv {
            let f = mean.values[j * nv + l];
            let w = tq.weights[l];
            let v = &tq.nodes[l];
            a += w * f;
            b += w * v[0] * f;
            c += w * 0.5 * v.iter().map(|x| x * x).sum::<f64>() * f;
        }
        rho.push(a);
        flux.push(b);
        energy.push(c);
    }
    let mk = |q, values| RecoveredField { quantity: q, time_index: n, inner: 1, values };
    Ok([mk(Quantity::Density, rho), mk(Quantity::Flux, flux), mk(Quantity::Energy, energy)])
}

/// Discrepancy between recovery of the lifted initial data and the direct
/// sample mean of the initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftIdentityReport {
    pub max_error: f64,
    /// `dp + e^{-a_min P}` (heat, Boltzmann) or `dp + dq + 2e^{-√a_min P}`.
    pub scale: f64,
    /// `max_error / scale`.
    pub constant: f64,
}

pub fn verify_lift_identity(
    model: &CoefficientModel,
    samples: &SampleSet,
    data: &dyn InitialData,
    grid: &PhaseSpaceGrid,
) -> Result<LiftIdentityReport> {
    let coeffs = sample_coefficients(model, samples)?;
    let a_min = coeffs.iter().flatten().fold(f64::INFINITY, |m, v| m.min(*v));
    let vel = velocity_nodes(grid)?;
    let empty: Vec<f64> = Vec::new();
    let inv_m = 1.0 / samples.m() as f64;
    let mut max_error = 0.0f64;
    if grid.kind == Kind::Schrodinger {
        let lifted = lift_initial_complex(model, samples, data, grid)?;
        let mean = recover_mean(&lifted, 0)?;
        for j in 0..grid.x_cells() {
            let x = grid.x_point(j);
            let direct = samples.samples.iter().fold(C64::new(0.0, 0.0), |s, z| s + data.eval_c64(&x, &empty, z)) * inv_m;
            max_error = max_error.max((mean.values[j] - direct).norm());
        }
    } else {
        let lifted = lift_initial(model, samples, data, grid)?;
        let mean = recover_mean(&lifted, 0)?;
        for j in 0..grid.x_cells() {
            let x = grid.x_point(j);
            for inner in 0..mean.inner {
                let v = vel.as_ref().map(|t| t.nodes[inner].as_slice()).unwrap_or(&empty);
                let direct: f64 = samples.samples.iter().map(|z| data.eval(&x, v, z)).sum::<f64>() * inv_m;
                max_error = max_error.max((mean.at(j, inner) - direct).abs());
            }
        }
    }
    let scale = if grid.kind.has_q() {
        grid.dp + grid.dq + 2.0 * (-a_min.sqrt() * grid.p_max).exp()
    } else {
        grid.dp + (-a_min * grid.p_max).exp()
    };
    Ok(LiftIdentityReport { max_error, scale, constant: max_error / scale })
}

/// Ensemble variance for the advection kind.
///
/// Each sample's `u²` obeys the same transport equation as `u`, so a second
/// lifted solve with data `u₀²` yields the mean of squares `m₂`; the variance is
/// `m₂ - ū²`, clamped at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport {
    pub variance: RecoveredField<f64>,
    pub mean: RecoveredField<f64>,
    /// Most negative raw variance value before clipping.
    pub min_raw: f64,
    /// Set when `min_raw` is below `-10 × (h + dp)`.
    pub warning: bool,
}

pub fn ensemble_variance_advection(
    model: &CoefficientModel,
    samples: &SampleSet,
    data: &dyn InitialData,
    grid: &PhaseSpaceGrid,
    basis: &crate::assembly::BasisValues,
    n_steps: usize,
) -> Result<VarianceReport> {
    if grid.kind != Kind::Advection {
        return Err(Error::KindMismatch(format!("variance is defined for advection, got {}", grid.kind)));
    }
    let sq = |x: &[f64], v: &[f64], z: &[f64]| data.eval(x, v, z).powi(2);
    let sys = crate::assembly::assemble(grid, basis, None, &Default::default())?;
    let run = |d: &dyn InitialData| -> Result<RecoveredField<f64>> {
        let lifted = lift_initial(model, samples, d, grid)?;
        let mut s = sys.clone();
        s.initial = lifted.slice(0)?.to_vec();
        let out = crate::solve::march_explicit(&s, n_steps, crate::solve::Record::Last)?;
        recover_mean(&out, n_steps)
    };
    let mean = run(data)?;
    let second = run(&sq)?;
    let mut min_raw = f64::INFINITY;
    let values: Vec<f64> = mean
        .values
        .iter()
        .zip(&second.values)
        .map(|(m, s)| {
            let v = s - m * m;
            min_raw = min_raw.min(v);
            v.max(0.0)
        })
        .collect();
    let warning = min_raw < -10.0 * (grid.h + grid.dp);
    Ok(VarianceReport {
        variance: RecoveredField { quantity: Quantity::Variance, time_index: n_steps, inner: 1, values },
        mean,
        min_raw,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientModel;
    use crate::grid::GridBuilder;

    fn heat_grid(n_p: usize, p_max: f64) -> PhaseSpaceGrid {
        GridBuilder::new(Kind::Heat, 1, 1).n(8).n_p(n_p).p_max(p_max).steps(1).build().unwrap()
    }

    #[test]
    fn heat_kernel_integrates_to_one() {
        let g = heat_grid(400, 40.0);
        for a in [0.5, 1.0, 3.0] {
            let s: f64 = kernel(&g, &[a]).iter().sum::<f64>() * g.dp;
            // midpoint sum of the two-sided exponential on cell centres
            let x = a * g.dp / 2.0;
            assert!((s - x / x.sinh()).abs() < 1e-8, "a={a} sum={s}");
        }
    }

    #[test]
    fn wave_kernel_integrates_to_one() {
        let g = GridBuilder::new(Kind::Advection, 1, 1).n(4).n_p(200).n_q(200).p_max(30.0).steps(1).build().unwrap();
        let s: f64 = kernel(&g, &[2.0]).iter().sum::<f64>() * g.aux_cell_volume();
        let y = 2f64.sqrt() * g.dp / 2.0;
        assert!((s - (y / y.sinh()).powi(2)).abs() < 1e-8, "sum={s}");
    }

    #[test]
    fn single_sample_recovers_data() {
        let model = CoefficientModel::diagonal(1, 1, 10.0).unwrap();
        let samples = SampleSet::from_points(vec![vec![1.0]]);
        let g = heat_grid(400, 40.0);
        let data = InitialCondition::SineProduct { modes: vec![1] };
        let rep = verify_lift_identity(&model, &samples, &data, &g).unwrap();
        // only the midpoint defect of the kernel remains
        let x = g.dp / 2.0;
        assert!((rep.max_error - (1.0 - x / x.sinh())).abs() < 1e-4, "{rep:?}");
    }

    #[test]
    fn positivity_is_enforced() {
        let model = CoefficientModel::diagonal(1, 1, 10.0).unwrap();
        let samples = SampleSet::from_points(vec![vec![1.0], vec![-0.5]]);
        let g = heat_grid(8, 4.0);
        let err = lift_initial(&model, &samples, &InitialCondition::Constant { value: 1.0 }, &g).unwrap_err();
        assert!(matches!(err, Error::Positivity { i: 0, m: 1, .. }));
    }

    #[test]
    fn missing_slice_is_a_state_error() {
        let f = LiftedField::<f64>::new(heat_grid(8, 4.0));
        assert!(matches!(f.slice(3), Err(Error::State(_))));
    }
}
