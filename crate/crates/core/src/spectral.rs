//! Sparsity, Gershgorin enclosures and extreme singular values of the global
//! system, with the explicit-constant bounds checked for the 1-D heat case.

use crate::assembly::{dilate_to_hermitian, LinearSystem};
use crate::error::{Error, Result};
use crate::grid::Kind;
use crate::scalar::{axpy, dot, norm2, Scalar, C64};
use crate::solve::{solve_block_adjoint, solve_block_forward_rhs};
use crate::sparse::SparseMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Largest nonzero count over all rows and columns.
pub fn sparsity_count<T: Scalar>(h: &SparseMatrix<T>) -> usize {
    let mut cols = vec![0usize; h.n_cols];
    for &c in &h.col_indices {
        cols[c] += 1;
    }
    let rows = (0..h.n_rows).map(|i| h.row_nnz(i)).max().unwrap_or(0);
    rows.max(cols.into_iter().max().unwrap_or(0))
}

/// Union of Gershgorin discs of a Hermitian matrix as sorted disjoint intervals.
pub fn gershgorin_intervals<T: Scalar>(a: &SparseMatrix<T>) -> Result<Vec<(f64, f64)>> {
    let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if a.hermitian_defect() > 1e-12 * scale {
        return Err(Error::Contract("Gershgorin enclosure needs a Hermitian matrix".into()));
    }
    let mut iv: Vec<(f64, f64)> = (0..a.n_rows)
        .map(|i| {
            let mut c = 0.0;
            let mut r = 0.0;
            for (j, v) in a.row(i) {
                if j == i {
                    c = v.re();
                } else {
                    r += v.abs();
                }
            }
            (c - r, c + r)
        })
        .collect();
    iv.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in iv {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    Ok(out)
}

pub fn enclosure_contains(iv: &[(f64, f64)], x: f64, slack: f64) -> bool {
    iv.iter().any(|(lo, hi)| x >= lo - slack && x <= hi + slack)
}

/// Square operator with cheap exact solves.
pub trait InvertibleOperator<T: Scalar> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T]) -> Result<Vec<T>>;
    fn apply_adjoint(&self, x: &[T]) -> Result<Vec<T>>;
    fn solve(&self, b: &[T]) -> Result<Vec<T>>;
    fn solve_adjoint(&self, b: &[T]) -> Result<Vec<T>>;
}

impl<T: Scalar> InvertibleOperator<T> for LinearSystem<T> {
    fn dim(&self) -> usize {
        self.n_steps * self.block_size
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        let bs = self.block_size;
        let mut out = Vec::with_capacity(x.len());
        for n in 0..self.n_steps {
            let xn = &x[n * bs..(n + 1) * bs];
            let mut blk = match &self.implicit {
                Some(a) => a.matvec(xn),
                None => xn.to_vec(),
            };
            if n > 0 {
                let bp = self.step.matvec(&x[(n - 1) * bs..n * bs]);
                for (o, v) in blk.iter_mut().zip(&bp) {
                    *o -= *v;
                }
            }
            out.extend(blk);
        }
        Ok(out)
    }

    fn apply_adjoint(&self, x: &[T]) -> Result<Vec<T>> {
        let bs = self.block_size;
        let mut out = Vec::with_capacity(x.len());
        for n in 0..self.n_steps {
            let xn = &x[n * bs..(n + 1) * bs];
            let mut blk = match &self.implicit {
                Some(a) => a.adjoint_matvec(xn),
                None => xn.to_vec(),
            };
            if n + 1 < self.n_steps {
                let bh = self.step.adjoint_matvec(&x[(n + 1) * bs..(n + 2) * bs]);
                for (o, v) in blk.iter_mut().zip(&bh) {
                    *o -= *v;
                }
            }
            out.extend(blk);
        }
        Ok(out)
    }

    fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        solve_block_forward_rhs(self, b)
    }

    fn solve_adjoint(&self, b: &[T]) -> Result<Vec<T>> {
        solve_block_adjoint(self, b)
    }
}

/// A small sparse matrix with a dense LU factorisation for the solves.
pub struct DenseFactored {
    a: SparseMatrix<C64>,
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_h: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseFactored {
    pub fn new<T: Scalar>(a: &SparseMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Contract("singular values by inverse iteration need a square matrix".into()));
        }
        let dense = a.to_dense_c64();
        let lu_h = dense.adjoint().lu();
        let lu = dense.lu();
        if !lu.is_invertible() {
            return Err(Error::Contract("matrix is singular".into()));
        }
        Ok(Self { a: a.to_complex(), lu, lu_h })
    }
}

impl InvertibleOperator<C64> for DenseFactored {
    fn dim(&self) -> usize {
        self.a.n_rows
    }
    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        Ok(self.a.matvec(x))
    }
    fn apply_adjoint(&self, x: &[C64]) -> Result<Vec<C64>> {
        Ok(self.a.adjoint_matvec(x))
    }
    fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        let v = nalgebra::DVector::from_column_slice(b);
        self.lu.solve(&v).map(|x| x.as_slice().to_vec()).ok_or_else(|| Error::Contract("singular".into()))
    }
    fn solve_adjoint(&self, b: &[C64]) -> Result<Vec<C64>> {
        let v = nalgebra::DVector::from_column_slice(b);
        self.lu_h.solve(&v).map(|x| x.as_slice().to_vec()).ok_or_else(|| Error::Contract("singular".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Largest dimension for the dense SVD cross-check.
    pub dense_limit: usize,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000, seed: 0x5eed, dense_limit: 512 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularValues {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub iterations_min: usize,
    pub iterations_max: usize,
}

fn start_vector<T: Scalar>(n: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<T> = (0..n)
        .map(|_| {
            let re: f64 = rng.gen_range(-1.0..1.0);
            let im: f64 = rng.gen_range(-1.0..1.0);
            T::from_parts(re, im)
        })
        .collect();
    normalize(&mut v);
    v
}

fn normalize<T: Scalar>(v: &mut [T]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x = x.scale(1.0 / n);
        }
    }
    n
}

/// Largest eigenvalue of a Hermitian positive operator by power iteration.
///
/// Stops on the eigen-residual `‖Bx - θx‖ ≤ tol θ` rather than on stagnation of
/// `θ`, which stalls far from the limit when the top of the spectrum is clustered.
fn power_top<T: Scalar>(
    n: usize,
    mut apply: impl FnMut(&[T]) -> Result<Vec<T>>,
    opts: &IterationOptions,
    seed: u64,
) -> Result<(f64, usize)> {
    let mut x = start_vector::<T>(n, seed);
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let mut y = apply(&x)?;
        let theta = dot(&x, &y).re();
        let mut r = y.clone();
        axpy(T::from_real(-theta), &x, &mut r);
        residual = norm2(&r) / theta.abs().max(f64::MIN_POSITIVE);
        if residual <= opts.tol {
            return Ok((theta, it));
        }
        if normalize(&mut y) == 0.0 {
            return Ok((0.0, it));
        }
        x = y;
    }
    Err(Error::Convergence { iterations: opts.max_iter, residual })
}

/// Power iteration on `LᴴL` for `σ_max`, inverse iteration through the exact
/// block solves for `σ_min`.
pub fn extreme_singular_values<T: Scalar>(
    op: &dyn InvertibleOperator<T>,
    opts: &IterationOptions,
) -> Result<SingularValues> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::Contract("empty operator".into()));
    }
    let (top, it_max) = power_top::<T>(n, |x| op.apply_adjoint(&op.apply(x)?), opts, opts.seed)?;
    let (inv, it_min) =
        power_top::<T>(n, |x| op.solve(&op.solve_adjoint(x)?), opts, opts.seed.wrapping_add(1))?;
    Ok(SingularValues {
        sigma_min: 1.0 / inv.sqrt(),
        sigma_max: top.sqrt(),
        iterations_min: it_min,
        iterations_max: it_max,
    })
}

/// All singular values of a small matrix, descending.
pub fn dense_singular_values<T: Scalar>(a: &SparseMatrix<T>) -> Vec<f64> {
    let d: DMatrix<C64> = a.to_dense_c64();
    let mut s: Vec<f64> = d.svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Eigenvalues of a small Hermitian matrix, ascending.
pub fn dense_hermitian_eigenvalues<T: Scalar>(a: &SparseMatrix<T>) -> Vec<f64> {
    let d: DMatrix<C64> = a.to_dense_c64();
    let mut e: Vec<f64> = d.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|x, y| x.total_cmp(y));
    e
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaVerdict {
    pub claim: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl LemmaVerdict {
    fn le(claim: &str, measured: f64, bound: f64) -> Self {
        Self { claim: claim.into(), measured, bound, pass: measured <= bound * (1.0 + 1e-10) }
    }

    fn ge(claim: &str, measured: f64, bound: f64) -> Self {
        Self { claim: claim.into(), measured, bound, pass: measured >= bound * (1.0 - 1e-10) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseCheck {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Largest relative deviation of the iterative estimates.
    pub rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub kind: Kind,
    pub n: usize,
    pub n_t: usize,
    pub tau: f64,
    pub block_size: usize,
    pub s: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub kappa: f64,
    /// Iterations spent on `σ_min` and `σ_max`.
    pub iterations: (usize, usize),
    pub gershgorin: Vec<(f64, f64)>,
    pub dense: Option<DenseCheck>,
    pub verdicts: Vec<LemmaVerdict>,
}

impl SpectralReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

pub fn spectral_report<T: Scalar>(system: &LinearSystem<T>, opts: &IterationOptions) -> Result<SpectralReport> {
    let l = system.matrix_l();
    let h = dilate_to_hermitian(&l);
    let s = sparsity_count(&h);
    let gershgorin = gershgorin_intervals(&h)?;
    let sv = extreme_singular_values(system, opts)?;
    let dense = if l.n_rows <= opts.dense_limit {
        let all = dense_singular_values(&l);
        let (dmax, dmin) = (all[0], *all.last().unwrap());
        let rel_err = ((sv.sigma_max - dmax) / dmax).abs().max(((sv.sigma_min - dmin) / dmin).abs());
        Some(DenseCheck { sigma_min: dmin, sigma_max: dmax, rel_err })
    } else {
        None
    };
    let g = &system.grid;
    let kappa = sv.sigma_max / sv.sigma_min;
    let mut verdicts = vec![
        LemmaVerdict::ge("kappa >= 1", kappa, 1.0),
        LemmaVerdict::ge("s >= 1", s as f64, 1.0),
    ];
    let lambda_ok = g.tau / (g.h * g.h * g.dp) <= 0.25 * (1.0 + 1e-12);
    if system.kind == Kind::Heat && g.d == 1 && g.l == 1 && lambda_ok {
        verdicts.push(LemmaVerdict::ge("sigma_min >= tau", sv.sigma_min, g.tau));
        verdicts.push(LemmaVerdict::le("sigma_max <= 2", sv.sigma_max, 2.0));
        verdicts.push(LemmaVerdict::le("s <= 7", s as f64, 7.0));
        verdicts.push(LemmaVerdict::le("kappa <= 2/tau", kappa, 2.0 / g.tau));
    }
    if let Some(dc) = &dense {
        verdicts.push(LemmaVerdict::le("dense cross-check within 2 tol", dc.rel_err, 2.0 * opts.tol));
    }
    Ok(SpectralReport {
        kind: system.kind,
        n: g.n,
        n_t: system.n_steps,
        tau: g.tau,
        block_size: system.block_size,
        s,
        sigma_min: sv.sigma_min,
        sigma_max: sv.sigma_max,
        kappa,
        iterations: (sv.iterations_min, sv.iterations_max),
        gershgorin,
        dense,
        verdicts,
    })
}

/// Window for `κ(2N)/κ(N)`: the predicted order with a factor-2 band, and for
/// Boltzmann the bounded growth of `σ_max`.
pub fn kappa_ratio_window(kind: Kind) -> (f64, f64) {
    match kind {
        Kind::Heat | Kind::Advection => (4.0, 16.0),
        Kind::Schrodinger => (2.0, 8.0),
        Kind::Boltzmann => (1.0, 3.0),
    }
}

/// Two-size scaling verdicts from reports at `N` and `2N`.
pub fn scaling_verdicts(coarse: &SpectralReport, fine: &SpectralReport) -> Result<Vec<LemmaVerdict>> {
    if coarse.kind != fine.kind {
        return Err(Error::KindMismatch("scaling pair mixes kinds".into()));
    }
    let ratio = fine.kappa / coarse.kappa;
    let (lo, hi) = kappa_ratio_window(coarse.kind);
    let mut out = vec![LemmaVerdict {
        claim: format!("kappa ratio in [{lo}, {hi}]"),
        measured: ratio,
        bound: hi,
        pass: ratio >= lo && ratio <= hi,
    }];
    if coarse.kind == Kind::Boltzmann {
        out.push(LemmaVerdict::le("sigma_max ratio <= 1.5", fine.sigma_max / coarse.sigma_max, 1.5));
    }
    Ok(out)
}
