//! Time marching of lifted systems, block forward substitution, and the
//! per-sample reference solvers.

use crate::assembly::{build_velocity_quadrature, LinearSystem};
use crate::coeff::{CoefficientModel, SampleSet};
use crate::error::{Error, Result};
use crate::grid::{stride, Kind, PhaseSpaceGrid, XBoundary};
use crate::lift::{InitialData, LiftedField, Quantity, RecoveredField};
use crate::scalar::{axpy, norm2, Scalar, C64};
use crate::sparse::SparseMatrix;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Which time slices a march keeps. Slice 0 and the final slice are always kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Record {
    All,
    Last,
    Every(usize),
}

impl Record {
    fn keeps(self, n: usize, last: usize) -> bool {
        n == 0
            || n == last
            || match self {
                Record::All => true,
                Record::Last => false,
                Record::Every(k) => k > 0 && n % k == 0,
            }
    }
}

/// Residual target for the inner implicit solves.
pub const INNER_TOL: f64 = 1e-14;

/// Solve `A x = b` by conjugate gradients on `AᴴA x = Aᴴ b`.
///
/// Only used for the well-conditioned trapezoidal blocks `I ± iθH`.
pub fn cgnr<T: Scalar>(a: &SparseMatrix<T>, b: &[T], x0: Option<&[T]>, tol: f64, max_iter: usize) -> Result<Vec<T>> {
    let n = a.n_cols;
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![T::zero(); n]);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(vec![T::zero(); n]);
    }
    let mut r = b.to_vec();
    let ax = a.matvec(&x);
    for (ri, v) in r.iter_mut().zip(&ax) {
        *ri -= *v;
    }
    let mut z = a.adjoint_matvec(&r);
    let mut p = z.clone();
    let mut zz = norm2(&z).powi(2);
    for it in 0..max_iter {
        let rn = norm2(&r);
        if rn <= tol * bnorm {
            return Ok(x);
        }
        let w = a.matvec(&p);
        let ww = norm2(&w).powi(2);
        if ww == 0.0 {
            return Err(Error::Convergence { iterations: it, residual: rn / bnorm });
        }
        let alpha = T::from_real(zz / ww);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &w, &mut r);
        z = a.adjoint_matvec(&r);
        let zz_new = norm2(&z).powi(2);
        let beta = T::from_real(zz_new / zz);
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = *zi + beta * *pi;
        }
        zz = zz_new;
    }
    let rn = norm2(&r) / bnorm;
    if rn <= tol.max(1e-12) {
        // stagnated at rounding level
        return Ok(x);
    }
    Err(Error::Convergence { iterations: max_iter, residual: rn })
}

fn check_finite<T: Scalar>(u: &[T], step: usize) -> Result<()> {
    if u.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Instability { step })
    }
}

/// One block step `u ← A⁻¹(B u + f)`.
fn step_once<T: Scalar>(s: &LinearSystem<T>, u: &[T], out: &mut Vec<T>, step: usize) -> Result<()> {
    out.resize(s.block_size, T::zero());
    s.step.matvec_into(u, out);
    for (o, f) in out.iter_mut().zip(&s.forcing) {
        *o += *f;
    }
    if let Some(a) = &s.implicit {
        *out = cgnr(a, out, Some(u), INNER_TOL, 10 * s.block_size.max(100))?;
    }
    check_finite(out, step)
}

/// `u^{n+1} = B uⁿ + f` for `n_steps` steps from `system.initial`.
pub fn march_explicit<T: Scalar>(system: &LinearSystem<T>, n_steps: usize, record: Record) -> Result<LiftedField<T>> {
    if system.implicit.is_some() {
        return Err(Error::KindMismatch("implicit system; use march_trapezoidal_schrodinger".into()));
    }
    march(system, n_steps, record)
}

/// Implicit-midpoint march for the Schrödinger system.
pub fn march_trapezoidal_schrodinger(
    system: &LinearSystem<C64>,
    n_steps: usize,
    record: Record,
) -> Result<LiftedField<C64>> {
    if system.kind != Kind::Schrodinger {
        return Err(Error::KindMismatch(format!("{} is not schrodinger", system.kind)));
    }
    march(system, n_steps, record)
}

fn march<T: Scalar>(system: &LinearSystem<T>, n_steps: usize, record: Record) -> Result<LiftedField<T>> {
    if system.initial.len() != system.block_size {
        return Err(Error::Layout("initial slice has the wrong length".into()));
    }
    check_finite(&system.initial, 0)?;
    let mut field = LiftedField::new(system.grid.clone());
    let mut u = system.initial.clone();
    let mut next = Vec::with_capacity(system.block_size);
    field.slices.insert(0, u.clone());
    for n in 1..=n_steps {
        step_once(system, &u, &mut next, n)?;
        std::mem::swap(&mut u, &mut next);
        if record.keeps(n, n_steps) {
            field.slices.insert(n, u.clone());
        }
    }
    Ok(field)
}

/// Forward block substitution for `L U = F`, returning the stacked `U`.
pub fn solve_block_forward<T: Scalar>(system: &LinearSystem<T>) -> Result<Vec<T>> {
    solve_block_forward_rhs(system, &system.rhs())
}

/// Forward block substitution with an explicit right-hand side.
pub fn solve_block_forward_rhs<T: Scalar>(system: &LinearSystem<T>, rhs: &[T]) -> Result<Vec<T>> {
    let bs = system.block_size;
    if rhs.len() != bs * system.n_steps {
        return Err(Error::Layout("right-hand side length".into()));
    }
    let mut out = Vec::with_capacity(rhs.len());
    let mut prev: Option<Vec<T>> = None;
    for n in 0..system.n_steps {
        let mut block = rhs[n * bs..(n + 1) * bs].to_vec();
        if let Some(p) = &prev {
            let bp = system.step.matvec(p);
            for (b, v) in block.iter_mut().zip(&bp) {
                *b += *v;
            }
        }
        if let Some(a) = &system.implicit {
            block = cgnr(a, &block, None, INNER_TOL, 10 * bs.max(100))?;
        }
        check_finite(&block, n + 1)?;
        out.extend_from_slice(&block);
        prev = Some(block);
    }
    Ok(out)
}

/// Backward block substitution for `Lᴴ X = G`.
pub fn solve_block_adjoint<T: Scalar>(system: &LinearSystem<T>, rhs: &[T]) -> Result<Vec<T>> {
    let bs = system.block_size;
    let nt = system.n_steps;
    if rhs.len() != bs * nt {
        return Err(Error::Layout("right-hand side length".into()));
    }
    let ah = system.implicit.as_ref().map(|a| a.adjoint());
    let mut out = vec![T::zero(); rhs.len()];
    for n in (0..nt).rev() {
        let mut block = rhs[n * bs..(n + 1) * bs].to_vec();
        if n + 1 < nt {
            let next = &out[(n + 1) * bs..(n + 2) * bs];
            let bh = system.step.adjoint_matvec(next);
            for (b, v) in block.iter_mut().zip(&bh) {
                *b += *v;
            }
        }
        if let Some(a) = &ah {
            block = cgnr(a, &block, None, INNER_TOL, 10 * bs.max(100))?;
        }
        check_finite(&block, n + 1)?;
        out[n * bs..(n + 1) * bs].copy_from_slice(&block);
    }
    Ok(out)
}

/// Per-sample solution of the original PDE on the lifted grid's x-cells.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectSolution<T> {
    pub kind: Kind,
    /// Values per x-cell (times ordinates for Boltzmann), keyed by time index.
    pub slices: BTreeMap<usize, Vec<T>>,
    pub inner: usize,
    /// Sub-steps per lifted time step.
    pub substeps: usize,
}

fn x_nb(g: &PhaseSpaceGrid, j: usize, axis: usize, delta: isize) -> Option<usize> {
    let nx = g.n_x();
    let s = stride(nx, g.d, axis);
    let i = (j / s) % nx;
    let t = i as isize + delta;
    let t = match g.x_bc {
        XBoundary::Periodic => t.rem_euclid(nx as isize),
        XBoundary::Dirichlet => {
            if t < 0 || t >= nx as isize {
                return None;
            }
            t
        }
    } as usize;
    Some(j - i * s + t * s)
}

fn lap<T: Scalar>(g: &PhaseSpaceGrid, u: &[T], j: usize) -> T {
    let mut s = u[j].scale(-2.0 * g.d as f64);
    for a in 0..g.d {
        for delta in [-1, 1] {
            if let Some(jn) = x_nb(g, j, a, delta) {
                s += u[jn];
            }
        }
    }
    s.scale(1.0 / (g.h * g.h))
}

/// `a(x_j, z)` on the x-cells, refusing non-positive coefficients.
fn coefficient_field(model: &CoefficientModel, z: &[f64], g: &PhaseSpaceGrid) -> Result<Vec<f64>> {
    let a = model.a(z);
    for (i, v) in a.iter().enumerate() {
        if !(*v > 0.0) {
            return Err(Error::Positivity { i, m: 0, value: *v });
        }
    }
    Ok((0..g.x_cells())
        .map(|j| {
            let x = g.x_point(j);
            model.basis.iter().zip(&a).map(|(b, ai)| ai * b.eval(&x)).sum()
        })
        .collect())
}

/// Solve the original PDE for one input `z`, recording the time indices of
/// `record` on the lifted grid's steps.
///
/// Heat: forward Euler with the centred Laplacian. Advection `u_t + a Σ∂_x u = 0`:
/// first-order upwind. Boltzmann `f_t + v·∇f = a (⟨f⟩ - f)`: upwind with the
/// lifted solver's ordinates. Schrödinger `iħ u_t = -(ħ²/2)Δu + a u`: trapezoidal.
pub fn solve_direct_sample(
    model: &CoefficientModel,
    z: &[f64],
    data: &dyn InitialData,
    grid: &PhaseSpaceGrid,
    n_steps: usize,
    record: Record,
    hbar: f64,
) -> Result<DirectSolution<C64>> {
    let g = grid;
    let a = coefficient_field(model, z, g)?;
    let a_max = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dim = g.d as f64;
    // stability limit of the direct scheme; the lifted τ is subdivided to meet it
    let tau_max = match g.kind {
        Kind::Heat => g.h * g.h / (4.0 * dim * a_max.max(1e-300)),
        Kind::Advection => g.h / (dim * a_max.max(1e-300)),
        Kind::Boltzmann => 1.0 / (dim / g.h + a_max),
        Kind::Schrodinger => f64::INFINITY,
    };
    let substeps = ((g.tau / tau_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let dt = g.tau / substeps as f64;
    let empty: Vec<f64> = Vec::new();
    let nx = g.x_cells();
    let mut slices = BTreeMap::new();
    match g.kind {
        Kind::Heat | Kind::Advection => {
            let mut u: Vec<f64> = (0..nx).map(|j| data.eval(&g.x_point(j), &empty, z)).collect();
            slices.insert(0, u.iter().map(|v| v.to_c64()).collect());
            let mut next = vec![0.0; nx];
            for n in 1..=n_steps {
                for _ in 0..substeps {
                    for j in 0..nx {
                        let rate = if g.kind == Kind::Heat {
                            a[j] * lap(g, &u, j)
                        } else {
                            let mut s = 0.0;
                            for ax in 0..g.d {
                                let back = x_nb(g, j, ax, -1).map(|jn| u[jn]).unwrap_or(0.0);
                                s += (u[j] - back) / g.h;
                            }
                            -a[j] * s
                        };
                        next[j] = u[j] + dt * rate;
                    }
                    std::mem::swap(&mut u, &mut next);
                }
                check_finite(&u, n)?;
                if record.keeps(n, n_steps) {
                    slices.insert(n, u.iter().map(|v| v.to_c64()).collect());
                }
            }
            Ok(DirectSolution { kind: g.kind, slices, inner: 1, substeps })
        }
        Kind::Boltzmann => {
            let tq = build_velocity_quadrature(g.n_ord)?.tensor(g.d);
            let nv = tq.weights.len();
            let mut f: Vec<f64> = Vec::with_capacity(nx * nv);
            for j in 0..nx {
                let x = g.x_point(j);
                for l in 0..nv {
                    f.push(data.eval(&x, &tq.nodes[l], z));
                }
            }
            slices.insert(0, f.iter().map(|v| v.to_c64()).collect());
            let mut next = vec![0.0; f.len()];
            for n in 1..=n_steps {
                for _ in 0..substeps {
                    for j in 0..nx {
                        let avg: f64 =
                            (0..nv).map(|l| tq.weights[l] * f[j * nv + l]).sum::<f64>() / tq.omega;
                        for l in 0..nv {
                            let mut tr = 0.0;
                            for ax in 0..g.d {
                                let v = tq.nodes[l][ax];
                                let delta = if v > 0.0 { -1 } else { 1 };
                                let nb = x_nb(g, j, ax, delta).map(|jn| f[jn * nv + l]).unwrap_or(0.0);
                                tr += v.abs() * (f[j * nv + l] - nb) / g.h;
                            }
                            let c = f[j * nv + l];
                            next[j * nv + l] = c + dt * (-tr + a[j] * (avg - c));
                        }
                    }
                    std::mem::swap(&mut f, &mut next);
                }
                check_finite(&f, n)?;
                if record.keeps(n, n_steps) {
                    slices.insert(n, f.iter().map(|v| v.to_c64()).collect());
                }
            }
            Ok(DirectSolution { kind: g.kind, slices, inner: nv, substeps })
        }
        Kind::Schrodinger => {
            if !(hbar > 0.0) {
                return Err(Error::Config("hbar must be positive".into()));
            }
            // H = -(ħ²/2)Δ + a
            let mut b = crate::sparse::CsrBuilder::with_capacity(nx, nx, nx * (2 * g.d + 1));
            let ih2 = 1.0 / (g.h * g.h);
            for j in 0..nx {
                b.push(j, a[j] + hbar * hbar * ih2 * g.d as f64);
                for ax in 0..g.d {
                    for delta in [-1, 1] {
                        if let Some(jn) = x_nb(g, j, ax, delta) {
                            b.push(jn, -0.5 * hbar * hbar * ih2);
                        }
                    }
                }
                b.finish_row();
            }
            let h = b.build().to_complex();
            let id = SparseMatrix::<C64>::identity(nx);
            let th = C64::new(0.0, 0.5 * dt / hbar);
            let am = id.linear_combination(C64::new(1.0, 0.0), &h, th)?;
            let bm = id.linear_combination(C64::new(1.0, 0.0), &h, -th)?;
            let mut u: Vec<C64> = (0..nx).map(|j| data.eval_c64(&g.x_point(j), &empty, z)).collect();
            slices.insert(0, u.clone());
            for n in 1..=n_steps {
                for _ in 0..substeps {
                    let rhs = bm.matvec(&u);
                    u = cgnr(&am, &rhs, Some(&u), INNER_TOL, 10 * nx.max(100))?;
                }
                check_finite(&u, n)?;
                if record.keeps(n, n_steps) {
                    slices.insert(n, u.clone());
                }
            }
            Ok(DirectSolution { kind: g.kind, slices, inner: 1, substeps })
        }
    }
}

/// Arithmetic mean of the per-sample direct solutions at slice `n_steps`.
///
/// Samples are solved in parallel and summed in index order.
pub fn ensemble_direct(
    model: &CoefficientModel,
    samples: &SampleSet,
    data: &dyn InitialData,
    grid: &PhaseSpaceGrid,
    n_steps: usize,
    hbar: f64,
) -> Result<RecoveredField<C64>> {
    if samples.m() == 0 {
        return Err(Error::Config("empty sample set".into()));
    }
    let sols: Vec<Result<DirectSolution<C64>>> = samples
        .samples
        .par_iter()
        .map(|z| solve_direct_sample(model, z, data, grid, n_steps, Record::Last, hbar))
        .collect();
    let mut acc: Option<Vec<C64>> = None;
    let mut inner = 1;
    for (m, s) in sols.into_iter().enumerate() {
        let s = s.map_err(|e| match e {
            Error::Positivity { i, value, .. } => Error::Positivity { i, m, value },
            other => Error::Sample { index: m, source: Box::new(other) },
        })?;
        inner = s.inner;
        let last = &s.slices[&n_steps];
        match &mut acc {
            None => acc = Some(last.clone()),
            Some(a) => {
                for (x, y) in a.iter_mut().zip(last) {
                    *x += *y;
                }
            }
        }
    }
    let inv = 1.0 / samples.m() as f64;
    let values = acc.unwrap().into_iter().map(|v| v * inv).collect();
    Ok(RecoveredField { quantity: Quantity::Mean, time_index: n_steps, inner, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, AssemblyOptions, BasisValues};
    use crate::grid::GridBuilder;

    fn heat_system() -> LinearSystem<f64> {
        let g = GridBuilder::new(Kind::Heat, 1, 1).n(4).n_p(4).p_max(2.0).cfl_fraction(1.0).build().unwrap();
        let basis = BasisValues::constant(1, g.x_cells(), 1.0);
        assemble(&g, &basis, None, &AssemblyOptions::default()).unwrap().with_steps(4)
    }

    #[test]
    fn zero_trajectory() {
        let s = heat_system();
        let f = march_explicit(&s, 4, Record::All).unwrap();
        assert!(f.slices.values().all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn forward_substitution_matches_march() {
        let mut s = heat_system();
        for (i, v) in s.initial.iter_mut().enumerate() {
            *v = ((i * 7919) % 13) as f64 / 13.0;
        }
        let f = march_explicit(&s, 4, Record::All).unwrap();
        let u = solve_block_forward(&s).unwrap();
        let bs = s.block_size;
        for n in 1..=4 {
            for (a, b) in f.slices[&n].iter().zip(&u[(n - 1) * bs..n * bs]) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn identity_mode() {
        let mut s = heat_system();
        s.step = SparseMatrix::zeros(s.block_size, s.block_size);
        s.forcing = (0..s.block_size).map(|i| i as f64).collect();
        let f = s.rhs();
        assert_eq!(solve_block_forward(&s).unwrap(), f);
    }

    #[test]
    fn adjoint_substitution_inverts_lh() {
        let mut s = heat_system();
        s.step = s.step.scale(0.5);
        let l = s.matrix_l();
        let g: Vec<f64> = (0..l.n_rows).map(|i| (i as f64).sin()).collect();
        let x = solve_block_adjoint(&s, &g).unwrap();
        let back = l.adjoint_matvec(&x);
        for (a, b) in back.iter().zip(&g) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn instability_names_step() {
        let mut s = heat_system();
        s.step = s.step.scale(1e200);
        s.initial = vec![1e200; s.block_size];
        let err = march_explicit(&s, 4, Record::Last).unwrap_err();
        assert!(matches!(err, Error::Instability { step: 1 }));
    }

    #[test]
    fn cgnr_solves_small_complex() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, C64::new(1.0, 0.5)), (0, 1, C64::new(0.0, 0.2)), (1, 0, C64::new(0.0, 0.2)), (1, 1, C64::new(1.0, -0.3))],
        )
        .unwrap();
        let b = vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let x = cgnr(&a, &b, None, 1e-14, 100).unwrap();
        let r = a.matvec(&x);
        assert!((r[0] - b[0]).norm() < 1e-12 && (r[1] - b[1]).norm() < 1e-12);
    }
}
