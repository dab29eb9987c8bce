//! Finite-difference step matrices for the lifted PDEs and the time-global system.
//!
//! Every lifted PDE is discretised as `du/dt = G u + g` on the phase-space grid.
//! Explicit kinds step with `B = I + τG`, `f = τg`; the global system stacks
//! `N_t` such steps into a block lower-bidiagonal matrix `L` with `LU = F`.

use crate::coeff::CoefficientModel;
use crate::error::{Error, Result};
use crate::grid::{check_cfl, stride, unflatten, Kind, PhaseSpaceGrid, XBoundary};
use crate::scalar::{Scalar, C64};
use crate::sparse::{CsrBuilder, SparseMatrix};
use serde::{Deserialize, Serialize};

/// Discrete ordinates on `(-1,1)`: Gauss–Legendre on `(0,1)` mirrored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityQuadrature {
    pub n_ord: usize,
    /// Ascending; the first `n_ord` are negative.
    pub nodes: Vec<f64>,
    /// `½ Σ ω = 1`.
    pub weights: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { t } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            let dp = nf * (t * pn - pm) / (t * t - 1.0);
            let dx = pn / dp;
            t -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        // recompute the derivative at the converged node
        let (mut p0, mut p1) = (1.0, t);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = if n == 1 { 1.0 } else { nf * (t * p1 - p0) / (t * t - 1.0) };
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[n - 1 - i] = t;
        x[i] = -t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

pub fn build_velocity_quadrature(n_ord: usize) -> Result<VelocityQuadrature> {
    if n_ord == 0 {
        return Err(Error::Config("N_ord must be >= 1".into()));
    }
    let (t, wt) = gauss_legendre(n_ord);
    // map [-1,1] -> (0,1)
    let pos: Vec<f64> = t.iter().map(|x| 0.5 * (x + 1.0)).collect();
    let wpos: Vec<f64> = wt.iter().map(|w| 0.5 * w).collect();
    let mut nodes = Vec::with_capacity(2 * n_ord);
    let mut weights = Vec::with_capacity(2 * n_ord);
    for i in (0..n_ord).rev() {
        nodes.push(-pos[i]);
        weights.push(wpos[i]);
    }
    for i in 0..n_ord {
        nodes.push(pos[i]);
        weights.push(wpos[i]);
    }
    Ok(VelocityQuadrature { n_ord, nodes, weights })
}

impl VelocityQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Tensor product over `d` axes, row-major in the ordinate index.
    pub fn tensor(&self, d: usize) -> TensorQuadrature {
        let nv = self.len();
        let count = nv.pow(d as u32);
        let mut nodes = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for l in 0..count {
            let idx = unflatten(l, nv, d);
            nodes.push(idx.iter().map(|&i| self.nodes[i]).collect());
            weights.push(idx.iter().map(|&i| self.weights[i]).product());
        }
        TensorQuadrature { nodes, weights, omega: 2f64.powi(d as i32) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorQuadrature {
    pub nodes: Vec<Vec<f64>>,
    /// Product weights; they sum to `omega`.
    pub weights: Vec<f64>,
    /// Volume of the velocity box `(-1,1)^d`.
    pub omega: f64,
}

/// `bᵢ(x_j)` on the x-cells of a grid, indexed `[i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisValues {
    pub values: Vec<Vec<f64>>,
}

impl BasisValues {
    pub fn constant(l: usize, x_cells: usize, value: f64) -> Self {
        Self { values: vec![vec![value; x_cells]; l] }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn basis_on_grid(model: &CoefficientModel, grid: &PhaseSpaceGrid) -> Result<BasisValues> {
    model.check_shape()?;
    if model.d != grid.d || model.l() != grid.l {
        return Err(Error::Layout(format!(
            "model (d={}, L={}) does not match grid (d={}, L={})",
            model.d,
            model.l(),
            grid.d,
            grid.l
        )));
    }
    let negative_ok = model.allow_negative_basis && grid.kind.symmetric_p();
    let mut values = vec![Vec::with_capacity(grid.x_cells()); grid.l];
    for j in 0..grid.x_cells() {
        let x = grid.x_point(j);
        for (i, b) in model.basis.iter().enumerate() {
            let v = b.eval(&x);
            if !negative_ok && !(v > 0.0) {
                return Err(Error::Config(format!("basis b_{i}({x:?}) = {v} is not positive")));
            }
            values[i].push(v);
        }
    }
    Ok(BasisValues { values })
}

/// Block lower-bidiagonal system `L U = F` over `N_t` steps.
///
/// Block row `n` reads `A u^{n+1} - B u^n = f` with `A = I` for explicit
/// schemes; `u^0` is the initial slice and moves to the right-hand side.
#[derive(Clone, Debug)]
pub struct LinearSystem<T> {
    pub kind: Kind,
    pub grid: PhaseSpaceGrid,
    pub step: SparseMatrix<T>,
    /// `A`; `None` means identity.
    pub implicit: Option<SparseMatrix<T>>,
    pub forcing: Vec<T>,
    pub initial: Vec<T>,
    pub n_steps: usize,
    pub block_size: usize,
}

impl<T: Scalar> LinearSystem<T> {
    /// Assemble `L` explicitly (`N_t · block_size` square).
    pub fn matrix_l(&self) -> SparseMatrix<T> {
        let bs = self.block_size;
        let n = self.n_steps * bs;
        let nnz_guess = n * (1 + self.step.nnz() / bs.max(1));
        let mut b = CsrBuilder::with_capacity(n, n, nnz_guess);
        for blk in 0..self.n_steps {
            for r in 0..bs {
                if blk > 0 {
                    for (c, v) in self.step.row(r) {
                        b.push((blk - 1) * bs + c, -v);
                    }
                }
                match &self.implicit {
                    None => b.push(blk * bs + r, T::one()),
                    Some(a) => {
                        for (c, v) in a.row(r) {
                            b.push(blk * bs + c, v);
                        }
                    }
                }
                b.finish_row();
            }
        }
        b.build()
    }

    /// `F = [f + B u⁰, f, …, f]`.
    pub fn rhs(&self) -> Vec<T> {
        let bs = self.block_size;
        let mut out = Vec::with_capacity(self.n_steps * bs);
        let bu0 = self.step.matvec(&self.initial);
        for (a, b) in self.forcing.iter().zip(&bu0) {
            out.push(*a + *b);
        }
        for _ in 1..self.n_steps {
            out.extend_from_slice(&self.forcing);
        }
        out
    }

    /// Shorten or extend the horizon to `n_steps` blocks.
    pub fn with_steps(mut self, n_steps: usize) -> Self {
        self.n_steps = n_steps.max(1);
        self
    }

    pub fn dilation(&self) -> SparseMatrix<T> {
        dilate_to_hermitian(&self.matrix_l())
    }
}

/// `H = [[0, L], [Lᴴ, 0]]`.
pub fn dilate_to_hermitian<T: Scalar>(l: &SparseMatrix<T>) -> SparseMatrix<T> {
    let (m, n) = (l.n_rows, l.n_cols);
    let lh = l.adjoint();
    let mut b = CsrBuilder::with_capacity(m + n, m + n, 2 * l.nnz());
    for r in 0..m {
        for (c, v) in l.row(r) {
            b.push(m + c, v);
        }
        b.finish_row();
    }
    for r in 0..n {
        for (c, v) in lh.row(r) {
            b.push(c, v);
        }
        b.finish_row();
    }
    b.build()
}

/// Options for the assembly of a lifted system.
#[derive(Clone, Debug, Default)]
pub struct AssemblyOptions {
    /// Heat only: value of `V` in the ghost cells beyond `|p| = P_max`, per x-cell.
    pub far_p: Option<Vec<f64>>,
    /// Skip the CFL refusal (degenerate structure tests).
    pub unchecked: bool,
}

fn x_neighbor(g: &PhaseSpaceGrid, j: usize, axis: usize, delta: isize) -> Option<usize> {
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

/// Push `c · (Δ_h w)_j` where `w` lives at auxiliary offset `aux` of every x-cell.
fn push_laplacian(
    g: &PhaseSpaceGrid,
    b: &mut Vec<(usize, f64)>,
    j: usize,
    aux: usize,
    c: f64,
) {
    let naux = g.aux_size();
    let ih2 = 1.0 / (g.h * g.h);
    b.push((j * naux + aux, -2.0 * g.d as f64 * c * ih2));
    for a in 0..g.d {
        for delta in [-1isize, 1] {
            if let Some(jn) = x_neighbor(g, j, a, delta) {
                b.push((jn * naux + aux, c * ih2));
            }
        }
    }
}

/// `(Δ_h w)_j` for a vector `w` over x-cells (zero Dirichlet data).
fn laplacian_value(g: &PhaseSpaceGrid, w: &[f64], j: usize) -> f64 {
    let ih2 = 1.0 / (g.h * g.h);
    let mut s = -2.0 * g.d as f64 * w[j];
    for a in 0..g.d {
        for delta in [-1isize, 1] {
            if let Some(jn) = x_neighbor(g, j, a, delta) {
                s += w[jn];
            }
        }
    }
    s * ih2
}

fn check_common(g: &PhaseSpaceGrid, basis: &BasisValues, unchecked: bool) -> Result<()> {
    if basis.values.len() != g.l || basis.values.iter().any(|v| v.len() != g.x_cells()) {
        return Err(Error::Layout("basis values do not match the grid".into()));
    }
    if g.kind.symmetric_p() && g.n_p % 2 != 0 {
        return Err(Error::Config("symmetric p-grids need an even N_p".into()));
    }
    if !unchecked {
        let c = check_cfl(g);
        // the admissible ratio assumes |bᵢ| <= 1; larger bases tighten it
        let ratio = c.ratio * basis.max_abs().max(1.0);
        if !(ratio <= c.bound * (1.0 + 1e-12)) {
            return Err(Error::Cfl {
                kind: format!("{} {}", g.kind, c.ratio_name),
                ratio,
                bound: c.bound,
            });
        }
    }
    Ok(())
}

/// p multi-index neighbour `k ± e_i`, or `None` past the far boundary.
fn p_neighbor(g: &PhaseSpaceGrid, k: usize, i: usize, delta: isize) -> Option<usize> {
    let s = stride(g.n_p, g.l, i);
    let ki = (k / s) % g.n_p;
    let t = ki as isize + delta;
    if t < 0 || t >= g.n_p as isize {
        None
    } else {
        Some(k - ki * s + t as usize * s)
    }
}

fn p_component(g: &PhaseSpaceGrid, k: usize, i: usize) -> usize {
    (k / stride(g.n_p, g.l, i)) % g.n_p
}

/// Heat lift: `∂_t V = -Σᵢ sign(pᵢ) bᵢ(x) Δ ∂_{pᵢ} V`, upwind in p away from 0.
///
/// Returns the operator `G` and forcing `g` (nonzero only with `far_p`).
pub fn heat_operator(
    g: &PhaseSpaceGrid,
    basis: &BasisValues,
    far_p: Option<&[f64]>,
) -> Result<(SparseMatrix<f64>, Vec<f64>)> {
    let naux = g.aux_size();
    let n = g.state_size();
    let half = g.n_p / 2;
    let mut b = CsrBuilder::with_capacity(n, n, n * (4 * g.d + 2) * g.l);
    let mut forcing = vec![0.0; n];
    let mut row = Vec::new();
    for j in 0..g.x_cells() {
        for k in 0..naux {
            row.clear();
            for i in 0..g.l {
                let c = basis.values[i][j] / g.dp;
                let up = p_component(g, k, i) >= half;
                let delta = if up { 1 } else { -1 };
                // p>0: -c(ΔV_{k+1} - ΔV_k);  p<0: +c(ΔV_k - ΔV_{k-1})
                push_laplacian(g, &mut row, j, k, c);
                match p_neighbor(g, k, i, delta) {
                    Some(kn) => push_laplacian(g, &mut row, j, kn, -c),
                    None => {
                        if let Some(ghost) = far_p {
                            forcing[j * naux + k] -= c * laplacian_value(g, ghost, j);
                        }
                    }
                }
            }
            for &(col, v) in &row {
                b.push(col, v);
            }
            b.finish_row();
        }
    }
    Ok((b.build(), forcing))
}

/// Boltzmann lift: upwind transport in x plus `Σᵢ sign(pᵢ) bᵢ(x) (I - P) ∂_{pᵢ} F`
/// where `P` is the velocity average.
pub fn boltzmann_operator(
    g: &PhaseSpaceGrid,
    basis: &BasisValues,
    quad: &VelocityQuadrature,
) -> Result<SparseMatrix<f64>> {
    if quad.n_ord != g.n_ord {
        return Err(Error::Layout(format!("quadrature N_ord {} vs grid {}", quad.n_ord, g.n_ord)));
    }
    let tq = quad.tensor(g.d);
    let nvel = tq.weights.len();
    let np = g.p_cells();
    let n = g.state_size();
    let half = g.n_p / 2;
    let avg: Vec<f64> = tq.weights.iter().map(|w| w / tq.omega).collect();
    let mut b = CsrBuilder::with_capacity(n, n, n * (2 * g.d + 1 + 2 * g.l * (nvel + 1)));
    let idx = |j: usize, l: usize, k: usize| (j * nvel + l) * np + k;
    for j in 0..g.x_cells() {
        for l in 0..nvel {
            for k in 0..np {
                // transport
                for a in 0..g.d {
                    let v = tq.nodes[l][a];
                    let c = v.abs() / g.h;
                    b.push(idx(j, l, k), -c);
                    let up = if v > 0.0 { -1 } else { 1 };
                    if let Some(jn) = x_neighbor(g, j, a, up) {
                        b.push(idx(jn, l, k), c);
                    }
                }
                // scattering difference in p
                for i in 0..g.l {
                    let c = basis.values[i][j] / g.dp;
                    let delta = if p_component(g, k, i) >= half { 1 } else { -1 };
                    b.push(idx(j, l, k), -c);
                    for (lp, w) in avg.iter().enumerate() {
                        b.push(idx(j, lp, k), c * w);
                    }
                    if let Some(kn) = p_neighbor(g, k, i, delta) {
                        b.push(idx(j, l, kn), c);
                        for (lp, w) in avg.iter().enumerate() {
                            b.push(idx(j, lp, kn), -c * w);
                        }
                    }
                }
                b.finish_row();
            }
        }
    }
    Ok(b.build())
}

/// Push `c · (D_pp,i w)` at p-cell `k`: Neumann copy at `p = 0`, zero past `P_max`.
fn push_dpp(g: &PhaseSpaceGrid, row: &mut Vec<(usize, f64)>, base: usize, k: usize, i: usize, c: f64) {
    let c = c / (g.dp * g.dp);
    let mut diag = -2.0 * c;
    match p_neighbor(g, k, i, -1) {
        Some(km) => row.push((base + km, c)),
        None => diag += c,
    }
    if let Some(kp) = p_neighbor(g, k, i, 1) {
        row.push((base + kp, c));
    }
    row.push((base + k, diag));
}

/// Advection lift: `∂_t W = -Σᵢ bᵢ(x) Σ_a ∂_{x_a} ∂_{pᵢpᵢ} W`.
///
/// The x-difference is taken forward (downwind of the `p`-diffusion sign), which
/// makes `I + τG` a per-mode convex combination under the CFL bound.
pub fn advection_operator(g: &PhaseSpaceGrid, basis: &BasisValues) -> Result<SparseMatrix<f64>> {
    let naux = g.aux_size();
    let np = g.p_cells();
    let n = g.state_size();
    let mut b = CsrBuilder::with_capacity(n, n, n * 6 * g.d * g.l);
    let mut row = Vec::new();
    for j in 0..g.x_cells() {
        for ql in 0..g.mid_cells() {
            for k in 0..np {
                row.clear();
                for i in 0..g.l {
                    let c = basis.values[i][j] / g.h;
                    for a in 0..g.d {
                        if let Some(jn) = x_neighbor(g, j, a, 1) {
                            push_dpp(g, &mut row, jn * naux + ql * np, k, i, -c);
                        }
                        push_dpp(g, &mut row, j * naux + ql * np, k, i, c);
                    }
                }
                for &(col, v) in &row {
                    b.push(col, v);
                }
                b.finish_row();
            }
        }
    }
    Ok(b.build())
}

/// Lifted Schrödinger Hamiltonian `-(ħ²/2) Δ + Σᵢ bᵢ(x) ∂_{pᵢpᵢ}` (real symmetric).
pub fn schrodinger_hamiltonian(g: &PhaseSpaceGrid, basis: &BasisValues, hbar: f64) -> Result<SparseMatrix<f64>> {
    let naux = g.aux_size();
    let np = g.p_cells();
    let n = g.state_size();
    let mut b = CsrBuilder::with_capacity(n, n, n * (2 * g.d + 1 + 3 * g.l));
    let mut row = Vec::new();
    for j in 0..g.x_cells() {
        for ql in 0..g.mid_cells() {
            for k in 0..np {
                row.clear();
                push_laplacian(g, &mut row, j, ql * np + k, -0.5 * hbar * hbar);
                for i in 0..g.l {
                    push_dpp(g, &mut row, j * naux + ql * np, k, i, basis.values[i][j]);
                }
                for &(col, v) in &row {
                    b.push(col, v);
                }
                b.finish_row();
            }
        }
    }
    Ok(b.build())
}

/// Explicit lifted system for heat, Boltzmann or advection.
pub fn assemble(
    g: &PhaseSpaceGrid,
    basis: &BasisValues,
    quad: Option<&VelocityQuadrature>,
    opts: &AssemblyOptions,
) -> Result<LinearSystem<f64>> {
    check_common(g, basis, opts.unchecked)?;
    match (g.kind, quad) {
        (Kind::Boltzmann, None) => return Err(Error::KindMismatch("Boltzmann needs a velocity quadrature".into())),
        (Kind::Boltzmann, Some(_)) => {}
        (_, Some(_)) => return Err(Error::KindMismatch(format!("{} takes no velocity quadrature", g.kind))),
        _ => {}
    }
    if opts.far_p.is_some() && g.kind != Kind::Heat {
        return Err(Error::KindMismatch("far-p boundary data is heat only".into()));
    }
    if let Some(fp) = &opts.far_p {
        if fp.len() != g.x_cells() {
            return Err(Error::Layout("far_p length differs from the x-cell count".into()));
        }
    }
    let (op, forcing) = match g.kind {
        Kind::Heat => heat_operator(g, basis, opts.far_p.as_deref())?,
        Kind::Boltzmann => (boltzmann_operator(g, basis, quad.unwrap())?, vec![0.0; g.state_size()]),
        Kind::Advection => (advection_operator(g, basis)?, vec![0.0; g.state_size()]),
        Kind::Schrodinger => {
            return Err(Error::KindMismatch("use assemble_schrodinger for the complex system".into()))
        }
    };
    let n = g.state_size();
    let step = SparseMatrix::identity(n).linear_combination(1.0, &op, g.tau)?;
    Ok(LinearSystem {
        kind: g.kind,
        grid: g.clone(),
        step,
        implicit: None,
        forcing: forcing.into_iter().map(|v| v * g.tau).collect(),
        initial: vec![0.0; n],
        n_steps: g.n_t,
        block_size: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchrodingerStepper {
    /// `u^{n+1} = (I - iτH/ħ) u^n`.
    ForwardEuler,
    /// `(I + iτH/2ħ) u^{n+1} = (I - iτH/2ħ) u^n`.
    Trapezoidal,
}

pub fn assemble_schrodinger(
    g: &PhaseSpaceGrid,
    basis: &BasisValues,
    hbar: f64,
    stepper: SchrodingerStepper,
    opts: &AssemblyOptions,
) -> Result<LinearSystem<C64>> {
    if g.kind != Kind::Schrodinger {
        return Err(Error::KindMismatch(format!("grid kind {} is not schrodinger", g.kind)));
    }
    if !(hbar > 0.0) {
        return Err(Error::Config("hbar must be positive".into()));
    }
    check_common(g, basis, opts.unchecked)?;
    let h = schrodinger_hamiltonian(g, basis, hbar)?.to_complex();
    let n = g.state_size();
    let id = SparseMatrix::<C64>::identity(n);
    let one = C64::new(1.0, 0.0);
    let (step, implicit) = match stepper {
        SchrodingerStepper::ForwardEuler => (id.linear_combination(one, &h, C64::new(0.0, -g.tau / hbar))?, None),
        SchrodingerStepper::Trapezoidal => {
            let a = C64::new(0.0, 0.5 * g.tau / hbar);
            (id.linear_combination(one, &h, -a)?, Some(id.linear_combination(one, &h, a)?))
        }
    };
    Ok(LinearSystem {
        kind: Kind::Schrodinger,
        grid: g.clone(),
        step,
        implicit,
        forcing: vec![C64::new(0.0, 0.0); n],
        initial: vec![C64::new(0.0, 0.0); n],
        n_steps: g.n_t,
        block_size: n,
    })
}

/// Copy slice 0 of a lifted field into the system (`F₁ = f + B u⁰`).
pub fn rhs_from_initial<T: Scalar>(
    system: &mut LinearSystem<T>,
    lifted: &crate::lift::LiftedField<T>,
) -> Result<()> {
    if lifted.grid.kind != system.kind || lifted.grid.state_size() != system.block_size {
        return Err(Error::Layout("lifted field does not match the system layout".into()));
    }
    let u0 = lifted.slice(0)?;
    system.initial.clear();
    system.initial.extend_from_slice(u0);
    Ok(())
}

/// The 1-D second-difference block `L_h` (stencil 1, -2, 1) on `n` interior nodes.
pub fn second_difference(n: usize) -> SparseMatrix<f64> {
    let mut b = CsrBuilder::with_capacity(n, n, 3 * n);
    for i in 0..n {
        if i > 0 {
            b.push(i - 1, 1.0);
        }
        b.push(i, -2.0);
        if i + 1 < n {
            b.push(i + 1, 1.0);
        }
        b.finish_row();
    }
    b.build()
}

/// Eigenvalues `-4 sin²(kπh/2)`, `k = 1..N-1`, of `L_h` with `h = 1/N`.
pub fn second_difference_eigenvalues(n_cells: usize) -> Vec<f64> {
    let h = 1.0 / n_cells as f64;
    (1..n_cells)
        .map(|k| -4.0 * (k as f64 * std::f64::consts::PI * h / 2.0).sin().powi(2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridBuilder;

    #[test]
    fn quadrature_small_orders() {
        let q = build_velocity_quadrature(1).unwrap();
        assert_eq!(q.nodes, vec![-0.5, 0.5]);
        assert_eq!(q.weights, vec![1.0, 1.0]);
        let q = build_velocity_quadrature(2).unwrap();
        let s = (1.0 / 3f64).sqrt();
        let expect = [-(0.5 + 0.5 * s), -(0.5 - 0.5 * s), 0.5 - 0.5 * s, 0.5 + 0.5 * s];
        for (a, b) in q.nodes.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((q.nodes[2] - 0.211325).abs() < 1e-6);
        assert!(q.weights.iter().all(|w| (w - 0.5).abs() < 1e-15));
    }

    #[test]
    fn quadrature_weight_condition() {
        for n in 1..=12 {
            let q = build_velocity_quadrature(n).unwrap();
            let s: f64 = q.weights.iter().sum();
            assert!((0.5 * s - 1.0).abs() < 1e-14, "N_ord={n}");
            assert!(q.nodes.iter().all(|v| v.abs() > 0.0 && v.abs() < 1.0));
            for i in 0..n {
                assert_eq!(q.nodes[i], -q.nodes[2 * n - 1 - i]);
                assert_eq!(q.weights[i], q.weights[2 * n - 1 - i]);
            }
            // exact for v^{2n-2} on (0,1)
            let m: f64 = q.nodes[n..].iter().zip(&q.weights[n..]).map(|(v, w)| w * v.powi(2 * n as i32 - 2)).sum();
            assert!((m - 1.0 / (2 * n - 1) as f64).abs() < 1e-13);
        }
    }

    #[test]
    fn second_difference_examples() {
        let lh = second_difference(3);
        assert_eq!(lh.to_dense(), nalgebra::DMatrix::from_row_slice(3, 3, &[-2., 1., 0., 1., -2., 1., 0., 1., -2.]));
        assert!((second_difference_eigenvalues(2)[0] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_step_is_identity() {
        let g = GridBuilder::new(Kind::Heat, 1, 1).n(4).n_p(4).p_max_matching_h().steps(3).t_final(1e-300).build().unwrap();
        let basis = BasisValues::constant(1, g.x_cells(), 1.0);
        let sys = assemble(&g, &basis, None, &AssemblyOptions::default()).unwrap();
        let mut s = sys.clone();
        s.step = SparseMatrix::zeros(s.block_size, s.block_size);
        let l = s.matrix_l();
        assert_eq!(l, SparseMatrix::identity(3 * s.block_size));
    }

    #[test]
    fn dilation_small() {
        let l = SparseMatrix::diagonal(&[2.0]);
        let h = dilate_to_hermitian(&l);
        assert_eq!(h.to_dense(), nalgebra::DMatrix::from_row_slice(2, 2, &[0., 2., 2., 0.]));
    }
}
