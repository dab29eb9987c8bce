//! Mesh selection and CFL admissibility.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest flattened trajectory index a grid may address.
pub const MAX_INDEX: u128 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Heat,
    Boltzmann,
    Advection,
    Schrodinger,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::Heat, Kind::Boltzmann, Kind::Advection, Kind::Schrodinger];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Heat => "heat",
            Kind::Boltzmann => "boltzmann",
            Kind::Advection => "advection",
            Kind::Schrodinger => "schrodinger",
        }
    }

    /// Symmetric p-box `[-P, P]` (heat, Boltzmann) versus one-sided `[0, P]` with a `q` twin.
    pub fn symmetric_p(self) -> bool {
        matches!(self, Kind::Heat | Kind::Boltzmann)
    }

    pub fn has_q(self) -> bool {
        !self.symmetric_p()
    }

    pub fn default_x_boundary(self) -> XBoundary {
        match self {
            Kind::Heat => XBoundary::Dirichlet,
            _ => XBoundary::Periodic,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat" => Ok(Kind::Heat),
            "boltzmann" => Ok(Kind::Boltzmann),
            "advection" => Ok(Kind::Advection),
            "schrodinger" => Ok(Kind::Schrodinger),
            _ => Err(Error::Config(format!("unknown PDE kind '{s}'"))),
        }
    }
}

/// Boundary treatment of the unit cube in `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XBoundary {
    /// Zero data at `x = 0, 1`; unknowns at the `N-1` interior nodes per axis.
    Dirichlet,
    /// `N` nodes per axis at `x = j h`.
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBudget {
    pub epsilon: f64,
    pub r: u32,
}

impl AccuracyBudget {
    pub fn new(epsilon: f64, r: u32) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {epsilon} outside (0,1)")));
        }
        if r == 0 {
            return Err(Error::Config("order r must be >= 1".into()));
        }
        Ok(Self { epsilon, r })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub kind: Kind,
    pub d: usize,
    pub l: usize,
    /// Cells per x-axis; `N h = 1`.
    pub n: usize,
    pub n_p: usize,
    pub n_q: usize,
    /// Gauss–Legendre nodes per half line; `N_v = 2 N_ord` ordinates per axis.
    pub n_ord: usize,
    pub n_t: usize,
    pub h: f64,
    pub dp: f64,
    pub dq: f64,
    pub tau: f64,
    pub p_max: f64,
    /// `N_t tau`; 1 for grids from [`select_grid`].
    pub t_final: f64,
    pub x_bc: XBoundary,
}

impl PhaseSpaceGrid {
    pub fn n_v(&self) -> usize {
        2 * self.n_ord
    }

    pub fn dv(&self) -> f64 {
        2.0 / self.n_v() as f64
    }

    /// Product dimension `D = dL`.
    pub fn big_d(&self) -> usize {
        self.d * self.l
    }

    /// Unknowns per x-axis.
    pub fn n_x(&self) -> usize {
        match self.x_bc {
            XBoundary::Dirichlet => self.n - 1,
            XBoundary::Periodic => self.n,
        }
    }

    pub fn x_cells(&self) -> usize {
        self.n_x().pow(self.d as u32)
    }

    /// p-cells, `N_p^L`.
    pub fn p_cells(&self) -> usize {
        self.n_p.pow(self.l as u32)
    }

    /// Middle index `l` of the layout: velocity ordinates or q-cells.
    pub fn mid_cells(&self) -> usize {
        match self.kind {
            Kind::Heat => 1,
            Kind::Boltzmann => self.n_v().pow(self.d as u32),
            Kind::Advection | Kind::Schrodinger => self.n_q.pow(self.l as u32),
        }
    }

    /// Entries per x-cell.
    pub fn aux_size(&self) -> usize {
        self.mid_cells() * self.p_cells()
    }

    pub fn state_size(&self) -> usize {
        self.x_cells() * self.aux_size()
    }

    /// Recovery cell volume over the auxiliary variables (`dp^L`, or `dp^L dq^L`).
    pub fn aux_cell_volume(&self) -> f64 {
        let v = self.dp.powi(self.l as i32);
        if self.kind.has_q() {
            v * self.dq.powi(self.l as i32)
        } else {
            v
        }
    }

    pub fn x_coord(&self, i: usize) -> f64 {
        match self.x_bc {
            XBoundary::Dirichlet => (i + 1) as f64 * self.h,
            XBoundary::Periodic => i as f64 * self.h,
        }
    }

    /// Row-major multi-index of x-cell `j`.
    pub fn x_multi(&self, j: usize) -> Vec<usize> {
        unflatten(j, self.n_x(), self.d)
    }

    pub fn x_point(&self, j: usize) -> Vec<f64> {
        self.x_multi(j).into_iter().map(|i| self.x_coord(i)).collect()
    }

    /// Cell-centred coordinate of p-index `k` along one axis.
    pub fn p_coord(&self, k: usize) -> f64 {
        if self.kind.symmetric_p() {
            -self.p_max + (k as f64 + 0.5) * self.dp
        } else {
            (k as f64 + 0.5) * self.dp
        }
    }

    pub fn q_coord(&self, l: usize) -> f64 {
        (l as f64 + 0.5) * self.dq
    }

    pub fn index(&self, j: usize, mid: usize, k: usize) -> usize {
        (j * self.mid_cells() + mid) * self.p_cells() + k
    }
}

pub(crate) fn unflatten(mut idx: usize, n: usize, dims: usize) -> Vec<usize> {
    let mut out = vec![0; dims];
    for a in (0..dims).rev() {
        out[a] = idx % n;
        idx /= n;
    }
    out
}

pub(crate) fn stride(n: usize, dims: usize, axis: usize) -> usize {
    n.pow((dims - 1 - axis) as u32)
}

/// Builder for hand-specified grids (tests, experiments).
#[derive(Clone, Debug)]
pub struct GridBuilder {
    kind: Kind,
    d: usize,
    l: usize,
    n: usize,
    n_p: Option<usize>,
    n_q: Option<usize>,
    n_ord: usize,
    p_max: f64,
    t_final: f64,
    step: Step,
    x_bc: Option<XBoundary>,
}

#[derive(Clone, Copy, Debug)]
enum Step {
    /// Fraction of the CFL bound.
    Lambda(f64),
    Steps(usize),
    Tau(f64),
}

impl GridBuilder {
    pub fn new(kind: Kind, d: usize, l: usize) -> Self {
        Self {
            kind,
            d,
            l,
            n: 8,
            n_p: None,
            n_q: None,
            n_ord: 1,
            p_max: 1.0,
            t_final: 1.0,
            step: Step::Lambda(1.0),
            x_bc: None,
        }
    }

    pub fn n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }
    pub fn n_p(mut self, n_p: usize) -> Self {
        self.n_p = Some(n_p);
        self
    }
    pub fn n_q(mut self, n_q: usize) -> Self {
        self.n_q = Some(n_q);
        self
    }
    pub fn n_ord(mut self, n_ord: usize) -> Self {
        self.n_ord = n_ord;
        self
    }
    pub fn p_max(mut self, p_max: f64) -> Self {
        self.p_max = p_max;
        self
    }
    /// Choose `P_max` so that `dp = h`.
    pub fn p_max_matching_h(mut self) -> Self {
        self.p_max = f64::NAN;
        self
    }
    pub fn t_final(mut self, t: f64) -> Self {
        self.t_final = t;
        self
    }
    /// Time step as a fraction of the admissible CFL ratio (1 = on the bound).
    pub fn cfl_fraction(mut self, f: f64) -> Self {
        self.step = Step::Lambda(f);
        self
    }
    pub fn steps(mut self, n_t: usize) -> Self {
        self.step = Step::Steps(n_t);
        self
    }
    pub fn tau(mut self, tau: f64) -> Self {
        self.step = Step::Tau(tau);
        self
    }
    pub fn x_boundary(mut self, bc: XBoundary) -> Self {
        self.x_bc = Some(bc);
        self
    }

    pub fn build(self) -> Result<PhaseSpaceGrid> {
        if self.d == 0 || self.l == 0 || self.n < 2 || self.n_ord == 0 {
            return Err(Error::Config("grid needs d, L >= 1, N >= 2, N_ord >= 1".into()));
        }
        let h = 1.0 / self.n as f64;
        let n_p = self.n_p.unwrap_or(self.n);
        let n_q = self.n_q.unwrap_or(n_p);
        if n_p == 0 || n_q == 0 {
            return Err(Error::Config("N_p and N_q must be positive".into()));
        }
        let width = if self.kind.symmetric_p() { 2.0 } else { 1.0 };
        let p_max = if self.p_max.is_nan() { h * n_p as f64 / width } else { self.p_max };
        if !(p_max > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("P_max and t_final must be positive".into()));
        }
        let dp = width * p_max / n_p as f64;
        let dq = p_max / n_q as f64;
        let mut g = PhaseSpaceGrid {
            kind: self.kind,
            d: self.d,
            l: self.l,
            n: self.n,
            n_p,
            n_q,
            n_ord: self.n_ord,
            n_t: 1,
            h,
            dp,
            dq,
            tau: self.t_final,
            p_max,
            t_final: self.t_final,
            x_bc: self.x_bc.unwrap_or(self.kind.default_x_boundary()),
        };
        let tau = match self.step {
            Step::Lambda(f) => {
                let (_, bound, scale) = cfl_parts(&g);
                f * bound * scale
            }
            Step::Tau(t) => t,
            Step::Steps(k) => self.t_final / k.max(1) as f64,
        };
        if !(tau > 0.0) {
            return Err(Error::Config("time step must be positive".into()));
        }
        g.n_t = steps_for(self.t_final, tau)?;
        g.tau = self.t_final / g.n_t as f64;
        check_capacity(&g)?;
        Ok(g)
    }
}

fn ceil_guarded(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

fn steps_for(t_final: f64, tau: f64) -> Result<usize> {
    let k = ceil_guarded(t_final / tau);
    if !k.is_finite() || k > MAX_INDEX as f64 {
        return Err(Error::Capacity(format!("{k} time steps")));
    }
    Ok((k as usize).max(1))
}

fn check_capacity(g: &PhaseSpaceGrid) -> Result<()> {
    let per_axis = |n: usize, dims: usize| (n as u128).checked_pow(dims as u32);
    let total = per_axis(g.n_x(), g.d)
        .and_then(|x| per_axis(g.n_p, g.l).and_then(|p| x.checked_mul(p)))
        .and_then(|s| {
            let mid = match g.kind {
                Kind::Heat => Some(1),
                Kind::Boltzmann => per_axis(g.n_v(), g.d),
                _ => per_axis(g.n_q, g.l),
            };
            mid.and_then(|m| s.checked_mul(m))
        })
        .and_then(|s| s.checked_mul(g.n_t as u128 + 1));
    match total {
        Some(t) if t <= MAX_INDEX => Ok(()),
        _ => Err(Error::Capacity(format!(
            "grid N={} N_p={} N_t={} exceeds the {}-entry index limit",
            g.n, g.n_p, g.n_t, MAX_INDEX
        ))),
    }
}

/// Mesh from an accuracy budget with unit constants.
///
/// `a_min` is the configured lower bound of the `aᵢ`; it sets the p-box so that
/// the kernel tail `e^{-a_min P_max}` (or `e^{-√a_min P_max}`) is below `trunc_tol`.
pub fn select_grid(
    kind: Kind,
    d: usize,
    l: usize,
    budget: AccuracyBudget,
    trunc_tol: f64,
    a_min: f64,
) -> Result<PhaseSpaceGrid> {
    if !(trunc_tol > 0.0 && trunc_tol < 1.0) {
        return Err(Error::Config(format!("trunc_tol {trunc_tol} outside (0,1)")));
    }
    if !(a_min > 0.0) {
        return Err(Error::Config("a_min must be positive".into()));
    }
    if d == 0 || l == 0 {
        return Err(Error::Config("d and L must be >= 1".into()));
    }
    let k = match kind {
        Kind::Schrodinger => (d + l) as f64,
        _ => (l * d) as f64,
    };
    let n_f = ceil_guarded((k / budget.epsilon).powf(1.0 / budget.r as f64));
    if !n_f.is_finite() || n_f > 1e9 {
        return Err(Error::Capacity(format!("N = {n_f} points per axis")));
    }
    let n = (n_f as usize).max(2);
    let rate = if kind.symmetric_p() { a_min } else { a_min.sqrt() };
    let p_max = (trunc_tol.recip().ln() / rate).max(1.0);
    let n_ord = (n / 2).max(1);
    GridBuilder::new(kind, d, l)
        .n(n)
        .n_p(n)
        .n_q(n)
        .n_ord(n_ord)
        .p_max(p_max)
        .t_final(1.0)
        .tau(spec_tau(kind, d, l, 1.0 / n as f64))
        .build()
}

/// Time step on the CFL bound written in terms of `h` alone.
fn spec_tau(kind: Kind, d: usize, l: usize, h: f64) -> f64 {
    match kind {
        Kind::Heat | Kind::Advection => h.powi(3) / (4 * d * l) as f64,
        Kind::Boltzmann => h / l.max(d) as f64,
        Kind::Schrodinger => h * h / (4 * (d + l)) as f64,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CflDiagnostic {
    pub ok: bool,
    pub ratio: f64,
    pub bound: f64,
    pub ratio_name: String,
}

/// Returns `(ratio, bound, tau at ratio 1)` for the grid's kind.
///
/// The ratios use the actual auxiliary step: heat `τ/(h² dp)`, advection
/// `τ/(h dp²)`, Boltzmann `τ/min(h, dp)`, Schrödinger `τ/min(h, dp)²`. With
/// `dp = h` they are the familiar `τ/h³`, `τ/h` and `τ/h²`.
fn cfl_parts(g: &PhaseSpaceGrid) -> (f64, f64, f64) {
    let (d, l) = (g.d as f64, g.l as f64);
    let scale = match g.kind {
        Kind::Heat => g.h * g.h * g.dp,
        Kind::Advection => g.h * g.dp * g.dp,
        Kind::Boltzmann => g.h.min(g.dp),
        Kind::Schrodinger => g.h.min(g.dp).powi(2),
    };
    let bound = match g.kind {
        Kind::Heat | Kind::Advection => 1.0 / (4.0 * d * l),
        Kind::Boltzmann => 1.0 / l.max(d),
        Kind::Schrodinger => 1.0 / (4.0 * (d + l)),
    };
    (g.tau / scale, bound, scale)
}

pub fn check_cfl(g: &PhaseSpaceGrid) -> CflDiagnostic {
    let (ratio, bound, _) = cfl_parts(g);
    let ratio_name = match g.kind {
        Kind::Heat => "tau/(h^2 dp)",
        Kind::Advection => "tau/(h dp^2)",
        Kind::Boltzmann => "tau/min(h,dp)",
        Kind::Schrodinger => "tau/min(h,dp)^2",
    };
    CflDiagnostic {
        ok: ratio <= bound * (1.0 + 1e-12),
        ratio,
        bound,
        ratio_name: ratio_name.to_string(),
    }
}

/// `Ok` iff [`check_cfl`] passes, otherwise a CFL error carrying the diagnostic.
pub fn require_cfl(g: &PhaseSpaceGrid) -> Result<()> {
    let c = check_cfl(g);
    if c.ok {
        Ok(())
    } else {
        Err(Error::Cfl { kind: format!("{} {}", g.kind, c.ratio_name), ratio: c.ratio, bound: c.bound })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_heat_example() {
        let g = select_grid(Kind::Heat, 1, 1, AccuracyBudget::new(0.1, 1).unwrap(), (-1.0f64).exp(), 1.0)
            .unwrap();
        assert_eq!(g.n, 10);
        assert_eq!(g.n_t, 4000);
        assert!((g.tau - 2.5e-4).abs() < 1e-18);
        assert!((g.p_max - 1.0).abs() < 1e-12);
        assert!(check_cfl(&g).ok);
    }

    #[test]
    fn select_boltzmann_and_schrodinger() {
        let g = select_grid(Kind::Boltzmann, 1, 1, AccuracyBudget::new(0.5, 1).unwrap(), 0.3, 1.0).unwrap();
        assert_eq!((g.n, g.n_t), (2, 2));
        assert_eq!(g.tau, 0.5);
        assert!(check_cfl(&g).ok);

        let g = select_grid(Kind::Schrodinger, 1, 1, AccuracyBudget::new(0.25, 1).unwrap(), 0.3, 1.0)
            .unwrap();
        assert_eq!(g.n, 8);
        assert_eq!(g.tau, 1.0 / 512.0);
    }

    #[test]
    fn cfl_examples() {
        let mk = |tau: f64| {
            GridBuilder::new(Kind::Heat, 1, 1).n(10).n_p(10).p_max_matching_h().tau(tau).build().unwrap()
        };
        let g = mk(2.5e-4);
        assert!((g.dp - g.h).abs() < 1e-15);
        assert!(check_cfl(&g).ok);
        assert!(!check_cfl(&mk(1e-3)).ok);

        let g = GridBuilder::new(Kind::Boltzmann, 1, 1).n(8).n_p(8).p_max_matching_h().tau(0.125).build().unwrap();
        assert!(check_cfl(&g).ok);
    }

    #[test]
    fn capacity_error() {
        let e = select_grid(Kind::Heat, 3, 3, AccuracyBudget::new(1e-9, 1).unwrap(), 0.5, 1.0);
        assert!(matches!(e, Err(Error::Capacity(_))));
    }
}
