//! Experiment configuration: one JSON document per run.

use phaselift::coeff::{CoefficientModel, SamplingLaw};
use phaselift::costmodel::{CostParams, ScanRanges};
use phaselift::grid::{select_grid, AccuracyBudget, GridBuilder, Kind, PhaseSpaceGrid, XBoundary};
use phaselift::lift::{InitialCondition, Quantity};
use phaselift::spectral::IterationOptions;
use phaselift::assembly::SchrodingerStepper;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

/// A configuration problem with a JSON pointer to the offending key.
#[derive(Debug)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.pointer, self.message)
    }
}

fn at(pointer: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { pointer: pointer.into(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Lifted,
    Direct,
    Both,
    Spectra,
    Cost,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Accuracy {
    pub epsilon: f64,
    pub r: u32,
    /// Kernel tail tolerance sizing the p-box when no explicit grid is given.
    #[serde(default = "default_trunc")]
    pub trunc_tol: f64,
}

fn default_trunc() -> f64 {
    1e-6
}

/// Explicit mesh; unset counts fall back to `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub n_p: Option<usize>,
    pub n_q: Option<usize>,
    pub n_ord: Option<usize>,
    pub p_max: Option<f64>,
    #[serde(default = "default_t")]
    pub t_final: f64,
    pub steps: Option<usize>,
    pub cfl_fraction: Option<f64>,
    pub x_boundary: Option<XBoundary>,
}

fn default_t() -> f64 {
    0.1
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraSection {
    #[serde(default)]
    pub iteration: Option<IterationOptions>,
    /// Also report the grid with `n` doubled and the scaling verdicts.
    #[serde(default)]
    pub refine: bool,
}

/// Overrides on top of the top-level kind, M, L, d and accuracy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub b: Option<f64>,
    pub n0_sq: Option<f64>,
    pub lambda: Option<f64>,
    pub sigma0: Option<f64>,
    pub eta: Option<f64>,
    pub kappa: Option<f64>,
    pub s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub d: usize,
    pub l: usize,
    pub m: usize,
    pub accuracy: Option<Accuracy>,
    pub grid: Option<GridSection>,
    /// Defaults to `L` unit-basis terms with `aᵢ(z) = zᵢ`.
    pub model: Option<CoefficientModel>,
    #[serde(default = "default_bound")]
    pub bound_c: f64,
    pub initial: InitialCondition,
    #[serde(default)]
    pub sampling: SamplingLaw,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_observables")]
    pub observables: Vec<Quantity>,
    /// x-cell indices of the measured meshpoints; empty means none.
    #[serde(default)]
    pub targets: Vec<usize>,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    #[serde(default = "default_stepper")]
    pub stepper: SchrodingerStepper,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub spectra: SpectraSection,
    #[serde(default)]
    pub cost: CostSection,
    pub scan: Option<ScanRanges>,
    pub output_dir: Option<String>,
}

fn default_bound() -> f64 {
    10.0
}
fn default_observables() -> Vec<Quantity> {
    vec![Quantity::Mean]
}
fn default_hbar() -> f64 {
    1.0
}
fn default_stepper() -> SchrodingerStepper {
    SchrodingerStepper::Trapezoidal
}
fn default_mode() -> Mode {
    Mode::Lifted
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let p = e.path().to_string();
        at(if p == "." { "" } else { &p }, e.inner().to_string())
    })?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| at("", format!("{}: {e}", path.display())))?;
    parse(&text)
}

impl ExperimentConfig {
    pub fn model(&self) -> Result<CoefficientModel, ConfigError> {
        match &self.model {
            Some(m) => {
                m.check_shape().map_err(|e| at("model", e.to_string()))?;
                if m.d != self.d {
                    return Err(at("model.d", format!("model has d = {}, config d = {}", m.d, self.d)));
                }
                if m.l() != self.l {
                    return Err(at("model.basis", format!("model has {} terms, config L = {}", m.l(), self.l)));
                }
                Ok(m.clone())
            }
            None => CoefficientModel::diagonal(self.d, self.l, self.bound_c).map_err(|e| at("bound_c", e.to_string())),
        }
    }

    /// Semantic checks beyond the schema.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.d == 0 {
            return Err(at("d", "must be >= 1"));
        }
        if self.l == 0 {
            return Err(at("l", "must be >= 1"));
        }
        if self.m == 0 {
            return Err(at("m", "must be >= 1"));
        }
        if self.accuracy.is_none() && self.grid.is_none() && self.mode != Mode::Cost {
            return Err(at("grid", "either `grid` or `accuracy` is required"));
        }
        if let Some(a) = &self.accuracy {
            AccuracyBudget::new(a.epsilon, a.r).map_err(|e| at("accuracy", e.to_string()))?;
        }
        if self.mode == Mode::Cost && self.accuracy.is_none() {
            return Err(at("accuracy", "cost mode needs epsilon and r"));
        }
        if !(self.hbar > 0.0) {
            return Err(at("hbar", "must be positive"));
        }
        self.model()?;
        for (i, q) in self.observables.iter().enumerate() {
            let ok = match q {
                Quantity::Mean => true,
                Quantity::Density | Quantity::Flux | Quantity::Energy => self.kind == Kind::Boltzmann,
                Quantity::Variance => self.kind == Kind::Advection,
            };
            if !ok {
                return Err(at(&format!("observables[{i}]"), format!("{q:?} is not available for {}", self.kind)));
            }
        }
        let dims = |v: usize, key: &str| {
            if v == self.d {
                Ok(())
            } else {
                Err(at(key, format!("expected {} components, got {v}", self.d)))
            }
        };
        match &self.initial {
            InitialCondition::SineProduct { modes } => dims(modes.len(), "initial.modes")?,
            InitialCondition::Point { center, .. } | InitialCondition::Gaussian { center, .. } => {
                dims(center.len(), "initial.center")?
            }
            InitialCondition::PlaneWave { wavenumbers } => dims(wavenumbers.len(), "initial.wavenumbers")?,
            _ => {}
        }
        if let Some(s) = &self.scan {
            if s.m.is_empty() || s.l.is_empty() || s.d.is_empty() || s.epsilon.is_empty() {
                return Err(at("scan", "every scan axis needs at least one value"));
            }
        }
        Ok(())
    }

    pub fn check_targets(&self, g: &PhaseSpaceGrid) -> Result<(), ConfigError> {
        match self.targets.iter().enumerate().find(|(_, t)| **t >= g.x_cells()) {
            Some((i, t)) => Err(at(&format!("targets[{i}]"), format!("x-cell {t} outside 0..{}", g.x_cells()))),
            None => Ok(()),
        }
    }

    /// Grid with every count multiplied by `factor`; explicit step counts keep
    /// the CFL ratio fixed.
    pub fn grid_for(&self, factor: usize) -> phaselift::Result<PhaseSpaceGrid> {
        if let Some(gs) = &self.grid {
            let n = gs.n * factor;
            let mut b = GridBuilder::new(self.kind, self.d, self.l)
                .n(n)
                .n_p(gs.n_p.unwrap_or(gs.n) * factor)
                .n_q(gs.n_q.unwrap_or(gs.n) * factor)
                .n_ord(gs.n_ord.unwrap_or(1))
                .t_final(gs.t_final);
            if let Some(p) = gs.p_max {
                b = b.p_max(p);
            }
            if let Some(bc) = gs.x_boundary {
                b = b.x_boundary(bc);
            }
            if let Some(s) = gs.steps {
                let power = match self.kind {
                    Kind::Heat | Kind::Advection => 3,
                    Kind::Schrodinger => 2,
                    Kind::Boltzmann => 1,
                };
                b = b.steps(s * factor.pow(power));
            }
            if let Some(f) = gs.cfl_fraction {
                b = b.cfl_fraction(f);
            }
            return b.build();
        }
        let a = self
            .accuracy
            .as_ref()
            .ok_or_else(|| phaselift::Error::Config("no grid or accuracy section".into()))?;
        let budget = AccuracyBudget::new(a.epsilon, a.r)?;
        let a_min = self.sampling.lower_bound().unwrap_or(1.0).max(1e-12);
        let mut g = select_grid(self.kind, self.d, self.l, budget, a.trunc_tol, a_min)?;
        if factor > 1 {
            g = GridBuilder::new(self.kind, self.d, self.l)
                .n(g.n * factor)
                .n_p(g.n_p * factor)
                .n_q(g.n_q * factor)
                .n_ord(g.n_ord)
                .p_max(g.p_max)
                .t_final(g.t_final)
                .build()?;
        }
        Ok(g)
    }

    pub fn cost_params(&self) -> Result<CostParams, ConfigError> {
        let a = self.accuracy.as_ref().ok_or_else(|| at("accuracy", "cost needs epsilon and r"))?;
        let mut p = CostParams::new(self.kind, self.m as u64, self.l as u32, self.d as u32, a.epsilon, a.r);
        let c = &self.cost;
        if let Some(v) = c.b {
            p.b = v;
        }
        if let Some(v) = c.n0_sq {
            p.n0_sq = v;
        }
        if let Some(v) = c.lambda {
            p.lambda = v;
        }
        if let Some(v) = c.sigma0 {
            p.sigma0 = v;
        }
        if let Some(v) = c.eta {
            p.eta = v;
        }
        p.kappa = c.kappa;
        p.s = c.s;
        p.hbar = self.hbar;
        p.validate().map_err(|e| at("cost", e.to_string()))?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAT: &str = r#"{
        "kind": "heat", "d": 1, "l": 1, "m": 4,
        "grid": {"n": 16, "n_p": 16, "p_max": 6.0, "t_final": 0.01},
        "initial": {"type": "sine_product", "modes": [1]}
    }"#;

    #[test]
    fn parses_minimal() {
        let c = parse(HEAT).unwrap();
        assert_eq!(c.mode, Mode::Lifted);
        assert_eq!(c.grid_for(1).unwrap().n, 16);
    }

    #[test]
    fn unknown_key_is_pointed_at() {
        let bad = HEAT.replace("\"n_p\"", "\"np\"");
        let e = parse(&bad).unwrap_err();
        assert_eq!(e.pointer, "grid.np");
        assert!(e.message.contains("np"));
    }

    #[test]
    fn wrong_type_pointer() {
        let bad = HEAT.replace("\"m\": 4", "\"m\": \"four\"");
        assert_eq!(parse(&bad).unwrap_err().pointer, "m");
    }

    #[test]
    fn observable_kind_check() {
        let bad = HEAT.replace("\"m\": 4", "\"m\": 4, \"observables\": [\"flux\"]");
        assert_eq!(parse(&bad).unwrap_err().pointer, "observables[0]");
    }
}
