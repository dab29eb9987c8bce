//! Separable uncertain coefficient `a(x,z) = Σᵢ aᵢ(z) bᵢ(x)` and input sampling.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Spatial basis functions `bᵢ(x)` on `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BasisFn {
    Constant { value: f64 },
    /// `offset + slope * x[axis]`
    Linear { axis: usize, offset: f64, slope: f64 },
    /// `offset + amplitude * sin(mode π x[axis])`
    Sine { axis: usize, mode: u32, amplitude: f64, offset: f64 },
}

impl BasisFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            BasisFn::Constant { value } => value,
            BasisFn::Linear { axis, offset, slope } => offset + slope * x[axis],
            BasisFn::Sine { axis, mode, amplitude, offset } => {
                offset + amplitude * (mode as f64 * PI * x[axis]).sin()
            }
        }
    }

    fn axis(&self) -> Option<usize> {
        match *self {
            BasisFn::Constant { .. } => None,
            BasisFn::Linear { axis, .. } | BasisFn::Sine { axis, .. } => Some(axis),
        }
    }
}

/// Random-input functions `aᵢ(z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoeffFn {
    Constant { value: f64 },
    /// `offset + scale * z[index]`
    Affine { index: usize, offset: f64, scale: f64 },
    /// `scale * z[index]^power`
    Monomial { index: usize, power: i32, scale: f64 },
}

impl CoeffFn {
    /// `z[index]` itself.
    pub fn component(index: usize) -> Self {
        CoeffFn::Affine { index, offset: 0.0, scale: 1.0 }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match *self {
            CoeffFn::Constant { value } => value,
            CoeffFn::Affine { index, offset, scale } => offset + scale * z[index],
            CoeffFn::Monomial { index, power, scale } => scale * z[index].powi(power),
        }
    }

    fn index(&self) -> Option<usize> {
        match *self {
            CoeffFn::Constant { .. } => None,
            CoeffFn::Affine { index, .. } | CoeffFn::Monomial { index, .. } => Some(index),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientModel {
    pub d: usize,
    pub basis: Vec<BasisFn>,
    pub coeff_fns: Vec<CoeffFn>,
    pub bound_c: f64,
    /// Permit `bᵢ(x) <= 0` (heat and Boltzmann only).
    #[serde(default)]
    pub allow_negative_basis: bool,
}

impl CoefficientModel {
    pub fn new(d: usize, basis: Vec<BasisFn>, coeff_fns: Vec<CoeffFn>, bound_c: f64) -> Result<Self> {
        let m = Self { d, basis, coeff_fns, bound_c, allow_negative_basis: false };
        m.check_shape()?;
        Ok(m)
    }

    /// `L` terms, each `bᵢ ≡ 1` and `aᵢ(z) = zᵢ`.
    pub fn diagonal(d: usize, l: usize, bound_c: f64) -> Result<Self> {
        Self::new(
            d,
            vec![BasisFn::Constant { value: 1.0 }; l],
            (0..l).map(CoeffFn::component).collect(),
            bound_c,
        )
    }

    pub fn l(&self) -> usize {
        self.basis.len()
    }

    /// Number of components of `z` referenced by the model.
    pub fn input_dim(&self) -> usize {
        self.coeff_fns.iter().filter_map(|f| f.index()).map(|i| i + 1).max().unwrap_or(0)
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::MalformedModel("spatial dimension d = 0".into()));
        }
        if self.basis.is_empty() {
            return Err(Error::MalformedModel("no separable terms (L = 0)".into()));
        }
        if self.basis.len() != self.coeff_fns.len() {
            return Err(Error::MalformedModel(format!(
                "{} basis functions but {} coefficient functions",
                self.basis.len(),
                self.coeff_fns.len()
            )));
        }
        if !(self.bound_c > 0.0) {
            return Err(Error::MalformedModel("bound C must be positive".into()));
        }
        if let Some(ax) = self.basis.iter().filter_map(|b| b.axis()).find(|&a| a >= self.d) {
            return Err(Error::MalformedModel(format!("basis axis {ax} >= d = {}", self.d)));
        }
        Ok(())
    }

    pub fn a(&self, z: &[f64]) -> Vec<f64> {
        self.coeff_fns.iter().map(|f| f.eval(z)).collect()
    }

    pub fn b(&self, x: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|f| f.eval(x)).collect()
    }

    /// `Σᵢ aᵢ(z) bᵢ(x)`, accumulated left to right.
    pub fn evaluate(&self, x: &[f64], z: &[f64]) -> f64 {
        let mut s = 0.0;
        for (af, bf) in self.coeff_fns.iter().zip(&self.basis) {
            s += af.eval(z) * bf.eval(x);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `aᵢ(z_m) <= 0`
    Positivity { i: usize, m: usize, value: f64 },
    /// `Σᵢ aᵢ(z_m)² > C`
    Bound { m: usize, sum_sq: f64, bound: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_model(model: &CoefficientModel, probe: &SampleSet) -> Result<ValidationReport> {
    model.check_shape()?;
    if probe.samples.is_empty() {
        return Err(Error::Config("empty probe set".into()));
    }
    let need = model.input_dim();
    let mut report = ValidationReport::default();
    for (m, z) in probe.samples.iter().enumerate() {
        if z.len() < need {
            return Err(Error::Config(format!("sample {m} has {} components, model needs {need}", z.len())));
        }
        let a = model.a(z);
        let mut sum_sq = 0.0;
        for (i, &ai) in a.iter().enumerate() {
            if !(ai > 0.0) {
                report.violations.push(Violation::Positivity { i, m, value: ai });
            }
            sum_sq += ai * ai;
        }
        if sum_sq > model.bound_c {
            report.violations.push(Violation::Bound { m, sum_sq, bound: model.bound_c });
        }
    }
    Ok(report)
}

/// Sampling law for the random inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum SamplingLaw {
    /// i.i.d. uniform on `[lo, hi]` per component (Monte Carlo).
    Uniform { lo: f64, hi: f64 },
    /// Deterministic midpoint nodes of `[lo, hi]`, the same node for every component.
    Collocation { lo: f64, hi: f64 },
    /// Explicit points, cycled if fewer than `M`.
    Fixed { points: Vec<Vec<f64>> },
}

impl Default for SamplingLaw {
    fn default() -> Self {
        SamplingLaw::Uniform { lo: 0.5, hi: 1.5 }
    }
}

impl SamplingLaw {
    /// Parse a law from its tag and parameters (`"uniform"`, `"collocation"`).
    pub fn from_tag(tag: &str, lo: f64, hi: f64) -> Result<Self> {
        match tag {
            "uniform" => Ok(SamplingLaw::Uniform { lo, hi }),
            "collocation" => Ok(SamplingLaw::Collocation { lo, hi }),
            other => Err(Error::Config(format!("unsupported sampling law '{other}'"))),
        }
    }

    /// Lower bound of the support, used to size the p-domain.
    pub fn lower_bound(&self) -> Option<f64> {
        match self {
            SamplingLaw::Uniform { lo, .. } | SamplingLaw::Collocation { lo, .. } => Some(*lo),
            SamplingLaw::Fixed { points } => {
                points.iter().flatten().copied().reduce(f64::min)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub samples: Vec<Vec<f64>>,
    pub seed: u64,
    pub law: SamplingLaw,
}

impl SampleSet {
    pub fn m(&self) -> usize {
        self.samples.len()
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Self {
        let law = SamplingLaw::Fixed { points: points.clone() };
        Self { samples: points, seed: 0, law }
    }
}

pub fn sample_inputs(model: &CoefficientModel, m: usize, seed: u64, law: &SamplingLaw) -> Result<SampleSet> {
    if m == 0 {
        return Err(Error::Config("sample count M must be >= 1".into()));
    }
    let dim = model.input_dim().max(1);
    let samples = match law {
        SamplingLaw::Uniform { lo, hi } => {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("bad uniform box [{lo}, {hi}]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..m).map(|_| (0..dim).map(|_| rng.gen_range(*lo..*hi)).collect()).collect()
        }
        SamplingLaw::Collocation { lo, hi } => {
            if !(lo < hi) {
                return Err(Error::Config(format!("bad collocation box [{lo}, {hi}]")));
            }
            (0..m)
                .map(|k| vec![lo + (hi - lo) * (k as f64 + 0.5) / m as f64; dim])
                .collect()
        }
        SamplingLaw::Fixed { points } => {
            if points.is_empty() {
                return Err(Error::Config("fixed law with no points".into()));
            }
            (0..m).map(|k| points[k % points.len()].clone()).collect()
        }
    };
    Ok(SampleSet { samples, seed, law: law.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_term(f: CoeffFn, c: f64) -> CoefficientModel {
        CoefficientModel::new(1, vec![BasisFn::Constant { value: 1.0 }], vec![f], c).unwrap()
    }

    #[test]
    fn validate_examples() {
        let m = one_term(CoeffFn::component(0), 2.0);
        let probe = SampleSet::from_points(vec![vec![0.5], vec![1.0]]);
        assert!(validate_model(&m, &probe).unwrap().is_empty());

        let m = one_term(CoeffFn::Affine { index: 0, offset: -2.0, scale: 1.0 }, 2.0);
        let r = validate_model(&m, &SampleSet::from_points(vec![vec![1.0]])).unwrap();
        assert_eq!(r.violations, vec![Violation::Positivity { i: 0, m: 0, value: -1.0 }]);

        let m = CoefficientModel::new(
            1,
            vec![BasisFn::Constant { value: 1.0 }; 2],
            vec![CoeffFn::Constant { value: 1.0 }; 2],
            1.0,
        )
        .unwrap();
        let r = validate_model(&m, &SampleSet::from_points(vec![vec![]])).unwrap();
        assert!(matches!(r.violations[..], [Violation::Bound { sum_sq, .. }] if sum_sq == 2.0));
    }

    #[test]
    fn malformed() {
        assert!(matches!(CoefficientModel::new(0, vec![], vec![], 1.0), Err(Error::MalformedModel(_))));
        assert!(matches!(CoefficientModel::new(1, vec![], vec![], 1.0), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn evaluate_examples() {
        let m = one_term(CoeffFn::component(0), 1.0);
        assert_eq!(m.evaluate(&[0.3], &[0.5]), 0.5);

        let m = CoefficientModel::new(
            1,
            vec![
                BasisFn::Linear { axis: 0, offset: 0.0, slope: 1.0 },
                BasisFn::Linear { axis: 0, offset: 1.0, slope: -1.0 },
            ],
            vec![CoeffFn::Constant { value: 1.0 }; 2],
            4.0,
        )
        .unwrap();
        for x in [0.0, 0.25, 0.7, 1.0] {
            assert!((m.evaluate(&[x], &[]) - 1.0).abs() < 1e-15);
        }

        let m = CoefficientModel::new(
            1,
            vec![BasisFn::Constant { value: 1.0 }; 2],
            vec![CoeffFn::component(0), CoeffFn::Monomial { index: 0, power: 2, scale: 1.0 }],
            100.0,
        )
        .unwrap();
        assert_eq!(m.evaluate(&[0.1], &[2.0]), 6.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = one_term(CoeffFn::component(0), 4.0);
        let law = SamplingLaw::default();
        let a = sample_inputs(&m, 3, 7, &law).unwrap();
        let b = sample_inputs(&m, 3, 7, &law).unwrap();
        assert_eq!(a, b);
        assert!(sample_inputs(&m, 0, 7, &law).is_err());
        assert!(SamplingLaw::from_tag("cauchy", 0.0, 1.0).is_err());
    }

    #[test]
    fn uniform_mean() {
        let m = one_term(CoeffFn::component(0), 4.0);
        let s = sample_inputs(&m, 10_000, 11, &SamplingLaw::default()).unwrap();
        let mean = s.samples.iter().map(|z| z[0]).sum::<f64>() / 1e4;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(s.samples.iter().all(|z| (0.5..1.5).contains(&z[0])));
    }
}
