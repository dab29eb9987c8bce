//! Phase-space lifting for linear PDEs with uncertain coefficients.
//!
//! A PDE whose coefficient `a(x,z) = Σ aᵢ(z) bᵢ(x)` depends on random inputs `z`
//! is rewritten as a deterministic PDE in extra variables `p` (and `q` for the
//! wave-type equations). The random inputs then only enter the initial data, so
//! one lifted solve carries the whole ensemble and the ensemble mean is read
//! back by quadrature over the auxiliary variables.
//!
//! Modules, bottom up:
//!
//! * [`coeff`]: the separable coefficient model and seeded input sampling.
//! * [`grid`]: mesh selection from an accuracy budget and CFL checks.
//! * [`lift`]: lifted initial data and quadrature recovery.
//! * [`assembly`]: sparse step matrices, the block lower-bidiagonal global system
//!   and its Hermitian dilation.
//! * [`solve`]: explicit marching, block forward substitution and direct
//!   per-sample reference solvers.
//! * [`spectral`]: sparsity, Gershgorin enclosures and extreme singular values.
//! * [`observables`]: readout vectors and embedding normalisation constants.
//! * [`costmodel`]: classical and quantum cost formulas with exact exponent
//!   algebra.
//! * [`io`]: Matrix Market, binary CSR and lifted-field export.

pub mod assembly;
pub mod coeff;
pub mod costmodel;
pub mod error;
pub mod grid;
pub mod io;
pub mod lift;
pub mod observables;
pub mod scalar;
pub mod solve;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::Kind;
pub use scalar::{Scalar, C64};
