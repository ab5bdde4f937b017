//! Følner sets, windowed Banach densities, quasitilings and block-frequency
//! tools for `Z^d` and the integer Heisenberg group.
//!
//! Sets are finite and explicit; every set operation is exact. Densities and
//! covering fractions are exact rationals, entropies are `f64`.

pub mod density;
pub mod error;
pub mod flow;
pub mod folner;
pub mod group;
pub mod index;
pub mod quasitiling;
pub mod rational;
pub mod symbolic;
pub mod verify;

pub use density::Window;
pub use error::{Error, Result};
pub use folner::FolnerFamily;
pub use group::{FiniteSubset, GroupElement, GroupSpec, Side};
pub use quasitiling::Quasitiling;
pub use rational::Rational;
