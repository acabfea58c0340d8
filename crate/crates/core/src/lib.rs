//! Exact volume polynomials of moduli spaces of bordered surfaces.
//!
//! Volumes are computed by a topological recursion driven by kernel
//! moment transforms, and cross-checked against stable-graph sums, a
//! quantum Airy structure recursion, numerical quadrature and hyperbolic
//! geometry of the one-holed torus.

pub mod coeffring;
pub mod hyperbolic;
pub mod kernels;
pub mod stablegraphs;
pub mod tqft;
pub mod trengine;

pub use coeffring::{CoeffElem, CoeffError, Coefficient, EvenPoly, FormalCoeff, Rational, Symbol};
pub use kernels::{InitialData, KernelError, KernelFamily, MomentSpec};
pub use stablegraphs::StableGraph;
pub use tqft::{FrobeniusAlgebra, TqftError};
pub use trengine::{volume, Engine, EngineError, VolumeTable};
