//! Symbolic computation in the CAR algebra over dyadic-rational modes.
//!
//! The crate is organised bottom-up:
//!
//! * [`dyadic`] and [`car_expr`]: exact indices and normal-ordered polynomials;
//! * [`actions`]: index maps and Bogolubov rotations acting on polynomials;
//! * [`states`]: the state models, closed under mixtures and pullbacks;
//! * [`fock_oracle`]: dense Fock-space matrices used as numerical ground truth;
//! * [`folner`]: the Folner sets of the spreading semigroup and ergodic
//!   averages over them;
//! * [`checker`]: symmetry batteries with witnesses;
//! * [`cli`]: the `carsym` command line.

pub mod actions;
pub mod car_expr;
pub mod checker;
pub mod cli;
pub mod dyadic;
pub mod error;
pub mod fock_oracle;
pub mod folner;
pub mod states;

pub use car_expr::{parse_expression, CarMonomial, CarPolynomial, GeneratorSymbol, Word};
pub use dyadic::DyadicIndex;
pub use error::{Error, Result};
pub use num_complex::Complex64;
