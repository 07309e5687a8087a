//! Toolkit for variable-exponent Lebesgue spaces `L^{p(·)}([0,1]^n)`.
//!
//! The crate provides the machinery needed to build, transform and certify
//! exponent functions whose Lebesgue space keeps the continuous functions
//! closed, and to run divergence experiments for Fourier expansions with
//! respect to uniformly bounded biorthonormal systems:
//!
//! * [`piecewise`] — exact arithmetic for 1-D functions assembled from
//!   constant pieces and shifted copies of `t ↦ ln(e/t)`: closed-form
//!   integrals, distribution functions and decreasing rearrangements.
//! * [`maps`] — measure-preserving transformations: digit interleaving
//!   (Morton / Z-order) between `[0,1]^n` and `[0,1]`, piecewise affine
//!   interval exchanges, equimeasurable transport, composition and
//!   verification.
//! * [`vexp`] — the modular, the Luxemburg norm (bisection), Hölder
//!   conjugation, and the rectangle-indicator lower-bound scan.
//! * [`construct`] — the exponent-construction pipeline: envelope,
//!   cut-point selection, diagonal enumeration, the overlay induction,
//!   transport to the rearrangement, pullback to the cube and the final
//!   measure-preserving change of variables.
//! * [`systems`] — Walsh–Paley, real trigonometric and perturbed-Walsh
//!   biorthonormal systems with exact coefficient integrals.
//! * [`diverge`] — assembly of the integrable pair `F1, F2`, space
//!   membership checks and partial-sum growth experiments.

pub mod construct;
pub mod diverge;
pub mod maps;
pub mod piecewise;
pub mod systems;
pub mod vexp;

pub use piecewise::{Piece, PieceKind, Piecewise1D};
