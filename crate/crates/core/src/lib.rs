//! Bohr-Sommerfeld quantization on cotangent bundles of tori.
//!
//! The crate is organised around five layers:
//!
//! * [`affine_lattice`]: integral affine action-angle charts, their transition
//!   maps and the lattice of Bohr-Sommerfeld labels.
//! * [`prequant_grid`]: prequantization operators on the trivial line bundle
//!   over `T*T^k`, discretised on tensor grids in actions and angles.
//! * [`state_space`]: finite superpositions of Bohr-Sommerfeld basis sections.
//! * [`shift_ops`]: the lattice shifting operators and their transport across
//!   charts.
//! * [`pendulum`]: the spherical pendulum, its Bohr-Sommerfeld spectrum and
//!   the monodromy of its action lattice.

pub mod affine_lattice;
pub mod io;
pub mod observable;
pub mod pendulum;
pub mod prequant_grid;
pub mod shift_ops;
pub mod state_space;
pub mod tolerances;

pub use num_complex::Complex64;
