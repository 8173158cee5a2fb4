//! Numerical kernel: frame algebra, pole placement, eigenvalues, RK4.

pub mod eigen;
pub mod frame;
pub mod matrix;
pub mod ode;
pub mod place;

pub use eigen::{eig_small, Spectrum};
pub use frame::{rot, wrap_angle, Mat2, Vec2};
pub use matrix::SmallMatrix;
pub use ode::rk4_step;
pub use place::{place_rank_one, pole_pair_coefficients, rank_one_closed_loop};

pub use num_complex::Complex64;
