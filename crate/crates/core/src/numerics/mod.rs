//! Seeded random streams and the complex linear algebra used throughout:
//! Cholesky factorization, a cyclic Jacobi Hermitian eigensolver, CSCG
//! sampling, and the Gaussian Q-function.

mod linalg;
mod matrix;
mod rng;
mod special;
mod stats;

pub use linalg::{cholesky, hermitian_eig, sample_cscg, sample_with_factor, HermitianEig, PSD_TOLERANCE};
pub use matrix::ComplexMatrix;
pub use num_complex::Complex64;
pub use rng::RngStream;
pub use special::{binomial, bpsk_ber, db_to_linear, linear_to_db, q_function};
pub use stats::{average_ranks, spearman};
