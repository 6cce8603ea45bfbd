//! Soft-output MIMO detection with reduced candidate sets.
//!
//! The detector runs iterative MMSE with soft parallel interference
//! cancellation, keeps the `M_k` most likely symbols of each layer, evaluates
//! the Euclidean metric of every surviving candidate vector with additions
//! only, and turns the metrics into max-log LLRs that are linearly combined
//! with the MMSE LLRs. Exhaustive MAP/max-log oracles and a seeded Monte
//! Carlo harness are included for validation.
//!
//! ```
//! use rcsmld::{constellation::Constellation, numerics::ComplexMatrix, rcsmld::*};
//! use num_complex::Complex64;
//! use rand::SeedableRng;
//!
//! let c = Constellation::qam16();
//! let h = ComplexMatrix::identity(2);
//! let x = [c.point(3), c.point(12)];
//! let cfg = DetectorConfig { m_vector: vec![4, 3], ..Default::default() };
//! let obs = Observation { y: &x, h: &h, n0: 0.01, sigma_ce_sq: 0.0 };
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
//! let out = detect(&obs, &c, &cfg, &mut rng).unwrap();
//! assert_eq!(out.llrs.len(), 8);
//! let _ = Complex64::new(0.0, 0.0);
//! ```

pub mod candidates;
pub mod channel;
pub mod constellation;
pub mod error;
pub mod harness;
pub mod mcmc;
pub mod metric_engine;
pub mod mmse_spic;
pub mod numerics;
pub mod oracle;
pub mod rcsmld;

pub use constellation::Constellation;
pub use error::{Error, Result};
pub use numerics::ComplexMatrix;
pub use rcsmld::{detect, DetectionResult, DetectorConfig, Observation};
