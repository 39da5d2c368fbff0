//! Data-driven analytical redundancy relations (ARRs) for fault detection and
//! isolation.
//!
//! The pipeline learns residual generators from normal-operation data
//! ([`arrgen`]), keeps the ones whose residual distribution shifts under a
//! fault ([`evaluate`]), and monitors them at runtime with 3σ bands
//! ([`detect`]). [`tanksim`] provides a four-tank process to exercise it.
//!
//! ```
//! use ddarr::arrgen::{forward_select_with_delays, SearchConfig};
//! use ddarr::timeseries::Dataset;
//!
//! let x: Vec<f64> = (0..400).map(|i| (i as f64 * 0.37).sin()).collect();
//! let y: Vec<f64> = (0..400).map(|i| (i as f64 * 0.11).cos()).collect();
//! let z: Vec<f64> = (0..400).map(|i| 2.0 * x[i] - y[i]).collect();
//! let ds = Dataset::new(vec!["x".into(), "y".into(), "z".into()], vec![x, y, z], 1.0, 0.0)?;
//!
//! let spec = forward_select_with_delays(&ds, "z", &SearchConfig::default())?.unwrap();
//! assert_eq!(spec.support().into_iter().collect::<Vec<_>>(), ["x", "y"]);
//! # Ok::<(), ddarr::Error>(())
//! ```

pub mod arrgen;
pub mod detect;
pub mod error;
pub mod evaluate;
pub mod regress;
pub mod tanksim;
pub mod timeseries;

pub use error::{Error, Result};
