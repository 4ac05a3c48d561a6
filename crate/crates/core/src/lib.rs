//! Forecasting spatiotemporally chaotic PDE fields from short observation
//! windows.
//!
//! The pipeline: [`pde`] integrates the Kuramoto-Sivashinsky, Brusselator,
//! and Swift-Hohenberg equations with a pseudospectral ETDRK4 scheme and
//! adds measurement noise; [`embedding`] builds the delay-matrix targets
//! that tie one spatial point's future to the observed field; [`model`] is
//! the AFD-STA network (adaptive exponential smoothing, parallel spatial
//! and temporal attention, gated fusion, and a six-layer projection head)
//! written against the in-crate [`tensor`] autodiff engine; [`experiment`]
//! holds the training objective, metrics, and the sweep/ablation/baseline
//! runners.

pub mod embedding;
pub mod experiment;
pub mod model;
pub mod pde;
pub mod tensor;
