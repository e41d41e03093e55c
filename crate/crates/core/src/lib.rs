//! Faraday-rotation spin-noise toolkit for cold-atom QND measurements.
//!
//! A dispersive probe pulse crossing a spin ensemble picks up a polarization
//! rotation proportional to the collective spin component along the probe
//! axis. Measuring the Stokes component S_y of the outgoing pulse therefore
//! reads out F_z without destroying it. This crate provides the three pieces
//! needed to characterize such a measurement at the quantum level:
//!
//! - [`model`] — the closed-form five-term variance model of the polarimeter
//!   signal (electronic, light shot, light technical, atomic projection,
//!   atomic technical), its decibel budget decomposition, and derived
//!   sensitivity figures.
//! - [`sim`] — a seeded Monte Carlo simulator of the full measurement
//!   campaign: thermal-state preparation, pulse-train probing with
//!   meta-pulse aggregation, dispersive atom-number calibration, absorption
//!   imaging, and per-cycle trap loss.
//! - [`estimator`] — recovery of the model constants from measured variance
//!   tables by iteratively reweighted least squares, with uncertainties and
//!   a cross-check against the dispersive rotation calibration.
//!
//! # Units
//!
//! S_y is counted in photon units with the balanced-polarimeter convention
//! S_y = (n_+45 − n_-45)/2, so the shot-noise variance of a pulse of N_L
//! photons is exactly N_L/4. All detector-chain gains are absorbed into
//! "counts". Spins are counted in units of ħ.

// `!(x > 0.0)` comparisons are deliberate throughout: they reject NaN,
// which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimator;
pub mod model;
pub mod rng;
pub mod sim;
