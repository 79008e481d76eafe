//! Powder diffraction auto-indexing.
//!
//! Peak positions are read as q-values (squared reciprocal lengths, Å⁻²).
//! Candidate lattices are built from zones found with the parallelogram law,
//! scored on a local topograph, combined into 3×3 Gram matrices of the
//! reciprocal lattice and then reduced, classified and ranked.

#![allow(clippy::needless_range_loop)]

pub mod absences;
pub mod enumerate;
pub mod exactsolve;
pub mod latmath;
pub mod pipeline;
pub mod qformal;
pub mod synth;
pub mod topograph;

pub use qformal::{ObservedPeak, PeakList, QSum};
