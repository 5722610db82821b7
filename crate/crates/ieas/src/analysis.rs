//! Security-defect measurements: plaintext-bit sensitivity, per-plane
//! match reporting, and the effective key-space estimate.

use std::collections::BTreeSet;
use std::fmt;

use crate::cipher::{encrypt, CipherParams};
use crate::imageio::{split_halves, Image};
use crate::keyschedule::KeySchedule;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    PositionOutOfRange {
        row: usize,
        col: usize,
        plane: u8,
    },
    DimensionMismatch,
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::PositionOutOfRange { row, col, plane } => {
                write!(f, "flip position ({row}, {col}, plane {plane}) outside the image")
            }
            AnalysisError::DimensionMismatch => write!(f, "images have different dimensions"),
        }
    }
}

impl std::error::Error for AnalysisError {}

/// Encrypts `image` and its variant with one plaintext bit flipped, and
/// returns the set of planes (1..=8) where any ciphertext byte differs, in
/// either half. `row` and `col` address the full N x 2N image.
pub fn sensitivity_report(
    sched: &KeySchedule,
    params: CipherParams,
    image: &Image,
    row: usize,
    col: usize,
    plane: u8,
) -> Result<BTreeSet<u8>, AnalysisError> {
    if row >= image.height() || col >= image.width() || !(1..=8).contains(&plane) {
        return Err(AnalysisError::PositionOutOfRange { row, col, plane });
    }
    let mut flipped = image.clone();
    flipped.set(row, col, image.get(row, col) ^ (1 << (plane - 1)));

    let (l0, r0) = split_halves(image);
    let (l1, r1) = split_halves(&flipped);
    let (cl0, cr0) = encrypt(&l0, &r0, sched, params);
    let (cl1, cr1) = encrypt(&l1, &r1, sched, params);

    let mut affected = BTreeSet::new();
    let diffs = cl0
        .data()
        .iter()
        .zip(cl1.data())
        .chain(cr0.data().iter().zip(cr1.data()));
    for (a, b) in diffs {
        let d = a ^ b;
        for k in 1..=8u8 {
            if d >> (k - 1) & 1 == 1 {
                affected.insert(k);
            }
        }
    }
    Ok(affected)
}

/// Fraction of equal bits per plane, plane 1 first.
pub fn plane_match_count(a: &Image, b: &Image) -> Result<[f64; 8], AnalysisError> {
    if a.side() != b.side() {
        return Err(AnalysisError::DimensionMismatch);
    }
    let total = a.data().len() as f64;
    let mut out = [0.0; 8];
    for (k, slot) in out.iter_mut().enumerate() {
        let equal = a
            .data()
            .iter()
            .zip(b.data())
            .filter(|(x, y)| (*x ^ *y) >> k & 1 == 0)
            .count();
        *slot = equal as f64 / total;
    }
    Ok(out)
}

/// Bit length of the effective key space: log2(2^n0 * t_max).
pub fn keyspace_estimate(n0: u32, t_max: u32) -> f64 {
    assert!(n0 >= 1 && t_max >= 1, "precision bits and round bound must be positive");
    n0 as f64 + (t_max as f64).log2()
}
