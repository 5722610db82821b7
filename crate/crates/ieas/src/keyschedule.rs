//! Expands the secret key (round count T, initial value K0) into round
//! material: quantized logistic states, 50-bit expansions, cat matrices,
//! pixel permutations, and byte masks.
//!
//! Everything downstream of K0 is binary64 arithmetic evaluated in the
//! written order, so schedules are bit-identical across platforms.

use std::fmt;

use crate::catmap::{self, Mat2};
use crate::cipher::HalfImage;

/// Upper bound on the round count accepted in a secret key.
pub const MAX_ROUNDS: u32 = 16;

const STATE_SCALE: f64 = 4_294_967_295.0; // 2^32 - 1
const SEED_SCALE: f64 = 4_294_967_296.0; // 2^32
const COUPLING: f64 = 0.875;

/// Source bit for each of the 50 output positions, both sides 1-based with
/// bit 1 the least significant. Bits 1 and 32 each feed two outputs.
const EXPANSION_TABLE: [u8; 50] = [
    32, 1, 2, 3, 4, 5, 4, 5, 6, 7, //
    8, 9, 8, 9, 10, 11, 12, 13, 14, 15, //
    16, 17, 16, 17, 15, 16, 17, 18, 19, 20, //
    21, 20, 21, 22, 23, 24, 25, 24, 25, 26, //
    27, 28, 29, 28, 29, 30, 31, 32, 1, 31,
];

#[derive(Debug, Clone, PartialEq)]
pub enum KeyscheduleError {
    /// Round count outside 1..=MAX_ROUNDS.
    InvalidRounds { rounds: u32 },
    /// K0 outside the open interval (0, 1).
    InvalidInitial { value: f64 },
    /// Orbit start outside [0, 1].
    StateOutOfRange { value: f64 },
    /// Image side length below 2.
    InvalidSide { side: usize },
    /// The matrix determinant shares a factor with the side, so the
    /// scatter map is not a bijection.
    NotBijective { det: i64, side: usize },
}

impl fmt::Display for KeyscheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyscheduleError::InvalidRounds { rounds } => {
                write!(f, "round count {rounds} outside 1..={MAX_ROUNDS}")
            }
            KeyscheduleError::InvalidInitial { value } => {
                write!(f, "initial value {value} outside the open interval (0, 1)")
            }
            KeyscheduleError::StateOutOfRange { value } => {
                write!(f, "orbit start {value} outside [0, 1]")
            }
            KeyscheduleError::InvalidSide { side } => {
                write!(f, "image side {side} too small, need at least 2")
            }
            KeyscheduleError::NotBijective { det, side } => {
                write!(f, "matrix with det {det} is not a bijection modulo {side}")
            }
        }
    }
}

impl std::error::Error for KeyscheduleError {}

/// The cipher's secret key: a round count and a logistic seed in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecretKey {
    rounds: u32,
    k0: f64,
}

impl SecretKey {
    pub fn new(rounds: u32, k0: f64) -> Result<SecretKey, KeyscheduleError> {
        if rounds == 0 || rounds > MAX_ROUNDS {
            return Err(KeyscheduleError::InvalidRounds { rounds });
        }
        if !(k0 > 0.0 && k0 < 1.0) {
            return Err(KeyscheduleError::InvalidInitial { value: k0 });
        }
        Ok(SecretKey { rounds, k0 })
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }
}

/// One logistic-map step, 4x(1-x) in binary64.
pub fn logistic(x: f64) -> f64 {
    4.0 * x * (1.0 - x)
}

/// The orbit f(x0), f(f(x0)), ... with `count` entries; x0 itself is not
/// emitted.
pub fn logistic_orbit(x0: f64, count: usize) -> Result<Vec<f64>, KeyscheduleError> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(KeyscheduleError::StateOutOfRange { value: x0 });
    }
    let mut orbit = Vec::with_capacity(count);
    let mut x = x0;
    for _ in 0..count {
        x = logistic(x);
        orbit.push(x);
    }
    Ok(orbit)
}

/// Quantizes a state in [0, 1] to 32 bits: floor(x * (2^32 - 1)).
pub fn quantize_state(x: f64) -> u32 {
    (x * STATE_SCALE).floor() as u32
}

/// Spreads 32 key bits over 50 positions according to EXPANSION_TABLE.
pub fn expand_50(k: u32) -> u64 {
    EXPANSION_TABLE
        .iter()
        .enumerate()
        .fold(0u64, |acc, (pos, &src)| {
            acc | ((((k >> (src - 1)) & 1) as u64) << pos)
        })
}

/// Round parameters carved out of a 50-bit expansion: bits 0-1 select the
/// template variant, bits 2-9 give a, bits 10-17 give b, bits 18-49 seed
/// the round mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundParams {
    pub variant: u8,
    pub a: u32,
    pub b: u32,
    pub seed: u32,
}

pub fn derive_params(kstar: u64) -> RoundParams {
    RoundParams {
        variant: (kstar & 3) as u8,
        a: ((kstar >> 2) & 0xff) as u32,
        b: ((kstar >> 10) & 0xff) as u32,
        seed: ((kstar >> 18) & 0xffff_ffff) as u32,
    }
}

/// A template matrix instance. Parameters are kept unreduced; reduction
/// modulo the side happens when the permutation is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatMatrix {
    variant: u8,
    a: u32,
    b: u32,
}

impl CatMatrix {
    pub fn new(variant: u8, a: u32, b: u32) -> CatMatrix {
        assert!(variant < 4, "template variant {variant} out of range");
        CatMatrix { variant, a, b }
    }

    pub fn variant(&self) -> u8 {
        self.variant
    }

    pub fn a(&self) -> u32 {
        self.a
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    /// The unreduced matrix entries.
    pub fn matrix(&self) -> Mat2 {
        catmap::set_form_matrix(self.variant, self.a as i64, self.b as i64)
    }
}

/// A bijective scatter table over an N x N grid: the value at a source
/// cell moves to `dest_of` that cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationMap {
    side: usize,
    dest: Vec<u32>,
}

impl PermutationMap {
    /// Tabulates (i, j) -> C * (i, j)^T mod side. The map is a bijection
    /// exactly when gcd(det C, side) = 1.
    pub fn from_matrix(c: &Mat2, side: usize) -> Result<PermutationMap, KeyscheduleError> {
        if side < 2 {
            return Err(KeyscheduleError::InvalidSide { side });
        }
        let det = c.det();
        if catmap::gcd(det.rem_euclid(side as i64), side as i64) != 1 {
            return Err(KeyscheduleError::NotBijective { det, side });
        }
        let mut dest = vec![0u32; side * side];
        for i in 0..side {
            for j in 0..side {
                let (di, dj) = c.apply((i, j), side);
                dest[i * side + j] = (di * side + dj) as u32;
            }
        }
        Ok(PermutationMap { side, dest })
    }

    /// Rebuilds a map from explicit destination pairs in raster order,
    /// checking that they form a bijection.
    pub fn from_dest_pairs(
        side: usize,
        pairs: &[(usize, usize)],
    ) -> Result<PermutationMap, KeyscheduleError> {
        if side < 2 || pairs.len() != side * side {
            return Err(KeyscheduleError::InvalidSide { side });
        }
        let mut dest = vec![0u32; side * side];
        let mut seen = vec![false; side * side];
        for (idx, &(di, dj)) in pairs.iter().enumerate() {
            if di >= side || dj >= side || seen[di * side + dj] {
                return Err(KeyscheduleError::NotBijective {
                    det: 0,
                    side,
                });
            }
            seen[di * side + dj] = true;
            dest[idx] = (di * side + dj) as u32;
        }
        Ok(PermutationMap { side, dest })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dest_of(&self, i: usize, j: usize) -> (usize, usize) {
        let d = self.dest[i * self.side + j] as usize;
        (d / self.side, d % self.side)
    }

    /// Scatters a row-major slice: out[dest] = in[src].
    pub fn permute<T: Copy + Default>(&self, data: &[T]) -> Vec<T> {
        assert_eq!(data.len(), self.dest.len(), "slice does not match map size");
        let mut out = vec![T::default(); data.len()];
        for (src, &d) in self.dest.iter().enumerate() {
            out[d as usize] = data[src];
        }
        out
    }

    /// The map equal to applying self first, then other.
    pub fn then(&self, other: &PermutationMap) -> PermutationMap {
        assert_eq!(self.side, other.side, "maps cover different grids");
        let dest = self
            .dest
            .iter()
            .map(|&mid| other.dest[mid as usize])
            .collect();
        PermutationMap {
            side: self.side,
            dest,
        }
    }
}

/// Builds one byte mask from a 32-bit seed.
///
/// The seed starts a logistic orbit of 2N+1 states: the first N+1 fill the
/// boundary row W(-1, -1) .. W(-1, N-1) left to right, the rest fill the
/// boundary column W(0, -1) .. W(N-1, -1) top to bottom. Interior cells
/// follow in raster order as a diagonal coupled-lattice step
/// W(i, j) = (1 - e) * f(W(i, j-1)) + e * f(W(i-1, j-1)) with e = 0.875,
/// and quantize to bytes as min(floor(256 * W), 255).
pub fn build_mask(seed: u32, side: usize) -> HalfImage {
    let x0 = seed as f64 / SEED_SCALE;
    let states = logistic_orbit(x0, 2 * side + 1).expect("seed / 2^32 lies in [0, 1)");
    let row_boundary = &states[..side + 1];
    let col_boundary = &states[side + 1..];

    let mut w = vec![0.0f64; side * side];
    for i in 0..side {
        for j in 0..side {
            let left = if j == 0 {
                col_boundary[i]
            } else {
                w[i * side + j - 1]
            };
            let diag = if i == 0 {
                row_boundary[j]
            } else if j == 0 {
                col_boundary[i - 1]
            } else {
                w[(i - 1) * side + (j - 1)]
            };
            w[i * side + j] = (1.0 - COUPLING) * logistic(left) + COUPLING * logistic(diag);
        }
    }
    let bytes = w
        .iter()
        .map(|&x| ((x * 256.0).floor() as u32).min(255) as u8)
        .collect();
    HalfImage::from_vec(side, bytes)
}

/// The full expanded key: T+2 quantized states and masks, T matrices and
/// permutations.
#[derive(Debug, Clone, PartialEq)]
pub struct KeySchedule {
    side: usize,
    rounds: u32,
    k: Vec<u32>,
    kstar: Vec<u64>,
    matrices: Vec<CatMatrix>,
    perms: Vec<PermutationMap>,
    masks: Vec<HalfImage>,
}

impl KeySchedule {
    /// Assembles a schedule from parts, validating the piece counts.
    pub fn from_parts(
        side: usize,
        rounds: u32,
        k: Vec<u32>,
        kstar: Vec<u64>,
        matrices: Vec<CatMatrix>,
        perms: Vec<PermutationMap>,
        masks: Vec<HalfImage>,
    ) -> Result<KeySchedule, KeyscheduleError> {
        if rounds == 0 || rounds > MAX_ROUNDS {
            return Err(KeyscheduleError::InvalidRounds { rounds });
        }
        if side < 2 {
            return Err(KeyscheduleError::InvalidSide { side });
        }
        let t = rounds as usize;
        let counts_ok = k.len() == t + 2
            && kstar.len() == t + 2
            && matrices.len() == t
            && perms.len() == t
            && masks.len() == t + 2
            && perms.iter().all(|p| p.side() == side)
            && masks.iter().all(|m| m.side() == side);
        if !counts_ok {
            return Err(KeyscheduleError::InvalidSide { side });
        }
        Ok(KeySchedule {
            side,
            rounds,
            k,
            kstar,
            matrices,
            perms,
            masks,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn k(&self) -> &[u32] {
        &self.k
    }

    pub fn kstar(&self) -> &[u64] {
        &self.kstar
    }

    pub fn matrices(&self) -> &[CatMatrix] {
        &self.matrices
    }

    pub fn perms(&self) -> &[PermutationMap] {
        &self.perms
    }

    pub fn masks(&self) -> &[HalfImage] {
        &self.masks
    }

    pub fn perm(&self, round: usize) -> &PermutationMap {
        &self.perms[round]
    }

    pub fn mask(&self, index: usize) -> &HalfImage {
        &self.masks[index]
    }
}

/// Expands a secret key for images with the given half side length.
///
/// The orbit starts at f(K0), so K0 itself never leaves the schedule.
pub fn key_schedule(key: &SecretKey, side: usize) -> Result<KeySchedule, KeyscheduleError> {
    if side < 2 {
        return Err(KeyscheduleError::InvalidSide { side });
    }
    let t = key.rounds() as usize;
    let orbit = logistic_orbit(key.k0(), t + 2)?;
    let k: Vec<u32> = orbit.iter().map(|&x| quantize_state(x)).collect();
    let kstar: Vec<u64> = k.iter().map(|&ki| expand_50(ki)).collect();
    let params: Vec<RoundParams> = kstar.iter().map(|&ks| derive_params(ks)).collect();

    let matrices: Vec<CatMatrix> = params[..t]
        .iter()
        .map(|p| CatMatrix::new(p.variant, p.a, p.b))
        .collect();
    let perms = matrices
        .iter()
        .map(|c| {
            PermutationMap::from_matrix(&c.matrix(), side)
                .expect("templates are unimodular, so always bijective")
        })
        .collect();
    let masks = params.iter().map(|p| build_mask(p.seed, side)).collect();

    KeySchedule::from_parts(side, key.rounds(), k, kstar, matrices, perms, masks)
}
