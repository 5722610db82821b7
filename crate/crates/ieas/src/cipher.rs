//! The cipher core: T rounds of mask XOR, cat-map permutation, and a
//! raster-order chained substitution over two N x N image halves, then two
//! final mask layers.
//!
//! Per round l (1-based), with halves (L, R) and schedule material
//! (V, P, C indexed from 0):
//!
//! - R_l = V_{l-1} xor L_{l-1}
//! - Rp_l = scatter of R_l by P_{l-1}
//! - L_l(x) = R_{l-1}(x) xor g(Rp_l(x), Rp_l(x - 1)) in raster order,
//!   where g(x, y) = x + A*y mod 256 and the first cell passes through
//!
//! Output: r = V_T xor L_T, l = V_{T+1} xor R_T.

use crate::keyschedule::{KeySchedule, PermutationMap};

/// One N x N byte matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalfImage {
    side: usize,
    data: Vec<u8>,
}

impl HalfImage {
    pub fn new(side: usize) -> HalfImage {
        HalfImage {
            side,
            data: vec![0; side * side],
        }
    }

    pub fn from_vec(side: usize, data: Vec<u8>) -> HalfImage {
        assert_eq!(data.len(), side * side, "data does not fill a {side} x {side} half");
        HalfImage { side, data }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.side + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: u8) {
        self.data[i * self.side + j] = value;
    }

    pub fn xor(&self, other: &HalfImage) -> HalfImage {
        assert_eq!(self.side, other.side, "halves have different sides");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a ^ b)
            .collect();
        HalfImage {
            side: self.side,
            data,
        }
    }
}

/// Diffusion configuration: the substitution multiplier A.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CipherParams {
    pub a: u8,
}

impl CipherParams {
    pub fn new(a: u8) -> CipherParams {
        CipherParams { a }
    }

    /// Largest n <= 7 with 2^n dividing the multiplier; 0 for odd values.
    /// Bit planes 1..=n of every round are linear over GF(2).
    pub fn plane_budget(&self) -> u8 {
        if self.a == 0 {
            7
        } else {
            (self.a.trailing_zeros() as u8).min(7)
        }
    }
}

/// Combines a permuted byte with its raster predecessor: x + A*y mod 256.
pub fn chain_combine(x: u8, y: u8, a: u8) -> u8 {
    x.wrapping_add(a.wrapping_mul(y))
}

/// Scatters a half: out[C(i, j)] = in[(i, j)].
pub fn apply_permutation(img: &HalfImage, p: &PermutationMap) -> HalfImage {
    assert_eq!(img.side(), p.side(), "permutation does not fit the image");
    HalfImage {
        side: img.side,
        data: p.permute(&img.data),
    }
}

/// The XOR stream contributed by the permuted half: cell 0 passes through,
/// cell k combines with cell k-1 in raster order. The substitution and its
/// inverse are both an XOR with this stream.
fn chain_stream(permuted: &HalfImage, a: u8) -> Vec<u8> {
    let src = &permuted.data;
    let mut out = Vec::with_capacity(src.len());
    out.push(src[0]);
    for k in 1..src.len() {
        out.push(chain_combine(src[k], src[k - 1], a));
    }
    out
}

/// Substitution step: prev(x) xor g-chain of the permuted half.
pub fn chain_substitute(prev: &HalfImage, permuted: &HalfImage, params: CipherParams) -> HalfImage {
    assert_eq!(prev.side, permuted.side, "halves have different sides");
    let stream = chain_stream(permuted, params.a);
    let data = prev.data.iter().zip(&stream).map(|(p, s)| p ^ s).collect();
    HalfImage {
        side: prev.side,
        data,
    }
}

/// Recovers `prev` from the substitution output and the permuted half.
pub fn chain_substitute_inverse(
    output: &HalfImage,
    permuted: &HalfImage,
    params: CipherParams,
) -> HalfImage {
    chain_substitute(output, permuted, params)
}

fn one_round(
    left: &HalfImage,
    right: &HalfImage,
    perm: &PermutationMap,
    mask: &HalfImage,
    params: CipherParams,
) -> (HalfImage, HalfImage) {
    let r_next = mask.xor(left);
    let permuted = apply_permutation(&r_next, perm);
    let l_next = chain_substitute(right, &permuted, params);
    (l_next, r_next)
}

/// Encrypts a plain pair of halves into a cipher pair (l, r).
pub fn encrypt(
    left: &HalfImage,
    right: &HalfImage,
    sched: &KeySchedule,
    params: CipherParams,
) -> (HalfImage, HalfImage) {
    encrypt_trace(left, right, sched, params).0
}

/// Encrypts while recording the (L_l, R_l) state after every round.
pub fn encrypt_trace(
    left: &HalfImage,
    right: &HalfImage,
    sched: &KeySchedule,
    params: CipherParams,
) -> ((HalfImage, HalfImage), Vec<(HalfImage, HalfImage)>) {
    assert_eq!(left.side(), sched.side(), "image does not match the schedule");
    assert_eq!(right.side(), sched.side(), "image does not match the schedule");
    let t = sched.rounds() as usize;
    let mut l = left.clone();
    let mut r = right.clone();
    let mut trace = Vec::with_capacity(t);
    for round in 0..t {
        let (l_next, r_next) = one_round(&l, &r, sched.perm(round), sched.mask(round), params);
        l = l_next;
        r = r_next;
        trace.push((l.clone(), r.clone()));
    }
    let cipher_r = sched.mask(t).xor(&l);
    let cipher_l = sched.mask(t + 1).xor(&r);
    ((cipher_l, cipher_r), trace)
}

/// Inverts `encrypt`.
pub fn decrypt(
    cipher_l: &HalfImage,
    cipher_r: &HalfImage,
    sched: &KeySchedule,
    params: CipherParams,
) -> (HalfImage, HalfImage) {
    assert_eq!(cipher_l.side(), sched.side(), "image does not match the schedule");
    assert_eq!(cipher_r.side(), sched.side(), "image does not match the schedule");
    let t = sched.rounds() as usize;
    let mut l = sched.mask(t).xor(cipher_r);
    let mut r = sched.mask(t + 1).xor(cipher_l);
    for round in (0..t).rev() {
        let permuted = apply_permutation(&r, sched.perm(round));
        let r_prev = chain_substitute_inverse(&l, &permuted, params);
        let l_prev = sched.mask(round).xor(&r);
        l = l_prev;
        r = r_prev;
    }
    (l, r)
}
