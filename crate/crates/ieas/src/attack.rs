//! Differential recovery of equivalent key material for T = 1 through 4.
//!
//! With an even multiplier A, every bit plane k <= n (n the number of
//! trailing zero bits of A) moves through a round as pure XOR and scatter:
//! R_l = L_{l-1} and L_{l,k} = R_{l-1,k} xor R_{l,k}(P_{l-1}). Masks cancel
//! in differences, so the difference of two plain-images propagates to the
//! ciphertext as a known composition of unknown scatters. The attacks
//! compare differential bit-plane stacks before and after one scatter,
//! match cells by globally unique signatures, solve the matrix from two
//! spanning correspondences, and finally fold all masks into two aggregate
//! matrices that decrypt any ciphertext produced under the same key.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::catmap::{self, Mat2};
use crate::cipher::{CipherParams, HalfImage};
use crate::imageio::{join_halves, split_halves, Image};
use crate::keyschedule::PermutationMap;

/// One bit plane of a half, values 0 or 1, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    side: usize,
    bits: Vec<u8>,
}

impl Plane {
    /// Extracts plane k (1 = least significant) from a half.
    pub fn from_half(img: &HalfImage, k: u8) -> Plane {
        assert!((1..=8).contains(&k), "plane index {k} outside 1..=8");
        Plane {
            side: img.side(),
            bits: img.data().iter().map(|&b| (b >> (k - 1)) & 1).collect(),
        }
    }

    pub fn from_bits(side: usize, bits: Vec<u8>) -> Plane {
        assert_eq!(bits.len(), side * side, "bits do not fill a {side} x {side} plane");
        assert!(bits.iter().all(|&b| b <= 1), "plane entries must be 0 or 1");
        Plane { side, bits }
    }

    pub fn zero(side: usize) -> Plane {
        Plane {
            side,
            bits: vec![0; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.bits[i * self.side + j]
    }

    pub fn xor(&self, other: &Plane) -> Plane {
        assert_eq!(self.side, other.side, "planes have different sides");
        Plane {
            side: self.side,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect(),
        }
    }

    pub fn scatter(&self, p: &PermutationMap) -> Plane {
        assert_eq!(self.side, p.side(), "permutation does not fit the plane");
        Plane {
            side: self.side,
            bits: p.permute(&self.bits),
        }
    }
}

/// Planes 1..=n of one half or one difference, lowest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlaneStack {
    side: usize,
    planes: Vec<Plane>,
}

impl BitPlaneStack {
    /// Extracts planes 1..=n_planes of a half.
    pub fn from_half(img: &HalfImage, n_planes: u8) -> BitPlaneStack {
        BitPlaneStack {
            side: img.side(),
            planes: (1..=n_planes).map(|k| Plane::from_half(img, k)).collect(),
        }
    }

    pub fn from_planes(planes: Vec<Plane>) -> BitPlaneStack {
        assert!(!planes.is_empty(), "a stack needs at least one plane");
        let side = planes[0].side();
        assert!(planes.iter().all(|p| p.side() == side), "planes have different sides");
        BitPlaneStack { side, planes }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn count(&self) -> usize {
        self.planes.len()
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    /// Plane k, 1-based.
    pub fn plane(&self, k: u8) -> &Plane {
        &self.planes[(k - 1) as usize]
    }

    pub fn xor(&self, other: &BitPlaneStack) -> BitPlaneStack {
        assert_eq!(self.planes.len(), other.planes.len(), "stacks have different depths");
        BitPlaneStack {
            side: self.side,
            planes: self
                .planes
                .iter()
                .zip(&other.planes)
                .map(|(a, b)| a.xor(b))
                .collect(),
        }
    }

    pub fn scatter(&self, p: &PermutationMap) -> BitPlaneStack {
        BitPlaneStack {
            side: self.side,
            planes: self.planes.iter().map(|pl| pl.scatter(p)).collect(),
        }
    }

    /// The stacked bits at one cell, plane 1 in the lowest bit.
    pub fn value_at(&self, i: usize, j: usize) -> u64 {
        self.planes
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, pl)| acc | ((pl.get(i, j) as u64) << k))
    }
}

/// Planes 1..=n_planes of a xor b.
pub fn bitplane_diff(a: &HalfImage, b: &HalfImage, n_planes: u8) -> BitPlaneStack {
    BitPlaneStack::from_half(&a.xor(b), n_planes)
}

/// Propagates a plain-image difference through T rounds of the linear
/// model and the output swap, returning the predicted (left, right)
/// ciphertext difference stacks. Exact on planes 1..=n for even A.
pub fn predict_differential(
    left_diff: &BitPlaneStack,
    right_diff: &BitPlaneStack,
    perms: &[PermutationMap],
) -> (BitPlaneStack, BitPlaneStack) {
    let mut ld = left_diff.clone();
    let mut rd = right_diff.clone();
    for p in perms {
        let r_next = ld;
        let l_next = rd.xor(&r_next.scatter(p));
        rd = r_next;
        ld = l_next;
    }
    (rd, ld)
}

/// A matched cell: the difference value sits at `src` before the scatter
/// and at `dst` after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Correspondence {
    pub src: (usize, usize),
    pub dst: (usize, usize),
}

/// Matches cells between two families of stacks related by one unknown
/// scatter. A cell's signature is the concatenation of its stack values
/// across all provided differences; only nonzero signatures occurring
/// exactly once on both sides produce a correspondence. The scatter moves
/// values without mixing them, so every returned pair is genuine whenever
/// the linear model holds.
pub fn match_permuted(pre: &[BitPlaneStack], post: &[BitPlaneStack]) -> Vec<Correspondence> {
    assert!(!pre.is_empty(), "need at least one difference");
    assert_eq!(pre.len(), post.len(), "pre and post families differ in length");
    let side = pre[0].side();
    let mut total_bits = 0;
    for (a, b) in pre.iter().zip(post) {
        assert_eq!(a.side(), side, "stacks have different sides");
        assert_eq!(b.side(), side, "stacks have different sides");
        assert_eq!(a.count(), b.count(), "paired stacks have different depths");
        total_bits += a.count();
    }
    assert!(total_bits <= 128, "signature would exceed 128 bits");

    let signatures = |family: &[BitPlaneStack]| -> Vec<u128> {
        let mut sigs = vec![0u128; side * side];
        let mut shift = 0;
        for stack in family {
            for plane in stack.planes() {
                for (idx, &bit) in plane.bits().iter().enumerate() {
                    sigs[idx] |= (bit as u128) << shift;
                }
                shift += 1;
            }
        }
        sigs
    };
    let tally = |sigs: &[u128]| -> HashMap<u128, (usize, usize)> {
        let mut map: HashMap<u128, (usize, usize)> = HashMap::new();
        for (idx, &sig) in sigs.iter().enumerate() {
            let entry = map.entry(sig).or_insert((0, idx));
            entry.0 += 1;
            entry.1 = idx;
        }
        map
    };

    let pre_sigs = signatures(pre);
    let post_sigs = signatures(post);
    let pre_tally = tally(&pre_sigs);
    let post_tally = tally(&post_sigs);

    let mut out = Vec::new();
    for (idx, &sig) in pre_sigs.iter().enumerate() {
        if sig == 0 || pre_tally[&sig].0 != 1 {
            continue;
        }
        if let Some(&(1, dst)) = post_tally.get(&sig) {
            out.push(Correspondence {
                src: (idx / side, idx % side),
                dst: (dst / side, dst % side),
            });
        }
    }
    out
}

/// Which permutation or sub-step an attack error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackStep {
    P0,
    P1,
    P2,
    P3,
    RightTriple,
    LeftTriple,
}

impl fmt::Display for AttackStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackStep::P0 => write!(f, "P0"),
            AttackStep::P1 => write!(f, "P1"),
            AttackStep::P2 => write!(f, "P2"),
            AttackStep::P3 => write!(f, "P3"),
            AttackStep::RightTriple => write!(f, "destination triple of the right-half pixels"),
            AttackStep::LeftTriple => write!(f, "destination triple of the left-half pixels"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackError {
    /// Odd multipliers leave no linear bit plane to work with.
    OddMultiplier { a: u8 },
    SideMismatch,
    TooFewPairs { needed: usize, got: usize },
    /// Not enough uniquely matched cells, or none spanning the grid.
    InsufficientMatches { step: AttackStep, matches: usize },
    /// Matched cells contradict every single matrix.
    InconsistentMatches { step: AttackStep },
    /// The two-pixel destinations merged; different positions or values
    /// avoid this.
    DestinationCollision {
        step: AttackStep,
        alpha_hits: usize,
        beta_hits: usize,
        stray: usize,
    },
    /// No assignment of destinations to matrix roles is template-consistent.
    NoConsistentAssignment { step: AttackStep },
    /// More than one equivalent key survived validation.
    AmbiguousCandidates { count: usize },
    MalformedChosen { reason: String },
    /// Every candidate failed to reproduce the known plaintexts.
    ValidationFailed,
    Unsupported { rounds: u32 },
}

impl fmt::Display for AttackError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackError::OddMultiplier { a } => {
                write!(f, "multiplier {a} is odd, so no bit plane is linear and the differential attack does not apply")
            }
            AttackError::SideMismatch => write!(f, "attack inputs have mismatched image sides"),
            AttackError::TooFewPairs { needed, got } => {
                write!(f, "need at least {needed} plain/cipher pairs, got {got}")
            }
            AttackError::InsufficientMatches { step, matches } => {
                write!(f, "recovering {step}: {matches} uniquely matched cells, need two spanning the grid; supply more plaintext pairs")
            }
            AttackError::InconsistentMatches { step } => {
                write!(f, "recovering {step}: matched cells contradict a single matrix, the pairing assumption does not hold for this data")
            }
            AttackError::DestinationCollision {
                step,
                alpha_hits,
                beta_hits,
                stray,
            } => {
                write!(f, "recovering the {step}: expected three destinations per value, saw {alpha_hits} and {beta_hits} with {stray} merged cells; retry with different positions or values")
            }
            AttackError::NoConsistentAssignment { step } => {
                write!(f, "recovering the {step}: no destination assignment yields template-form matrices")
            }
            AttackError::AmbiguousCandidates { count } => {
                write!(f, "{count} distinct equivalent keys survive validation; retry with different chosen images")
            }
            AttackError::MalformedChosen { reason } => write!(f, "bad chosen image: {reason}"),
            AttackError::ValidationFailed => {
                write!(f, "no candidate key reproduces the known plaintexts")
            }
            AttackError::Unsupported { rounds } => {
                write!(f, "no attack implemented for {rounds} rounds")
            }
        }
    }
}

impl std::error::Error for AttackError {}

/// A recovered scatter: the matrix modulo the side, and its map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredPermutation {
    pub matrix: Mat2,
    pub map: PermutationMap,
}

/// Solves one scatter from matched differential stacks: finds the first
/// raster-ordered pair of matches whose sources span the grid, solves the
/// matrix, and validates it against every match.
pub fn recover_permutation(
    pre: &[BitPlaneStack],
    post: &[BitPlaneStack],
    step: AttackStep,
) -> Result<RecoveredPermutation, AttackError> {
    let matches = match_permuted(pre, post);
    let side = pre[0].side();
    let n = side as i64;
    let mut spanning = None;
    'search: for a in 0..matches.len() {
        for b in (a + 1)..matches.len() {
            let (p1, p2) = (matches[a].src, matches[b].src);
            let delta =
                (p1.0 as i64 * p2.1 as i64 - p2.0 as i64 * p1.1 as i64).rem_euclid(n);
            if catmap::gcd(delta, n) == 1 {
                spanning = Some((a, b));
                break 'search;
            }
        }
    }
    let (a, b) = spanning.ok_or(AttackError::InsufficientMatches {
        step,
        matches: matches.len(),
    })?;
    let matrix = catmap::solve_cat_matrix(
        matches[a].src,
        matches[b].src,
        matches[a].dst,
        matches[b].dst,
        side,
    )
    .expect("the spanning pair was checked coprime");
    for m in &matches {
        if matrix.apply(m.src, side) != m.dst {
            return Err(AttackError::InconsistentMatches { step });
        }
    }
    let map = PermutationMap::from_matrix(&matrix, side)
        .map_err(|_| AttackError::InconsistentMatches { step })?;
    Ok(RecoveredPermutation { matrix, map })
}

/// One known plaintext with its ciphertext, both split into halves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlainCipherPair {
    pub plain_left: HalfImage,
    pub plain_right: HalfImage,
    pub cipher_left: HalfImage,
    pub cipher_right: HalfImage,
}

impl PlainCipherPair {
    pub fn new(plain: &Image, cipher: &Image) -> Result<PlainCipherPair, AttackError> {
        if plain.side() != cipher.side() {
            return Err(AttackError::SideMismatch);
        }
        let (plain_left, plain_right) = split_halves(plain);
        let (cipher_left, cipher_right) = split_halves(cipher);
        Ok(PlainCipherPair {
            plain_left,
            plain_right,
            cipher_left,
            cipher_right,
        })
    }

    pub fn from_halves(
        plain_left: HalfImage,
        plain_right: HalfImage,
        cipher_left: HalfImage,
        cipher_right: HalfImage,
    ) -> PlainCipherPair {
        PlainCipherPair {
            plain_left,
            plain_right,
            cipher_left,
            cipher_right,
        }
    }

    fn side(&self) -> usize {
        self.plain_left.side()
    }
}

/// The left-half mask aggregate: a full byte matrix for T = 1, where the
/// left half never passes through the substitution, and per-plane
/// aggregates otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum LeftAggregate {
    FullByte(HalfImage),
    Planes(BitPlaneStack),
}

/// Everything needed to decrypt under the attacked key: the recovered
/// scatters and two mask aggregates. Holds no logistic-orbit material.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentKey {
    rounds: u32,
    side: usize,
    planes: u8,
    perms: Vec<RecoveredPermutation>,
    left: LeftAggregate,
    right: BitPlaneStack,
}

impl EquivalentKey {
    pub fn new(
        rounds: u32,
        side: usize,
        planes: u8,
        perms: Vec<RecoveredPermutation>,
        left: LeftAggregate,
        right: BitPlaneStack,
    ) -> Result<EquivalentKey, AttackError> {
        if !(1..=4).contains(&rounds) {
            return Err(AttackError::Unsupported { rounds });
        }
        if planes == 0 || planes > 7 {
            return Err(AttackError::OddMultiplier { a: 0 });
        }
        let shape_ok = perms.len() == rounds as usize
            && perms.iter().all(|p| p.map.side() == side)
            && right.side() == side
            && right.count() == planes as usize
            && match &left {
                LeftAggregate::FullByte(m) => rounds == 1 && m.side() == side,
                LeftAggregate::Planes(s) => {
                    rounds > 1 && s.side() == side && s.count() == planes as usize
                }
            };
        if !shape_ok {
            return Err(AttackError::SideMismatch);
        }
        Ok(EquivalentKey {
            rounds,
            side,
            planes,
            perms,
            left,
            right,
        })
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of recoverable planes n.
    pub fn planes(&self) -> u8 {
        self.planes
    }

    pub fn perms(&self) -> &[RecoveredPermutation] {
        &self.perms
    }

    pub fn left(&self) -> &LeftAggregate {
        &self.left
    }

    pub fn right(&self) -> &BitPlaneStack {
        &self.right
    }

    /// Bit mask of the plaintext left-half planes the key recovers.
    pub fn left_plane_mask(&self) -> u8 {
        match self.left {
            LeftAggregate::FullByte(_) => 0xff,
            LeftAggregate::Planes(_) => (1u16 << self.planes) as u8 - 1,
        }
    }

    /// Bit mask of the plaintext right-half planes the key recovers.
    pub fn right_plane_mask(&self) -> u8 {
        (1u16 << self.planes) as u8 - 1
    }
}

/// A plaintext reconstructed with an equivalent key; only the planes set
/// in each half's mask are meaningful.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredImage {
    pub left: HalfImage,
    pub right: HalfImage,
    pub left_mask: u8,
    pub right_mask: u8,
}

fn scatter_seq(plane: &Plane, maps: &[&PermutationMap]) -> Plane {
    let mut out = plane.clone();
    for m in maps {
        out = out.scatter(m);
    }
    out
}

fn assemble(side: usize, planes: &[Plane]) -> HalfImage {
    let mut data = vec![0u8; side * side];
    for (k, plane) in planes.iter().enumerate() {
        for (idx, &bit) in plane.bits().iter().enumerate() {
            data[idx] |= bit << k;
        }
    }
    HalfImage::from_vec(side, data)
}

/// Decrypts a ciphertext with an equivalent key.
pub fn recover_image(
    cipher_left: &HalfImage,
    cipher_right: &HalfImage,
    key: &EquivalentKey,
) -> Result<RecoveredImage, AttackError> {
    if cipher_left.side() != key.side || cipher_right.side() != key.side {
        return Err(AttackError::SideMismatch);
    }
    let n = key.planes;
    let maps: Vec<&PermutationMap> = key.perms.iter().map(|p| &p.map).collect();
    let pl = |img: &HalfImage, k: u8| Plane::from_half(img, k);

    let (left, right) = match key.rounds {
        1 => {
            let m1 = match &key.left {
                LeftAggregate::FullByte(m) => m,
                LeftAggregate::Planes(_) => unreachable!("validated in EquivalentKey::new"),
            };
            let left = cipher_left.xor(m1);
            let mut right_planes = Vec::new();
            for k in 1..=n {
                right_planes.push(
                    pl(cipher_right, k)
                        .xor(&pl(&left, k).scatter(maps[0]))
                        .xor(key.right.plane(k)),
                );
            }
            (left, assemble(key.side, &right_planes))
        }
        2..=4 => {
            let m = match &key.left {
                LeftAggregate::Planes(s) => s,
                LeftAggregate::FullByte(_) => unreachable!("validated in EquivalentKey::new"),
            };
            let mut left_planes = Vec::new();
            let mut right_planes = Vec::new();
            for k in 1..=n {
                let (lk, rk) = match key.rounds {
                    2 => {
                        let lk = scatter_seq(&pl(cipher_left, k), &[maps[1]])
                            .xor(&pl(cipher_right, k))
                            .xor(m.plane(k));
                        let rk = pl(cipher_left, k)
                            .xor(&lk.scatter(maps[0]))
                            .xor(key.right.plane(k));
                        (lk, rk)
                    }
                    3 => {
                        let lk = scatter_seq(&pl(cipher_left, k), &[maps[2], maps[1]])
                            .xor(&scatter_seq(&pl(cipher_right, k), &[maps[1]]))
                            .xor(&pl(cipher_left, k))
                            .xor(m.plane(k));
                        let rk = scatter_seq(&pl(cipher_left, k), &[maps[2]])
                            .xor(&pl(cipher_right, k))
                            .xor(&lk.scatter(maps[0]))
                            .xor(key.right.plane(k));
                        (lk, rk)
                    }
                    _ => {
                        let lk = scatter_seq(&pl(cipher_left, k), &[maps[3], maps[2], maps[1]])
                            .xor(&scatter_seq(&pl(cipher_left, k), &[maps[1]]))
                            .xor(&scatter_seq(&pl(cipher_left, k), &[maps[3]]))
                            .xor(&scatter_seq(&pl(cipher_right, k), &[maps[2], maps[1]]))
                            .xor(&pl(cipher_right, k))
                            .xor(m.plane(k));
                        let rk = scatter_seq(&pl(cipher_left, k), &[maps[3], maps[2]])
                            .xor(&pl(cipher_left, k))
                            .xor(&scatter_seq(&pl(cipher_right, k), &[maps[2]]))
                            .xor(&lk.scatter(maps[0]))
                            .xor(key.right.plane(k));
                        (lk, rk)
                    }
                };
                left_planes.push(lk);
                right_planes.push(rk);
            }
            (assemble(key.side, &left_planes), assemble(key.side, &right_planes))
        }
        _ => unreachable!("validated in EquivalentKey::new"),
    };
    Ok(RecoveredImage {
        left,
        right,
        left_mask: key.left_plane_mask(),
        right_mask: key.right_plane_mask(),
    })
}

fn plane_budget_checked(params: CipherParams) -> Result<u8, AttackError> {
    let n = params.plane_budget();
    if n == 0 {
        return Err(AttackError::OddMultiplier { a: params.a });
    }
    Ok(n)
}

fn check_sides(pairs: &[&PlainCipherPair]) -> Result<usize, AttackError> {
    let side = pairs[0].side();
    for p in pairs {
        let ok = p.plain_left.side() == side
            && p.plain_right.side() == side
            && p.cipher_left.side() == side
            && p.cipher_right.side() == side;
        if !ok {
            return Err(AttackError::SideMismatch);
        }
    }
    Ok(side)
}

/// Known-plaintext attack on one round. The first pair anchors all
/// differences; later pairs are consumed only as the matcher needs them.
/// Recovers the full left half and planes 1..=n of the right half.
pub fn attack_t1(
    pairs: &[PlainCipherPair],
    params: CipherParams,
) -> Result<EquivalentKey, AttackError> {
    let n = plane_budget_checked(params)?;
    if pairs.len() < 2 {
        return Err(AttackError::TooFewPairs {
            needed: 2,
            got: pairs.len(),
        });
    }
    let side = check_sides(&pairs.iter().collect::<Vec<_>>())?;
    let anchor = &pairs[0];

    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut recovered = None;
    let mut last = AttackError::InsufficientMatches {
        step: AttackStep::P0,
        matches: 0,
    };
    for pair in &pairs[1..] {
        // pre: R'_1 = cipher left diff; post: R'_1(P0) = L'_1 xor R'_0.
        pre.push(bitplane_diff(&anchor.cipher_left, &pair.cipher_left, n));
        post.push(
            bitplane_diff(&anchor.cipher_right, &pair.cipher_right, n)
                .xor(&bitplane_diff(&anchor.plain_right, &pair.plain_right, n)),
        );
        match recover_permutation(&pre, &post, AttackStep::P0) {
            Ok(r) => {
                recovered = Some(r);
                break;
            }
            Err(e @ AttackError::InsufficientMatches { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    let p0 = recovered.ok_or(last)?;

    let m1 = anchor.plain_left.xor(&anchor.cipher_left);
    let n1 = BitPlaneStack::from_planes(
        (1..=n)
            .map(|k| {
                Plane::from_half(&anchor.cipher_right, k)
                    .xor(&Plane::from_half(&anchor.plain_right, k))
                    .xor(&Plane::from_half(&anchor.plain_left, k).scatter(&p0.map))
            })
            .collect(),
    );
    EquivalentKey::new(1, side, n, vec![p0], LeftAggregate::FullByte(m1), n1)
}

/// Known-plaintext attack on two rounds; recovers planes 1..=n of both
/// halves.
pub fn attack_t2(
    pairs: &[PlainCipherPair],
    params: CipherParams,
) -> Result<EquivalentKey, AttackError> {
    let n = plane_budget_checked(params)?;
    if pairs.len() < 2 {
        return Err(AttackError::TooFewPairs {
            needed: 2,
            got: pairs.len(),
        });
    }
    let side = check_sides(&pairs.iter().collect::<Vec<_>>())?;
    let anchor = &pairs[0];

    let mut pre0 = Vec::new();
    let mut post0 = Vec::new();
    let mut pre1 = Vec::new();
    let mut post1 = Vec::new();
    let mut p0 = None;
    let mut p1 = None;
    let mut last = AttackError::InsufficientMatches {
        step: AttackStep::P0,
        matches: 0,
    };
    for pair in &pairs[1..] {
        let plain_l = bitplane_diff(&anchor.plain_left, &pair.plain_left, n);
        let plain_r = bitplane_diff(&anchor.plain_right, &pair.plain_right, n);
        let ciph_l = bitplane_diff(&anchor.cipher_left, &pair.cipher_left, n);
        let ciph_r = bitplane_diff(&anchor.cipher_right, &pair.cipher_right, n);
        // pre: R'_1 = L'_0; post: R'_1(P0) = R'_2 xor R'_0, with R'_2 the
        // cipher left diff.
        pre0.push(plain_l.clone());
        post0.push(ciph_l.xor(&plain_r));
        // pre: R'_2; post: R'_2(P1) = L'_2 xor L'_0.
        pre1.push(ciph_l);
        post1.push(ciph_r.xor(&plain_l));

        if p0.is_none() {
            match recover_permutation(&pre0, &post0, AttackStep::P0) {
                Ok(r) => p0 = Some(r),
                Err(e @ AttackError::InsufficientMatches { .. }) => last = e,
                Err(e) => return Err(e),
            }
        }
        if p1.is_none() {
            match recover_permutation(&pre1, &post1, AttackStep::P1) {
                Ok(r) => p1 = Some(r),
                Err(e @ AttackError::InsufficientMatches { .. }) => last = e,
                Err(e) => return Err(e),
            }
        }
        if p0.is_some() && p1.is_some() {
            break;
        }
    }
    let (p0, p1) = match (p0, p1) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(last),
    };

    let pl = |img: &HalfImage, k: u8| Plane::from_half(img, k);
    let m2 = BitPlaneStack::from_planes(
        (1..=n)
            .map(|k| {
                pl(&anchor.cipher_left, k)
                    .scatter(&p1.map)
                    .xor(&pl(&anchor.cipher_right, k))
                    .xor(&pl(&anchor.plain_left, k))
            })
            .collect(),
    );
    let n2 = BitPlaneStack::from_planes(
        (1..=n)
            .map(|k| {
                pl(&anchor.cipher_left, k)
                    .xor(&pl(&anchor.plain_left, k).scatter(&p0.map))
                    .xor(&pl(&anchor.plain_right, k))
            })
            .collect(),
    );
    EquivalentKey::new(2, side, n, vec![p0, p1], LeftAggregate::Planes(m2), n2)
}

/// Builds the chosen plain-image for the three-round attack: the left half
/// of `a` joined with the right half of `b`. Its difference with `a` has
/// an identically zero left half, which commutes with any scatter.
pub fn construct_chosen_t3(a: &Image, b: &Image) -> Result<Image, AttackError> {
    if a.side() != b.side() {
        return Err(AttackError::SideMismatch);
    }
    let (left, _) = split_halves(a);
    let (_, right) = split_halves(b);
    Ok(join_halves(&left, &right))
}

/// Chosen-plaintext attack on three rounds.
///
/// `bases` holds ordinary pairs; `chosen[i]` must be the encryption of
/// `construct_chosen_t3(bases[0], bases[i + 1])`. The half-swapped
/// differences pin P2 and P1, the ordinary differences then pin P0.
pub fn attack_t3(
    bases: &[PlainCipherPair],
    chosen: &[PlainCipherPair],
    params: CipherParams,
) -> Result<EquivalentKey, AttackError> {
    let n = plane_budget_checked(params)?;
    if bases.len() < 2 || chosen.is_empty() {
        return Err(AttackError::TooFewPairs {
            needed: 3,
            got: bases.len() + chosen.len(),
        });
    }
    if chosen.len() > bases.len() - 1 {
        return Err(AttackError::MalformedChosen {
            reason: format!(
                "{} chosen pairs but only {} partner bases",
                chosen.len(),
                bases.len() - 1
            ),
        });
    }
    let all: Vec<&PlainCipherPair> = bases.iter().chain(chosen).collect();
    let side = check_sides(&all)?;
    let anchor = &bases[0];
    for (i, ch) in chosen.iter().enumerate() {
        if ch.plain_left != anchor.plain_left || ch.plain_right != bases[i + 1].plain_right {
            return Err(AttackError::MalformedChosen {
                reason: format!(
                    "chosen pair {i} is not base 0's left half joined with base {}'s right half",
                    i + 1
                ),
            });
        }
    }

    // Swapped-half differences, all against the anchor.
    let mut pre2 = Vec::new();
    let mut post2 = Vec::new();
    let mut pre1 = Vec::new();
    let mut post1 = Vec::new();
    let mut p2 = None;
    let mut p1 = None;
    let mut last = AttackError::InsufficientMatches {
        step: AttackStep::P2,
        matches: 0,
    };
    for (i, ch) in chosen.iter().enumerate() {
        let r3 = bitplane_diff(&ch.cipher_left, &anchor.cipher_left, n);
        let l3 = bitplane_diff(&ch.cipher_right, &anchor.cipher_right, n);
        let r0 = bitplane_diff(&bases[i + 1].plain_right, &anchor.plain_right, n);
        // R'_3(P2) = L'_3 xor R'_0 and R'_3 = R'_0(P1) when L'_0 = 0.
        pre2.push(r3.clone());
        post2.push(l3.xor(&r0));
        pre1.push(r0);
        post1.push(r3);

        if p2.is_none() {
            match recover_permutation(&pre2, &post2, AttackStep::P2) {
                Ok(r) => p2 = Some(r),
                Err(e @ AttackError::InsufficientMatches { .. }) => last = e,
                Err(e) => return Err(e),
            }
        }
        if p1.is_none() {
            match recover_permutation(&pre1, &post1, AttackStep::P1) {
                Ok(r) => p1 = Some(r),
                Err(e @ AttackError::InsufficientMatches { .. }) => last = e,
                Err(e) => return Err(e),
            }
        }
        if p2.is_some() && p1.is_some() {
            break;
        }
    }
    let (p2, p1) = match (p2, p1) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(last),
    };

    // Ordinary differences pin P0 via L'_0(P0) = L'_3 xor R'_3(P2) xor R'_0.
    let mut pre0 = Vec::new();
    let mut post0 = Vec::new();
    let mut p0 = None;
    for base in &bases[1..] {
        let l0 = bitplane_diff(&anchor.plain_left, &base.plain_left, n);
        let r0 = bitplane_diff(&anchor.plain_right, &base.plain_right, n);
        let r3 = bitplane_diff(&anchor.cipher_left, &base.cipher_left, n);
        let l3 = bitplane_diff(&anchor.cipher_right, &base.cipher_right, n);
        pre0.push(l0);
        post0.push(l3.xor(&r3.scatter(&p2.map)).xor(&r0));
        match recover_permutation(&pre0, &post0, AttackStep::P0) {
            Ok(r) => {
                p0 = Some(r);
                break;
            }
            Err(e @ AttackError::InsufficientMatches { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    let p0 = p0.ok_or(last)?;

    let pl = |img: &HalfImage, k: u8| Plane::from_half(img, k);
    let m3 = BitPlaneStack::from_planes(
        (1..=n)
            .map(|k| {
                scatter_seq(&pl(&anchor.cipher_left, k), &[&p2.map, &p1.map])
                    .xor(&pl(&anchor.cipher_right, k).scatter(&p1.map))
                    .xor(&pl(&anchor.cipher_left, k))
                    .xor(&pl(&anchor.plain_left, k))
            })
            .collect(),
    );
    let n3 = BitPlaneStack::from_planes(
        (1..=n)
            .map(|k| {
                pl(&anchor.cipher_left, k)
                    .scatter(&p2.map)
                    .xor(&pl(&anchor.cipher_right, k))
                    .xor(&pl(&anchor.plain_right, k))
                    .xor(&pl(&anchor.plain_left, k).scatter(&p0.map))
            })
            .collect(),
    );
    EquivalentKey::new(3, side, n, vec![p0, p1, p2], LeftAggregate::Planes(m3), n3)
}

/// Which half a chosen image modifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageHalf {
    Left,
    Right,
}

/// Builds a chosen plain-image for the four-round attack: the base with
/// `alpha` xored into p1 and `beta` into p2 of one half.
pub fn construct_chosen_t4(
    base: &Image,
    half: ImageHalf,
    p1: (usize, usize),
    p2: (usize, usize),
    alpha: u8,
    beta: u8,
) -> Result<Image, AttackError> {
    let side = base.side();
    if p1.0 >= side || p1.1 >= side || p2.0 >= side || p2.1 >= side {
        return Err(AttackError::MalformedChosen {
            reason: format!("pixel positions {p1:?}, {p2:?} outside a {side} x {side} half"),
        });
    }
    if p1 == p2 {
        return Err(AttackError::MalformedChosen {
            reason: "the two modified pixels must be distinct".into(),
        });
    }
    if alpha == 0 || beta == 0 || alpha == beta {
        return Err(AttackError::MalformedChosen {
            reason: "pixel values must be nonzero and distinct".into(),
        });
    }
    let (mut left, mut right) = split_halves(base);
    let target = match half {
        ImageHalf::Left => &mut left,
        ImageHalf::Right => &mut right,
    };
    target.set(p1.0, p1.1, target.get(p1.0, p1.1) ^ alpha);
    target.set(p2.0, p2.1, target.get(p2.0, p2.1) ^ beta);
    Ok(join_halves(&left, &right))
}

/// Canonical pixel positions and values for `construct_chosen_t4`; attempt
/// 0 is the default plan, higher attempts are retry alternatives for when
/// destinations collide. Plans from attempt 2 on use fresh pixel columns,
/// so a coincidence of scatter columns that merges one plan's destinations
/// does not repeat; their position deltas are odd, spanning any
/// power-of-two side. The side must exceed attempt + 1.
pub fn chosen_t4_plan(attempt: usize) -> ((usize, usize), (usize, usize), u8, u8) {
    let (alpha, beta) = if attempt.is_multiple_of(2) { (0b01, 0b10) } else { (0b011, 0b110) };
    match attempt {
        0 => ((1, 0), (0, 1), alpha, beta),
        1 => ((0, 1), (1, 1), alpha, beta),
        k => ((1, k), (k, k + 1), alpha, beta),
    }
}

/// Candidate counts seen while solving the two destination triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct T4Diagnostics {
    pub right_candidates: usize,
    pub left_candidates: usize,
}

struct TwoPixelDiff {
    x1: (usize, usize),
    x2: (usize, usize),
    alpha: u64,
    beta: u64,
    observed: BitPlaneStack,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct TripleCandidate {
    first: Mat2,
    middle: Mat2,
    third: Mat2,
}

const PERMS3: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Enumerates role assignments for the six lit destination cells of a
/// two-pixel difference. Each source pixel lights at most three cells: its
/// images under the first scatter, the third scatter, and the composed
/// triple. An assignment survives when both single-scatter matrices are in
/// template form, the triple has determinant 1, and the middle matrix
/// extracted from it is in template form again.
fn triple_candidates(
    diff: &TwoPixelDiff,
    step: AttackStep,
) -> Result<Vec<TripleCandidate>, AttackError> {
    let side = diff.observed.side();
    let n = side as i64;
    let mut d_alpha = Vec::new();
    let mut d_beta = Vec::new();
    let mut stray = 0usize;
    for i in 0..side {
        for j in 0..side {
            match diff.observed.value_at(i, j) {
                0 => {}
                v if v == diff.alpha => d_alpha.push((i, j)),
                v if v == diff.beta => d_beta.push((i, j)),
                _ => stray += 1,
            }
        }
    }
    if d_alpha.len() != 3 || d_beta.len() != 3 || stray > 0 {
        return Err(AttackError::DestinationCollision {
            step,
            alpha_hits: d_alpha.len(),
            beta_hits: d_beta.len(),
            stray,
        });
    }

    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for pa in &PERMS3 {
        for pb in &PERMS3 {
            let solve = |ia: usize, ib: usize| {
                catmap::solve_cat_matrix(diff.x1, diff.x2, d_alpha[ia], d_beta[ib], side)
                    .expect("source pixels were checked to span the grid")
            };
            let first = solve(pa[0], pb[0]);
            let third = solve(pa[1], pb[1]);
            let triple = solve(pa[2], pb[2]);
            if catmap::in_set_form(&first, n).is_none()
                || catmap::in_set_form(&third, n).is_none()
            {
                continue;
            }
            if triple.det().rem_euclid(n) != 1 {
                continue;
            }
            let middle = third
                .inverse_mod(n)
                .expect("unimodular")
                .mul(&triple)
                .mul(&first.inverse_mod(n).expect("unimodular"))
                .reduce(n);
            if catmap::in_set_form(&middle, n).is_none() {
                continue;
            }
            let cand = TripleCandidate {
                first,
                middle,
                third,
            };
            if seen.insert(cand.clone()) {
                candidates.push(cand);
            }
        }
    }
    if candidates.is_empty() {
        return Err(AttackError::NoConsistentAssignment { step });
    }
    Ok(candidates)
}

fn classify_chosen_t4(
    base: &PlainCipherPair,
    chosen: &[PlainCipherPair],
    n: u8,
) -> Result<(Vec<TwoPixelDiff>, Vec<TwoPixelDiff>), AttackError> {
    let side = base.side();
    let value_mask = (1u16 << n) as u64 - 1;
    let mut rights = Vec::new();
    let mut lefts = Vec::new();
    for (idx, ch) in chosen.iter().enumerate() {
        let dl = base.plain_left.xor(&ch.plain_left);
        let dr = base.plain_right.xor(&ch.plain_right);
        let lit = |d: &HalfImage| -> Vec<(usize, usize)> {
            (0..side)
                .flat_map(|i| (0..side).map(move |j| (i, j)))
                .filter(|&(i, j)| d.get(i, j) != 0)
                .collect()
        };
        let (lit_l, lit_r) = (lit(&dl), lit(&dr));
        let (d, positions, is_right) = match (lit_l.len(), lit_r.len()) {
            (0, 2) => (&dr, lit_r, true),
            (2, 0) => (&dl, lit_l, false),
            _ => {
                return Err(AttackError::MalformedChosen {
                    reason: format!(
                        "chosen image {idx} must differ from the base in exactly two pixels of one half ({} left, {} right)",
                        lit_l.len(),
                        lit_r.len()
                    ),
                })
            }
        };
        let (x1, x2) = (positions[0], positions[1]);
        let delta =
            (x1.0 as i64 * x2.1 as i64 - x2.0 as i64 * x1.1 as i64).rem_euclid(side as i64);
        if catmap::gcd(delta, side as i64) != 1 {
            return Err(AttackError::MalformedChosen {
                reason: format!("chosen image {idx}: pixels {x1:?}, {x2:?} do not span the grid"),
            });
        }
        let alpha = d.get(x1.0, x1.1) as u64 & value_mask;
        let beta = d.get(x2.0, x2.1) as u64 & value_mask;
        if alpha == 0 || beta == 0 || alpha == beta {
            return Err(AttackError::MalformedChosen {
                reason: format!(
                    "chosen image {idx}: pixel values must be nonzero and distinct in the low {n} planes"
                ),
            });
        }
        // The lit cells of a right-half change surface in the right cipher
        // half, and symmetrically for a left-half change.
        let observed = if is_right {
            bitplane_diff(&base.cipher_right, &ch.cipher_right, n)
        } else {
            bitplane_diff(&base.cipher_left, &ch.cipher_left, n)
        };
        let diff = TwoPixelDiff {
            x1,
            x2,
            alpha,
            beta,
            observed,
        };
        if is_right {
            rights.push(diff);
        } else {
            lefts.push(diff);
        }
    }
    if rights.is_empty() || lefts.is_empty() {
        return Err(AttackError::MalformedChosen {
            reason: format!(
                "need chosen images on both halves, got {} right and {} left",
                rights.len(),
                lefts.len()
            ),
        });
    }
    Ok((rights, lefts))
}

fn build_t4_key(
    base: &PlainCipherPair,
    n: u8,
    side: usize,
    mats: [Mat2; 4],
) -> Result<EquivalentKey, AttackError> {
    let mut perms = Vec::new();
    for m in &mats {
        let map = PermutationMap::from_matrix(m, side)
            .map_err(|_| AttackError::ValidationFailed)?;
        perms.push(RecoveredPermutation { matrix: *m, map });
    }
    let (p0, p1, p2, p3) = (&perms[0].map, &perms[1].map, &perms[2].map, &perms[3].map);
    let pl = |img: &HalfImage, k: u8| Plane::from_half(img, k);
    let m4 = BitPlaneStack::from_planes(
        (1..=n)
            .map(|k| {
                scatter_seq(&pl(&base.cipher_left, k), &[p3, p2, p1])
                    .xor(&scatter_seq(&pl(&base.cipher_right, k), &[p2, p1]))
                    .xor(&pl(&base.cipher_left, k).scatter(p1))
                    .xor(&pl(&base.cipher_left, k).scatter(p3))
                    .xor(&pl(&base.cipher_right, k))
                    .xor(&pl(&base.plain_left, k))
            })
            .collect(),
    );
    let n4 = BitPlaneStack::from_planes(
        (1..=n)
            .map(|k| {
                scatter_seq(&pl(&base.cipher_left, k), &[p3, p2])
                    .xor(&pl(&base.cipher_right, k).scatter(p2))
                    .xor(&pl(&base.cipher_left, k))
                    .xor(&pl(&base.plain_right, k))
                    .xor(&pl(&base.plain_left, k).scatter(p0))
            })
            .collect(),
    );
    EquivalentKey::new(4, side, n, perms, LeftAggregate::Planes(m4), n4)
}

/// Chosen-plaintext attack on four rounds, with candidate-count
/// diagnostics.
///
/// `chosen` must hold images from `construct_chosen_t4` against `base`, at
/// least one per half. A right-half change leaves L'_0 = 0, so its two
/// pixels light at most three right-cipher cells each, the images under
/// P1, P3, and P1 then P2 then P3; a left-half change does the same on the
/// left cipher half under P0, P2, and P0 then P1 then P2. Role assignments
/// are enumerated, filtered by template form, joined across the two
/// halves, and validated against every chosen pair.
pub fn attack_t4_detailed(
    base: &PlainCipherPair,
    chosen: &[PlainCipherPair],
    params: CipherParams,
) -> Result<(EquivalentKey, T4Diagnostics), AttackError> {
    let n = plane_budget_checked(params)?;
    if chosen.len() < 2 {
        return Err(AttackError::TooFewPairs {
            needed: 5,
            got: chosen.len() + 1,
        });
    }
    let mut all: Vec<&PlainCipherPair> = vec![base];
    all.extend(chosen);
    let side = check_sides(&all)?;
    let (rights, lefts) = classify_chosen_t4(base, chosen, n)?;

    let mut last = AttackError::ValidationFailed;
    for right in &rights {
        let right_cands = match triple_candidates(right, AttackStep::RightTriple) {
            Ok(c) => c,
            Err(e) => {
                last = e;
                continue;
            }
        };
        for left in &lefts {
            let left_cands = match triple_candidates(left, AttackStep::LeftTriple) {
                Ok(c) => c,
                Err(e) => {
                    last = e;
                    continue;
                }
            };
            let diag = T4Diagnostics {
                right_candidates: right_cands.len(),
                left_candidates: left_cands.len(),
            };
            // Right triples carry (C1, C2, C3), left triples (C0, C1, C2);
            // the shared C1 and C2 must agree.
            let mut survivors: Vec<EquivalentKey> = Vec::new();
            for rc in &right_cands {
                for lc in &left_cands {
                    if rc.first != lc.middle || rc.middle != lc.third {
                        continue;
                    }
                    let key = match build_t4_key(
                        base,
                        n,
                        side,
                        [lc.first, rc.first, rc.middle, rc.third],
                    ) {
                        Ok(k) => k,
                        Err(_) => continue,
                    };
                    let confirms = chosen.iter().all(|pair| {
                        recover_image(&pair.cipher_left, &pair.cipher_right, &key)
                            .map(|got| {
                                planes_equal(&got.left, &pair.plain_left, n)
                                    && planes_equal(&got.right, &pair.plain_right, n)
                            })
                            .unwrap_or(false)
                    });
                    if confirms && !survivors.contains(&key) {
                        survivors.push(key);
                    }
                }
            }
            match survivors.len() {
                0 => last = AttackError::ValidationFailed,
                1 => return Ok((survivors.pop().unwrap(), diag)),
                c => last = AttackError::AmbiguousCandidates { count: c },
            }
        }
    }
    Err(last)
}

/// Chosen-plaintext attack on four rounds.
pub fn attack_t4(
    base: &PlainCipherPair,
    chosen: &[PlainCipherPair],
    params: CipherParams,
) -> Result<EquivalentKey, AttackError> {
    attack_t4_detailed(base, chosen, params).map(|(key, _)| key)
}

/// True when the planes 1..=n of both images agree everywhere.
pub fn planes_equal(a: &HalfImage, b: &HalfImage, n: u8) -> bool {
    let mask = (1u16 << n) as u8 - 1;
    a.side() == b.side()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| (x & mask) == (y & mask))
}
