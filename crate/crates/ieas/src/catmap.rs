//! 2x2 integer matrix algebra modulo the image side length.
//!
//! Round permutations scatter pixel (i, j) to C * (i, j)^T mod n, where C
//! is drawn from a four-template family of unimodular matrices. This
//! module solves for C from two observed source/destination pairs,
//! composes recovered matrices, and recognizes whether a matrix modulo n
//! belongs to the template family.

use std::fmt;

/// Errors from modular matrix operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatmapError {
    /// `value` has no inverse modulo `modulus`.
    NotInvertible { value: i64, modulus: i64 },
    /// The cross-determinant of the two source points shares a factor with
    /// the modulus, so two correspondences do not pin the matrix down.
    NonCoprimeDelta { delta: i64, modulus: i64 },
}

impl fmt::Display for CatmapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatmapError::NotInvertible { value, modulus } => {
                write!(f, "{value} is not invertible modulo {modulus}")
            }
            CatmapError::NonCoprimeDelta { delta, modulus } => {
                write!(
                    f,
                    "source points have cross-determinant {delta}, not coprime with {modulus}"
                )
            }
        }
    }
}

impl std::error::Error for CatmapError {}

/// A 2x2 integer matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mat2(pub [[i64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1, 0], [0, 1]]);

    pub fn new(s: i64, u: i64, v: i64, t: i64) -> Mat2 {
        Mat2([[s, u], [v, t]])
    }

    pub fn det(&self) -> i64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// Entry-wise reduction into [0, n).
    pub fn reduce(&self, n: i64) -> Mat2 {
        Mat2(self.0.map(|row| row.map(|e| e.rem_euclid(n))))
    }

    /// Matrix product self * rhs, unreduced.
    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    /// Maps a grid point: C * (i, j)^T mod n.
    pub fn apply(&self, p: (usize, usize), n: usize) -> (usize, usize) {
        let m = n as i64;
        let (i, j) = (p.0 as i64, p.1 as i64);
        let di = (self.0[0][0] * i + self.0[0][1] * j).rem_euclid(m);
        let dj = (self.0[1][0] * i + self.0[1][1] * j).rem_euclid(m);
        (di as usize, dj as usize)
    }

    /// Inverse modulo n; requires gcd(det, n) = 1.
    pub fn inverse_mod(&self, n: i64) -> Result<Mat2, CatmapError> {
        let dinv = mod_inverse(self.det(), n)?;
        Ok(Mat2([
            [self.0[1][1] * dinv, -self.0[0][1] * dinv],
            [-self.0[1][0] * dinv, self.0[0][0] * dinv],
        ])
        .reduce(n))
    }

    /// True if any entry is congruent to 1 modulo n.
    pub fn has_unit_entry_mod(&self, n: i64) -> bool {
        self.0.iter().flatten().any(|&e| e.rem_euclid(n) == 1)
    }
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            self.0[0][0], self.0[0][1], self.0[1][0], self.0[1][1]
        )
    }
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a, 1, 0)
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Multiplicative inverse of x modulo n.
pub fn mod_inverse(x: i64, n: i64) -> Result<i64, CatmapError> {
    let xr = x.rem_euclid(n);
    let (g, inv, _) = ext_gcd(xr, n);
    if g != 1 {
        return Err(CatmapError::NotInvertible {
            value: xr,
            modulus: n,
        });
    }
    Ok(inv.rem_euclid(n))
}

/// Builds the template matrix for a variant with parameters (a, b):
///
/// - variant 0: [[1, a], [b, ab+1]]
/// - variant 1: [[ab+1, a], [b, 1]]
/// - variant 2: [[a, 1], [ab-1, b]]
/// - variant 3: [[a, ab-1], [1, b]]
///
/// Every template has determinant exactly 1. Entries are left unreduced.
pub fn set_form_matrix(variant: u8, a: i64, b: i64) -> Mat2 {
    match variant {
        0 => Mat2::new(1, a, b, a * b + 1),
        1 => Mat2::new(a * b + 1, a, b, 1),
        2 => Mat2::new(a, 1, a * b - 1, b),
        3 => Mat2::new(a, a * b - 1, 1, b),
        _ => panic!("template variant {variant} out of range"),
    }
}

/// Recognizes a matrix modulo n as a template instance, returning
/// (variant, a, b) for the lowest matching variant, or None.
pub fn in_set_form(m: &Mat2, n: i64) -> Option<(u8, i64, i64)> {
    let r = m.reduce(n);
    for variant in 0..4u8 {
        // For each template, (a, b) can be read off two fixed entries.
        let (a, b) = match variant {
            0 | 1 => (r.0[0][1], r.0[1][0]),
            _ => (r.0[0][0], r.0[1][1]),
        };
        if set_form_matrix(variant, a, b).reduce(n) == r {
            return Some((variant, a, b));
        }
    }
    None
}

/// Matrix of "scatter by ca, then by cb": cb * ca mod n.
pub fn compose(ca: &Mat2, cb: &Mat2, n: i64) -> Mat2 {
    cb.mul(ca).reduce(n)
}

/// Solves C from two correspondences p -> q under C * p = q (mod n).
///
/// With p1 = (i1, j1), p2 = (i2, j2), the system is solvable exactly when
/// delta = i1*j2 - i2*j1 is invertible modulo n.
pub fn solve_cat_matrix(
    p1: (usize, usize),
    p2: (usize, usize),
    q1: (usize, usize),
    q2: (usize, usize),
    n: usize,
) -> Result<Mat2, CatmapError> {
    let m = n as i64;
    let (i1, j1) = (p1.0 as i64, p1.1 as i64);
    let (i2, j2) = (p2.0 as i64, p2.1 as i64);
    let (qi1, qj1) = (q1.0 as i64, q1.1 as i64);
    let (qi2, qj2) = (q2.0 as i64, q2.1 as i64);

    let delta = (i1 * j2 - i2 * j1).rem_euclid(m);
    let dinv = match mod_inverse(delta, m) {
        Ok(v) => v,
        Err(_) => {
            return Err(CatmapError::NonCoprimeDelta {
                delta,
                modulus: m,
            })
        }
    };
    let entry = |x: i64| (dinv * x.rem_euclid(m)).rem_euclid(m);
    Ok(Mat2::new(
        entry(qi1 * j2 - qi2 * j1),
        entry(qi2 * i1 - qi1 * i2),
        entry(qj1 * j2 - qj2 * j1),
        entry(qj2 * i1 - qj1 * i2),
    ))
}

/// True iff every entry is at least 2. A product of three templates whose
/// parameters avoid {0, 1} has this property before reduction, while any
/// single template always carries a unit entry, which is what lets the
/// attack tell a composed triple apart from its factors.
pub fn no_ones_in_triple_product(m: &Mat2) -> bool {
    m.0.iter().flatten().all(|&e| e >= 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn mod_inverse_known_values() {
        assert_eq!(mod_inverse(3, 256).unwrap(), 171);
        assert_eq!(mod_inverse(1, 2).unwrap(), 1);
        assert_eq!(mod_inverse(-1, 7).unwrap(), 6);
        assert!(matches!(
            mod_inverse(2, 256),
            Err(CatmapError::NotInvertible { value: 2, modulus: 256 })
        ));
        assert!(mod_inverse(0, 5).is_err());
    }

    #[test]
    fn mod_inverse_roundtrip() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.random_range(2i64..=257);
            let x = rng.random_range(0i64..n);
            if gcd(x, n) == 1 {
                let inv = mod_inverse(x, n).unwrap();
                assert_eq!((x * inv).rem_euclid(n), 1);
            } else {
                assert!(mod_inverse(x, n).is_err());
            }
        }
    }

    #[test]
    fn templates_are_unimodular() {
        let mut rng = StdRng::seed_from_u64(11);
        for variant in 0..4 {
            for _ in 0..200 {
                let a = rng.random_range(0i64..256);
                let b = rng.random_range(0i64..256);
                assert_eq!(set_form_matrix(variant, a, b).det(), 1);
            }
        }
    }

    #[test]
    fn solve_matches_worked_example() {
        let c = solve_cat_matrix((1, 0), (0, 1), (1, 3), (2, 2), 5).unwrap();
        assert_eq!(c, Mat2::new(1, 2, 3, 2));
        // The source matrix [[1, 2], [3, 7]] reduces to the same thing.
        assert_eq!(Mat2::new(1, 2, 3, 7).reduce(5), c);
    }

    #[test]
    fn solve_rejects_non_coprime_sources() {
        // delta = 1*3 - 1*1 = 2 shares a factor with 6
        let err = solve_cat_matrix((1, 1), (1, 3), (0, 0), (0, 0), 6).unwrap_err();
        assert!(matches!(err, CatmapError::NonCoprimeDelta { delta: 2, modulus: 6 }));
    }

    #[test]
    fn solve_recovers_random_templates() {
        let mut rng = StdRng::seed_from_u64(13);
        for &n in &[7usize, 64, 256] {
            for _ in 0..300 {
                let variant = rng.random_range(0u8..4);
                let a = rng.random_range(0i64..256);
                let b = rng.random_range(0i64..256);
                let c = set_form_matrix(variant, a, b);
                let (p1, p2) = loop {
                    let p1 = (rng.random_range(0..n), rng.random_range(0..n));
                    let p2 = (rng.random_range(0..n), rng.random_range(0..n));
                    let delta = (p1.0 * p2.1) as i64 - (p2.0 * p1.1) as i64;
                    if gcd(delta.rem_euclid(n as i64), n as i64) == 1 {
                        break (p1, p2);
                    }
                };
                let solved =
                    solve_cat_matrix(p1, p2, c.apply(p1, n), c.apply(p2, n), n).unwrap();
                assert_eq!(solved, c.reduce(n as i64));
            }
        }
    }

    #[test]
    fn compose_matches_worked_example() {
        let c = Mat2::new(1, 1, 1, 2);
        assert_eq!(compose(&c, &c, 100), Mat2::new(2, 3, 3, 5));
    }

    #[test]
    fn compose_is_associative() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(2i64..=256);
            let mut m = || {
                Mat2::new(
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                )
            };
            let (a, b, c) = (m(), m(), m());
            let left = compose(&compose(&a, &b, n), &c, n);
            let right = compose(&a, &compose(&b, &c, n), n);
            assert_eq!(left, right);
        }
    }

    #[test]
    fn compose_acts_like_sequential_application() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..100 {
            let n = rng.random_range(2usize..=64);
            let ca = set_form_matrix(rng.random_range(0..4), rng.random_range(0..256), rng.random_range(0..256));
            let cb = set_form_matrix(rng.random_range(0..4), rng.random_range(0..256), rng.random_range(0..256));
            let p = (rng.random_range(0..n), rng.random_range(0..n));
            let both = compose(&ca, &cb, n as i64);
            assert_eq!(cb.apply(ca.apply(p, n), n), both.apply(p, n));
        }
    }

    #[test]
    fn set_form_recognition() {
        assert_eq!(in_set_form(&Mat2::new(1, 2, 3, 7), 11), Some((0, 2, 3)));
        assert_eq!(in_set_form(&Mat2::new(2, 2, 2, 2), 101), None);
        // Identity matches variant 0 with a = b = 0.
        assert_eq!(in_set_form(&Mat2::IDENTITY, 64), Some((0, 0, 0)));
    }

    #[test]
    fn set_form_roundtrips_for_all_variants() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..400 {
            let n = rng.random_range(2i64..=256);
            let variant = rng.random_range(0u8..4);
            let a = rng.random_range(0i64..256);
            let b = rng.random_range(0i64..256);
            let m = set_form_matrix(variant, a, b).reduce(n);
            let (rv, ra, rb) = in_set_form(&m, n).expect("template instance must be recognized");
            assert_eq!(set_form_matrix(rv, ra, rb).reduce(n), m);
        }
    }

    #[test]
    fn triple_product_has_no_unit_entries() {
        let m = Mat2::new(1, 2, 2, 5);
        let cube = m.mul(&m).mul(&m);
        assert_eq!(cube, Mat2::new(29, 70, 70, 169));
        assert!(no_ones_in_triple_product(&cube));
        assert!(!no_ones_in_triple_product(&Mat2::IDENTITY));

        let mut rng = StdRng::seed_from_u64(29);
        for _ in 0..300 {
            let mut t = || {
                set_form_matrix(
                    rng.random_range(0..4),
                    rng.random_range(2i64..256),
                    rng.random_range(2i64..256),
                )
            };
            let triple = t().mul(&t()).mul(&t());
            assert!(no_ones_in_triple_product(&triple));
        }
    }

    #[test]
    fn inverse_mod_roundtrip() {
        let mut rng = StdRng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.random_range(2i64..=256);
            let m = set_form_matrix(rng.random_range(0..4), rng.random_range(0..256), rng.random_range(0..256));
            let inv = m.inverse_mod(n).unwrap();
            assert_eq!(m.mul(&inv).reduce(n), Mat2::IDENTITY.reduce(n));
            assert_eq!(inv.mul(&m).reduce(n), Mat2::IDENTITY.reduce(n));
        }
    }

    #[test]
    fn unit_entry_detection() {
        assert!(Mat2::new(0, 65, 2, 3).has_unit_entry_mod(64));
        assert!(!Mat2::new(0, 66, 2, 3).has_unit_entry_mod(64));
    }
}
