//! Acceptance suite: one test per criterion, each printing a PASS or FAIL
//! line with timing or data-budget notes where those are part of the
//! criterion.

use std::time::{Duration, Instant};

use ieas::analysis::{keyspace_estimate, sensitivity_report};
use ieas::attack::{
    attack_t1, attack_t2, attack_t3, attack_t4_detailed, bitplane_diff, chosen_t4_plan,
    construct_chosen_t3, construct_chosen_t4, planes_equal, predict_differential, recover_image,
    AttackError, EquivalentKey, ImageHalf, Plane, PlainCipherPair,
};
use ieas::catmap;
use ieas::cipher::{
    apply_permutation, chain_combine, decrypt, encrypt, encrypt_trace, CipherParams, HalfImage,
};
use ieas::imageio::{join_halves, split_halves, Image};
use ieas::keyschedule::{key_schedule, KeySchedule, SecretKey};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn report(id: u32, desc: &str, body: impl FnOnce() -> Result<String, String>) {
    match body() {
        Ok(note) => println!("ACCEPTANCE {id}: PASS - {desc}{note}"),
        Err(e) => {
            println!("ACCEPTANCE {id}: FAIL - {desc}: {e}");
            panic!("criterion {id} failed: {e}");
        }
    }
}

fn random_half(rng: &mut StdRng, side: usize) -> HalfImage {
    HalfImage::from_vec(side, (0..side * side).map(|_| rng.random()).collect())
}

fn random_key(rng: &mut StdRng, rounds: u32) -> SecretKey {
    SecretKey::new(rounds, rng.random_range(1e-6..1.0 - 1e-6)).unwrap()
}

fn pair_for(
    left: &HalfImage,
    right: &HalfImage,
    sched: &KeySchedule,
    params: CipherParams,
) -> PlainCipherPair {
    let (cl, cr) = encrypt(left, right, sched, params);
    PlainCipherPair::from_halves(left.clone(), right.clone(), cl, cr)
}

fn encrypt_pair(rng: &mut StdRng, sched: &KeySchedule, params: CipherParams) -> PlainCipherPair {
    let left = random_half(rng, sched.side());
    let right = random_half(rng, sched.side());
    pair_for(&left, &right, sched, params)
}

#[test]
fn criterion_1_round_trip() {
    report(1, "decrypt inverts encrypt for 50 random keys and images", || {
        let mut rng = StdRng::seed_from_u64(1001);
        let start = Instant::now();
        for case in 0..50 {
            let rounds = rng.random_range(1..=5);
            let params = CipherParams::new([1u8, 64, 128][case % 3]);
            let sched = key_schedule(&random_key(&mut rng, rounds), 32).unwrap();
            let left = random_half(&mut rng, 32);
            let right = random_half(&mut rng, 32);
            let (cl, cr) = encrypt(&left, &right, &sched, params);
            let (l, r) = decrypt(&cl, &cr, &sched, params);
            ensure!(
                l == left && r == right,
                "case {case} (T = {rounds}, A = {}) did not round-trip",
                params.a
            );
        }
        let elapsed = start.elapsed();
        ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}, limit 10 s");
        Ok(format!(" ({} ms)", elapsed.as_millis()))
    });
}

#[test]
fn criterion_2_low_planes_are_linear() {
    report(2, "the substitution preserves low planes; rounds obey the linear model", || {
        for a in [2u8, 4, 8, 16, 32, 64, 128] {
            let n = CipherParams::new(a).plane_budget();
            let mask = (1u16 << n) as u8 - 1;
            for x in 0..=255u8 {
                for y in 0..=255u8 {
                    ensure!(
                        chain_combine(x, y, a) & mask == x & mask,
                        "A = {a}: g({x}, {y}) changed a low plane"
                    );
                }
            }
        }

        let mut rng = StdRng::seed_from_u64(1002);
        let params = CipherParams::new(64);
        for case in 0..20 {
            let rounds = rng.random_range(1..=4);
            let sched = key_schedule(&random_key(&mut rng, rounds), 8).unwrap();
            let left = random_half(&mut rng, 8);
            let right = random_half(&mut rng, 8);
            let (_, trace) = encrypt_trace(&left, &right, &sched, params);
            let mut prev = (left, right);
            for (round, state) in trace.iter().enumerate() {
                let (l, r) = state;
                ensure!(
                    *r == sched.mask(round).xor(&prev.0),
                    "case {case} round {round}: R is not mask xor previous L"
                );
                let permuted = apply_permutation(r, sched.perm(round));
                for k in 1..=6u8 {
                    let expect = Plane::from_half(&prev.1, k)
                        .xor(&Plane::from_half(&permuted, k));
                    ensure!(
                        Plane::from_half(l, k) == expect,
                        "case {case} round {round}: plane {k} of L breaks the linear model"
                    );
                }
                prev = state.clone();
            }
        }
        Ok(String::new())
    });
}

#[test]
fn criterion_3_differential_prediction() {
    report(3, "predicted differentials equal observed ones for 100 random pairs", || {
        let mut rng = StdRng::seed_from_u64(1003);
        let params = CipherParams::new(64);
        let n = params.plane_budget();
        for rounds in 1u32..=4 {
            let sched = key_schedule(&random_key(&mut rng, rounds), 16).unwrap();
            for case in 0..25 {
                let a = encrypt_pair(&mut rng, &sched, params);
                let b = encrypt_pair(&mut rng, &sched, params);
                let (pl, pr) = predict_differential(
                    &bitplane_diff(&a.plain_left, &b.plain_left, n),
                    &bitplane_diff(&a.plain_right, &b.plain_right, n),
                    sched.perms(),
                );
                ensure!(
                    pl == bitplane_diff(&a.cipher_left, &b.cipher_left, n)
                        && pr == bitplane_diff(&a.cipher_right, &b.cipher_right, n),
                    "T = {rounds} case {case}: prediction disagrees with the cipher"
                );
            }
        }
        Ok(String::new())
    });
}

#[test]
fn criterion_4_matrix_solver() {
    report(4, "two spanning correspondences recover the matrix, 1000 cases", || {
        let mut rng = StdRng::seed_from_u64(1004);
        for case in 0..1000 {
            let side = [7usize, 64, 256][case % 3];
            let n = side as i64;
            let truth = catmap::set_form_matrix(
                rng.random_range(0..4),
                rng.random_range(0..256),
                rng.random_range(0..256),
            )
            .reduce(n);
            let (p1, p2) = loop {
                let p1 = (rng.random_range(0..side), rng.random_range(0..side));
                let p2 = (rng.random_range(0..side), rng.random_range(0..side));
                let delta =
                    (p1.0 as i64 * p2.1 as i64 - p2.0 as i64 * p1.1 as i64).rem_euclid(n);
                if catmap::gcd(delta, n) == 1 {
                    break (p1, p2);
                }
            };
            let solved = catmap::solve_cat_matrix(
                p1,
                p2,
                truth.apply(p1, side),
                truth.apply(p2, side),
                side,
            )
            .map_err(|e| format!("case {case}: {e}"))?;
            ensure!(solved == truth, "case {case}: {solved} != {truth} mod {side}");
        }
        Ok(String::new())
    });
}

/// Grows the buffer of known pairs one at a time, as the criterion allows,
/// until the matcher finds spanning unique signatures.
fn attack_with_retries(
    pool: &[PlainCipherPair],
    start: usize,
    params: CipherParams,
    attack: impl Fn(&[PlainCipherPair], CipherParams) -> Result<EquivalentKey, AttackError>,
) -> Result<(EquivalentKey, usize), String> {
    let mut used = start;
    loop {
        match attack(&pool[..used], params) {
            Ok(key) => return Ok((key, used)),
            Err(AttackError::InsufficientMatches { .. }) if used < pool.len() => used += 1,
            Err(e) => return Err(e.to_string()),
        }
    }
}

fn budget_note(used: &[usize]) -> String {
    let min = used.iter().min().unwrap();
    let max = used.iter().max().unwrap();
    format!(" (plain-images per key: {min}..{max})")
}

#[test]
fn criterion_5_one_round_attack() {
    report(5, "one-round attack recovers the left half and right planes 1..6", || {
        let mut rng = StdRng::seed_from_u64(1005);
        let params = CipherParams::new(64);
        let mut used_counts = Vec::new();
        for case in 0..20 {
            let start = Instant::now();
            let sched = key_schedule(&random_key(&mut rng, 1), 64).unwrap();
            let pool: Vec<PlainCipherPair> =
                (0..8).map(|_| encrypt_pair(&mut rng, &sched, params)).collect();
            let (key, used) = attack_with_retries(&pool, 2, params, attack_t1)
                .map_err(|e| format!("key {case}: {e}"))?;
            used_counts.push(used);

            let target = encrypt_pair(&mut rng, &sched, params);
            let got = recover_image(&target.cipher_left, &target.cipher_right, &key)
                .map_err(|e| format!("key {case}: {e}"))?;
            ensure!(got.left == target.plain_left, "key {case}: left half not exact");
            ensure!(
                planes_equal(&got.right, &target.plain_right, 6),
                "key {case}: right planes 1..6 not exact"
            );
            let elapsed = start.elapsed();
            ensure!(elapsed < Duration::from_secs(5), "key {case} took {elapsed:?}");
        }
        Ok(budget_note(&used_counts))
    });
}

#[test]
fn criterion_6_two_round_attack() {
    report(6, "two-round attack recovers planes 1..6 of both halves", || {
        let mut rng = StdRng::seed_from_u64(1006);
        let params = CipherParams::new(64);
        let mut used_counts = Vec::new();
        for case in 0..20 {
            let start = Instant::now();
            let sched = key_schedule(&random_key(&mut rng, 2), 64).unwrap();
            let pool: Vec<PlainCipherPair> =
                (0..8).map(|_| encrypt_pair(&mut rng, &sched, params)).collect();
            let (key, used) = attack_with_retries(&pool, 2, params, attack_t2)
                .map_err(|e| format!("key {case}: {e}"))?;
            used_counts.push(used);

            let target = encrypt_pair(&mut rng, &sched, params);
            let got = recover_image(&target.cipher_left, &target.cipher_right, &key)
                .map_err(|e| format!("key {case}: {e}"))?;
            ensure!(
                planes_equal(&got.left, &target.plain_left, 6)
                    && planes_equal(&got.right, &target.plain_right, 6),
                "key {case}: planes 1..6 not exact"
            );
            let elapsed = start.elapsed();
            ensure!(elapsed < Duration::from_secs(5), "key {case} took {elapsed:?}");
        }
        Ok(budget_note(&used_counts))
    });
}

#[test]
fn criterion_7_three_round_attack() {
    report(7, "three-round attack with half-swapped chosen images recovers planes 1..6", || {
        let mut rng = StdRng::seed_from_u64(1007);
        let params = CipherParams::new(64);
        let mut used_counts = Vec::new();
        for case in 0..20 {
            let start = Instant::now();
            let sched = key_schedule(&random_key(&mut rng, 3), 64).unwrap();
            let base_images: Vec<Image> = (0..6)
                .map(|_| join_halves(&random_half(&mut rng, 64), &random_half(&mut rng, 64)))
                .collect();
            let encrypt_image = |img: &Image| {
                let (l, r) = split_halves(img);
                pair_for(&l, &r, &sched, params)
            };
            let bases: Vec<PlainCipherPair> = base_images.iter().map(encrypt_image).collect();
            let chosen: Vec<PlainCipherPair> = base_images[1..]
                .iter()
                .map(|b| {
                    encrypt_image(&construct_chosen_t3(&base_images[0], b).unwrap())
                })
                .collect();

            let mut b = 2;
            let (key, used) = loop {
                match attack_t3(&bases[..b], &chosen[..b - 1], params) {
                    Ok(key) => break (key, 2 * b - 1),
                    Err(AttackError::InsufficientMatches { .. }) if b < bases.len() => b += 1,
                    Err(e) => return Err(format!("key {case}: {e}")),
                }
            };
            used_counts.push(used);

            let target = encrypt_pair(&mut rng, &sched, params);
            let got = recover_image(&target.cipher_left, &target.cipher_right, &key)
                .map_err(|e| format!("key {case}: {e}"))?;
            ensure!(
                planes_equal(&got.left, &target.plain_left, 6)
                    && planes_equal(&got.right, &target.plain_right, 6),
                "key {case}: planes 1..6 not exact"
            );
            let elapsed = start.elapsed();
            ensure!(elapsed < Duration::from_secs(5), "key {case} took {elapsed:?}");
        }
        Ok(budget_note(&used_counts))
    });
}

fn clean_t4_schedule(rng: &mut StdRng, side: usize) -> KeySchedule {
    loop {
        let sched = key_schedule(&random_key(rng, 4), side).unwrap();
        let clean = sched.matrices().iter().all(|c| {
            let (a, b) = (c.a() as i64 % side as i64, c.b() as i64 % side as i64);
            a > 1 && b > 1
        });
        if clean {
            return sched;
        }
    }
}

#[test]
fn criterion_8_four_round_attack() {
    report(8, "four-round attack from two-pixel chosen images, candidate sets within 6", || {
        let mut rng = StdRng::seed_from_u64(1008);
        let side = 64;
        let mut used_counts = Vec::new();
        for a in [64u8, 128] {
            let params = CipherParams::new(a);
            let n = params.plane_budget();
            for case in 0..20 {
                let start = Instant::now();
                let sched = clean_t4_schedule(&mut rng, side);
                let base_left = random_half(&mut rng, side);
                let base_right = random_half(&mut rng, side);
                let base_image = join_halves(&base_left, &base_right);
                let base = pair_for(&base_left, &base_right, &sched, params);

                let chosen_for = |attempt: usize| {
                    let (p1, p2, alpha, beta) = chosen_t4_plan(attempt);
                    [ImageHalf::Right, ImageHalf::Left].map(|half| {
                        let img =
                            construct_chosen_t4(&base_image, half, p1, p2, alpha, beta).unwrap();
                        let (l, r) = split_halves(&img);
                        pair_for(&l, &r, &sched, params)
                    })
                };
                let mut chosen: Vec<PlainCipherPair> = Vec::new();
                chosen.extend(chosen_for(0));
                chosen.extend(chosen_for(1));
                let (key, diag) = loop {
                    match attack_t4_detailed(&base, &chosen, params) {
                        Ok(result) => break result,
                        Err(e) => {
                            let attempt = chosen.len() / 2;
                            if attempt >= 6 {
                                return Err(format!("A = {a} key {case}: {e}"));
                            }
                            chosen.extend(chosen_for(attempt));
                        }
                    }
                };
                used_counts.push(chosen.len() + 1);
                ensure!(
                    diag.right_candidates <= 6 && diag.left_candidates <= 6,
                    "A = {a} key {case}: candidate sets {diag:?} exceed 6"
                );

                let target = encrypt_pair(&mut rng, &sched, params);
                let got = recover_image(&target.cipher_left, &target.cipher_right, &key)
                    .map_err(|e| format!("A = {a} key {case}: {e}"))?;
                ensure!(
                    planes_equal(&got.left, &target.plain_left, n)
                        && planes_equal(&got.right, &target.plain_right, n),
                    "A = {a} key {case}: planes 1..{n} not exact"
                );
                let elapsed = start.elapsed();
                ensure!(elapsed < Duration::from_secs(5), "A = {a} key {case} took {elapsed:?}");
            }
        }
        Ok(budget_note(&used_counts))
    });
}

#[test]
fn criterion_9_sensitivity_sweep() {
    report(9, "single-bit influence is upward-only and plane-preserving below plane 7", || {
        let mut rng = StdRng::seed_from_u64(1009);
        let params = CipherParams::new(64);
        for rounds in 1u32..=4 {
            let sched = key_schedule(&random_key(&mut rng, rounds), 8).unwrap();
            let image = Image::from_vec(8, (0..128).map(|_| rng.random()).collect());
            for row in 0..8 {
                for col in 0..16 {
                    for plane in 1..=8u8 {
                        let affected =
                            sensitivity_report(&sched, params, &image, row, col, plane)
                                .map_err(|e| e.to_string())?;
                        ensure!(
                            affected.iter().all(|&k| k >= plane),
                            "T = {rounds} flip ({row}, {col}, {plane}): downward influence {affected:?}"
                        );
                        ensure!(
                            affected.iter().all(|&k| k > 6 || k == plane),
                            "T = {rounds} flip ({row}, {col}, {plane}): plane leak {affected:?}"
                        );
                    }
                }
            }
        }
        Ok(String::new())
    });
}

#[test]
fn criterion_10_key_space() {
    report(10, "effective key-space estimates hit the published anchors", || {
        ensure!(keyspace_estimate(32, 16) == 36.0, "(32, 16) gave {}", keyspace_estimate(32, 16));
        ensure!(keyspace_estimate(64, 16) == 68.0, "(64, 16) gave {}", keyspace_estimate(64, 16));
        Ok(String::new())
    });
}

