//! Batch front end: key-schedule dumps, encryption, decryption, the
//! differential attacks, chosen-image construction, recovery, and the
//! analysis reports.
//!
//! Exit codes: 0 success, 2 usage error, 3 attack failure (matching or
//! ambiguity), 4 I/O or format error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ieas::analysis::{plane_match_count, sensitivity_report, AnalysisError};
use ieas::attack::{
    attack_t1, attack_t2, attack_t3, attack_t4, construct_chosen_t3, construct_chosen_t4,
    recover_image, AttackError, ImageHalf, PlainCipherPair,
};
use ieas::cipher::{decrypt, encrypt, CipherParams};
use ieas::imageio::{
    dump_eqkey, dump_schedule, join_halves, load_eqkey, read_pgm, split_halves, write_pgm,
    Image, ImageIoError,
};
use ieas::keyschedule::{key_schedule, KeyscheduleError, SecretKey};

#[derive(Parser)]
#[command(
    name = "ieas",
    version,
    about = "Chaos-based two-half image cipher and the differential attacks that break it"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive round material from a secret key and print or dump it.
    Schedule {
        /// Initial value in (0, 1), decimal or rational p/q.
        #[arg(long, value_parser = parse_k0)]
        k0: f64,
        /// Round count T.
        #[arg(long)]
        rounds: u32,
        /// Half-image side N.
        #[arg(long)]
        side: usize,
        /// Write the dump here instead of stdout.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Encrypt a PGM image (N rows by 2N columns).
    Encrypt(CryptoArgs),
    /// Decrypt a PGM image.
    Decrypt(CryptoArgs),
    /// Recover an equivalent key from plain/cipher image pairs.
    Attack {
        /// Attacked round count.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4))]
        rounds: u32,
        /// Substitution multiplier A; must be even.
        #[arg(long)]
        a: u8,
        /// Comma-separated plain:cipher PGM path pairs. For three rounds,
        /// list the b base pairs first and then the b - 1 chosen pairs;
        /// for four rounds, the base pair first and the chosen pairs after.
        #[arg(long, value_delimiter = ',', required = true)]
        pairs: Vec<String>,
        /// Write the equivalent key here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build chosen plain-images for the attacks.
    Chosen {
        #[command(subcommand)]
        command: ChosenCommand,
    },
    /// Decrypt a ciphertext with a recovered equivalent key.
    Recover {
        /// Equivalent-key file from `attack`.
        #[arg(long)]
        eqkey: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write an image of the per-half plane-validity masks.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Report which cipher planes react to one flipped plaintext bit.
    Sensitivity {
        #[arg(long, value_parser = parse_k0)]
        k0: f64,
        #[arg(long)]
        rounds: u32,
        #[arg(long)]
        a: u8,
        #[arg(long = "in")]
        input: PathBuf,
        /// Flip position as row,col,plane with plane 1 the least
        /// significant.
        #[arg(long, value_parser = parse_pos)]
        pos: (usize, usize, u8),
    },
    /// Print the per-plane fraction of matching bits of two images.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

#[derive(clap::Args)]
struct CryptoArgs {
    #[arg(long, value_parser = parse_k0)]
    k0: f64,
    #[arg(long)]
    rounds: u32,
    #[arg(long)]
    a: u8,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ChosenCommand {
    /// Join the left half of image A with the right half of image B.
    T3 {
        #[arg(long)]
        img_a: PathBuf,
        #[arg(long)]
        img_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Xor two values into two pixels of one half of a base image.
    T4 {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, value_enum)]
        half: HalfArg,
        /// First pixel as i,j within the half.
        #[arg(long, value_parser = parse_cell)]
        p1: (usize, usize),
        /// Second pixel as i,j within the half.
        #[arg(long, value_parser = parse_cell)]
        p2: (usize, usize),
        #[arg(long)]
        alpha: u8,
        #[arg(long)]
        beta: u8,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum HalfArg {
    Left,
    Right,
}

fn parse_k0(s: &str) -> Result<f64, String> {
    if let Some((p, q)) = s.split_once('/') {
        let p: u64 = p.trim().parse().map_err(|_| format!("bad numerator {p:?}"))?;
        let q: u64 = q.trim().parse().map_err(|_| format!("bad denominator {q:?}"))?;
        if q == 0 {
            return Err("denominator is zero".into());
        }
        Ok(p as f64 / q as f64)
    } else {
        s.parse::<f64>().map_err(|_| format!("{s:?} is neither a decimal nor p/q"))
    }
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (i, j) = s.split_once(',').ok_or(format!("{s:?} is not i,j"))?;
    Ok((
        i.trim().parse().map_err(|_| format!("bad row in {s:?}"))?,
        j.trim().parse().map_err(|_| format!("bad column in {s:?}"))?,
    ))
}

fn parse_pos(s: &str) -> Result<(usize, usize, u8), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("{s:?} is not row,col,plane"));
    }
    Ok((
        parts[0].trim().parse().map_err(|_| format!("bad row in {s:?}"))?,
        parts[1].trim().parse().map_err(|_| format!("bad column in {s:?}"))?,
        parts[2].trim().parse().map_err(|_| format!("bad plane in {s:?}"))?,
    ))
}

enum CliError {
    Usage(String),
    Attack(AttackError),
    Format(ImageIoError),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Attack(_) => 3,
            CliError::Format(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Attack(e) => write!(f, "{e}"),
            CliError::Format(e) => write!(f, "{e}"),
        }
    }
}

impl From<ImageIoError> for CliError {
    fn from(e: ImageIoError) -> CliError {
        CliError::Format(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Format(ImageIoError::Io(e))
    }
}

impl From<KeyscheduleError> for CliError {
    fn from(e: KeyscheduleError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<AttackError> for CliError {
    fn from(e: AttackError) -> CliError {
        match e {
            AttackError::OddMultiplier { .. }
            | AttackError::SideMismatch
            | AttackError::TooFewPairs { .. }
            | AttackError::MalformedChosen { .. }
            | AttackError::Unsupported { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Attack(e),
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn emit(text: String, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_pairs(specs: &[String]) -> Result<Vec<PlainCipherPair>, CliError> {
    let mut pairs = Vec::with_capacity(specs.len());
    for spec in specs {
        let (plain, cipher) = spec
            .split_once(':')
            .ok_or(CliError::Usage(format!("pair {spec:?} is not plain:cipher")))?;
        let plain = read_pgm(Path::new(plain))?;
        let cipher = read_pgm(Path::new(cipher))?;
        pairs.push(PlainCipherPair::new(&plain, &cipher)?);
    }
    Ok(pairs)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Schedule {
            k0,
            rounds,
            side,
            dump,
        } => {
            let sched = key_schedule(&SecretKey::new(rounds, k0)?, side)?;
            emit(dump_schedule(&sched), dump.as_deref())
        }
        Command::Encrypt(args) => crypto(args, true),
        Command::Decrypt(args) => crypto(args, false),
        Command::Attack {
            rounds,
            a,
            pairs,
            out,
        } => {
            let minimum = match rounds {
                1 | 2 => 2,
                3 => 3,
                _ => 5,
            };
            if pairs.len() < minimum {
                return Err(CliError::Usage(format!(
                    "the {rounds}-round attack needs at least {minimum} pairs, got {}",
                    pairs.len()
                )));
            }
            let pairs = read_pairs(&pairs)?;
            let params = CipherParams::new(a);
            let key = match rounds {
                1 => attack_t1(&pairs, params)?,
                2 => attack_t2(&pairs, params)?,
                3 => {
                    if pairs.len() % 2 == 0 {
                        return Err(CliError::Usage(format!(
                            "the 3-round attack takes b bases then b - 1 chosen pairs, an odd total; got {}",
                            pairs.len()
                        )));
                    }
                    let bases = pairs.len().div_ceil(2);
                    attack_t3(&pairs[..bases], &pairs[bases..], params)?
                }
                _ => attack_t4(&pairs[0], &pairs[1..], params)?,
            };
            emit(dump_eqkey(&key), out.as_deref())
        }
        Command::Chosen { command } => match command {
            ChosenCommand::T3 { img_a, img_b, out } => {
                let a = read_pgm(&img_a)?;
                let b = read_pgm(&img_b)?;
                write_pgm(&out, &construct_chosen_t3(&a, &b)?)?;
                Ok(())
            }
            ChosenCommand::T4 {
                base,
                half,
                p1,
                p2,
                alpha,
                beta,
                out,
            } => {
                let base = read_pgm(&base)?;
                let half = match half {
                    HalfArg::Left => ImageHalf::Left,
                    HalfArg::Right => ImageHalf::Right,
                };
                write_pgm(&out, &construct_chosen_t4(&base, half, p1, p2, alpha, beta)?)?;
                Ok(())
            }
        },
        Command::Recover {
            eqkey,
            input,
            out,
            mask_out,
        } => {
            let key = load_eqkey(&fs::read_to_string(&eqkey)?)?;
            let img = read_pgm(&input)?;
            let (cl, cr) = split_halves(&img);
            let got = recover_image(&cl, &cr, &key)?;
            write_pgm(&out, &join_halves(&got.left, &got.right))?;
            if let Some(path) = mask_out {
                let side = img.side();
                let mut mask = Image::new(side);
                for i in 0..side {
                    for j in 0..side {
                        mask.set(i, j, got.left_mask);
                        mask.set(i, side + j, got.right_mask);
                    }
                }
                write_pgm(&path, &mask)?;
            }
            Ok(())
        }
        Command::Sensitivity {
            k0,
            rounds,
            a,
            input,
            pos,
        } => {
            let img = read_pgm(&input)?;
            let sched = key_schedule(&SecretKey::new(rounds, k0)?, img.side())?;
            let affected =
                sensitivity_report(&sched, CipherParams::new(a), &img, pos.0, pos.1, pos.2)?;
            let list: Vec<String> = affected.iter().map(u8::to_string).collect();
            println!(
                "flip ({}, {}, plane {}) affects planes: {}",
                pos.0,
                pos.1,
                pos.2,
                if list.is_empty() { "none".into() } else { list.join(" ") }
            );
            Ok(())
        }
        Command::Compare { a, b } => {
            let a = read_pgm(&a)?;
            let b = read_pgm(&b)?;
            for (k, ratio) in plane_match_count(&a, &b)?.iter().enumerate() {
                println!("plane {}: {ratio:.6}", k + 1);
            }
            Ok(())
        }
    }
}

fn crypto(args: CryptoArgs, forward: bool) -> Result<(), CliError> {
    let img = read_pgm(&args.input)?;
    let sched = key_schedule(&SecretKey::new(args.rounds, args.k0)?, img.side())?;
    let params = CipherParams::new(args.a);
    let (left, right) = split_halves(&img);
    let (l, r) = if forward {
        encrypt(&left, &right, &sched, params)
    } else {
        decrypt(&left, &right, &sched, params)
    };
    write_pgm(&args.out, &join_halves(&l, &r))?;
    Ok(())
}
