//! Persistence: binary PGM images, half splitting and joining, and the
//! plain-text dump formats for key schedules and equivalent keys.
//!
//! Parsers reject malformed input with line-numbered messages instead of
//! coercing it; load of a dump is the exact inverse of the dump.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::attack::{
    BitPlaneStack, EquivalentKey, LeftAggregate, Plane, RecoveredPermutation,
};
use crate::catmap::{set_form_matrix, Mat2};
use crate::cipher::HalfImage;
use crate::keyschedule::{CatMatrix, KeySchedule, PermutationMap};

/// A full image of side N: N rows by 2N columns, row-major bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    side: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(side: usize) -> Image {
        Image {
            side,
            data: vec![0; 2 * side * side],
        }
    }

    pub fn from_vec(side: usize, data: Vec<u8>) -> Image {
        assert_eq!(data.len(), 2 * side * side, "data does not fill {side} x {} pixels", 2 * side);
        Image { side, data }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn height(&self) -> usize {
        self.side
    }

    pub fn width(&self) -> usize {
        2 * self.side
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.width() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: u8) {
        let w = self.width();
        self.data[i * w + j] = value;
    }
}

/// Left half is columns 0..N, right half is columns N..2N.
pub fn split_halves(img: &Image) -> (HalfImage, HalfImage) {
    let n = img.side();
    let mut left = vec![0u8; n * n];
    let mut right = vec![0u8; n * n];
    for i in 0..n {
        for j in 0..n {
            left[i * n + j] = img.get(i, j);
            right[i * n + j] = img.get(i, n + j);
        }
    }
    (HalfImage::from_vec(n, left), HalfImage::from_vec(n, right))
}

/// Inverse of `split_halves`.
pub fn join_halves(left: &HalfImage, right: &HalfImage) -> Image {
    assert_eq!(left.side(), right.side(), "halves have different sides");
    let n = left.side();
    let mut img = Image::new(n);
    for i in 0..n {
        for j in 0..n {
            img.set(i, j, left.get(i, j));
            img.set(i, n + j, right.get(i, j));
        }
    }
    img
}

#[derive(Debug)]
pub enum ImageIoError {
    Io(std::io::Error),
    Format { line: usize, message: String },
}

impl fmt::Display for ImageIoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageIoError::Io(e) => write!(f, "{e}"),
            ImageIoError::Format { line, message } => write!(f, "line {line}: {message}"),
        }
    }
}

impl std::error::Error for ImageIoError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ImageIoError::Io(e) => Some(e),
            ImageIoError::Format { .. } => None,
        }
    }
}

impl From<std::io::Error> for ImageIoError {
    fn from(e: std::io::Error) -> ImageIoError {
        ImageIoError::Io(e)
    }
}

fn format_err<T>(line: usize, message: impl Into<String>) -> Result<T, ImageIoError> {
    Err(ImageIoError::Format {
        line,
        message: message.into(),
    })
}

struct HeaderScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> HeaderScanner<'a> {
    fn new(bytes: &'a [u8]) -> HeaderScanner<'a> {
        HeaderScanner {
            bytes,
            pos: 0,
            line: 1,
        }
    }

    fn skip_filler(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'\n' => {
                    self.line += 1;
                    self.pos += 1;
                }
                b' ' | b'\t' | b'\r' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<(String, usize), ImageIoError> {
        self.skip_filler();
        if self.pos >= self.bytes.len() {
            return format_err(self.line, format!("unexpected end of header, wanted {what}"));
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let tok = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
        Ok((tok, self.line))
    }

    fn number(&mut self, what: &str) -> Result<(usize, usize), ImageIoError> {
        let (tok, line) = self.token(what)?;
        match tok.parse::<usize>() {
            Ok(v) => Ok((v, line)),
            Err(_) => format_err(line, format!("{what} is not a number: {tok:?}")),
        }
    }
}

/// Parses a binary PGM with maxval 255 and width twice the height.
pub fn parse_pgm(bytes: &[u8]) -> Result<Image, ImageIoError> {
    let mut scan = HeaderScanner::new(bytes);
    let (magic, line) = scan.token("the magic number")?;
    if magic != "P5" {
        return format_err(line, format!("not a binary PGM, magic is {magic:?}"));
    }
    let (width, wline) = scan.number("the width")?;
    let (height, _) = scan.number("the height")?;
    let (maxval, mline) = scan.number("the maxval")?;
    if maxval != 255 {
        return format_err(mline, format!("maxval must be 255, got {maxval}"));
    }
    if height == 0 || width != 2 * height {
        return format_err(
            wline,
            format!("image must be N rows by 2N columns, got {width} x {height}"),
        );
    }
    if scan.pos >= bytes.len() || !bytes[scan.pos].is_ascii_whitespace() {
        return format_err(mline, "expected a single whitespace byte after the maxval");
    }
    if bytes[scan.pos] == b'\n' {
        scan.line += 1;
    }
    scan.pos += 1;
    let raster = &bytes[scan.pos..];
    let expected = width * height;
    if raster.len() < expected {
        return format_err(
            scan.line,
            format!("raster truncated: expected {expected} bytes, found {}", raster.len()),
        );
    }
    if raster.len() > expected {
        return format_err(
            scan.line,
            format!("{} trailing bytes after the raster", raster.len() - expected),
        );
    }
    Ok(Image::from_vec(height, raster.to_vec()))
}

/// Canonical encoding: "P5\n<w> <h>\n255\n" followed by the raw rows.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn read_pgm(path: &Path) -> Result<Image, ImageIoError> {
    parse_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: &Path, img: &Image) -> Result<(), ImageIoError> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

struct TextScanner<'a> {
    lines: Vec<&'a str>,
    next: usize,
}

impl<'a> TextScanner<'a> {
    fn new(text: &'a str) -> TextScanner<'a> {
        TextScanner {
            lines: text.lines().collect(),
            next: 0,
        }
    }

    /// Next nonempty line with its 1-based number.
    fn line(&mut self, what: &str) -> Result<(usize, &'a str), ImageIoError> {
        while self.next < self.lines.len() {
            let number = self.next + 1;
            let text = self.lines[self.next].trim();
            self.next += 1;
            if !text.is_empty() {
                return Ok((number, text));
            }
        }
        format_err(self.lines.len() + 1, format!("unexpected end of file, wanted {what}"))
    }

    fn expect(&mut self, literal: &str) -> Result<(), ImageIoError> {
        let (number, text) = self.line(&format!("{literal:?}"))?;
        if text != literal {
            return format_err(number, format!("expected {literal:?}, got {text:?}"));
        }
        Ok(())
    }

    fn at_end(&mut self) -> bool {
        while self.next < self.lines.len() {
            if !self.lines[self.next].trim().is_empty() {
                return false;
            }
            self.next += 1;
        }
        true
    }
}

fn parse_field<T: FromStr>(tok: &str, line: usize, what: &str) -> Result<T, ImageIoError> {
    tok.parse::<T>()
        .or_else(|_| format_err(line, format!("{what} is not valid: {tok:?}")))
}

fn fields<'a>(
    text: &'a str,
    line: usize,
    keyword: &str,
    count: usize,
) -> Result<Vec<&'a str>, ImageIoError> {
    let mut parts = text.split_whitespace();
    if parts.next() != Some(keyword) {
        return format_err(line, format!("expected a {keyword} line, got {text:?}"));
    }
    let rest: Vec<&str> = parts.collect();
    if rest.len() != count {
        return format_err(
            line,
            format!("{keyword} line needs {count} fields, got {}", rest.len()),
        );
    }
    Ok(rest)
}

fn indexed_value<T: FromStr>(
    scan: &mut TextScanner<'_>,
    keyword: &str,
    index: usize,
) -> Result<T, ImageIoError> {
    let (line, text) = scan.line(keyword)?;
    let f = fields(text, line, keyword, 2)?;
    let l: usize = parse_field(f[0], line, "the index")?;
    if l != index {
        return format_err(line, format!("expected {keyword} {index}, got {keyword} {l}"));
    }
    parse_field(f[1], line, "the value")
}

fn byte_rows(
    scan: &mut TextScanner<'_>,
    side: usize,
    max: u16,
    what: &str,
) -> Result<Vec<u8>, ImageIoError> {
    let mut out = Vec::with_capacity(side * side);
    for _ in 0..side {
        let (line, text) = scan.line(what)?;
        let cells: Vec<&str> = text.split_whitespace().collect();
        if cells.len() != side {
            return format_err(line, format!("{what} row needs {side} entries, got {}", cells.len()));
        }
        for cell in cells {
            let v: u16 = parse_field(cell, line, what)?;
            if v > max {
                return format_err(line, format!("{what} entry {v} exceeds {max}"));
            }
            out.push(v as u8);
        }
    }
    Ok(out)
}

/// Serializes a key schedule: header, quantized states K, expanded states
/// KSTAR, matrix lines C, destination tables P, and mask tables V.
pub fn dump_schedule(sched: &KeySchedule) -> String {
    let side = sched.side();
    let mut out = String::new();
    out.push_str("SCHEDULE v1\n");
    out.push_str(&format!("ROUNDS {}\n", sched.rounds()));
    out.push_str(&format!("SIDE {side}\n"));
    for (l, v) in sched.k().iter().enumerate() {
        out.push_str(&format!("K {l} {v}\n"));
    }
    for (l, v) in sched.kstar().iter().enumerate() {
        out.push_str(&format!("KSTAR {l} {v}\n"));
    }
    for (l, c) in sched.matrices().iter().enumerate() {
        let m = c.matrix();
        out.push_str(&format!(
            "C {l} {} {} {} {} {} {} {}\n",
            m.0[0][0],
            m.0[0][1],
            m.0[1][0],
            m.0[1][1],
            c.variant(),
            c.a(),
            c.b()
        ));
    }
    for (l, p) in sched.perms().iter().enumerate() {
        out.push_str(&format!("P {l}\n"));
        for i in 0..side {
            let row: Vec<String> = (0..side)
                .map(|j| {
                    let (di, dj) = p.dest_of(i, j);
                    format!("{di},{dj}")
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    for (l, mask) in sched.masks().iter().enumerate() {
        out.push_str(&format!("V {l}\n"));
        for i in 0..side {
            let row: Vec<String> = (0..side).map(|j| mask.get(i, j).to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out.push_str("END\n");
    out
}

/// Inverse of `dump_schedule`; validates counts, indices, bijectivity, and
/// the agreement of every matrix line with its variant and parameters.
pub fn load_schedule(text: &str) -> Result<KeySchedule, ImageIoError> {
    let mut scan = TextScanner::new(text);
    scan.expect("SCHEDULE v1")?;
    let rounds: u32 = indexed_header(&mut scan, "ROUNDS")?;
    let side: usize = indexed_header(&mut scan, "SIDE")?;
    let t = rounds as usize;

    let mut k = Vec::with_capacity(t + 2);
    for l in 0..t + 2 {
        k.push(indexed_value::<u32>(&mut scan, "K", l)?);
    }
    let mut kstar = Vec::with_capacity(t + 2);
    for l in 0..t + 2 {
        kstar.push(indexed_value::<u64>(&mut scan, "KSTAR", l)?);
    }

    let mut matrices = Vec::with_capacity(t);
    for l in 0..t {
        let (line, text) = scan.line("a C line")?;
        let f = fields(text, line, "C", 8)?;
        let idx: usize = parse_field(f[0], line, "the index")?;
        if idx != l {
            return format_err(line, format!("expected C {l}, got C {idx}"));
        }
        let entries: [i64; 4] = [
            parse_field(f[1], line, "a matrix entry")?,
            parse_field(f[2], line, "a matrix entry")?,
            parse_field(f[3], line, "a matrix entry")?,
            parse_field(f[4], line, "a matrix entry")?,
        ];
        let variant: u8 = parse_field(f[5], line, "the variant")?;
        let a: u32 = parse_field(f[6], line, "parameter a")?;
        let b: u32 = parse_field(f[7], line, "parameter b")?;
        if variant > 3 {
            return format_err(line, format!("variant {variant} outside 0..=3"));
        }
        let stored = Mat2::new(entries[0], entries[1], entries[2], entries[3]);
        if set_form_matrix(variant, a as i64, b as i64) != stored {
            return format_err(line, "matrix entries disagree with variant, a, b");
        }
        matrices.push(CatMatrix::new(variant, a, b));
    }

    let mut perms = Vec::with_capacity(t);
    for (l, mat) in matrices.iter().enumerate() {
        let (line, text) = scan.line("a P line")?;
        let f = fields(text, line, "P", 1)?;
        let idx: usize = parse_field(f[0], line, "the index")?;
        if idx != l {
            return format_err(line, format!("expected P {l}, got P {idx}"));
        }
        let mut pairs = Vec::with_capacity(side * side);
        for _ in 0..side {
            let (row_line, row) = scan.line("a destination row")?;
            let cells: Vec<&str> = row.split_whitespace().collect();
            if cells.len() != side {
                return format_err(
                    row_line,
                    format!("destination row needs {side} entries, got {}", cells.len()),
                );
            }
            for cell in cells {
                let (di, dj) = cell.split_once(',').ok_or(ImageIoError::Format {
                    line: row_line,
                    message: format!("destination {cell:?} is not i,j"),
                })?;
                pairs.push((
                    parse_field::<usize>(di, row_line, "a destination row index")?,
                    parse_field::<usize>(dj, row_line, "a destination column index")?,
                ));
            }
        }
        let map = PermutationMap::from_dest_pairs(side, &pairs)
            .or_else(|e| format_err(line, format!("P {l} is not a bijection: {e}")))?;
        let expected = PermutationMap::from_matrix(&mat.matrix(), side)
            .or_else(|e| format_err(line, format!("C {l} is not invertible: {e}")))?;
        if map != expected {
            return format_err(line, format!("P {l} disagrees with C {l}"));
        }
        perms.push(map);
    }

    let mut masks = Vec::with_capacity(t + 2);
    for l in 0..t + 2 {
        let (line, text) = scan.line("a V line")?;
        let f = fields(text, line, "V", 1)?;
        let idx: usize = parse_field(f[0], line, "the index")?;
        if idx != l {
            return format_err(line, format!("expected V {l}, got V {idx}"));
        }
        masks.push(HalfImage::from_vec(
            side,
            byte_rows(&mut scan, side, 255, "a mask")?,
        ));
    }

    scan.expect("END")?;
    if !scan.at_end() {
        return format_err(scan.next + 1, "content after END");
    }
    KeySchedule::from_parts(side, rounds, k, kstar, matrices, perms, masks)
        .or_else(|e| format_err(1, format!("inconsistent schedule: {e}")))
}

fn indexed_header<T: FromStr>(scan: &mut TextScanner<'_>, keyword: &str) -> Result<T, ImageIoError> {
    let (line, text) = scan.line(keyword)?;
    let f = fields(text, line, keyword, 1)?;
    parse_field(f[0], line, keyword)
}

fn dump_plane(out: &mut String, plane: &Plane) {
    let side = plane.side();
    for i in 0..side {
        let row: Vec<String> = (0..side).map(|j| plane.get(i, j).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

/// Serializes an equivalent key: the recovered matrices and both mask
/// aggregates, full left byte matrix for one round, per-plane otherwise.
pub fn dump_eqkey(key: &EquivalentKey) -> String {
    let side = key.side();
    let mut out = String::new();
    out.push_str("EQKEY v1\n");
    out.push_str(&format!("ROUNDS {}\n", key.rounds()));
    out.push_str(&format!("SIDE {side}\n"));
    out.push_str(&format!("PLANES {}\n", key.planes()));
    for (l, p) in key.perms().iter().enumerate() {
        out.push_str(&format!(
            "PERM {l} {} {} {} {}\n",
            p.matrix.0[0][0], p.matrix.0[0][1], p.matrix.0[1][0], p.matrix.0[1][1]
        ));
    }
    match key.left() {
        LeftAggregate::FullByte(m) => {
            out.push_str("LEFT FULL\n");
            for i in 0..side {
                let row: Vec<String> = (0..side).map(|j| m.get(i, j).to_string()).collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        LeftAggregate::Planes(stack) => {
            out.push_str("LEFT PLANES\n");
            for k in 1..=key.planes() {
                out.push_str(&format!("LPLANE {k}\n"));
                dump_plane(&mut out, stack.plane(k));
            }
        }
    }
    for k in 1..=key.planes() {
        out.push_str(&format!("RPLANE {k}\n"));
        dump_plane(&mut out, key.right().plane(k));
    }
    out.push_str("END\n");
    out
}

/// Inverse of `dump_eqkey`.
pub fn load_eqkey(text: &str) -> Result<EquivalentKey, ImageIoError> {
    let mut scan = TextScanner::new(text);
    scan.expect("EQKEY v1")?;
    let rounds: u32 = indexed_header(&mut scan, "ROUNDS")?;
    let side: usize = indexed_header(&mut scan, "SIDE")?;
    let planes: u8 = indexed_header(&mut scan, "PLANES")?;

    let mut perms = Vec::with_capacity(rounds as usize);
    for l in 0..rounds as usize {
        let (line, text) = scan.line("a PERM line")?;
        let f = fields(text, line, "PERM", 5)?;
        let idx: usize = parse_field(f[0], line, "the index")?;
        if idx != l {
            return format_err(line, format!("expected PERM {l}, got PERM {idx}"));
        }
        let matrix = Mat2::new(
            parse_field(f[1], line, "a matrix entry")?,
            parse_field(f[2], line, "a matrix entry")?,
            parse_field(f[3], line, "a matrix entry")?,
            parse_field(f[4], line, "a matrix entry")?,
        );
        let map = PermutationMap::from_matrix(&matrix, side)
            .or_else(|e| format_err(line, format!("PERM {l} is not invertible: {e}")))?;
        perms.push(RecoveredPermutation { matrix, map });
    }

    let (line, text) = scan.line("a LEFT line")?;
    let left = match text {
        "LEFT FULL" => LeftAggregate::FullByte(HalfImage::from_vec(
            side,
            byte_rows(&mut scan, side, 255, "a left aggregate")?,
        )),
        "LEFT PLANES" => {
            let mut stack = Vec::new();
            for k in 1..=planes {
                let (hline, htext) = scan.line("an LPLANE line")?;
                let f = fields(htext, hline, "LPLANE", 1)?;
                let idx: u8 = parse_field(f[0], hline, "the plane index")?;
                if idx != k {
                    return format_err(hline, format!("expected LPLANE {k}, got LPLANE {idx}"));
                }
                stack.push(Plane::from_bits(
                    side,
                    byte_rows(&mut scan, side, 1, "a plane")?,
                ));
            }
            LeftAggregate::Planes(BitPlaneStack::from_planes(stack))
        }
        other => return format_err(line, format!("expected LEFT FULL or LEFT PLANES, got {other:?}")),
    };

    let mut right = Vec::new();
    for k in 1..=planes {
        let (hline, htext) = scan.line("an RPLANE line")?;
        let f = fields(htext, hline, "RPLANE", 1)?;
        let idx: u8 = parse_field(f[0], hline, "the plane index")?;
        if idx != k {
            return format_err(hline, format!("expected RPLANE {k}, got RPLANE {idx}"));
        }
        right.push(Plane::from_bits(
            side,
            byte_rows(&mut scan, side, 1, "a plane")?,
        ));
    }
    scan.expect("END")?;
    if !scan.at_end() {
        return format_err(scan.next + 1, "content after END");
    }
    EquivalentKey::new(
        rounds,
        side,
        planes,
        perms,
        left,
        BitPlaneStack::from_planes(right),
    )
    .or_else(|e| format_err(1, format!("inconsistent equivalent key: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyschedule::{key_schedule, SecretKey};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn fnv1a64(data: &[u8]) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        for &b in data {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    #[test]
    fn parses_a_minimal_pgm() {
        let img = parse_pgm(b"P5 2 1 255\n\x07\x09").unwrap();
        assert_eq!(img.side(), 1);
        assert_eq!(img.data(), &[7, 9]);
    }

    #[test]
    fn tolerates_header_comments() {
        let img = parse_pgm(b"P5 # binary\n# full line\n4 2\n255\n\0\x01\x02\x03\x04\x05\x06\x07").unwrap();
        assert_eq!(img.side(), 2);
        assert_eq!(img.get(1, 3), 7);
    }

    #[test]
    fn rejects_malformed_pgm_with_line_numbers() {
        let wrong_maxval = parse_pgm(b"P5\n2 1\n65535\n\0\0").unwrap_err();
        assert!(wrong_maxval.to_string().contains("line 3"), "{wrong_maxval}");
        assert!(wrong_maxval.to_string().contains("255"));

        let wrong_magic = parse_pgm(b"P2\n2 1\n255\n\0\0").unwrap_err();
        assert!(wrong_magic.to_string().contains("line 1"), "{wrong_magic}");

        let bad_geometry = parse_pgm(b"P5\n3 2\n255\n\0\0\0\0\0\0").unwrap_err();
        assert!(bad_geometry.to_string().contains("2N"), "{bad_geometry}");

        let truncated = parse_pgm(b"P5\n4 2\n255\n\0\0\0").unwrap_err();
        assert!(truncated.to_string().contains("truncated"), "{truncated}");

        let trailing = parse_pgm(b"P5\n2 1\n255\n\0\0\0").unwrap_err();
        assert!(trailing.to_string().contains("trailing"), "{trailing}");
    }

    #[test]
    fn pgm_round_trip_is_byte_identical() {
        let mut rng = StdRng::seed_from_u64(137);
        let img = Image::from_vec(5, (0..50).map(|_| rng.random()).collect());
        let encoded = encode_pgm(&img);
        assert_eq!(parse_pgm(&encoded).unwrap(), img);
        assert_eq!(encode_pgm(&parse_pgm(&encoded).unwrap()), encoded);

        let zero = Image::new(2);
        assert_eq!(encode_pgm(&zero), b"P5\n4 2\n255\n\0\0\0\0\0\0\0\0");
    }

    #[test]
    fn full_size_encoding_matches_the_frozen_hash() {
        let data: Vec<u8> = (0..256 * 512).map(|i| (i % 256) as u8).collect();
        let encoded = encode_pgm(&Image::from_vec(256, data));
        assert_eq!(encoded.len(), 131_087);
        assert_eq!(fnv1a64(&encoded), 0x1b4576927092ad7b);
    }

    #[test]
    fn halves_split_and_join() {
        let mut rng = StdRng::seed_from_u64(139);
        let img = Image::from_vec(4, (0..32).map(|_| rng.random()).collect());
        let (left, right) = split_halves(&img);
        assert_eq!(left.get(2, 3), img.get(2, 3));
        assert_eq!(right.get(2, 3), img.get(2, 7));
        assert_eq!(join_halves(&left, &right), img);

        let tiny = Image::from_vec(1, vec![10, 20]);
        let (l, r) = split_halves(&tiny);
        assert_eq!((l.get(0, 0), r.get(0, 0)), (10, 20));
    }

    #[test]
    fn schedule_dump_round_trips() {
        let mut rng = StdRng::seed_from_u64(149);
        for _ in 0..5 {
            let key = SecretKey::new(
                rng.random_range(1..=4),
                rng.random_range(1e-6..1.0 - 1e-6),
            )
            .unwrap();
            let sched = key_schedule(&key, 8).unwrap();
            let text = dump_schedule(&sched);
            let loaded = load_schedule(&text).unwrap();
            assert_eq!(loaded, sched);
            assert_eq!(dump_schedule(&loaded), text);
        }
    }

    #[test]
    fn schedule_parse_errors_name_the_line() {
        assert!(load_schedule("").is_err());

        let sched = key_schedule(&SecretKey::new(1, 0.3).unwrap(), 4).unwrap();
        let good = dump_schedule(&sched);

        let reindexed = good.replace("K 1 ", "K 7 ");
        let err = load_schedule(&reindexed).unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");

        let inconsistent = good
            .lines()
            .map(|line| {
                if let Some(rest) = line.strip_prefix("C 0 ") {
                    let mut f: Vec<String> =
                        rest.split_whitespace().map(str::to_string).collect();
                    f[0] = (f[0].parse::<i64>().unwrap() + 1).to_string();
                    format!("C 0 {}", f.join(" "))
                } else {
                    line.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let err = load_schedule(&inconsistent).unwrap_err();
        assert!(err.to_string().contains("disagree"), "{err}");
    }

    #[test]
    fn eqkey_dump_round_trips() {
        use crate::attack::{attack_t1, attack_t2, PlainCipherPair};
        use crate::cipher::{encrypt, CipherParams, HalfImage};

        let mut rng = StdRng::seed_from_u64(151);
        let params = CipherParams::new(64);
        for rounds in [1, 2] {
            let key = SecretKey::new(rounds, 0.437).unwrap();
            let sched = key_schedule(&key, 8).unwrap();
            let pairs: Vec<PlainCipherPair> = (0..6)
                .map(|_| {
                    let l = HalfImage::from_vec(8, (0..64).map(|_| rng.random()).collect());
                    let r = HalfImage::from_vec(8, (0..64).map(|_| rng.random()).collect());
                    let (cl, cr) = encrypt(&l, &r, &sched, params);
                    PlainCipherPair::from_halves(l, r, cl, cr)
                })
                .collect();
            let eqkey = match rounds {
                1 => attack_t1(&pairs, params).unwrap(),
                _ => attack_t2(&pairs, params).unwrap(),
            };
            let text = dump_eqkey(&eqkey);
            let loaded = load_eqkey(&text).unwrap();
            assert_eq!(loaded, eqkey);
            assert_eq!(dump_eqkey(&loaded), text);
        }
    }
}
