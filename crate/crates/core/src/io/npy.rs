//! NPY container, format version 1.0 (read: 1.0–3.0).
//!
//! Layout: the magic `\x93NUMPY`, major and minor version bytes, a
//! little-endian header length (u16 in 1.0, u32 in 2.0/3.0), an ASCII header
//! dict padded with spaces and a newline so the payload starts on a
//! 64-byte boundary, then the raw little-endian payload.

use ndarray::{ArrayD, IxDyn, ShapeBuilder};
use num_complex::Complex64;
use thiserror::Error;

use crate::pipeline::ImageData;

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Upper bound on the element count a reader accepts.
pub const MAX_ELEMENTS: usize = 1 << 31;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NpyError {
    #[error("not an NPY file (bad magic)")]
    BadMagic,
    #[error("unsupported NPY version {0}.{1}")]
    UnsupportedVersion(u8, u8),
    #[error("malformed NPY header: {0}")]
    Header(String),
    #[error("unsupported dtype {0:?} (expected '<f8' or '<c16')")]
    UnsupportedDtype(String),
    #[error("payload has {found} bytes, header declares {expected}")]
    Truncated { expected: usize, found: usize },
}

fn header_dict(descr: &str, shape: &[usize]) -> String {
    let dims = match shape {
        [n] => format!("({n},)"),
        _ => format!("({})", shape.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")),
    };
    format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {dims}, }}")
}

/// Encodes `data` as an NPY 1.0 file in C order.
pub fn npy_bytes(data: &ImageData) -> Vec<u8> {
    let (descr, item) = match data {
        ImageData::Real(_) => ("<f8", 8),
        ImageData::Complex(_) => ("<c16", 16),
    };
    let mut header = header_dict(descr, data.shape());
    // 10 fixed bytes + header + '\n' must be a multiple of 64.
    let total = (10 + header.len() + 1).div_ceil(64) * 64;
    header.extend(std::iter::repeat_n(' ', total - 10 - header.len() - 1));
    header.push('\n');
    let n: usize = data.shape().iter().product();
    let mut out = Vec::with_capacity(total + n * item);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match data {
        ImageData::Real(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        ImageData::Complex(a) => a.iter().for_each(|v| {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }),
    }
    out
}

/// Parsed header fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyHeader {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

/// Decodes an NPY file holding `<f8` or `<c16` data.
pub fn read_npy(bytes: &[u8]) -> Result<ImageData, NpyError> {
    let (header, payload) = split(bytes)?;
    let item = match header.descr.as_str() {
        "<f8" => 8,
        "<c16" => 16,
        other => return Err(NpyError::UnsupportedDtype(other.to_string())),
    };
    let n = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or_else(|| NpyError::Header(format!("shape {:?} is too large", header.shape)))?;
    let expected = n * item;
    if payload.len() != expected {
        return Err(NpyError::Truncated { expected, found: payload.len() });
    }
    let f64_at = |i: usize| f64::from_le_bytes(payload[i..i + 8].try_into().expect("8 bytes"));
    let shape = IxDyn(&header.shape);
    Ok(match item {
        8 => {
            let v: Vec<f64> = (0..n).map(|i| f64_at(8 * i)).collect();
            ImageData::Real(from_vec(shape, header.fortran_order, v))
        }
        _ => {
            let v: Vec<Complex64> = (0..n).map(|i| Complex64::new(f64_at(16 * i), f64_at(16 * i + 8))).collect();
            ImageData::Complex(from_vec(shape, header.fortran_order, v))
        }
    })
}

fn from_vec<T>(shape: IxDyn, fortran: bool, v: Vec<T>) -> ArrayD<T> {
    let a = if fortran { ArrayD::from_shape_vec(shape.f(), v) } else { ArrayD::from_shape_vec(shape, v) };
    a.expect("length checked against the shape")
}

/// Header and payload slice of an NPY file.
pub fn split(bytes: &[u8]) -> Result<(NpyHeader, &[u8]), NpyError> {
    if bytes.len() < 8 || &bytes[..6] != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (len, start): (usize, usize) = match major {
        1 if bytes.len() >= 10 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize, 12),
        1..=3 => return Err(NpyError::Header("file ends inside the preamble".into())),
        _ => return Err(NpyError::UnsupportedVersion(major, minor)),
    };
    let end = start.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| {
        NpyError::Header(format!("header length {len} exceeds the file"))
    })?;
    let text = std::str::from_utf8(&bytes[start..end]).map_err(|_| NpyError::Header("header is not text".into()))?;
    Ok((parse_header(text)?, &bytes[end..]))
}

/// Parses the Python-literal header dict.
pub fn parse_header(text: &str) -> Result<NpyHeader, NpyError> {
    let mut p = Lit { s: text.as_bytes(), i: 0 };
    p.ws();
    p.expect(b'{')?;
    let (mut descr, mut fortran, mut shape) = (None, None, None);
    loop {
        p.ws();
        if p.eat(b'}') {
            break;
        }
        let key = p.string()?;
        p.ws();
        p.expect(b':')?;
        p.ws();
        match key.as_str() {
            "descr" => descr = Some(p.string()?),
            "fortran_order" => fortran = Some(p.boolean()?),
            "shape" => shape = Some(p.tuple()?),
            other => return Err(NpyError::Header(format!("unexpected key {other:?}"))),
        }
        p.ws();
        if !p.eat(b',') {
            p.ws();
            p.expect(b'}')?;
            break;
        }
    }
    p.ws();
    if p.i != p.s.len() {
        return Err(NpyError::Header("trailing bytes after the dict".into()));
    }
    let missing = |k: &str| NpyError::Header(format!("missing key {k:?}"));
    Ok(NpyHeader {
        descr: descr.ok_or_else(|| missing("descr"))?,
        fortran_order: fortran.ok_or_else(|| missing("fortran_order"))?,
        shape: shape.ok_or_else(|| missing("shape"))?,
    })
}

struct Lit<'a> {
    s: &'a [u8],
    i: usize,
}

impl Lit<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        let hit = self.s.get(self.i) == Some(&c);
        self.i += usize::from(hit);
        hit
    }

    fn expect(&mut self, c: u8) -> Result<(), NpyError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(NpyError::Header(format!("expected {:?} at offset {}", c as char, self.i)))
        }
    }

    fn string(&mut self) -> Result<String, NpyError> {
        let quote = match self.s.get(self.i) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => return Err(NpyError::Header(format!("expected a string at offset {}", self.i))),
        };
        let start = self.i + 1;
        let len = self.s[start..]
            .iter()
            .position(|&c| c == quote)
            .ok_or_else(|| NpyError::Header("unterminated string".into()))?;
        self.i = start + len + 1;
        Ok(String::from_utf8_lossy(&self.s[start..start + len]).into_owned())
    }

    fn boolean(&mut self) -> Result<bool, NpyError> {
        for (word, v) in [(&b"True"[..], true), (&b"False"[..], false)] {
            if self.s[self.i..].starts_with(word) {
                self.i += word.len();
                return Ok(v);
            }
        }
        Err(NpyError::Header(format!("expected True or False at offset {}", self.i)))
    }

    fn tuple(&mut self) -> Result<Vec<usize>, NpyError> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            self.ws();
            if self.eat(b')') {
                return Ok(dims);
            }
            let start = self.i;
            while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                self.i += 1;
            }
            let digits = std::str::from_utf8(&self.s[start..self.i]).expect("ascii digits");
            dims.push(digits.parse().map_err(|_| NpyError::Header(format!("bad dimension at offset {start}")))?);
            self.ws();
            if !self.eat(b',') {
                self.ws();
                self.expect(b')')?;
                return Ok(dims);
            }
        }
    }
}
