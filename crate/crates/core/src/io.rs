//! Text serialization helpers shared by all file formats.
//!
//! Reals are written with the shortest representation that round-trips
//! exactly, padded so at least 6 significant digits are always shown. Both
//! constraints hold simultaneously because appending zeros (or widening a
//! correctly rounded scientific mantissa) never changes the parsed value.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MIN_SIG_DIGITS: usize = 6;

/// Significant digits shown in a decimal string: digits of the mantissa from
/// the first nonzero digit on.
fn sig_digits(s: &str) -> usize {
    let mantissa = s.split(['e', 'E']).next().unwrap_or(s);
    mantissa
        .chars()
        .filter(|c| c.is_ascii_digit())
        .skip_while(|&c| c == '0')
        .count()
}

fn pad_decimal(short: String) -> String {
    let mut out = short;
    if !out.contains('.') {
        out.push('.');
    }
    while sig_digits(&out) < MIN_SIG_DIGITS {
        out.push('0');
    }
    out
}

macro_rules! fmt_real_impl {
    ($name:ident, $ty:ty) => {
        /// Shortest exact round-trip text with at least 6 significant digits.
        pub fn $name(x: $ty) -> String {
            let short = format!("{x}");
            if !x.is_finite() || sig_digits(&short) >= MIN_SIG_DIGITS {
                return short;
            }
            if short.contains(['e', 'E']) {
                return format!("{:.prec$e}", x, prec = MIN_SIG_DIGITS - 1);
            }
            if x == 0.0 {
                let sign = if short.starts_with('-') { "-" } else { "" };
                return format!("{sign}0.000000");
            }
            pad_decimal(short)
        }
    };
}

fmt_real_impl!(fmt_f64, f64);
fmt_real_impl!(fmt_f32, f32);

/// Buffered writer with uniform error context.
pub fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

pub fn write_line(w: &mut impl Write, path: &Path, line: impl Display) -> Result<()> {
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

pub fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
