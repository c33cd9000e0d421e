//! Two-port Touchstone 1.x and `freq_hz,re,im` CSV traces.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use finmet_core::resonator::S21Trace;
use finmet_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreqUnit {
    Hz,
    Khz,
    Mhz,
    Ghz,
}

impl FreqUnit {
    fn scale(self) -> f64 {
        match self {
            FreqUnit::Hz => 1.0,
            FreqUnit::Khz => 1e3,
            FreqUnit::Mhz => 1e6,
            FreqUnit::Ghz => 1e9,
        }
    }

    fn name(self) -> &'static str {
        match self {
            FreqUnit::Hz => "HZ",
            FreqUnit::Khz => "KHZ",
            FreqUnit::Mhz => "MHZ",
            FreqUnit::Ghz => "GHZ",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// Real, imaginary.
    Ri,
    /// Linear magnitude, angle in degrees.
    Ma,
    /// Magnitude in dB, angle in degrees.
    Db,
}

impl DataFormat {
    fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            DataFormat::Ri => Complex64::new(a, b),
            DataFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            DataFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            DataFormat::Ri => (z.re, z.im),
            DataFormat::Ma => (z.norm(), z.arg() * 180.0 / PI),
            DataFormat::Db => (20.0 * z.norm().log10(), z.arg() * 180.0 / PI),
        }
    }

    fn name(self) -> &'static str {
        match self {
            DataFormat::Ri => "RI",
            DataFormat::Ma => "MA",
            DataFormat::Db => "DB",
        }
    }
}

fn fmt_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

/// Parses a 2-port Touchstone v1 file and returns its S21 column.
pub fn parse_touchstone(text: &str) -> Result<S21Trace, Error> {
    let mut unit = FreqUnit::Ghz;
    let mut format = DataFormat::Ma;
    let mut seen_options = false;
    let mut values: Vec<(usize, f64)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(opts) = line.strip_prefix('#') {
            if seen_options {
                continue;
            }
            seen_options = true;
            let mut tokens = opts.split_whitespace().map(str::to_ascii_uppercase);
            while let Some(tok) = tokens.next() {
                match tok.as_str() {
                    "HZ" => unit = FreqUnit::Hz,
                    "KHZ" => unit = FreqUnit::Khz,
                    "MHZ" => unit = FreqUnit::Mhz,
                    "GHZ" => unit = FreqUnit::Ghz,
                    "RI" => format = DataFormat::Ri,
                    "MA" => format = DataFormat::Ma,
                    "DB" => format = DataFormat::Db,
                    "S" => {}
                    "Y" | "Z" | "H" | "G" => {
                        return Err(fmt_err(line_no, format!("only S parameters are supported, got {tok}")))
                    }
                    "R" => {
                        tokens.next();
                    }
                    other => return Err(fmt_err(line_no, format!("unrecognised option `{other}`"))),
                }
            }
            continue;
        }
        if line.starts_with('[') {
            return Err(fmt_err(line_no, "Touchstone 2.0 keywords are not supported"));
        }
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| fmt_err(line_no, format!("not a number: `{tok}`")))?;
            values.push((line_no, v));
        }
    }
    if !values.len().is_multiple_of(9) {
        let line = values.last().map_or(0, |v| v.0);
        return Err(fmt_err(line, "2-port records need 9 values (frequency and 4 pairs)"));
    }
    let mut f = Vec::with_capacity(values.len() / 9);
    let mut s = Vec::with_capacity(values.len() / 9);
    for rec in values.chunks(9) {
        f.push(rec[0].1 * unit.scale());
        // order is S11, S21, S12, S22
        s.push(format.decode(rec[3].1, rec[4].1));
    }
    S21Trace::new(f, s)
}

/// Writes a 2-port file with reflection zero and `S12 = S21`.
pub fn write_touchstone(trace: &S21Trace, unit: FreqUnit, format: DataFormat) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "! finmet synthetic trace");
    let _ = writeln!(out, "# {} S {} R 50", unit.name(), format.name());
    let zero = format.encode(Complex64::new(if format == DataFormat::Db { 1e-300 } else { 0.0 }, 0.0));
    for (&fr, &z) in trace.frequencies.iter().zip(&trace.s21) {
        let (a, b) = format.encode(z);
        let _ = writeln!(
            out,
            "{:e} {:e} {:e} {a:e} {b:e} {a:e} {b:e} {:e} {:e}",
            fr / unit.scale(),
            zero.0,
            zero.1,
            zero.0,
            zero.1
        );
    }
    out
}

/// Reads `freq_hz,re,im` rows (header required).
pub fn parse_csv_trace(text: &str) -> Result<S21Trace, Error> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
    };
    let (cf, cr, ci) = (col("freq_hz")?, col("re")?, col("im")?);
    let mut f = Vec::new();
    let mut s = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let get = |c: usize| -> Result<f64, Error> {
            rec.get(c)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format(format!("row {}: bad number", k + 2)))
        };
        f.push(get(cf)?);
        s.push(Complex64::new(get(cr)?, get(ci)?));
    }
    S21Trace::new(f, s)
}

pub fn write_csv_trace(trace: &S21Trace) -> String {
    let mut out = String::from("freq_hz,re,im\n");
    for (f, z) in trace.frequencies.iter().zip(&trace.s21) {
        let _ = writeln!(out, "{f:e},{:e},{:e}", z.re, z.im);
    }
    out
}

/// Picks the parser from the file extension (`.csv` or Touchstone).
pub fn read_trace(path: &Path) -> Result<S21Trace, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_csv_trace(&text)
    } else {
        parse_touchstone(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use finmet_core::resonator::{synthesize_trace, HangerParams};

    fn trace() -> S21Trace {
        let p = HangerParams {
            tau: 1e-9,
            theta: 0.4,
            a: 0.9,
            ..HangerParams::new(6e9, 1e5, 5e4, 0.1)
        };
        synthesize_trace(&p, 5.999e9, 6.001e9, 64).unwrap()
    }

    #[test]
    fn formats_decode_to_the_same_trace() {
        let t = trace();
        for (unit, fmt) in [
            (FreqUnit::Hz, DataFormat::Ri),
            (FreqUnit::Ghz, DataFormat::Db),
            (FreqUnit::Mhz, DataFormat::Ma),
        ] {
            let back = parse_touchstone(&write_touchstone(&t, unit, fmt)).unwrap();
            for (a, b) in back.s21.iter().zip(&t.s21) {
                assert!((a - b).norm() < 1e-13);
            }
            for (a, b) in back.frequencies.iter().zip(&t.frequencies) {
                assert!((a - b).abs() <= 1e-15 * b);
            }
        }
    }

    #[test]
    fn default_options_are_ghz_ma() {
        let mut text = String::new();
        for k in 0..60 {
            text.push_str(&format!("{} 0 0 0.5 90 0.5 90 0 0\n", 6.0 + k as f64 * 1e-4));
        }
        let t = parse_touchstone(&text).unwrap();
        assert!((t.frequencies[0] - 6e9).abs() < 1e-3);
        assert!((t.s21[0] - Complex64::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn records_may_wrap_lines() {
        let mut text = String::from("# HZ S RI R 50\n");
        for k in 0..60 {
            text.push_str(&format!("{} 0 0\n 1 {k} 1 0\n 0 0\n", 1e9 + k as f64));
        }
        let t = parse_touchstone(&text).unwrap();
        assert_eq!(t.s21[7], Complex64::new(1.0, 7.0));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_touchstone("# HZ S RI R 50\n1 2 3\n").is_err());
        assert!(parse_touchstone("# HZ Z RI R 50\n").is_err());
        assert!(parse_touchstone("1.0 abc").is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = trace();
        assert_eq!(parse_csv_trace(&write_csv_trace(&t)).unwrap(), t);
    }
}
