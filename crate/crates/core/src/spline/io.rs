//! Plain-text spline files.
//!
//! ```text
//! order 6
//! dt_knot 5.0000000000000000e-1
//! t0 0.0000000000000000e0
//! knots 15
//! <x> <y> <z> <yaw>
//! ...
//! ```
//!
//! Numbers are written with 17 significant digits so a write/read cycle is
//! bit-exact. Blank lines and lines starting with `#` are ignored.

use std::io::{BufRead, Write};

use nalgebra::Vector4;

use super::UniformSpline;
use crate::{Error, Result};

pub fn write_spline<W: Write>(spline: &UniformSpline, mut w: W) -> Result<()> {
    writeln!(w, "order {}", spline.order())?;
    writeln!(w, "dt_knot {:.16e}", spline.dt_knot())?;
    writeln!(w, "t0 {:.16e}", spline.t0())?;
    writeln!(w, "knots {}", spline.knots().len())?;
    for k in spline.knots() {
        writeln!(w, "{:.16e} {:.16e} {:.16e} {:.16e}", k[0], k[1], k[2], k[3])?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn header(lines: &mut impl Iterator<Item = (usize, String)>, key: &str, last: &mut usize) -> Result<String> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| parse_err(*last + 1, format!("missing `{key}` header")))?;
    *last = no;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(parse_err(no, format!("expected `{key}`")));
    }
    let value = parts
        .next()
        .ok_or_else(|| parse_err(no, format!("`{key}` has no value")))?;
    if parts.next().is_some() {
        return Err(parse_err(no, format!("trailing data after `{key}`")));
    }
    Ok(value.to_string())
}

fn number<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} from `{s}`")))
}

pub fn read_spline<R: BufRead>(r: R) -> Result<UniformSpline> {
    let mut content = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        content.push((i + 1, trimmed.to_string()));
    }
    let mut it = content.into_iter();
    let mut last = 0;
    let order: usize = {
        let v = header(&mut it, "order", &mut last)?;
        number(&v, last, "order")?
    };
    let dt_knot: f64 = {
        let v = header(&mut it, "dt_knot", &mut last)?;
        number(&v, last, "dt_knot")?
    };
    let t0: f64 = {
        let v = header(&mut it, "t0", &mut last)?;
        number(&v, last, "t0")?
    };
    let n: usize = {
        let v = header(&mut it, "knots", &mut last)?;
        number(&v, last, "knot count")?
    };
    let header_line = last;
    let mut knots = Vec::with_capacity(n);
    for (no, line) in it.by_ref() {
        if knots.len() == n {
            return Err(parse_err(no, format!("more than the declared {n} knots")));
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != 4 {
            return Err(parse_err(no, format!("expected 4 values, found {}", vals.len())));
        }
        let mut k = Vector4::zeros();
        for (c, s) in vals.iter().enumerate() {
            k[c] = number(s, no, "knot coordinate")?;
        }
        knots.push(k);
    }
    if knots.len() != n {
        return Err(parse_err(header_line, format!("declared {n} knots, found {}", knots.len())));
    }
    UniformSpline::new(knots, order, dt_knot, t0).map_err(|e| parse_err(header_line, e.to_string()))
}

impl UniformSpline {
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        write_spline(self, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        read_spline(std::io::BufReader::new(f))
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        write_spline(self, &mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("spline text is ASCII")
    }

    pub fn from_text(s: &str) -> Result<Self> {
        read_spline(s.as_bytes())
    }
}
