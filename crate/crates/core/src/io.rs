//! File formats.
//!
//! Families are stored as plain text:
//!
//! ```text
//! # optional comments
//! scale m=8 kind=cell
//! 3 4
//! 3 5
//! ```
//!
//! The header gives the scale, the plane (`cell` or `dual`) and optionally the
//! block size `h=`, in any order. Every following non-comment line holds one index pair.
//! The JSON form is `{"kind": "cell", "m": 8, "cells": [[3, 4], [3, 5]]}`.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{Cell, DualCell, Scale};
use crate::sets::{CellFamily, DualCellFamily, DyadicIndex, Family, FamilyKind};

/// A family of either kind, as read from a file.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyFamily {
    Cells(CellFamily),
    Tubes(DualCellFamily),
}

impl AnyFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            AnyFamily::Cells(_) => FamilyKind::Cell,
            AnyFamily::Tubes(_) => FamilyKind::Dual,
        }
    }

    pub fn into_cells(self) -> Result<CellFamily> {
        match self {
            AnyFamily::Cells(f) => Ok(f),
            AnyFamily::Tubes(_) => Err(Error::Invalid("expected a cell family, found a dual family".into())),
        }
    }

    pub fn into_tubes(self) -> Result<DualCellFamily> {
        match self {
            AnyFamily::Tubes(f) => Ok(f),
            AnyFamily::Cells(_) => Err(Error::Invalid("expected a dual family, found a cell family".into())),
        }
    }
}

fn header<C: DyadicIndex>(f: &Family<C>) -> String {
    let s = f.scale();
    match s.h {
        Some(h) => format!("scale m={} kind={} h={h}", s.m, C::KIND.as_str()),
        None => format!("scale m={} kind={}", s.m, C::KIND.as_str()),
    }
}

pub fn family_to_text<C: DyadicIndex>(f: &Family<C>) -> String {
    let mut out = header(f);
    out.push('\n');
    for (u, v) in f.coords() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

pub fn family_to_json<C: DyadicIndex>(f: &Family<C>) -> serde_json::Value {
    let cells: Vec<[i64; 2]> = f.coords().map(|(u, v)| [u, v]).collect();
    let mut v = serde_json::json!({ "kind": C::KIND.as_str(), "m": f.m(), "cells": cells });
    if let Some(h) = f.scale().h {
        v["h"] = h.into();
    }
    v
}

fn build(kind: FamilyKind, m: u32, h: Option<u32>, coords: &[(i64, i64)]) -> Result<AnyFamily> {
    let scale = match h {
        Some(h) => Scale::blocked(m, h)?,
        None => Scale::new(m)?,
    };
    Ok(match kind {
        FamilyKind::Cell => AnyFamily::Cells(CellFamily::from_coords(scale, coords)?),
        FamilyKind::Dual => AnyFamily::Tubes(DualCellFamily::from_coords(scale, coords)?),
    })
}

fn parse_header(line: &str, n: usize) -> Result<(FamilyKind, u32, Option<u32>)> {
    let err = |msg: String| Error::Parse { line: n, msg };
    let mut parts = line.split_whitespace();
    if parts.next() != Some("scale") {
        return Err(err(format!(
            "expected a `scale m=<m> kind=<cell|dual>` header, found `{line}`"
        )));
    }
    let (mut m, mut h, mut kind) = (None, None, None);
    for p in parts {
        let (key, val) = p
            .split_once('=')
            .ok_or_else(|| err(format!("bad header field `{p}`")))?;
        let num = || val.parse::<u32>().map_err(|_| err(format!("bad number in `{p}`")));
        match key {
            "m" => m = Some(num()?),
            "h" => h = Some(num()?),
            "kind" => {
                kind = Some(match val {
                    "cell" => FamilyKind::Cell,
                    "dual" => FamilyKind::Dual,
                    _ => return Err(err(format!("kind must be `cell` or `dual`, found `{val}`"))),
                })
            }
            _ => return Err(err(format!("unknown header field `{key}`"))),
        }
    }
    let kind = kind.ok_or_else(|| err("header lacks kind=".into()))?;
    Ok((kind, m.ok_or_else(|| err("header lacks m=".into()))?, h))
}

pub fn parse_family_text(text: &str) -> Result<AnyFamily> {
    let mut head = None;
    let mut coords = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if head.is_none() {
            head = Some((parse_header(line, n)?, n));
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<i64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(u)), Some(Ok(v)), None) => coords.push((u, v, n)),
            _ => {
                return Err(Error::Parse {
                    line: n,
                    msg: format!("expected two integers, found `{line}`"),
                })
            }
        }
    }
    let ((kind, m, h), n) = head.ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })?;
    let pairs: Vec<(i64, i64)> = coords.iter().map(|&(u, v, _)| (u, v)).collect();
    build(kind, m, h, &pairs).map_err(|e| {
        // Report the first line whose index is rejected, else the header.
        let bad = coords.iter().find(|&&(u, v, _)| match kind {
            FamilyKind::Cell => Cell::new(u, v, m).is_err(),
            FamilyKind::Dual => DualCell::new(u, v, m).is_err(),
        });
        Error::Parse {
            line: bad.map_or(n, |c| c.2),
            msg: e.to_string(),
        }
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonFamily {
    kind: FamilyKind,
    m: u32,
    #[serde(default)]
    h: Option<u32>,
    cells: Vec<(i64, i64)>,
}

pub fn parse_family_json(text: &str) -> Result<AnyFamily> {
    let f: JsonFamily = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    build(f.kind, f.m, f.h, &f.cells).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })
}

/// Parses either format, choosing JSON when the text starts with `{`.
pub fn parse_family(text: &str) -> Result<AnyFamily> {
    if text.trim_start().starts_with('{') {
        parse_family_json(text)
    } else {
        parse_family_text(text)
    }
}

pub fn read_family(path: &Path) -> Result<AnyFamily> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_family(&text)
}

pub fn write_family<C: DyadicIndex>(path: &Path, f: &Family<C>) -> Result<()> {
    let json = path.extension().is_some_and(|e| e == "json");
    let body = if json {
        let mut s = serde_json::to_string_pretty(&family_to_json(f)).expect("serializable");
        s.push('\n');
        s
    } else {
        family_to_text(f)
    };
    std::fs::write(path, body).map_err(|e| Error::Invalid(format!("cannot write {}: {e}", path.display())))
}

/// `tube_a,tube_b,count` rows in family order.
pub fn tube_counts_csv(t: &DualCellFamily, counts: &[usize]) -> String {
    let mut out = String::from("tube_a,tube_b,count\n");
    for (c, n) in t.cells().iter().zip(counts) {
        out.push_str(&format!("{},{},{n}\n", c.a, c.b));
    }
    out
}

/// Hex SHA-256.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of the canonical text form, independent of the file format.
pub fn family_digest<C: DyadicIndex>(f: &Family<C>) -> String {
    digest(family_to_text(f).as_bytes())
}
