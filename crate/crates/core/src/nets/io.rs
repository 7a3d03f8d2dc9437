//! Plain-text parameter files.
//!
//! ```text
//! mrn-params 1
//! <count>
//! <name> <rows> <cols>
//! <rows·cols whitespace-separated values, row-major>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so save → load
//! is exact.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{Module, NetError};

pub const PARAMS_MAGIC: &str = "mrn-params";
pub const PARAMS_VERSION: u32 = 1;

pub fn write_params<M: Module, W: Write>(module: &M, mut out: W) -> Result<(), NetError> {
    let params = module.params();
    writeln!(out, "{PARAMS_MAGIC} {PARAMS_VERSION}")?;
    writeln!(out, "{}", params.len())?;
    for p in params {
        let v = p.value();
        writeln!(out, "{} {} {}", p.name(), v.rows(), v.cols())?;
        let line: Vec<String> = v.data().iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn save_params<M: Module>(module: &M, path: &Path) -> Result<(), NetError> {
    let mut buf = Vec::new();
    write_params(module, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Loads values into `module`. Every parameter of the module must appear in
/// the input with a matching shape; file entries are matched by name.
pub fn read_params<M: Module, R: Read>(module: &mut M, input: R) -> Result<(), NetError> {
    let mut lines = BufReader::new(input).lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String), NetError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(NetError::Format {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            }),
        }
    };
    let (ln, header) = next("header")?;
    let expected = format!("{PARAMS_MAGIC} {PARAMS_VERSION}");
    if header.trim() != expected {
        return Err(NetError::Format {
            line: ln,
            msg: format!("expected header `{expected}`, found `{}`", header.trim()),
        });
    }
    let (ln, count) = next("entry count")?;
    let count: usize = count.trim().parse().map_err(|_| NetError::Format {
        line: ln,
        msg: "entry count is not an integer".into(),
    })?;
    let mut entries = std::collections::HashMap::new();
    for _ in 0..count {
        let (ln, head) = next("parameter header")?;
        let fields: Vec<&str> = head.split_whitespace().collect();
        let bad = |msg: &str| NetError::Format { line: ln, msg: msg.to_string() };
        if fields.len() != 3 {
            return Err(bad("expected `<name> <rows> <cols>`"));
        }
        let rows: usize = fields[1].parse().map_err(|_| bad("rows is not an integer"))?;
        let cols: usize = fields[2].parse().map_err(|_| bad("cols is not an integer"))?;
        let (ln, body) = next("parameter values")?;
        let values: Vec<f64> = body
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| NetError::Format { line: ln, msg: "malformed value".into() })?;
        if values.len() != rows * cols {
            return Err(NetError::Format {
                line: ln,
                msg: format!("expected {} values, found {}", rows * cols, values.len()),
            });
        }
        entries.insert(fields[0].to_string(), (rows, cols, values));
    }
    for p in module.params_mut() {
        let (rows, cols, values) = entries
            .remove(p.name())
            .ok_or_else(|| NetError::Missing(p.name().to_string()))?;
        let shape = p.value().shape();
        if (rows, cols) != (shape.rows, shape.cols) {
            return Err(NetError::ParamShape {
                name: p.name().to_string(),
                expected: (shape.rows, shape.cols),
                found: (rows, cols),
            });
        }
        p.value_mut().data_mut().copy_from_slice(&values);
    }
    Ok(())
}

pub fn load_params<M: Module>(module: &mut M, path: &Path) -> Result<(), NetError> {
    read_params(module, fs::File::open(path)?)
}
