//! Plain-text frozen-set files.
//!
//! ```text
//! n 1024
//! e 0.05
//! rate 0.5
//! crc 32
//! frozen 512
//! 0
//! 1
//! ...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so writing the same code
//! twice gives identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::PolarCode;

/// Identifies a cached construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeKey {
    pub n: usize,
    pub e: f64,
    pub target_fer: f64,
    pub crc_width: usize,
}

/// Cache file name; floats are encoded by their bit patterns.
pub fn cache_file_name(key: &CodeKey) -> String {
    format!(
        "polar_n{}_e{:016x}_t{:016x}_crc{}.frozen",
        key.n,
        key.e.to_bits(),
        key.target_fer.to_bits(),
        key.crc_width
    )
}

pub fn render(code: &PolarCode) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n {}", code.n());
    let _ = writeln!(s, "e {}", code.bsc_error());
    let _ = writeln!(s, "rate {}", code.rate_pre_crc());
    let _ = writeln!(s, "crc {}", code.crc_width());
    let _ = writeln!(s, "frozen {}", code.frozen().len());
    for i in code.frozen() {
        let _ = writeln!(s, "{i}");
    }
    s
}

pub fn write_frozen_file(path: &Path, code: &PolarCode) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write then rename so concurrent readers never see a partial file.
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, render(code)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_frozen_file(path: &Path) -> Result<PolarCode> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::FrozenFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => Err(bad(format!("expected `{key}`, found `{line}`"))),
        }
    };
    let n: usize = header("n")?.parse().map_err(|e| bad(format!("n: {e}")))?;
    let e: f64 = header("e")?.parse().map_err(|e| bad(format!("e: {e}")))?;
    let rate: f64 = header("rate")?.parse().map_err(|e| bad(format!("rate: {e}")))?;
    let crc: usize = header("crc")?.parse().map_err(|e| bad(format!("crc: {e}")))?;
    let count: usize = header("frozen")?.parse().map_err(|e| bad(format!("frozen: {e}")))?;
    let frozen = lines
        .map(|l| l.trim().parse::<usize>().map_err(|e| bad(format!("index `{l}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if frozen.len() != count {
        return Err(bad(format!(
            "header lists {count} frozen indices, found {}",
            frozen.len()
        )));
    }
    let code = PolarCode::from_frozen(n, frozen, crc, e).map_err(|err| bad(err.to_string()))?;
    if code.rate_pre_crc() != rate {
        return Err(bad(format!("rate {rate} does not match the frozen set")));
    }
    Ok(code)
}

/// Reads the code for `key` from `dir`, constructing and storing it on a
/// miss. The flag tells whether the cache was hit.
pub fn load_or_construct(dir: &Path, key: &CodeKey) -> Result<(PolarCode, bool)> {
    let path = dir.join(cache_file_name(key));
    if path.exists() {
        let code = read_frozen_file(&path)?;
        if code.n() != key.n || code.bsc_error() != key.e {
            return Err(Error::FrozenFile {
                path,
                reason: "contents do not match the file name".into(),
            });
        }
        return Ok((code, true));
    }
    let code = super::construct_for_target(key)?;
    write_frozen_file(&path, &code)?;
    Ok((code, false))
}
