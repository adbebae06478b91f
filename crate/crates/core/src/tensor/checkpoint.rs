//! Checkpoint container.
//!
//! ```text
//! SMN-CHECKPOINT 1
//! seed <u64>
//! config <canonical JSON, one line>
//! params <count>
//! <name> <dim>x<dim>... <byte offset into data section>
//! ...
//! data
//! <little-endian f64 values, parameters in manifest order>
//! ```
//!
//! Every header line ends in `\n`. Manifest order is lexicographic by name.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tensor::{ParameterSet, Tensor};

pub const MAGIC: &str = "SMN-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::format("checkpoint", msg)
}

pub fn write_checkpoint<W: Write>(mut w: W, config_json: &str, params: &ParameterSet) -> Result<()> {
    if config_json.contains('\n') {
        return Err(bad("config JSON must be a single line"));
    }
    let mut header = String::new();
    header.push_str(&format!("{MAGIC} {FORMAT_VERSION}\n"));
    header.push_str(&format!("seed {}\n", params.rng_seed));
    header.push_str(&format!("config {config_json}\n"));
    header.push_str(&format!("params {}\n", params.len()));
    let mut offset = 0usize;
    for (name, t) in params.iter() {
        if name.contains(char::is_whitespace) || name.is_empty() {
            return Err(bad(format!("parameter name `{name}` is not a single token")));
        }
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        header.push_str(&format!("{name} {} {offset}\n", dims.join("x")));
        offset += t.numel() * 8;
    }
    header.push_str("data\n");
    let mut bytes = header.into_bytes();
    bytes.reserve(offset);
    for (_, t) in params.iter() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&bytes).map_err(|e| bad(e.to_string()))
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)
        .map_err(|e| bad(e.to_string()))?;
    if line.pop() != Some(b'\n') {
        return Err(bad("truncated header"));
    }
    String::from_utf8(line).map_err(|_| bad("header is not UTF-8"))
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| bad(format!("expected `{key}` line, found `{line}`")))
}

/// Returns the stored config JSON and the parameters.
pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<(String, ParameterSet)> {
    let magic = read_line(&mut r)?;
    let version = field(&magic, MAGIC)?;
    if version != FORMAT_VERSION.to_string() {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let seed: u64 = field(&read_line(&mut r)?, "seed")?
        .parse()
        .map_err(|_| bad("bad seed"))?;
    let config = field(&read_line(&mut r)?, "config")?.to_string();
    let count: usize = field(&read_line(&mut r)?, "params")?
        .parse()
        .map_err(|_| bad("bad parameter count"))?;
    let mut manifest = Vec::with_capacity(count);
    let mut expected_offset = 0usize;
    for _ in 0..count {
        let line = read_line(&mut r)?;
        let parts: Vec<&str> = line.split(' ').collect();
        let [name, dims, offset] = parts[..] else {
            return Err(bad(format!("bad manifest line `{line}`")));
        };
        let shape: Vec<usize> = dims
            .split('x')
            .map(|d| d.parse().map_err(|_| bad(format!("bad shape `{dims}`"))))
            .collect::<Result<_>>()?;
        let offset: usize = offset.parse().map_err(|_| bad("bad offset"))?;
        if offset != expected_offset {
            return Err(bad(format!("offset {offset} for `{name}`, expected {expected_offset}")));
        }
        expected_offset += shape.iter().product::<usize>() * 8;
        manifest.push((name.to_string(), shape));
    }
    if read_line(&mut r)? != "data" {
        return Err(bad("missing data marker"));
    }
    let mut raw = Vec::new();
    r.read_to_end(&mut raw).map_err(|e| bad(e.to_string()))?;
    if raw.len() != expected_offset {
        return Err(bad(format!(
            "data section has {} bytes, manifest describes {expected_offset}",
            raw.len()
        )));
    }
    let mut params = ParameterSet::empty(seed);
    let mut chunks = raw.chunks_exact(8);
    for (name, shape) in manifest {
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = chunks
            .by_ref()
            .take(numel)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.insert(name, Tensor::new(shape, data)?);
    }
    Ok((config, params))
}
