//! Parameter checkpoints: a text header carrying the manifest, then the raw
//! little-endian `f32` values.
//!
//! ```text
//! FKBP-CHECKPOINT 1
//! stem.weight 8,11,3,3,3
//! ...
//! END 5869
//! <5869 * 4 bytes>
//! ```

use std::fs;
use std::path::Path;

use crate::datamodel::{Manifest, ParamVector};
use crate::dataset::{f32_from_le_bytes, f32_le_bytes};
use crate::error::{Error, Result};

const MAGIC_LINE: &str = "FKBP-CHECKPOINT 1";

pub fn encode_checkpoint(params: &ParamVector) -> Vec<u8> {
    let mut out = format!("{MAGIC_LINE}\n{}END {}\n", params.manifest().to_text(), params.len()).into_bytes();
    out.extend(f32_le_bytes(params.data()));
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamVector> {
    let bad = |m: &str| Error::data("checkpoint", m.to_string());
    let mut pos = 0;
    let mut next_line = || -> Result<&str> {
        let rest = &bytes[pos..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
        pos += nl + 1;
        std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not UTF-8"))
    };
    if next_line()? != MAGIC_LINE {
        return Err(bad("missing checkpoint magic"));
    }
    let mut manifest_text = String::new();
    let count = loop {
        let line = next_line()?;
        if let Some(n) = line.strip_prefix("END ") {
            break n.parse::<usize>().map_err(|_| bad("bad END count"))?;
        }
        manifest_text.push_str(line);
        manifest_text.push('\n');
    };
    let manifest = Manifest::from_text(&manifest_text)?;
    let body = &bytes[pos..];
    if count != manifest.numel() || body.len() != count * 4 {
        return Err(bad("payload size does not match manifest"));
    }
    ParamVector::new(manifest, f32_from_le_bytes(body))
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ParamVector) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamVector> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| e.context(path.display()))
}
