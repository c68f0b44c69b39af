//! JSON emission with a fixed float format.
//!
//! All file formats in this crate serialize `f64` values with 17 significant
//! digits (`{:.16e}`), which round-trips every finite double exactly and keeps
//! emitted documents byte-stable across platforms. Field order follows struct
//! declaration order.

use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        if value.is_finite() {
            write!(writer, "{:.16e}", value)
        } else {
            writer.write_all(b"null")
        }
    }
}

pub fn to_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits17);
    value.serialize(&mut ser)?;
    // The formatter only ever writes ASCII.
    Ok(String::from_utf8(out).expect("json output is utf-8"))
}

pub fn write_file<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let text = to_string(value).map_err(io::Error::other)?;
    std::fs::write(path, text + "\n")
}

pub fn read_file<T: DeserializeOwned>(path: &Path) -> io::Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(io::Error::other)
}
