//! Small on-disk formats: `.rdt` frames and `key=value` text.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::RadTensor;

const RDT_MAGIC: &[u8; 4] = b"RDT1";

/// Encodes a frame as `RDT1`, `u32` R, A, D, then `f32` values, all
/// little-endian.
pub fn encode_rdt(h: &RadTensor) -> Vec<u8> {
    let (r, a, d) = h.dims();
    let mut out = Vec::with_capacity(16 + 4 * h.values().len());
    out.extend_from_slice(RDT_MAGIC);
    for n in [r, a, d] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for &v in h.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_rdt(bytes: &[u8]) -> Result<RadTensor> {
    if bytes.len() < 16 || &bytes[..4] != RDT_MAGIC {
        return Err(Error::Data("not an RDT1 frame".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (r, a, d) = (dim(0), dim(1), dim(2));
    let n = r * a * d;
    if bytes.len() != 16 + 4 * n {
        return Err(Error::Data(format!(
            "RDT1 frame {r}×{a}×{d} needs {} bytes, found {}",
            16 + 4 * n,
            bytes.len()
        )));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    RadTensor::new(r, a, d, values)
}

pub fn write_rdt(path: &Path, h: &RadTensor) -> Result<()> {
    fs::write(path, encode_rdt(h)).map_err(|e| Error::io(path, e))
}

pub fn read_rdt(path: &Path) -> Result<RadTensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_rdt(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Ordered `key=value` lines; `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            let k = k.trim();
            if kv.get(k).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
            kv.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Inserts or replaces, keeping first-insertion order.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|e| Error::Config(format!("bad value for '{key}': '{raw}' ({e})")))
    }

    /// Parses `key` when present, otherwise keeps `default`.
    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.get(key) {
            Some(_) => self.parse_value(key),
            None => Ok(default),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}

/// Parses `on|off|true|false|1|0`.
pub fn parse_flag(raw: &str) -> Result<bool> {
    match raw {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("expected on/off, got '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rdt_round_trip_is_bit_exact_for_f32_values() {
        let values: Vec<f64> = (0..2 * 3 * 4).map(|i| (i as f32 * 0.37f32) as f64).collect();
        let h = RadTensor::new(2, 3, 4, values).unwrap();
        let bytes = encode_rdt(&h);
        assert_eq!(&bytes[..4], b"RDT1");
        assert_eq!(bytes.len(), 16 + 4 * 24);
        let back = decode_rdt(&bytes).unwrap();
        assert_eq!(back, h);
        assert_eq!(encode_rdt(&back), bytes);
    }

    #[test]
    fn rdt_rejects_truncation_and_bad_magic() {
        let h = RadTensor::zeros(2, 2, 2);
        let bytes = encode_rdt(&h);
        assert!(decode_rdt(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_rdt(&bad).is_err());
    }

    #[test]
    fn key_values_round_trip() {
        let kv = KeyValues::parse("# c\na=1\n b = two \n\nc=3.5\n").unwrap();
        assert_eq!(kv.get("b"), Some("two"));
        assert_eq!(kv.parse_value::<f64>("c").unwrap(), 3.5);
        assert_eq!(KeyValues::parse(&kv.to_text()).unwrap(), kv);
        assert!(KeyValues::parse("a=1\na=2").is_err());
        assert!(KeyValues::parse("novalue").is_err());
        assert!(kv.parse_value::<usize>("b").is_err());
        assert!(kv.parse_value::<usize>("zzz").is_err());
    }
}
