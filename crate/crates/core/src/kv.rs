//! Flat `key = value` text, used for config files, suite matrices and
//! checkpoint metadata.
//!
//! One pair per line. `#` starts a comment, blank lines are ignored, keys
//! are `[A-Za-z0-9_.-]+` and must be unique. Values are trimmed.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvMap {
    pairs: Vec<(String, String)>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = KvMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(Error::config(format!("line {}: invalid key `{k}`", lineno + 1)));
            }
            if map.get(k).is_some() {
                return Err(Error::config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
            map.pairs.push((k.to_string(), v.to_string()));
        }
        Ok(map)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::config(format!("missing key `{key}`")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::config(format!("bad value for `{key}`: `{raw}`")))
    }

    /// Sets a key, replacing any previous value in place.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        if let Some(slot) = self.pairs.iter_mut().find(|(k, _)| k == key) {
            slot.1 = value;
        } else {
            self.pairs.push((key.to_string(), value));
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.pairs {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let m = KvMap::parse("# header\n a = 1 \n\nb.c=two # trailing\n").unwrap();
        assert_eq!(m.get("a"), Some("1"));
        assert_eq!(m.get("b.c"), Some("two"));
        assert_eq!(m.len(), 2);
        assert_eq!(KvMap::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvMap::parse("novalue\n").is_err());
        assert!(KvMap::parse("a = 1\na = 2\n").is_err());
        assert!(KvMap::parse("bad key = 1\n").is_err());
        assert!(KvMap::parse(" = 1\n").is_err());
    }
}
