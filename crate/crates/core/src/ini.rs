//! Minimal sectioned `key = value` documents with line tracking.
//!
//! `#` starts a comment. Section headers may repeat (net specs use one
//! `[layer]` section per layer).

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }
}

pub fn parse(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                line,
                msg: format!("unterminated section header {s:?}"),
            })?;
            out.push(Section {
                name: name.trim().to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected `key = value`, got {s:?}"),
        })?;
        let section = out.last_mut().ok_or_else(|| Error::Config {
            line,
            msg: "key outside of any section".into(),
        })?;
        let key = k.trim().to_string();
        if section.get(&key).is_some() {
            return Err(Error::Config {
                line,
                msg: format!("duplicate key {:?} in [{}]", key, section.name),
            });
        }
        section.entries.push(Entry {
            key,
            value: v.trim().to_string(),
            line,
        });
    }
    Ok(out)
}

pub fn parse_list<T: std::str::FromStr>(e: &Entry) -> Result<Vec<T>> {
    if e.value.is_empty() {
        return Ok(Vec::new());
    }
    e.value
        .split(',')
        .map(|p| {
            p.trim().parse::<T>().map_err(|_| Error::Config {
                line: e.line,
                msg: format!("bad list element {:?} for key {:?}", p.trim(), e.key),
            })
        })
        .collect()
}

pub fn parse_value<T: std::str::FromStr>(e: &Entry) -> Result<T> {
    e.value.parse::<T>().map_err(|_| Error::Config {
        line: e.line,
        msg: format!("bad value {:?} for key {:?}", e.value, e.key),
    })
}

pub fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_lines() {
        let doc = "# top\n[a]\nx = 1\n\n[b]\ny = 2, 3 # trailing\n[b]\n";
        let s = parse(doc).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[1].get("y").unwrap().line, 6);
        assert_eq!(parse_list::<u32>(s[1].get("y").unwrap()).unwrap(), vec![2, 3]);
    }

    #[test]
    fn rejects_orphan_and_duplicate_keys() {
        assert!(matches!(parse("x = 1"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse("[a]\nx=1\nx=2"), Err(Error::Config { line: 3, .. })));
    }
}
