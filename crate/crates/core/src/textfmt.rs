//! Line-oriented `key value` block format shared by profile and machine files.
//!
//! ```text
//! <header>
//! global_key value
//!
//! device <id>
//! key value
//! ```
//!
//! `#` starts a comment line. Blocks are separated by blank lines and start
//! with a `device` line.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    pub line: usize,
    pub value: String,
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub line: usize,
    pub id: String,
    pub entries: BTreeMap<String, Entry>,
}

#[derive(Debug, Clone)]
pub(crate) struct Document {
    pub globals: BTreeMap<String, Entry>,
    pub blocks: Vec<Block>,
}

pub(crate) fn parse(text: &str, header: &str) -> Result<Document> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let first = lines
        .by_ref()
        .find(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match first {
        Some((_, l)) if l == header => {}
        Some((n, l)) => {
            return Err(Error::parse(
                n,
                format!("expected header `{header}`, found `{l}`"),
            ))
        }
        None => {
            return Err(Error::parse(
                1,
                format!("empty file, expected header `{header}`"),
            ))
        }
    }

    let mut doc = Document {
        globals: BTreeMap::new(),
        blocks: Vec::new(),
    };
    let mut current: Option<Block> = None;
    for (n, l) in lines {
        if l.starts_with('#') {
            continue;
        }
        if l.is_empty() {
            if let Some(b) = current.take() {
                doc.blocks.push(b);
            }
            continue;
        }
        let (key, value) = match l.split_once(char::is_whitespace) {
            Some((k, v)) => (k, v.trim()),
            None => return Err(Error::parse(n, format!("`{l}`: expected `key value`"))),
        };
        if key == "device" {
            if let Some(b) = current.take() {
                doc.blocks.push(b);
            }
            if value.is_empty() || value.contains(char::is_whitespace) {
                return Err(Error::parse(
                    n,
                    "device id must be a single non-empty token",
                ));
            }
            current = Some(Block {
                line: n,
                id: value.to_string(),
                entries: BTreeMap::new(),
            });
            continue;
        }
        let target = match current.as_mut() {
            Some(b) => &mut b.entries,
            None => {
                if !doc.blocks.is_empty() {
                    return Err(Error::parse(
                        n,
                        format!("key `{key}` outside a device block"),
                    ));
                }
                &mut doc.globals
            }
        };
        if target.contains_key(key) {
            return Err(Error::parse(n, format!("duplicate key `{key}`")));
        }
        target.insert(
            key.to_string(),
            Entry {
                line: n,
                value: value.to_string(),
            },
        );
    }
    if let Some(b) = current.take() {
        doc.blocks.push(b);
    }
    Ok(doc)
}

/// Rejects keys not in `allowed`.
pub(crate) fn check_keys(
    entries: &BTreeMap<String, Entry>,
    allowed: &[&str],
    context: &str,
) -> Result<()> {
    for (key, entry) in entries {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::parse(
                entry.line,
                format!("unknown key `{key}` in {context}"),
            ));
        }
    }
    Ok(())
}

pub(crate) fn required<'a>(block: &'a Block, key: &str) -> Result<&'a Entry> {
    block.entries.get(key).ok_or_else(|| {
        Error::parse(
            block.line,
            format!("device `{}`: missing field `{key}`", block.id),
        )
    })
}

pub(crate) fn value<T: FromStr>(entry: &Entry, key: &str) -> Result<T> {
    entry.value.parse().map_err(|_| {
        Error::parse(
            entry.line,
            format!("`{key}`: cannot parse `{}`", entry.value),
        )
    })
}

pub(crate) fn pair<T: FromStr>(entry: &Entry, key: &str) -> Result<(T, T)> {
    let mut it = entry.value.split_whitespace();
    let bad = || {
        Error::parse(
            entry.line,
            format!("`{key}`: expected two values, got `{}`", entry.value),
        )
    };
    let a = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let b = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if it.next().is_some() {
        return Err(bad());
    }
    Ok((a, b))
}

/// 17 significant digits: enough for any f64 to round-trip bit-for-bit.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
