//! Flat `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment that runs to the end of the
//! line; blank lines are ignored. Keys are case-sensitive. The same dialect
//! describes pipeline runs and synthetic scenes.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

/// Parsed assignments, in file order.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: Vec<Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config {
                    line,
                    message: format!("expected `key = value`, found `{content}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Config {
                    line,
                    message: format!("invalid key `{key}`"),
                });
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Self { entries })
    }

    /// Single-valued key; a repeated key is an error at its second line.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let mut found = self.entries.iter().filter(|e| e.key == key);
        let Some(first) = found.next() else {
            return Ok(None);
        };
        if let Some(dup) = found.next() {
            return Err(Error::Config {
                line: dup.line,
                message: format!("`{key}` assigned twice (first on line {})", first.line),
            });
        }
        parse_value(first).map(Some)
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    /// Every value of a repeatable key, in file order.
    pub fn get_all<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .iter()
            .filter(|e| e.key == key)
            .map(parse_value)
            .collect()
    }

    /// Rejects keys outside `known`, reporting the first offender's line.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            Some(e) => Err(Error::Config {
                line: e.line,
                message: format!("unknown key `{}`", e.key),
            }),
            None => Ok(()),
        }
    }

    /// Line of the first assignment to `key`, if any.
    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.line)
    }
}

fn parse_value<T: FromStr>(e: &Entry) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    e.value.parse().map_err(|err| Error::Config {
        line: e.line,
        message: format!("`{}` = `{}`: {err}", e.key, e.value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let kv = KeyValues::parse("# header\n\nwindow_size = 4  # frames\nname=a b\n").unwrap();
        assert_eq!(kv.get::<usize>("window_size").unwrap(), Some(4));
        assert_eq!(kv.get::<String>("name").unwrap().as_deref(), Some("a b"));
        assert_eq!(kv.get::<f64>("absent").unwrap(), None);
        assert_eq!(kv.line_of("name"), Some(4));
    }

    #[test]
    fn reports_line_numbers() {
        match KeyValues::parse("a = 1\nnot an assignment\n") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let kv = KeyValues::parse("a = 1\n\nb = x\n").unwrap();
        match kv.get::<f64>("b") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let kv = KeyValues::parse("a = 1\na = 2\n").unwrap();
        assert!(matches!(kv.get::<u32>("a"), Err(Error::Config { line: 2, .. })));
        assert_eq!(kv.get_all::<u32>("a").unwrap(), vec![1, 2]);
        assert!(matches!(kv.check_known(&["b"]), Err(Error::Config { line: 1, .. })));
    }

    #[test]
    fn missing_required_key_is_named() {
        let kv = KeyValues::parse("").unwrap();
        match kv.require::<usize>("window_size") {
            Err(Error::MissingKey(k)) => assert_eq!(k, "window_size"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
