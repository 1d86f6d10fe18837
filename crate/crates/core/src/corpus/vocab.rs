use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RelationInstance;
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// Token → embedding row mapping. Row 0 is always the UNK token.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let mut v = Self::empty();
        for t in tokens {
            v.insert(&t);
        }
        v
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn empty() -> Self {
        let mut index = HashMap::new();
        index.insert(UNK.to_owned(), UNK_ID);
        Self {
            tokens: vec![UNK.to_owned()],
            index,
        }
    }

    /// Every distinct token of `instances`, in order of first appearance.
    pub fn from_instances<'a>(instances: impl IntoIterator<Item = &'a RelationInstance>) -> Self {
        let mut v = Self::empty();
        for inst in instances {
            for t in &inst.tokens {
                v.insert(t);
            }
        }
        v
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    /// Row of `token`, or [`UNK_ID`] when absent.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Reads a vocabulary file: one token per line, optionally followed by
    /// whitespace-separated embedding values. Returns the vocabulary and, when
    /// every line carries a vector of the same width, the embedding rows
    /// (row 0, UNK, is zero unless the file lists `<unk>` itself).
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Option<Vec<Vec<f64>>>)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut vocab = Self::empty();
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut width = None;
        for (lineno, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values = fields
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Ingest {
                    path: path.to_owned(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            let id = vocab.insert(token);
            if values.is_empty() {
                continue;
            }
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(Error::Ingest {
                        path: path.to_owned(),
                        line: lineno + 1,
                        message: format!("vector width {} differs from {w}", values.len()),
                    })
                }
                _ => {}
            }
            rows.push((id, values));
        }
        let Some(w) = width else {
            return Ok((vocab, None));
        };
        let covered = rows.iter().filter(|(id, _)| *id != UNK_ID).count();
        if covered != vocab.len() - 1 {
            return Err(Error::Ingest {
                path: path.to_owned(),
                line: 0,
                message: "either all tokens or none must carry vectors".into(),
            });
        }
        let mut table = vec![vec![0.0; w]; vocab.len()];
        for (id, v) in rows {
            table[id] = v;
        }
        Ok((vocab, Some(table)))
    }
}
