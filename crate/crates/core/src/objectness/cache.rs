use super::propose::Proposal;
use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheLine {
    image: String,
    proposals: Vec<Proposal>,
}

/// Pre-generated proposals keyed by manifest-relative image path. Any
/// proposal source that writes this JSONL layout can feed the croppers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProposalCache {
    entries: BTreeMap<String, Vec<Proposal>>,
}

impl ProposalCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image: impl Into<String>, proposals: Vec<Proposal>) {
        self.entries.insert(image.into(), proposals);
    }

    pub fn get(&self, image: &str) -> Option<&[Proposal]> {
        self.entries.get(image).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Proposal])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Keep at most `n` proposals per image (lists are stored ranked).
    pub fn truncated(&self, n: usize) -> ProposalCache {
        ProposalCache {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v[..v.len().min(n)].to_vec()))
                .collect(),
        }
    }

    /// Error listing every key in `keys` that has no entry.
    pub fn require<'a>(&self, keys: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let missing: Vec<String> = keys
            .into_iter()
            .filter(|k| !self.entries.contains_key(*k))
            .map(str::to_owned)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingKeys(missing))
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (image, proposals) in &self.entries {
            let line = CacheLine {
                image: image.clone(),
                proposals: proposals.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("cache line serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let CacheLine { image, proposals } =
                serde_json::from_str(line).map_err(|e| Error::Malformed {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            if entries.contains_key(&image) {
                return Err(Error::DuplicateKey(image));
            }
            entries.insert(image, proposals);
        }
        Ok(ProposalCache { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_jsonl(&read_to_string(path)?)
    }
}
