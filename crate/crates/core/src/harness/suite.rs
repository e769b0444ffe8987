//! Functional test suites with identity placeholders.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::text::tokenize;

pub const IDENTITY_PLACEHOLDER: &str = "[IDENTITY]";

/// Table-1 style mini suite shipped with the crate.
pub const BUNDLED_SUITE: &str = include_str!("../../suites/mini.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gold {
    #[serde(rename = "hateful")]
    Hateful,
    #[serde(rename = "non-hate")]
    NonHate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Functionality {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub gold: Gold,
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSuite {
    pub identities: Vec<String>,
    pub functionalities: Vec<Functionality>,
}

impl FunctionalSuite {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let suite: FunctionalSuite = toml::from_str(text).map_err(|e| HarnessError::SuiteSchema(e.to_string()))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SUITE).expect("bundled suite is valid")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut seen = BTreeSet::new();
        for f in &self.functionalities {
            if f.id.trim().is_empty() {
                return Err(HarnessError::SuiteSchema("functionality id is empty".into()));
            }
            if !seen.insert(f.id.as_str()) {
                return Err(HarnessError::SuiteSchema(format!("duplicate functionality id {:?}", f.id)));
            }
            if f.templates.is_empty() {
                return Err(HarnessError::SuiteSchema(format!("{} has no templates", f.id)));
            }
            for t in &f.templates {
                if t.matches(IDENTITY_PLACEHOLDER).count() > 1 {
                    return Err(HarnessError::SuiteSchema(format!(
                        "{}: template {t:?} has more than one placeholder",
                        f.id
                    )));
                }
            }
        }
        for id in &self.identities {
            if id.trim().is_empty() {
                return Err(HarnessError::SuiteSchema("empty identity term".into()));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("suite serializes")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedCase {
    /// Content hash of (functionality, identity, text).
    pub id: String,
    pub functionality_id: String,
    pub identity: Option<String>,
    pub text: String,
    pub gold: Gold,
    pub target_token_index: Option<usize>,
}

impl ExpandedCase {
    pub fn is_explicit(&self) -> bool {
        self.gold == Gold::Hateful
    }
}

fn case_id(functionality: &str, identity: Option<&str>, text: &str) -> String {
    let mut h = Sha256::new();
    for part in [functionality, identity.unwrap_or(""), text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

fn expand_one(f: &Functionality, template: &str, identity: &str) -> Result<ExpandedCase, HarnessError> {
    let at = template.find(IDENTITY_PLACEHOLDER).expect("caller checked placeholder");
    let text = template.replacen(IDENTITY_PLACEHOLDER, identity, 1);
    let doc = tokenize(&text);
    let needle = identity.trim();
    let start = at + (identity.len() - identity.trim_start().len());
    let target = doc
        .tokens
        .iter()
        .position(|t| t.byte_start <= start && start < t.byte_end)
        .filter(|&i| !needle.is_empty() && doc.tokens[i].surface.contains(needle));
    match target {
        Some(i) => Ok(ExpandedCase {
            id: case_id(&f.id, Some(identity), &text),
            functionality_id: f.id.clone(),
            identity: Some(identity.to_string()),
            text,
            gold: f.gold,
            target_token_index: Some(i),
        }),
        None => Err(HarnessError::PlaceholderResolution {
            template: template.to_string(),
            identity: identity.to_string(),
        }),
    }
}

/// One case per (template, identity) for templates with a placeholder, one
/// case per template otherwise.
pub fn expand(suite: &FunctionalSuite) -> Result<Vec<ExpandedCase>, HarnessError> {
    suite.validate()?;
    let mut cases = Vec::new();
    for f in &suite.functionalities {
        for template in &f.templates {
            if template.contains(IDENTITY_PLACEHOLDER) {
                for identity in &suite.identities {
                    cases.push(expand_one(f, template, identity)?);
                }
            } else {
                cases.push(ExpandedCase {
                    id: case_id(&f.id, None, template),
                    functionality_id: f.id.clone(),
                    identity: None,
                    text: template.clone(),
                    gold: f.gold,
                    target_token_index: None,
                });
            }
        }
    }
    Ok(cases)
}
