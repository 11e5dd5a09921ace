use super::{InjectionFlag, Severity, Span};
use regex::{Regex, RegexBuilder};
use serde::Deserialize;
use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;
use thiserror::Error;

/// The rules file compiled into the crate.
pub const BUILTIN_RULES_TOML: &str = include_str!("../../rules/default.toml");

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("cannot read rules file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed rules file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("rules file has an empty version")]
    MissingVersion,
    #[error("rule {id:?} has an invalid pattern: {source}")]
    Pattern {
        id: String,
        #[source]
        source: regex::Error,
    },
    #[error("rule id {0:?} must be non-empty kebab-case")]
    InvalidId(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesFile {
    version: String,
    #[serde(default, rename = "rule")]
    rules: Vec<RuleRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleRecord {
    id: String,
    severity: Severity,
    pattern: String,
    #[serde(default)]
    description: String,
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub id: String,
    pub severity: Severity,
    pub description: String,
    pattern: Regex,
}

impl Rule {
    pub fn pattern(&self) -> &str {
        self.pattern.as_str()
    }
}

/// A versioned, case-insensitive pattern rule set.
#[derive(Debug, Clone)]
pub struct RuleSet {
    version: String,
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn builtin() -> &'static RuleSet {
        static BUILTIN: OnceLock<RuleSet> = OnceLock::new();
        BUILTIN.get_or_init(|| RuleSet::from_toml(BUILTIN_RULES_TOML).expect("built-in rules compile"))
    }

    pub fn from_toml(source: &str) -> Result<Self, RulesError> {
        let file: RulesFile = toml::from_str(source)?;
        if file.version.trim().is_empty() {
            return Err(RulesError::MissingVersion);
        }
        let rules = file
            .rules
            .into_iter()
            .map(|record| {
                let valid_id = !record.id.is_empty()
                    && record.id.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
                if !valid_id {
                    return Err(RulesError::InvalidId(record.id));
                }
                let pattern = RegexBuilder::new(&record.pattern)
                    .case_insensitive(true)
                    .build()
                    .map_err(|source| RulesError::Pattern { id: record.id.clone(), source })?;
                Ok(Rule {
                    id: record.id,
                    severity: record.severity,
                    description: record.description,
                    pattern,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { version: file.version, rules })
    }

    pub fn load(path: &Path) -> Result<Self, RulesError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Flags every rule match in `text`, sorted by span. Never modifies the text.
    pub fn scan(&self, text: &str) -> Vec<InjectionFlag> {
        let mut seen = HashSet::new();
        let mut flags = Vec::new();
        for rule in &self.rules {
            for caps in rule.pattern.captures_iter(text) {
                let m = caps.name("flag").unwrap_or_else(|| caps.get(0).expect("whole match"));
                if m.is_empty() || !seen.insert((rule.id.as_str(), m.start(), m.end())) {
                    continue;
                }
                flags.push(InjectionFlag {
                    rule_id: rule.id.clone(),
                    severity: rule.severity,
                    span: Span::new(m.start(), m.end()),
                    excerpt: m.as_str().to_string(),
                    description: rule.description.clone(),
                });
            }
        }
        super::sort_flags(&mut flags);
        flags
    }
}
