use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::RwLock;
use thiserror::Error;
use viva_core::guard::sha256_hex;
use viva_core::session::SessionId;

pub const DEFAULT_COHORT: &str = "default";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Student,
    Invigilator,
    Assessor,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Student, Role::Invigilator, Role::Assessor];
}

/// Who a bearer token speaks for. Students are scoped to one session;
/// invigilators and assessors to a cohort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Principal {
    Student { session: SessionId },
    Staff { role: Role, cohort: String },
}

impl Principal {
    pub fn role(&self) -> Role {
        match self {
            Principal::Student { .. } => Role::Student,
            Principal::Staff { role, .. } => *role,
        }
    }

    /// True when the principal may touch `session` of `cohort`.
    pub fn covers(&self, session: &SessionId, cohort: &str) -> bool {
        match self {
            Principal::Student { session: own } => own == session,
            Principal::Staff { cohort: own, .. } => own == cohort,
        }
    }
}

#[derive(Debug, Error)]
pub enum TokenFileError {
    #[error("cannot read token file: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid token file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("token file entries must be invigilator or assessor tokens")]
    StudentToken,
    #[error("token file contains an empty token")]
    EmptyToken,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenFile {
    #[serde(default)]
    token: Vec<StaffToken>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StaffToken {
    token: String,
    role: Role,
    #[serde(default = "default_cohort")]
    cohort: String,
}

fn default_cohort() -> String {
    DEFAULT_COHORT.to_string()
}

/// Bearer tokens, held only as SHA-256 digests.
#[derive(Debug, Default)]
pub struct TokenRegistry {
    by_digest: RwLock<HashMap<String, Principal>>,
}

impl TokenRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads staff tokens from TOML: `[[token]] token = "…" role = "assessor" cohort = "…"`.
    pub fn from_toml(source: &str) -> Result<Self, TokenFileError> {
        let file: TokenFile = toml::from_str(source)?;
        let registry = Self::new();
        for entry in file.token {
            if entry.role == Role::Student {
                return Err(TokenFileError::StudentToken);
            }
            if entry.token.trim().is_empty() {
                return Err(TokenFileError::EmptyToken);
            }
            registry.insert(&entry.token, Principal::Staff { role: entry.role, cohort: entry.cohort });
        }
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self, TokenFileError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn digest(token: &str) -> String {
        sha256_hex(token.as_bytes())
    }

    pub fn insert(&self, token: &str, principal: Principal) {
        self.insert_digest(Self::digest(token), principal);
    }

    pub fn insert_digest(&self, digest: String, principal: Principal) {
        self.by_digest.write().unwrap().insert(digest, principal);
    }

    pub fn resolve(&self, token: &str) -> Option<Principal> {
        self.by_digest.read().unwrap().get(&Self::digest(token)).cloned()
    }

    /// Issues a fresh student token for `session`, returning the token and its digest.
    pub fn issue_student(&self, session: &SessionId) -> (String, String) {
        let token = format!("stu-{}", uuid::Uuid::new_v4().simple());
        let digest = Self::digest(&token);
        self.insert_digest(digest.clone(), Principal::Student { session: session.clone() });
        (token, digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_staff_tokens() {
        let registry = TokenRegistry::from_toml(
            r#"
[[token]]
token = "inv-1"
role = "invigilator"
cohort = "hist-101"

[[token]]
token = "ass-1"
role = "assessor"
"#,
        )
        .unwrap();
        assert_eq!(
            registry.resolve("inv-1"),
            Some(Principal::Staff { role: Role::Invigilator, cohort: "hist-101".into() })
        );
        assert_eq!(registry.resolve("ass-1").unwrap().role(), Role::Assessor);
        assert_eq!(registry.resolve("nope"), None);
    }

    #[test]
    fn student_tokens_cannot_be_provisioned_by_file() {
        let source = "[[token]]\ntoken = \"s\"\nrole = \"student\"\n";
        assert!(matches!(TokenRegistry::from_toml(source), Err(TokenFileError::StudentToken)));
    }

    #[test]
    fn student_tokens_are_session_scoped() {
        let registry = TokenRegistry::new();
        let a = SessionId::new("a").unwrap();
        let (token, _) = registry.issue_student(&a);
        let principal = registry.resolve(&token).unwrap();
        assert!(principal.covers(&a, "any"));
        assert!(!principal.covers(&SessionId::new("b").unwrap(), "any"));
    }
}
