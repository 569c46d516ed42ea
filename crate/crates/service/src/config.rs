//! Service configuration (TOML).
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! storage_dir = "./palmwatch-data"
//! token_ttl_seconds = 3600
//!
//! [[gateways]]
//! token = "gw-secret-1"
//! gateway_id = "gw-1"
//! farm_id = "farm-a"
//! cluster_id = "c1"
//!
//! [[users]]
//! user_id = "alice"
//! display_name = "Alice"
//! password_hash = "$argon2id$v=19$..."   # see examples/hash_password.rs
//! role = "admin"                         # admin | viewer
//! farms = ["farm-a"]
//!
//! [[farms]]
//! farm_id = "farm-a"
//! name = "North grove"
//! owners = ["alice"]
//! clusters = ["c1"]
//!
//! [detector]                             # any DetectorConfig key
//! whisker_ratio_min = 1.3
//! ```

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use palmwatch::detector::DetectorConfig;
use palmwatch::model::FarmRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auth::Role;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid service config: {0}")]
    Parse(String),
    #[error("invalid service config: {0}")]
    Invalid(String),
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_ttl() -> i64 {
    3600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    pub storage_dir: PathBuf,
    #[serde(default = "default_ttl")]
    pub token_ttl_seconds: i64,
    #[serde(default)]
    pub gateways: Vec<GatewayCredential>,
    #[serde(default)]
    pub users: Vec<UserAccount>,
    #[serde(default)]
    pub farms: Vec<FarmRecord>,
    #[serde(default)]
    pub detector: DetectorConfig,
}

/// Static credential one gateway presents on ingest endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayCredential {
    pub token: String,
    pub gateway_id: String,
    pub farm_id: String,
    pub cluster_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserAccount {
    pub user_id: String,
    #[serde(default)]
    pub display_name: String,
    /// PHC-format argon2 hash; the clear password is never stored.
    pub password_hash: String,
    pub role: Role,
    #[serde(default)]
    pub farms: BTreeSet<String>,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.token_ttl_seconds <= 0 {
            return Err(ConfigError::Invalid("token_ttl_seconds must be positive".into()));
        }
        let mut tokens = BTreeSet::new();
        for g in &self.gateways {
            if g.token.is_empty() || !tokens.insert(g.token.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "gateway {}: token must be non-empty and unique",
                    g.gateway_id
                )));
            }
        }
        let mut users = BTreeSet::new();
        for u in &self.users {
            if !users.insert(u.user_id.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate user_id {}", u.user_id)));
            }
            if argon2::PasswordHash::new(&u.password_hash).is_err() {
                return Err(ConfigError::Invalid(format!(
                    "user {}: password_hash is not a PHC string",
                    u.user_id
                )));
            }
        }
        let mut farms = BTreeSet::new();
        for f in &self.farms {
            if !farms.insert(f.farm_id.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate farm_id {}", f.farm_id)));
            }
        }
        Ok(())
    }

    pub fn gateway_by_token(&self, token: &str) -> Option<&GatewayCredential> {
        self.gateways.iter().find(|g| g.token == token)
    }

    pub fn user(&self, user_id: &str) -> Option<&UserAccount> {
        self.users.iter().find(|u| u.user_id == user_id)
    }

    pub fn farm(&self, farm_id: &str) -> Option<&FarmRecord> {
        self.farms.iter().find(|f| f.farm_id == farm_id)
    }
}
