//! Password hashing, login and bearer sessions.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use argon2::password_hash::rand_core::OsRng;
use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::config::ServiceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Viewer,
    Admin,
}

/// Hashes a password into a PHC string suitable for the config file.
pub fn hash_password(password: &str) -> String {
    let salt = SaltString::generate(&mut OsRng);
    Argon2::default()
        .hash_password(password.as_bytes(), &salt)
        .expect("argon2 with default params accepts any password")
        .to_string()
}

pub fn verify_password(password: &str, phc: &str) -> bool {
    PasswordHash::new(phc)
        .map(|h| Argon2::default().verify_password(password.as_bytes(), &h).is_ok())
        .unwrap_or(false)
}

// Verified against when the user id is unknown, so both failure paths cost the same.
fn decoy_hash() -> &'static str {
    static DECOY: OnceLock<String> = OnceLock::new();
    DECOY.get_or_init(|| hash_password("decoy password, never matches"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub user_id: String,
    pub role: Role,
    pub farms: BTreeSet<String>,
    pub expires_at: DateTime<Utc>,
}

impl Session {
    pub fn can_access(&self, farm_id: &str) -> bool {
        self.farms.contains(farm_id)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LoginGrant {
    pub token: String,
    pub user_id: String,
    pub role: Role,
    pub farms: BTreeSet<String>,
    pub expires_at: DateTime<Utc>,
}

/// Issued bearer tokens. Expired tokens are rejected and purged lazily.
pub struct Sessions {
    clock: Arc<dyn Clock>,
    ttl: Duration,
    tokens: Mutex<HashMap<String, Session>>,
}

impl Sessions {
    pub fn new(clock: Arc<dyn Clock>, ttl_seconds: i64) -> Self {
        Self {
            clock,
            ttl: Duration::seconds(ttl_seconds),
            tokens: Mutex::new(HashMap::new()),
        }
    }

    /// Checks credentials and issues a token. Unknown users and wrong
    /// passwords are indistinguishable to the caller.
    pub fn login(&self, config: &ServiceConfig, user_id: &str, password: &str) -> Option<LoginGrant> {
        let user = config.user(user_id);
        let phc = user.map_or(decoy_hash(), |u| u.password_hash.as_str());
        let ok = verify_password(password, phc);
        let user = user.filter(|_| ok)?;

        let token = uuid::Uuid::new_v4().simple().to_string();
        let session = Session {
            user_id: user.user_id.clone(),
            role: user.role,
            farms: user.farms.clone(),
            expires_at: self.clock.now() + self.ttl,
        };
        self.tokens.lock().expect("session lock").insert(token.clone(), session.clone());
        Some(LoginGrant {
            token,
            user_id: session.user_id,
            role: session.role,
            farms: session.farms,
            expires_at: session.expires_at,
        })
    }

    pub fn resolve(&self, token: &str) -> Option<Session> {
        let now = self.clock.now();
        let mut tokens = self.tokens.lock().expect("session lock");
        match tokens.get(token) {
            Some(s) if s.expires_at > now => Some(s.clone()),
            Some(_) => {
                tokens.remove(token);
                None
            }
            None => None,
        }
    }
}

/// Extracts the token from an `Authorization: Bearer <token>` header value.
pub fn bearer(header: Option<&str>) -> Option<&str> {
    let value = header?.trim();
    let (scheme, token) = value.split_once(' ')?;
    (scheme.eq_ignore_ascii_case("bearer") && !token.trim().is_empty()).then(|| token.trim())
}
