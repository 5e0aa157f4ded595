//! HS256 bearer tokens, PBKDF2 password hashes and login throttling.

use base64::engine::general_purpose::{STANDARD_NO_PAD, URL_SAFE_NO_PAD};
use base64::Engine as _;
use hmac::{Hmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use std::collections::{HashMap, VecDeque};
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

pub const TOKEN_TTL_S: u64 = 24 * 3600;
pub const MAX_FAILURES_PER_MINUTE: usize = 10;
pub const DEFAULT_PBKDF2_ROUNDS: u32 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Operator,
    Gateway,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claims {
    pub sub: String,
    pub role: Role,
    pub iat: u64,
    pub exp: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("malformed token")]
    Malformed,
    #[error("unsupported token algorithm")]
    Algorithm,
    #[error("bad token signature")]
    Signature,
    #[error("token expired")]
    Expired,
}

#[derive(Serialize, Deserialize)]
struct Header {
    alg: String,
    typ: String,
}

#[derive(Clone)]
pub struct TokenSigner {
    secret: Vec<u8>,
}

impl std::fmt::Debug for TokenSigner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TokenSigner(..)")
    }
}

impl TokenSigner {
    pub fn new(secret: impl Into<Vec<u8>>) -> Self {
        Self {
            secret: secret.into(),
        }
    }

    fn mac(&self) -> HmacSha256 {
        HmacSha256::new_from_slice(&self.secret).expect("hmac accepts any key length")
    }

    pub fn issue(&self, sub: &str, role: Role, now: u64, ttl_s: u64) -> (String, Claims) {
        let claims = Claims {
            sub: sub.to_string(),
            role,
            iat: now,
            exp: now + ttl_s,
        };
        let header = Header {
            alg: "HS256".into(),
            typ: "JWT".into(),
        };
        let head = URL_SAFE_NO_PAD.encode(serde_json::to_vec(&header).expect("header serializes"));
        let body = URL_SAFE_NO_PAD.encode(serde_json::to_vec(&claims).expect("claims serialize"));
        let signing_input = format!("{head}.{body}");
        let mut mac = self.mac();
        mac.update(signing_input.as_bytes());
        let sig = URL_SAFE_NO_PAD.encode(mac.finalize().into_bytes());
        (format!("{signing_input}.{sig}"), claims)
    }

    pub fn verify(&self, token: &str, now: u64) -> Result<Claims, TokenError> {
        let mut parts = token.split('.');
        let (Some(head), Some(body), Some(sig), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(TokenError::Malformed);
        };
        let header: Header = URL_SAFE_NO_PAD
            .decode(head)
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .ok_or(TokenError::Malformed)?;
        if header.alg != "HS256" {
            return Err(TokenError::Algorithm);
        }
        let sig = URL_SAFE_NO_PAD.decode(sig).map_err(|_| TokenError::Malformed)?;
        let mut mac = self.mac();
        mac.update(head.as_bytes());
        mac.update(b".");
        mac.update(body.as_bytes());
        mac.verify_slice(&sig).map_err(|_| TokenError::Signature)?;
        let claims: Claims = URL_SAFE_NO_PAD
            .decode(body)
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .ok_or(TokenError::Malformed)?;
        if now >= claims.exp {
            return Err(TokenError::Expired);
        }
        Ok(claims)
    }
}

/// `pbkdf2-sha256$<rounds>$<salt b64>$<hash b64>`
pub fn hash_password(password: &str, rounds: u32) -> String {
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    let mut out = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), &salt, rounds, &mut out);
    format!(
        "pbkdf2-sha256${rounds}${}${}",
        STANDARD_NO_PAD.encode(salt),
        STANDARD_NO_PAD.encode(out)
    )
}

pub fn verify_password(password: &str, encoded: &str) -> bool {
    let parts: Vec<&str> = encoded.split('$').collect();
    let [scheme, rounds, salt, hash] = parts.as_slice() else {
        return false;
    };
    if *scheme != "pbkdf2-sha256" {
        return false;
    }
    let (Ok(rounds), Ok(salt), Ok(expected)) = (
        rounds.parse::<u32>(),
        STANDARD_NO_PAD.decode(salt),
        STANDARD_NO_PAD.decode(hash),
    ) else {
        return false;
    };
    if rounds == 0 || expected.is_empty() {
        return false;
    }
    let mut out = vec![0u8; expected.len()];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), &salt, rounds, &mut out);
    out.iter().zip(&expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserEntry {
    pub username: String,
    pub role: Role,
    pub password_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub users: Vec<UserEntry>,
}

impl Credentials {
    pub fn find(&self, username: &str) -> Option<&UserEntry> {
        self.users.iter().find(|u| u.username == username)
    }
}

/// Failed-login counter per account over a sliding minute.
#[derive(Debug, Default)]
pub struct LoginThrottle {
    failures: HashMap<String, VecDeque<u64>>,
}

impl LoginThrottle {
    fn prune(q: &mut VecDeque<u64>, now: u64) {
        while q.front().is_some_and(|&t| t + 60 <= now) {
            q.pop_front();
        }
    }

    pub fn is_locked(&mut self, username: &str, now: u64) -> bool {
        match self.failures.get_mut(username) {
            Some(q) => {
                Self::prune(q, now);
                q.len() >= MAX_FAILURES_PER_MINUTE
            }
            None => false,
        }
    }

    pub fn record_failure(&mut self, username: &str, now: u64) {
        let q = self.failures.entry(username.to_string()).or_default();
        Self::prune(q, now);
        q.push_back(now);
    }

    pub fn clear(&mut self, username: &str) {
        self.failures.remove(username);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_roundtrip_and_expiry() {
        let s = TokenSigner::new(b"secret".to_vec());
        let (tok, claims) = s.issue("op", Role::Operator, 1000, TOKEN_TTL_S);
        assert_eq!(s.verify(&tok, 1000).unwrap(), claims);
        assert_eq!(claims.exp, 1000 + 86_400);
        assert_eq!(s.verify(&tok, 1000 + 86_400), Err(TokenError::Expired));
    }

    #[test]
    fn tampered_or_foreign_tokens_fail() {
        let s = TokenSigner::new(b"secret".to_vec());
        let (tok, _) = s.issue("op", Role::Gateway, 0, 60);
        let other = TokenSigner::new(b"other".to_vec());
        assert_eq!(other.verify(&tok, 1), Err(TokenError::Signature));
        let parts: Vec<&str> = tok.split('.').collect();
        let forged_claims = URL_SAFE_NO_PAD.encode(br#"{"sub":"op","role":"operator","iat":0,"exp":60}"#);
        let forged = format!("{}.{}.{}", parts[0], forged_claims, parts[2]);
        assert_eq!(s.verify(&forged, 1), Err(TokenError::Signature));
        assert_eq!(s.verify("a.b", 1), Err(TokenError::Malformed));
        let none_alg = URL_SAFE_NO_PAD.encode(br#"{"alg":"none","typ":"JWT"}"#);
        assert_eq!(
            s.verify(&format!("{none_alg}.{}.", parts[1]), 1),
            Err(TokenError::Algorithm)
        );
    }

    #[test]
    fn password_hashes_verify() {
        let h = hash_password("hunter2", 1000);
        assert!(verify_password("hunter2", &h));
        assert!(!verify_password("hunter3", &h));
        assert!(!verify_password("hunter2", "plain"));
        assert_ne!(h, hash_password("hunter2", 1000));
    }

    #[test]
    fn throttle_locks_after_ten_failures_in_a_minute() {
        let mut t = LoginThrottle::default();
        for i in 0..10 {
            assert!(!t.is_locked("op", 100 + i));
            t.record_failure("op", 100 + i);
        }
        assert!(t.is_locked("op", 110));
        assert!(!t.is_locked("other", 110));
        assert!(!t.is_locked("op", 170));
    }
}
