//! Account identities and pluggable signature schemes.
//!
//! An account is identified by the SHA-256 digest of its public key, so the
//! ledger never needs the key itself until a signature is checked. Two
//! schemes are provided behind one enum: real Ed25519 for production-shaped
//! runs, and a deterministic stub (hash of key and message) that is orders
//! of magnitude faster and trivially forgeable — strictly for tests and
//! high-volume simulations where cryptographic strength is irrelevant.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SigError {
    #[error("malformed account id: {0}")]
    MalformedAccountId(String),
    #[error("signature does not verify")]
    BadSignature,
}

/// SHA-256 of the account's public key. Serialized as 64 hex digits.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId(pub [u8; 32]);

impl AccountId {
    pub fn from_hex(s: &str) -> Result<Self, SigError> {
        let bytes = hex::decode(s).map_err(|_| SigError::MalformedAccountId(s.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| SigError::MalformedAccountId(s.to_string()))?;
        Ok(AccountId(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// The all-zeros id, used as the burn destination: no key hashes to it.
    pub fn zero() -> Self {
        AccountId([0u8; 32])
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AccountId({}…)", &self.to_hex()[..8])
    }
}

impl Serialize for AccountId {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for AccountId {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        AccountId::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Which signature scheme a simulation uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    #[default]
    Ed25519,
    /// Hash-based stand-in: fast, deterministic, and forgeable by anyone
    /// holding the public key. Test use only.
    Stub,
}

/// A keypair under one of the supported schemes.
#[derive(Clone)]
pub enum Keypair {
    Ed25519(ed25519_dalek::SigningKey),
    Stub { public: [u8; 32] },
}

impl Keypair {
    /// Deterministically derives a keypair from a 32-byte seed.
    pub fn from_seed(kind: SchemeKind, seed: [u8; 32]) -> Self {
        match kind {
            SchemeKind::Ed25519 => Keypair::Ed25519(ed25519_dalek::SigningKey::from_bytes(&seed)),
            SchemeKind::Stub => Keypair::Stub { public: seed },
        }
    }

    /// Derives the keypair a named simulation account uses: the seed is the
    /// digest of a fixed domain tag, the scenario seed, and the name.
    pub fn for_account(kind: SchemeKind, scenario_seed: u64, name: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"inblock-key");
        h.update(scenario_seed.to_le_bytes());
        h.update(name.as_bytes());
        Keypair::from_seed(kind, h.finalize().into())
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        match self {
            Keypair::Ed25519(sk) => sk.verifying_key().to_bytes(),
            Keypair::Stub { public } => *public,
        }
    }

    pub fn account_id(&self) -> AccountId {
        let mut h = Sha256::new();
        h.update(self.public_bytes());
        AccountId(h.finalize().into())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        match self {
            Keypair::Ed25519(sk) => {
                use ed25519_dalek::Signer;
                Signature {
                    public: self.public_bytes(),
                    bytes: sk.sign(message).to_bytes().to_vec(),
                }
            }
            Keypair::Stub { public } => {
                let mut h = Sha256::new();
                h.update(public);
                h.update(message);
                Signature {
                    public: *public,
                    bytes: h.finalize().to_vec(),
                }
            }
        }
    }
}

/// A signature plus the public key that made it. The key binds the signature
/// to an account: its digest must equal the sender's id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    #[serde(with = "hex_bytes32")]
    pub public: [u8; 32],
    #[serde(with = "hex_vec")]
    pub bytes: Vec<u8>,
}

impl Signature {
    pub fn signer(&self) -> AccountId {
        let mut h = Sha256::new();
        h.update(self.public);
        AccountId(h.finalize().into())
    }

    pub fn verify(&self, kind: SchemeKind, message: &[u8]) -> Result<(), SigError> {
        match kind {
            SchemeKind::Ed25519 => {
                let vk = ed25519_dalek::VerifyingKey::from_bytes(&self.public)
                    .map_err(|_| SigError::BadSignature)?;
                let sig_bytes: [u8; 64] =
                    self.bytes.as_slice().try_into().map_err(|_| SigError::BadSignature)?;
                let sig = ed25519_dalek::Signature::from_bytes(&sig_bytes);
                use ed25519_dalek::Verifier;
                vk.verify(message, &sig).map_err(|_| SigError::BadSignature)
            }
            SchemeKind::Stub => {
                let mut h = Sha256::new();
                h.update(self.public);
                h.update(message);
                if h.finalize().as_slice() == self.bytes.as_slice() {
                    Ok(())
                } else {
                    Err(SigError::BadSignature)
                }
            }
        }
    }

    /// Canonical wire form: public key then signature bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.bytes.len());
        out.extend_from_slice(&self.public);
        out.extend_from_slice(&self.bytes);
        out
    }
}

mod hex_bytes32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(de)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("expected 32 bytes"))
    }
}

mod hex_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        hex::decode(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ed25519_sign_verify_round_trip() {
        let kp = Keypair::for_account(SchemeKind::Ed25519, 0, "alice");
        let sig = kp.sign(b"hello");
        assert_eq!(sig.signer(), kp.account_id());
        sig.verify(SchemeKind::Ed25519, b"hello").unwrap();
        assert_eq!(
            sig.verify(SchemeKind::Ed25519, b"hello!"),
            Err(SigError::BadSignature)
        );
    }

    #[test]
    fn stub_sign_verify_round_trip() {
        let kp = Keypair::for_account(SchemeKind::Stub, 0, "alice");
        let sig = kp.sign(b"hello");
        assert_eq!(sig.signer(), kp.account_id());
        sig.verify(SchemeKind::Stub, b"hello").unwrap();
        assert_eq!(
            sig.verify(SchemeKind::Stub, b"hello!"),
            Err(SigError::BadSignature)
        );
    }

    #[test]
    fn tampered_signature_bytes_fail() {
        for kind in [SchemeKind::Ed25519, SchemeKind::Stub] {
            let kp = Keypair::for_account(kind, 7, "mallory");
            let mut sig = kp.sign(b"payload");
            sig.bytes[0] ^= 0x01;
            assert_eq!(sig.verify(kind, b"payload"), Err(SigError::BadSignature));
        }
    }

    #[test]
    fn derivation_is_deterministic_and_name_sensitive() {
        let a1 = Keypair::for_account(SchemeKind::Ed25519, 0, "alice").account_id();
        let a2 = Keypair::for_account(SchemeKind::Ed25519, 0, "alice").account_id();
        let b = Keypair::for_account(SchemeKind::Ed25519, 0, "bob").account_id();
        let a_seed1 = Keypair::for_account(SchemeKind::Ed25519, 1, "alice").account_id();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert_ne!(a1, a_seed1);
    }

    #[test]
    fn account_id_hex_round_trip() {
        let id = Keypair::for_account(SchemeKind::Stub, 0, "carol").account_id();
        let hex = id.to_hex();
        assert_eq!(hex.len(), 64);
        assert_eq!(AccountId::from_hex(&hex).unwrap(), id);
        assert!(AccountId::from_hex("zz").is_err());
        assert!(AccountId::from_hex("abcd").is_err());
        let json = serde_json::to_string(&id).unwrap();
        assert_eq!(json, format!("\"{hex}\""));
        assert_eq!(serde_json::from_str::<AccountId>(&json).unwrap(), id);
    }

    #[test]
    fn stub_key_is_its_own_seed() {
        // The stub scheme's public key is the seed itself, which is what
        // makes stub signatures reproducible from outside the process.
        let kp = Keypair::from_seed(SchemeKind::Stub, [9u8; 32]);
        assert_eq!(kp.public_bytes(), [9u8; 32]);
    }
}
