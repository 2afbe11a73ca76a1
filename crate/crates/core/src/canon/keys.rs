use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{digest, DomainTag, PublicIdentity, Signature};

/// Ed25519 signing key.
///
/// Serializes as its 32-byte seed. That exists for the simulated enclave's
/// sealed state and the CLI's key files; nothing here is hardware-backed.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        KeyPair {
            signing: SigningKey::generate(rng),
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        KeyPair {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public(&self) -> PublicIdentity {
        PublicIdentity(self.signing.verifying_key().to_bytes())
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeyPair(public={})", self.public())
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.public() == other.public()
    }
}

impl Eq for KeyPair {}

impl Serialize for KeyPair {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::canon::Digest(self.seed()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for KeyPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        crate::canon::Digest::deserialize(d).map(|seed| KeyPair::from_seed(seed.0))
    }
}

/// Signs `digest(tag, payload)`.
pub fn sign(key: &KeyPair, tag: DomainTag, payload: &[u8]) -> Signature {
    let d = digest(tag, payload);
    Signature(key.signing.sign(d.as_bytes()).to_bytes())
}

pub fn verify(public: &PublicIdentity, tag: DomainTag, payload: &[u8], sig: &Signature) -> bool {
    verify_raw(public.as_bytes(), tag, payload, sig.as_bytes())
}

/// Verification over unchecked byte slices. Wrong lengths, invalid points
/// and bad signatures all yield `false`.
pub fn verify_raw(public: &[u8], tag: DomainTag, payload: &[u8], sig: &[u8]) -> bool {
    let Ok(pk_bytes) = <[u8; 32]>::try_from(public) else {
        return false;
    };
    let Ok(sig_bytes) = <[u8; 64]>::try_from(sig) else {
        return false;
    };
    let Ok(vk) = VerifyingKey::from_bytes(&pk_bytes) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig_bytes);
    let d = digest(tag, payload);
    vk.verify_strict(d.as_bytes(), &sig).is_ok()
}
