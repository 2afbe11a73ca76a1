//! Artifact encryption for off-platform delivery.
//!
//! The listing names the hash of the plaintext container; the ciphertext and
//! key travel directly from seller to buyer.

use anyhow::{anyhow, Result};
use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce as AeadNonce};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use certmem_core::canon::{Blob, Digest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyDelivery {
    pub trade_id: u64,
    pub key: Digest,
    pub nonce: Blob,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedArtifact {
    pub ciphertext: Blob,
    pub delivery: KeyDelivery,
}

pub fn encrypt<R: RngCore>(rng: &mut R, trade_id: u64, container: &[u8]) -> Result<SealedArtifact> {
    let mut key = [0u8; 32];
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut key);
    rng.fill_bytes(&mut nonce);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    let ciphertext = cipher
        .encrypt(AeadNonce::from_slice(&nonce), container)
        .map_err(|_| anyhow!("encryption failed"))?;
    Ok(SealedArtifact {
        ciphertext: Blob(ciphertext),
        delivery: KeyDelivery {
            trade_id,
            key: Digest(key),
            nonce: Blob(nonce.to_vec()),
        },
    })
}

pub fn decrypt(ciphertext: &[u8], delivery: &KeyDelivery) -> Result<Vec<u8>> {
    if delivery.nonce.0.len() != 12 {
        return Err(anyhow!("bad nonce length"));
    }
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&delivery.key.0));
    cipher
        .decrypt(AeadNonce::from_slice(&delivery.nonce.0), ciphertext)
        .map_err(|_| anyhow!("ciphertext does not authenticate under the delivered key"))
}
