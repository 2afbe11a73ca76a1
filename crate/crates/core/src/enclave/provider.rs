//! The model-provider boundary seen from inside the enclave.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::attest::ProviderPublic;
use crate::canon::{encode_canonical, sign, verify, Blob, DomainTag, KeyPair, Nonce, PublicIdentity, Signature, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider rejected the request: {0}")]
    Rejected(String),
}

/// Signed answer to the enclave's freshness challenge; stands in for a
/// pinned TLS handshake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderHello {
    pub provider: PublicIdentity,
    pub endpoint: String,
    pub model_name: String,
    pub nonce: Nonce,
    pub signature: Signature,
}

fn hello_payload(endpoint: &str, model_name: &str, nonce: &Nonce) -> Vec<u8> {
    encode_canonical(&Value::record([
        Value::bytes(endpoint),
        Value::bytes(model_name),
        Value::bytes(nonce),
    ]))
    .into_vec()
}

impl ProviderHello {
    pub fn sign(key: &KeyPair, endpoint: &str, model_name: &str, nonce: Nonce) -> Self {
        ProviderHello {
            provider: key.public(),
            endpoint: endpoint.to_string(),
            model_name: model_name.to_string(),
            nonce,
            signature: sign(key, DomainTag::Hello, &hello_payload(endpoint, model_name, &nonce)),
        }
    }

    pub fn verify(&self, expected: &ProviderPublic, nonce: &Nonce) -> bool {
        self.provider == expected.provider_public
            && self.endpoint == expected.endpoint
            && self.model_name == expected.model_name
            && self.nonce == *nonce
            && verify(
                &self.provider,
                DomainTag::Hello,
                &hello_payload(&self.endpoint, &self.model_name, &self.nonce),
                &self.signature,
            )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_name: String,
    pub prompt: Blob,
    pub credential: Blob,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub response: Blob,
    pub token_in: u64,
    pub token_out: u64,
}

/// Adapter for a model API. Only the harness mock implements it.
pub trait ModelProvider {
    fn hello(&mut self, nonce: &Nonce) -> Result<ProviderHello, ProviderError>;
    fn complete(&mut self, request: &CompletionRequest) -> Result<Completion, ProviderError>;
}

/// Fixed sentinel written over every credential occurrence.
pub const REDACTION_MASK: &[u8; 8] = b"[REDACT]";

/// Replaces exact occurrences of `secret` with [`REDACTION_MASK`] until none
/// remain. If replacement keeps recreating the secret the whole input is
/// masked, or dropped when the secret is part of the mask itself.
pub fn redact(input: &[u8], secret: &[u8]) -> Vec<u8> {
    if secret.is_empty() {
        return input.to_vec();
    }
    let mut current = input.to_vec();
    for _ in 0..16 {
        if !contains(&current, secret) {
            return current;
        }
        let mut out = Vec::with_capacity(current.len());
        let mut i = 0;
        while i < current.len() {
            if current[i..].starts_with(secret) {
                out.extend_from_slice(REDACTION_MASK);
                i += secret.len();
            } else {
                out.push(current[i]);
                i += 1;
            }
        }
        current = out;
    }
    if !contains(&current, secret) {
        current
    } else if contains(REDACTION_MASK, secret) {
        Vec::new()
    } else {
        REDACTION_MASK.to_vec()
    }
}

pub(crate) fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}
