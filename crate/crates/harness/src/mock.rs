//! Deterministic stand-in for a model API.
//!
//! `response = "R:" || hex(digest(FIELD, prompt))[..16] || ":" || rule(payload)`,
//! where the payload is the prompt text after its first newline (or the
//! whole prompt). Token counts are whitespace-separated word counts.

use std::collections::BTreeMap;

use certmem_core::canon::{digest, Blob, DomainTag, KeyPair, Nonce, PublicIdentity};
use certmem_core::enclave::{
    Completion, CompletionRequest, ModelProvider, ProviderError, ProviderHello, ProviderPublic,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// Uppercase and trim the payload.
    Clean,
    /// A digest-derived idea label and score that never repeats the prompt.
    Explore,
    /// Payload unchanged.
    Echo,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u64,
    pub token_in: u64,
    pub token_out: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// The next `n` completions fail at the transport layer.
    Transport(u32),
    /// Hellos are signed by a different key.
    Impostor,
}

pub fn word_count(bytes: &[u8]) -> u64 {
    bytes.split(|b| b.is_ascii_whitespace()).filter(|w| !w.is_empty()).count() as u64
}

fn payload(prompt: &[u8]) -> &[u8] {
    match prompt.iter().position(|b| *b == b'\n') {
        Some(i) => &prompt[i + 1..],
        None => prompt,
    }
}

pub fn respond(rule: Rule, prompt: &[u8]) -> Vec<u8> {
    let tag = digest(DomainTag::Field, prompt).to_hex();
    let mut out = format!("R:{}:", &tag[..16]).into_bytes();
    let p = payload(prompt);
    match rule {
        Rule::Clean => out.extend(String::from_utf8_lossy(p).trim().to_uppercase().into_bytes()),
        Rule::Explore => {
            let d = digest(DomainTag::Field, &[b"explore:".as_slice(), prompt].concat());
            out.extend(format!("idea-{} score {}", &d.to_hex()[..12], d.0[0] % 100).into_bytes());
        }
        Rule::Echo => out.extend_from_slice(p),
    }
    out
}

/// Strips the `R:<16 hex>:` prefix.
pub fn response_payload(response: &[u8]) -> Option<&[u8]> {
    if response.len() < 19 || &response[..2] != b"R:" || response[18] != b':' {
        return None;
    }
    if !response[2..18].iter().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    Some(&response[19..])
}

#[derive(Debug, Clone)]
pub struct MockProvider {
    key: KeyPair,
    endpoint: String,
    model_name: String,
    pub rule: Rule,
    pub fault: Fault,
    usage: BTreeMap<Blob, Usage>,
}

impl MockProvider {
    pub fn new(key: KeyPair, endpoint: &str, model_name: &str, rule: Rule) -> Self {
        MockProvider {
            key,
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            rule,
            fault: Fault::None,
            usage: BTreeMap::new(),
        }
    }

    /// Provider identity derived from a fixed seed, for the bundled gangs.
    pub fn standard(rule: Rule) -> Self {
        MockProvider::new(KeyPair::from_seed([0x4d; 32]), "mock://provider", "mock-llm-1", rule)
    }

    pub fn public(&self) -> ProviderPublic {
        ProviderPublic {
            endpoint: self.endpoint.clone(),
            provider_public: self.key.public(),
            model_name: self.model_name.clone(),
        }
    }

    pub fn provider_key(&self) -> PublicIdentity {
        self.key.public()
    }

    pub fn usage(&self, credential: &[u8]) -> Usage {
        self.usage.get(&Blob(credential.to_vec())).copied().unwrap_or_default()
    }

    pub fn total_usage(&self) -> Usage {
        self.usage.values().fold(Usage::default(), |a, u| Usage {
            calls: a.calls + u.calls,
            token_in: a.token_in + u.token_in,
            token_out: a.token_out + u.token_out,
        })
    }
}

impl ModelProvider for MockProvider {
    fn hello(&mut self, nonce: &Nonce) -> Result<ProviderHello, ProviderError> {
        let key = match self.fault {
            Fault::Impostor => KeyPair::from_seed([0x66; 32]),
            _ => self.key.clone(),
        };
        Ok(ProviderHello::sign(&key, &self.endpoint, &self.model_name, *nonce))
    }

    fn complete(&mut self, request: &CompletionRequest) -> Result<Completion, ProviderError> {
        if let Fault::Transport(n) = self.fault {
            self.fault = if n > 1 { Fault::Transport(n - 1) } else { Fault::None };
            return Err(ProviderError::Transport("injected transport fault".into()));
        }
        if request.model_name != self.model_name {
            return Err(ProviderError::Rejected(format!("unknown model {}", request.model_name)));
        }
        let prompt = request.prompt.as_slice();
        let response = respond(self.rule, prompt);
        let c = Completion {
            token_in: word_count(prompt),
            token_out: word_count(&response),
            response: Blob(response),
        };
        let u = self.usage.entry(request.credential.clone()).or_default();
        u.calls += 1;
        u.token_in += c.token_in;
        u.token_out += c.token_out;
        Ok(c)
    }
}
