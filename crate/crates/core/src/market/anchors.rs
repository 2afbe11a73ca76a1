//! Append-only bulletin of signed log-root anchors.

use serde::{Deserialize, Serialize};

use crate::canon::{encode_canonical, sign, verify, DomainTag, KeyPair, PublicIdentity, Signature, Value};
use crate::enclave::SignedAnchor;
use crate::gang::GangRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorEntry {
    pub position: u64,
    pub anchor: SignedAnchor,
    pub received_at: u64,
    pub platform_signature: Signature,
}

fn entry_body(position: u64, anchor: &SignedAnchor, received_at: u64) -> Vec<u8> {
    let c = &anchor.commitment;
    encode_canonical(&Value::record([
        Value::Uint(position),
        Value::bytes(c.agent),
        Value::record([Value::Uint(c.root.length), Value::bytes(c.root.root)]),
        Value::Uint(c.wallclock),
        Value::bytes(anchor.signature),
        Value::Uint(received_at),
    ]))
    .into_vec()
}

impl AnchorEntry {
    pub(crate) fn countersign(platform: &KeyPair, position: u64, anchor: SignedAnchor, received_at: u64) -> Self {
        let platform_signature = sign(platform, DomainTag::Bulletin, &entry_body(position, &anchor, received_at));
        AnchorEntry {
            position,
            anchor,
            received_at,
            platform_signature,
        }
    }

    /// Agent signature and platform countersignature.
    pub fn verify(&self, platform: &PublicIdentity) -> bool {
        self.anchor.verify()
            && verify(
                platform,
                DomainTag::Bulletin,
                &entry_body(self.position, &self.anchor, self.received_at),
                &self.platform_signature,
            )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnchorClass {
    /// No vulnerability notice covers the agent's security version.
    Unaffected,
    /// Received before the notice was published.
    PreWindowCredible { notice: u64 },
    /// Received at or after publication.
    Affected { notice: u64 },
    /// The agent has no certificate on this platform.
    Uncertified,
}

/// Classification uses the platform receive time, not the agent's wallclock.
pub fn classify(entry: &AnchorEntry, registry: &GangRegistry) -> AnchorClass {
    let Some(member) = registry.member_by_agent(&entry.anchor.commitment.agent) else {
        return AnchorClass::Uncertified;
    };
    match registry.notice_for(member.cert.security_version) {
        None => AnchorClass::Unaffected,
        Some(n) if entry.received_at < n.published_at => AnchorClass::PreWindowCredible { notice: n.id },
        Some(n) => AnchorClass::Affected { notice: n.id },
    }
}
