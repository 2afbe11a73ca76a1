//! Measurements, attestation reports and the simulated vendor root.

use serde::{Deserialize, Serialize};

use crate::canon::{
    digest, digest_value, encode_canonical, sign, verify, Digest, DomainTag, KeyPair, Nonce,
    PublicIdentity, Signature, Value,
};

const VENDOR_SEED_HEX: &str = include_str!("../../keys/vendor_root.seed.hex");
const VENDOR_PUBLIC_HEX: &str = include_str!("../../keys/vendor_root.pub.hex");

/// Public key of the simulated hardware vendor.
pub fn vendor_root_public() -> PublicIdentity {
    PublicIdentity::from_hex(VENDOR_PUBLIC_HEX).expect("bundled vendor key is valid hex")
}

/// The simulated vendor signing key. Its seed ships in the repository, so
/// it is a test fixture, never a trust anchor.
pub(crate) fn vendor_root_key() -> KeyPair {
    KeyPair::from_seed(Digest::from_hex(VENDOR_SEED_HEX).expect("bundled vendor seed is valid hex").0)
}

pub fn task_hash(task_description: &str) -> Digest {
    digest(DomainTag::Cert, &encode_canonical(&Value::bytes(task_description)))
}

pub fn owner_seed_hash(owner_seed: &[u8; 32]) -> Digest {
    digest(DomainTag::Cert, &encode_canonical(&Value::bytes(owner_seed)))
}

/// Owner signing key derived from the owner's seed.
pub fn owner_key(owner_seed: &[u8; 32]) -> KeyPair {
    KeyPair::from_seed(digest(DomainTag::Inherit, &encode_canonical(&Value::bytes(owner_seed))).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    pub image_template_hash: Digest,
    pub task_description_hash: Digest,
    pub slot_id: u64,
    pub owner_seed_hash: Digest,
    pub value: Digest,
}

impl Measurement {
    pub fn compute(image_template_hash: Digest, task_description_hash: Digest, slot_id: u64, owner_seed_hash: Digest) -> Self {
        let value = measurement_value(&image_template_hash, &task_description_hash, slot_id, &owner_seed_hash);
        Measurement {
            image_template_hash,
            task_description_hash,
            slot_id,
            owner_seed_hash,
            value,
        }
    }

    pub fn is_consistent(&self) -> bool {
        measurement_value(
            &self.image_template_hash,
            &self.task_description_hash,
            self.slot_id,
            &self.owner_seed_hash,
        ) == self.value
    }
}

pub fn measurement_value(image: &Digest, task: &Digest, slot_id: u64, owner_seed_hash: &Digest) -> Digest {
    digest_value(
        DomainTag::Cert,
        &Value::record([
            Value::bytes(image),
            Value::bytes(task),
            Value::Uint(slot_id),
            Value::bytes(owner_seed_hash),
        ]),
    )
}

/// The parts of a provider configuration that may be published.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProviderPublic {
    pub endpoint: String,
    pub provider_public: PublicIdentity,
    pub model_name: String,
}

impl ProviderPublic {
    pub fn value(&self) -> Value {
        Value::record([
            Value::bytes(&self.endpoint),
            Value::bytes(self.provider_public),
            Value::bytes(&self.model_name),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub public: ProviderPublic,
    /// API token; never leaves the enclave and never enters a commitment.
    pub credential: crate::canon::Blob,
}

pub fn gang_config_hash(measurement_value: &Digest, provider: &ProviderPublic) -> Digest {
    digest_value(
        DomainTag::Cert,
        &Value::record([Value::bytes(measurement_value), provider.value()]),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationReport {
    pub measurement: Measurement,
    pub security_version: u64,
    pub agent_public: PublicIdentity,
    pub nonce: Nonce,
    pub vendor_signature: Signature,
}

pub(crate) fn report_payload(measurement_value: &Digest, security_version: u64, agent: &PublicIdentity, nonce: &Nonce) -> Vec<u8> {
    encode_canonical(&Value::record([
        Value::bytes(measurement_value),
        Value::Uint(security_version),
        Value::bytes(agent),
        Value::bytes(nonce),
    ]))
    .into_vec()
}

impl AttestationReport {
    pub(crate) fn issue(measurement: Measurement, security_version: u64, agent_public: PublicIdentity, nonce: Nonce) -> Self {
        let payload = report_payload(&measurement.value, security_version, &agent_public, &nonce);
        AttestationReport {
            measurement,
            security_version,
            agent_public,
            nonce,
            vendor_signature: sign(&vendor_root_key(), DomainTag::Cert, &payload),
        }
    }

    /// Vendor signature and internal measurement consistency. Freshness is
    /// the relying party's job.
    pub fn verify(&self, vendor_root: &PublicIdentity) -> bool {
        let payload = report_payload(&self.measurement.value, self.security_version, &self.agent_public, &self.nonce);
        self.measurement.is_consistent() && verify(vendor_root, DomainTag::Cert, &payload, &self.vendor_signature)
    }
}
