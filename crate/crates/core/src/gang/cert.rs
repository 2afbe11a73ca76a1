use serde::{Deserialize, Serialize};

use crate::canon::{
    digest, encode_canonical, frame, sign, to_canonical, unframe, verify, CanonError, ContainerKind, Digest, DomainTag,
    KeyPair, PublicIdentity, Signature, Value,
};
use crate::enclave::{gang_config_hash, measurement_value, AttestationReport};
use crate::ledger::GenesisInputs;

use super::GangTemplate;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipCertificate {
    pub gang_id: Digest,
    pub slot_id: u64,
    pub agent_public: PublicIdentity,
    pub measurement_value: Digest,
    /// Lets peers recompute the measurement offline and spot shared owners.
    pub owner_seed_hash: Digest,
    pub security_version: u64,
    pub issued_at: u64,
    pub platform_signature: Signature,
}

impl MembershipCertificate {
    fn body(&self) -> Vec<u8> {
        encode_canonical(&Value::record([
            Value::bytes(self.gang_id),
            Value::Uint(self.slot_id),
            Value::bytes(self.agent_public),
            Value::bytes(self.measurement_value),
            Value::bytes(self.owner_seed_hash),
            Value::Uint(self.security_version),
            Value::Uint(self.issued_at),
        ]))
        .into_vec()
    }

    pub(crate) fn issue(platform: &KeyPair, gang_id: &Digest, report: &AttestationReport, at: u64) -> Self {
        let mut c = MembershipCertificate {
            gang_id: *gang_id,
            slot_id: report.measurement.slot_id,
            agent_public: report.agent_public,
            measurement_value: report.measurement.value,
            owner_seed_hash: report.measurement.owner_seed_hash,
            security_version: report.security_version,
            issued_at: at,
            platform_signature: Signature([0; 64]),
        };
        c.platform_signature = sign(platform, DomainTag::Cert, &c.body());
        c
    }

    /// Digest of the signed body.
    pub fn id(&self) -> Digest {
        digest(DomainTag::Cert, &self.body())
    }

    pub fn verify_signature(&self, platform: &PublicIdentity) -> bool {
        verify(platform, DomainTag::Cert, &self.body(), &self.platform_signature)
    }

    /// Genesis inputs of this member's log.
    pub fn genesis_inputs(&self, template: &GangTemplate) -> GenesisInputs {
        GenesisInputs {
            gang_config_hash: gang_config_hash(&self.measurement_value, &template.model_provider),
            agent: self.agent_public,
        }
    }
}

/// Offline check: platform signature, gang id and measurement recomputed
/// from the template.
pub fn verify_certificate(cert: &MembershipCertificate, template: &GangTemplate, platform: &PublicIdentity) -> bool {
    cert.gang_id == template.gang_id()
        && measurement_value(&template.image_template_hash, &template.task_hash(), cert.slot_id, &cert.owner_seed_hash)
            == cert.measurement_value
        && cert.verify_signature(platform)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertStatus {
    Current,
    Superseded { by: Digest },
    Vulnerable { notice: u64 },
    Unknown,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberListEntry {
    pub cert: MembershipCertificate,
    pub superseded_by: Option<Digest>,
    pub vulnerability: Option<u64>,
}

/// Versioned, platform-signed directory of a gang.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberList {
    pub gang_id: Digest,
    pub version: u64,
    pub members: Vec<MemberListEntry>,
    pub issued_at: u64,
    pub signature: Signature,
}

impl MemberList {
    fn body(gang_id: &Digest, version: u64, members: &[MemberListEntry], issued_at: u64) -> Vec<u8> {
        to_canonical(&(gang_id, version, members, issued_at))
            .expect("member lists encode")
            .into_vec()
    }

    pub(crate) fn sign(platform: &KeyPair, gang_id: Digest, version: u64, members: Vec<MemberListEntry>, issued_at: u64) -> Self {
        let signature = sign(platform, DomainTag::Directory, &Self::body(&gang_id, version, &members, issued_at));
        MemberList {
            gang_id,
            version,
            members,
            issued_at,
            signature,
        }
    }

    pub fn verify(&self, platform: &PublicIdentity) -> bool {
        verify(
            platform,
            DomainTag::Directory,
            &Self::body(&self.gang_id, self.version, &self.members, self.issued_at),
            &self.signature,
        )
    }

    pub fn to_container(&self) -> Result<Vec<u8>, CanonError> {
        frame(ContainerKind::MemberList, self)
    }

    pub fn from_container(bytes: &[u8]) -> Result<Self, CanonError> {
        unframe(ContainerKind::MemberList, bytes)
    }
}
