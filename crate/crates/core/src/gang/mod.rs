//! Gang templates, attestation-gated registration, membership certificates,
//! the signed member list and the vulnerability bulletin.
//!
//! The registry is event-sourced: `plan_*` methods validate against the
//! current state and return the events an operation would produce;
//! [`GangRegistry::apply`] folds an event in. The platform journals events
//! between the two steps.

mod cert;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{digest, sign, to_canonical, verify, Digest, DomainTag, KeyPair, Nonce, PublicIdentity, Signature};
use crate::enclave::{task_hash, vendor_root_public, AttestationReport, ProviderPublic, ResalePolicy};
use crate::ledger::{Field, FieldRule};

pub use cert::{verify_certificate, CertStatus, MemberList, MemberListEntry, MembershipCertificate};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GangError {
    #[error("template incomplete: {0}")]
    IncompleteTemplate(String),
    #[error("gang {0} already exists")]
    DuplicateGang(Digest),
    #[error("unknown gang {0}")]
    UnknownGang(Digest),
    #[error("nonce is stale, unknown or already used")]
    StaleNonce,
    #[error("report nonce does not match the session nonce")]
    NonceMismatch,
    #[error("vendor signature or measurement self-consistency failed")]
    VendorSignature,
    #[error("measurement mismatch: {0}")]
    MeasurementMismatch(String),
    #[error("security version {got} below gang minimum {minimum}")]
    SecurityVersion { got: u64, minimum: u64 },
    #[error("slot {0} already has a member")]
    SlotReuse(u64),
    #[error("certificate is not current for its slot")]
    NotCurrent,
    #[error("security version must increase, was {old}, got {new}")]
    VersionNotIncreased { old: u64, new: u64 },
    #[error("owner seed hash differs from the original registration")]
    OwnerMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LogMode {
    Log,
    Hash,
    Omit,
}

/// Declared per-field logging choices. Published with the template; the
/// enclave in this crate always commits every field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggingPolicy {
    pub fields: BTreeMap<Field, LogMode>,
    pub metadata: BTreeMap<String, bool>,
}

impl Default for LoggingPolicy {
    fn default() -> Self {
        LoggingPolicy {
            fields: Field::ALL.iter().map(|f| (*f, LogMode::Log)).collect(),
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SettlementMode {
    #[default]
    Platform,
    /// Off-platform settlement; reviews go through purchase tokens.
    PeerToPeer,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TradePolicy {
    pub resale: ResalePolicy,
    /// Suggested disclosure rule for advertisements.
    pub disclosure: FieldRule,
    pub settlement: SettlementMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GangTemplate {
    pub task_description: String,
    pub image_template_hash: Digest,
    pub model_provider: ProviderPublic,
    pub logging_policy: LoggingPolicy,
    pub trade_policy: TradePolicy,
    pub code_reference: String,
    pub min_security_version: u64,
}

impl GangTemplate {
    /// `digest(CERT, canonical(template))`.
    pub fn gang_id(&self) -> Digest {
        digest(DomainTag::Cert, &to_canonical(self).expect("templates always encode"))
    }

    pub fn task_hash(&self) -> Digest {
        task_hash(&self.task_description)
    }

    fn validate(&self) -> Result<(), GangError> {
        let missing = if self.task_description.trim().is_empty() {
            Some("task_description")
        } else if self.code_reference.trim().is_empty() {
            Some("code_reference")
        } else if self.model_provider.endpoint.is_empty() {
            Some("model_provider.endpoint")
        } else if self.model_provider.model_name.is_empty() {
            Some("model_provider.model_name")
        } else {
            None
        };
        match missing {
            Some(m) => Err(GangError::IncompleteTemplate(m.into())),
            None => Ok(()),
        }
    }
}

/// Platform-signed vulnerability notice for one exact security version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerabilityNotice {
    pub id: u64,
    pub affected_version: u64,
    pub note: String,
    pub published_at: u64,
    pub platform_signature: Signature,
}

impl VulnerabilityNotice {
    fn body(id: u64, affected_version: u64, note: &str, published_at: u64) -> Vec<u8> {
        to_canonical(&(id, affected_version, note, published_at))
            .expect("notice encodes")
            .into_vec()
    }

    pub fn verify(&self, platform: &PublicIdentity) -> bool {
        verify(
            platform,
            DomainTag::Bulletin,
            &Self::body(self.id, self.affected_version, &self.note, self.published_at),
            &self.platform_signature,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionPurpose {
    Register,
    Reregister { old_cert: Digest },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub gang_id: Digest,
    pub slot_id: u64,
    pub purpose: SessionPurpose,
    pub issued_at: u64,
}

/// Handed to a prospective member: boot with `slot_id`, attest over `nonce`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotReservation {
    pub gang_id: Digest,
    pub slot_id: u64,
    pub nonce: Nonce,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberEntry {
    pub cert: MembershipCertificate,
    pub superseded_by: Option<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GangRecord {
    pub template: GangTemplate,
    pub created_at: u64,
    pub next_slot: u64,
    pub members: Vec<MemberEntry>,
    pub directory_version: u64,
}

impl GangRecord {
    pub fn current_members(&self) -> impl Iterator<Item = &MembershipCertificate> {
        self.members.iter().filter(|m| m.superseded_by.is_none()).map(|m| &m.cert)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GangEvent {
    Created { template: GangTemplate, at: u64 },
    SlotReserved { gang_id: Digest, slot_id: u64, nonce: Nonce, at: u64 },
    ReregistrationOpened { gang_id: Digest, slot_id: u64, old_cert: Digest, nonce: Nonce, at: u64 },
    Certified { nonce: Nonce, cert: MembershipCertificate },
    Recertified { nonce: Nonce, old_cert: Digest, cert: MembershipCertificate },
    VulnerabilityPublished(VulnerabilityNotice),
}

/// Registration sessions older than this are stale.
pub const SESSION_TTL_MS: u64 = 10 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GangRegistry {
    gangs: BTreeMap<Digest, GangRecord>,
    sessions: BTreeMap<Nonce, Session>,
    bulletin: Vec<VulnerabilityNotice>,
}

impl GangRegistry {
    pub fn gang(&self, gang_id: &Digest) -> Option<&GangRecord> {
        self.gangs.get(gang_id)
    }

    pub fn gangs(&self) -> impl Iterator<Item = (&Digest, &GangRecord)> {
        self.gangs.iter()
    }

    pub fn bulletin(&self) -> &[VulnerabilityNotice] {
        &self.bulletin
    }

    pub fn sessions(&self) -> &BTreeMap<Nonce, Session> {
        &self.sessions
    }

    fn record(&self, gang_id: &Digest) -> Result<&GangRecord, GangError> {
        self.gangs.get(gang_id).ok_or(GangError::UnknownGang(*gang_id))
    }

    /// Latest entry for `agent` in any gang.
    pub fn member_by_agent(&self, agent: &PublicIdentity) -> Option<&MemberEntry> {
        self.gangs
            .values()
            .flat_map(|g| g.members.iter())
            .rfind(|m| m.cert.agent_public == *agent)
    }

    pub fn member_by_cert(&self, cert_id: &Digest) -> Option<&MemberEntry> {
        self.gangs
            .values()
            .flat_map(|g| g.members.iter())
            .find(|m| m.cert.id() == *cert_id)
    }

    pub fn plan_create(&self, template: GangTemplate, at: u64) -> Result<Vec<GangEvent>, GangError> {
        template.validate()?;
        let id = template.gang_id();
        if self.gangs.contains_key(&id) {
            return Err(GangError::DuplicateGang(id));
        }
        Ok(vec![GangEvent::Created { template, at }])
    }

    pub fn plan_reserve_slot(&self, gang_id: &Digest, nonce: Nonce, at: u64) -> Result<Vec<GangEvent>, GangError> {
        let g = self.record(gang_id)?;
        if self.sessions.contains_key(&nonce) {
            return Err(GangError::StaleNonce);
        }
        Ok(vec![GangEvent::SlotReserved {
            gang_id: *gang_id,
            slot_id: g.next_slot,
            nonce,
            at,
        }])
    }

    fn fresh_session(&self, nonce: &Nonce, gang_id: &Digest, now: u64) -> Result<&Session, GangError> {
        let s = self.sessions.get(nonce).ok_or(GangError::StaleNonce)?;
        if s.gang_id != *gang_id || now.saturating_sub(s.issued_at) > SESSION_TTL_MS {
            return Err(GangError::StaleNonce);
        }
        Ok(s)
    }

    fn check_report(&self, template: &GangTemplate, report: &AttestationReport, nonce: &Nonce) -> Result<(), GangError> {
        if report.nonce != *nonce {
            return Err(GangError::NonceMismatch);
        }
        if !report.verify(&vendor_root_public()) {
            return Err(GangError::VendorSignature);
        }
        if report.measurement.image_template_hash != template.image_template_hash {
            return Err(GangError::MeasurementMismatch("image template hash".into()));
        }
        if report.measurement.task_description_hash != template.task_hash() {
            return Err(GangError::MeasurementMismatch("task description hash".into()));
        }
        if report.security_version < template.min_security_version {
            return Err(GangError::SecurityVersion {
                got: report.security_version,
                minimum: template.min_security_version,
            });
        }
        Ok(())
    }

    pub fn plan_register(
        &self,
        gang_id: &Digest,
        report: &AttestationReport,
        nonce: &Nonce,
        now: u64,
        platform: &KeyPair,
    ) -> Result<Vec<GangEvent>, GangError> {
        let g = self.record(gang_id)?;
        let session = self.fresh_session(nonce, gang_id, now)?;
        if session.purpose != SessionPurpose::Register {
            return Err(GangError::StaleNonce);
        }
        self.check_report(&g.template, report, nonce)?;
        if report.measurement.slot_id != session.slot_id {
            return Err(GangError::MeasurementMismatch("slot id differs from the reserved slot".into()));
        }
        if g.members.iter().any(|m| m.cert.slot_id == session.slot_id) {
            return Err(GangError::SlotReuse(session.slot_id));
        }
        let cert = MembershipCertificate::issue(platform, gang_id, report, now);
        Ok(vec![GangEvent::Certified { nonce: *nonce, cert }])
    }

    pub fn plan_open_reregistration(
        &self,
        old: &MembershipCertificate,
        nonce: Nonce,
        at: u64,
    ) -> Result<Vec<GangEvent>, GangError> {
        let g = self.record(&old.gang_id)?;
        let entry = g
            .members
            .iter()
            .find(|m| m.cert == *old)
            .ok_or(GangError::NotCurrent)?;
        if entry.superseded_by.is_some() {
            return Err(GangError::NotCurrent);
        }
        if self.sessions.contains_key(&nonce) {
            return Err(GangError::StaleNonce);
        }
        Ok(vec![GangEvent::ReregistrationOpened {
            gang_id: old.gang_id,
            slot_id: old.slot_id,
            old_cert: old.id(),
            nonce,
            at,
        }])
    }

    pub fn plan_reregister(
        &self,
        old: &MembershipCertificate,
        report: &AttestationReport,
        nonce: &Nonce,
        now: u64,
        platform: &KeyPair,
    ) -> Result<Vec<GangEvent>, GangError> {
        let g = self.record(&old.gang_id)?;
        let session = self.fresh_session(nonce, &old.gang_id, now)?;
        if session.purpose != (SessionPurpose::Reregister { old_cert: old.id() }) {
            return Err(GangError::StaleNonce);
        }
        let current = g.members.iter().any(|m| m.cert == *old && m.superseded_by.is_none());
        if !current {
            return Err(GangError::NotCurrent);
        }
        if report.measurement.owner_seed_hash != old.owner_seed_hash {
            return Err(GangError::OwnerMismatch);
        }
        if report.security_version <= old.security_version {
            return Err(GangError::VersionNotIncreased {
                old: old.security_version,
                new: report.security_version,
            });
        }
        self.check_report(&g.template, report, nonce)?;
        if report.measurement.slot_id != old.slot_id {
            return Err(GangError::MeasurementMismatch("slot id differs from the original slot".into()));
        }
        let cert = MembershipCertificate::issue(platform, &old.gang_id, report, now);
        Ok(vec![GangEvent::Recertified {
            nonce: *nonce,
            old_cert: old.id(),
            cert,
        }])
    }

    pub fn plan_publish_vulnerability(&self, affected_version: u64, note: &str, at: u64, platform: &KeyPair) -> Vec<GangEvent> {
        let id = self.bulletin.len() as u64;
        let body = VulnerabilityNotice::body(id, affected_version, note, at);
        vec![GangEvent::VulnerabilityPublished(VulnerabilityNotice {
            id,
            affected_version,
            note: note.to_string(),
            published_at: at,
            platform_signature: sign(platform, DomainTag::Bulletin, &body),
        })]
    }

    pub fn apply(&mut self, event: &GangEvent) {
        match event {
            GangEvent::Created { template, at } => {
                self.gangs.insert(
                    template.gang_id(),
                    GangRecord {
                        template: template.clone(),
                        created_at: *at,
                        next_slot: 0,
                        members: Vec::new(),
                        directory_version: 0,
                    },
                );
            }
            GangEvent::SlotReserved { gang_id, slot_id, nonce, at } => {
                if let Some(g) = self.gangs.get_mut(gang_id) {
                    g.next_slot = g.next_slot.max(slot_id + 1);
                }
                self.sessions.insert(
                    *nonce,
                    Session {
                        gang_id: *gang_id,
                        slot_id: *slot_id,
                        purpose: SessionPurpose::Register,
                        issued_at: *at,
                    },
                );
            }
            GangEvent::ReregistrationOpened { gang_id, slot_id, old_cert, nonce, at } => {
                self.sessions.insert(
                    *nonce,
                    Session {
                        gang_id: *gang_id,
                        slot_id: *slot_id,
                        purpose: SessionPurpose::Reregister { old_cert: *old_cert },
                        issued_at: *at,
                    },
                );
            }
            GangEvent::Certified { nonce, cert } => {
                self.sessions.remove(nonce);
                if let Some(g) = self.gangs.get_mut(&cert.gang_id) {
                    g.members.push(MemberEntry {
                        cert: cert.clone(),
                        superseded_by: None,
                    });
                    g.directory_version += 1;
                }
            }
            GangEvent::Recertified { nonce, old_cert, cert } => {
                self.sessions.remove(nonce);
                if let Some(g) = self.gangs.get_mut(&cert.gang_id) {
                    let new_id = cert.id();
                    for m in g.members.iter_mut().filter(|m| m.cert.id() == *old_cert) {
                        m.superseded_by = Some(new_id);
                    }
                    g.members.push(MemberEntry {
                        cert: cert.clone(),
                        superseded_by: None,
                    });
                    g.directory_version += 1;
                }
            }
            GangEvent::VulnerabilityPublished(notice) => self.bulletin.push(notice.clone()),
        }
    }

    /// Directory view of a certificate, including signature and template
    /// consistency.
    pub fn certificate_status(&self, cert: &MembershipCertificate, platform: &PublicIdentity) -> CertStatus {
        let Some(g) = self.gangs.get(&cert.gang_id) else {
            return CertStatus::Unknown;
        };
        if !verify_certificate(cert, &g.template, platform) {
            return CertStatus::Invalid;
        }
        let Some(entry) = g.members.iter().find(|m| m.cert == *cert) else {
            return CertStatus::Unknown;
        };
        if let Some(by) = entry.superseded_by {
            return CertStatus::Superseded { by };
        }
        if let Some(n) = self.notice_for(cert.security_version) {
            return CertStatus::Vulnerable { notice: n.id };
        }
        CertStatus::Current
    }

    /// First notice affecting exactly `version`.
    pub fn notice_for(&self, version: u64) -> Option<&VulnerabilityNotice> {
        self.bulletin.iter().find(|n| n.affected_version == version)
    }

    pub fn verify_membership(&self, cert: &MembershipCertificate, platform: &PublicIdentity) -> bool {
        self.certificate_status(cert, platform) == CertStatus::Current
    }

    pub fn member_list(&self, gang_id: &Digest, issued_at: u64, platform: &KeyPair) -> Result<MemberList, GangError> {
        let g = self.record(gang_id)?;
        let members = g
            .members
            .iter()
            .map(|m| MemberListEntry {
                cert: m.cert.clone(),
                superseded_by: m.superseded_by,
                vulnerability: self.notice_for(m.cert.security_version).map(|n| n.id),
            })
            .collect();
        Ok(MemberList::sign(platform, *gang_id, g.directory_version, members, issued_at))
    }
}

#[cfg(test)]
mod tests;
