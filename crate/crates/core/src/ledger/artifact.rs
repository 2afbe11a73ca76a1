//! Selectively disclosed memory artifacts and their verification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    field_commitment, interaction_digest, replay_root, AnchoredRoot, Field, FieldValue,
    GenesisInputs, InteractionLog, LedgerError, FIELD_COUNT,
};
use crate::canon::{
    digest, encode_canonical, frame, unframe, CanonError, ContainerKind, Digest, DomainTag, Salt,
    Value,
};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Visibility {
    Open,
    Hide,
}

/// Open/Hide choice for each field of one interaction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FieldRule(pub BTreeMap<Field, Visibility>);

impl FieldRule {
    pub fn uniform(v: Visibility) -> Self {
        FieldRule(Field::ALL.iter().map(|f| (*f, v)).collect())
    }

    pub fn open_all() -> Self {
        Self::uniform(Visibility::Open)
    }

    pub fn hide_all() -> Self {
        Self::uniform(Visibility::Hide)
    }

    pub fn with(mut self, field: Field, v: Visibility) -> Self {
        self.0.insert(field, v);
        self
    }

    pub fn get(&self, field: Field) -> Option<Visibility> {
        self.0.get(&field).copied()
    }
}

/// Per-interaction rules, with an optional fallback for indices that have
/// no override.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DisclosurePolicy {
    pub default: Option<FieldRule>,
    pub overrides: BTreeMap<u64, FieldRule>,
}

impl DisclosurePolicy {
    pub fn uniform(rule: FieldRule) -> Self {
        DisclosurePolicy {
            default: Some(rule),
            overrides: BTreeMap::new(),
        }
    }

    pub fn open_all() -> Self {
        Self::uniform(FieldRule::open_all())
    }

    pub fn set(mut self, seq_no: u64, rule: FieldRule) -> Self {
        self.overrides.insert(seq_no, rule);
        self
    }

    pub fn rule_for(&self, seq_no: u64) -> Option<&FieldRule> {
        self.overrides.get(&seq_no).or(self.default.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldDisclosure {
    Opened { value: FieldValue, salt: Salt },
    Hidden { commitment: Digest },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionDisclosure {
    /// One entry per field, in [`Field::ALL`] order.
    pub fields: Vec<FieldDisclosure>,
}

impl InteractionDisclosure {
    pub fn opened(&self, field: Field) -> Option<&FieldValue> {
        match self.fields.get(field.index())? {
            FieldDisclosure::Opened { value, .. } => Some(value),
            FieldDisclosure::Hidden { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryArtifact {
    /// Strictly increasing, possibly non-contiguous.
    pub selection: Vec<u64>,
    /// Parallel to `selection`.
    pub opened: Vec<InteractionDisclosure>,
    /// Hash of uncertified attachment bytes.
    pub attachment_hash: Option<Digest>,
    pub claimed_root: AnchoredRoot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosureProof {
    /// Every interaction digest for `0..claimed_root.length`.
    pub interaction_digests: Vec<Digest>,
    /// Full field-digest vectors, parallel to `selection`.
    pub selected_field_digests: Vec<Vec<Digest>>,
}

/// What goes on the wire: artifact, proof and the genesis inputs the seller
/// claims. Verifiers should take genesis inputs from the seller's
/// certificate, not from the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactBundle {
    pub artifact: MemoryArtifact,
    pub proof: DisclosureProof,
    pub genesis: GenesisInputs,
}

impl ArtifactBundle {
    pub fn to_container(&self) -> Result<Vec<u8>, CanonError> {
        frame(ContainerKind::Artifact, self)
    }

    pub fn from_container(bytes: &[u8]) -> Result<Self, CanonError> {
        unframe(ContainerKind::Artifact, bytes)
    }

    /// `digest(FIELD, container bytes)`.
    pub fn hash_container(container: &[u8]) -> Digest {
        digest(DomainTag::Field, container)
    }
}

pub fn attachment_hash(bytes: &[u8]) -> Digest {
    digest(DomainTag::Field, &encode_canonical(&Value::bytes(bytes)))
}

pub(super) fn build(
    log: &InteractionLog,
    at_length: u64,
    selection: &[u64],
    policy: &DisclosurePolicy,
    attachment: Option<&[u8]>,
) -> Result<(MemoryArtifact, DisclosureProof), LedgerError> {
    let claimed_root = log.root_at(at_length).ok_or(LedgerError::LengthBeyondLog {
        at_length,
        length: log.len(),
    })?;
    let selection: Vec<u64> = selection.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let mut opened = Vec::with_capacity(selection.len());
    let mut selected_field_digests = Vec::with_capacity(selection.len());
    for &seq_no in &selection {
        if seq_no >= at_length {
            return Err(LedgerError::OutOfRange {
                seq_no,
                length: at_length,
            });
        }
        let rule = policy.rule_for(seq_no).ok_or(LedgerError::PolicyMissing(seq_no))?;
        let record = &log.records()[seq_no as usize];
        let measured = &log.digests()[seq_no as usize];
        let mut fields = Vec::with_capacity(FIELD_COUNT);
        for field in Field::ALL {
            let vis = rule
                .get(field)
                .ok_or(LedgerError::PolicyMissingField { seq_no, field })?;
            fields.push(match vis {
                Visibility::Open => FieldDisclosure::Opened {
                    value: record.value(field),
                    salt: record.salt(field),
                },
                Visibility::Hide => FieldDisclosure::Hidden {
                    commitment: measured.field_digests[field.index()],
                },
            });
        }
        opened.push(InteractionDisclosure { fields });
        selected_field_digests.push(measured.field_digests.to_vec());
    }
    let artifact = MemoryArtifact {
        selection,
        opened,
        attachment_hash: attachment.map(attachment_hash),
        claimed_root,
    };
    let proof = DisclosureProof {
        interaction_digests: log.digests()[..at_length as usize].iter().map(|d| d.digest).collect(),
        selected_field_digests,
    };
    Ok((artifact, proof))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Check {
    Structure,
    ChainRoot,
    Openings,
    InteractionDigests,
    ClaimedRoot,
    Attachment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

/// Attachments never carry a certification claim; this only reports
/// whether supplied bytes match the advertised hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttachmentStatus {
    None,
    UncertifiedUnchecked,
    UncertifiedMatched,
    Mismatched,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckOutcome>,
    pub attachment: AttachmentStatus,
    pub selected: usize,
    pub opened_fields: usize,
    pub hidden_fields: usize,
}

impl VerificationReport {
    pub fn accepted(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, check: Check) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.check == check)
    }

    pub fn failed(&self) -> Vec<Check> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.check).collect()
    }
}

impl std::fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "{mark} {:?}: {}", c.check, c.detail)?;
        }
        writeln!(
            f,
            "selected {} interactions, {} fields opened, {} hidden, attachment {:?}",
            self.selected, self.opened_fields, self.hidden_fields, self.attachment
        )?;
        write!(f, "{}", if self.accepted() { "ACCEPTED" } else { "REJECTED" })
    }
}

pub fn verify_artifact(
    artifact: &MemoryArtifact,
    proof: &DisclosureProof,
    expected_root: &AnchoredRoot,
    genesis_inputs: &GenesisInputs,
    attachment: Option<&[u8]>,
) -> VerificationReport {
    verify_artifact_with(Exec::default(), artifact, proof, expected_root, genesis_inputs, attachment)
}

fn structure(artifact: &MemoryArtifact, proof: &DisclosureProof) -> Result<(), String> {
    let length = artifact.claimed_root.length;
    if proof.interaction_digests.len() as u64 != length {
        return Err(format!(
            "proof lists {} digests for claimed length {length}",
            proof.interaction_digests.len()
        ));
    }
    if artifact.selection.windows(2).any(|w| w[0] >= w[1]) {
        return Err("selection is not strictly increasing".into());
    }
    if let Some(bad) = artifact.selection.iter().find(|s| **s >= length) {
        return Err(format!("selected index {bad} is beyond length {length}"));
    }
    if artifact.opened.len() != artifact.selection.len()
        || proof.selected_field_digests.len() != artifact.selection.len()
    {
        return Err("disclosure or field-digest count differs from selection".into());
    }
    for (i, (d, v)) in artifact.opened.iter().zip(&proof.selected_field_digests).enumerate() {
        let seq = artifact.selection[i];
        if d.fields.len() != FIELD_COUNT || v.len() != FIELD_COUNT {
            return Err(format!("interaction {seq} does not cover exactly {FIELD_COUNT} fields"));
        }
        for (field, fd) in Field::ALL.iter().zip(&d.fields) {
            if let FieldDisclosure::Opened { value, .. } = fd {
                if !field.accepts(value) {
                    return Err(format!("interaction {seq} field {field} has the wrong value kind"));
                }
            }
        }
    }
    Ok(())
}

struct Selected {
    bad_fields: Vec<Field>,
    digest_ok: bool,
}

fn check_selected(artifact: &MemoryArtifact, proof: &DisclosureProof, i: usize) -> Selected {
    let seq = artifact.selection[i];
    let listed = &proof.selected_field_digests[i];
    let bad_fields = Field::ALL
        .iter()
        .zip(&artifact.opened[i].fields)
        .filter(|(field, fd)| {
            let expected = &listed[field.index()];
            match fd {
                FieldDisclosure::Opened { value, salt } => field_commitment(value, salt) != *expected,
                FieldDisclosure::Hidden { commitment } => commitment != expected,
            }
        })
        .map(|(f, _)| *f)
        .collect();
    let digest_ok = interaction_digest(seq, listed) == proof.interaction_digests[seq as usize];
    Selected { bad_fields, digest_ok }
}

pub fn verify_artifact_with(
    exec: Exec,
    artifact: &MemoryArtifact,
    proof: &DisclosureProof,
    expected_root: &AnchoredRoot,
    genesis_inputs: &GenesisInputs,
    attachment: Option<&[u8]>,
) -> VerificationReport {
    let mut checks = Vec::with_capacity(6);
    let structure = structure(artifact, proof);
    checks.push(CheckOutcome {
        check: Check::Structure,
        passed: structure.is_ok(),
        detail: structure.clone().err().unwrap_or_else(|| "well formed".into()),
    });

    let replayed = replay_root(genesis_inputs, &proof.interaction_digests);
    let chain_ok = replayed == *expected_root;
    checks.push(CheckOutcome {
        check: Check::ChainRoot,
        passed: chain_ok,
        detail: if chain_ok {
            format!("{} digests chain to the expected root", replayed.length)
        } else {
            format!(
                "replay gives length {} root {}, expected length {} root {}",
                replayed.length, replayed.root, expected_root.length, expected_root.root
            )
        },
    });

    let (mut opened_fields, mut hidden_fields) = (0, 0);
    if structure.is_ok() {
        let results = exec.map_range(artifact.selection.len(), |i| check_selected(artifact, proof, i));
        let bad_openings: Vec<String> = results
            .iter()
            .zip(&artifact.selection)
            .flat_map(|(r, seq)| r.bad_fields.iter().map(move |f| format!("{seq}.{f}")))
            .collect();
        let bad_digests: Vec<String> = results
            .iter()
            .zip(&artifact.selection)
            .filter(|(r, _)| !r.digest_ok)
            .map(|(_, seq)| seq.to_string())
            .collect();
        for d in &artifact.opened {
            for fd in &d.fields {
                match fd {
                    FieldDisclosure::Opened { .. } => opened_fields += 1,
                    FieldDisclosure::Hidden { .. } => hidden_fields += 1,
                }
            }
        }
        checks.push(CheckOutcome {
            check: Check::Openings,
            passed: bad_openings.is_empty(),
            detail: if bad_openings.is_empty() {
                format!("{opened_fields} openings and {hidden_fields} commitments match")
            } else {
                format!("mismatched fields: {}", bad_openings.join(", "))
            },
        });
        checks.push(CheckOutcome {
            check: Check::InteractionDigests,
            passed: bad_digests.is_empty(),
            detail: if bad_digests.is_empty() {
                format!("{} interaction digests match", artifact.selection.len())
            } else {
                format!("mismatched interactions: {}", bad_digests.join(", "))
            },
        });
    } else {
        for check in [Check::Openings, Check::InteractionDigests] {
            checks.push(CheckOutcome {
                check,
                passed: false,
                detail: "skipped, malformed structure".into(),
            });
        }
    }

    let claimed_ok = artifact.claimed_root == *expected_root;
    checks.push(CheckOutcome {
        check: Check::ClaimedRoot,
        passed: claimed_ok,
        detail: if claimed_ok {
            "claimed root is the expected root".into()
        } else {
            format!("claimed {} but expected {}", artifact.claimed_root, expected_root)
        },
    });

    let status = match (artifact.attachment_hash, attachment) {
        (None, None) => AttachmentStatus::None,
        (Some(_), None) => AttachmentStatus::UncertifiedUnchecked,
        (Some(h), Some(bytes)) if attachment_hash(bytes) == h => AttachmentStatus::UncertifiedMatched,
        _ => AttachmentStatus::Mismatched,
    };
    checks.push(CheckOutcome {
        check: Check::Attachment,
        passed: status != AttachmentStatus::Mismatched,
        detail: match status {
            AttachmentStatus::None => "no attachment".into(),
            AttachmentStatus::UncertifiedUnchecked => "attachment advertised, bytes not supplied (uncertified)".into(),
            AttachmentStatus::UncertifiedMatched => "attachment bytes match hash (uncertified)".into(),
            AttachmentStatus::Mismatched => "attachment bytes do not match".into(),
        },
    });

    VerificationReport {
        checks,
        attachment: status,
        selected: artifact.selection.len(),
        opened_fields,
        hidden_fields,
    }
}

/// One unit of batch verification.
#[derive(Debug, Clone)]
pub struct VerifyJob {
    pub artifact: MemoryArtifact,
    pub proof: DisclosureProof,
    pub expected_root: AnchoredRoot,
    pub genesis: GenesisInputs,
    pub attachment: Option<Vec<u8>>,
}

/// Verifies many artifacts; parallel across jobs when `exec` is parallel.
pub fn verify_many(exec: Exec, jobs: &[VerifyJob]) -> Vec<VerificationReport> {
    exec.map(jobs, |j| {
        verify_artifact_with(
            Exec::Sequential,
            &j.artifact,
            &j.proof,
            &j.expected_root,
            &j.genesis,
            j.attachment.as_deref(),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canon::{Blob, PublicIdentity};
    use crate::ledger::InteractionRecord;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn inputs(tag: u8) -> GenesisInputs {
        GenesisInputs {
            gang_config_hash: Digest([tag; 32]),
            agent: PublicIdentity([2; 32]),
        }
    }

    fn record(rng: &mut impl RngCore, seq_no: u64, max_len: usize) -> InteractionRecord {
        let mut salts = [Salt([0; 16]); FIELD_COUNT];
        for s in &mut salts {
            rng.fill_bytes(&mut s.0);
        }
        let blob = |rng: &mut dyn RngCore| {
            let mut v = vec![0u8; rng.next_u32() as usize % (max_len + 1)];
            rng.fill_bytes(&mut v);
            Blob(v)
        };
        InteractionRecord {
            seq_no,
            prompt: blob(rng),
            response: blob(rng),
            model_name: "mock-1".into(),
            token_in: u64::from(rng.next_u32() % 500),
            token_out: u64::from(rng.next_u32() % 500),
            timestamp: 1_000 + seq_no,
            field_salts: salts,
        }
    }

    fn log_of(rng: &mut impl RngCore, n: u64, g: GenesisInputs) -> InteractionLog {
        let mut log = InteractionLog::new(g);
        for i in 0..n {
            log.append(record(rng, i, 64)).unwrap();
        }
        log
    }

    fn hide_responses() -> DisclosurePolicy {
        DisclosurePolicy::uniform(FieldRule::open_all().with(Field::Response, Visibility::Hide))
    }

    #[test]
    fn full_disclosure_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let log = log_of(&mut rng, 10, inputs(1));
        let all: Vec<u64> = (0..10).collect();
        let (a, p) = log.build_artifact(&all, &DisclosurePolicy::open_all(), None).unwrap();
        let r = verify_artifact(&a, &p, &log.root(), &inputs(1), None);
        assert!(r.accepted(), "{r}");
        assert_eq!(r.opened_fields, 60);
        for (seq, d) in a.selection.iter().zip(&a.opened) {
            assert_eq!(d.opened(Field::Prompt), Some(&log.records()[*seq as usize].value(Field::Prompt)));
        }
    }

    #[test]
    fn non_contiguous_hidden_responses_verify() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let log = log_of(&mut rng, 10, inputs(1));
        let (a, p) = log.build_artifact(&[7, 3], &hide_responses(), None).unwrap();
        assert_eq!(a.selection, vec![3, 7]);
        assert!(a.opened.iter().all(|d| d.opened(Field::Response).is_none()));
        let r = verify_artifact(&a, &p, &log.root(), &inputs(1), None);
        assert!(r.accepted(), "{r}");
        assert_eq!(r.hidden_fields, 2);
    }

    #[test]
    fn empty_selection_proves_root_only() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let log = log_of(&mut rng, 4, inputs(1));
        let (a, p) = log.build_artifact(&[], &DisclosurePolicy::default(), None).unwrap();
        assert!(verify_artifact(&a, &p, &log.root(), &inputs(1), None).accepted());
    }

    #[test]
    fn build_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let log = log_of(&mut rng, 4, inputs(1));
        assert_eq!(
            log.build_artifact(&[4], &DisclosurePolicy::open_all(), None).unwrap_err(),
            LedgerError::OutOfRange { seq_no: 4, length: 4 }
        );
        assert_eq!(
            log.build_artifact(&[1], &DisclosurePolicy::default(), None).unwrap_err(),
            LedgerError::PolicyMissing(1)
        );
        let partial = DisclosurePolicy::default().set(
            1,
            FieldRule::default().with(Field::Prompt, Visibility::Open),
        );
        assert_eq!(
            log.build_artifact(&[1], &partial, None).unwrap_err(),
            LedgerError::PolicyMissingField { seq_no: 1, field: Field::Response }
        );
    }

    #[test]
    fn different_gang_genesis_fails_chain() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let log = log_of(&mut rng, 5, inputs(1));
        let (a, p) = log.build_artifact(&[0], &DisclosurePolicy::open_all(), None).unwrap();
        let r = verify_artifact(&a, &p, &log.root(), &inputs(9), None);
        assert_eq!(r.failed(), vec![Check::ChainRoot]);
    }

    #[test]
    fn prefix_artifact_against_anchor() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let mut log = log_of(&mut rng, 5, inputs(1));
        let anchor = log.anchor_commitment(5, 0).unwrap();
        for i in 5..9 {
            log.append(record(&mut rng, i, 16)).unwrap();
        }
        let (a, p) = log.build_artifact_at(5, &[1, 4], &DisclosurePolicy::open_all(), None).unwrap();
        assert!(verify_artifact(&a, &p, &anchor.root, &inputs(1), None).accepted());
        assert!(!verify_artifact(&a, &p, &log.root(), &inputs(1), None).accepted());
    }

    #[test]
    fn attachment_is_uncertified_but_checked_when_supplied() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let log = log_of(&mut rng, 3, inputs(1));
        let (a, p) = log.build_artifact(&[0], &DisclosurePolicy::open_all(), Some(b"extra")).unwrap();
        let root = log.root();
        let r = verify_artifact(&a, &p, &root, &inputs(1), None);
        assert!(r.accepted());
        assert_eq!(r.attachment, AttachmentStatus::UncertifiedUnchecked);
        let r = verify_artifact(&a, &p, &root, &inputs(1), Some(b"extra"));
        assert_eq!(r.attachment, AttachmentStatus::UncertifiedMatched);
        let r = verify_artifact(&a, &p, &root, &inputs(1), Some(b"other"));
        assert_eq!(r.failed(), vec![Check::Attachment]);
    }

    #[test]
    fn swapping_bytes_and_text_kinds_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let log = log_of(&mut rng, 2, inputs(1));
        let (mut a, p) = log.build_artifact(&[0], &DisclosurePolicy::open_all(), None).unwrap();
        a.opened[0].fields[0] = match &a.opened[0].fields[0] {
            FieldDisclosure::Opened { salt, .. } => FieldDisclosure::Opened {
                value: FieldValue::Text(String::new()),
                salt: *salt,
            },
            other => other.clone(),
        };
        let r = verify_artifact(&a, &p, &log.root(), &inputs(1), None);
        assert!(!r.accepted());
    }

    #[test]
    fn container_round_trip_and_hash() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let log = log_of(&mut rng, 3, inputs(1));
        let (artifact, proof) = log.build_artifact(&[1], &hide_responses(), None).unwrap();
        let bundle = ArtifactBundle { artifact, proof, genesis: inputs(1) };
        let bytes = bundle.to_container().unwrap();
        assert_eq!(&bytes[..5], b"CMAR\x01");
        assert_eq!(ArtifactBundle::from_container(&bytes).unwrap(), bundle);
        assert_eq!(ArtifactBundle::hash_container(&bytes), digest(DomainTag::Field, &bytes));
    }

    fn honest_bundle(rng: &mut ChaCha20Rng, max_len: usize) -> (ArtifactBundle, AnchoredRoot) {
        let n = rng.gen_range(1..=64u64);
        let g = inputs(rng.gen());
        let mut log = InteractionLog::new(g);
        for i in 0..n {
            log.append(record(rng, i, max_len)).unwrap();
        }
        let selection: Vec<u64> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        let mut policy = DisclosurePolicy::default();
        for &s in &selection {
            let mut rule = FieldRule::default();
            for f in Field::ALL {
                rule = rule.with(f, if rng.gen_bool(0.5) { Visibility::Open } else { Visibility::Hide });
            }
            policy = policy.set(s, rule);
        }
        let (artifact, proof) = log.build_artifact(&selection, &policy, None).unwrap();
        (ArtifactBundle { artifact, proof, genesis: g }, log.root())
    }

    #[test]
    fn single_byte_mutations_never_accepted() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut accepted = 0;
        for _ in 0..300 {
            let (bundle, root) = honest_bundle(&mut rng, 32);
            let bytes = bundle.to_container().unwrap();
            let mut m = bytes.clone();
            let i = rng.gen_range(5..m.len());
            m[i] ^= rng.gen_range(1..=255u8);
            if let Ok(b) = ArtifactBundle::from_container(&m) {
                if b.artifact != bundle.artifact || b.proof != bundle.proof {
                    if verify_artifact(&b.artifact, &b.proof, &root, &bundle.genesis, None).accepted() {
                        accepted += 1;
                    }
                }
            }
        }
        assert_eq!(accepted, 0);
    }

    #[test]
    fn hidden_plaintext_absent_from_proof_and_report() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let log = log_of(&mut rng, 8, inputs(1));
            let (a, p) = log.build_artifact(&[1, 5], &hide_responses(), None).unwrap();
            let r = verify_artifact(&a, &p, &log.root(), &inputs(1), None);
            let haystack = [
                crate::canon::to_canonical(&(&a, &p)).unwrap().to_vec(),
                serde_json::to_vec(&r).unwrap(),
                r.to_string().into_bytes(),
            ];
            for seq in [1usize, 5] {
                let hidden = &log.records()[seq].response.0;
                for w in hidden.windows(9) {
                    for h in &haystack {
                        assert!(!h.windows(9).any(|x| x == w));
                    }
                }
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let jobs: Vec<VerifyJob> = (0..8)
            .map(|_| {
                let (b, root) = honest_bundle(&mut rng, 16);
                VerifyJob {
                    artifact: b.artifact,
                    proof: b.proof,
                    expected_root: root,
                    genesis: b.genesis,
                    attachment: None,
                }
            })
            .collect();
        let s = verify_many(Exec::Sequential, &jobs);
        assert_eq!(s, verify_many(Exec::Parallel, &jobs));
        assert!(s.iter().all(VerificationReport::accepted));
    }
}
