//! The measured interaction log.
//!
//! Each interaction is committed field by field with a fresh salt; the six
//! field commitments hash into an interaction digest; interaction digests
//! chain into the anchored root:
//!
//! ```text
//! field_digest   = commit(FIELD, salt, encode(value))
//! interaction    = digest(INTERACTION, encode(record[uint seq_no, list[field_digest x6]]))
//! root(0)        = digest(ROOT, encode(record[bytes gang_config_hash, bytes agent_public]))
//! root(i)        = digest(ROOT, encode(record[bytes root(i-1), bytes interaction(i-1)]))
//! ```

mod artifact;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{
    commit, digest_value, encode_canonical, Blob, CanonError, CanonicalBytes, Digest, DomainTag,
    PublicIdentity, Salt, Value,
};
use crate::par::Exec;

pub use artifact::{
    attachment_hash, verify_artifact, verify_artifact_with, verify_many, ArtifactBundle,
    AttachmentStatus, Check, CheckOutcome, DisclosurePolicy, DisclosureProof, FieldDisclosure,
    FieldRule, InteractionDisclosure, MemoryArtifact, VerificationReport, VerifyJob, Visibility,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("record seq_no {got} does not match log length {expected}")]
    SeqMismatch { expected: u64, got: u64 },
    #[error("timestamp {got} precedes previous timestamp {previous}")]
    TimestampRegression { previous: u64, got: u64 },
    #[error("interaction {seq_no} is outside a log of length {length}")]
    OutOfRange { seq_no: u64, length: u64 },
    #[error("length {at_length} exceeds log length {length}")]
    LengthBeyondLog { at_length: u64, length: u64 },
    #[error("disclosure policy has no rule for interaction {0}")]
    PolicyMissing(u64),
    #[error("disclosure policy for interaction {seq_no} does not cover field {field}")]
    PolicyMissingField { seq_no: u64, field: Field },
    #[error(transparent)]
    Encoding(#[from] CanonError),
}

/// Committed fields, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Field {
    Prompt,
    Response,
    ModelName,
    TokenIn,
    TokenOut,
    Timestamp,
}

pub const FIELD_COUNT: usize = 6;

impl Field {
    pub const ALL: [Field; FIELD_COUNT] = [
        Field::Prompt,
        Field::Response,
        Field::ModelName,
        Field::TokenIn,
        Field::TokenOut,
        Field::Timestamp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Prompt => "prompt",
            Field::Response => "response",
            Field::ModelName => "model_name",
            Field::TokenIn => "token_in",
            Field::TokenOut => "token_out",
            Field::Timestamp => "timestamp",
        }
    }

    pub fn parse(name: &str) -> Option<Field> {
        Field::ALL.into_iter().find(|f| f.name() == name)
    }

    fn accepts(self, value: &FieldValue) -> bool {
        matches!(
            (self, value),
            (Field::Prompt | Field::Response, FieldValue::Bytes(_))
                | (Field::ModelName, FieldValue::Text(_))
                | (Field::TokenIn | Field::TokenOut | Field::Timestamp, FieldValue::Uint(_))
        )
    }
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Plaintext of one committed field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldValue {
    Bytes(Blob),
    Text(String),
    Uint(u64),
}

impl FieldValue {
    /// Commitment payload: a byte leaf for bytes and text, an integer leaf for
    /// counters.
    pub fn canonical(&self) -> CanonicalBytes {
        encode_canonical(&match self {
            FieldValue::Bytes(b) => Value::bytes(b),
            FieldValue::Text(s) => Value::bytes(s),
            FieldValue::Uint(n) => Value::Uint(*n),
        })
    }
}

pub fn field_commitment(value: &FieldValue, salt: &Salt) -> Digest {
    commit(DomainTag::Field, salt.as_bytes(), &value.canonical())
        .expect("Salt is always 16 bytes")
}

pub fn interaction_digest(seq_no: u64, field_digests: &[Digest]) -> Digest {
    digest_value(
        DomainTag::Interaction,
        &Value::record([
            Value::Uint(seq_no),
            Value::list(field_digests.iter().map(Value::bytes)),
        ]),
    )
}

/// One model-API call as measured by the enclave.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub seq_no: u64,
    pub prompt: Blob,
    pub response: Blob,
    pub model_name: String,
    pub token_in: u64,
    pub token_out: u64,
    /// Milliseconds since the Unix epoch, enclave-local clock.
    pub timestamp: u64,
    /// One salt per field, in [`Field::ALL`] order.
    pub field_salts: [Salt; FIELD_COUNT],
}

impl InteractionRecord {
    pub fn value(&self, field: Field) -> FieldValue {
        match field {
            Field::Prompt => FieldValue::Bytes(self.prompt.clone()),
            Field::Response => FieldValue::Bytes(self.response.clone()),
            Field::ModelName => FieldValue::Text(self.model_name.clone()),
            Field::TokenIn => FieldValue::Uint(self.token_in),
            Field::TokenOut => FieldValue::Uint(self.token_out),
            Field::Timestamp => FieldValue::Uint(self.timestamp),
        }
    }

    pub fn salt(&self, field: Field) -> Salt {
        self.field_salts[field.index()]
    }

    pub fn measure(&self) -> InteractionDigest {
        let field_digests = Field::ALL.map(|f| field_commitment(&self.value(f), &self.salt(f)));
        InteractionDigest {
            seq_no: self.seq_no,
            digest: interaction_digest(self.seq_no, &field_digests),
            field_digests,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionDigest {
    pub seq_no: u64,
    pub field_digests: [Digest; FIELD_COUNT],
    pub digest: Digest,
}

/// Chained digest committing to the first `length` interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnchoredRoot {
    pub length: u64,
    pub root: Digest,
}

impl std::fmt::Display for AnchoredRoot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.root, self.length)
    }
}

/// What the genesis root binds: the gang configuration and the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenesisInputs {
    pub gang_config_hash: Digest,
    pub agent: PublicIdentity,
}

pub fn genesis(gang_config_hash: &Digest, agent: &PublicIdentity) -> AnchoredRoot {
    AnchoredRoot {
        length: 0,
        root: digest_value(
            DomainTag::Root,
            &Value::record([Value::bytes(gang_config_hash), Value::bytes(agent)]),
        ),
    }
}

pub fn chain_step(previous: &Digest, interaction: &Digest) -> Digest {
    digest_value(
        DomainTag::Root,
        &Value::record([Value::bytes(previous), Value::bytes(interaction)]),
    )
}

/// Roots at every prefix length, `0..=digests.len()`.
pub fn replay_roots(genesis_inputs: &GenesisInputs, interaction_digests: &[Digest]) -> Vec<Digest> {
    let mut roots = Vec::with_capacity(interaction_digests.len() + 1);
    let mut current = genesis(&genesis_inputs.gang_config_hash, &genesis_inputs.agent).root;
    roots.push(current);
    for d in interaction_digests {
        current = chain_step(&current, d);
        roots.push(current);
    }
    roots
}

pub fn replay_root(genesis_inputs: &GenesisInputs, interaction_digests: &[Digest]) -> AnchoredRoot {
    let mut current = genesis(&genesis_inputs.gang_config_hash, &genesis_inputs.agent).root;
    for d in interaction_digests {
        current = chain_step(&current, d);
    }
    AnchoredRoot {
        length: interaction_digests.len() as u64,
        root: current,
    }
}

/// Unsigned statement that a log had `root` at wallclock time `wallclock`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorCommitment {
    pub agent: PublicIdentity,
    pub root: AnchoredRoot,
    pub wallclock: u64,
}

/// Append-only log: plaintext records, their digests and every prefix root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionLog {
    genesis: GenesisInputs,
    records: Vec<InteractionRecord>,
    digests: Vec<InteractionDigest>,
    roots: Vec<Digest>,
}

impl InteractionLog {
    pub fn new(genesis_inputs: GenesisInputs) -> Self {
        let g = genesis(&genesis_inputs.gang_config_hash, &genesis_inputs.agent);
        InteractionLog {
            genesis: genesis_inputs,
            records: Vec::new(),
            digests: Vec::new(),
            roots: vec![g.root],
        }
    }

    pub fn genesis_inputs(&self) -> &GenesisInputs {
        &self.genesis
    }

    pub fn len(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn digests(&self) -> &[InteractionDigest] {
        &self.digests
    }

    pub fn interaction_digests(&self) -> Vec<Digest> {
        self.digests.iter().map(|d| d.digest).collect()
    }

    pub fn root(&self) -> AnchoredRoot {
        AnchoredRoot {
            length: self.len(),
            root: *self.roots.last().expect("roots holds the genesis root"),
        }
    }

    pub fn root_at(&self, length: u64) -> Option<AnchoredRoot> {
        self.roots.get(usize::try_from(length).ok()?).map(|root| AnchoredRoot { length, root: *root })
    }

    pub fn append(&mut self, record: InteractionRecord) -> Result<AnchoredRoot, LedgerError> {
        if record.seq_no != self.len() {
            return Err(LedgerError::SeqMismatch {
                expected: self.len(),
                got: record.seq_no,
            });
        }
        if let Some(prev) = self.records.last() {
            if record.timestamp < prev.timestamp {
                return Err(LedgerError::TimestampRegression {
                    previous: prev.timestamp,
                    got: record.timestamp,
                });
            }
        }
        let measured = record.measure();
        let next = chain_step(self.roots.last().expect("genesis root present"), &measured.digest);
        self.records.push(record);
        self.digests.push(measured);
        self.roots.push(next);
        Ok(self.root())
    }

    pub fn anchor_commitment(&self, at_length: u64, wallclock: u64) -> Result<AnchorCommitment, LedgerError> {
        let root = self.root_at(at_length).ok_or(LedgerError::LengthBeyondLog {
            at_length,
            length: self.len(),
        })?;
        Ok(AnchorCommitment {
            agent: self.genesis.agent,
            root,
            wallclock,
        })
    }

    /// Recomputes every commitment from plaintext and replays the chain.
    pub fn audit(&self, exec: Exec) -> bool {
        let remeasured = exec.map(&self.records, InteractionRecord::measure);
        if remeasured != self.digests {
            return false;
        }
        if self.records.iter().enumerate().any(|(i, r)| r.seq_no != i as u64) {
            return false;
        }
        replay_roots(&self.genesis, &self.interaction_digests()) == self.roots
    }

    pub fn build_artifact(
        &self,
        selection: &[u64],
        policy: &DisclosurePolicy,
        attachment: Option<&[u8]>,
    ) -> Result<(MemoryArtifact, DisclosureProof), LedgerError> {
        self.build_artifact_at(self.len(), selection, policy, attachment)
    }

    /// Builds an artifact against the prefix root at `at_length`.
    pub fn build_artifact_at(
        &self,
        at_length: u64,
        selection: &[u64],
        policy: &DisclosurePolicy,
        attachment: Option<&[u8]>,
    ) -> Result<(MemoryArtifact, DisclosureProof), LedgerError> {
        artifact::build(self, at_length, selection, policy, attachment)
    }
}
