//! Simulated certification enclave.
//!
//! The agent runtime reaches the log only through [`Enclave`]'s methods:
//! provider calls are proxied, redacted and appended; receipts, tokens,
//! confirmations, anchors and inheritance records are signed here. There is
//! no method that rewrites or removes a logged interaction.
//!
//! Nothing here is hardware-backed. Attestation is a signature by a vendor
//! key whose seed ships with the crate, and sealed state is plain canonical
//! bytes.

mod attest;
mod provider;
mod records;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canon::{frame, unframe, Blob, CanonError, ContainerKind, Digest, KeyPair, Nonce, PublicIdentity, Salt};
use crate::clock::Clock;
use crate::ledger::{
    replay_root, verify_artifact, AnchoredRoot, ArtifactBundle, DisclosurePolicy, Field, FieldDisclosure,
    GenesisInputs, InteractionLog, InteractionRecord, LedgerError, FIELD_COUNT,
};
use crate::par::Exec;

pub use attest::{
    gang_config_hash, measurement_value, owner_key, owner_seed_hash, task_hash, vendor_root_public,
    AttestationReport, Measurement, ProviderConfig, ProviderPublic,
};
pub use provider::{
    redact, Completion, CompletionRequest, ModelProvider, ProviderError, ProviderHello, REDACTION_MASK,
};
pub use records::{
    Confirmation, DeliveryReceipt, InheritanceFault, InheritanceRecord, PurchaseToken, SignedAnchor, TradeRef,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnclaveError {
    #[error("provider identity does not match the configured provider")]
    ProviderIdentity,
    #[error("provider unavailable: {0}")]
    Provider(#[from] ProviderError),
    #[error("artifact is inconsistent with the local log: {0}")]
    ArtifactInconsistent(String),
    #[error("{0} is already bound to a different buyer or artifact")]
    BuyerBinding(TradeRef),
    #[error("no receipt for {0}")]
    NoReceipt(String),
    #[error("confirmation refused: {0}")]
    ConfirmationRefused(&'static str),
    #[error("owner seed does not match the measurement")]
    WrongOwnerSeed,
    #[error("inheritance record rejected: {0}")]
    Inheritance(String),
    #[error("sealed state failed its integrity audit")]
    Corrupt,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Encoding(#[from] CanonError),
}

/// Who may obtain a completeness confirmation besides the original buyer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ResalePolicy {
    #[default]
    Forbidden,
    /// Third parties are confirmed once the market reports a fee as paid.
    FeeRequired,
    Allowed,
}

/// Everything fixed into the measured image at boot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootParams {
    pub image_template_hash: Digest,
    pub task_description_hash: Digest,
    pub slot_id: u64,
    pub owner_seed: [u8; 32],
    pub security_version: u64,
    pub provider: ProviderConfig,
    pub resale_policy: ResalePolicy,
}

/// Seeded ChaCha20 stream that can be sealed with the rest of the state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SealedRng {
    seed: Digest,
    word_pos: u64,
}

impl SealedRng {
    fn fill(&mut self, buf: &mut [u8]) {
        let mut r = ChaCha20Rng::from_seed(self.seed.0);
        r.set_word_pos(u128::from(self.word_pos));
        r.fill_bytes(buf);
        self.word_pos = r.get_word_pos() as u64;
    }

    fn salt(&mut self) -> Salt {
        let mut s = Salt([0; 16]);
        self.fill(&mut s.0);
        s
    }

    fn nonce(&mut self) -> Nonce {
        let mut n = Nonce([0; 16]);
        self.fill(&mut n.0);
        n
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct IssuedReceipt {
    buyer: PublicIdentity,
    receipt: DeliveryReceipt,
}

/// Digests received from a predecessor enclave.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportedLineage {
    pub record: InheritanceRecord,
    pub interaction_digests: Vec<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Sealed {
    measurement: Measurement,
    security_version: u64,
    agent_key: KeyPair,
    owner_public: PublicIdentity,
    provider: ProviderConfig,
    resale_policy: ResalePolicy,
    log: InteractionLog,
    rng: SealedRng,
    receipts: BTreeMap<TradeRef, IssuedReceipt>,
    lineage: Vec<ImportedLineage>,
}

pub struct Enclave {
    sealed: Sealed,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Enclave {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Enclave")
            .field("agent", &self.agent_public())
            .field("slot_id", &self.sealed.measurement.slot_id)
            .field("root", &self.root())
            .finish()
    }
}

impl Enclave {
    /// Boots a fresh instance: new agent key, measurement from the image
    /// inputs, empty log bound to the gang configuration.
    pub fn boot<R: RngCore + CryptoRng>(params: BootParams, rng: &mut R, clock: Arc<dyn Clock>) -> Self {
        let measurement = Measurement::compute(
            params.image_template_hash,
            params.task_description_hash,
            params.slot_id,
            owner_seed_hash(&params.owner_seed),
        );
        let agent_key = KeyPair::generate(rng);
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let genesis = GenesisInputs {
            gang_config_hash: gang_config_hash(&measurement.value, &params.provider.public),
            agent: agent_key.public(),
        };
        Enclave {
            sealed: Sealed {
                measurement,
                security_version: params.security_version,
                owner_public: owner_key(&params.owner_seed).public(),
                agent_key,
                provider: params.provider,
                resale_policy: params.resale_policy,
                log: InteractionLog::new(genesis),
                rng: SealedRng {
                    seed: Digest(seed),
                    word_pos: 0,
                },
                receipts: BTreeMap::new(),
                lineage: Vec::new(),
            },
            clock,
        }
    }

    pub fn agent_public(&self) -> PublicIdentity {
        self.sealed.agent_key.public()
    }

    pub fn measurement(&self) -> &Measurement {
        &self.sealed.measurement
    }

    pub fn security_version(&self) -> u64 {
        self.sealed.security_version
    }

    pub fn provider(&self) -> &ProviderPublic {
        &self.sealed.provider.public
    }

    pub fn owner_public(&self) -> PublicIdentity {
        self.sealed.owner_public
    }

    pub fn genesis_inputs(&self) -> GenesisInputs {
        *self.sealed.log.genesis_inputs()
    }

    pub fn root(&self) -> AnchoredRoot {
        self.sealed.log.root()
    }

    /// Read-only view of the log for the agent runtime.
    pub fn log(&self) -> &InteractionLog {
        &self.sealed.log
    }

    pub fn lineage(&self) -> &[ImportedLineage] {
        &self.sealed.lineage
    }

    pub fn attest(&self, nonce: Nonce) -> AttestationReport {
        AttestationReport::issue(self.sealed.measurement, self.sealed.security_version, self.agent_public(), nonce)
    }

    /// Authenticates the provider, forwards the prompt with the credential,
    /// and logs the redacted exchange. Returns the redacted response.
    pub fn proxy_call(&mut self, provider: &mut dyn ModelProvider, prompt: &[u8]) -> Result<Blob, EnclaveError> {
        let nonce = self.sealed.rng.nonce();
        let hello = provider.hello(&nonce)?;
        if !hello.verify(&self.sealed.provider.public, &nonce) {
            return Err(EnclaveError::ProviderIdentity);
        }
        let request = CompletionRequest {
            model_name: self.sealed.provider.public.model_name.clone(),
            prompt: Blob(prompt.to_vec()),
            credential: self.sealed.provider.credential.clone(),
        };
        let completion = provider.complete(&request)?;
        let secret = self.sealed.provider.credential.as_slice();
        let prompt = redact(prompt, secret);
        let response = redact(completion.response.as_slice(), secret);
        let last = self.sealed.log.records().last().map_or(0, |r| r.timestamp);
        let mut field_salts = [Salt([0; 16]); FIELD_COUNT];
        for s in &mut field_salts {
            *s = self.sealed.rng.salt();
        }
        let record = InteractionRecord {
            seq_no: self.sealed.log.len(),
            prompt: Blob(prompt),
            response: Blob(response.clone()),
            model_name: self.sealed.provider.public.model_name.clone(),
            token_in: completion.token_in,
            token_out: completion.token_out,
            timestamp: self.clock.now_ms().max(last),
            field_salts,
        };
        self.sealed.log.append(record)?;
        Ok(Blob(response))
    }

    /// Builds a deliverable bundle from the local log.
    pub fn build_bundle(
        &self,
        at_length: u64,
        selection: &[u64],
        policy: &DisclosurePolicy,
        attachment: Option<&[u8]>,
    ) -> Result<ArtifactBundle, EnclaveError> {
        let (artifact, proof) = self.sealed.log.build_artifact_at(at_length, selection, policy, attachment)?;
        Ok(ArtifactBundle {
            artifact,
            proof,
            genesis: self.genesis_inputs(),
        })
    }

    fn check_against_log(&self, bundle: &ArtifactBundle) -> Result<(), EnclaveError> {
        let log = &self.sealed.log;
        if bundle.genesis != *log.genesis_inputs() {
            return Err(EnclaveError::ArtifactInconsistent("genesis inputs differ".into()));
        }
        let claimed = bundle.artifact.claimed_root;
        let local = log
            .root_at(claimed.length)
            .ok_or_else(|| EnclaveError::ArtifactInconsistent("claimed length exceeds the log".into()))?;
        let report = verify_artifact(&bundle.artifact, &bundle.proof, &local, log.genesis_inputs(), None);
        if !report.accepted() {
            return Err(EnclaveError::ArtifactInconsistent(format!("checks failed: {:?}", report.failed())));
        }
        for (seq, disclosure) in bundle.artifact.selection.iter().zip(&bundle.artifact.opened) {
            let record = &log.records()[*seq as usize];
            for (field, fd) in Field::ALL.iter().zip(&disclosure.fields) {
                if let FieldDisclosure::Opened { value, salt } = fd {
                    if *value != record.value(*field) || *salt != record.salt(*field) {
                        return Err(EnclaveError::ArtifactInconsistent(format!("interaction {seq} field {field}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks `container` against the local log and signs a receipt bound
    /// to `buyer`. Re-issuing for the same buyer and artifact is allowed.
    pub fn issue_receipt(&mut self, trade: TradeRef, buyer: PublicIdentity, container: &[u8]) -> Result<DeliveryReceipt, EnclaveError> {
        let bundle = ArtifactBundle::from_container(container)
            .map_err(|e| EnclaveError::ArtifactInconsistent(e.to_string()))?;
        self.check_against_log(&bundle)?;
        let artifact_hash = ArtifactBundle::hash_container(container);
        if let Some(prev) = self.sealed.receipts.get(&trade) {
            if prev.buyer != buyer || prev.receipt.artifact_hash != artifact_hash {
                return Err(EnclaveError::BuyerBinding(trade));
            }
            return Ok(prev.receipt.clone());
        }
        let receipt = DeliveryReceipt::issue(&self.sealed.agent_key, trade, buyer, artifact_hash, bundle.artifact.claimed_root);
        self.sealed.receipts.insert(
            trade,
            IssuedReceipt {
                buyer,
                receipt: receipt.clone(),
            },
        );
        Ok(receipt)
    }

    pub fn issue_purchase_token(&self, trade: TradeRef, amount: u64) -> Result<PurchaseToken, EnclaveError> {
        let issued = self.sealed.receipts.get(&trade).ok_or_else(|| EnclaveError::NoReceipt(trade.to_string()))?;
        Ok(PurchaseToken::issue(&self.sealed.agent_key, trade, issued.buyer, amount))
    }

    pub fn resale_policy(&self) -> ResalePolicy {
        self.sealed.resale_policy
    }

    /// Fresh confirmation that `artifact_hash` is a complete, receipted
    /// segment of this log, bound to `requester`.
    pub fn confirm_artifact(&self, artifact_hash: &Digest, requester: &PublicIdentity, fee_paid: bool) -> Result<Confirmation, EnclaveError> {
        let issued: Vec<&IssuedReceipt> = self
            .sealed
            .receipts
            .values()
            .filter(|r| r.receipt.artifact_hash == *artifact_hash)
            .collect();
        let first = issued
            .first()
            .ok_or_else(|| EnclaveError::NoReceipt(artifact_hash.to_string()))?;
        let original = issued.iter().find(|r| r.buyer == *requester);
        let allowed = original.is_some()
            || match self.sealed.resale_policy {
                ResalePolicy::Forbidden => false,
                ResalePolicy::FeeRequired => fee_paid,
                ResalePolicy::Allowed => true,
            };
        if !allowed {
            return Err(EnclaveError::ConfirmationRefused(match self.sealed.resale_policy {
                ResalePolicy::Forbidden => "resale is forbidden for this gang",
                _ => "resale fee not paid",
            }));
        }
        let basis = original.unwrap_or(first);
        Ok(Confirmation {
            artifact_hash: *artifact_hash,
            requester: *requester,
            trade: basis.receipt.trade,
            referenced_root: basis.receipt.referenced_root,
            issued_at: self.clock.now_ms(),
            enclave_signature: crate::canon::Signature([0; 64]),
        }
        .sign_with(&self.sealed.agent_key))
    }

    pub fn authorize_inheritance(&self, owner_seed: &[u8; 32], successor: PublicIdentity) -> Result<InheritanceRecord, EnclaveError> {
        if owner_seed_hash(owner_seed) != self.sealed.measurement.owner_seed_hash {
            return Err(EnclaveError::WrongOwnerSeed);
        }
        let owner = owner_key(owner_seed);
        let empty = crate::canon::Signature([0; 64]);
        Ok(InheritanceRecord {
            predecessor: self.agent_public(),
            successor,
            predecessor_gang_config: self.genesis_inputs().gang_config_hash,
            root_at_transfer: self.root(),
            owner_public: owner.public(),
            owner_seed_hash: self.sealed.measurement.owner_seed_hash,
            owner_authorization: empty,
            enclave_signature: empty,
        }
        .sign_with(&owner, &self.sealed.agent_key))
    }

    /// Accepts a predecessor's digests under a record naming this agent.
    pub fn import_inheritance(&mut self, record: InheritanceRecord, interaction_digests: Vec<Digest>) -> Result<(), EnclaveError> {
        record
            .verify()
            .map_err(|f| EnclaveError::Inheritance(format!("{f:?}")))?;
        if record.successor != self.agent_public() {
            return Err(EnclaveError::Inheritance("record names a different successor".into()));
        }
        let genesis = GenesisInputs {
            gang_config_hash: record.predecessor_gang_config,
            agent: record.predecessor,
        };
        if replay_root(&genesis, &interaction_digests) != record.root_at_transfer {
            return Err(EnclaveError::Inheritance("digests do not chain to the transferred root".into()));
        }
        self.sealed.lineage.push(ImportedLineage {
            record,
            interaction_digests,
        });
        Ok(())
    }

    pub fn sign_anchor(&self, at_length: u64, wallclock: u64) -> Result<SignedAnchor, EnclaveError> {
        let commitment = self.sealed.log.anchor_commitment(at_length, wallclock)?;
        Ok(SignedAnchor::sign(&self.sealed.agent_key, commitment))
    }

    /// Sealed state as a message container. Holds the agent secret key in
    /// the clear; a simulation convenience only.
    pub fn seal(&self) -> Result<Vec<u8>, EnclaveError> {
        Ok(frame(ContainerKind::Message, &self.sealed)?)
    }

    /// Restores sealed state after re-auditing every commitment and root.
    pub fn unseal(bytes: &[u8], clock: Arc<dyn Clock>) -> Result<Self, EnclaveError> {
        let sealed: Sealed = unframe(ContainerKind::Message, bytes)?;
        if !sealed.log.audit(Exec::default()) || !sealed.measurement.is_consistent() {
            return Err(EnclaveError::Corrupt);
        }
        Ok(Enclave { sealed, clock })
    }
}
