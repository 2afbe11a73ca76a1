//! Statements signed by an enclave (or its owner) and their verification.

use serde::{Deserialize, Serialize};

use crate::canon::{encode_canonical, sign, verify, Digest, DomainTag, KeyPair, PublicIdentity, Signature, Value};
use crate::ledger::{AnchorCommitment, AnchoredRoot};

fn root_value(root: &AnchoredRoot) -> Value {
    Value::record([Value::Uint(root.length), Value::bytes(root.root)])
}

fn payload(v: Value) -> Vec<u8> {
    encode_canonical(&v).into_vec()
}

/// A platform trade, or an off-platform trade named by an agreed digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TradeRef {
    Platform(u64),
    External(Digest),
}

impl TradeRef {
    pub fn value(&self) -> Value {
        match self {
            TradeRef::Platform(id) => Value::record([Value::Uint(0), Value::Uint(*id)]),
            TradeRef::External(d) => Value::record([Value::Uint(1), Value::bytes(d)]),
        }
    }
}

impl std::fmt::Display for TradeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TradeRef::Platform(id) => write!(f, "trade {id}"),
            TradeRef::External(d) => write!(f, "external trade {d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub trade: TradeRef,
    pub buyer: PublicIdentity,
    pub artifact_hash: Digest,
    pub referenced_root: AnchoredRoot,
    pub enclave_signature: Signature,
}

impl DeliveryReceipt {
    fn body(trade: &TradeRef, buyer: &PublicIdentity, artifact_hash: &Digest, root: &AnchoredRoot) -> Vec<u8> {
        payload(Value::record([
            trade.value(),
            Value::bytes(buyer),
            Value::bytes(artifact_hash),
            root_value(root),
        ]))
    }

    pub(crate) fn issue(key: &KeyPair, trade: TradeRef, buyer: PublicIdentity, artifact_hash: Digest, referenced_root: AnchoredRoot) -> Self {
        let sig = sign(key, DomainTag::Receipt, &Self::body(&trade, &buyer, &artifact_hash, &referenced_root));
        DeliveryReceipt {
            trade,
            buyer,
            artifact_hash,
            referenced_root,
            enclave_signature: sig,
        }
    }

    pub fn verify_signature(&self, agent: &PublicIdentity) -> bool {
        verify(
            agent,
            DomainTag::Receipt,
            &Self::body(&self.trade, &self.buyer, &self.artifact_hash, &self.referenced_root),
            &self.enclave_signature,
        )
    }

    /// Signature plus the trade, buyer and artifact this receipt must name.
    pub fn verify_for(&self, agent: &PublicIdentity, trade: &TradeRef, buyer: &PublicIdentity, artifact_hash: &Digest) -> bool {
        self.trade == *trade && self.buyer == *buyer && self.artifact_hash == *artifact_hash && self.verify_signature(agent)
    }
}

/// Seller-signed, one-time review credential.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurchaseToken {
    pub trade: TradeRef,
    pub buyer: PublicIdentity,
    pub seller: PublicIdentity,
    /// Payment size behind the trade, in credits.
    pub amount: u64,
    pub seller_signature: Signature,
}

impl PurchaseToken {
    fn body(trade: &TradeRef, buyer: &PublicIdentity, seller: &PublicIdentity, amount: u64) -> Vec<u8> {
        payload(Value::record([
            trade.value(),
            Value::bytes(buyer),
            Value::bytes(seller),
            Value::Uint(amount),
        ]))
    }

    pub(crate) fn issue(key: &KeyPair, trade: TradeRef, buyer: PublicIdentity, amount: u64) -> Self {
        let seller = key.public();
        PurchaseToken {
            trade,
            buyer,
            seller,
            amount,
            seller_signature: sign(key, DomainTag::Token, &Self::body(&trade, &buyer, &seller, amount)),
        }
    }

    pub fn verify(&self) -> bool {
        verify(
            &self.seller,
            DomainTag::Token,
            &Self::body(&self.trade, &self.buyer, &self.seller, self.amount),
            &self.seller_signature,
        )
    }

    /// Stable identifier used for one-time redemption.
    pub fn id(&self) -> Digest {
        crate::canon::digest(DomainTag::Token, &Self::body(&self.trade, &self.buyer, &self.seller, self.amount))
    }
}

/// Fresh completeness confirmation for one requester.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confirmation {
    pub artifact_hash: Digest,
    pub requester: PublicIdentity,
    pub trade: TradeRef,
    pub referenced_root: AnchoredRoot,
    pub issued_at: u64,
    pub enclave_signature: Signature,
}

impl Confirmation {
    fn body(&self) -> Vec<u8> {
        payload(Value::record([
            Value::bytes(self.artifact_hash),
            Value::bytes(self.requester),
            self.trade.value(),
            root_value(&self.referenced_root),
            Value::Uint(self.issued_at),
        ]))
    }

    pub(crate) fn sign_with(mut self, key: &KeyPair) -> Self {
        self.enclave_signature = sign(key, DomainTag::Confirm, &self.body());
        self
    }

    pub fn verify(&self, agent: &PublicIdentity) -> bool {
        verify(agent, DomainTag::Confirm, &self.body(), &self.enclave_signature)
    }
}

/// Certified transfer of a log from predecessor to successor.
///
/// `owner_public` and `owner_seed_hash` are both carried; the enclave
/// signature vouches that the former was derived from the seed behind the
/// latter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InheritanceRecord {
    pub predecessor: PublicIdentity,
    pub successor: PublicIdentity,
    pub predecessor_gang_config: Digest,
    pub root_at_transfer: AnchoredRoot,
    pub owner_public: PublicIdentity,
    pub owner_seed_hash: Digest,
    pub owner_authorization: Signature,
    pub enclave_signature: Signature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InheritanceFault {
    OwnerSignature,
    EnclaveSignature,
}

impl InheritanceRecord {
    fn body(&self) -> Vec<u8> {
        payload(Value::record([
            Value::bytes(self.predecessor),
            Value::bytes(self.successor),
            Value::bytes(self.predecessor_gang_config),
            root_value(&self.root_at_transfer),
            Value::bytes(self.owner_public),
            Value::bytes(self.owner_seed_hash),
        ]))
    }

    fn countersigned(&self) -> Vec<u8> {
        payload(Value::record([Value::bytes(self.body()), Value::bytes(self.owner_authorization)]))
    }

    pub(crate) fn sign_with(mut self, owner: &KeyPair, enclave: &KeyPair) -> Self {
        self.owner_authorization = sign(owner, DomainTag::Inherit, &self.body());
        self.enclave_signature = sign(enclave, DomainTag::Inherit, &self.countersigned());
        self
    }

    /// Both signatures; the enclave one under `predecessor`.
    pub fn verify(&self) -> Result<(), InheritanceFault> {
        if !verify(&self.owner_public, DomainTag::Inherit, &self.body(), &self.owner_authorization) {
            return Err(InheritanceFault::OwnerSignature);
        }
        if !verify(&self.predecessor, DomainTag::Inherit, &self.countersigned(), &self.enclave_signature) {
            return Err(InheritanceFault::EnclaveSignature);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedAnchor {
    pub commitment: AnchorCommitment,
    pub signature: Signature,
}

pub(crate) fn anchor_payload(c: &AnchorCommitment) -> Vec<u8> {
    payload(Value::record([
        Value::bytes(c.agent),
        root_value(&c.root),
        Value::Uint(c.wallclock),
    ]))
}

impl SignedAnchor {
    pub(crate) fn sign(key: &KeyPair, commitment: AnchorCommitment) -> Self {
        let signature = sign(key, DomainTag::Anchor, &anchor_payload(&commitment));
        SignedAnchor { commitment, signature }
    }

    pub fn verify(&self) -> bool {
        verify(&self.commitment.agent, DomainTag::Anchor, &anchor_payload(&self.commitment), &self.signature)
    }
}
