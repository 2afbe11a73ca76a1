//! Listings and the escrow state machine.

use serde::{Deserialize, Serialize};

use crate::canon::{Digest, PublicIdentity};
use crate::enclave::{DeliveryReceipt, PurchaseToken, ResalePolicy};
use crate::gang::MembershipCertificate;
use crate::ledger::{AnchoredRoot, DisclosureProof, MemoryArtifact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TradeStatus {
    Posted,
    Locked,
    Delivered,
    Settled,
    Disputed,
    Refunded,
    Cancelled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TradeEvent {
    Lock,
    Deliver,
    Receipt,
    Dispute,
    ResolveSettled,
    ResolveRefunded,
    Timeout,
    Cancel,
}

impl TradeEvent {
    pub const ALL: [TradeEvent; 8] = [
        TradeEvent::Lock,
        TradeEvent::Deliver,
        TradeEvent::Receipt,
        TradeEvent::Dispute,
        TradeEvent::ResolveSettled,
        TradeEvent::ResolveRefunded,
        TradeEvent::Timeout,
        TradeEvent::Cancel,
    ];
}

impl TradeStatus {
    pub const ALL: [TradeStatus; 7] = [
        TradeStatus::Posted,
        TradeStatus::Locked,
        TradeStatus::Delivered,
        TradeStatus::Settled,
        TradeStatus::Disputed,
        TradeStatus::Refunded,
        TradeStatus::Cancelled,
    ];

    /// The transition relation. A receipt arriving in `Locked` is applied
    /// as `Deliver` followed by `Receipt`.
    pub fn on(self, event: TradeEvent) -> Option<TradeStatus> {
        use TradeEvent as E;
        use TradeStatus as S;
        match (self, event) {
            (S::Posted, E::Lock) => Some(S::Locked),
            (S::Posted, E::Cancel) => Some(S::Cancelled),
            (S::Locked, E::Deliver) => Some(S::Delivered),
            (S::Locked, E::Dispute) => Some(S::Disputed),
            (S::Locked, E::Timeout) => Some(S::Refunded),
            (S::Delivered, E::Receipt) => Some(S::Settled),
            (S::Disputed, E::ResolveSettled) => Some(S::Settled),
            (S::Disputed, E::ResolveRefunded) => Some(S::Refunded),
            _ => None,
        }
    }

    pub fn successors(self) -> Vec<TradeStatus> {
        TradeEvent::ALL.iter().filter_map(|e| self.on(*e)).collect()
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, TradeStatus::Settled | TradeStatus::Refunded | TradeStatus::Cancelled)
    }

    /// Whether escrow is held in this state.
    pub fn holds_escrow(self) -> bool {
        matches!(self, TradeStatus::Locked | TradeStatus::Delivered | TradeStatus::Disputed)
    }
}

impl std::fmt::Display for TradeStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ListingKind {
    Offer,
    /// Buy-side request: price is the offered amount, no metadata.
    Request,
}

/// Token statistics recomputed by the platform from opened fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStats {
    pub interactions: u64,
    pub disclosed: u64,
    pub token_in: u64,
    pub token_out: u64,
    pub first_timestamp: Option<u64>,
    pub last_timestamp: Option<u64>,
    /// True when every interaction was disclosed with its token fields open.
    pub covers_all: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertifiedMetadata {
    pub claimed_root: AnchoredRoot,
    pub advertisement: MemoryArtifact,
    pub advertisement_proof: DisclosureProof,
    pub stats: TokenStats,
}

/// What a poster submits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingRequest {
    pub kind: ListingKind,
    pub poster: PublicIdentity,
    pub seller_cert: Option<MembershipCertificate>,
    pub price: u64,
    pub advertisement: Option<(MemoryArtifact, DisclosureProof)>,
    pub resale_policy: ResalePolicy,
    pub seller_endpoint: String,
    pub encrypted_artifact_hash: Option<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeListing {
    pub listing_id: u64,
    pub kind: ListingKind,
    pub poster: PublicIdentity,
    pub seller_cert: Option<MembershipCertificate>,
    pub price: u64,
    pub metadata: Option<CertifiedMetadata>,
    pub resale_policy: ResalePolicy,
    pub seller_endpoint: String,
    pub encrypted_artifact_hash: Option<Digest>,
    pub posted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeState {
    pub trade_id: u64,
    pub listing_id: u64,
    pub seller: PublicIdentity,
    pub buyer: Option<PublicIdentity>,
    pub status: TradeStatus,
    pub escrow_amount: u64,
    pub locked_at: Option<u64>,
    pub receipt: Option<DeliveryReceipt>,
    pub token: Option<PurchaseToken>,
    pub history: Vec<(TradeStatus, u64)>,
}

impl TradeState {
    pub(crate) fn step(&mut self, event: TradeEvent, at: u64) -> Option<TradeStatus> {
        let next = self.status.on(event)?;
        self.status = next;
        self.history.push((next, at));
        Some(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Settled,
    Refunded,
}

#[cfg(test)]
mod tests {
    use super::*;

    const EVENTS: [TradeEvent; 8] = TradeEvent::ALL;

    #[test]
    fn relation_is_exactly_the_legal_edges() {
        use TradeStatus as S;
        let legal = [
            (S::Posted, S::Locked),
            (S::Locked, S::Delivered),
            (S::Delivered, S::Settled),
            (S::Locked, S::Disputed),
            (S::Disputed, S::Settled),
            (S::Disputed, S::Refunded),
            (S::Posted, S::Cancelled),
            (S::Locked, S::Refunded),
        ];
        let mut edges = Vec::new();
        for s in TradeStatus::ALL {
            for e in EVENTS {
                if let Some(n) = s.on(e) {
                    edges.push((s, n));
                }
            }
        }
        edges.sort();
        let mut expected = legal.to_vec();
        expected.sort();
        assert_eq!(edges, expected);
    }

    #[test]
    fn terminal_states_absorb() {
        for s in TradeStatus::ALL.into_iter().filter(|s| s.is_terminal()) {
            assert!(EVENTS.iter().all(|e| s.on(*e).is_none()));
        }
    }
}
