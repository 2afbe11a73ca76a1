//! Trade postings, escrow with receipt-gated settlement, simulated credits,
//! purchase tokens, reputation, the anchor bulletin and trace manifests.

mod anchors;
mod credits;
mod journal;
mod platform;
mod reputation;
mod trace;
mod trade;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gang::GangError;

pub use anchors::{classify, AnchorClass, AnchorEntry};
pub use credits::{CreditError, CreditLedger};
pub use journal::{split_records, Journal, JournalError, Replay};
pub use platform::{
    arbiter_body, token_stats, JournalRecord, Payout, PayoutCause, Platform, PlatformConfig, PlatformEvent,
    PlatformState, RedeemedToken, ReplayInfo,
};
pub use reputation::{related, reputation, review_weights, ReputationConfig, ReputationScore, Review, DAY_MS};
pub use trace::{verify_trace, Composition, EntryVerdict, LineageReport, TraceEntry, TraceManifest};
pub use trade::{
    CertifiedMetadata, ListingKind, ListingRequest, Resolution, TokenStats, TradeEvent, TradeListing, TradeState,
    TradeStatus,
};

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum MarketError {
    #[error(transparent)]
    Gang(#[from] GangError),
    #[error(transparent)]
    Credit(#[from] CreditError),
    #[error("unknown listing {0}")]
    UnknownListing(u64),
    #[error("unknown trade {0}")]
    UnknownTrade(u64),
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),
    #[error("advertisement does not verify: {0}")]
    Advertisement(String),
    #[error("invalid listing: {0}")]
    InvalidListing(String),
    #[error("listing {0} is already locked")]
    AlreadyLocked(u64),
    #[error("trade {trade_id}: {event:?} is not allowed in {status}")]
    IllegalTransition { trade_id: u64, status: TradeStatus, event: TradeEvent },
    #[error("amount {offered} differs from price {price}")]
    PriceMismatch { price: u64, offered: u64 },
    #[error("caller is not a party to this trade")]
    NotAParty,
    #[error("receipt rejected: {0}")]
    Receipt(String),
    #[error("resolution not signed by the arbiter")]
    NotArbiter,
    #[error("lock has not timed out; deadline {deadline}")]
    NotExpired { deadline: u64 },
    #[error("purchase token rejected: {0}")]
    Token(String),
    #[error("purchase token already redeemed")]
    AlreadyRedeemed,
    #[error("not eligible to review: {0}")]
    NotEligible(String),
    #[error("trade already reviewed by this buyer")]
    DuplicateReview,
    #[error("rating {0} outside 1..=5")]
    BadRating(u8),
    #[error("anchor rejected: {0}")]
    Anchor(String),
    #[error("idempotency key {0} already used for a different request")]
    IdempotencyConflict(String),
    #[error("journal: {0}")]
    Journal(String),
    #[error("state corrupt: {0}")]
    Corrupt(String),
}

#[cfg(test)]
mod tests;
