//! The platform service: gang directory, listings, escrow, tokens, reviews
//! and the anchor bulletin behind one event-sourced state.
//!
//! Every mutating operation validates against the current state, produces
//! events, appends them to the journal as one record, then applies them.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::canon::{
    encode_canonical, from_canonical, sign, to_canonical, verify, Digest, DomainTag, KeyPair, Nonce, PublicIdentity,
    Signature, Value,
};
use crate::clock::Clock;
use crate::enclave::{AttestationReport, DeliveryReceipt, PurchaseToken, SignedAnchor, TradeRef};
use crate::gang::{
    CertStatus, GangEvent, GangRegistry, GangTemplate, MemberList, MembershipCertificate, SlotReservation,
    VulnerabilityNotice,
};
use crate::ledger::{verify_artifact, Field, FieldValue, MemoryArtifact};

use super::anchors::{classify, AnchorClass, AnchorEntry};
use super::credits::CreditLedger;
use super::journal::{Journal, JournalError};
use super::reputation::{reputation, Review, ReputationConfig, ReputationScore};
use super::trade::{
    CertifiedMetadata, ListingKind, ListingRequest, Resolution, TokenStats, TradeEvent, TradeListing, TradeState,
    TradeStatus,
};
use super::MarketError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatformConfig {
    /// Locked trades may be refunded after this long.
    pub lock_timeout_ms: u64,
    pub reputation: ReputationConfig,
    /// fsync after every journal record.
    pub sync_journal: bool,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            lock_timeout_ms: super::reputation::DAY_MS,
            reputation: ReputationConfig::default(),
            sync_journal: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayoutCause {
    Receipt,
    ArbiterSettled,
    ArbiterRefunded,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payout {
    pub trade_id: u64,
    pub to: PublicIdentity,
    pub amount: u64,
    pub cause: PayoutCause,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedeemedToken {
    pub token: PurchaseToken,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlatformEvent {
    Gang(GangEvent),
    AccountOpened { account: PublicIdentity, at: u64 },
    Deposited { account: PublicIdentity, amount: u64, at: u64 },
    ListingPosted(TradeListing),
    ListingCancelled { listing_id: u64, at: u64 },
    FundsLocked { trade_id: u64, buyer: PublicIdentity, amount: u64, idempotency_key: Option<String>, at: u64 },
    Delivered { trade_id: u64, at: u64 },
    Settled { trade_id: u64, receipt: DeliveryReceipt, token: Option<PurchaseToken>, at: u64 },
    Disputed { trade_id: u64, by: PublicIdentity, at: u64 },
    Resolved { trade_id: u64, outcome: Resolution, arbiter_signature: Signature, at: u64 },
    Expired { trade_id: u64, at: u64 },
    TokenRedeemed(RedeemedToken),
    Reviewed(Review),
    AnchorRecorded(AnchorEntry),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub index: u64,
    pub events: Vec<PlatformEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlatformState {
    pub registry: GangRegistry,
    pub credits: CreditLedger,
    pub listings: BTreeMap<u64, TradeListing>,
    pub trades: BTreeMap<u64, TradeState>,
    pub lock_keys: BTreeMap<String, u64>,
    pub redeemed: BTreeMap<Digest, RedeemedToken>,
    pub reviews: Vec<Review>,
    pub anchors: Vec<AnchorEntry>,
    pub payouts: Vec<Payout>,
    pub next_listing: u64,
    pub records_applied: u64,
}

/// Body the arbiter signs for a dispute outcome.
pub fn arbiter_body(trade_id: u64, outcome: Resolution) -> Vec<u8> {
    let o = match outcome {
        Resolution::Settled => 0,
        Resolution::Refunded => 1,
    };
    encode_canonical(&Value::record([Value::Uint(trade_id), Value::Uint(o)])).into_vec()
}

fn corrupt(msg: impl Into<String>) -> MarketError {
    MarketError::Corrupt(msg.into())
}

impl PlatformState {
    pub fn trade(&self, trade_id: u64) -> Result<&TradeState, MarketError> {
        self.trades.get(&trade_id).ok_or(MarketError::UnknownTrade(trade_id))
    }

    pub fn listing(&self, listing_id: u64) -> Result<&TradeListing, MarketError> {
        self.listings.get(&listing_id).ok_or(MarketError::UnknownListing(listing_id))
    }

    /// Account credited when a trade settles.
    pub fn payee(&self, trade_id: u64) -> Option<PublicIdentity> {
        self.listings.get(&self.trades.get(&trade_id)?.listing_id).map(|l| l.poster)
    }

    fn trade_mut(&mut self, trade_id: u64) -> Result<&mut TradeState, MarketError> {
        self.trades.get_mut(&trade_id).ok_or(MarketError::UnknownTrade(trade_id))
    }

    fn step(&mut self, trade_id: u64, event: TradeEvent, at: u64) -> Result<(), MarketError> {
        let t = self.trade_mut(trade_id)?;
        let status = t.status;
        t.step(event, at)
            .map(|_| ())
            .ok_or(MarketError::IllegalTransition { trade_id, status, event })
    }

    fn pay(&mut self, trade_id: u64, to: PublicIdentity, cause: PayoutCause) -> Result<(), MarketError> {
        let amount = self.credits.release(trade_id, &to)?;
        self.payouts.push(Payout {
            trade_id,
            to,
            amount,
            cause,
        });
        Ok(())
    }

    pub fn apply(&mut self, event: &PlatformEvent) -> Result<(), MarketError> {
        match event {
            PlatformEvent::Gang(g) => self.registry.apply(g),
            PlatformEvent::AccountOpened { account, .. } => self.credits.open(account)?,
            PlatformEvent::Deposited { account, amount, .. } => {
                self.credits.deposit(account, *amount)?;
            }
            PlatformEvent::ListingPosted(listing) => {
                let id = listing.listing_id;
                if self.listings.contains_key(&id) {
                    return Err(corrupt(format!("listing {id} posted twice")));
                }
                let seller = listing.seller_cert.as_ref().map_or(listing.poster, |c| c.agent_public);
                self.trades.insert(
                    id,
                    TradeState {
                        trade_id: id,
                        listing_id: id,
                        seller,
                        buyer: None,
                        status: TradeStatus::Posted,
                        escrow_amount: 0,
                        locked_at: None,
                        receipt: None,
                        token: None,
                        history: vec![(TradeStatus::Posted, listing.posted_at)],
                    },
                );
                self.listings.insert(id, listing.clone());
                self.next_listing = self.next_listing.max(id + 1);
            }
            PlatformEvent::ListingCancelled { listing_id, at } => self.step(*listing_id, TradeEvent::Cancel, *at)?,
            PlatformEvent::FundsLocked {
                trade_id,
                buyer,
                amount,
                idempotency_key,
                at,
            } => {
                self.credits.lock(*trade_id, buyer, *amount)?;
                self.step(*trade_id, TradeEvent::Lock, *at)?;
                let t = self.trade_mut(*trade_id)?;
                t.buyer = Some(*buyer);
                t.escrow_amount = *amount;
                t.locked_at = Some(*at);
                if let Some(k) = idempotency_key {
                    self.lock_keys.insert(k.clone(), *trade_id);
                }
            }
            PlatformEvent::Delivered { trade_id, at } => self.step(*trade_id, TradeEvent::Deliver, *at)?,
            PlatformEvent::Settled {
                trade_id,
                receipt,
                token,
                at,
            } => {
                self.step(*trade_id, TradeEvent::Receipt, *at)?;
                let payee = self.payee(*trade_id).ok_or_else(|| corrupt("settled trade without listing"))?;
                self.pay(*trade_id, payee, PayoutCause::Receipt)?;
                let t = self.trade_mut(*trade_id)?;
                t.receipt = Some(receipt.clone());
                t.token = token.clone();
            }
            PlatformEvent::Disputed { trade_id, at, .. } => self.step(*trade_id, TradeEvent::Dispute, *at)?,
            PlatformEvent::Resolved {
                trade_id, outcome, at, ..
            } => match outcome {
                Resolution::Settled => {
                    self.step(*trade_id, TradeEvent::ResolveSettled, *at)?;
                    let payee = self.payee(*trade_id).ok_or_else(|| corrupt("resolved trade without listing"))?;
                    self.pay(*trade_id, payee, PayoutCause::ArbiterSettled)?;
                }
                Resolution::Refunded => {
                    self.step(*trade_id, TradeEvent::ResolveRefunded, *at)?;
                    let buyer = self.trade(*trade_id)?.buyer.ok_or_else(|| corrupt("refund without buyer"))?;
                    self.pay(*trade_id, buyer, PayoutCause::ArbiterRefunded)?;
                }
            },
            PlatformEvent::Expired { trade_id, at } => {
                self.step(*trade_id, TradeEvent::Timeout, *at)?;
                let buyer = self.trade(*trade_id)?.buyer.ok_or_else(|| corrupt("refund without buyer"))?;
                self.pay(*trade_id, buyer, PayoutCause::Timeout)?;
            }
            PlatformEvent::TokenRedeemed(r) => {
                if self.redeemed.insert(r.token.id(), r.clone()).is_some() {
                    return Err(corrupt("token redeemed twice"));
                }
            }
            PlatformEvent::Reviewed(r) => self.reviews.push(r.clone()),
            PlatformEvent::AnchorRecorded(e) => {
                if e.position != self.anchors.len() as u64 {
                    return Err(corrupt("anchor position out of order"));
                }
                self.anchors.push(e.clone());
            }
        }
        Ok(())
    }

    /// Applies one journal record.
    pub fn apply_record(&mut self, record: &JournalRecord) -> Result<(), MarketError> {
        if record.index != self.records_applied {
            return Err(corrupt(format!(
                "journal record {} where {} was expected",
                record.index, self.records_applied
            )));
        }
        for e in &record.events {
            self.apply(e)?;
        }
        self.records_applied += 1;
        Ok(())
    }

    /// Σ balances + Σ escrow = Σ deposits, and escrow exactly where the
    /// trade state says it is held.
    pub fn check_invariants(&self) -> Result<(), String> {
        if !self.credits.conserved() {
            return Err(format!(
                "conservation: balances {} + escrow {} != deposits {}",
                self.credits.total_balances(),
                self.credits.total_escrow(),
                self.credits.deposited()
            ));
        }
        for t in self.trades.values() {
            let held = self.credits.escrow_of(t.trade_id);
            let expected = if t.status.holds_escrow() { t.escrow_amount } else { 0 };
            if held != expected {
                return Err(format!("trade {} in {} holds {held}, expected {expected}", t.trade_id, t.status));
            }
            for w in t.history.windows(2) {
                if !w[0].0.successors().contains(&w[1].0) {
                    return Err(format!("trade {}: illegal {} -> {}", t.trade_id, w[0].0, w[1].0));
                }
            }
            if t.status == TradeStatus::Settled {
                let paid = self
                    .payouts
                    .iter()
                    .filter(|p| p.trade_id == t.trade_id)
                    .all(|p| matches!(p.cause, PayoutCause::Receipt | PayoutCause::ArbiterSettled));
                let receipted = t.receipt.is_some()
                    || self
                        .payouts
                        .iter()
                        .any(|p| p.trade_id == t.trade_id && p.cause == PayoutCause::ArbiterSettled);
                if !paid || !receipted {
                    return Err(format!("trade {} settled without a receipt or arbiter outcome", t.trade_id));
                }
            }
        }
        Ok(())
    }
}

/// Result of opening a journaled platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayInfo {
    pub records: u64,
    pub discarded_bytes: u64,
}

pub struct Platform {
    state: PlatformState,
    key: KeyPair,
    config: PlatformConfig,
    clock: Arc<dyn Clock>,
    rng: ChaCha20Rng,
    rng_seed: [u8; 32],
    journal: Option<Journal>,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform")
            .field("public", &self.key.public())
            .field("records", &self.state.records_applied)
            .finish_non_exhaustive()
    }
}

impl Platform {
    /// In-memory platform with no journal.
    pub fn new(key: KeyPair, clock: Arc<dyn Clock>, rng_seed: [u8; 32], config: PlatformConfig) -> Self {
        Platform {
            state: PlatformState::default(),
            key,
            config,
            clock,
            rng: ChaCha20Rng::from_seed(rng_seed),
            rng_seed,
            journal: None,
        }
    }

    /// Opens (or creates) the journal at `path` and replays it.
    pub fn open(
        path: &Path,
        key: KeyPair,
        clock: Arc<dyn Clock>,
        rng_seed: [u8; 32],
        config: PlatformConfig,
    ) -> Result<(Self, ReplayInfo), MarketError> {
        let (journal, replay) = Journal::open(path, config.sync_journal).map_err(journal_err)?;
        let mut p = Platform::new(key, clock, rng_seed, config);
        for raw in &replay.records {
            let rec: JournalRecord = from_canonical(raw).map_err(|e| corrupt(format!("journal record: {e}")))?;
            p.state.apply_record(&rec)?;
        }
        // fresh nonce stream per restart point
        p.rng.set_stream(p.state.records_applied);
        p.journal = Some(journal);
        let info = ReplayInfo {
            records: p.state.records_applied,
            discarded_bytes: replay.discarded,
        };
        Ok((p, info))
    }

    /// Detached copy with the same state and keys and no journal.
    pub fn fork(&self) -> Platform {
        Platform {
            state: self.state.clone(),
            key: self.key.clone(),
            config: self.config,
            clock: self.clock.clone(),
            rng: self.rng.clone(),
            rng_seed: self.rng_seed,
            journal: None,
        }
    }

    pub fn state(&self) -> &PlatformState {
        &self.state
    }

    pub fn public(&self) -> PublicIdentity {
        self.key.public()
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    /// The platform is the arbiter in this realization.
    pub fn arbiter_sign(&self, trade_id: u64, outcome: Resolution) -> Signature {
        sign(&self.key, DomainTag::Arbiter, &arbiter_body(trade_id, outcome))
    }

    fn commit(&mut self, events: Vec<PlatformEvent>) -> Result<(), MarketError> {
        if events.is_empty() {
            return Ok(());
        }
        let record = JournalRecord {
            index: self.state.records_applied,
            events,
        };
        if let Some(j) = &mut self.journal {
            let bytes = to_canonical(&record).map_err(|e| corrupt(e.to_string()))?;
            j.append(&bytes).map_err(journal_err)?;
        }
        self.state.apply_record(&record)
    }

    // accounts

    pub fn open_account(&mut self, account: PublicIdentity) -> Result<(), MarketError> {
        self.state.credits.check_open(&account)?;
        let at = self.now();
        self.commit(vec![PlatformEvent::AccountOpened { account, at }])
    }

    pub fn deposit(&mut self, account: PublicIdentity, amount: u64) -> Result<u64, MarketError> {
        self.state.credits.check_deposit(&account, amount)?;
        let at = self.now();
        self.commit(vec![PlatformEvent::Deposited { account, amount, at }])?;
        Ok(self.balance_of(&account).unwrap_or(0))
    }

    pub fn balance_of(&self, account: &PublicIdentity) -> Option<u64> {
        self.state.credits.balance_of(account)
    }

    // gangs

    pub fn create_gang(&mut self, template: GangTemplate) -> Result<Digest, MarketError> {
        let id = template.gang_id();
        let events = self.state.registry.plan_create(template, self.now())?;
        self.commit(events.into_iter().map(PlatformEvent::Gang).collect())?;
        Ok(id)
    }

    pub fn reserve_slot(&mut self, gang_id: &Digest) -> Result<SlotReservation, MarketError> {
        let mut n = [0u8; 16];
        self.rng.fill_bytes(&mut n);
        let nonce = Nonce(n);
        let events = self.state.registry.plan_reserve_slot(gang_id, nonce, self.now())?;
        let slot_id = events
            .iter()
            .find_map(|e| match e {
                GangEvent::SlotReserved { slot_id, .. } => Some(*slot_id),
                _ => None,
            })
            .ok_or_else(|| corrupt("slot reservation produced no slot"))?;
        self.commit(events.into_iter().map(PlatformEvent::Gang).collect())?;
        Ok(SlotReservation {
            gang_id: *gang_id,
            slot_id,
            nonce,
        })
    }

    pub fn register_member(
        &mut self,
        gang_id: &Digest,
        report: &AttestationReport,
        nonce: &Nonce,
    ) -> Result<MembershipCertificate, MarketError> {
        let events = self.state.registry.plan_register(gang_id, report, nonce, self.now(), &self.key)?;
        let cert = events
            .iter()
            .find_map(|e| match e {
                GangEvent::Certified { cert, .. } => Some(cert.clone()),
                _ => None,
            })
            .ok_or_else(|| corrupt("registration produced no certificate"))?;
        self.commit(events.into_iter().map(PlatformEvent::Gang).collect())?;
        Ok(cert)
    }

    pub fn open_reregistration(&mut self, old: &MembershipCertificate) -> Result<Nonce, MarketError> {
        let mut n = [0u8; 16];
        self.rng.fill_bytes(&mut n);
        let nonce = Nonce(n);
        let events = self.state.registry.plan_open_reregistration(old, nonce, self.now())?;
        self.commit(events.into_iter().map(PlatformEvent::Gang).collect())?;
        Ok(nonce)
    }

    pub fn reregister(
        &mut self,
        old: &MembershipCertificate,
        report: &AttestationReport,
        nonce: &Nonce,
    ) -> Result<MembershipCertificate, MarketError> {
        let events = self.state.registry.plan_reregister(old, report, nonce, self.now(), &self.key)?;
        let cert = events
            .iter()
            .find_map(|e| match e {
                GangEvent::Recertified { cert, .. } => Some(cert.clone()),
                _ => None,
            })
            .ok_or_else(|| corrupt("re-registration produced no certificate"))?;
        self.commit(events.into_iter().map(PlatformEvent::Gang).collect())?;
        Ok(cert)
    }

    pub fn publish_vulnerability(&mut self, affected_version: u64, note: &str) -> Result<VulnerabilityNotice, MarketError> {
        let events = self
            .state
            .registry
            .plan_publish_vulnerability(affected_version, note, self.now(), &self.key);
        let notice = match events.first() {
            Some(GangEvent::VulnerabilityPublished(n)) => n.clone(),
            _ => return Err(corrupt("publication produced no notice")),
        };
        self.commit(events.into_iter().map(PlatformEvent::Gang).collect())?;
        Ok(notice)
    }

    pub fn member_list(&self, gang_id: &Digest) -> Result<MemberList, MarketError> {
        Ok(self.state.registry.member_list(gang_id, self.now(), &self.key)?)
    }

    pub fn certificate_status(&self, cert: &MembershipCertificate) -> CertStatus {
        self.state.registry.certificate_status(cert, &self.key.public())
    }

    // listings

    fn certified_metadata(
        &self,
        cert: &MembershipCertificate,
        artifact: MemoryArtifact,
        proof: crate::ledger::DisclosureProof,
    ) -> Result<CertifiedMetadata, MarketError> {
        let gang = self
            .state
            .registry
            .gang(&cert.gang_id)
            .ok_or_else(|| MarketError::InvalidCertificate("unknown gang".into()))?;
        let genesis = cert.genesis_inputs(&gang.template);
        let report = verify_artifact(&artifact, &proof, &artifact.claimed_root, &genesis, None);
        if !report.accepted() {
            return Err(MarketError::Advertisement(report.to_string()));
        }
        let stats = token_stats(&artifact);
        Ok(CertifiedMetadata {
            claimed_root: artifact.claimed_root,
            advertisement: artifact,
            advertisement_proof: proof,
            stats,
        })
    }

    pub fn post_listing(&mut self, req: ListingRequest) -> Result<u64, MarketError> {
        if req.price == 0 {
            return Err(MarketError::InvalidListing("price must be positive".into()));
        }
        let metadata = match req.kind {
            ListingKind::Request => {
                if req.seller_cert.is_some() || req.advertisement.is_some() || req.encrypted_artifact_hash.is_some() {
                    return Err(MarketError::InvalidListing("requests carry no certificate or metadata".into()));
                }
                None
            }
            ListingKind::Offer => {
                let cert = req
                    .seller_cert
                    .as_ref()
                    .ok_or_else(|| MarketError::InvalidCertificate("offer without certificate".into()))?;
                match self.certificate_status(cert) {
                    CertStatus::Current | CertStatus::Vulnerable { .. } => {}
                    other => return Err(MarketError::InvalidCertificate(format!("{other:?}"))),
                }
                if req.encrypted_artifact_hash.is_none() {
                    return Err(MarketError::InvalidListing("offer without artifact hash".into()));
                }
                let (artifact, proof) = req
                    .advertisement
                    .clone()
                    .ok_or_else(|| MarketError::InvalidListing("offer without advertisement".into()))?;
                Some(self.certified_metadata(cert, artifact, proof)?)
            }
        };
        let listing_id = self.state.next_listing;
        let listing = TradeListing {
            listing_id,
            kind: req.kind,
            poster: req.poster,
            seller_cert: req.seller_cert,
            price: req.price,
            metadata,
            resale_policy: req.resale_policy,
            seller_endpoint: req.seller_endpoint,
            encrypted_artifact_hash: req.encrypted_artifact_hash,
            posted_at: self.now(),
        };
        self.commit(vec![PlatformEvent::ListingPosted(listing)])?;
        Ok(listing_id)
    }

    pub fn cancel_listing(&mut self, listing_id: u64, by: &PublicIdentity) -> Result<(), MarketError> {
        let listing = self.state.listing(listing_id)?;
        if listing.poster != *by {
            return Err(MarketError::NotAParty);
        }
        self.expect_status(listing_id, TradeEvent::Cancel)?;
        let at = self.now();
        self.commit(vec![PlatformEvent::ListingCancelled { listing_id, at }])
    }

    pub fn listings(&self) -> impl Iterator<Item = &TradeListing> {
        self.state.listings.values()
    }

    fn expect_status(&self, trade_id: u64, event: TradeEvent) -> Result<&TradeState, MarketError> {
        let t = self.state.trade(trade_id)?;
        if t.status.on(event).is_none() {
            return Err(MarketError::IllegalTransition {
                trade_id,
                status: t.status,
                event,
            });
        }
        Ok(t)
    }

    // escrow

    /// Trade ids equal listing ids. A repeated `idempotency_key` from the
    /// same buyer returns the original trade without a second lock.
    pub fn lock_funds(
        &mut self,
        listing_id: u64,
        buyer: PublicIdentity,
        amount: u64,
        idempotency_key: Option<String>,
    ) -> Result<u64, MarketError> {
        if let Some(k) = &idempotency_key {
            if let Some(&tid) = self.state.lock_keys.get(k) {
                let t = self.state.trade(tid)?;
                if tid == listing_id && t.buyer == Some(buyer) && t.escrow_amount == amount {
                    return Ok(tid);
                }
                return Err(MarketError::IdempotencyConflict(k.clone()));
            }
        }
        let listing = self.state.listing(listing_id)?;
        if listing.kind == ListingKind::Request {
            return Err(MarketError::InvalidListing("requests cannot be locked".into()));
        }
        let price = listing.price;
        let t = self.state.trade(listing_id)?;
        match t.status {
            TradeStatus::Posted => {}
            TradeStatus::Cancelled => {
                return Err(MarketError::IllegalTransition {
                    trade_id: listing_id,
                    status: t.status,
                    event: TradeEvent::Lock,
                })
            }
            _ => return Err(MarketError::AlreadyLocked(listing_id)),
        }
        if amount != price {
            return Err(MarketError::PriceMismatch { price, offered: amount });
        }
        self.state.credits.check_lock(listing_id, &buyer, amount)?;
        let at = self.now();
        self.commit(vec![PlatformEvent::FundsLocked {
            trade_id: listing_id,
            buyer,
            amount,
            idempotency_key,
            at,
        }])?;
        Ok(listing_id)
    }

    fn is_seller_side(&self, trade_id: u64, who: &PublicIdentity) -> bool {
        self.state.trades.get(&trade_id).is_some_and(|t| t.seller == *who) || self.state.payee(trade_id) == Some(*who)
    }

    /// Seller's notice that the encrypted artifact went out.
    pub fn mark_delivered(&mut self, trade_id: u64, by: &PublicIdentity) -> Result<(), MarketError> {
        if !self.is_seller_side(trade_id, by) {
            return Err(MarketError::NotAParty);
        }
        self.expect_status(trade_id, TradeEvent::Deliver)?;
        let at = self.now();
        self.commit(vec![PlatformEvent::Delivered { trade_id, at }])
    }

    /// Releases escrow to the seller against a receipt from the seller's
    /// certified enclave. Replaying the receipt of a settled trade is a no-op.
    pub fn submit_receipt(
        &mut self,
        trade_id: u64,
        receipt: DeliveryReceipt,
        token: Option<PurchaseToken>,
    ) -> Result<TradeStatus, MarketError> {
        let t = self.state.trade(trade_id)?;
        if t.status == TradeStatus::Settled && t.receipt.as_ref() == Some(&receipt) {
            return Ok(TradeStatus::Settled);
        }
        let from_locked = match t.status {
            TradeStatus::Locked => true,
            TradeStatus::Delivered => false,
            status => {
                return Err(MarketError::IllegalTransition {
                    trade_id,
                    status,
                    event: TradeEvent::Receipt,
                })
            }
        };
        let buyer = t.buyer.ok_or_else(|| corrupt("locked trade without buyer"))?;
        let amount = t.escrow_amount;
        let listing = self.state.listing(t.listing_id)?;
        let agent = listing
            .seller_cert
            .as_ref()
            .map(|c| c.agent_public)
            .ok_or_else(|| MarketError::Receipt("listing has no certified seller".into()))?;
        let hash = listing
            .encrypted_artifact_hash
            .ok_or_else(|| MarketError::Receipt("listing has no artifact hash".into()))?;
        if !receipt.verify_signature(&agent) {
            return Err(MarketError::Receipt("signature does not verify under the seller's agent key".into()));
        }
        let tref = TradeRef::Platform(trade_id);
        if !receipt.verify_for(&agent, &tref, &buyer, &hash) {
            return Err(MarketError::Receipt("trade, buyer or artifact hash does not match".into()));
        }
        if let Some(m) = &listing.metadata {
            if receipt.referenced_root != m.claimed_root {
                return Err(MarketError::Receipt("referenced root differs from the listed root".into()));
            }
        }
        if let Some(tok) = &token {
            if !tok.verify() || tok.trade != tref || tok.buyer != buyer || tok.seller != agent || tok.amount != amount {
                return Err(MarketError::Token("purchase token does not match this trade".into()));
            }
        }
        let at = self.now();
        let mut events = Vec::new();
        if from_locked {
            events.push(PlatformEvent::Delivered { trade_id, at });
        }
        events.push(PlatformEvent::Settled {
            trade_id,
            receipt,
            token,
            at,
        });
        self.commit(events)?;
        Ok(TradeStatus::Settled)
    }

    pub fn dispute(&mut self, trade_id: u64, party: &PublicIdentity) -> Result<(), MarketError> {
        let t = self.state.trade(trade_id)?;
        if t.buyer != Some(*party) && !self.is_seller_side(trade_id, party) {
            return Err(MarketError::NotAParty);
        }
        self.expect_status(trade_id, TradeEvent::Dispute)?;
        let at = self.now();
        self.commit(vec![PlatformEvent::Disputed {
            trade_id,
            by: *party,
            at,
        }])
    }

    pub fn resolve(&mut self, trade_id: u64, outcome: Resolution, arbiter_signature: Signature) -> Result<(), MarketError> {
        if !verify(
            &self.key.public(),
            DomainTag::Arbiter,
            &arbiter_body(trade_id, outcome),
            &arbiter_signature,
        ) {
            return Err(MarketError::NotArbiter);
        }
        let event = match outcome {
            Resolution::Settled => TradeEvent::ResolveSettled,
            Resolution::Refunded => TradeEvent::ResolveRefunded,
        };
        self.expect_status(trade_id, event)?;
        let at = self.now();
        self.commit(vec![PlatformEvent::Resolved {
            trade_id,
            outcome,
            arbiter_signature,
            at,
        }])
    }

    /// Refunds a locked trade once the lock timeout has passed.
    pub fn expire(&mut self, trade_id: u64) -> Result<(), MarketError> {
        let t = self.expect_status(trade_id, TradeEvent::Timeout)?;
        let deadline = t.locked_at.unwrap_or(0).saturating_add(self.config.lock_timeout_ms);
        let now = self.now();
        if now < deadline {
            return Err(MarketError::NotExpired { deadline });
        }
        self.commit(vec![PlatformEvent::Expired { trade_id, at: now }])
    }

    // tokens and reviews

    pub fn redeem_token(&mut self, token: PurchaseToken) -> Result<(), MarketError> {
        if !token.verify() {
            return Err(MarketError::Token("seller signature does not verify".into()));
        }
        if self.state.redeemed.contains_key(&token.id()) {
            return Err(MarketError::AlreadyRedeemed);
        }
        match token.trade {
            TradeRef::Platform(id) => {
                let t = self.state.trade(id)?;
                if t.status != TradeStatus::Settled || t.buyer != Some(token.buyer) || t.seller != token.seller {
                    return Err(MarketError::Token("token does not match a settled trade".into()));
                }
            }
            TradeRef::External(_) => {
                if self.state.registry.member_by_agent(&token.seller).is_none() {
                    return Err(MarketError::Token("off-platform token from an uncertified seller".into()));
                }
            }
        }
        let at = self.now();
        self.commit(vec![PlatformEvent::TokenRedeemed(RedeemedToken { token, at })])
    }

    fn review_basis(&self, trade: &TradeRef, reviewer: &PublicIdentity) -> Option<(PublicIdentity, u64)> {
        if let TradeRef::Platform(id) = trade {
            if let Some(t) = self.state.trades.get(id) {
                if t.status == TradeStatus::Settled && t.buyer == Some(*reviewer) {
                    return Some((t.seller, t.escrow_amount));
                }
            }
        }
        self.state
            .redeemed
            .values()
            .find(|r| r.token.trade == *trade && r.token.buyer == *reviewer)
            .map(|r| (r.token.seller, r.token.amount))
    }

    pub fn submit_review(
        &mut self,
        trade: TradeRef,
        reviewer: PublicIdentity,
        rating: u8,
        comment: &str,
    ) -> Result<(), MarketError> {
        if !(1..=5).contains(&rating) {
            return Err(MarketError::BadRating(rating));
        }
        let (seller, amount) = self
            .review_basis(&trade, &reviewer)
            .ok_or_else(|| MarketError::NotEligible(format!("no settled trade or redeemed token for {trade}")))?;
        if self.state.reviews.iter().any(|r| r.trade == trade && r.buyer == reviewer) {
            return Err(MarketError::DuplicateReview);
        }
        let review = Review {
            trade,
            seller,
            buyer: reviewer,
            rating,
            comment: comment.to_string(),
            amount,
            at: self.now(),
        };
        self.commit(vec![PlatformEvent::Reviewed(review)])
    }

    pub fn reputation(&self, seller: &PublicIdentity) -> ReputationScore {
        reputation(
            &self.state.reviews,
            &self.state.registry,
            seller,
            self.now(),
            &self.config.reputation,
        )
    }

    // bulletin

    pub fn record_anchor(&mut self, anchor: SignedAnchor) -> Result<u64, MarketError> {
        if !anchor.verify() {
            return Err(MarketError::Anchor("signature does not verify".into()));
        }
        let c = &anchor.commitment;
        if let Some(prev) = self.state.anchors.iter().rev().find(|e| e.anchor.commitment.agent == c.agent) {
            if c.wallclock < prev.anchor.commitment.wallclock {
                return Err(MarketError::Anchor(format!(
                    "wallclock {} precedes previous anchor at {}",
                    c.wallclock, prev.anchor.commitment.wallclock
                )));
            }
        }
        let position = self.state.anchors.len() as u64;
        let entry = AnchorEntry::countersign(&self.key, position, anchor, self.now());
        self.commit(vec![PlatformEvent::AnchorRecorded(entry)])?;
        Ok(position)
    }

    pub fn anchors(&self, agent: Option<&PublicIdentity>) -> Vec<(AnchorEntry, AnchorClass)> {
        self.state
            .anchors
            .iter()
            .filter(|e| agent.is_none_or(|a| e.anchor.commitment.agent == *a))
            .map(|e| (e.clone(), classify(e, &self.state.registry)))
            .collect()
    }
}

fn journal_err(e: JournalError) -> MarketError {
    MarketError::Journal(e.to_string())
}

/// Statistics over the opened token and timestamp fields of an advertisement.
pub fn token_stats(a: &MemoryArtifact) -> TokenStats {
    let mut s = TokenStats {
        interactions: a.claimed_root.length,
        disclosed: a.selection.len() as u64,
        token_in: 0,
        token_out: 0,
        first_timestamp: None,
        last_timestamp: None,
        covers_all: a.selection.len() as u64 == a.claimed_root.length,
    };
    for d in &a.opened {
        match (d.opened(Field::TokenIn), d.opened(Field::TokenOut)) {
            (Some(FieldValue::Uint(i)), Some(FieldValue::Uint(o))) => {
                s.token_in += i;
                s.token_out += o;
            }
            _ => s.covers_all = false,
        }
        if let Some(FieldValue::Uint(t)) = d.opened(Field::Timestamp) {
            s.first_timestamp = Some(s.first_timestamp.map_or(*t, |f| f.min(*t)));
            s.last_timestamp = Some(s.last_timestamp.map_or(*t, |l| l.max(*t)));
        }
    }
    s
}
