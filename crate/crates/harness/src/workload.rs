//! Randomized market traffic: valid and invalid operations mixed, with an
//! independent running total of accepted deposits to check conservation.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use certmem_core::canon::{Digest, KeyPair, PublicIdentity};
use certmem_core::enclave::{PurchaseToken, ResalePolicy, TradeRef};
use certmem_core::ledger::{ArtifactBundle, DisclosurePolicy, Field, FieldRule, Visibility};
use certmem_core::market::{ListingKind, ListingRequest, Resolution, TradeStatus, DAY_MS};

use crate::mock::Rule;
use crate::world::{template, Member, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum OpKind {
    OpenAccount,
    Deposit,
    Post,
    PostRequest,
    Cancel,
    Lock,
    Deliver,
    Receipt,
    ForgedReceipt,
    Dispute,
    Resolve,
    Expire,
    Redeem,
    Review,
    Anchor,
    Advance,
}

const WEIGHTS: [(OpKind, u32); 16] = [
    (OpKind::OpenAccount, 2),
    (OpKind::Deposit, 10),
    (OpKind::Post, 12),
    (OpKind::PostRequest, 2),
    (OpKind::Cancel, 4),
    (OpKind::Lock, 14),
    (OpKind::Deliver, 8),
    (OpKind::Receipt, 10),
    (OpKind::ForgedReceipt, 4),
    (OpKind::Dispute, 5),
    (OpKind::Resolve, 5),
    (OpKind::Expire, 4),
    (OpKind::Redeem, 4),
    (OpKind::Review, 6),
    (OpKind::Anchor, 3),
    (OpKind::Advance, 2),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OpOutcome {
    pub kind: OpKind,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct OpStats {
    /// (accepted, rejected) per kind.
    pub per_kind: BTreeMap<OpKind, (u64, u64)>,
}

impl OpStats {
    fn record(&mut self, o: OpOutcome) {
        let e = self.per_kind.entry(o.kind).or_default();
        if o.accepted {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.per_kind.values().map(|(a, r)| a + r).sum()
    }

    pub fn accepted(&self) -> u64 {
        self.per_kind.values().map(|(a, _)| a).sum()
    }
}

pub struct Workload {
    pub world: World,
    pub sellers: Vec<Member>,
    pub accounts: Vec<KeyPair>,
    containers: BTreeMap<u64, Vec<u8>>,
    tokens: Vec<PurchaseToken>,
    deposited: u128,
    pub stats: OpStats,
}

const SELLERS: usize = 3;
const BUYERS: usize = 6;
const MAX_ACCOUNTS: usize = 16;
const MAX_LOG: u64 = 12;

impl Workload {
    pub fn new(seed: u64) -> Result<Self> {
        Self::setup(World::new(seed, Rule::Echo))
    }

    pub fn journaled(seed: u64, path: &Path) -> Result<Self> {
        let (w, _) = World::journaled(seed, Rule::Echo, path)?;
        Self::setup(w)
    }

    fn setup(mut world: World) -> Result<Self> {
        let image = certmem_core::canon::digest(certmem_core::canon::DomainTag::Cert, b"workload image");
        let t = template(
            &world.provider,
            "randomized market traffic",
            image,
            FieldRule::open_all().with(Field::Response, Visibility::Hide),
            ResalePolicy::Forbidden,
            1,
        );
        let gang = world.platform.create_gang(t)?;
        let mut sellers = Vec::new();
        for i in 0..SELLERS {
            let owner = world.owner_seed();
            let mut m = world.join(&gang, &format!("seller{i}"), owner, 1)?;
            world.call(&mut m, format!("warm-up {i}").as_bytes())?;
            sellers.push(m);
        }
        let mut wl = Workload {
            world,
            sellers,
            accounts: Vec::new(),
            containers: BTreeMap::new(),
            tokens: Vec::new(),
            deposited: 0,
            stats: OpStats::default(),
        };
        for _ in 0..BUYERS {
            let k = wl.world.buyer();
            wl.world.platform.open_account(k.public())?;
            wl.world.platform.deposit(k.public(), 200)?;
            wl.deposited += 200;
            wl.accounts.push(k);
        }
        Ok(wl)
    }

    /// Sum of every deposit the platform accepted, tracked outside it.
    pub fn expected_total(&self) -> u128 {
        self.deposited
    }

    /// Balances plus escrow against the independent deposit total.
    pub fn check_conservation(&self) -> Result<(), String> {
        let c = &self.world.platform.state().credits;
        let held = c.total_balances() + c.total_escrow();
        if held != self.deposited {
            return Err(format!("balances+escrow {held} != deposits {}", self.deposited));
        }
        if c.deposited() as u128 != self.deposited {
            return Err(format!("platform deposit total {} != {}", c.deposited(), self.deposited));
        }
        Ok(())
    }

    pub fn run(&mut self, ops: usize) -> Result<()> {
        for _ in 0..ops {
            self.step()?;
        }
        Ok(())
    }

    fn pick_kind(&mut self) -> OpKind {
        let total: u32 = WEIGHTS.iter().map(|(_, w)| w).sum();
        let mut x = self.world.rng.gen_range(0..total);
        for (k, w) in WEIGHTS {
            if x < w {
                return k;
            }
            x -= w;
        }
        unreachable!()
    }

    fn any_identity(&mut self) -> PublicIdentity {
        let n = self.accounts.len() + self.sellers.len() + 1;
        let i = self.world.rng.gen_range(0..n);
        if i < self.accounts.len() {
            self.accounts[i].public()
        } else if i < n - 1 {
            self.sellers[i - self.accounts.len()].id()
        } else {
            PublicIdentity([0xee; 32])
        }
    }

    fn any_trade(&mut self) -> Option<u64> {
        let n = self.world.platform.state().next_listing;
        (n > 0).then(|| self.world.rng.gen_range(0..n))
    }

    fn seller_index(&self, id: &PublicIdentity) -> Option<usize> {
        self.sellers.iter().position(|m| m.id() == *id)
    }

    /// Applies one random operation. Rejections are normal outcomes; an
    /// `Err` means the harness itself broke.
    pub fn step(&mut self) -> Result<OpOutcome> {
        let kind = self.pick_kind();
        let accepted = self.apply(kind)?;
        let o = OpOutcome { kind, accepted };
        self.stats.record(o);
        Ok(o)
    }

    fn apply(&mut self, kind: OpKind) -> Result<bool> {
        let ok = match kind {
            OpKind::OpenAccount => {
                if self.accounts.len() < MAX_ACCOUNTS && self.world.rng.gen_bool(0.7) {
                    let k = self.world.buyer();
                    let r = self.world.platform.open_account(k.public()).is_ok();
                    self.accounts.push(k);
                    r
                } else {
                    let who = self.any_identity();
                    self.world.platform.open_account(who).is_ok()
                }
            }
            OpKind::Deposit => {
                let who = self.any_identity();
                let amount = match self.world.rng.gen_range(0..20) {
                    0 => 0,
                    1 => u64::MAX - self.world.rng.gen_range(0..4),
                    _ => self.world.rng.gen_range(1..80),
                };
                match self.world.platform.deposit(who, amount) {
                    Ok(_) => {
                        self.deposited += amount as u128;
                        true
                    }
                    Err(_) => false,
                }
            }
            OpKind::Post => self.post()?,
            OpKind::PostRequest => {
                let poster = self.any_identity();
                let price = self.world.rng.gen_range(0..40);
                self.world
                    .platform
                    .post_listing(ListingRequest {
                        kind: ListingKind::Request,
                        poster,
                        seller_cert: None,
                        price,
                        advertisement: None,
                        resale_policy: ResalePolicy::Forbidden,
                        seller_endpoint: String::new(),
                        encrypted_artifact_hash: None,
                    })
                    .is_ok()
            }
            OpKind::Cancel => match self.any_trade() {
                Some(t) => {
                    let by = match self.world.platform.state().listing(t) {
                        Ok(l) if self.world.rng.gen_bool(0.8) => l.poster,
                        _ => self.any_identity(),
                    };
                    self.world.platform.cancel_listing(t, &by).is_ok()
                }
                None => false,
            },
            OpKind::Lock => match self.any_trade() {
                Some(t) => {
                    let buyer = self.accounts.choose(&mut self.world.rng).map(|k| k.public()).context("no accounts")?;
                    let price = self.world.platform.state().listing(t).map(|l| l.price).unwrap_or(1);
                    let amount = if self.world.rng.gen_bool(0.9) { price } else { price + 1 };
                    let key = self.world.rng.gen_bool(0.3).then(|| format!("k{}", self.world.rng.gen_range(0..64)));
                    self.world.platform.lock_funds(t, buyer, amount, key).is_ok()
                }
                None => false,
            },
            OpKind::Deliver => match self.any_trade() {
                Some(t) => {
                    let by = match self.world.platform.state().trade(t) {
                        Ok(tr) if self.world.rng.gen_bool(0.85) => tr.seller,
                        _ => self.any_identity(),
                    };
                    self.world.platform.mark_delivered(t, &by).is_ok()
                }
                None => false,
            },
            OpKind::Receipt => self.receipt(false)?,
            OpKind::ForgedReceipt => self.receipt(true)?,
            OpKind::Dispute => match self.any_trade() {
                Some(t) => {
                    let party = match self.world.platform.state().trade(t) {
                        Ok(tr) if self.world.rng.gen_bool(0.8) => {
                            if self.world.rng.gen_bool(0.5) {
                                tr.buyer.unwrap_or(tr.seller)
                            } else {
                                tr.seller
                            }
                        }
                        _ => self.any_identity(),
                    };
                    self.world.platform.dispute(t, &party).is_ok()
                }
                None => false,
            },
            OpKind::Resolve => match self.any_trade() {
                Some(t) => {
                    let outcome = if self.world.rng.gen_bool(0.5) {
                        Resolution::Settled
                    } else {
                        Resolution::Refunded
                    };
                    let signed_for = if self.world.rng.gen_bool(0.85) {
                        outcome
                    } else {
                        match outcome {
                            Resolution::Settled => Resolution::Refunded,
                            Resolution::Refunded => Resolution::Settled,
                        }
                    };
                    let sig = self.world.platform.arbiter_sign(t, signed_for);
                    self.world.platform.resolve(t, outcome, sig).is_ok()
                }
                None => false,
            },
            OpKind::Expire => match self.any_trade() {
                Some(t) => self.world.platform.expire(t).is_ok(),
                None => false,
            },
            OpKind::Redeem => match self.tokens.choose(&mut self.world.rng).cloned() {
                Some(tok) => self.world.platform.redeem_token(tok).is_ok(),
                None => false,
            },
            OpKind::Review => match self.any_trade() {
                Some(t) => {
                    let reviewer = match self.world.platform.state().trade(t) {
                        Ok(tr) if self.world.rng.gen_bool(0.8) => tr.buyer.unwrap_or(tr.seller),
                        _ => self.any_identity(),
                    };
                    let rating = self.world.rng.gen_range(0..=6);
                    self.world
                        .platform
                        .submit_review(TradeRef::Platform(t), reviewer, rating, "auto")
                        .is_ok()
                }
                None => false,
            },
            OpKind::Anchor => {
                let i = self.world.rng.gen_range(0..self.sellers.len());
                let len = self.sellers[i].enclave.log().len();
                let at = self.world.rng.gen_range(0..=len + 1);
                match self.sellers[i].enclave.sign_anchor(at, self.world.clock.peek()) {
                    Ok(a) => self.world.platform.record_anchor(a).is_ok(),
                    Err(_) => false,
                }
            }
            OpKind::Advance => {
                self.world.clock.advance(DAY_MS / 3);
                true
            }
        };
        Ok(ok)
    }

    fn post(&mut self) -> Result<bool> {
        let i = self.world.rng.gen_range(0..self.sellers.len());
        if self.sellers[i].enclave.log().len() < MAX_LOG {
            let n = self.world.rng.gen::<u32>();
            self.world.call(&mut self.sellers[i], format!("task {n}").as_bytes())?;
        }
        let m = &self.sellers[i];
        let len = m.enclave.log().len();
        let start = len.saturating_sub(3);
        let sel: Vec<u64> = (start..len).collect();
        let ad_policy = DisclosurePolicy::uniform(FieldRule::open_all().with(Field::Response, Visibility::Hide));
        let ad = m.enclave.build_bundle(len, &sel[..1], &ad_policy, None)?;
        let full = m.enclave.build_bundle(len, &sel, &ad_policy, None)?;
        let container = full.to_container()?;
        let price = if self.world.rng.gen_bool(0.95) {
            self.world.rng.gen_range(1..60)
        } else {
            0
        };
        let hash: Digest = if self.world.rng.gen_bool(0.95) {
            ArtifactBundle::hash_container(&container)
        } else {
            Digest([0; 32])
        };
        let r = self.world.platform.post_listing(ListingRequest {
            kind: ListingKind::Offer,
            poster: m.id(),
            seller_cert: Some(m.cert.clone()),
            price,
            advertisement: Some((ad.artifact, ad.proof)),
            resale_policy: ResalePolicy::Forbidden,
            seller_endpoint: format!("peer://{}", m.name),
            encrypted_artifact_hash: Some(hash),
        });
        match r {
            Ok(id) => {
                self.containers.insert(id, container);
                Ok(true)
            }
            Err(_) => Ok(false),
        }
    }

    fn receipt(&mut self, forged: bool) -> Result<bool> {
        let Some(t) = self.any_trade() else {
            return Ok(false);
        };
        let (Some(container), Ok(trade)) = (self.containers.get(&t).cloned(), self.world.platform.state().trade(t)) else {
            return Ok(false);
        };
        let trade = trade.clone();
        let Some(si) = self.seller_index(&trade.seller) else {
            return Ok(false);
        };
        let mut buyer = trade.buyer.unwrap_or_else(|| self.accounts[0].public());
        let mut signer = si;
        if forged {
            if self.world.rng.gen_bool(0.5) {
                buyer = self.any_identity();
            } else {
                signer = (si + 1) % self.sellers.len();
            }
        }
        let Ok(receipt) = self.sellers[signer]
            .enclave
            .issue_receipt(TradeRef::Platform(t), buyer, &container)
        else {
            return Ok(false);
        };
        let token = self.sellers[signer]
            .enclave
            .issue_purchase_token(TradeRef::Platform(t), trade.escrow_amount.max(1))?;
        let with_token = self.world.rng.gen_bool(0.8);
        let r = self
            .world
            .platform
            .submit_receipt(t, receipt, with_token.then(|| token.clone()));
        if with_token {
            self.tokens.push(token);
        }
        Ok(matches!(r, Ok(TradeStatus::Settled)))
    }
}
