use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::canon::{Blob, Digest, KeyPair, Nonce, PublicIdentity, Signature};
use crate::clock::ManualClock;
use crate::enclave::{
    BootParams, Completion, CompletionRequest, Enclave, ModelProvider, ProviderConfig, ProviderError, ProviderHello,
    ProviderPublic, ResalePolicy, TradeRef,
};
use crate::gang::{GangTemplate, LoggingPolicy, MembershipCertificate, TradePolicy};
use crate::ledger::{ArtifactBundle, DisclosurePolicy, Field, FieldDisclosure, FieldRule, FieldValue, Visibility};

struct Reverse {
    key: KeyPair,
}

impl Reverse {
    fn public() -> ProviderPublic {
        ProviderPublic {
            endpoint: "mock://rev".into(),
            provider_public: KeyPair::from_seed([77; 32]).public(),
            model_name: "rev-1".into(),
        }
    }
}

impl ModelProvider for Reverse {
    fn hello(&mut self, nonce: &Nonce) -> Result<ProviderHello, ProviderError> {
        Ok(ProviderHello::sign(&self.key, "mock://rev", "rev-1", *nonce))
    }

    fn complete(&mut self, r: &CompletionRequest) -> Result<Completion, ProviderError> {
        let response: Vec<u8> = r.prompt.as_slice().iter().rev().copied().collect();
        Ok(Completion {
            token_in: r.prompt.as_slice().len() as u64,
            token_out: response.len() as u64,
            response: Blob(response),
        })
    }
}

fn template() -> GangTemplate {
    GangTemplate {
        task_description: "reverse strings".into(),
        image_template_hash: Digest([3; 32]),
        model_provider: Reverse::public(),
        logging_policy: LoggingPolicy::default(),
        trade_policy: TradePolicy::default(),
        code_reference: "gangs/reverse".into(),
        min_security_version: 2,
    }
}

struct Agent {
    enclave: Enclave,
    cert: MembershipCertificate,
    owner_seed: [u8; 32],
}

impl Agent {
    fn id(&self) -> PublicIdentity {
        self.enclave.agent_public()
    }
}

struct World {
    p: Platform,
    clock: ManualClock,
    gang: Digest,
    rng: ChaCha20Rng,
    provider: Reverse,
}

fn id(n: u8) -> PublicIdentity {
    KeyPair::from_seed([n; 32]).public()
}

impl World {
    fn new() -> Self {
        let clock = ManualClock::new(1_000_000, 1);
        let mut p = Platform::new(
            KeyPair::from_seed([90; 32]),
            Arc::new(clock.clone()),
            [91; 32],
            PlatformConfig::default(),
        );
        let gang = p.create_gang(template()).unwrap();
        World {
            p,
            clock,
            gang,
            rng: ChaCha20Rng::seed_from_u64(5),
            provider: Reverse {
                key: KeyPair::from_seed([77; 32]),
            },
        }
    }

    fn join(&mut self, owner: u8, version: u64) -> Agent {
        let r = self.p.reserve_slot(&self.gang).unwrap();
        let t = template();
        let owner_seed = [owner; 32];
        let enclave = Enclave::boot(
            BootParams {
                image_template_hash: t.image_template_hash,
                task_description_hash: t.task_hash(),
                slot_id: r.slot_id,
                owner_seed,
                security_version: version,
                provider: ProviderConfig {
                    public: t.model_provider.clone(),
                    credential: Blob::from("sk-test"),
                },
                resale_policy: ResalePolicy::Forbidden,
            },
            &mut self.rng,
            Arc::new(self.clock.clone()),
        );
        let cert = self.p.register_member(&self.gang, &enclave.attest(r.nonce), &r.nonce).unwrap();
        Agent {
            enclave,
            cert,
            owner_seed,
        }
    }

    fn work(&mut self, a: &mut Agent, n: usize) {
        for i in 0..n {
            a.enclave
                .proxy_call(&mut self.provider, format!("prompt {i} {}", self.rng.gen::<u32>()).as_bytes())
                .unwrap();
        }
    }

    fn funded(&mut self, who: PublicIdentity, amount: u64) {
        self.p.open_account(who).unwrap();
        self.p.deposit(who, amount).unwrap();
    }

    /// Posts the whole log, prompts open and responses hidden in the ad.
    fn list(&mut self, a: &Agent, price: u64) -> (u64, Vec<u8>) {
        let len = a.enclave.log().len();
        let ad_policy = DisclosurePolicy::uniform(FieldRule::open_all().with(Field::Response, Visibility::Hide));
        let ad = a.enclave.build_bundle(len, &[0], &ad_policy, None).unwrap();
        let all: Vec<u64> = (0..len).collect();
        let full = a.enclave.build_bundle(len, &all, &DisclosurePolicy::open_all(), None).unwrap();
        let container = full.to_container().unwrap();
        let listing = self
            .p
            .post_listing(ListingRequest {
                kind: ListingKind::Offer,
                poster: a.id(),
                seller_cert: Some(a.cert.clone()),
                price,
                advertisement: Some((ad.artifact, ad.proof)),
                resale_policy: ResalePolicy::Forbidden,
                seller_endpoint: "peer://seller".into(),
                encrypted_artifact_hash: Some(ArtifactBundle::hash_container(&container)),
            })
            .unwrap();
        (listing, container)
    }
}

fn settle(w: &mut World, seller: &mut Agent, buyer: PublicIdentity, price: u64) -> u64 {
    let (listing, container) = w.list(seller, price);
    let trade = w.p.lock_funds(listing, buyer, price, None).unwrap();
    let receipt = seller.enclave.issue_receipt(TradeRef::Platform(trade), buyer, &container).unwrap();
    let token = seller.enclave.issue_purchase_token(TradeRef::Platform(trade), price).unwrap();
    assert_eq!(w.p.submit_receipt(trade, receipt, Some(token)), Ok(TradeStatus::Settled));
    trade
}

#[test]
fn honest_flow_pays_seller_and_scores() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 5);
    let buyer = id(50);
    w.funded(buyer, 100);
    let (listing, container) = w.list(&s, 30);
    assert!(w.p.listings().any(|l| l.listing_id == listing));
    let trade = w.p.lock_funds(listing, buyer, 30, None).unwrap();
    assert_eq!(w.p.balance_of(&buyer), Some(70));
    assert_eq!(w.p.state().credits.escrow_of(trade), 30);
    w.p.mark_delivered(trade, &s.id()).unwrap();
    let receipt = s.enclave.issue_receipt(TradeRef::Platform(trade), buyer, &container).unwrap();
    let token = s.enclave.issue_purchase_token(TradeRef::Platform(trade), 30).unwrap();
    assert_eq!(w.p.submit_receipt(trade, receipt, Some(token.clone())), Ok(TradeStatus::Settled));
    assert_eq!(w.p.balance_of(&s.id()), Some(30));
    assert_eq!(w.p.state().credits.escrow_of(trade), 0);
    w.p.redeem_token(token).unwrap();
    w.p.submit_review(TradeRef::Platform(trade), buyer, 5, "clean").unwrap();
    assert_eq!(w.p.reputation(&s.id()).score, Some(1.0));
    w.p.state().check_invariants().unwrap();
}

#[test]
fn listing_stats_come_from_opened_fields() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 3);
    let (listing, _) = w.list(&s, 10);
    let m = w.p.state().listing(listing).unwrap().metadata.clone().unwrap();
    let r0 = &s.enclave.log().records()[0];
    assert_eq!(m.stats.interactions, 3);
    assert_eq!(m.stats.disclosed, 1);
    assert_eq!((m.stats.token_in, m.stats.token_out), (r0.token_in, r0.token_out));
    assert_eq!(m.stats.first_timestamp, Some(r0.timestamp));
    assert!(!m.stats.covers_all);
}

#[test]
fn receipt_for_another_buyer_is_rejected_and_funds_stay() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 2);
    let (b, c) = (id(50), id(51));
    w.funded(b, 100);
    let (listing, container) = w.list(&s, 30);
    let trade = w.p.lock_funds(listing, b, 30, None).unwrap();
    let wrong = s.enclave.issue_receipt(TradeRef::Platform(trade), c, &container).unwrap();
    let before = w.p.state().clone();
    assert!(matches!(w.p.submit_receipt(trade, wrong, None), Err(MarketError::Receipt(_))));
    assert_eq!(w.p.state(), &before);
    assert_eq!(w.p.state().trade(trade).unwrap().status, TradeStatus::Locked);
}

#[test]
fn receipt_from_another_agent_is_rejected() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    let mut other = w.join(2, 2);
    w.work(&mut s, 2);
    w.work(&mut other, 2);
    let b = id(50);
    w.funded(b, 100);
    let (listing, _) = w.list(&s, 30);
    let (_, other_container) = w.list(&other, 30);
    let trade = w.p.lock_funds(listing, b, 30, None).unwrap();
    let forged = other.enclave.issue_receipt(TradeRef::Platform(trade), b, &other_container).unwrap();
    assert!(matches!(w.p.submit_receipt(trade, forged, None), Err(MarketError::Receipt(_))));
}

#[test]
fn settled_receipt_replay_is_a_no_op() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 2);
    let b = id(50);
    w.funded(b, 100);
    let trade = settle(&mut w, &mut s, b, 30);
    let receipt = w.p.state().trade(trade).unwrap().receipt.clone().unwrap();
    let before = w.p.state().clone();
    for _ in 0..3 {
        assert_eq!(w.p.submit_receipt(trade, receipt.clone(), None), Ok(TradeStatus::Settled));
    }
    assert_eq!(w.p.state(), &before);
    assert_eq!(w.p.balance_of(&s.id()), Some(30));
}

#[test]
fn superseded_certificate_cannot_list() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 2);
    let nonce = w.p.open_reregistration(&s.cert).unwrap();
    let t = template();
    let newer = Enclave::boot(
        BootParams {
            image_template_hash: t.image_template_hash,
            task_description_hash: t.task_hash(),
            slot_id: s.cert.slot_id,
            owner_seed: s.owner_seed,
            security_version: 3,
            provider: ProviderConfig {
                public: t.model_provider.clone(),
                credential: Blob::from("sk-test"),
            },
            resale_policy: ResalePolicy::Forbidden,
        },
        &mut w.rng,
        Arc::new(w.clock.clone()),
    );
    w.p.reregister(&s.cert, &newer.attest(nonce), &nonce).unwrap();
    let ad = s.enclave.build_bundle(2, &[], &DisclosurePolicy::open_all(), None).unwrap();
    let r = w.p.post_listing(ListingRequest {
        kind: ListingKind::Offer,
        poster: s.id(),
        seller_cert: Some(s.cert.clone()),
        price: 5,
        advertisement: Some((ad.artifact, ad.proof)),
        resale_policy: ResalePolicy::Forbidden,
        seller_endpoint: String::new(),
        encrypted_artifact_hash: Some(Digest([1; 32])),
    });
    assert!(matches!(r, Err(MarketError::InvalidCertificate(_))));
}

#[test]
fn tampered_advertisements_are_rejected() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 4);
    let ad = s.enclave.build_bundle(4, &[1, 3], &DisclosurePolicy::open_all(), None).unwrap();
    let post = |p: &mut Platform, a: crate::ledger::MemoryArtifact| {
        p.post_listing(ListingRequest {
            kind: ListingKind::Offer,
            poster: s.id(),
            seller_cert: Some(s.cert.clone()),
            price: 5,
            advertisement: Some((a, ad.proof.clone())),
            resale_policy: ResalePolicy::Forbidden,
            seller_endpoint: String::new(),
            encrypted_artifact_hash: Some(Digest([1; 32])),
        })
    };
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for _ in 0..50 {
        let mut a = ad.artifact.clone();
        let i = rng.gen_range(0..2);
        let f = rng.gen_range(0..6);
        match &mut a.opened[i].fields[f] {
            FieldDisclosure::Opened { value, .. } => match value {
                FieldValue::Bytes(b) => b.0.push(b'!'),
                FieldValue::Text(t) => t.push('!'),
                FieldValue::Uint(n) => *n ^= 1,
            },
            FieldDisclosure::Hidden { commitment } => commitment.0[0] ^= 1,
        }
        assert!(matches!(post(&mut w.p, a), Err(MarketError::Advertisement(_))));
    }
    let mut a = ad.artifact.clone();
    a.claimed_root.root.0[5] ^= 4;
    assert!(matches!(post(&mut w.p, a), Err(MarketError::Advertisement(_))));
    assert!(post(&mut w.p, ad.artifact.clone()).is_ok());
}

#[test]
fn lock_errors_leave_state_unchanged() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 1);
    let b = id(50);
    w.funded(b, 20);
    let (listing, _) = w.list(&s, 30);
    let before = w.p.state().clone();
    assert!(matches!(
        w.p.lock_funds(listing, b, 30, None),
        Err(MarketError::Credit(CreditError::InsufficientFunds { needed: 30, available: 20 }))
    ));
    assert!(matches!(w.p.lock_funds(listing, b, 20, None), Err(MarketError::PriceMismatch { .. })));
    assert!(matches!(w.p.lock_funds(99, b, 20, None), Err(MarketError::UnknownListing(99))));
    assert_eq!(w.p.state(), &before);
}

#[test]
fn lock_retry_with_key_is_idempotent() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 1);
    let (b, c) = (id(50), id(51));
    w.funded(b, 100);
    w.funded(c, 100);
    let (listing, _) = w.list(&s, 30);
    let t1 = w.p.lock_funds(listing, b, 30, Some("k1".into())).unwrap();
    let t2 = w.p.lock_funds(listing, b, 30, Some("k1".into())).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(w.p.balance_of(&b), Some(70));
    assert!(matches!(w.p.lock_funds(listing, b, 30, None), Err(MarketError::AlreadyLocked(_))));
    assert!(matches!(w.p.lock_funds(listing, c, 30, Some("k1".into())), Err(MarketError::IdempotencyConflict(_))));
    assert!(matches!(w.p.lock_funds(listing, c, 30, Some("k2".into())), Err(MarketError::AlreadyLocked(_))));
}

#[test]
fn concurrent_locks_yield_exactly_one_trade() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 1);
    let buyers: Vec<PublicIdentity> = (0..8).map(|i| id(60 + i)).collect();
    for b in &buyers {
        w.funded(*b, 50);
    }
    let (listing, _) = w.list(&s, 30);
    let p = Arc::new(Mutex::new(w.p));
    let handles: Vec<_> = buyers
        .iter()
        .map(|b| {
            let p = p.clone();
            let b = *b;
            std::thread::spawn(move || p.lock().unwrap().lock_funds(listing, b, 30, None).is_ok())
        })
        .collect();
    let wins = handles.into_iter().map(|h| h.join().unwrap()).filter(|ok| *ok).count();
    assert_eq!(wins, 1);
    let p = p.lock().unwrap();
    assert_eq!(p.state().credits.total_escrow(), 30);
    p.state().check_invariants().unwrap();
}

#[test]
fn disputes_resolve_exactly_once() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 1);
    let b = id(50);
    w.funded(b, 100);
    let (l1, _) = w.list(&s, 30);
    let (l2, _) = w.list(&s, 40);
    let t1 = w.p.lock_funds(l1, b, 30, None).unwrap();
    let t2 = w.p.lock_funds(l2, b, 40, None).unwrap();
    assert_eq!(w.p.balance_of(&b), Some(30));

    let sig = w.p.arbiter_sign(t1, Resolution::Refunded);
    assert!(matches!(w.p.resolve(t1, Resolution::Refunded, sig), Err(MarketError::IllegalTransition { .. })));
    assert_eq!(w.p.dispute(t1, &id(99)), Err(MarketError::NotAParty));
    w.p.dispute(t1, &b).unwrap();
    w.p.dispute(t2, &s.id()).unwrap();
    let forged = crate::canon::sign(&KeyPair::from_seed([1; 32]), crate::canon::DomainTag::Arbiter, &arbiter_body(t1, Resolution::Settled));
    assert_eq!(w.p.resolve(t1, Resolution::Settled, forged), Err(MarketError::NotArbiter));
    let wrong_outcome = w.p.arbiter_sign(t1, Resolution::Settled);
    assert_eq!(w.p.resolve(t1, Resolution::Refunded, wrong_outcome), Err(MarketError::NotArbiter));

    w.p.resolve(t1, Resolution::Refunded, sig).unwrap();
    assert_eq!(w.p.balance_of(&b), Some(60));
    assert!(w.p.resolve(t1, Resolution::Refunded, sig).is_err());
    let sig2 = w.p.arbiter_sign(t2, Resolution::Settled);
    w.p.resolve(t2, Resolution::Settled, sig2).unwrap();
    assert_eq!(w.p.balance_of(&s.id()), Some(40));
    assert_eq!(w.p.balance_of(&b), Some(60));
    w.p.state().check_invariants().unwrap();
}

#[test]
fn timeout_refunds_only_after_deadline() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 1);
    let b = id(50);
    w.funded(b, 100);
    let (l, _) = w.list(&s, 30);
    let t = w.p.lock_funds(l, b, 30, None).unwrap();
    assert!(matches!(w.p.expire(t), Err(MarketError::NotExpired { .. })));
    w.clock.advance(DAY_MS + 1);
    w.p.expire(t).unwrap();
    assert_eq!(w.p.balance_of(&b), Some(100));
    assert_eq!(w.p.state().trade(t).unwrap().status, TradeStatus::Refunded);
}

#[test]
fn cancel_only_posted_and_only_by_poster() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 1);
    let b = id(50);
    w.funded(b, 100);
    let (l, _) = w.list(&s, 30);
    assert_eq!(w.p.cancel_listing(l, &b), Err(MarketError::NotAParty));
    w.p.cancel_listing(l, &s.id()).unwrap();
    assert!(matches!(w.p.lock_funds(l, b, 30, None), Err(MarketError::IllegalTransition { .. })));
}

#[test]
fn requests_share_the_listing_shape() {
    let mut w = World::new();
    let b = id(50);
    let l = w
        .p
        .post_listing(ListingRequest {
            kind: ListingKind::Request,
            poster: b,
            seller_cert: None,
            price: 25,
            advertisement: None,
            resale_policy: ResalePolicy::Forbidden,
            seller_endpoint: "peer://buyer".into(),
            encrypted_artifact_hash: None,
        })
        .unwrap();
    let listing = w.p.state().listing(l).unwrap();
    assert_eq!(listing.price, 25);
    assert!(listing.metadata.is_none());
    w.funded(b, 100);
    assert!(matches!(w.p.lock_funds(l, b, 25, None), Err(MarketError::InvalidListing(_))));
}

#[test]
fn tokens_redeem_once_and_gate_reviews() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 1);
    let (b, c) = (id(50), id(51));
    w.funded(b, 100);
    w.funded(c, 100);
    let trade = settle(&mut w, &mut s, b, 30);
    let token = w.p.state().trade(trade).unwrap().token.clone().unwrap();
    assert!(matches!(
        w.p.submit_review(TradeRef::Platform(trade), c, 4, ""),
        Err(MarketError::NotEligible(_))
    ));
    w.p.redeem_token(token.clone()).unwrap();
    assert_eq!(w.p.redeem_token(token), Err(MarketError::AlreadyRedeemed));
    assert_eq!(w.p.submit_review(TradeRef::Platform(trade), b, 0, ""), Err(MarketError::BadRating(0)));
    w.p.submit_review(TradeRef::Platform(trade), b, 4, "ok").unwrap();
    assert_eq!(w.p.submit_review(TradeRef::Platform(trade), b, 4, "again"), Err(MarketError::DuplicateReview));
}

#[test]
fn off_platform_token_grants_review() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 2);
    let b = id(50);
    let ext = TradeRef::External(Digest([0xee; 32]));
    let container = s.enclave.build_bundle(2, &[0, 1], &DisclosurePolicy::open_all(), None).unwrap().to_container().unwrap();
    s.enclave.issue_receipt(ext, b, &container).unwrap();
    let token = s.enclave.issue_purchase_token(ext, 40).unwrap();
    assert!(matches!(w.p.submit_review(ext, b, 5, ""), Err(MarketError::NotEligible(_))));
    w.p.redeem_token(token).unwrap();
    w.p.submit_review(ext, b, 5, "great").unwrap();
    let r = w.p.reputation(&s.id());
    assert_eq!((r.score, r.contributing), (Some(1.0), 1));

    let mut bad = s.enclave.issue_purchase_token(ext, 40).unwrap();
    bad.amount = 41;
    assert!(matches!(w.p.redeem_token(bad), Err(MarketError::Token(_))));
}

#[test]
fn same_owner_reviews_are_excluded() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    let sibling = w.join(1, 2);
    w.work(&mut s, 1);
    w.funded(sibling.id(), 100);
    let trade = settle(&mut w, &mut s, sibling.id(), 30);
    w.p.submit_review(TradeRef::Platform(trade), sibling.id(), 5, "").unwrap();
    let r = w.p.reputation(&s.id());
    assert_eq!(r.score, None);
    assert_eq!(r.excluded, 1);
}

#[test]
fn anchors_are_monotone_and_classified() {
    let mut w = World::new();
    let mut a = w.join(1, 2);
    w.work(&mut a, 3);
    let first = a.enclave.sign_anchor(1, 5_000).unwrap();
    assert_eq!(w.p.record_anchor(first), Ok(0));
    let back = a.enclave.sign_anchor(2, 4_999).unwrap();
    assert!(matches!(w.p.record_anchor(back), Err(MarketError::Anchor(_))));
    let mut forged = a.enclave.sign_anchor(2, 6_000).unwrap();
    forged.commitment.root.length = 3;
    assert!(matches!(w.p.record_anchor(forged), Err(MarketError::Anchor(_))));
    assert_eq!(w.p.record_anchor(a.enclave.sign_anchor(2, 6_000).unwrap()), Ok(1));
    assert!(w.p.anchors(None).iter().all(|(e, c)| e.verify(&w.p.public()) && *c == AnchorClass::Unaffected));

    w.clock.advance(1_000);
    let notice = w.p.publish_vulnerability(2, "side channel").unwrap();
    w.clock.advance(1_000);
    assert_eq!(w.p.record_anchor(a.enclave.sign_anchor(3, 7_000).unwrap()), Ok(2));
    let classes: Vec<AnchorClass> = w.p.anchors(Some(&a.id())).into_iter().map(|(_, c)| c).collect();
    assert_eq!(
        classes,
        vec![
            AnchorClass::PreWindowCredible { notice: notice.id },
            AnchorClass::PreWindowCredible { notice: notice.id },
            AnchorClass::Affected { notice: notice.id },
        ]
    );
}

fn inherit(w: &mut World, from: &mut Agent, owner_seed: u8) -> (Agent, crate::enclave::InheritanceRecord) {
    let mut to = w.join(owner_seed, 2);
    let record = from.enclave.authorize_inheritance(&from.owner_seed, to.id()).unwrap();
    to.enclave
        .import_inheritance(record.clone(), from.enclave.log().interaction_digests())
        .unwrap();
    (to, record)
}

#[test]
fn trace_self_produced_is_depth_one() {
    let mut w = World::new();
    let mut a = w.join(1, 2);
    w.work(&mut a, 4);
    let m = TraceManifest {
        owner: a.id(),
        owner_root: a.enclave.root(),
        entries: vec![TraceEntry::SelfProduced { start: 0, end: 4 }],
    };
    let r = verify_trace(w.p.state(), &m);
    assert!(r.accepted, "{r}");
    assert_eq!(r.depth, 1);

    let bad = TraceManifest {
        entries: vec![
            TraceEntry::SelfProduced { start: 0, end: 3 },
            TraceEntry::SelfProduced { start: 2, end: 4 },
            TraceEntry::SelfProduced { start: 4, end: 5 },
        ],
        ..m
    };
    assert_eq!(verify_trace(w.p.state(), &bad).failed(), vec![1, 2]);
}

#[test]
fn trace_chain_breaks_at_exactly_the_broken_entry() {
    let mut w = World::new();
    let mut a = w.join(1, 2);
    w.work(&mut a, 3);
    let (mut b, ab) = inherit(&mut w, &mut a, 1);
    w.work(&mut b, 2);
    let (c, bc) = inherit(&mut w, &mut b, 1);
    let manifest = |ab: &crate::enclave::InheritanceRecord, bc: &crate::enclave::InheritanceRecord| TraceManifest {
        owner: c.id(),
        owner_root: c.enclave.root(),
        entries: vec![
            TraceEntry::Inherited { record: ab.clone() },
            TraceEntry::Inherited { record: bc.clone() },
        ],
    };
    let ok = verify_trace(w.p.state(), &manifest(&ab, &bc));
    assert!(ok.accepted, "{ok}");
    assert_eq!(ok.depth, 3);

    let mut broken = ab.clone();
    broken.owner_authorization.0[7] ^= 1;
    assert_eq!(verify_trace(w.p.state(), &manifest(&broken, &bc)).failed(), vec![0]);
    let mut broken = bc.clone();
    broken.enclave_signature.0[0] ^= 1;
    assert_eq!(verify_trace(w.p.state(), &manifest(&ab, &broken)).failed(), vec![1]);
    let mut wrong_seed = ab.clone();
    wrong_seed.owner_seed_hash = Digest([9; 32]);
    let r = verify_trace(w.p.state(), &manifest(&wrong_seed, &bc));
    assert_eq!(r.failed(), vec![0]);
    assert!(!r.accepted);

    assert!(a.enclave.authorize_inheritance(&[2; 32], c.id()).is_err());
}

#[test]
fn trace_purchased_requires_a_settled_trade() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    let owner = w.join(2, 2);
    w.work(&mut s, 2);
    w.funded(owner.id(), 100);
    let settled = settle(&mut w, &mut s, owner.id(), 30);
    let (l, _) = w.list(&s, 30);
    let refunded = w.p.lock_funds(l, owner.id(), 30, None).unwrap();
    w.p.dispute(refunded, &owner.id()).unwrap();
    let sig = w.p.arbiter_sign(refunded, Resolution::Refunded);
    w.p.resolve(refunded, Resolution::Refunded, sig).unwrap();

    let rc = w.p.state().trade(settled).unwrap().receipt.clone().unwrap();
    let entry = |trade_id| TraceEntry::Purchased {
        trade_id,
        seller: s.id(),
        artifact_hash: rc.artifact_hash,
        referenced_root: rc.referenced_root,
    };
    let m = TraceManifest {
        owner: owner.id(),
        owner_root: owner.enclave.root(),
        entries: vec![entry(settled), entry(refunded), entry(777)],
    };
    let r = verify_trace(w.p.state(), &m);
    assert_eq!(r.failed(), vec![1, 2]);
    assert_eq!(r.composition.purchased, 3);
    let other = TraceManifest {
        owner: id(5),
        owner_root: owner.enclave.root(),
        entries: vec![entry(settled)],
    };
    assert_eq!(verify_trace(w.p.state(), &other).failed(), vec![0]);
}

#[test]
fn journal_replay_reproduces_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("platform.journal");
    let clock = ManualClock::new(1_000_000, 1);
    let key = KeyPair::from_seed([90; 32]);
    let (mut p, info) = Platform::open(&path, key.clone(), Arc::new(clock.clone()), [1; 32], PlatformConfig::default()).unwrap();
    assert_eq!(info.records, 0);
    let gang = p.create_gang(template()).unwrap();
    let r = p.reserve_slot(&gang).unwrap();
    let a = id(1);
    p.open_account(a).unwrap();
    p.deposit(a, 10).unwrap();
    let state = p.state().clone();
    drop(p);
    let (mut p2, info) = Platform::open(&path, key.clone(), Arc::new(clock.clone()), [1; 32], PlatformConfig::default()).unwrap();
    assert_eq!(info.records, 4);
    assert_eq!(p2.state(), &state);
    // a new nonce stream after restart
    let r2 = p2.reserve_slot(&gang).unwrap();
    assert_ne!(r.nonce, r2.nonce);
    assert_eq!(r2.slot_id, 1);
}

#[test]
fn bad_journal_record_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("j");
    let (mut j, _) = Journal::open(&path, false).unwrap();
    j.append(b"not canonical").unwrap();
    drop(j);
    let r = Platform::open(
        &path,
        KeyPair::from_seed([1; 32]),
        Arc::new(ManualClock::new(0, 1)),
        [0; 32],
        PlatformConfig::default(),
    );
    assert!(matches!(r, Err(MarketError::Corrupt(_))));
}

#[test]
fn state_round_trips_through_canonical_and_json() {
    let mut w = World::new();
    let mut s = w.join(1, 2);
    w.work(&mut s, 2);
    w.funded(id(50), 100);
    settle(&mut w, &mut s, id(50), 30);
    let st = w.p.state().clone();
    let bytes = crate::canon::to_canonical(&st).unwrap();
    assert_eq!(crate::canon::from_canonical::<PlatformState>(&bytes).unwrap(), st);
    let json = serde_json::to_string(&st).unwrap();
    assert_eq!(serde_json::from_str::<PlatformState>(&json).unwrap(), st);
}

#[test]
fn unused_signature_type_is_rejected_cleanly() {
    let mut w = World::new();
    assert_eq!(w.p.resolve(0, Resolution::Settled, Signature([0; 64])), Err(MarketError::NotArbiter));
}
