//! Blocking HTTP client for the platform service.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use certmem_core::canon::{Digest, Nonce, PublicIdentity, Signature};
use certmem_core::enclave::{AttestationReport, DeliveryReceipt, PurchaseToken, SignedAnchor, TradeRef};
use certmem_core::gang::{CertStatus, GangTemplate, MemberList, MembershipCertificate, SlotReservation, VulnerabilityNotice};
use certmem_core::market::{
    LineageReport, ListingRequest, ReputationScore, Resolution, TraceManifest, TradeListing, TradeState, TradeStatus,
};

use crate::server::*;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{status} {error}: {message}")]
    Api { status: u16, error: String, message: String },
    #[error("transport: {0}")]
    Transport(String),
}

pub type ClientResult<T> = Result<T, ClientError>;

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(base: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Client {
            base: base.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn finish<T: DeserializeOwned>(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> ClientResult<T> {
        let mut resp = resp.map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if (200..300).contains(&status) {
            return resp
                .body_mut()
                .read_json::<T>()
                .map_err(|e| ClientError::Transport(e.to_string()));
        }
        match resp.body_mut().read_json::<ErrorBody>() {
            Ok(b) => Err(ClientError::Api {
                status,
                error: b.error,
                message: b.message,
            }),
            Err(_) => Err(ClientError::Api {
                status,
                error: "Http".into(),
                message: format!("status {status}"),
            }),
        }
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> ClientResult<T> {
        Self::finish(self.agent.get(format!("{}{path}", self.base)).call())
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> ClientResult<T> {
        Self::finish(self.agent.post(format!("{}{path}", self.base)).send_json(body))
    }

    pub fn info(&self) -> ClientResult<PlatformInfo> {
        self.get("/platform")
    }

    pub fn open_account(&self, account: PublicIdentity) -> ClientResult<()> {
        self.post::<_, AccountBody>("/accounts", &AccountBody { account }).map(|_| ())
    }

    pub fn deposit(&self, account: PublicIdentity, amount: u64) -> ClientResult<u64> {
        self.post::<_, Balance>(&format!("/accounts/{account}/deposit"), &AmountBody { amount })
            .map(|b| b.balance)
    }

    pub fn balance(&self, account: PublicIdentity) -> ClientResult<u64> {
        self.get::<Balance>(&format!("/accounts/{account}")).map(|b| b.balance)
    }

    pub fn create_gang(&self, t: &GangTemplate) -> ClientResult<Digest> {
        self.post::<_, GangId>("/gangs", t).map(|g| g.gang_id)
    }

    pub fn gangs(&self) -> ClientResult<Vec<GangSummary>> {
        self.get("/gangs")
    }

    pub fn gang(&self, id: &Digest) -> ClientResult<GangSummary> {
        self.get(&format!("/gangs/{id}"))
    }

    pub fn reserve_slot(&self, gang: &Digest) -> ClientResult<SlotReservation> {
        self.post(&format!("/gangs/{gang}/slots"), &serde_json::json!({}))
    }

    pub fn register(&self, gang: &Digest, report: &AttestationReport, nonce: &Nonce) -> ClientResult<MembershipCertificate> {
        self.post(
            &format!("/gangs/{gang}/register"),
            &RegisterBody {
                report: report.clone(),
                nonce: *nonce,
            },
        )
    }

    pub fn members(&self, gang: &Digest) -> ClientResult<MemberList> {
        self.get(&format!("/gangs/{gang}/members"))
    }

    pub fn cert_status(&self, cert: &MembershipCertificate) -> ClientResult<CertStatus> {
        self.post(
            "/certificates/status",
            &CertBody {
                certificate: cert.clone(),
            },
        )
    }

    pub fn bulletin(&self) -> ClientResult<Bulletin> {
        self.get("/bulletin")
    }

    pub fn publish_notice(&self, affected_version: u64, note: &str) -> ClientResult<VulnerabilityNotice> {
        self.post(
            "/bulletin",
            &NoticeBody {
                affected_version,
                note: note.into(),
            },
        )
    }

    pub fn listings(&self) -> ClientResult<Vec<TradeListing>> {
        self.get("/listings")
    }

    pub fn post_listing(&self, req: &ListingRequest) -> ClientResult<u64> {
        self.post::<_, ListingId>("/listings", req).map(|l| l.listing_id)
    }

    pub fn trade(&self, id: u64) -> ClientResult<TradeState> {
        self.get(&format!("/trades/{id}"))
    }

    pub fn lock(&self, listing: u64, buyer: PublicIdentity, amount: u64, key: Option<String>) -> ClientResult<u64> {
        self.post::<_, TradeId>(
            &format!("/trades/{listing}/lock"),
            &LockBody {
                buyer,
                amount,
                idempotency_key: key,
            },
        )
        .map(|t| t.trade_id)
    }

    pub fn deliver(&self, trade: u64, party: PublicIdentity) -> ClientResult<()> {
        self.post::<_, Done>(&format!("/trades/{trade}/deliver"), &PartyBody { party }).map(|_| ())
    }

    pub fn receipt(&self, trade: u64, receipt: &DeliveryReceipt, token: Option<&PurchaseToken>) -> ClientResult<TradeStatus> {
        self.post::<_, StatusBody>(
            &format!("/trades/{trade}/receipt"),
            &ReceiptBody {
                receipt: receipt.clone(),
                token: token.cloned(),
            },
        )
        .map(|s| s.status)
    }

    pub fn dispute(&self, trade: u64, party: PublicIdentity) -> ClientResult<()> {
        self.post::<_, Done>(&format!("/trades/{trade}/dispute"), &PartyBody { party }).map(|_| ())
    }

    pub fn resolve(&self, trade: u64, outcome: Resolution, sig: Signature) -> ClientResult<()> {
        self.post::<_, Done>(
            &format!("/trades/{trade}/resolve"),
            &ResolveBody {
                outcome,
                arbiter_signature: sig,
            },
        )
        .map(|_| ())
    }

    pub fn expire(&self, trade: u64) -> ClientResult<()> {
        self.post::<_, Done>(&format!("/trades/{trade}/expire"), &serde_json::json!({})).map(|_| ())
    }

    pub fn redeem(&self, token: &PurchaseToken) -> ClientResult<()> {
        self.post::<_, Done>("/tokens/redeem", token).map(|_| ())
    }

    pub fn review(&self, trade: TradeRef, reviewer: PublicIdentity, rating: u8, comment: &str) -> ClientResult<()> {
        self.post::<_, Done>(
            "/reviews",
            &ReviewBody {
                trade,
                reviewer,
                rating,
                comment: comment.into(),
            },
        )
        .map(|_| ())
    }

    pub fn reputation(&self, seller: &PublicIdentity) -> ClientResult<ReputationScore> {
        self.get(&format!("/reputation/{seller}"))
    }

    pub fn record_anchor(&self, a: &SignedAnchor) -> ClientResult<u64> {
        self.post::<_, Position>("/anchors", a).map(|p| p.position)
    }

    pub fn anchors(&self, agent: Option<&PublicIdentity>) -> ClientResult<Vec<ClassifiedAnchor>> {
        match agent {
            Some(a) => self.get(&format!("/anchors?agent={a}")),
            None => self.get("/anchors"),
        }
    }

    pub fn verify_trace(&self, m: &TraceManifest) -> ClientResult<LineageReport> {
        self.post("/trace/verify", m)
    }
}
