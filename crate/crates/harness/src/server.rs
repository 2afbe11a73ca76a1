//! Platform HTTP service. JSON bodies mirror the canonical types: hashes and
//! keys as lowercase hex, byte strings as base64.
//!
//! Caller identities in request bodies are taken as asserted. Every handler
//! runs under one mutex, so operations are linearized in journal order.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use certmem_core::canon::{Digest, Nonce, PublicIdentity, Signature};
use certmem_core::enclave::{AttestationReport, DeliveryReceipt, PurchaseToken, SignedAnchor, TradeRef};
use certmem_core::gang::{GangError, GangTemplate, MembershipCertificate};
use certmem_core::market::{
    verify_trace, AnchorClass, AnchorEntry, ListingRequest, MarketError, Platform, Resolution, TraceManifest,
};

pub type Shared = Arc<Mutex<Platform>>;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: String,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            kind: "BadRequest".into(),
            message: message.into(),
        }
    }
}

fn error_kind(e: &MarketError) -> (StatusCode, String) {
    use MarketError as M;
    let status = match e {
        M::UnknownListing(_) | M::UnknownTrade(_) | M::Gang(GangError::UnknownGang(_)) => StatusCode::NOT_FOUND,
        M::AlreadyLocked(_)
        | M::IllegalTransition { .. }
        | M::IdempotencyConflict(_)
        | M::AlreadyRedeemed
        | M::DuplicateReview
        | M::Gang(GangError::DuplicateGang(_))
        | M::Gang(GangError::SlotReuse(_)) => StatusCode::CONFLICT,
        M::NotAParty | M::NotArbiter => StatusCode::FORBIDDEN,
        M::Journal(_) | M::Corrupt(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    };
    let kind = match e {
        M::Gang(g) => format!("Gang.{}", variant_name(&format!("{g:?}"))),
        M::Credit(c) => format!("Credit.{}", variant_name(&format!("{c:?}"))),
        other => variant_name(&format!("{other:?}")),
    };
    (status, kind)
}

fn variant_name(debug: &str) -> String {
    debug
        .split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or_default()
        .to_string()
}

impl From<MarketError> for ApiError {
    fn from(e: MarketError) -> Self {
        let (status, kind) = error_kind(&e);
        ApiError {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

/// JSON error body returned with every non-2xx status.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                error: self.kind,
                message: self.message,
            }),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn hex_param<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, ApiError> {
    s.parse().map_err(|_| ApiError::bad_request(format!("{what} must be lowercase hex")))
}

fn lock(s: &Shared) -> std::sync::MutexGuard<'_, Platform> {
    // a panicked handler leaves the state as the last committed record
    s.lock().unwrap_or_else(|p| p.into_inner())
}

// request and response bodies

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlatformInfo {
    pub public: PublicIdentity,
    pub now: u64,
    pub records: u64,
    pub gangs: usize,
    pub listings: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccountBody {
    pub account: PublicIdentity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmountBody {
    pub amount: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Balance {
    pub account: PublicIdentity,
    pub balance: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GangId {
    pub gang_id: Digest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GangSummary {
    pub gang_id: Digest,
    pub template: GangTemplate,
    pub members: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterBody {
    pub report: AttestationReport,
    pub nonce: Nonce,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertBody {
    pub certificate: MembershipCertificate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonceBody {
    pub nonce: Nonce,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReregisterBody {
    pub certificate: MembershipCertificate,
    pub report: AttestationReport,
    pub nonce: Nonce,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoticeBody {
    pub affected_version: u64,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ListingId {
    pub listing_id: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LockBody {
    pub buyer: PublicIdentity,
    pub amount: u64,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TradeId {
    pub trade_id: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartyBody {
    pub party: PublicIdentity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReceiptBody {
    pub receipt: DeliveryReceipt,
    #[serde(default)]
    pub token: Option<PurchaseToken>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusBody {
    pub status: certmem_core::market::TradeStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolveBody {
    pub outcome: Resolution,
    pub arbiter_signature: Signature,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewBody {
    pub trade: TradeRef,
    pub reviewer: PublicIdentity,
    pub rating: u8,
    #[serde(default)]
    pub comment: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Position {
    pub position: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifiedAnchor {
    pub entry: AnchorEntry,
    pub class: AnchorClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bulletin {
    pub platform: PublicIdentity,
    pub notices: Vec<certmem_core::gang::VulnerabilityNotice>,
    pub anchors: Vec<ClassifiedAnchor>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AgentQuery {
    pub agent: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Done {
    pub ok: bool,
}

const DONE: Done = Done { ok: true };

// handlers

async fn info(State(s): State<Shared>) -> Json<PlatformInfo> {
    let p = lock(&s);
    Json(PlatformInfo {
        public: p.public(),
        now: p.now(),
        records: p.state().records_applied,
        gangs: p.state().registry.gangs().count(),
        listings: p.state().next_listing,
    })
}

async fn open_account(State(s): State<Shared>, Json(b): Json<AccountBody>) -> ApiResult<AccountBody> {
    lock(&s).open_account(b.account)?;
    Ok(Json(b))
}

async fn deposit(State(s): State<Shared>, Path(id): Path<String>, Json(b): Json<AmountBody>) -> ApiResult<Balance> {
    let account: PublicIdentity = hex_param(&id, "account")?;
    let balance = lock(&s).deposit(account, b.amount)?;
    Ok(Json(Balance { account, balance }))
}

async fn balance(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Balance> {
    let account: PublicIdentity = hex_param(&id, "account")?;
    let balance = lock(&s).balance_of(&account).ok_or_else(|| ApiError {
        status: StatusCode::NOT_FOUND,
        kind: "Credit.UnknownAccount".into(),
        message: format!("unknown account {account}"),
    })?;
    Ok(Json(Balance { account, balance }))
}

async fn create_gang(State(s): State<Shared>, Json(t): Json<GangTemplate>) -> ApiResult<GangId> {
    let gang_id = lock(&s).create_gang(t)?;
    Ok(Json(GangId { gang_id }))
}

fn summary(p: &Platform, id: &Digest) -> Option<GangSummary> {
    p.state().registry.gang(id).map(|g| GangSummary {
        gang_id: *id,
        template: g.template.clone(),
        members: g.current_members().count(),
    })
}

async fn list_gangs(State(s): State<Shared>) -> Json<Vec<GangSummary>> {
    let p = lock(&s);
    let ids: Vec<Digest> = p.state().registry.gangs().map(|(id, _)| *id).collect();
    Json(ids.iter().filter_map(|id| summary(&p, id)).collect())
}

async fn get_gang(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<GangSummary> {
    let id: Digest = hex_param(&id, "gang id")?;
    let p = lock(&s);
    summary(&p, &id)
        .map(Json)
        .ok_or_else(|| MarketError::Gang(GangError::UnknownGang(id)).into())
}

async fn reserve_slot(
    State(s): State<Shared>,
    Path(id): Path<String>,
) -> ApiResult<certmem_core::gang::SlotReservation> {
    let id: Digest = hex_param(&id, "gang id")?;
    Ok(Json(lock(&s).reserve_slot(&id)?))
}

async fn register(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(b): Json<RegisterBody>,
) -> ApiResult<MembershipCertificate> {
    let id: Digest = hex_param(&id, "gang id")?;
    Ok(Json(lock(&s).register_member(&id, &b.report, &b.nonce)?))
}

async fn open_reregistration(State(s): State<Shared>, Json(b): Json<CertBody>) -> ApiResult<NonceBody> {
    let nonce = lock(&s).open_reregistration(&b.certificate)?;
    Ok(Json(NonceBody { nonce }))
}

async fn reregister(State(s): State<Shared>, Json(b): Json<ReregisterBody>) -> ApiResult<MembershipCertificate> {
    Ok(Json(lock(&s).reregister(&b.certificate, &b.report, &b.nonce)?))
}

async fn members(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<certmem_core::gang::MemberList> {
    let id: Digest = hex_param(&id, "gang id")?;
    Ok(Json(lock(&s).member_list(&id)?))
}

async fn cert_status(State(s): State<Shared>, Json(b): Json<CertBody>) -> Json<certmem_core::gang::CertStatus> {
    Json(lock(&s).certificate_status(&b.certificate))
}

fn bulletin_of(p: &Platform) -> Bulletin {
    Bulletin {
        platform: p.public(),
        notices: p.state().registry.bulletin().to_vec(),
        anchors: p
            .anchors(None)
            .into_iter()
            .map(|(entry, class)| ClassifiedAnchor { entry, class })
            .collect(),
    }
}

async fn get_bulletin(State(s): State<Shared>) -> Json<Bulletin> {
    Json(bulletin_of(&lock(&s)))
}

async fn publish_notice(
    State(s): State<Shared>,
    Json(b): Json<NoticeBody>,
) -> ApiResult<certmem_core::gang::VulnerabilityNotice> {
    Ok(Json(lock(&s).publish_vulnerability(b.affected_version, &b.note)?))
}

async fn list_listings(State(s): State<Shared>) -> Json<Vec<certmem_core::market::TradeListing>> {
    Json(lock(&s).listings().cloned().collect())
}

async fn post_listing(State(s): State<Shared>, Json(req): Json<ListingRequest>) -> ApiResult<ListingId> {
    let listing_id = lock(&s).post_listing(req)?;
    Ok(Json(ListingId { listing_id }))
}

async fn cancel_listing(State(s): State<Shared>, Path(id): Path<u64>, Json(b): Json<PartyBody>) -> ApiResult<Done> {
    lock(&s).cancel_listing(id, &b.party)?;
    Ok(Json(DONE))
}

async fn get_trade(State(s): State<Shared>, Path(id): Path<u64>) -> ApiResult<certmem_core::market::TradeState> {
    Ok(Json(lock(&s).state().trade(id)?.clone()))
}

async fn lock_funds(State(s): State<Shared>, Path(id): Path<u64>, Json(b): Json<LockBody>) -> ApiResult<TradeId> {
    let trade_id = lock(&s).lock_funds(id, b.buyer, b.amount, b.idempotency_key)?;
    Ok(Json(TradeId { trade_id }))
}

async fn deliver(State(s): State<Shared>, Path(id): Path<u64>, Json(b): Json<PartyBody>) -> ApiResult<Done> {
    lock(&s).mark_delivered(id, &b.party)?;
    Ok(Json(DONE))
}

async fn receipt(State(s): State<Shared>, Path(id): Path<u64>, Json(b): Json<ReceiptBody>) -> ApiResult<StatusBody> {
    let status = lock(&s).submit_receipt(id, b.receipt, b.token)?;
    Ok(Json(StatusBody { status }))
}

async fn dispute(State(s): State<Shared>, Path(id): Path<u64>, Json(b): Json<PartyBody>) -> ApiResult<Done> {
    lock(&s).dispute(id, &b.party)?;
    Ok(Json(DONE))
}

async fn resolve(State(s): State<Shared>, Path(id): Path<u64>, Json(b): Json<ResolveBody>) -> ApiResult<Done> {
    lock(&s).resolve(id, b.outcome, b.arbiter_signature)?;
    Ok(Json(DONE))
}

async fn expire(State(s): State<Shared>, Path(id): Path<u64>) -> ApiResult<Done> {
    lock(&s).expire(id)?;
    Ok(Json(DONE))
}

async fn redeem(State(s): State<Shared>, Json(t): Json<PurchaseToken>) -> ApiResult<Done> {
    lock(&s).redeem_token(t)?;
    Ok(Json(DONE))
}

async fn review(State(s): State<Shared>, Json(b): Json<ReviewBody>) -> ApiResult<Done> {
    lock(&s).submit_review(b.trade, b.reviewer, b.rating, &b.comment)?;
    Ok(Json(DONE))
}

async fn reputation(
    State(s): State<Shared>,
    Path(seller): Path<String>,
) -> ApiResult<certmem_core::market::ReputationScore> {
    let seller: PublicIdentity = hex_param(&seller, "seller")?;
    Ok(Json(lock(&s).reputation(&seller)))
}

async fn record_anchor(State(s): State<Shared>, Json(a): Json<SignedAnchor>) -> ApiResult<Position> {
    let position = lock(&s).record_anchor(a)?;
    Ok(Json(Position { position }))
}

async fn list_anchors(State(s): State<Shared>, Query(q): Query<AgentQuery>) -> ApiResult<Vec<ClassifiedAnchor>> {
    let agent: Option<PublicIdentity> = q.agent.as_deref().map(|a| hex_param(a, "agent")).transpose()?;
    let p = lock(&s);
    Ok(Json(
        p.anchors(agent.as_ref())
            .into_iter()
            .map(|(entry, class)| ClassifiedAnchor { entry, class })
            .collect(),
    ))
}

async fn trace_verify(
    State(s): State<Shared>,
    Json(m): Json<TraceManifest>,
) -> Json<certmem_core::market::LineageReport> {
    let p = lock(&s);
    Json(verify_trace(p.state(), &m))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/platform", get(info))
        .route("/accounts", post(open_account))
        .route("/accounts/{id}", get(balance))
        .route("/accounts/{id}/deposit", post(deposit))
        .route("/gangs", get(list_gangs).post(create_gang))
        .route("/gangs/{id}", get(get_gang))
        .route("/gangs/{id}/slots", post(reserve_slot))
        .route("/gangs/{id}/register", post(register))
        .route("/gangs/{id}/members", get(members))
        .route("/certificates/status", post(cert_status))
        .route("/certificates/reregister", post(open_reregistration))
        .route("/certificates/reregister/complete", post(reregister))
        .route("/bulletin", get(get_bulletin).post(publish_notice))
        .route("/listings", get(list_listings).post(post_listing))
        .route("/listings/{id}/cancel", post(cancel_listing))
        .route("/trades/{id}", get(get_trade))
        .route("/trades/{id}/lock", post(lock_funds))
        .route("/trades/{id}/deliver", post(deliver))
        .route("/trades/{id}/receipt", post(receipt))
        .route("/trades/{id}/dispute", post(dispute))
        .route("/trades/{id}/resolve", post(resolve))
        .route("/trades/{id}/expire", post(expire))
        .route("/tokens/redeem", post(redeem))
        .route("/reviews", post(review))
        .route("/reputation/{seller}", get(reputation))
        .route("/anchors", get(list_anchors).post(record_anchor))
        .route("/trace/verify", post(trace_verify))
        .with_state(state)
}

/// Serves until the process exits.
pub async fn serve(platform: Platform, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(Mutex::new(platform)))).await?;
    Ok(())
}

/// Server on a background thread with its own runtime.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub platform: Shared,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.halt();
    }

    fn halt(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.halt();
    }
}

pub fn spawn(platform: Platform, addr: SocketAddr) -> anyhow::Result<ServerHandle> {
    let shared: Shared = Arc::new(Mutex::new(platform));
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let bound = std_listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(shared.clone());
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(ServerHandle {
        addr: bound,
        platform: shared,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
