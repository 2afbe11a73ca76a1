//! `certmem` command line.
//!
//! State directory layout:
//!
//! ```text
//! platform/journal         platform journal
//! platform/platform.key    platform signing seed (hex)
//! keys/<name>.key          buyer and operator identities (hex seed)
//! agents/<name>/sealed.bin sealed enclave state
//! agents/<name>/agent.json gang id, certificate, owner seed
//! agents/<name>/listing-<id>.cmar   artifact container behind a listing
//! inbox/trade-<id>.json    encrypted delivery awaiting the buyer
//! ```
//!
//! Exit codes: 0 success, 1 verification or operational failure, 2 usage.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use certmem_core::canon::{digest, Digest, DomainTag, KeyPair, PublicIdentity};
use certmem_core::clock::SystemClock;
use certmem_core::enclave::{BootParams, Enclave, ProviderConfig, ResalePolicy, TradeRef};
use certmem_core::gang::{CertStatus, GangTemplate, MembershipCertificate};
use certmem_core::ledger::{verify_artifact, ArtifactBundle, DisclosurePolicy, Field, FieldRule, Visibility};
use certmem_core::market::{ListingKind, ListingRequest, Platform, PlatformConfig, TraceEntry, TraceManifest, TradeStatus};

use crate::client::Client;
use crate::dataset;
use crate::mock::{MockProvider, Rule};
use crate::scenario::{self, open_delivery, seal_delivery, CleaningVariant, DeliveryPayload};
use crate::seal::SealedArtifact;
use crate::world::template;

#[derive(Debug, Parser)]
#[command(name = "certmem", version, about = "Certified agent memory: platform, agents, trades and verification")]
pub struct Cli {
    /// Base URL of the platform service.
    #[arg(long, global = true, default_value = "http://127.0.0.1:8700")]
    pub platform_url: String,
    /// Directory holding keys, sealed agents and the platform journal.
    #[arg(long, global = true, default_value = "certmem-state")]
    pub state_dir: PathBuf,
    /// Seed for key generation and scenarios.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run or administer the platform service.
    #[command(subcommand)]
    Platform(PlatformCmd),
    /// Create gangs, join them, list members.
    #[command(subcommand)]
    Gang(GangCmd),
    /// Drive a member agent.
    #[command(subcommand)]
    Agent(AgentCmd),
    /// Post and browse listings.
    #[command(subcommand)]
    List(ListCmd),
    /// Simulated credit accounts.
    #[command(subcommand)]
    Account(AccountCmd),
    /// Escrowed trades.
    #[command(subcommand)]
    Trade(TradeCmd),
    /// Check artifacts, trace manifests and certificates.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Self-contained end-to-end runs with the mock provider.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
}

#[derive(Debug, Subcommand)]
pub enum PlatformCmd {
    /// Serve the HTTP API, journaling to the state directory.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8700")]
        listen: SocketAddr,
    },
    /// Publish a vulnerability notice for one security version.
    Notice {
        #[arg(long)]
        affected_version: u64,
        #[arg(long, default_value = "")]
        note: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DisclosureArg {
    Open,
    HideResponses,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ResaleArg {
    Forbidden,
    Allowed,
    Fee,
}

#[derive(Debug, Subcommand)]
pub enum GangCmd {
    Create {
        #[arg(long)]
        task: String,
        /// Text whose digest stands in for the image template hash.
        #[arg(long, default_value = "certmem harness image")]
        image: String,
        #[arg(long, value_enum, default_value = "hide-responses")]
        disclosure: DisclosureArg,
        #[arg(long, value_enum, default_value = "forbidden")]
        resale: ResaleArg,
        #[arg(long, default_value_t = 1)]
        min_version: u64,
    },
    Join {
        #[arg(long)]
        gang: Digest,
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 1)]
        security_version: u64,
    },
    Members {
        #[arg(long)]
        gang: Digest,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Clean,
    Explore,
    Echo,
}

impl From<RuleArg> for Rule {
    fn from(r: RuleArg) -> Rule {
        match r {
            RuleArg::Clean => Rule::Clean,
            RuleArg::Explore => Rule::Explore,
            RuleArg::Echo => Rule::Echo,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum AgentCmd {
    /// Make certified calls through the agent's enclave, then anchor.
    Run {
        #[arg(long)]
        name: String,
        #[arg(long)]
        calls: u64,
        #[arg(long, value_enum, default_value = "clean")]
        rule: RuleArg,
    },
}

#[derive(Debug, Subcommand)]
pub enum ListCmd {
    Post {
        /// Seller agent.
        #[arg(long)]
        name: String,
        #[arg(long)]
        price: u64,
        /// Comma-separated interaction indices; all by default.
        #[arg(long, value_delimiter = ',')]
        select: Vec<u64>,
        /// File bound into the artifact as its attachment.
        #[arg(long)]
        attach: Option<PathBuf>,
    },
    Browse,
}

#[derive(Debug, Subcommand)]
pub enum AccountCmd {
    Deposit {
        #[arg(long)]
        who: String,
        #[arg(long)]
        amount: u64,
    },
    Balance {
        #[arg(long)]
        who: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum TradeCmd {
    Lock {
        #[arg(long)]
        listing: u64,
        #[arg(long)]
        buyer: String,
        #[arg(long)]
        idempotency_key: Option<String>,
    },
    /// Seller encrypts the artifact into the buyer inbox.
    Deliver {
        #[arg(long)]
        trade: u64,
        #[arg(long)]
        seller: String,
    },
    /// Buyer verifies the delivery; on success the platform is told and the seller enclave signs a receipt.
    Receipt {
        #[arg(long)]
        trade: u64,
        #[arg(long)]
        seller: String,
    },
    Dispute {
        #[arg(long)]
        trade: u64,
        #[arg(long)]
        party: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum VerifyCmd {
    /// Verify an artifact container against a listing or a local agent.
    Artifact {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, conflicts_with = "agent")]
        listing: Option<u64>,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        attach: Option<PathBuf>,
    },
    /// Verify a trace manifest (JSON file) or an agent's own full history.
    Trace {
        #[arg(long, conflicts_with = "agent")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        agent: Option<String>,
    },
    /// Status of an agent's membership certificate.
    Cert {
        #[arg(long)]
        name: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Honest,
    CorruptDelivery,
    CoFunding,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    Cleaning {
        #[arg(long, value_enum, default_value = "honest")]
        variant: VariantArg,
    },
    Exploration,
}

#[derive(Debug)]
pub struct Globals {
    pub platform_url: String,
    pub state_dir: PathBuf,
    pub seed: u64,
    pub json: bool,
}

/// Verification failed; maps to exit code 1 with a distinct message.
#[derive(Debug, thiserror::Error)]
#[error("verification failed: {0}")]
pub struct VerificationFailed(pub String);

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            if e.downcast_ref::<VerificationFailed>().is_some() {
                eprintln!("{e}");
            } else {
                eprintln!("error: {e:#}");
            }
            1
        }
    }
}

struct Ctx {
    g: Globals,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AgentFile {
    gang_id: Digest,
    certificate: MembershipCertificate,
    owner_seed: Digest,
}

impl Ctx {
    fn client(&self) -> Client {
        Client::new(&self.g.platform_url)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.g.state_dir.join(rel)
    }

    fn derived_rng(&self, label: &str) -> ChaCha20Rng {
        let d = digest(DomainTag::Field, format!("cli:{}:{label}", self.g.seed).as_bytes());
        ChaCha20Rng::from_seed(d.0)
    }

    fn agent_dir(&self, name: &str) -> PathBuf {
        self.path("agents").join(name)
    }

    fn is_agent(&self, name: &str) -> bool {
        self.agent_dir(name).join("agent.json").exists()
    }

    /// Loads or creates a named identity key.
    fn key(&self, name: &str) -> Result<KeyPair> {
        let p = self.path("keys").join(format!("{name}.key"));
        if p.exists() {
            let hex = fs::read_to_string(&p)?;
            let d: Digest = hex.trim().parse().map_err(|_| anyhow!("bad key file {}", p.display()))?;
            return Ok(KeyPair::from_seed(d.0));
        }
        let k = KeyPair::generate(&mut self.derived_rng(&format!("key:{name}")));
        write_file(&p, Digest(k.seed()).to_string().as_bytes())?;
        Ok(k)
    }

    /// Agent name resolves to the enclave identity, anything else to a key.
    fn identity(&self, name: &str) -> Result<PublicIdentity> {
        if self.is_agent(name) {
            Ok(self.load_agent(name)?.0.agent_public())
        } else {
            Ok(self.key(name)?.public())
        }
    }

    fn load_agent(&self, name: &str) -> Result<(Enclave, AgentFile)> {
        let dir = self.agent_dir(name);
        let sealed = fs::read(dir.join("sealed.bin")).with_context(|| format!("no agent named {name}"))?;
        let enclave = Enclave::unseal(&sealed, Arc::new(SystemClock))?;
        let file: AgentFile = serde_json::from_slice(&fs::read(dir.join("agent.json"))?)?;
        Ok((enclave, file))
    }

    fn store_agent(&self, name: &str, enclave: &Enclave, file: &AgentFile) -> Result<()> {
        let dir = self.agent_dir(name);
        write_file(&dir.join("sealed.bin"), &enclave.seal()?)?;
        write_file(&dir.join("agent.json"), &serde_json::to_vec_pretty(file)?)?;
        Ok(())
    }

    fn emit<T: Serialize>(&self, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        if self.g.json {
            println!("{}", serde_json::to_string_pretty(value)?);
        } else {
            println!("{}", text());
        }
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn credential(name: &str) -> certmem_core::canon::Blob {
    certmem_core::canon::Blob(format!("sk-{name}").into_bytes())
}

pub fn execute(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        g: Globals {
            platform_url: cli.platform_url,
            state_dir: cli.state_dir,
            seed: cli.seed,
            json: cli.json,
        },
    };
    match cli.command {
        Command::Platform(c) => platform_cmd(&ctx, c),
        Command::Gang(c) => gang_cmd(&ctx, c),
        Command::Agent(c) => agent_cmd(&ctx, c),
        Command::List(c) => list_cmd(&ctx, c),
        Command::Account(c) => account_cmd(&ctx, c),
        Command::Trade(c) => trade_cmd(&ctx, c),
        Command::Verify(c) => verify_cmd(&ctx, c),
        Command::Scenario(c) => scenario_cmd(&ctx, c),
    }
}

fn platform_cmd(ctx: &Ctx, c: PlatformCmd) -> Result<()> {
    match c {
        PlatformCmd::Serve { listen } => {
            let key_path = ctx.path("platform/platform.key");
            let key = if key_path.exists() {
                let d: Digest = fs::read_to_string(&key_path)?.trim().parse().map_err(|_| anyhow!("bad platform key"))?;
                KeyPair::from_seed(d.0)
            } else {
                let k = KeyPair::generate(&mut ctx.derived_rng("platform"));
                write_file(&key_path, Digest(k.seed()).to_string().as_bytes())?;
                k
            };
            let nonce_seed = digest(DomainTag::Field, &key.seed()).0;
            let config = PlatformConfig {
                sync_journal: true,
                ..PlatformConfig::default()
            };
            let (platform, info) = Platform::open(
                &ctx.path("platform/journal"),
                key,
                Arc::new(SystemClock),
                nonce_seed,
                config,
            )?;
            eprintln!(
                "platform {} replayed {} records ({} torn bytes dropped); listening on {listen}",
                platform.public(),
                info.records,
                info.discarded_bytes
            );
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(crate::server::serve(platform, listen))
        }
        PlatformCmd::Notice { affected_version, note } => {
            let n = ctx.client().publish_notice(affected_version, &note)?;
            ctx.emit(&n, || format!("notice {} affects version {}", n.id, n.affected_version))
        }
    }
}

fn gang_cmd(ctx: &Ctx, c: GangCmd) -> Result<()> {
    let client = ctx.client();
    match c {
        GangCmd::Create {
            task,
            image,
            disclosure,
            resale,
            min_version,
        } => {
            let rule = match disclosure {
                DisclosureArg::Open => FieldRule::open_all(),
                DisclosureArg::HideResponses => FieldRule::open_all().with(Field::Response, Visibility::Hide),
            };
            let resale = match resale {
                ResaleArg::Forbidden => ResalePolicy::Forbidden,
                ResaleArg::Allowed => ResalePolicy::Allowed,
                ResaleArg::Fee => ResalePolicy::FeeRequired,
            };
            let provider = MockProvider::standard(Rule::Clean);
            let t = template(
                &provider,
                &task,
                digest(DomainTag::Cert, image.as_bytes()),
                rule,
                resale,
                min_version,
            );
            let id = client.create_gang(&t)?;
            ctx.emit(&serde_json::json!({ "gang_id": id }), || id.to_string())
        }
        GangCmd::Join {
            gang,
            name,
            security_version,
        } => {
            if ctx.is_agent(&name) {
                bail!("agent {name} already exists");
            }
            let summary = client.gang(&gang)?;
            let t: GangTemplate = summary.template;
            let r = client.reserve_slot(&gang)?;
            let mut rng = ctx.derived_rng(&format!("agent:{name}"));
            let owner_seed = digest(DomainTag::Field, format!("owner:{}:{name}", ctx.g.seed).as_bytes()).0;
            let enclave = Enclave::boot(
                BootParams {
                    image_template_hash: t.image_template_hash,
                    task_description_hash: t.task_hash(),
                    slot_id: r.slot_id,
                    owner_seed,
                    security_version,
                    provider: ProviderConfig {
                        public: t.model_provider.clone(),
                        credential: credential(&name),
                    },
                    resale_policy: t.trade_policy.resale,
                },
                &mut rng,
                Arc::new(SystemClock),
            );
            let cert = client.register(&gang, &enclave.attest(r.nonce), &r.nonce)?;
            let file = AgentFile {
                gang_id: gang,
                certificate: cert.clone(),
                owner_seed: Digest(owner_seed),
            };
            ctx.store_agent(&name, &enclave, &file)?;
            ctx.emit(&cert, || format!("{name} joined as {} in slot {}", enclave.agent_public(), r.slot_id))
        }
        GangCmd::Members { gang } => {
            let list = client.members(&gang)?;
            ctx.emit(&list, || {
                let mut s = format!("gang {gang} directory v{}", list.version);
                for m in &list.members {
                    let note = match (m.superseded_by, m.vulnerability) {
                        (Some(by), _) => format!(" superseded by {by}"),
                        (None, Some(n)) => format!(" vulnerable (notice {n})"),
                        (None, None) => String::new(),
                    };
                    s.push_str(&format!(
                        "\n  slot {} {} v{}{note}",
                        m.cert.slot_id, m.cert.agent_public, m.cert.security_version
                    ));
                }
                s
            })
        }
    }
}

fn agent_prompt(rule: Rule, k: u64) -> String {
    match rule {
        Rule::Clean => {
            let rows = dataset::rows();
            dataset::clean_prompt(rows[(k as usize) % rows.len()])
        }
        Rule::Explore => format!("Propose one ad headline.\nproduct=water bottle round={k}"),
        Rule::Echo => format!("echo\nmessage {k}"),
    }
}

fn agent_cmd(ctx: &Ctx, c: AgentCmd) -> Result<()> {
    match c {
        AgentCmd::Run { name, calls, rule } => {
            let (mut enclave, file) = ctx.load_agent(&name)?;
            let rule: Rule = rule.into();
            let mut provider = MockProvider::standard(rule);
            let start = enclave.log().len();
            for k in start..start + calls {
                enclave.proxy_call(&mut provider, agent_prompt(rule, k).as_bytes())?;
            }
            ctx.store_agent(&name, &enclave, &file)?;
            let root = enclave.root();
            let anchor = enclave.sign_anchor(root.length, certmem_core::clock::Clock::now_ms(&SystemClock))?;
            let position = ctx.client().record_anchor(&anchor)?;
            ctx.emit(&serde_json::json!({ "root": root, "anchor_position": position }), || {
                format!("{name}: {calls} calls, root {root}, anchored at position {position}")
            })
        }
    }
}

fn list_cmd(ctx: &Ctx, c: ListCmd) -> Result<()> {
    let client = ctx.client();
    match c {
        ListCmd::Post {
            name,
            price,
            select,
            attach,
        } => {
            let (enclave, file) = ctx.load_agent(&name)?;
            let len = enclave.log().len();
            if len == 0 {
                bail!("agent {name} has no interactions to list");
            }
            let selection: Vec<u64> = if select.is_empty() { (0..len).collect() } else { select };
            let attachment = attach.map(fs::read).transpose()?;
            let rule = client.gang(&file.gang_id)?.template.trade_policy.disclosure;
            let full = enclave.build_bundle(len, &selection, &DisclosurePolicy::uniform(rule), attachment.as_deref())?;
            let container = full.to_container()?;
            let ad_rule = FieldRule::open_all().with(Field::Response, Visibility::Hide);
            let ad = enclave.build_bundle(len, &selection[..1], &DisclosurePolicy::uniform(ad_rule), None)?;
            let id = client.post_listing(&ListingRequest {
                kind: ListingKind::Offer,
                poster: enclave.agent_public(),
                seller_cert: Some(file.certificate.clone()),
                price,
                advertisement: Some((ad.artifact, ad.proof)),
                resale_policy: enclave.resale_policy(),
                seller_endpoint: format!("file://{}", ctx.agent_dir(&name).display()),
                encrypted_artifact_hash: Some(ArtifactBundle::hash_container(&container)),
            })?;
            write_file(&ctx.agent_dir(&name).join(format!("listing-{id}.cmar")), &container)?;
            if let Some(a) = attachment {
                write_file(&ctx.agent_dir(&name).join(format!("listing-{id}.attach")), &a)?;
            }
            ctx.emit(&serde_json::json!({ "listing_id": id }), || format!("listing {id}"))
        }
        ListCmd::Browse => {
            let listings = client.listings()?;
            ctx.emit(&listings, || {
                let mut s = String::new();
                for l in &listings {
                    let stats = l
                        .metadata
                        .as_ref()
                        .map(|m| {
                            format!(
                                "{} interactions, {} in / {} out tokens",
                                m.stats.interactions, m.stats.token_in, m.stats.token_out
                            )
                        })
                        .unwrap_or_else(|| "request".into());
                    s.push_str(&format!("{:>4} {:?} price {} by {} ({stats})\n", l.listing_id, l.kind, l.price, l.poster));
                }
                s.trim_end().to_string()
            })
        }
    }
}

fn account_cmd(ctx: &Ctx, c: AccountCmd) -> Result<()> {
    let client = ctx.client();
    match c {
        AccountCmd::Deposit { who, amount } => {
            let id = ctx.identity(&who)?;
            if client.balance(id).is_err() {
                client.open_account(id)?;
            }
            let balance = client.deposit(id, amount)?;
            ctx.emit(&serde_json::json!({ "account": id, "balance": balance }), || {
                format!("{who} balance {balance}")
            })
        }
        AccountCmd::Balance { who } => {
            let id = ctx.identity(&who)?;
            let balance = client.balance(id)?;
            ctx.emit(&serde_json::json!({ "account": id, "balance": balance }), || {
                format!("{who} balance {balance}")
            })
        }
    }
}

fn buyer_check(ctx: &Ctx, trade: u64, payload: &DeliveryPayload) -> Result<()> {
    let client = ctx.client();
    let listing = client
        .listings()?
        .into_iter()
        .find(|l| l.listing_id == trade)
        .ok_or_else(|| anyhow!("listing {trade} not found"))?;
    let expected = listing.encrypted_artifact_hash.context("listing names no artifact")?;
    if ArtifactBundle::hash_container(&payload.container.0) != expected {
        return Err(VerificationFailed("delivered container hash differs from the listing".into()).into());
    }
    let cert = listing.seller_cert.context("listing has no certificate")?;
    let t = client.gang(&cert.gang_id)?.template;
    let bundle = ArtifactBundle::from_container(&payload.container.0)?;
    let claimed = listing.metadata.context("listing has no metadata")?.claimed_root;
    let report = verify_artifact(
        &bundle.artifact,
        &bundle.proof,
        &claimed,
        &cert.genesis_inputs(&t),
        payload.attachment.as_ref().map(|a| a.as_slice()),
    );
    if !report.accepted() {
        return Err(VerificationFailed(report.to_string()).into());
    }
    Ok(())
}

fn trade_cmd(ctx: &Ctx, c: TradeCmd) -> Result<()> {
    let client = ctx.client();
    match c {
        TradeCmd::Lock {
            listing,
            buyer,
            idempotency_key,
        } => {
            let price = client
                .listings()?
                .into_iter()
                .find(|l| l.listing_id == listing)
                .ok_or_else(|| anyhow!("listing {listing} not found"))?
                .price;
            let id = ctx.identity(&buyer)?;
            let trade = client.lock(listing, id, price, idempotency_key)?;
            ctx.emit(&serde_json::json!({ "trade_id": trade, "amount": price }), || {
                format!("trade {trade}: {price} credits in escrow")
            })
        }
        TradeCmd::Deliver { trade, seller } => {
            let dir = ctx.agent_dir(&seller);
            let container = fs::read(dir.join(format!("listing-{trade}.cmar")))
                .with_context(|| format!("{seller} holds no artifact for listing {trade}"))?;
            let attachment = fs::read(dir.join(format!("listing-{trade}.attach"))).ok();
            let mut rng = ctx.derived_rng(&format!("deliver:{trade}"));
            let sealed = seal_delivery(&mut rng, trade, &container, attachment.as_deref())?;
            write_file(&ctx.path("inbox").join(format!("trade-{trade}.json")), &serde_json::to_vec_pretty(&sealed)?)?;
            ctx.emit(&serde_json::json!({ "trade_id": trade, "delivered": true }), || {
                format!("trade {trade} delivered")
            })
        }
        TradeCmd::Receipt { trade, seller } => {
            let state = client.trade(trade)?;
            let buyer = state.buyer.context("trade has no buyer")?;
            let sealed: SealedArtifact = serde_json::from_slice(
                &fs::read(ctx.path("inbox").join(format!("trade-{trade}.json"))).context("no delivery in the inbox")?,
            )?;
            let payload = open_delivery(&sealed)?;
            buyer_check(ctx, trade, &payload)?;
            let (mut enclave, file) = ctx.load_agent(&seller)?;
            // only a verified delivery is reported; a Delivered trade can no longer be disputed
            if state.status == TradeStatus::Locked {
                client.deliver(trade, enclave.agent_public())?;
            }
            let receipt = enclave.issue_receipt(TradeRef::Platform(trade), buyer, &payload.container.0)?;
            let token = enclave.issue_purchase_token(TradeRef::Platform(trade), state.escrow_amount)?;
            ctx.store_agent(&seller, &enclave, &file)?;
            let status = client.receipt(trade, &receipt, Some(&token))?;
            write_file(&ctx.path("inbox").join(format!("trade-{trade}.token.json")), &serde_json::to_vec_pretty(&token)?)?;
            ctx.emit(&serde_json::json!({ "trade_id": trade, "status": status }), || {
                format!("trade {trade}: {status}")
            })
        }
        TradeCmd::Dispute { trade, party } => {
            let id = ctx.identity(&party)?;
            client.dispute(trade, id)?;
            ctx.emit(&serde_json::json!({ "trade_id": trade, "disputed": true }), || {
                format!("trade {trade} disputed")
            })
        }
    }
}

fn verify_cmd(ctx: &Ctx, c: VerifyCmd) -> Result<()> {
    match c {
        VerifyCmd::Artifact {
            file,
            listing,
            agent,
            attach,
        } => {
            let bytes = fs::read(&file)?;
            let bundle = ArtifactBundle::from_container(&bytes)?;
            let attachment = attach.map(fs::read).transpose()?;
            let (root, genesis) = match (listing, agent) {
                (Some(id), _) => {
                    let client = ctx.client();
                    let l = client
                        .listings()?
                        .into_iter()
                        .find(|l| l.listing_id == id)
                        .ok_or_else(|| anyhow!("listing {id} not found"))?;
                    let cert = l.seller_cert.context("listing has no certificate")?;
                    let t = client.gang(&cert.gang_id)?.template;
                    (l.metadata.context("listing has no metadata")?.claimed_root, cert.genesis_inputs(&t))
                }
                (None, Some(name)) => {
                    let (enclave, _) = ctx.load_agent(&name)?;
                    let root = enclave
                        .log()
                        .root_at(bundle.artifact.claimed_root.length)
                        .context("artifact is longer than the agent log")?;
                    (root, enclave.genesis_inputs())
                }
                (None, None) => bail!("pass --listing or --agent"),
            };
            let report = verify_artifact(&bundle.artifact, &bundle.proof, &root, &genesis, attachment.as_deref());
            let accepted = report.accepted();
            ctx.emit(&report, || report.to_string())?;
            if !accepted {
                return Err(VerificationFailed(format!("{:?}", report.failed())).into());
            }
            Ok(())
        }
        VerifyCmd::Trace { manifest, agent } => {
            let m: TraceManifest = match (manifest, agent) {
                (Some(p), _) => serde_json::from_slice(&fs::read(p)?)?,
                (None, Some(name)) => {
                    let (enclave, _) = ctx.load_agent(&name)?;
                    TraceManifest {
                        owner: enclave.agent_public(),
                        owner_root: enclave.root(),
                        entries: vec![TraceEntry::SelfProduced {
                            start: 0,
                            end: enclave.log().len(),
                        }],
                    }
                }
                (None, None) => bail!("pass --manifest or --agent"),
            };
            let report = ctx.client().verify_trace(&m)?;
            ctx.emit(&report, || report.to_string())?;
            if !report.accepted {
                return Err(VerificationFailed(format!("failed entries {:?}", report.failed())).into());
            }
            Ok(())
        }
        VerifyCmd::Cert { name } => {
            let (_, file) = ctx.load_agent(&name)?;
            let status = ctx.client().cert_status(&file.certificate)?;
            ctx.emit(&serde_json::json!({ "status": status }), || format!("{name}: {status:?}"))?;
            if status != CertStatus::Current {
                return Err(VerificationFailed(format!("certificate is {status:?}")).into());
            }
            Ok(())
        }
    }
}

fn scenario_cmd(ctx: &Ctx, c: ScenarioCmd) -> Result<()> {
    let report = match c {
        ScenarioCmd::Cleaning { variant } => {
            let v = match variant {
                VariantArg::Honest => CleaningVariant::Honest,
                VariantArg::CorruptDelivery => CleaningVariant::CorruptDelivery,
                VariantArg::CoFunding => CleaningVariant::CoFunding,
            };
            scenario::cleaning(ctx.g.seed, v)?
        }
        ScenarioCmd::Exploration => scenario::exploration(ctx.g.seed)?,
    };
    ctx.emit(&report, || report.to_string())?;
    if !report.passed() {
        let names: Vec<&str> = report.failures().iter().map(|a| a.name.as_str()).collect();
        return Err(VerificationFailed(names.join(", ")).into());
    }
    Ok(())
}
