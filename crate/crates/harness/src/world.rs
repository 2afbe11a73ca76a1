//! A platform, a clock, a seeded RNG and the mock provider in one process.
//!
//! Every key here comes from the seeded RNG. That is deterministic and
//! therefore insecure; it exists for scenarios and tests.

use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use certmem_core::canon::{Blob, Digest, KeyPair, PublicIdentity};
use certmem_core::clock::ManualClock;
use certmem_core::enclave::{BootParams, Enclave, ProviderConfig, ResalePolicy};
use certmem_core::gang::{GangTemplate, LoggingPolicy, MembershipCertificate, SettlementMode, TradePolicy};
use certmem_core::ledger::FieldRule;
use certmem_core::market::{Platform, PlatformConfig, ReplayInfo};

use crate::mock::{MockProvider, Rule};

/// Scenario wall clock starts here and ticks 1 ms per reading.
pub const EPOCH_MS: u64 = 1_750_000_000_000;

pub struct Member {
    pub name: String,
    pub enclave: Enclave,
    pub cert: MembershipCertificate,
    pub owner_seed: [u8; 32],
}

impl Member {
    pub fn id(&self) -> PublicIdentity {
        self.enclave.agent_public()
    }
}

pub struct World {
    pub platform: Platform,
    pub clock: ManualClock,
    pub rng: ChaCha20Rng,
    pub provider: MockProvider,
}

pub fn template(
    provider: &MockProvider,
    task: &str,
    image: Digest,
    disclosure: FieldRule,
    resale: ResalePolicy,
    min_security_version: u64,
) -> GangTemplate {
    GangTemplate {
        task_description: task.into(),
        image_template_hash: image,
        model_provider: provider.public(),
        logging_policy: LoggingPolicy::default(),
        trade_policy: TradePolicy {
            resale,
            disclosure,
            settlement: SettlementMode::Platform,
        },
        code_reference: "certmem/harness".into(),
        min_security_version,
    }
}

/// Platform key and nonce seed for a world seed; the first draws of its RNG.
pub fn platform_identity(seed: u64) -> (KeyPair, [u8; 32], ChaCha20Rng) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let key = KeyPair::generate(&mut rng);
    let mut platform_seed = [0u8; 32];
    rng.fill_bytes(&mut platform_seed);
    (key, platform_seed, rng)
}

impl World {
    pub fn new(seed: u64, rule: Rule) -> Self {
        let (key, platform_seed, rng) = platform_identity(seed);
        let clock = ManualClock::new(EPOCH_MS, 1);
        let platform = Platform::new(key, Arc::new(clock.clone()), platform_seed, PlatformConfig::default());
        World {
            platform,
            clock,
            rng,
            provider: MockProvider::standard(rule),
        }
    }

    /// Same as `new` but the platform appends to a journal at `path`.
    pub fn journaled(seed: u64, rule: Rule, path: &Path) -> Result<(Self, ReplayInfo)> {
        let (key, platform_seed, rng) = platform_identity(seed);
        let clock = ManualClock::new(EPOCH_MS, 1);
        let (platform, info) = Platform::open(path, key, Arc::new(clock.clone()), platform_seed, PlatformConfig::default())?;
        let w = World {
            platform,
            clock,
            rng,
            provider: MockProvider::standard(rule),
        };
        Ok((w, info))
    }

    pub fn credential(name: &str) -> Blob {
        Blob(format!("sk-{name}").into_bytes())
    }

    pub fn boot(&mut self, t: &GangTemplate, slot_id: u64, owner_seed: [u8; 32], version: u64, name: &str) -> Enclave {
        Enclave::boot(
            BootParams {
                image_template_hash: t.image_template_hash,
                task_description_hash: t.task_hash(),
                slot_id,
                owner_seed,
                security_version: version,
                provider: ProviderConfig {
                    public: t.model_provider.clone(),
                    credential: World::credential(name),
                },
                resale_policy: t.trade_policy.resale,
            },
            &mut self.rng,
            Arc::new(self.clock.clone()),
        )
    }

    pub fn owner_seed(&mut self) -> [u8; 32] {
        let mut s = [0u8; 32];
        self.rng.fill_bytes(&mut s);
        s
    }

    /// Reserve, boot, attest and register.
    pub fn join(&mut self, gang: &Digest, name: &str, owner_seed: [u8; 32], version: u64) -> Result<Member> {
        let t = self
            .platform
            .state()
            .registry
            .gang(gang)
            .ok_or_else(|| anyhow!("unknown gang"))?
            .template
            .clone();
        let r = self.platform.reserve_slot(gang)?;
        let enclave = self.boot(&t, r.slot_id, owner_seed, version, name);
        let cert = self.platform.register_member(gang, &enclave.attest(r.nonce), &r.nonce)?;
        Ok(Member {
            name: name.into(),
            enclave,
            cert,
            owner_seed,
        })
    }

    pub fn call(&mut self, m: &mut Member, prompt: &[u8]) -> Result<Blob> {
        Ok(m.enclave.proxy_call(&mut self.provider, prompt)?)
    }

    pub fn buyer(&mut self) -> KeyPair {
        KeyPair::generate(&mut self.rng)
    }

    pub fn fund(&mut self, who: PublicIdentity, amount: u64) -> Result<()> {
        if self.platform.balance_of(&who).is_none() {
            self.platform.open_account(who)?;
        }
        self.platform.deposit(who, amount)?;
        Ok(())
    }
}
