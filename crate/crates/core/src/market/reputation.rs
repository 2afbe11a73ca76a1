//! Seller reputation from weighted buyer reviews.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canon::PublicIdentity;
use crate::enclave::TradeRef;
use crate::gang::GangRegistry;

pub const DAY_MS: u64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub trade: TradeRef,
    pub seller: PublicIdentity,
    pub buyer: PublicIdentity,
    /// 1..=5.
    pub rating: u8,
    pub comment: String,
    /// Escrow or token amount behind the trade.
    pub amount: u64,
    pub at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReputationConfig {
    pub half_life_ms: u64,
    pub amount_cap: u64,
    pub repeat_discount: f64,
    /// Reviews by the same buyer of the same seller past this count are discounted.
    pub repeat_free: usize,
}

impl Default for ReputationConfig {
    fn default() -> Self {
        ReputationConfig {
            half_life_ms: 30 * DAY_MS,
            amount_cap: 100,
            repeat_discount: 0.5,
            repeat_free: 3,
        }
    }
}

impl ReputationConfig {
    pub fn lambda_per_ms(&self) -> f64 {
        std::f64::consts::LN_2 / self.half_life_ms as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationScore {
    pub seller: PublicIdentity,
    /// `None` when no review is eligible or all weights are zero.
    pub score: Option<f64>,
    pub contributing: usize,
    pub excluded: usize,
    pub total_weight: f64,
}

/// Same agent, or two agents whose certificates carry one owner seed hash.
pub fn related(registry: &GangRegistry, a: &PublicIdentity, b: &PublicIdentity) -> bool {
    if a == b {
        return true;
    }
    match (registry.member_by_agent(a), registry.member_by_agent(b)) {
        (Some(x), Some(y)) => x.cert.owner_seed_hash == y.cert.owner_seed_hash,
        _ => false,
    }
}

/// Per-review weights in input order; `None` marks an excluded review.
pub fn review_weights(
    reviews: &[Review],
    registry: &GangRegistry,
    seller: &PublicIdentity,
    now: u64,
    config: &ReputationConfig,
) -> Vec<Option<f64>> {
    let mut order: Vec<usize> = (0..reviews.len()).filter(|i| reviews[*i].seller == *seller).collect();
    order.sort_by_key(|i| (reviews[*i].at, *i));
    let mut per_buyer: BTreeMap<PublicIdentity, usize> = BTreeMap::new();
    let mut out = vec![None; reviews.len()];
    let lambda = config.lambda_per_ms();
    for i in order {
        let r = &reviews[i];
        if related(registry, &r.buyer, seller) {
            continue;
        }
        let k = per_buyer.entry(r.buyer).or_insert(0);
        *k += 1;
        let age = now.saturating_sub(r.at) as f64;
        let repeat = if *k > config.repeat_free { config.repeat_discount } else { 1.0 };
        out[i] = Some((-lambda * age).exp() * r.amount.min(config.amount_cap) as f64 * repeat);
    }
    out
}

pub fn reputation(
    reviews: &[Review],
    registry: &GangRegistry,
    seller: &PublicIdentity,
    now: u64,
    config: &ReputationConfig,
) -> ReputationScore {
    let weights = review_weights(reviews, registry, seller, now, config);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut contributing = 0;
    let mut excluded = 0;
    for (r, w) in reviews.iter().zip(&weights) {
        if r.seller != *seller {
            continue;
        }
        match w {
            Some(w) => {
                contributing += 1;
                num += w * (f64::from(r.rating) / 5.0);
                den += w;
            }
            None => excluded += 1,
        }
    }
    ReputationScore {
        seller: *seller,
        score: (den > 0.0).then(|| num / den),
        contributing,
        excluded,
        total_weight: den,
    }
}
