//! Trace manifests: where an agent's memory came from.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::canon::{Digest, PublicIdentity};
use crate::enclave::{InheritanceFault, InheritanceRecord};
use crate::ledger::AnchoredRoot;

use super::platform::PlatformState;
use super::trade::TradeStatus;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEntry {
    /// Interactions `start..end` of the owner's own log.
    SelfProduced { start: u64, end: u64 },
    Purchased {
        trade_id: u64,
        seller: PublicIdentity,
        artifact_hash: Digest,
        referenced_root: AnchoredRoot,
    },
    Inherited { record: InheritanceRecord },
}

impl TraceEntry {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEntry::SelfProduced { .. } => "self-produced",
            TraceEntry::Purchased { .. } => "purchased",
            TraceEntry::Inherited { .. } => "inherited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceManifest {
    pub owner: PublicIdentity,
    /// The owner's current log root; self-produced ranges must fit inside it.
    pub owner_root: AnchoredRoot,
    pub entries: Vec<TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryVerdict {
    pub index: usize,
    pub kind: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Composition {
    pub self_produced: usize,
    pub purchased: usize,
    pub inherited: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageReport {
    pub entries: Vec<EntryVerdict>,
    pub accepted: bool,
    /// 1 for the owner plus one per valid inheritance step.
    pub depth: usize,
    pub composition: Composition,
}

impl LineageReport {
    pub fn failed(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| !e.ok).map(|e| e.index).collect()
    }
}

impl std::fmt::Display for LineageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            let mark = if e.ok { "ok  " } else { "FAIL" };
            writeln!(f, "{mark} #{} {}: {}", e.index, e.kind, e.detail)?;
        }
        write!(
            f,
            "{} depth={} self={} purchased={} inherited={}",
            if self.accepted { "ACCEPTED" } else { "REJECTED" },
            self.depth,
            self.composition.self_produced,
            self.composition.purchased,
            self.composition.inherited
        )
    }
}

fn check_inherited(state: &PlatformState, r: &InheritanceRecord, linked: &BTreeSet<PublicIdentity>) -> Result<String, String> {
    match r.verify() {
        Err(InheritanceFault::OwnerSignature) => return Err("owner authorization does not verify".into()),
        Err(InheritanceFault::EnclaveSignature) => return Err("predecessor enclave signature does not verify".into()),
        Ok(()) => {}
    }
    if !linked.contains(&r.successor) {
        return Err(format!("successor {} does not lead to the owner", r.successor));
    }
    let pred = state
        .registry
        .member_by_agent(&r.predecessor)
        .ok_or_else(|| format!("predecessor {} has no certificate", r.predecessor))?;
    if pred.cert.owner_seed_hash != r.owner_seed_hash {
        return Err("owner seed differs from the predecessor's certificate".into());
    }
    let gang = state
        .registry
        .gang(&pred.cert.gang_id)
        .ok_or_else(|| "predecessor gang unknown".to_string())?;
    if pred.cert.genesis_inputs(&gang.template).gang_config_hash != r.predecessor_gang_config {
        return Err("gang configuration differs from the predecessor's certificate".into());
    }
    Ok(format!("{} -> {} at {}", r.predecessor, r.successor, r.root_at_transfer))
}

fn check_purchased(
    state: &PlatformState,
    lineage: &BTreeSet<PublicIdentity>,
    trade_id: u64,
    seller: &PublicIdentity,
    artifact_hash: &Digest,
    referenced_root: &AnchoredRoot,
) -> Result<String, String> {
    let t = state.trades.get(&trade_id).ok_or_else(|| format!("trade {trade_id} unknown"))?;
    if t.status != TradeStatus::Settled {
        return Err(format!("trade {trade_id} is {}", t.status));
    }
    if !t.buyer.is_some_and(|b| lineage.contains(&b)) {
        return Err(format!("trade {trade_id} was not bought by this lineage"));
    }
    if t.seller != *seller {
        return Err(format!("trade {trade_id} has a different seller"));
    }
    let r = t.receipt.as_ref().ok_or_else(|| format!("trade {trade_id} settled without a receipt"))?;
    if r.artifact_hash != *artifact_hash || r.referenced_root != *referenced_root {
        return Err(format!("trade {trade_id} receipt names a different artifact"));
    }
    Ok(format!("trade {trade_id} from {seller}"))
}

/// Entry-level verification. Never accepts a manifest with a failing entry.
pub fn verify_trace(state: &PlatformState, manifest: &TraceManifest) -> LineageReport {
    // Walk inheritance links back from the owner using every record present,
    // so a broken record fails on its own without cutting off its ancestors.
    let mut linked: BTreeSet<PublicIdentity> = BTreeSet::from([manifest.owner]);
    loop {
        let before = linked.len();
        for e in &manifest.entries {
            if let TraceEntry::Inherited { record } = e {
                if linked.contains(&record.successor) {
                    linked.insert(record.predecessor);
                }
            }
        }
        if linked.len() == before {
            break;
        }
    }

    let mut verdicts = Vec::with_capacity(manifest.entries.len());
    let mut composition = Composition::default();
    let mut ranges: Vec<(u64, u64)> = Vec::new();
    let mut depth = 1;
    for (index, entry) in manifest.entries.iter().enumerate() {
        let result = match entry {
            TraceEntry::SelfProduced { start, end } => {
                composition.self_produced += 1;
                if start >= end || *end > manifest.owner_root.length {
                    Err(format!("range {start}..{end} outside 0..{}", manifest.owner_root.length))
                } else if ranges.iter().any(|(s, e)| start < e && s < end) {
                    Err(format!("range {start}..{end} overlaps an earlier range"))
                } else {
                    ranges.push((*start, *end));
                    Ok(format!("interactions {start}..{end}"))
                }
            }
            TraceEntry::Purchased {
                trade_id,
                seller,
                artifact_hash,
                referenced_root,
            } => {
                composition.purchased += 1;
                check_purchased(state, &linked, *trade_id, seller, artifact_hash, referenced_root)
            }
            TraceEntry::Inherited { record } => {
                composition.inherited += 1;
                let r = check_inherited(state, record, &linked);
                if r.is_ok() {
                    depth += 1;
                }
                r
            }
        };
        let (ok, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        verdicts.push(EntryVerdict {
            index,
            kind: entry.kind().to_string(),
            ok,
            detail,
        });
    }
    LineageReport {
        accepted: verdicts.iter().all(|v| v.ok),
        entries: verdicts,
        depth,
        composition,
    }
}
