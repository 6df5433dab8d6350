//! Re-checks simulator invariants from a result and its decision trace.

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use prpm_core::sim::{Action, DecisionRecord, Policy, SimConfig, SimulationResult};

/// Returns a description of the first violated invariant.
pub fn audit(result: &SimulationResult, trace: &[DecisionRecord], cfg: &SimConfig) -> Result<(), String> {
    let mut busy: HashSet<usize> = HashSet::new();
    let mut queue: BTreeMap<String, (f64, DateTime<Utc>)> = BTreeMap::new();
    let mut treated: HashSet<String> = HashSet::new();

    for rec in trace {
        match rec.action {
            Action::Upsert => {
                let id = rec.case_id.clone().ok_or("upsert without case")?;
                if treated.contains(&id) {
                    return Err(format!("treated case {id} re-entered the queue"));
                }
                queue.insert(id, (rec.rank.ok_or("upsert without rank")?, rec.instant));
            }
            Action::Remove => {
                let id = rec.case_id.as_ref().ok_or("remove without case")?;
                queue.remove(id).ok_or_else(|| format!("removed {id} which was not queued"))?;
            }
            Action::Release => {
                let r = rec.resource.ok_or("release without resource")?;
                if !busy.remove(&r) {
                    return Err(format!("released idle resource {r}"));
                }
            }
            Action::Allocate => {
                let id = rec.case_id.clone().ok_or("allocate without case")?;
                let r = rec.resource.ok_or("allocate without resource")?;
                if r >= cfg.capacity || !busy.insert(r) {
                    return Err(format!("resource {r} double-booked or out of range"));
                }
                if !treated.insert(id.clone()) {
                    return Err(format!("case {id} treated twice"));
                }
                let (rank, at) = queue.remove(&id).ok_or_else(|| format!("allocated unqueued {id}"))?;
                for (other, (orank, oat)) in &queue {
                    let beats = *orank > rank
                        || (*orank == rank && (*oat < at || (*oat == at && *other < id)));
                    if beats {
                        return Err(format!("allocated {id} ({rank}) while {other} ({orank}) ranked higher"));
                    }
                }
                let p = rec.p_uout.ok_or("allocate without p_uout")?;
                let cate = rec.cate.ok_or("allocate without cate")?;
                if !(p > cfg.params.tau) {
                    return Err(format!("{id} treated with p_uout {p} <= tau"));
                }
                if cfg.policy == Policy::GainRanked && !(cate > 0.0 && rank > 0.0) {
                    return Err(format!("{id} treated with cate {cate}, gain {rank}"));
                }
            }
        }
        if busy.len() > cfg.capacity || rec.busy != busy.len() {
            return Err(format!("busy count {} vs capacity {} at seq {}", rec.busy, cfg.capacity, rec.seq));
        }
        if rec.queue_len != queue.len() {
            return Err(format!("queue length {} vs reconstructed {} at seq {}", rec.queue_len, queue.len(), rec.seq));
        }
    }

    let order_unique: HashSet<&String> = result.allocation_order.iter().collect();
    if order_unique.len() != result.allocation_order.len() {
        return Err("allocation order repeats a case".into());
    }
    let treated_records: Vec<_> = result.per_case_records.iter().filter(|r| r.treated).collect();
    if treated_records.len() != result.treated_cases || treated.len() != result.treated_cases {
        return Err("treated counts disagree".into());
    }
    if result.treated_cases > result.candidate_cases {
        return Err("more treated than candidate cases".into());
    }
    let ledger: f64 = result.per_case_records.iter().filter_map(|r| r.gain_at_treatment).sum();
    if ledger != result.total_gain {
        return Err(format!("ledger {ledger} != total_gain {}", result.total_gain));
    }
    if treated_records.iter().any(|r| r.gain_at_treatment.is_none()) {
        return Err("treated case without gain".into());
    }
    Ok(())
}
