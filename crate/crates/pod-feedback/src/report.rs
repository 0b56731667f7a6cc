//! Batch experiment runner and aggregation into per-(policy, bidder-count)
//! summary rows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run, DynamicsConfig, DynamicsTrace, InitialTargets, Outcome, Policy};
use crate::generator::{generate_instance, GeneratorError, GeneratorParams};

/// Summary of all traces sharing a policy and a bidder count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRow {
    pub policy: String,
    pub bidders: usize,
    pub instances: usize,
    pub avg_rounds: f64,
    pub se_rounds: f64,
    pub converged_pct: f64,
    pub cycled_pct: f64,
    pub max_rounds_pct: f64,
    pub avg_efficiency_pct: f64,
    pub se_efficiency: f64,
    /// average efficiency over cycled traces only; absent when none cycled
    pub avg_cycle_efficiency_pct: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchReport {
    pub seed: u64,
    pub instances_per_policy: u64,
    pub rows: Vec<BatchRow>,
}

/// Derives a per-instance seed for the random initial profit targets.
fn init_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Runs every (policy × instance) combination and aggregates. Traces are
/// collected in instance order, so aggregation is deterministic regardless
/// of worker scheduling.
pub fn run_batch(
    params: &GeneratorParams,
    instances: u64,
    policies: &[Policy],
    config: &DynamicsConfig,
) -> Result<BatchReport, GeneratorError> {
    let mut rows = Vec::new();
    for &policy in policies {
        let traces: Result<Vec<(usize, DynamicsTrace)>, GeneratorError> = (0..instances)
            .into_par_iter()
            .map(|k| {
                let inst = generate_instance(params, k)?;
                let trace = run(
                    &inst,
                    policy,
                    config,
                    InitialTargets::RandomTargets(init_seed(params.seed, k)),
                );
                Ok((inst.num_agents(), trace))
            })
            .collect();
        let traces = traces?;
        let mut bidder_counts: Vec<usize> =
            traces.iter().map(|(n, _)| *n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        bidder_counts.sort_unstable();
        for n in bidder_counts {
            let group: Vec<&DynamicsTrace> = traces
                .iter()
                .filter(|(b, _)| *b == n)
                .map(|(_, t)| t)
                .collect();
            rows.push(aggregate(policy, n, &group));
        }
    }
    Ok(BatchReport {
        seed: params.seed,
        instances_per_policy: instances,
        rows,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn aggregate(policy: Policy, bidders: usize, traces: &[&DynamicsTrace]) -> BatchRow {
    let count = traces.len();
    let rounds: Vec<f64> = traces.iter().map(|t| t.rounds.len() as f64).collect();
    let eff: Vec<f64> = traces.iter().map(|t| t.efficiency_percent).collect();
    let (avg_rounds, se_rounds) = mean_se(&rounds);
    let (avg_eff, se_eff) = mean_se(&eff);
    let of = |f: fn(&Outcome) -> bool| {
        100.0 * traces.iter().filter(|t| f(&t.outcome)).count() as f64 / count.max(1) as f64
    };
    let cycle_eff: Vec<f64> = traces
        .iter()
        .filter(|t| matches!(t.outcome, Outcome::Cycled(_)))
        .map(|t| t.efficiency_percent)
        .collect();
    BatchRow {
        policy: policy.name().to_string(),
        bidders,
        instances: count,
        avg_rounds,
        se_rounds,
        converged_pct: of(|o| matches!(o, Outcome::Converged)),
        cycled_pct: of(|o| matches!(o, Outcome::Cycled(_))),
        max_rounds_pct: of(|o| matches!(o, Outcome::MaxRounds)),
        avg_efficiency_pct: avg_eff,
        se_efficiency: se_eff,
        avg_cycle_efficiency_pct: if cycle_eff.is_empty() {
            None
        } else {
            Some(mean_se(&cycle_eff).0)
        },
    }
}

pub fn report_to_csv(report: &BatchReport) -> String {
    let mut out = String::from(
        "policy,bidders,instances,avg_rounds,se_rounds,converged_pct,cycled_pct,\
         max_rounds_pct,avg_efficiency_pct,se_efficiency,avg_cycle_efficiency_pct,seed\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.2},{:.2},{:.2},{:.4},{:.4},{},{}\n",
            r.policy,
            r.bidders,
            r.instances,
            r.avg_rounds,
            r.se_rounds,
            r.converged_pct,
            r.cycled_pct,
            r.max_rounds_pct,
            r.avg_efficiency_pct,
            r.se_efficiency,
            r.avg_cycle_efficiency_pct
                .map(|v| format!("{v:.4}"))
                .unwrap_or_default(),
            report.seed,
        ));
    }
    out
}

/// Plot-ready CSV of one trace: round, agent, bid (max across positions,
/// in currency units), status.
pub fn trace_to_csv(trace: &DynamicsTrace) -> String {
    let mut out = String::from("round,agent,bid,status\n");
    for (r, round) in trace.rounds.iter().enumerate() {
        for (i, bids) in round.bids.iter().enumerate() {
            let bid = bids.iter().copied().max().unwrap_or(0);
            let status = round.statuses.get(i).map(String::as_str).unwrap_or("");
            out.push_str(&format!(
                "{},{},{}.{:06},{}\n",
                r + 1,
                i,
                bid / 1_000_000,
                (bid % 1_000_000).abs(),
                status
            ));
        }
    }
    out
}
