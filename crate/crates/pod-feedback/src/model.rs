//! Domain types for video pod auction instances: pod constraints, agent
//! profiles, allocations, validation, and JSON (de)serialization.
//!
//! All monetary amounts are exact integer counts of micro-currency units;
//! no floating point enters any value comparison.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest permitted single amount, in micro-units. Keeps sums over any
/// instance far away from i64 overflow.
pub const MAX_MONEY_MICRO: i64 = 1_000_000_000_000_000;

/// Maximum number of agents per instance (agent sets are bitmasks).
pub const MAX_AGENTS: usize = 32;

/// Monetary amount in micro-currency units (1e-6 of one currency unit).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn micro(self) -> i64 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn min(self, other: Money) -> Money {
        Money(self.0.min(other.0))
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    pub fn clamp(self, lo: Money, hi: Money) -> Money {
        Money(self.0.clamp(lo.0, hi.0))
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for Money {
    /// Renders in currency units with 6 decimals, e.g. `10.000000`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{}{}.{:06}", sign, a / 1_000_000, a % 1_000_000)
    }
}

/// Pod-level allocation constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodSpec {
    pub positions: usize,
    pub max_ads: usize,
    pub max_duration_s: u32,
    /// Unordered pairs of agent indices that may not be shown together.
    pub exclusions: BTreeSet<(usize, usize)>,
}

impl PodSpec {
    pub fn excludes(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.exclusions.contains(&key)
    }
}

/// One candidate ad: its id, duration, per-position value and bid vectors.
///
/// A uniform value is encoded as a constant vector, one entry per position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentProfile {
    pub id: String,
    pub duration_s: u32,
    pub value: Vec<Money>,
    pub bid: Vec<Money>,
}

impl AgentProfile {
    /// True if the agent has positive value for some position.
    pub fn has_value_support(&self) -> bool {
        self.value.iter().any(|v| v.is_positive())
    }

    pub fn max_value(&self) -> Money {
        self.value.iter().copied().max().unwrap_or(Money::ZERO)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionInstance {
    pub pod: PodSpec,
    pub agents: Vec<AgentProfile>,
}

/// Per-agent bid vectors, indexed `[agent][position]`.
pub type BidProfile = Vec<Vec<Money>>;

/// Agent's standing with respect to the set of optimal allocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentStatus {
    /// Wins in every optimal allocation.
    StrictWinner,
    /// Loses in every optimal allocation.
    StrictLoser,
    /// Wins in some optimal allocation and loses in another.
    Tied,
}

/// Partial injective map from position index to agent index.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Allocation {
    pub placements: BTreeMap<usize, usize>,
}

impl Allocation {
    pub fn empty() -> Self {
        Allocation::default()
    }

    pub fn from_pairs(pairs: &[(usize, usize)]) -> Self {
        Allocation {
            placements: pairs.iter().copied().collect(),
        }
    }

    pub fn placed_agents(&self) -> BTreeSet<usize> {
        self.placements.values().copied().collect()
    }

    pub fn position_of(&self, agent: usize) -> Option<usize> {
        self.placements
            .iter()
            .find(|(_, &a)| a == agent)
            .map(|(&p, _)| p)
    }

    /// An agent wins in the allocation iff it is placed at a position where
    /// its value is positive.
    pub fn wins(&self, instance: &AuctionInstance, agent: usize) -> bool {
        self.position_of(agent)
            .map(|p| instance.agents[agent].value[p].is_positive())
            .unwrap_or(false)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("unknown agent id {0:?}")]
    UnknownAgent(String),
    #[error("allocation references unknown agent index {0}")]
    UnknownAgentIndex(usize),
    #[error("allocation references unknown position {0}")]
    UnknownPosition(usize),
    #[error("allocation is infeasible")]
    InfeasibleAllocation,
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

/// A scalar denotes a uniform per-position vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MoneySpec {
    Scalar(i64),
    Vector(Vec<i64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PodDoc {
    positions: usize,
    max_ads: usize,
    max_duration_s: u32,
    #[serde(default)]
    exclusions: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AgentDoc {
    id: String,
    duration_s: u32,
    value_micro: MoneySpec,
    bid_micro: MoneySpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceDoc {
    pod: PodDoc,
    agents: Vec<AgentDoc>,
}

fn expand(spec: &MoneySpec, positions: usize, path: &str) -> Result<Vec<Money>, ModelError> {
    let raw = match spec {
        MoneySpec::Scalar(v) => vec![*v; positions],
        MoneySpec::Vector(v) => {
            if v.len() != positions {
                return Err(invalid(
                    path,
                    format!("vector length {} != positions {}", v.len(), positions),
                ));
            }
            v.clone()
        }
    };
    for (i, &v) in raw.iter().enumerate() {
        if v < 0 {
            return Err(invalid(format!("{path}[{i}]"), "negative amount"));
        }
        if v > MAX_MONEY_MICRO {
            return Err(invalid(format!("{path}[{i}]"), "amount exceeds limit"));
        }
    }
    Ok(raw.into_iter().map(Money).collect())
}

fn compress(v: &[Money]) -> MoneySpec {
    if v.iter().all(|&m| m == v[0]) {
        MoneySpec::Scalar(v[0].micro())
    } else {
        MoneySpec::Vector(v.iter().map(|m| m.micro()).collect())
    }
}

impl AuctionInstance {
    pub fn parse(text: &str) -> Result<AuctionInstance, ModelError> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        AuctionInstance::from_doc(doc)
    }

    fn from_doc(doc: InstanceDoc) -> Result<AuctionInstance, ModelError> {
        let positions = doc.pod.positions;
        let mut ids = HashMap::new();
        let mut agents = Vec::new();
        for (i, a) in doc.agents.iter().enumerate() {
            let path = format!("agents[{i}]");
            if ids.insert(a.id.clone(), i).is_some() {
                return Err(invalid(format!("{path}.id"), "duplicate agent id"));
            }
            agents.push(AgentProfile {
                id: a.id.clone(),
                duration_s: a.duration_s,
                value: expand(&a.value_micro, positions, &format!("{path}.value_micro"))?,
                bid: expand(&a.bid_micro, positions, &format!("{path}.bid_micro"))?,
            });
        }
        let mut exclusions = BTreeSet::new();
        for (k, (a, b)) in doc.pod.exclusions.iter().enumerate() {
            let path = format!("pod.exclusions[{k}]");
            let ia = *ids
                .get(a)
                .ok_or_else(|| invalid(&path, format!("unknown agent id {a:?}")))?;
            let ib = *ids
                .get(b)
                .ok_or_else(|| invalid(&path, format!("unknown agent id {b:?}")))?;
            if ia == ib {
                return Err(invalid(&path, "exclusion pair must name distinct agents"));
            }
            exclusions.insert((ia.min(ib), ia.max(ib)));
        }
        let instance = AuctionInstance {
            pod: PodSpec {
                positions,
                max_ads: doc.pod.max_ads,
                max_duration_s: doc.pod.max_duration_s,
                exclusions,
            },
            agents,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let pod = &self.pod;
        if pod.positions == 0 {
            return Err(invalid("pod.positions", "must be positive"));
        }
        if pod.max_ads == 0 {
            return Err(invalid("pod.max_ads", "must be positive"));
        }
        if pod.max_ads > pod.positions {
            return Err(invalid("pod.max_ads", "must not exceed positions"));
        }
        if pod.max_duration_s == 0 {
            return Err(invalid("pod.max_duration_s", "must be positive"));
        }
        if self.agents.is_empty() {
            return Err(invalid("agents", "at least one agent required"));
        }
        if self.agents.len() > MAX_AGENTS {
            return Err(invalid("agents", format!("at most {MAX_AGENTS} agents")));
        }
        let mut seen = BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            let path = format!("agents[{i}]");
            if !seen.insert(a.id.clone()) {
                return Err(invalid(format!("{path}.id"), "duplicate agent id"));
            }
            if a.duration_s == 0 {
                return Err(invalid(format!("{path}.duration_s"), "nonpositive duration"));
            }
            if a.duration_s > pod.max_duration_s {
                return Err(invalid(
                    format!("{path}.duration_s"),
                    "exceeds pod max duration; agent could never win",
                ));
            }
            if a.value.len() != pod.positions || a.bid.len() != pod.positions {
                return Err(invalid(path, "value/bid vector length mismatch"));
            }
            if !a.has_value_support() {
                return Err(invalid(
                    format!("{path}.value_micro"),
                    "value must be positive at some position",
                ));
            }
            for p in 0..pod.positions {
                if a.value[p].0 < 0 || a.bid[p].0 < 0 {
                    return Err(invalid(format!("{path}[{p}]"), "negative amount"));
                }
                if a.value[p].0 > MAX_MONEY_MICRO || a.bid[p].0 > MAX_MONEY_MICRO {
                    return Err(invalid(format!("{path}[{p}]"), "amount exceeds limit"));
                }
                if a.bid[p] > a.value[p] {
                    return Err(invalid(
                        format!("{path}.bid_micro[{p}]"),
                        "bid exceeds value",
                    ));
                }
            }
        }
        for &(a, b) in &pod.exclusions {
            if a >= self.agents.len() || b >= self.agents.len() || a == b {
                return Err(invalid("pod.exclusions", "pair references unknown agents"));
            }
        }
        Ok(())
    }

    /// Canonical JSON serialization: uniform vectors collapse to scalars,
    /// exclusion pairs are sorted, key order is fixed.
    pub fn to_json(&self) -> String {
        let doc = InstanceDoc {
            pod: PodDoc {
                positions: self.pod.positions,
                max_ads: self.pod.max_ads,
                max_duration_s: self.pod.max_duration_s,
                exclusions: self
                    .pod
                    .exclusions
                    .iter()
                    .map(|&(a, b)| {
                        let (x, y) = (self.agents[a].id.clone(), self.agents[b].id.clone());
                        if x <= y {
                            (x, y)
                        } else {
                            (y, x)
                        }
                    })
                    .collect(),
            },
            agents: self
                .agents
                .iter()
                .map(|a| AgentDoc {
                    id: a.id.clone(),
                    duration_s: a.duration_s,
                    value_micro: compress(&a.value),
                    bid_micro: compress(&a.bid),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("instance serialization cannot fail")
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent_index(&self, id: &str) -> Result<usize, ModelError> {
        self.agents
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| ModelError::UnknownAgent(id.to_string()))
    }

    pub fn bid_profile(&self) -> BidProfile {
        self.agents.iter().map(|a| a.bid.clone()).collect()
    }

    pub fn value_profile(&self) -> BidProfile {
        self.agents.iter().map(|a| a.value.clone()).collect()
    }
}

/// True iff all allocation invariants hold against the instance:
/// injectivity, ad count, total duration, and exclusion pairs.
pub fn is_feasible(instance: &AuctionInstance, alloc: &Allocation) -> Result<bool, ModelError> {
    let pod = &instance.pod;
    let mut placed = BTreeSet::new();
    for (&pos, &agent) in &alloc.placements {
        if pos >= pod.positions {
            return Err(ModelError::UnknownPosition(pos));
        }
        if agent >= instance.agents.len() {
            return Err(ModelError::UnknownAgentIndex(agent));
        }
        if !placed.insert(agent) {
            return Ok(false);
        }
    }
    if placed.len() > pod.max_ads {
        return Ok(false);
    }
    let total: u64 = placed
        .iter()
        .map(|&a| instance.agents[a].duration_s as u64)
        .sum();
    if total > pod.max_duration_s as u64 {
        return Ok(false);
    }
    for &a in &placed {
        for &b in &placed {
            if a < b && pod.excludes(a, b) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Sum over placements of the placed agent's bid for its position.
pub fn allocation_value(
    instance: &AuctionInstance,
    bids: &BidProfile,
    alloc: &Allocation,
) -> Result<Money, ModelError> {
    if !is_feasible(instance, alloc)? {
        return Err(ModelError::InfeasibleAllocation);
    }
    Ok(alloc
        .placements
        .iter()
        .map(|(&pos, &agent)| bids[agent][pos])
        .sum())
}
