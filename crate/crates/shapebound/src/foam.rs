//! Focus-of-attention scheduling of refinement cycles across hypotheses.
//!
//! Every hypothesis starts with one cheap bound pair. Each cycle then picks
//! the hypothesis expected to shrink the remaining workload the most,
//! refines it once, and updates the discard threshold `gamma` (the maximum
//! lower bound seen). A hypothesis is discarded only when its upper bound
//! falls strictly below `gamma`, so the set of survivors always contains
//! every evidence maximizer. The run ends when a single hypothesis beats
//! every other's upper bound, when all survivors are fully refined (they
//! are then provably indistinguishable on this input), or when an optional
//! cycle budget runs out.
//!
//! The workload measure is the potential `P = sum over active hypotheses of
//! (upper - gamma)`. The expected reduction from refining a hypothesis is
//! driven by an exponentially weighted moving average of its past margin
//! reductions; the alternative strategy of always refining the hypothesis
//! with the greatest upper bound is also provided.

use crate::bounds::{BoundParams, BoundsError, HypothesisBounds};
use crate::hypotheses::{Hypothesis, PriorTableSet, TransformedPrior};
use crate::summaries::SummaryTables;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FoamError {
    #[error("the hypothesis list is empty")]
    NoHypotheses,
    #[error("hypothesis {0} references a prior missing from the table set")]
    MissingPrior(u32),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Selection strategy for the next hypothesis to refine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Greatest expected potential reduction (the default heuristic).
    PotentialReduction,
    /// Greatest current upper bound.
    MaxUpper,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoamConfig {
    /// EWMA weight on the previous margin-reduction estimate.
    pub alpha: f64,
    /// Fraction of the initial margin seeding the estimate.
    pub beta: f64,
    /// Bucket ratio of the per-hypothesis margin queues.
    pub rho: f64,
    /// Margin floor relative to `delta_max` below which a leaf is resolved.
    pub m_floor_rel: f64,
    pub strategy: Strategy,
    /// Optional refinement-cycle budget.
    pub max_cycles: Option<u64>,
    /// Refine up to this many hypotheses concurrently per batch.
    pub parallel: Option<usize>,
    /// Record a per-cycle trace (adds memory on large runs).
    pub record_trace: bool,
}

impl Default for FoamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 0.25,
            rho: 1.2,
            m_floor_rel: 1e-6,
            strategy: Strategy::PotentialReduction,
            max_cycles: None,
            parallel: None,
            record_trace: false,
        }
    }
}

/// EWMA update of the expected margin reduction:
/// `pred_next = alpha * pred + (1 - alpha) * observed`.
pub fn predict_margin_reduction(pred: f64, observed: f64, alpha: f64) -> f64 {
    debug_assert!(observed >= 0.0);
    alpha * pred + (1.0 - alpha) * observed
}

/// Expected reduction of the potential if this hypothesis is refined. The
/// lower bound is predicted to rise by half the expected margin reduction;
/// if that pushes it past `gamma`, every active hypothesis' term shrinks.
pub fn expected_potential_reduction(
    lower: f64,
    margin_pred: f64,
    gamma: f64,
    active_count: usize,
) -> f64 {
    let half = margin_pred / 2.0;
    let dgamma = (lower + half - gamma).max(0.0);
    if dgamma > 0.0 {
        half + active_count as f64 * dgamma
    } else {
        half
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// One hypothesis' lower bound strictly exceeds every other upper bound.
    UniqueOptimum,
    /// Every survivor is fully refined with its upper bound still at or
    /// above `gamma`; the input cannot separate them.
    IndistinguishableSet,
    /// The cycle budget ran out; bounds are still sound but partial.
    BudgetExhausted,
}

/// Per-cycle trace record (the JSON-lines schema of the run trace).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub hypothesis_id: u32,
    pub lower: f64,
    pub upper: f64,
    pub gamma: f64,
    pub active_count: usize,
}

/// A surviving hypothesis with its final bounds.
pub struct Solution {
    pub hypothesis_id: u32,
    pub lower: f64,
    pub upper: f64,
    pub lower_units: i128,
    pub upper_units: i128,
    pub cycles: u64,
    pub fully_refined: bool,
    pub bounds: HypothesisBounds,
}

pub struct FoamResult {
    pub status: RunStatus,
    pub gamma: f64,
    pub gamma_units: i128,
    /// Survivors, ascending hypothesis id.
    pub solutions: Vec<Solution>,
    /// Refinement cycles spent per hypothesis, indexed by hypothesis id.
    pub cycles_per_hypothesis: Vec<u64>,
    /// Bound pairs evaluated per hypothesis, indexed by hypothesis id.
    pub bound_pairs_per_hypothesis: Vec<u64>,
    /// Bound pairs evaluated across all hypotheses (including discarded).
    pub total_bound_pairs: u64,
    pub refine_cycles: u64,
    pub trace: Option<Vec<TraceRecord>>,
    /// Potential after each cycle (exact lattice units); recorded with the
    /// trace.
    pub potential_history: Vec<i128>,
}

impl FoamResult {
    /// Average bound pairs per hypothesis over `n` hypotheses.
    pub fn tau(&self, n: usize) -> f64 {
        self.total_bound_pairs as f64 / n as f64
    }
}

struct Entry {
    bounds: Option<HypothesisBounds>,
    /// Cached copies of the bound totals so the scheduler never has to
    /// touch `bounds` (which a batch worker may be holding).
    lower_units: i128,
    upper_units: i128,
    margin_pred: f64,
    cycles: u64,
    sched_version: u32,
    alive: bool,
    parked: bool,
}

/// Max-heap key: strategy key, ties broken toward the lowest hypothesis id.
struct SchedKey {
    key: f64,
    id: u32,
    version: u32,
}

impl PartialEq for SchedKey {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.id == other.id
    }
}
impl Eq for SchedKey {}
impl PartialOrd for SchedKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SchedKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .partial_cmp(&other.key)
            .expect("scheduler keys are never NaN")
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Scheduler<'a> {
    entries: Vec<Entry>,
    sched: BinaryHeap<SchedKey>,
    /// Min-heap of (upper bound, id) records for eager discards as gamma
    /// grows; entries are lazy (every refinement pushes a fresh record).
    uppers: BinaryHeap<std::cmp::Reverse<(i128, u32)>>,
    gamma_units: i128,
    active_count: usize,
    sum_upper_units: i128,
    unit: f64,
    config: &'a FoamConfig,
}

impl<'a> Scheduler<'a> {
    fn lower_f(&self, id: u32) -> f64 {
        self.entries[id as usize].lower_units as f64 * self.unit
    }

    fn upper_f(&self, id: u32) -> f64 {
        self.entries[id as usize].upper_units as f64 * self.unit
    }

    fn gamma_f(&self) -> f64 {
        self.gamma_units as f64 * self.unit
    }

    fn strategy_key(&self, id: u32) -> f64 {
        let e = &self.entries[id as usize];
        match self.config.strategy {
            Strategy::PotentialReduction => expected_potential_reduction(
                self.lower_f(id),
                e.margin_pred,
                self.gamma_f(),
                self.active_count,
            ),
            Strategy::MaxUpper => self.upper_f(id),
        }
    }

    fn push_sched(&mut self, id: u32) {
        let key = self.strategy_key(id);
        let version = self.entries[id as usize].sched_version;
        self.sched.push(SchedKey { key, id, version });
    }

    fn discard(&mut self, id: u32) {
        let e = &mut self.entries[id as usize];
        if e.alive {
            e.alive = false;
            self.active_count -= 1;
            self.sum_upper_units -= e.upper_units;
        }
    }

    /// Discards every hypothesis whose upper bound sits strictly below
    /// gamma. Each entry's current upper bound is always present in the
    /// record heap, so after this pass all survivors satisfy
    /// `upper >= gamma`.
    fn purge(&mut self) {
        while let Some(std::cmp::Reverse((upper, id))) = self.uppers.peek().copied() {
            if upper >= self.gamma_units {
                break;
            }
            self.uppers.pop();
            let e = &self.entries[id as usize];
            // A stale record never understates the live value, so any
            // record below gamma proves the entry is below gamma.
            if e.alive {
                self.discard(id);
            }
        }
    }

    fn raise_gamma(&mut self, candidate: i128) {
        if candidate > self.gamma_units {
            self.gamma_units = candidate;
            self.purge();
        }
    }

    /// `P = sum over active of (upper - gamma)`, exact.
    fn potential_units(&self) -> i128 {
        self.sum_upper_units - (self.active_count as i128) * self.gamma_units
    }

    /// Pops the next refinable, still-viable hypothesis. Entries whose
    /// upper bound has fallen strictly below gamma are discarded on the
    /// way (the lazy re-check of the selection loop).
    fn pop_refinable(&mut self) -> Option<u32> {
        while let Some(SchedKey { id, version, .. }) = self.sched.pop() {
            let e = &self.entries[id as usize];
            if !e.alive || e.parked || version != e.sched_version {
                continue;
            }
            if e.upper_units < self.gamma_units {
                self.discard(id);
                continue;
            }
            return Some(id);
        }
        None
    }
}

/// Runs the full selection-refinement loop over a hypothesis set.
pub fn run(
    hypotheses: &[Hypothesis],
    img_tables: &SummaryTables,
    priors: &PriorTableSet,
    config: &FoamConfig,
) -> Result<FoamResult, FoamError> {
    if hypotheses.is_empty() {
        return Err(FoamError::NoHypotheses);
    }
    let params = BoundParams { rho: config.rho, m_floor_rel: config.m_floor_rel };
    let unit = img_tables.policy().unit();

    // Resolve each hypothesis' prior once.
    let prior_refs: Vec<&TransformedPrior> = hypotheses
        .iter()
        .map(|h| {
            priors
                .get(h.class, h.transform.sx, h.transform.sy)
                .ok_or(FoamError::MissingPrior(h.id))
        })
        .collect::<Result<_, _>>()?;

    // Initialization: one bound pair per hypothesis, then gamma.
    let mut entries = Vec::with_capacity(hypotheses.len());
    let mut gamma_units = i128::MIN;
    for (i, h) in hypotheses.iter().enumerate() {
        let tp = prior_refs[i];
        let bounds = HypothesisBounds::init(
            h.id,
            img_tables,
            &tp.tables,
            h.pose(tp),
            tp.z_units,
            &params,
        )?;
        gamma_units = gamma_units.max(bounds.lower_units());
        entries.push(Entry {
            lower_units: bounds.lower_units(),
            upper_units: bounds.upper_units(),
            bounds: Some(bounds),
            margin_pred: 0.0,
            cycles: 0,
            sched_version: 0,
            alive: true,
            parked: false,
        });
    }

    let mut sched = Scheduler {
        entries,
        sched: BinaryHeap::new(),
        uppers: BinaryHeap::new(),
        gamma_units,
        active_count: 0,
        sum_upper_units: 0,
        unit,
        config,
    };

    // Survivors enter the queue with their seeded margin estimate; the
    // rest are discarded outright.
    for i in 0..sched.entries.len() {
        let e = &sched.entries[i];
        let (lower, upper) = (e.lower_units, e.upper_units);
        let refined = e.bounds.as_ref().unwrap().fully_refined();
        debug_assert!(lower <= upper);
        if upper < sched.gamma_units {
            sched.entries[i].alive = false;
            continue;
        }
        sched.active_count += 1;
        sched.sum_upper_units += upper;
        sched.uppers.push(std::cmp::Reverse((upper, i as u32)));
        sched.entries[i].margin_pred = config.beta * ((upper - lower) as f64 * unit);
        if refined {
            sched.entries[i].parked = true;
        }
    }
    for i in 0..sched.entries.len() {
        if sched.entries[i].alive && !sched.entries[i].parked {
            sched.push_sched(i as u32);
        }
    }

    let mut trace = config.record_trace.then(Vec::new);
    let mut potential_history = Vec::new();
    if config.record_trace {
        potential_history.push(sched.potential_units());
    }

    let batch_width = config.parallel.unwrap_or(1).max(1);
    let mut cycle: u64 = 0;
    let status = loop {
        if sched.active_count <= 1 {
            break RunStatus::UniqueOptimum;
        }
        if config.max_cycles.is_some_and(|mc| cycle >= mc) {
            break RunStatus::BudgetExhausted;
        }

        // Select up to a batch of refinable hypotheses.
        let remaining = config.max_cycles.map_or(batch_width as u64, |mc| mc - cycle);
        let take = batch_width.min(remaining as usize);
        let mut batch = Vec::with_capacity(take);
        while batch.len() < take {
            match sched.pop_refinable() {
                Some(id) => batch.push(id),
                None => break,
            }
        }
        if batch.is_empty() {
            // Everything still active is fully refined.
            break RunStatus::IndistinguishableSet;
        }

        // Refine each selected hypothesis once; batches run in parallel,
        // each worker owning its bounds exclusively.
        struct WorkItem {
            id: u32,
            margin_before: i128,
            upper_before: i128,
            bounds: HypothesisBounds,
        }
        let mut work: Vec<WorkItem> = batch
            .iter()
            .map(|&id| {
                let bounds = sched.entries[id as usize].bounds.take().unwrap();
                WorkItem {
                    id,
                    margin_before: bounds.margin_units(),
                    upper_before: bounds.upper_units(),
                    bounds,
                }
            })
            .collect();
        if work.len() > 1 {
            use rayon::prelude::*;
            work.par_iter_mut().for_each(|item| {
                let tp = prior_refs[item.id as usize];
                item.bounds.refine_once(img_tables, &tp.tables);
            });
        } else {
            let item = &mut work[0];
            let tp = prior_refs[item.id as usize];
            item.bounds.refine_once(img_tables, &tp.tables);
        }

        // Merge results sequentially: predictors, queue keys, gamma.
        for WorkItem { id, margin_before, upper_before, bounds: b } in work {
            let new_lower = b.lower_units();
            let new_upper = b.upper_units();
            let refined = b.fully_refined();
            cycle += 1;
            {
                let e = &mut sched.entries[id as usize];
                let observed = (margin_before - b.margin_units()).max(0) as f64 * unit;
                e.margin_pred = predict_margin_reduction(e.margin_pred, observed, config.alpha);
                e.cycles += 1;
                e.sched_version += 1;
                e.bounds = Some(b);
                if !e.alive {
                    // A purge triggered by an earlier batch member already
                    // discarded this hypothesis; its refined bounds can
                    // only be tighter, so the discard stands.
                    continue;
                }
                sched.sum_upper_units += new_upper - upper_before;
                e.lower_units = new_lower;
                e.upper_units = new_upper;
            }
            sched.uppers.push(std::cmp::Reverse((new_upper, id)));
            // The refinement may have pushed this hypothesis' own upper
            // bound below gamma; purge keeps the active set tight.
            sched.purge();
            if sched.entries[id as usize].alive {
                if refined {
                    sched.entries[id as usize].parked = true;
                } else {
                    sched.push_sched(id);
                }
            }
            sched.raise_gamma(new_lower);
            if let Some(t) = trace.as_mut() {
                t.push(TraceRecord {
                    cycle,
                    hypothesis_id: hypotheses[id as usize].id,
                    lower: new_lower as f64 * unit,
                    upper: new_upper as f64 * unit,
                    gamma: sched.gamma_f(),
                    active_count: sched.active_count,
                });
            }
            if config.record_trace {
                potential_history.push(sched.potential_units());
            }
        }
    };

    // Final solution set: survivors whose upper bound still reaches gamma.
    sched.purge();
    let gamma_units = sched.gamma_units;
    let mut solutions = Vec::new();
    let mut cycles_per_hypothesis = vec![0u64; sched.entries.len()];
    let mut bound_pairs_per_hypothesis = vec![0u64; sched.entries.len()];
    let mut total_bound_pairs = 0u64;
    for (i, e) in sched.entries.iter_mut().enumerate() {
        let b = e.bounds.as_ref().unwrap();
        cycles_per_hypothesis[i] = e.cycles;
        bound_pairs_per_hypothesis[i] = b.bound_pairs();
        total_bound_pairs += b.bound_pairs();
        if e.alive && b.upper_units() >= gamma_units {
            let b = e.bounds.take().unwrap();
            solutions.push(Solution {
                hypothesis_id: hypotheses[i].id,
                lower: b.lower_units() as f64 * unit,
                upper: b.upper_units() as f64 * unit,
                lower_units: b.lower_units(),
                upper_units: b.upper_units(),
                cycles: e.cycles,
                fully_refined: b.fully_refined(),
                bounds: b,
            });
        }
    }

    let status = match status {
        RunStatus::BudgetExhausted => RunStatus::BudgetExhausted,
        _ if solutions.len() == 1 => RunStatus::UniqueOptimum,
        _ => RunStatus::IndistinguishableSet,
    };

    Ok(FoamResult {
        status,
        gamma: gamma_units as f64 * unit,
        gamma_units,
        solutions,
        cycles_per_hypothesis,
        bound_pairs_per_hypothesis,
        total_bound_pairs,
        refine_cycles: cycle,
        trace,
        potential_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewma_examples() {
        // initialization: a quarter of the initial margin
        let m0 = 8.0;
        assert_eq!(0.25 * m0, 2.0);
        // fixed point
        assert_eq!(predict_margin_reduction(2.0, 2.0, 0.9), 2.0);
        // decay toward zero observations
        assert!((predict_margin_reduction(2.0, 0.0, 0.9) - 1.8).abs() < 1e-15);
    }

    #[test]
    fn potential_reduction_examples() {
        // below gamma: only the hypothesis' own term shrinks
        assert_eq!(expected_potential_reduction(5.0, 2.0, 10.0, 3), 1.0);
        // crossing gamma: every active term shrinks
        assert_eq!(expected_potential_reduction(10.0, 2.0, 10.0, 3), 4.0);
        // exactly at gamma: the otherwise-branch
        assert_eq!(expected_potential_reduction(9.0, 2.0, 10.0, 3), 1.0);
    }

    #[test]
    fn sched_key_orders_by_key_then_lowest_id() {
        let mut heap = BinaryHeap::new();
        heap.push(SchedKey { key: 1.0, id: 7, version: 0 });
        heap.push(SchedKey { key: 2.0, id: 9, version: 0 });
        heap.push(SchedKey { key: 2.0, id: 3, version: 0 });
        assert_eq!(heap.pop().unwrap().id, 3);
        assert_eq!(heap.pop().unwrap().id, 9);
        assert_eq!(heap.pop().unwrap().id, 7);
    }
}
