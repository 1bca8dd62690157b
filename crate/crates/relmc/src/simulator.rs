//! Lifetime samplers: one-shot (non-repairable), the coupled
//! coarse/fine pairs MLMC needs, and the repairable failure/repair
//! discrete-event process.
//!
//! Coupling is by common randomness: the non-repairable coupled sampler
//! draws one component-lifetime vector and evaluates both cut-set
//! collections on it; the repairable coupled sampler runs one
//! trajectory and reads it at two nested stopping rules. In both cases
//! the fine collection is a superset of the coarse one, so the fine
//! failure time can only be earlier: `t_fine <= t_coarse` pathwise.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::system::{eval_lifetime, is_failed, CompId, CutSet, System};

/// A coarse/fine lifetime pair evaluated on common randomness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledSample {
    pub t_coarse: f64,
    pub t_fine: f64,
}

impl CoupledSample {
    /// Pathwise coupling invariant.
    pub fn is_ordered(&self) -> bool {
        self.t_fine <= self.t_coarse
    }
}

/// Outcome of one repairable trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairableSample {
    pub lifetime: f64,
    pub n_repairs: u64,
    /// Set when a horizon was supplied and reached before failure; the
    /// lifetime is then the `+inf` sentinel.
    pub truncated: bool,
}

/// Draw all component lifetimes (in id order) and evaluate the system
/// lifetime over `cuts`. Repair distributions are ignored.
pub fn sample_lifetime(sys: &System, cuts: &[CutSet], rng: &mut impl Rng) -> f64 {
    let times = draw_lifetimes(sys, rng);
    eval_lifetime(cuts, &times)
}

/// One component-lifetime vector, both cut-set collections evaluated on
/// it. `cuts_coarse` must be a subset of `cuts_fine`.
pub fn sample_coupled(
    sys: &System,
    cuts_coarse: &[CutSet],
    cuts_fine: &[CutSet],
    rng: &mut impl Rng,
) -> Result<CoupledSample> {
    check_nested(cuts_coarse, cuts_fine)?;
    let times = draw_lifetimes(sys, rng);
    let sample = CoupledSample {
        t_coarse: eval_lifetime(cuts_coarse, &times),
        t_fine: eval_lifetime(cuts_fine, &times),
    };
    debug_assert!(sample.is_ordered());
    Ok(sample)
}

fn draw_lifetimes(sys: &System, rng: &mut impl Rng) -> Vec<f64> {
    sys.components.iter().map(|c| c.lifetime.sample(rng)).collect()
}

fn check_nested(coarse: &[CutSet], fine: &[CutSet]) -> Result<()> {
    let fine_set: std::collections::HashSet<&CutSet> = fine.iter().collect();
    for c in coarse {
        if !fine_set.contains(c) {
            return Err(Error::Contract(format!(
                "coarse cut {:?} missing from fine collection",
                c.ids()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Repairable discrete-event process
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Fail,
    RepairComplete,
}

/// One event of a failure/repair trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEvent {
    pub time: f64,
    pub component: CompId,
    pub kind: EventKind,
}

impl Eq for TrajectoryEvent {}

impl Ord for TrajectoryEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap via reversed compare; ties broken by component id
        // for deterministic replay.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.component.cmp(&self.component))
    }
}

impl PartialOrd for TrajectoryEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-cut failed-member counters for O(members(c)) failure checks.
struct CutCounters<'a> {
    cuts: &'a [CutSet],
    /// cuts containing each component, indexed by id-1.
    membership: Vec<Vec<u32>>,
    down: Vec<u32>,
    /// Number of cuts currently fully failed; `failed()` is O(1).
    down_cuts: u32,
}

impl<'a> CutCounters<'a> {
    fn new(cuts: &'a [CutSet], n: usize) -> Self {
        let mut membership = vec![Vec::new(); n];
        for (ci, cut) in cuts.iter().enumerate() {
            for &id in cut.ids() {
                membership[(id - 1) as usize].push(ci as u32);
            }
        }
        CutCounters { cuts, membership, down: vec![0; cuts.len()], down_cuts: 0 }
    }

    /// Mark a component failed; true if some cut just became fully failed.
    fn fail(&mut self, id: CompId) -> bool {
        let mut failed = false;
        for &ci in &self.membership[(id - 1) as usize] {
            self.down[ci as usize] += 1;
            if self.down[ci as usize] as usize == self.cuts[ci as usize].len() {
                self.down_cuts += 1;
                failed = true;
            }
        }
        failed
    }

    fn repair(&mut self, id: CompId) {
        for &ci in &self.membership[(id - 1) as usize] {
            if self.down[ci as usize] as usize == self.cuts[ci as usize].len() {
                self.down_cuts -= 1;
            }
            self.down[ci as usize] -= 1;
        }
    }

    fn failed(&self) -> bool {
        self.down_cuts > 0
    }
}

/// Engine state for the alternating failure/repair process.
struct Trajectory {
    queue: BinaryHeap<TrajectoryEvent>,
    /// Last as-good-as-new instant per component (id-1 indexed).
    renewal_time: Vec<f64>,
    /// Time the component last went down, if currently down.
    down_since: Vec<Option<f64>>,
    /// Pending failure instant of each currently-up component.
    scheduled_fail: Vec<f64>,
    n_repairs: u64,
    now: f64,
}

impl Trajectory {
    fn start(sys: &System, rng: &mut impl Rng) -> Self {
        let n = sys.n_components();
        let mut queue = BinaryHeap::with_capacity(n);
        let mut scheduled_fail = vec![f64::INFINITY; n];
        for c in &sys.components {
            let t = c.lifetime.sample(rng);
            scheduled_fail[(c.id - 1) as usize] = t;
            if t.is_finite() {
                queue.push(TrajectoryEvent { time: t, component: c.id, kind: EventKind::Fail });
            }
        }
        Trajectory {
            queue,
            renewal_time: vec![0.0; n],
            down_since: vec![None; n],
            scheduled_fail,
            n_repairs: 0,
            now: 0.0,
        }
    }

    /// Advance one event, updating `counters`; returns the event, or
    /// `None` when the queue is exhausted (system never fails).
    fn step(
        &mut self,
        sys: &System,
        counters: &mut [&mut CutCounters],
        rng: &mut impl Rng,
    ) -> Option<(TrajectoryEvent, bool)> {
        let ev = self.queue.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        let idx = (ev.component - 1) as usize;
        let mut newly_failed = false;
        match ev.kind {
            EventKind::Fail => {
                self.down_since[idx] = Some(ev.time);
                for c in counters.iter_mut() {
                    if c.fail(ev.component) {
                        newly_failed = true;
                    }
                }
                let repair = sys
                    .component(ev.component)
                    .repair
                    .expect("repairable sampler requires repair distributions");
                let r = repair.sample(rng);
                if r.is_finite() {
                    self.queue.push(TrajectoryEvent {
                        time: ev.time + r,
                        component: ev.component,
                        kind: EventKind::RepairComplete,
                    });
                }
            }
            EventKind::RepairComplete => {
                self.down_since[idx] = None;
                self.renewal_time[idx] = ev.time;
                self.n_repairs += 1;
                for c in counters.iter_mut() {
                    c.repair(ev.component);
                }
                // As-good-as-new: fresh lifetime draw.
                let t = sys.component(ev.component).lifetime.sample(rng);
                self.scheduled_fail[idx] = ev.time + t;
                if t.is_finite() {
                    self.queue.push(TrajectoryEvent {
                        time: ev.time + t,
                        component: ev.component,
                        kind: EventKind::Fail,
                    });
                }
            }
        }
        Some((ev, newly_failed))
    }
}

/// Simulate the failure/repair process until some cut in `cuts` is
/// fully failed. With a horizon, trajectories still alive at the
/// horizon return the `+inf` sentinel and a truncation flag.
pub fn sample_lifetime_repairable(
    sys: &System,
    cuts: &[CutSet],
    rng: &mut impl Rng,
    horizon: Option<f64>,
) -> Result<RepairableSample> {
    check_repairable(sys)?;
    let mut counters = CutCounters::new(cuts, sys.n_components());
    let mut traj = Trajectory::start(sys, rng);
    loop {
        if let Some(h) = horizon {
            if traj.queue.peek().map_or(true, |ev| ev.time > h) {
                return Ok(RepairableSample {
                    lifetime: f64::INFINITY,
                    n_repairs: traj.n_repairs,
                    truncated: true,
                });
            }
        }
        match traj.step(sys, &mut [&mut counters], rng) {
            Some((ev, true)) => {
                debug_assert!(is_failed(cuts, &down_flags(&traj)));
                return Ok(RepairableSample {
                    lifetime: ev.time,
                    n_repairs: traj.n_repairs,
                    truncated: false,
                });
            }
            Some((_, false)) => {}
            None => {
                return Ok(RepairableSample {
                    lifetime: f64::INFINITY,
                    n_repairs: traj.n_repairs,
                    truncated: false,
                })
            }
        }
    }
}

/// One trajectory, two nested stopping rules: record the first failure
/// of the fine collection, keep simulating until the coarse collection
/// fails.
pub fn sample_coupled_repairable(
    sys: &System,
    cuts_coarse: &[CutSet],
    cuts_fine: &[CutSet],
    rng: &mut impl Rng,
) -> Result<CoupledSample> {
    check_repairable(sys)?;
    check_nested(cuts_coarse, cuts_fine)?;
    let mut fine = CutCounters::new(cuts_fine, sys.n_components());
    let mut coarse = CutCounters::new(cuts_coarse, sys.n_components());
    let mut traj = Trajectory::start(sys, rng);
    let mut t_fine: Option<f64> = None;
    loop {
        // Both counters see every event; each tracks its own failed state.
        match traj.step(sys, &mut [&mut fine, &mut coarse], rng) {
            Some((ev, _)) => {
                if t_fine.is_none() && fine.failed() {
                    t_fine = Some(ev.time);
                }
                if coarse.failed() {
                    let sample = CoupledSample {
                        t_coarse: ev.time,
                        t_fine: t_fine.expect("coarse subset failed before fine superset"),
                    };
                    debug_assert!(sample.is_ordered());
                    return Ok(sample);
                }
            }
            None => {
                let sample = CoupledSample {
                    t_coarse: f64::INFINITY,
                    t_fine: t_fine.unwrap_or(f64::INFINITY),
                };
                return Ok(sample);
            }
        }
    }
}

/// One repairable pilot replicate: simulate the full failure/repair
/// process until the first failure due to a cut in `cuts`, then assign
/// every component a failure time assuming no further repairs take
/// place. Components already down keep the instant they last went
/// down; still-functioning components keep their pending failure
/// instant, which given survival to the stopping time is a draw of the
/// conditional failure time since their last renewal.
///
/// Returns the per-component failure-time vector (id-1 indexed).
pub fn pilot_replicate_repairable(
    sys: &System,
    cuts: &[CutSet],
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    check_repairable(sys)?;
    let mut counters = CutCounters::new(cuts, sys.n_components());
    let mut traj = Trajectory::start(sys, rng);
    loop {
        match traj.step(sys, &mut [&mut counters], rng) {
            Some((_, true)) => break,
            Some((_, false)) => {}
            None => break,
        }
    }
    let times = sys
        .components
        .iter()
        .map(|c| {
            let idx = (c.id - 1) as usize;
            traj.down_since[idx].unwrap_or(traj.scheduled_fail[idx])
        })
        .collect();
    Ok(times)
}

fn check_repairable(sys: &System) -> Result<()> {
    if !sys.all_repairable() {
        return Err(Error::Contract(
            "repairable sampler requires a repair distribution on every component".into(),
        ));
    }
    Ok(())
}

fn down_flags(traj: &Trajectory) -> Vec<bool> {
    traj.down_since.iter().map(|d| d.is_some()).collect()
}
