//! System representation: a two-terminal directed acyclic network of
//! unreliable components, its minimal cut sets, and cut-set based
//! evaluation of system status and lifetime.
//!
//! A set of components is a cut set if failing all of them disconnects
//! source from sink. The system lifetime is
//! `min over cut sets of (max over members of component failure time)`.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::dist::LifetimeDist;
use crate::error::{Error, Result};

pub type CompId = u32;

/// Default cap on the number of cut sets (and intermediate hitting sets)
/// before enumeration aborts with a capacity error.
pub const DEFAULT_CUTSET_CAP: usize = 1_000_000;

/// A node of the two-terminal network. Terminals are perfectly reliable
/// and are not components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    Source,
    Sink,
    Comp(CompId),
}

/// Directed acyclic two-terminal network. Nodes are unreliable, edges
/// perfectly reliable. Component ids run 1..=n_components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub n_components: u32,
    pub edges: Vec<(Node, Node)>,
}

/// A set of component ids, stored sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CutSet(Vec<CompId>);

impl CutSet {
    pub fn new(mut ids: Vec<CompId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        CutSet(ids)
    }

    pub fn ids(&self) -> &[CompId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: CompId) -> bool {
        self.0.binary_search(&id).is_ok()
    }
}

/// Lifetime model for one component, with an optional repair clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentModel {
    pub id: CompId,
    pub lifetime: LifetimeDist,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair: Option<LifetimeDist>,
}

/// A system: network, per-component models, and the minimal cut sets in
/// canonical order (by size, then lexicographic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct System {
    pub network: Network,
    pub components: Vec<ComponentModel>,
    pub cutsets: Vec<CutSet>,
}

impl System {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, id: CompId) -> &ComponentModel {
        &self.components[(id - 1) as usize]
    }

    pub fn all_repairable(&self) -> bool {
        self.components.iter().all(|c| c.repair.is_some())
    }
}

/// System failure time given per-component failure times (indexed by
/// id-1): min over cut sets of the max member failure time. An empty
/// cut-set list yields `+inf`.
pub fn eval_lifetime(cuts: &[CutSet], failure_times: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for cut in cuts {
        let mut worst = f64::NEG_INFINITY;
        for &id in cut.ids() {
            let t = failure_times[(id - 1) as usize];
            if t > worst {
                worst = t;
            }
            if worst >= best {
                break;
            }
        }
        if worst < best {
            best = worst;
        }
    }
    best
}

/// True iff some cut set has all members failed. `failed` is indexed by
/// id-1, true meaning the component is down.
pub fn is_failed(cuts: &[CutSet], failed: &[bool]) -> bool {
    cuts.iter()
        .any(|cut| cut.ids().iter().all(|&id| failed[(id - 1) as usize]))
}

/// Sort cut sets into the canonical order: by size, then lexicographic.
pub fn canonical_sort(cuts: &mut Vec<CutSet>) {
    cuts.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
}

// ---------------------------------------------------------------------------
// Graph machinery
// ---------------------------------------------------------------------------

struct Adjacency {
    /// Index 0 = source, 1 = sink, 2 + (id-1) = component node.
    out: Vec<Vec<usize>>,
    n_nodes: usize,
}

fn node_index(node: Node) -> usize {
    match node {
        Node::Source => 0,
        Node::Sink => 1,
        Node::Comp(id) => 1 + id as usize,
    }
}

impl Adjacency {
    fn build(net: &Network) -> Result<Self> {
        let n_nodes = net.n_components as usize + 2;
        let mut out = vec![Vec::new(); n_nodes];
        for &(a, b) in &net.edges {
            for n in [a, b] {
                if let Node::Comp(id) = n {
                    if id == 0 || id > net.n_components {
                        return Err(Error::Structure(format!(
                            "edge references component {id} out of range 1..={}",
                            net.n_components
                        )));
                    }
                }
            }
            out[node_index(a)].push(node_index(b));
        }
        Ok(Adjacency { out, n_nodes })
    }

    fn is_acyclic(&self) -> bool {
        // Kahn's algorithm.
        let mut indeg = vec![0usize; self.n_nodes];
        for targets in &self.out {
            for &t in targets {
                indeg[t] += 1;
            }
        }
        let mut queue: Vec<usize> = (0..self.n_nodes).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &t in &self.out[v] {
                indeg[t] -= 1;
                if indeg[t] == 0 {
                    queue.push(t);
                }
            }
        }
        seen == self.n_nodes
    }

    /// Nodes reachable from `start`, optionally blocking failed components.
    fn reachable(&self, start: usize, blocked: impl Fn(usize) -> bool) -> Vec<bool> {
        let mut seen = vec![false; self.n_nodes];
        if blocked(start) {
            return seen;
        }
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &t in &self.out[v] {
                if !seen[t] && !blocked(t) {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }
}

/// Source-to-sink connectivity through working components only.
/// `failed` is indexed by id-1.
pub fn connected(net: &Network, failed: &[bool]) -> bool {
    let adj = Adjacency::build(net).expect("invalid network");
    let blocked = |v: usize| v >= 2 && failed[v - 2];
    adj.reachable(0, blocked)[1]
}

// ---------------------------------------------------------------------------
// Bitsets over component ids
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq)]
struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    fn new(n: usize) -> Self {
        BitSet { words: vec![0; (n + 63) / 64] }
    }

    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn is_subset(&self, other: &BitSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    fn intersects(&self, other: &BitSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w & (1 << b) != 0).map(move |b| wi * 64 + b)
        })
    }
}

// ---------------------------------------------------------------------------
// Minimal cut-set enumeration
// ---------------------------------------------------------------------------

/// Enumerate the minimal source-sink vertex cut sets of a two-terminal
/// DAG, in canonical order. Terminals are excluded from cuts.
///
/// Strategy: enumerate all simple source-to-sink paths as component
/// sets, then compute the minimal hitting sets of that family by
/// incremental dualization. Aborts with a capacity error when the
/// working collection exceeds `cap`.
pub fn enumerate_min_cutsets(net: &Network, cap: usize) -> Result<Vec<CutSet>> {
    let adj = Adjacency::build(net)?;
    if !adj.is_acyclic() {
        return Err(Error::Structure("network contains a cycle".into()));
    }
    let from_source = adj.reachable(0, |_| false);
    if !from_source[1] {
        return Err(Error::Structure("sink not reachable from source".into()));
    }
    // Reverse reachability to the sink.
    let mut rev = vec![Vec::new(); adj.n_nodes];
    for (v, targets) in adj.out.iter().enumerate() {
        for &t in targets {
            rev[t].push(v);
        }
    }
    let rev_adj = Adjacency { out: rev, n_nodes: adj.n_nodes };
    let to_sink = rev_adj.reachable(1, |_| false);
    for id in 1..=net.n_components {
        let v = 1 + id as usize;
        if !from_source[v] || !to_sink[v] {
            return Err(Error::Structure(format!(
                "component {id} lies on no source-sink path"
            )));
        }
    }

    let n = net.n_components as usize;
    let paths = collect_paths(&adj, n, cap)?;
    if paths.iter().any(|p| p.count() == 0) {
        // A component-free path exists: nothing can disconnect the terminals.
        return Ok(Vec::new());
    }
    let mut cuts = minimal_hitting_sets(&paths, n, cap)?;
    canonical_sort(&mut cuts);
    Ok(cuts)
}

/// DFS over the DAG collecting each simple source-sink path as the
/// bitset of component nodes it visits. Supersets are dropped since they
/// do not change the hitting sets.
fn collect_paths(adj: &Adjacency, n: usize, cap: usize) -> Result<Vec<BitSet>> {
    let mut paths: Vec<BitSet> = Vec::new();
    let mut current = BitSet::new(n);
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    while let Some(frame) = stack.last_mut() {
        let v = frame.0;
        if v == 1 {
            if !paths.iter().any(|p| p.is_subset(&current)) {
                paths.retain(|p| !current.is_subset(p));
                paths.push(current.clone());
            }
            if paths.len() > cap {
                return Err(Error::Capacity(format!("more than {cap} distinct paths")));
            }
            stack.pop();
            continue;
        }
        if frame.1 < adj.out[v].len() {
            let t = adj.out[v][frame.1];
            frame.1 += 1;
            if t >= 2 {
                current.set(t - 2);
            }
            stack.push((t, 0));
        } else {
            stack.pop();
            if v >= 2 {
                // Unset on backtrack; paths in a DAG are simple so the
                // bit was set exactly once.
                current.words[(v - 2) / 64] &= !(1 << ((v - 2) % 64));
            }
        }
    }
    Ok(paths)
}

/// Berge-style incremental dualization: fold the path sets into the
/// collection of minimal hitting sets.
fn minimal_hitting_sets(sets: &[BitSet], n: usize, cap: usize) -> Result<Vec<CutSet>> {
    // Smaller sets first keeps intermediate collections tighter.
    let mut order: Vec<&BitSet> = sets.iter().collect();
    order.sort_by_key(|s| s.count());

    let mut hitters: Vec<BitSet> = Vec::new();
    for (step, set) in order.iter().enumerate() {
        if step == 0 {
            for i in set.iter_ones() {
                let mut h = BitSet::new(n);
                h.set(i);
                hitters.push(h);
            }
            if hitters.len() > cap {
                return Err(Error::Capacity(format!(
                    "more than {cap} cut sets during enumeration"
                )));
            }
            continue;
        }
        let (hit, miss): (Vec<BitSet>, Vec<BitSet>) =
            hitters.into_iter().partition(|h| h.intersects(set));
        let mut next = hit;
        for h in &miss {
            for i in set.iter_ones() {
                let mut cand = h.clone();
                cand.set(i);
                // Keep only if no existing minimal hitter is contained in it.
                if !next.iter().any(|k| k.is_subset(&cand)) {
                    next.retain(|k| !cand.is_subset(k));
                    next.push(cand);
                }
            }
        }
        if next.len() > cap {
            return Err(Error::Capacity(format!(
                "more than {cap} cut sets during enumeration"
            )));
        }
        hitters = next;
    }
    Ok(hitters
        .into_iter()
        .map(|h| CutSet::new(h.iter_ones().map(|i| i as CompId + 1).collect()))
        .collect())
}

/// Brute-force minimal cut sets by testing all 2^n failure patterns.
/// Independent of the path/dualization route; intended for validation
/// and small systems (n <= 20).
pub fn brute_force_min_cutsets(net: &Network) -> Result<Vec<CutSet>> {
    let n = net.n_components as usize;
    if n > 25 {
        return Err(Error::Capacity(format!("brute force limited to n <= 25, got {n}")));
    }
    let adj = Adjacency::build(net)?;
    let total = 1usize << n;
    let mut disconnects = vec![false; total];
    let mut failed = vec![false; n];
    for mask in 0..total {
        for (i, f) in failed.iter_mut().enumerate() {
            *f = mask & (1 << i) != 0;
        }
        let blocked = |v: usize| v >= 2 && failed[v - 2];
        disconnects[mask] = !adj.reachable(0, blocked)[1];
    }
    let mut cuts = Vec::new();
    for mask in 0..total {
        if !disconnects[mask] {
            continue;
        }
        let minimal = (0..n)
            .filter(|&i| mask & (1 << i) != 0)
            .all(|i| !disconnects[mask & !(1 << i)]);
        if minimal {
            cuts.push(CutSet::new(
                (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| i as CompId + 1).collect(),
            ));
        }
    }
    canonical_sort(&mut cuts);
    Ok(cuts)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Outcome of [`validate_system`]: a list of human-readable violations.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the system invariants. For n <= 20 the completeness and
/// minimality of the listed cut sets are verified exhaustively against
/// the 2^n brute force; for larger systems each listed cut is
/// spot-checked for the "is a cut" and "is minimal" properties.
pub fn validate_system(sys: &System) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = sys.network.n_components;

    if sys.components.len() != n as usize {
        report.violations.push(format!(
            "component list has {} entries, network declares {n}",
            sys.components.len()
        ));
        return report;
    }
    for (i, c) in sys.components.iter().enumerate() {
        if c.id != i as CompId + 1 {
            report.violations.push(format!(
                "component at position {i} has id {}, expected {}",
                c.id,
                i + 1
            ));
        }
        if let Err(e) = c.lifetime.validate() {
            report.violations.push(format!("component {}: {e}", c.id));
        }
        if let Some(rep) = &c.repair {
            if let Err(e) = rep.validate() {
                report.violations.push(format!("component {} repair: {e}", c.id));
            }
        }
    }

    let adj = match Adjacency::build(&sys.network) {
        Ok(a) => a,
        Err(e) => {
            report.violations.push(e.to_string());
            return report;
        }
    };
    if !adj.is_acyclic() {
        report.violations.push("network contains a cycle".into());
        return report;
    }

    for cut in &sys.cutsets {
        if cut.is_empty() {
            report.violations.push("empty cut set listed".into());
            continue;
        }
        if let Some(&id) = cut.ids().iter().find(|&&id| id == 0 || id > n) {
            report.violations.push(format!("cut {:?} references invalid id {id}", cut.ids()));
            continue;
        }
        let mut failed = vec![false; n as usize];
        for &id in cut.ids() {
            failed[(id - 1) as usize] = true;
        }
        if connected(&sys.network, &failed) {
            report.violations.push(format!("{:?} is not a cut", cut.ids()));
            continue;
        }
        for &id in cut.ids() {
            failed[(id - 1) as usize] = false;
            if !connected(&sys.network, &failed) {
                report
                    .violations
                    .push(format!("{:?} is not minimal: dropping {id} still cuts", cut.ids()));
            }
            failed[(id - 1) as usize] = true;
        }
    }

    if n <= 20 {
        match brute_force_min_cutsets(&sys.network) {
            Ok(reference) => {
                let listed: HashMap<&CutSet, ()> =
                    sys.cutsets.iter().map(|c| (c, ())).collect();
                for cut in &reference {
                    if !listed.contains_key(cut) {
                        report
                            .violations
                            .push(format!("completeness: minimal cut {:?} not listed", cut.ids()));
                    }
                }
            }
            Err(e) => report.violations.push(format!("brute-force check failed: {e}")),
        }
    }
    report
}
