//! Random two-terminal system growth by repeated series, parallel, and
//! bridge expansion, starting from the trivial one-component system.
//!
//! Moves on the DAG:
//! - series: replace component v by v -> v', with v keeping the in-edges
//!   and v' taking over the out-edges;
//! - parallel: add v' carrying copies of all of v's in- and out-edges;
//! - bridge: pick two distinct edges (a,b), (c,d) and insert a node w
//!   with in-edges from {a, c} and out-edges to {b, d}, rejecting pairs
//!   that would create a cycle.
//!
//! Each move adds exactly one component, so a target of n yields ids
//! 1..=n in creation order. The move log is recorded so a grown system
//! can be replayed or extended.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};

use crate::dist::{LifetimeDist, RngStream};
use crate::error::{Error, Result};
use crate::system::{
    enumerate_min_cutsets, CompId, ComponentModel, Network, Node, System, DEFAULT_CUTSET_CAP,
};

/// Configuration for random system growth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthConfig {
    /// Number of components in the finished system.
    pub target: u32,
    pub p_series: f64,
    pub p_parallel: f64,
    pub p_bridge: f64,
    /// Weibull shape shared by all components.
    pub shape: f64,
    /// Scales are drawn i.i.d. uniformly from this interval.
    pub scale_min: f64,
    pub scale_max: f64,
    /// Exponential repair rate; `None` for non-repairable components.
    pub repair_rate: Option<f64>,
    pub cutset_cap: usize,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig {
            target: 1,
            p_series: 1.0 / 3.0,
            p_parallel: 1.0 / 3.0,
            p_bridge: 1.0 / 3.0,
            shape: 1.0,
            scale_min: 2.0,
            scale_max: 10.0,
            repair_rate: None,
            cutset_cap: DEFAULT_CUTSET_CAP,
        }
    }
}

impl GrowthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target < 1 {
            return Err(Error::Parameter("target component count must be >= 1".into()));
        }
        let probs = [self.p_series, self.p_parallel, self.p_bridge];
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Parameter("move probabilities must lie in [0,1]".into()));
        }
        if ((self.p_series + self.p_parallel + self.p_bridge) - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter("move probabilities must sum to 1".into()));
        }
        if !(self.shape > 0.0) {
            return Err(Error::Parameter("shape must be > 0".into()));
        }
        if !(self.scale_min > 0.0 && self.scale_max >= self.scale_min) {
            return Err(Error::Parameter("scale interval must satisfy 0 < lo <= hi".into()));
        }
        if let Some(r) = self.repair_rate {
            if !(r >= 0.0) {
                return Err(Error::Parameter("repair rate must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// One recorded growth step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "move", rename_all = "lowercase")]
pub enum GrowthMove {
    Series { target: CompId, new_id: CompId },
    Parallel { target: CompId, new_id: CompId },
    Bridge { first: (Node, Node), second: (Node, Node), new_id: CompId },
}

/// A grown system together with the move log that produced it.
#[derive(Debug, Clone)]
pub struct Grown {
    pub system: System,
    pub moves: Vec<GrowthMove>,
}

struct GrowthState {
    edges: Vec<(Node, Node)>,
    components: Vec<ComponentModel>,
}

impl GrowthState {
    fn initial(cfg: &GrowthConfig, rng: &mut impl Rng) -> Self {
        let mut state = GrowthState {
            edges: vec![(Node::Source, Node::Comp(1)), (Node::Comp(1), Node::Sink)],
            components: Vec::new(),
        };
        state.push_component(cfg, rng);
        state
    }

    fn push_component(&mut self, cfg: &GrowthConfig, rng: &mut impl Rng) -> CompId {
        let id = self.components.len() as CompId + 1;
        let scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * rng.gen::<f64>();
        self.components.push(ComponentModel {
            id,
            lifetime: LifetimeDist::weibull(cfg.shape, scale),
            repair: cfg.repair_rate.map(LifetimeDist::exponential),
        });
        id
    }

    fn series(&mut self, cfg: &GrowthConfig, target: CompId, rng: &mut impl Rng) -> GrowthMove {
        let new_id = self.push_component(cfg, rng);
        let v = Node::Comp(target);
        let v2 = Node::Comp(new_id);
        for e in self.edges.iter_mut() {
            if e.0 == v {
                e.0 = v2;
            }
        }
        self.edges.push((v, v2));
        GrowthMove::Series { target, new_id }
    }

    fn parallel(&mut self, cfg: &GrowthConfig, target: CompId, rng: &mut impl Rng) -> GrowthMove {
        let new_id = self.push_component(cfg, rng);
        let v = Node::Comp(target);
        let v2 = Node::Comp(new_id);
        let copies: Vec<(Node, Node)> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some((v2, b))
                } else if b == v {
                    Some((a, v2))
                } else {
                    None
                }
            })
            .collect();
        self.edges.extend(copies);
        GrowthMove::Parallel { target, new_id }
    }

    fn bridge(
        &mut self,
        cfg: &GrowthConfig,
        first: (Node, Node),
        second: (Node, Node),
        rng: &mut impl Rng,
    ) -> GrowthMove {
        let new_id = self.push_component(cfg, rng);
        let w = Node::Comp(new_id);
        self.edges.push((first.0, w));
        self.edges.push((second.0, w));
        self.edges.push((w, first.1));
        self.edges.push((w, second.1));
        GrowthMove::Bridge { first, second, new_id }
    }

    /// True if some path leads from `from` to `to` in the current DAG.
    fn has_path(&self, from: Node, to: Node) -> bool {
        if from == to {
            return true;
        }
        let mut out: HashMap<Node, Vec<Node>> = HashMap::new();
        for &(a, b) in &self.edges {
            out.entry(a).or_default().push(b);
        }
        let mut seen = HashSet::new();
        let mut stack = vec![from];
        seen.insert(from);
        while let Some(v) = stack.pop() {
            for &t in out.get(&v).map(|v| v.as_slice()).unwrap_or(&[]) {
                if t == to {
                    return true;
                }
                if seen.insert(t) {
                    stack.push(t);
                }
            }
        }
        false
    }

    /// Inserting the bridge node between these edges keeps the graph
    /// acyclic iff no out-target reaches an in-source.
    fn bridge_pair_ok(&self, first: (Node, Node), second: (Node, Node)) -> bool {
        for from in [first.1, second.1] {
            for to in [first.0, second.0] {
                if self.has_path(from, to) {
                    return false;
                }
            }
        }
        true
    }

    /// Pick a valid bridge edge pair, or `None` when no pair keeps the
    /// graph acyclic. Random attempts first, then a deterministic scan
    /// in a randomly rotated order.
    fn pick_bridge_pair(&self, rng: &mut impl Rng) -> Option<((Node, Node), (Node, Node))> {
        let m = self.edges.len();
        if m < 2 {
            return None;
        }
        for _ in 0..32 {
            let i = rng.gen_range(0..m);
            let mut j = rng.gen_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            if self.bridge_pair_ok(self.edges[i], self.edges[j]) {
                return Some((self.edges[i], self.edges[j]));
            }
        }
        let offset = rng.gen_range(0..m);
        for a in 0..m {
            let i = (a + offset) % m;
            for j in 0..m {
                if i != j && self.bridge_pair_ok(self.edges[i], self.edges[j]) {
                    return Some((self.edges[i], self.edges[j]));
                }
            }
        }
        None
    }

    fn step(&mut self, cfg: &GrowthConfig, rng: &mut impl Rng) -> GrowthMove {
        loop {
            let u: f64 = rng.gen();
            if u < cfg.p_series {
                let target = rng.gen_range(0..self.components.len()) as CompId + 1;
                return self.series(cfg, target, rng);
            } else if u < cfg.p_series + cfg.p_parallel {
                let target = rng.gen_range(0..self.components.len()) as CompId + 1;
                return self.parallel(cfg, target, rng);
            } else {
                match self.pick_bridge_pair(rng) {
                    Some((first, second)) => return self.bridge(cfg, first, second, rng),
                    // No admissible edge pair: resample the move.
                    None => continue,
                }
            }
        }
    }

    fn snapshot(&self, cap: usize) -> Result<System> {
        let network = Network {
            n_components: self.components.len() as u32,
            edges: self.edges.clone(),
        };
        let cutsets = enumerate_min_cutsets(&network, cap)?;
        Ok(System { network, components: self.components.clone(), cutsets })
    }
}

/// Grow a random system with exactly `cfg.target` components.
pub fn grow(cfg: &GrowthConfig, stream: RngStream) -> Result<Grown> {
    let mut grown = grow_nested(cfg, &[cfg.target], stream)?;
    Ok(grown.pop().expect("one snapshot requested"))
}

/// Grow one system run, snapshotting at each requested size. Later
/// systems are continuations of earlier ones: they share the growth
/// move prefix.
pub fn grow_nested(cfg: &GrowthConfig, sizes: &[u32], stream: RngStream) -> Result<Vec<Grown>> {
    cfg.validate()?;
    if sizes.is_empty() {
        return Err(Error::Parameter("at least one size required".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("sizes must be strictly increasing".into()));
    }
    if sizes[0] < 1 {
        return Err(Error::Parameter("sizes must be >= 1".into()));
    }
    if cfg.p_bridge >= 1.0 - 1e-12 && *sizes.last().unwrap() > 1 {
        // The initial two-edge system admits no acyclic bridge pair.
        return Err(Error::Parameter(
            "p_bridge = 1 cannot grow past one component".into(),
        ));
    }

    let mut rng = stream.rng();
    let mut state = GrowthState::initial(cfg, &mut rng);
    let mut moves: Vec<GrowthMove> = Vec::new();
    let mut snapshots = Vec::new();
    for &size in sizes {
        while (state.components.len() as u32) < size {
            let mv = state.step(cfg, &mut rng);
            moves.push(mv);
        }
        snapshots.push(Grown { system: state.snapshot(cfg.cutset_cap)?, moves: moves.clone() });
    }
    Ok(snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{validate_system, CutSet};

    fn cfg(target: u32) -> GrowthConfig {
        GrowthConfig { target, ..Default::default() }
    }

    #[test]
    fn single_component_system() {
        let g = grow(&cfg(1), RngStream::new(1, 0)).unwrap();
        assert_eq!(g.system.n_components(), 1);
        assert_eq!(g.system.cutsets, vec![CutSet::new(vec![1])]);
        assert!(g.moves.is_empty());
    }

    #[test]
    fn forced_series_move() {
        let c = GrowthConfig { p_series: 1.0, p_parallel: 0.0, p_bridge: 0.0, ..cfg(2) };
        let g = grow(&c, RngStream::new(1, 0)).unwrap();
        assert_eq!(g.system.cutsets, vec![CutSet::new(vec![1]), CutSet::new(vec![2])]);
    }

    #[test]
    fn forced_parallel_move() {
        let c = GrowthConfig { p_series: 0.0, p_parallel: 1.0, p_bridge: 0.0, ..cfg(2) };
        let g = grow(&c, RngStream::new(1, 0)).unwrap();
        assert_eq!(g.system.cutsets, vec![CutSet::new(vec![1, 2])]);
    }

    #[test]
    fn growth_reaches_target_and_validates() {
        for seed in 0..10 {
            let g = grow(&cfg(14), RngStream::new(seed, 0)).unwrap();
            assert_eq!(g.system.n_components(), 14);
            assert_eq!(g.moves.len(), 13);
            let report = validate_system(&g.system);
            assert!(report.is_valid(), "seed {seed}: {:?}", report.violations);
        }
    }

    #[test]
    fn growth_is_deterministic() {
        let a = grow(&cfg(20), RngStream::new(7, 0)).unwrap();
        let b = grow(&cfg(20), RngStream::new(7, 0)).unwrap();
        assert_eq!(a.system, b.system);
        assert_eq!(a.moves, b.moves);
    }

    #[test]
    fn nested_growth_shares_prefix() {
        let nested = grow_nested(&cfg(10), &[5, 10], RngStream::new(3, 0)).unwrap();
        assert_eq!(nested.len(), 2);
        assert_eq!(nested[0].system.n_components(), 5);
        assert_eq!(nested[1].system.n_components(), 10);
        assert_eq!(nested[0].moves[..], nested[1].moves[..4]);
    }

    #[test]
    fn non_increasing_sizes_rejected() {
        assert!(grow_nested(&cfg(5), &[3, 3], RngStream::new(1, 0)).is_err());
    }

    /// With no bridge moves the system is series-parallel, so the
    /// cut-set count follows the closed-form recursion: series adds
    /// counts, parallel multiplies them. Replay the move log over a
    /// composition tree and compare against enumeration.
    #[test]
    fn series_parallel_cut_count_recursion() {
        enum Tree {
            Leaf(CompId),
            Series(Box<Tree>, Box<Tree>),
            Parallel(Box<Tree>, Box<Tree>),
        }
        fn count(t: &Tree) -> u64 {
            match t {
                Tree::Leaf(_) => 1,
                Tree::Series(a, b) => count(a) + count(b),
                Tree::Parallel(a, b) => count(a) * count(b),
            }
        }
        /// Replace the leaf labeled `id` with a series/parallel pair of
        /// (id, new_id). Each component is always a leaf, so the lookup
        /// is unambiguous.
        fn replace(t: &mut Tree, id: CompId, new_id: CompId, series: bool) -> bool {
            match t {
                Tree::Leaf(x) if *x == id => {
                    let pair = (Box::new(Tree::Leaf(id)), Box::new(Tree::Leaf(new_id)));
                    *t = if series {
                        Tree::Series(pair.0, pair.1)
                    } else {
                        Tree::Parallel(pair.0, pair.1)
                    };
                    true
                }
                Tree::Leaf(_) => false,
                Tree::Series(a, b) | Tree::Parallel(a, b) => {
                    replace(a, id, new_id, series) || replace(b, id, new_id, series)
                }
            }
        }

        for seed in 0..8 {
            let c = GrowthConfig { p_series: 0.5, p_parallel: 0.5, p_bridge: 0.0, ..cfg(12) };
            let g = grow(&c, RngStream::new(seed, 0)).unwrap();
            let mut tree = Tree::Leaf(1);
            for mv in &g.moves {
                match *mv {
                    GrowthMove::Series { target, new_id } => {
                        assert!(replace(&mut tree, target, new_id, true));
                    }
                    GrowthMove::Parallel { target, new_id } => {
                        assert!(replace(&mut tree, target, new_id, false));
                    }
                    GrowthMove::Bridge { .. } => unreachable!(),
                }
            }
            assert_eq!(
                g.system.cutsets.len() as u64,
                count(&tree),
                "seed {seed}: recursion count mismatch"
            );
        }
    }
}
