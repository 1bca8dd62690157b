//! Level selection: build the nested cut-set sequence C0 ⊂ … ⊂ CL from
//! a pilot simulation.
//!
//! Level 0 takes the cut sets with the smallest mean pilot failure time
//! (they cause system failure most often). Each later level adds the
//! candidates whose inclusion would shave the most off the current
//! approximation, measured on the same pilot samples. Level sizes are
//! fixed to `ceil(#C / 2^(L-l))` so per-sample cost doubles level to
//! level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::RngStream;
use crate::error::{Error, Result};
use crate::simulator::pilot_replicate_repairable;
use crate::system::{CutSet, System};

/// Nested cut-set sequence, stored as cumulative index lists into the
/// system's canonical cut-set order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPartition {
    /// `levels[l]` holds the sorted indices of every cut in C_l.
    pub levels: Vec<Vec<u32>>,
    /// Total number of cut sets in the system this was built for.
    pub n_cutsets: u32,
    /// Cost of the pilot that selected the levels, carried along so
    /// estimator runs can report it as part of total cost.
    #[serde(default)]
    pub pilot_cost_proxy: f64,
    #[serde(default)]
    pub pilot_wall_seconds: f64,
}

impl LevelPartition {
    /// Number of the top level L (levels run 0..=L).
    pub fn top_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level_size(&self, level: usize) -> usize {
        self.levels[level].len()
    }

    /// Materialize the cut sets of one level.
    pub fn cuts_at<'a>(&self, sys: &'a System, level: usize) -> Vec<CutSet> {
        self.levels[level].iter().map(|&i| sys.cutsets[i as usize].clone()).collect()
    }

    /// Check nesting, the size formula, and compatibility with `sys`.
    pub fn validate(&self, sys: &System) -> Result<()> {
        if self.n_cutsets as usize != sys.cutsets.len() {
            return Err(Error::Contract(format!(
                "partition built for {} cut sets, system has {}",
                self.n_cutsets,
                sys.cutsets.len()
            )));
        }
        let top = self.top_level();
        let m = sys.cutsets.len();
        for (l, level) in self.levels.iter().enumerate() {
            if level.len() != level_size(m, top, l) {
                return Err(Error::Contract(format!(
                    "level {l} has {} cut sets, expected {}",
                    level.len(),
                    level_size(m, top, l)
                )));
            }
            if level.iter().any(|&i| i as usize >= m) {
                return Err(Error::Contract(format!("level {l} references cut out of range")));
            }
            if l > 0 {
                let prev = &self.levels[l - 1];
                if !prev.iter().all(|i| level.binary_search(i).is_ok()) {
                    return Err(Error::Contract(format!("level {l} does not contain level {}", l - 1)));
                }
            }
        }
        if self.levels[top].len() != m {
            return Err(Error::Contract("top level must contain every cut set".into()));
        }
        Ok(())
    }
}

/// `#C_l = ceil(#C / 2^(L-l))`.
pub fn level_size(n_cutsets: usize, top_level: usize, level: usize) -> usize {
    let denom = 1usize << (top_level - level);
    n_cutsets.div_ceil(denom)
}

/// Largest level count such that sizes stay distinct and C0 is
/// nonempty: `floor(log2(#C))`.
pub fn default_top_level(n_cutsets: usize) -> usize {
    debug_assert!(n_cutsets >= 1);
    (usize::BITS - 1 - n_cutsets.leading_zeros()) as usize
}

/// Pilot simulation output: per-replicate failure times of every cut
/// set, and the per-cut mean scores used to seed level 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilotData {
    pub n_pilot: usize,
    /// `cut_times[j][i]` = failure time of cut i in replicate j.
    pub cut_times: Vec<Vec<f64>>,
    /// Mean pilot failure time per cut set.
    pub eta: Vec<f64>,
    /// Proxy cost of the pilot: replicates times cut sets evaluated.
    pub cost_proxy: f64,
    pub wall_seconds: f64,
}

/// Failure time of each cut under one component failure-time vector:
/// the max over members.
pub fn per_cut_times(comp_times: &[f64], cuts: &[CutSet]) -> Vec<f64> {
    cuts.iter()
        .map(|c| {
            c.ids()
                .iter()
                .map(|&id| comp_times[(id - 1) as usize])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Run the pilot: `n_pilot` replicates of per-cut failure times over
/// the full cut-set collection. Non-repairable replicates are one
/// component-lifetime draw each; repairable replicates simulate the
/// failure/repair process to first system failure and then freeze the
/// remaining components' conditional failure times.
///
/// Each replicate runs on its own derived stream, so replicates may be
/// computed concurrently without changing the result.
pub fn pilot_scores(
    sys: &System,
    n_pilot: usize,
    stream: RngStream,
    repairable: bool,
) -> Result<PilotData> {
    if n_pilot < 1 {
        return Err(Error::Parameter("pilot size must be >= 1".into()));
    }
    let start = std::time::Instant::now();
    let cut_times: Vec<Vec<f64>> = (0..n_pilot)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream.derive(j as u64).rng();
            let comp_times = if repairable {
                pilot_replicate_repairable(sys, &sys.cutsets, &mut rng)?
            } else {
                sys.components.iter().map(|c| c.lifetime.sample(&mut rng)).collect()
            };
            Ok(per_cut_times(&comp_times, &sys.cutsets))
        })
        .collect::<Result<_>>()?;
    let m = sys.cutsets.len();
    let mut eta = vec![0.0; m];
    for row in &cut_times {
        for (e, &t) in eta.iter_mut().zip(row) {
            *e += t;
        }
    }
    for e in &mut eta {
        *e /= n_pilot as f64;
    }
    Ok(PilotData {
        n_pilot,
        cut_times,
        eta,
        cost_proxy: (n_pilot * m) as f64,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Mean saving from adding one candidate cut on top of the current
/// approximation `t_prev` (per-replicate lifetimes under C_{l-1}).
fn delta_score(cut_times: &[Vec<f64>], t_prev: &[f64], candidate: usize) -> f64 {
    let n = t_prev.len();
    let sum: f64 = cut_times
        .iter()
        .zip(t_prev)
        .map(|(row, &tp)| tp - tp.min(row[candidate]))
        .sum();
    sum / n as f64
}

/// Build the nested partition from pilot scores.
///
/// `top_level` is clamped to `floor(log2(#C))`; pass `None` for the
/// default (maximal) choice. Ties in the scores break by canonical
/// cut-set order.
pub fn build_partition(
    sys: &System,
    pilot: &PilotData,
    top_level: Option<usize>,
) -> Result<LevelPartition> {
    let m = sys.cutsets.len();
    if m == 0 {
        return Err(Error::Contract("cannot partition a system with no cut sets".into()));
    }
    if pilot.eta.len() != m {
        return Err(Error::Contract(format!(
            "pilot scored {} cut sets, system has {m}",
            pilot.eta.len()
        )));
    }
    let max_top = default_top_level(m);
    let top = top_level.map_or(max_top, |l| l.min(max_top));

    // Level 0: smallest mean pilot failure times.
    let mut by_eta: Vec<usize> = (0..m).collect();
    by_eta.sort_by(|&a, &b| pilot.eta[a].total_cmp(&pilot.eta[b]).then(a.cmp(&b)));
    let mut selected = vec![false; m];
    for &i in by_eta.iter().take(level_size(m, top, 0)) {
        selected[i] = true;
    }
    let mut levels = vec![sorted_indices(&selected)];

    // Later levels: greedily add the candidates with the largest mean
    // saving over the current approximation, reusing the pilot samples.
    for l in 1..=top {
        let t_prev: Vec<f64> = pilot
            .cut_times
            .iter()
            .map(|row| {
                (0..m)
                    .filter(|&i| selected[i])
                    .map(|i| row[i])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut candidates: Vec<(usize, f64)> = (0..m)
            .filter(|&i| !selected[i])
            .map(|i| (i, delta_score(&pilot.cut_times, &t_prev, i)))
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let need = level_size(m, top, l) - level_size(m, top, l - 1);
        for &(i, _) in candidates.iter().take(need) {
            selected[i] = true;
        }
        levels.push(sorted_indices(&selected));
    }

    let partition = LevelPartition {
        levels,
        n_cutsets: m as u32,
        pilot_cost_proxy: pilot.cost_proxy,
        pilot_wall_seconds: pilot.wall_seconds,
    };
    partition.validate(sys)?;
    Ok(partition)
}

fn sorted_indices(selected: &[bool]) -> Vec<u32> {
    selected
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i as u32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::LifetimeDist;
    use crate::system::{ComponentModel, Network, Node};

    #[test]
    fn size_formula_hand_check() {
        // #C = 100, L = 5 -> (4, 7, 13, 25, 50, 100).
        let sizes: Vec<usize> = (0..=5).map(|l| level_size(100, 5, l)).collect();
        assert_eq!(sizes, vec![4, 7, 13, 25, 50, 100]);
    }

    #[test]
    fn default_level_counts() {
        assert_eq!(default_top_level(1), 0);
        assert_eq!(default_top_level(2), 1);
        assert_eq!(default_top_level(3), 1);
        assert_eq!(default_top_level(100), 6);
    }

    #[test]
    fn sizes_strictly_increase_for_default_top() {
        for m in 1..600usize {
            let top = default_top_level(m);
            let sizes: Vec<usize> = (0..=top).map(|l| level_size(m, top, l)).collect();
            assert!(sizes.windows(2).all(|w| w[0] < w[1]), "m={m}: {sizes:?}");
            assert!(sizes[0] >= 1);
            assert_eq!(*sizes.last().unwrap(), m);
        }
    }

    #[test]
    fn eta_hand_example() {
        // Cut {1,2}; replicate draws (1,2) and (3,2):
        // eta = (max(1,2) + max(3,2)) / 2 = 2.5.
        let cuts = vec![CutSet::new(vec![1, 2])];
        let rows = [per_cut_times(&[1.0, 2.0], &cuts), per_cut_times(&[3.0, 2.0], &cuts)];
        let eta = (rows[0][0] + rows[1][0]) / 2.0;
        assert_eq!(eta, 2.5);
    }

    #[test]
    fn delta_hand_example() {
        // T_prev = (4, 6); candidate maxima (5, 2):
        // delta = ((4 - min(4,5)) + (6 - min(6,2))) / 2 = (0 + 4) / 2 = 2.
        let cut_times = vec![vec![5.0], vec![2.0]];
        let t_prev = [4.0, 6.0];
        assert_eq!(delta_score(&cut_times, &t_prev, 0), 2.0);
    }

    #[test]
    fn always_exceeding_candidate_ranks_last() {
        // A candidate whose max always exceeds T_prev saves nothing.
        let cut_times = vec![vec![10.0, 3.0], vec![20.0, 1.0]];
        let t_prev = [4.0, 6.0];
        assert_eq!(delta_score(&cut_times, &t_prev, 0), 0.0);
        assert!(delta_score(&cut_times, &t_prev, 1) > 0.0);
    }

    fn toy_system(rates: &[f64]) -> System {
        // Series chain: one singleton cut per component.
        let n = rates.len() as u32;
        let mut edges = vec![(Node::Source, Node::Comp(1))];
        for i in 1..n {
            edges.push((Node::Comp(i), Node::Comp(i + 1)));
        }
        edges.push((Node::Comp(n), Node::Sink));
        System {
            network: Network { n_components: n, edges },
            components: rates
                .iter()
                .enumerate()
                .map(|(i, &r)| ComponentModel {
                    id: i as u32 + 1,
                    lifetime: LifetimeDist::exponential(r),
                    repair: Some(LifetimeDist::exponential(0.0)),
                })
                .collect(),
            cutsets: (1..=n).map(|i| CutSet::new(vec![i])).collect(),
        }
    }

    #[test]
    fn single_cut_system_trivial_partition() {
        let sys = toy_system(&[1.0]);
        let pilot = pilot_scores(&sys, 10, RngStream::new(1, 0), false).unwrap();
        let part = build_partition(&sys, &pilot, None).unwrap();
        assert_eq!(part.levels, vec![vec![0]]);
    }

    #[test]
    fn dominant_cut_lands_in_level_zero() {
        // Component 1 fails almost immediately; cuts {2}, {3} are huge.
        let sys = toy_system(&[100.0, 0.001, 0.001]);
        let pilot = pilot_scores(&sys, 200, RngStream::new(2, 0), false).unwrap();
        let part = build_partition(&sys, &pilot, None).unwrap();
        // L = 1, so level 0 holds ceil(3/2) = 2 cuts; the dominant one
        // (index 0) must be among them.
        assert_eq!(part.level_size(0), 2);
        assert!(part.levels[0].contains(&0));
    }

    #[test]
    fn repairable_pilot_with_degenerate_repair_matches_plain() {
        let sys = toy_system(&[1.0, 0.5, 2.0, 0.25]);
        let a = pilot_scores(&sys, 50, RngStream::new(3, 0), false).unwrap();
        let b = pilot_scores(&sys, 50, RngStream::new(3, 0), true).unwrap();
        assert_eq!(a.cut_times, b.cut_times);
        assert_eq!(a.eta, b.eta);
    }

    #[test]
    fn partition_nesting_and_sizes_validate() {
        let sys = toy_system(&[1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]);
        let pilot = pilot_scores(&sys, 100, RngStream::new(4, 0), false).unwrap();
        for top in [0, 1, 2, 3, 9] {
            let part = build_partition(&sys, &pilot, Some(top)).unwrap();
            part.validate(&sys).unwrap();
            // Requested top beyond floor(log2(10)) = 3 clamps to 3.
            assert_eq!(part.top_level(), top.min(3));
        }
    }

    #[test]
    fn relabeling_cut_sets_does_not_change_selection() {
        // Permute the cut columns of a synthetic pilot and check the
        // chosen partition maps back to the same cut sets.
        let sys = toy_system(&[1.0, 0.8, 0.6, 0.4, 0.2]);
        let pilot = pilot_scores(&sys, 60, RngStream::new(5, 0), false).unwrap();
        let part = build_partition(&sys, &pilot, None).unwrap();

        let perm = [2usize, 0, 4, 1, 3]; // new index -> old index
        let mut sys2 = sys.clone();
        sys2.cutsets = perm.iter().map(|&o| sys.cutsets[o].clone()).collect();
        let pilot2 = PilotData {
            n_pilot: pilot.n_pilot,
            cut_times: pilot
                .cut_times
                .iter()
                .map(|row| perm.iter().map(|&o| row[o]).collect())
                .collect(),
            eta: perm.iter().map(|&o| pilot.eta[o]).collect(),
            cost_proxy: pilot.cost_proxy,
            wall_seconds: pilot.wall_seconds,
        };
        let part2 = build_partition(&sys2, &pilot2, None).unwrap();
        for (lvl, lvl2) in part.levels.iter().zip(&part2.levels) {
            let cuts: Vec<_> = lvl.iter().map(|&i| &sys.cutsets[i as usize]).collect();
            let mut cuts2: Vec<_> =
                lvl2.iter().map(|&i| &sys2.cutsets[i as usize]).collect();
            cuts2.sort();
            let mut cuts_sorted = cuts.clone();
            cuts_sorted.sort();
            assert_eq!(cuts_sorted, cuts2);
        }
    }
}
