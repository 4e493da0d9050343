//! Planner variants sharing the search engine: plain collision avoidance,
//! relation-aware search with two judging rules, long/short prediction
//! horizons and a contingency planner.

use crate::config::PlannerConfig;
use crate::frenet::PlannedPath;
use crate::interaction::{
    build_interaction_zones, edge_entries, initial_relations, InteractiveChecker,
    JudgeMode, RelationLabel, RelationRecord, ZoneSet,
};
use crate::prediction::PredictionSet;
use crate::stsearch::{
    build_tree, prune, search, EdgeCheckResult, EdgeChecker, EdgeCounters, SearchNode, SearchStats, Trajectory,
};
use crate::types::{AvState, Shape};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlannerVariant {
    #[serde(rename = "ca")]
    Ca,
    #[serde(rename = "ir-pred")]
    IrPred,
    #[serde(rename = "ir-influ")]
    IrInflu,
    #[serde(rename = "ls")]
    Ls,
    #[serde(rename = "conti")]
    Conti,
}

/// Ablation flags: keep rear predictions, run initial relation determination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerFlags {
    pub rp: bool,
    pub ird: bool,
}

impl PlannerVariant {
    pub const ALL: [PlannerVariant; 5] = [Self::Ca, Self::IrPred, Self::IrInflu, Self::Ls, Self::Conti];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ca => "ca",
            Self::IrPred => "ir-pred",
            Self::IrInflu => "ir-influ",
            Self::Ls => "ls",
            Self::Conti => "conti",
        }
    }

    pub fn default_flags(&self) -> PlannerFlags {
        match self {
            Self::Ca => PlannerFlags { rp: false, ird: false },
            Self::IrPred | Self::IrInflu | Self::Ls => PlannerFlags { rp: true, ird: true },
            Self::Conti => PlannerFlags { rp: false, ird: true },
        }
    }

    fn judge(&self) -> Option<JudgeMode> {
        match self {
            Self::IrPred | Self::Ls => Some(JudgeMode::Pred),
            Self::IrInflu => Some(JudgeMode::Influ),
            Self::Ca | Self::Conti => None,
        }
    }
}

impl fmt::Display for PlannerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown variant `{s}` (expected ca, ir-pred, ir-influ, ls or conti)"))
    }
}

/// Plain collision-band check.
pub fn edge_check_ca(zones: &ZoneSet, parent: &AvState, child: &AvState, cfg: &PlannerConfig) -> (bool, EdgeCounters) {
    let mut counters = EdgeCounters::default();
    let mut ok = true;
    for (pair, t_k, _) in edge_entries(zones, parent, child) {
        counters.entries += 1;
        counters.constraint_checks += 1;
        if (pair.t_ij - t_k).abs() < cfg.safety_gap {
            ok = false;
        }
    }
    (ok, counters)
}

pub struct CaChecker<'a> {
    pub zones: &'a ZoneSet,
    pub cfg: &'a PlannerConfig,
}

impl EdgeChecker for CaChecker<'_> {
    fn check(&self, parent: &SearchNode, child: &AvState) -> EdgeCheckResult {
        let (valid, counters) = edge_check_ca(self.zones, &parent.state, child, self.cfg);
        EdgeCheckResult {
            valid,
            relations: None,
            counters,
        }
    }

    fn standstill_ok(&self, state: &AvState, _relations: &RelationRecord) -> bool {
        self.zones
            .pairs_covering(state.s)
            .all(|p| p.t_ij <= state.t - self.cfg.safety_gap)
    }
}

/// Arc length of the path sample nearest to `(x, y)`, extrapolated past the path start.
pub fn project_on_path(path: &PlannedPath, x: f64, y: f64) -> f64 {
    let samples = path.samples();
    let (i, _) = samples
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p.pose.x - x).powi(2) + (p.pose.y - y).powi(2)))
        .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
    let p = &samples[i].pose;
    let (s, c) = p.heading.sin_cos();
    let along = (x - p.x) * c + (y - p.y) * s;
    if i == 0 || i + 1 == samples.len() {
        samples[i].s + along
    } else {
        samples[i].s + along.clamp(-path.step(), path.step())
    }
}

/// Drops agents currently behind the AV unless `enabled`.
pub fn filter_rear_predictions(set: &PredictionSet, path: &PlannedPath, enabled: bool) -> PredictionSet {
    if enabled {
        return set.clone();
    }
    let behind: Vec<u32> = set
        .trajectories
        .iter()
        .filter(|t| {
            let p = t.states[0].pose;
            project_on_path(path, p.x, p.y) < 0.0
        })
        .map(|t| t.agent_id)
        .collect();
    set.retain_agents(|id| !behind.contains(&id))
}

/// Keeps mode 0 whole and cuts the other modes to `short_horizon`.
pub fn truncate_ls(set: &PredictionSet, short_horizon: f64) -> PredictionSet {
    let mut out = set.clone();
    for t in &mut out.trajectories {
        if t.mode > 0 {
            t.states.retain(|s| s.t <= short_horizon + 1e-9);
        }
    }
    out
}

/// Trunk-and-branch search: one trunk safe against every mode, then a branch
/// per mode. The trunk minimizing its own cost plus the mean branch score wins
/// and is returned joined with the mode-0 branch.
pub fn contingency_search(
    path: &PlannedPath,
    predictions: &PredictionSet,
    zones_all: &ZoneSet,
    shapes: &(dyn Fn(u32) -> Shape + Sync),
    root: AvState,
    cfg: &PlannerConfig,
    dt: f64,
) -> (Option<Trajectory>, SearchStats) {
    let k = predictions.max_modes();
    let all_checker = CaChecker { zones: zones_all, cfg };
    if k <= 1 {
        let out = search(path, root, zones_all.undetermined(), &all_checker, cfg, dt);
        return (out.trajectory, out.stats);
    }
    let mut trunk_cfg = cfg.clone();
    trunk_cfg.horizon = cfg.conti_trunk_horizon.min(cfg.horizon);
    let trunk = build_tree(path, root, zones_all.undetermined(), &all_checker, &trunk_cfg);
    let mut stats = trunk.stats;
    let keyed: Vec<(AvState, f64)> = trunk
        .leaves
        .iter()
        .map(|&(i, _)| (trunk.nodes[i].state, trunk.nodes[i].cost))
        .collect();
    let mut kept: Vec<usize> = prune(&keyed, &cfg.prune_grid).into_iter().map(|i| trunk.leaves[i].0).collect();
    kept.sort_by(|&a, &b| trunk.nodes[a].cost.total_cmp(&trunk.nodes[b].cost).then(a.cmp(&b)));
    kept.truncate(cfg.conti_max_trunk_leaves);

    let zones_by_mode: Vec<ZoneSet> = (0..k)
        .map(|j| build_interaction_zones(&predictions.mode(j), shapes, path, cfg))
        .collect();
    let jobs: Vec<(usize, usize)> = kept.iter().flat_map(|&l| (0..k).map(move |j| (l, j))).collect();
    let results: Vec<(Option<Trajectory>, SearchStats)> = jobs
        .par_iter()
        .map(|&(leaf, j)| {
            let checker = CaChecker { zones: &zones_by_mode[j], cfg };
            let root = trunk.nodes[leaf].state;
            let out = search(path, root, zones_by_mode[j].undetermined(), &checker, cfg, dt);
            (out.trajectory, out.stats)
        })
        .collect();
    for (_, s) in &results {
        stats.merge(s);
    }
    let mut best: Option<(f64, usize)> = None;
    for (li, &leaf) in kept.iter().enumerate() {
        let branch = &results[li * k..(li + 1) * k];
        let mean = branch
            .iter()
            .map(|(t, _)| t.as_ref().map_or(cfg.conti_infeasible_penalty, |t| t.score))
            .sum::<f64>()
            / k as f64;
        let total = trunk.nodes[leaf].cost + mean;
        if best.is_none_or(|(b, _)| total < b) {
            best = Some((total, li));
        }
    }
    let Some((score, li)) = best else {
        return (None, stats);
    };
    let leaf = kept[li];
    let mut nodes: Vec<AvState> = trunk.chain(leaf).iter().map(|&i| trunk.nodes[i].state).collect();
    let mut cost = trunk.nodes[leaf].cost;
    if let Some(branch) = &results[li * k].0 {
        nodes.extend(branch.nodes.iter().skip(1).copied());
        cost += branch.cost;
    }
    let last = *nodes.last().unwrap();
    let stop_leaf = last.v < cfg.min_speed;
    let samples = Trajectory::from_nodes(nodes.clone(), dt, stop_leaf.then_some(cfg.horizon.max(last.t)));
    (
        Some(Trajectory {
            nodes,
            samples,
            cost,
            score,
            relations: Vec::new(),
            stop_leaf,
        }),
        stats,
    )
}

/// Result of one planning cycle.
#[derive(Debug, Clone)]
pub struct CycleOutput {
    pub trajectory: Option<Trajectory>,
    pub predictions: PredictionSet,
    pub zones: ZoneSet,
    pub initial: RelationRecord,
    pub stats: SearchStats,
}

impl CycleOutput {
    /// Zones undetermined before planning and labeled influence on the chosen plan.
    pub fn influence_established(&self) -> usize {
        match &self.trajectory {
            None => 0,
            Some(t) => t
                .relations
                .iter()
                .zip(&self.initial)
                .filter(|(l, init)| **init == RelationLabel::Undetermined && **l == RelationLabel::Influence)
                .count(),
        }
    }
}

/// Runs one planning cycle of `variant` from `root` along `path`.
#[allow(clippy::too_many_arguments)]
pub fn plan_cycle(
    variant: PlannerVariant,
    flags: PlannerFlags,
    path: &PlannedPath,
    predictions: &PredictionSet,
    shapes: &(dyn Fn(u32) -> Shape + Sync),
    root: AvState,
    cfg: &PlannerConfig,
    dt: f64,
) -> CycleOutput {
    let mut preds = filter_rear_predictions(predictions, path, flags.rp);
    if variant == PlannerVariant::Ls {
        preds = truncate_ls(&preds, cfg.ls_short_horizon);
    }
    let zones = build_interaction_zones(&preds, shapes, path, cfg);
    let initial = match variant.judge() {
        Some(_) if flags.ird => initial_relations(&zones, &preds, shapes, path, cfg),
        _ => zones.undetermined(),
    };
    let (trajectory, stats) = match variant {
        PlannerVariant::Conti => contingency_search(path, &preds, &zones, shapes, root, cfg, dt),
        PlannerVariant::Ca => {
            let out = search(path, root, initial.clone(), &CaChecker { zones: &zones, cfg }, cfg, dt);
            (out.trajectory, out.stats)
        }
        v => {
            let checker = InteractiveChecker {
                zones: &zones,
                cfg,
                judge: v.judge().unwrap(),
            };
            let out = search(path, root, initial.clone(), &checker, cfg, dt);
            (out.trajectory, out.stats)
        }
    };
    CycleOutput {
        trajectory,
        predictions: preds,
        zones,
        initial,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::predict_constant_velocity;
    use crate::types::PoseState;

    fn cfg() -> PlannerConfig {
        PlannerConfig::default()
    }

    fn shapes(_: u32) -> Shape {
        Shape::new(4.0, 1.8)
    }

    #[test]
    fn variant_names_round_trip() {
        for v in PlannerVariant::ALL {
            assert_eq!(v.name().parse::<PlannerVariant>().unwrap(), v);
        }
        assert!("astar".parse::<PlannerVariant>().is_err());
    }

    fn one_pair(t_ij: f64) -> ZoneSet {
        let mut z = ZoneSet::default();
        z.zones.push(crate::interaction::InteractionZone {
            id: 0,
            traj: 0,
            agent_id: 1,
            mode: 0,
            states: vec![0],
            s_values: vec![4.0],
            inverse: false,
        });
        z.pairs.push(crate::interaction::OverlapPair {
            traj: 0,
            state: 0,
            agent_id: 1,
            s_k: 4.0,
            s_lo: 3.0,
            s_hi: 5.0,
            t_ij,
            s_ij: 10.0,
            v0: 5.0,
            zone: 0,
        });
        z
    }

    #[test]
    fn ca_band_examples() {
        let c = cfg();
        let p = AvState::new(0.0, 0.0, 2.0, 0.0);
        let ch = AvState::new(3.0, 6.0, 2.0, 0.0);
        assert!(edge_check_ca(&ZoneSet::default(), &p, &ch, &c).0);
        assert!(!edge_check_ca(&one_pair(2.3), &p, &ch, &c).0);
        assert!(edge_check_ca(&one_pair(2.5), &p, &ch, &c).0);
    }

    #[test]
    fn rear_filter() {
        let c = cfg();
        let path = PlannedPath::straight(&c);
        let behind = predict_constant_velocity(1, PoseState::new(-3.0, 0.0, 0.0), 5.0, 6.0, 0.5);
        let mut ahead = predict_constant_velocity(2, PoseState::new(3.0, 0.0, 0.0), 5.0, 6.0, 0.5);
        ahead.mode = 0;
        let set = PredictionSet::new(vec![behind, ahead]);
        assert_eq!(filter_rear_predictions(&set, &path, true), set);
        let f = filter_rear_predictions(&set, &path, false);
        assert_eq!(f.trajectories.len(), 1);
        assert_eq!(f.trajectories[0].agent_id, 2);
    }

    #[test]
    fn ls_truncation() {
        let mut trajs = Vec::new();
        for mode in 0..3 {
            let mut t = predict_constant_velocity(1, PoseState::new(0.0, 5.0, 0.0), 5.0, 6.0, 0.5);
            t.mode = mode;
            trajs.push(t);
        }
        let set = PredictionSet::new(trajs);
        let ls = truncate_ls(&set, 2.0);
        assert_eq!(ls.trajectories[0].states.len(), 13);
        assert_eq!(ls.trajectories[1].states.len(), 5);
        assert_eq!(ls.trajectories[2].states.len(), 5);
        assert_eq!(truncate_ls(&set.mode(0), 2.0), set.mode(0));
        assert!(truncate_ls(&PredictionSet::default(), 2.0).is_empty());
    }

    #[test]
    fn every_variant_plans_around_a_crosser() {
        let c = cfg();
        let path = PlannedPath::straight(&c);
        let mut trajs = Vec::new();
        for (mode, a) in [0.0, -1.0, 1.0].into_iter().enumerate() {
            let mut t = predict_constant_velocity(7, PoseState::new(25.0, -20.0, std::f64::consts::FRAC_PI_2), 4.0 + a, 6.0, 0.5);
            t.mode = mode;
            trajs.push(t);
        }
        let set = PredictionSet::new(trajs);
        for v in PlannerVariant::ALL {
            let out = plan_cycle(v, v.default_flags(), &path, &set, &shapes, AvState::new(0.0, 0.0, 8.0, 0.0), &c, 0.1);
            assert!(!out.zones.zones.is_empty(), "{v}");
            let tr = out.trajectory.unwrap_or_else(|| panic!("{v} found no plan"));
            assert_eq!(tr.samples[0].t, 0.0);
            assert!(out.stats.parents_expanded > 0, "{v}");
        }
    }

    #[test]
    fn flags_by_variant() {
        assert_eq!(PlannerVariant::Ca.default_flags(), PlannerFlags { rp: false, ird: false });
        assert_eq!(PlannerVariant::IrInflu.default_flags(), PlannerFlags { rp: true, ird: true });
        assert!(!PlannerVariant::Conti.default_flags().rp);
    }
}
