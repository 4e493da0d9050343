//! Forward s-t tree search over constant-acceleration edges.
//!
//! Layers are expanded breadth first. Every child is edge-checked by an
//! [`EdgeChecker`], surviving open nodes are pruned on an (s, t, v) grid, and the
//! best leaf (running cost plus terminal penalty) is walked back to the root.

use crate::config::{PlannerConfig, PruneGrid};
use crate::frenet::{curvature_speed_limit, PlannedPath};
use crate::interaction::RelationRecord;
use crate::types::AvState;
use std::collections::BTreeMap;

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    pub state: AvState,
    pub parent: Option<usize>,
    pub cost: f64,
    pub relations: RelationRecord,
    pub leaf: bool,
}

/// Work done by one edge check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCounters {
    pub entries: u64,
    pub constraint_checks: u64,
    pub conflict_touches: u64,
    pub zones_touched: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCheckResult {
    pub valid: bool,
    /// Updated record for the child; `None` keeps the parent's.
    pub relations: Option<RelationRecord>,
    pub counters: EdgeCounters,
}

impl EdgeCheckResult {
    pub fn accept() -> Self {
        Self {
            valid: true,
            relations: None,
            counters: EdgeCounters::default(),
        }
    }
}

pub trait EdgeChecker: Sync {
    fn check(&self, parent: &SearchNode, child: &AvState) -> EdgeCheckResult;

    /// Whether the AV may remain stopped at `state.s` from `state.t` on.
    fn standstill_ok(&self, _state: &AvState, _relations: &RelationRecord) -> bool {
        true
    }
}

/// Accepts every edge.
pub struct NoCheck;

impl EdgeChecker for NoCheck {
    fn check(&self, _parent: &SearchNode, _child: &AvState) -> EdgeCheckResult {
        EdgeCheckResult::accept()
    }
}

/// Aggregate counters of one search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SearchStats {
    /// Parents expanded (W).
    pub parents_expanded: u64,
    /// Children that passed kinematic filters and were edge-checked.
    pub edges_checked: u64,
    /// Sum of overlap entries over all checked edges.
    pub entries: u64,
    pub constraint_checks: u64,
    pub conflict_touches: u64,
    pub zones_touched: u64,
    pub nodes: u64,
    pub layers: u64,
}

impl SearchStats {
    pub fn add(&mut self, c: &EdgeCounters) {
        self.entries += c.entries;
        self.constraint_checks += c.constraint_checks;
        self.conflict_touches += c.conflict_touches;
        self.zones_touched += c.zones_touched;
    }

    pub fn merge(&mut self, o: &SearchStats) {
        self.parents_expanded += o.parents_expanded;
        self.edges_checked += o.edges_checked;
        self.entries += o.entries;
        self.constraint_checks += o.constraint_checks;
        self.conflict_touches += o.conflict_touches;
        self.zones_touched += o.zones_touched;
        self.nodes += o.nodes;
        self.layers = self.layers.max(o.layers);
    }
}

/// Look-ahead distance of one expansion step.
pub fn sampling_distance(v_p: f64, cfg: &PlannerConfig) -> f64 {
    let tau = cfg.sampling.tau;
    (v_p * tau + 0.5 * cfg.a_max() * tau * tau).clamp(cfg.sampling.ds_min, cfg.sampling.ds_max)
}

/// Accelerations spanning the feasible interval for one expansion. The upper
/// end is cut where the child would reach `v_limit`, so one edge can land on
/// the limit. With an odd count and an interval straddling zero, the braking
/// and accelerating sides are each evenly spaced and zero is included.
pub fn control_set(v_p: f64, ds: f64, cfg: &PlannerConfig) -> Vec<f64> {
    let lo = cfg.a_min().max(-v_p * v_p / (2.0 * ds));
    let to_limit = (cfg.v_limit * cfg.v_limit - v_p * v_p) / (2.0 * ds);
    let hi = cfg.a_max().min(to_limit.max(0.0));
    let n = cfg.control_count;
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    if n % 2 == 1 && lo < 0.0 && hi > 0.0 {
        // braking and accelerating halves spaced separately so u = 0 is kept
        let half = (n - 1) / 2;
        let neg = (0..half).map(|i| lo * (half - i) as f64 / half as f64);
        let pos = (1..=half).map(|i| hi * i as f64 / half as f64);
        return neg.chain(std::iter::once(0.0)).chain(pos).collect();
    }
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// Child state reached from `parent` by applying `u` over `ds`, or none when
/// the edge takes no finite time.
pub fn cam_child(parent: &AvState, u: f64, ds: f64) -> Option<AvState> {
    let v_c = (parent.v * parent.v + 2.0 * u * ds).max(0.0).sqrt();
    let denom = parent.v + v_c;
    if denom <= 0.0 {
        return None;
    }
    let t_c = parent.t + 2.0 * ds / denom;
    t_c.is_finite().then_some(AvState::new(t_c, parent.s + ds, v_c, u))
}

/// Speed at distance `x` into an edge starting at `v_p` with acceleration `u`.
pub fn edge_speed(v_p: f64, u: f64, x: f64) -> f64 {
    (v_p * v_p + 2.0 * u * x).max(0.0).sqrt()
}

/// Time offset at distance `x` into the edge.
pub fn edge_time(v_p: f64, u: f64, x: f64) -> f64 {
    let v = edge_speed(v_p, u, x);
    if x <= 0.0 {
        0.0
    } else if v_p + v > 0.0 {
        2.0 * x / (v_p + v)
    } else {
        f64::INFINITY
    }
}

pub fn edge_jerk(parent: &AvState, child: &AvState) -> f64 {
    (child.a - parent.a) / (child.t - parent.t)
}

/// Pointwise curvature speed check along an edge. Speed is monotone on a CAM
/// edge and the curvature limit is lowest at sample ends, so comparing the
/// faster end against the tighter limit of every sub-interval bounds the
/// whole edge. When the edge starts above the limit (the current state
/// already exceeds it) the first sub-interval only checks its far end.
fn curvature_ok(path: &PlannedPath, parent: &AvState, child: &AvState, cfg: &PlannerConfig) -> bool {
    let mut pts: Vec<f64> = vec![parent.s];
    for i in path.index_range(parent.s, child.s) {
        let s = path.samples()[i].s;
        if s > parent.s + TOL && s < child.s - TOL {
            pts.push(s);
        }
    }
    pts.push(child.s);
    let u = child.a;
    let speeds: Vec<f64> = pts.iter().map(|&s| edge_speed(parent.v, u, s - parent.s)).collect();
    let limits: Vec<f64> = pts.iter().map(|&s| curvature_speed_limit(path, s, cfg)).collect();
    let root_exempt = parent.v > limits[0] + TOL;
    for i in 0..pts.len() - 1 {
        let lim = limits[i].min(limits[i + 1]);
        let v = if i == 0 && root_exempt { speeds[1] } else { speeds[i].max(speeds[i + 1]) };
        if v > lim + TOL {
            return false;
        }
    }
    true
}

/// Kinematically admissible children of `parent`, in control-set order.
pub fn expand_children(parent: &AvState, path: &PlannedPath, cfg: &PlannerConfig) -> Vec<(AvState, bool)> {
    let ds = sampling_distance(parent.v, cfg);
    let [j_min, j_max] = cfg.jerk_bounds;
    control_set(parent.v, ds, cfg)
        .into_iter()
        .filter_map(|u| cam_child(parent, u, ds))
        .filter(|c| {
            let j = edge_jerk(parent, c);
            j >= j_min - TOL && j <= j_max + TOL
        })
        .filter(|c| c.v <= cfg.v_limit + TOL)
        .filter(|c| c.v <= path.mean_v_kappa(parent.s, c.s, cfg) + TOL)
        .filter(|c| curvature_ok(path, parent, c, cfg))
        .map(|c| {
            let leaf = c.t > cfg.horizon || c.v < cfg.min_speed || c.s > cfg.distance_horizon;
            (c, leaf)
        })
        .collect()
}

pub fn node_cost(parent_cost: f64, parent: &AvState, child: &AvState, cfg: &PlannerConfig) -> f64 {
    let dt = child.t - parent.t;
    let j = edge_jerk(parent, child);
    parent_cost
        + cfg.w_v * (cfg.v_limit - child.v).abs() * dt
        + cfg.w_a * child.a * child.a * dt
        + cfg.w_j * j * j * dt
}

/// Leaf score used to rank candidate trajectories.
pub fn terminal_score(cost: f64, leaf: &AvState, cfg: &PlannerConfig) -> f64 {
    cost + cfg.w_v * (cfg.v_limit - leaf.v).abs() * (cfg.horizon - leaf.t).max(0.0)
}

fn bucket(state: &AvState, grid: &PruneGrid) -> (i64, i64, i64) {
    (
        (state.s / grid.ds).floor() as i64,
        (state.t / grid.dt).floor() as i64,
        (state.v / grid.dv).floor() as i64,
    )
}

/// Indices of the nodes that survive grid pruning, in bucket order.
/// Per bucket the cheapest node wins; ties go to higher speed, then earlier
/// time, then earlier position in the input.
pub fn prune(candidates: &[(AvState, f64)], grid: &PruneGrid) -> Vec<usize> {
    let mut best: BTreeMap<(i64, i64, i64), usize> = BTreeMap::new();
    for (i, (st, cost)) in candidates.iter().enumerate() {
        let key = bucket(st, grid);
        match best.get(&key) {
            None => {
                best.insert(key, i);
            }
            Some(&j) => {
                let (ost, ocost) = &candidates[j];
                let better = cost < ocost
                    || (cost == ocost && (st.v > ost.v || (st.v == ost.v && st.t < ost.t)));
                if better {
                    best.insert(key, i);
                }
            }
        }
    }
    best.into_values().collect()
}

/// Planned speed profile: the chain of tree nodes and its resampling at `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub nodes: Vec<AvState>,
    pub samples: Vec<AvState>,
    pub cost: f64,
    pub score: f64,
    pub relations: RelationRecord,
    pub stop_leaf: bool,
}

impl Trajectory {
    /// Resamples a node chain at `dt`; stop leaves are held at rest until `hold_until`.
    pub fn from_nodes(nodes: Vec<AvState>, dt: f64, hold_until: Option<f64>) -> Vec<AvState> {
        let t0 = nodes[0].t;
        let t_end = nodes[nodes.len() - 1].t;
        let mut out = vec![nodes[0]];
        let mut edge = 0;
        let mut k = 1;
        loop {
            let t = t0 + k as f64 * dt;
            if t > t_end + TOL {
                break;
            }
            while edge + 2 < nodes.len() && nodes[edge + 1].t < t {
                edge += 1;
            }
            let (p, c) = (&nodes[edge], &nodes[edge + 1]);
            if c.s <= p.s {
                // waiting edge
                out.push(AvState::new(t, p.s, 0.0, c.a));
            } else {
                let tau = (t - p.t).clamp(0.0, c.t - p.t);
                let u = c.a;
                let v = (p.v + u * tau).max(0.0);
                let s = (p.s + p.v * tau + 0.5 * u * tau * tau).min(c.s);
                out.push(AvState::new(t, s, v, u));
            }
            k += 1;
        }
        if let Some(until) = hold_until {
            let last = nodes[nodes.len() - 1];
            loop {
                let t = t0 + k as f64 * dt;
                if t > until + TOL {
                    break;
                }
                out.push(AvState::new(t, last.s, 0.0, 0.0));
                k += 1;
            }
        }
        out
    }

    /// Sampled state at time `t`, linearly interpolated and clamped to the ends.
    pub fn state_at(&self, t: f64) -> AvState {
        let s = &self.samples;
        if t <= s[0].t {
            return s[0];
        }
        match s.iter().position(|p| p.t >= t) {
            None => s[s.len() - 1],
            Some(i) => {
                let (a, b) = (&s[i - 1], &s[i]);
                let f = (t - a.t) / (b.t - a.t);
                AvState::new(t, a.s + f * (b.s - a.s), a.v + f * (b.v - a.v), b.a)
            }
        }
    }

    /// Per-edge jerks of the node chain.
    pub fn edge_jerks(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| edge_jerk(&w[0], &w[1])).collect()
    }
}

/// Everything a finished search leaves behind.
#[derive(Debug, Clone)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
    /// Valid leaves with their terminal score.
    pub leaves: Vec<(usize, f64)>,
    pub stats: SearchStats,
}

impl SearchTree {
    pub fn chain(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![idx];
        while let Some(p) = self.nodes[idx].parent {
            out.push(p);
            idx = p;
        }
        out.reverse();
        out
    }

    /// Best leaf by score; ties go to the earlier leaf.
    pub fn best_leaf(&self) -> Option<(usize, f64)> {
        self.leaves
            .iter()
            .copied()
            .fold(None, |acc: Option<(usize, f64)>, (i, sc)| match acc {
                Some((_, b)) if b <= sc => acc,
                _ => Some((i, sc)),
            })
    }

    pub fn trajectory(&self, leaf: usize, score: f64, cfg: &PlannerConfig, dt: f64) -> Trajectory {
        let chain = self.chain(leaf);
        let nodes: Vec<AvState> = chain.iter().map(|&i| self.nodes[i].state).collect();
        let last = self.nodes[leaf].state;
        let stop_leaf = last.v < cfg.min_speed;
        let hold = stop_leaf.then_some(cfg.horizon.max(last.t));
        let samples = Trajectory::from_nodes(nodes.clone(), dt, hold);
        Trajectory {
            nodes,
            samples,
            cost: self.nodes[leaf].cost,
            score,
            relations: self.nodes[leaf].relations.clone(),
            stop_leaf,
        }
    }
}

/// Expands the full tree from `root`.
pub fn build_tree(
    path: &PlannedPath,
    root: AvState,
    relations: RelationRecord,
    checker: &dyn EdgeChecker,
    cfg: &PlannerConfig,
) -> SearchTree {
    let mut nodes = vec![SearchNode {
        state: root,
        parent: None,
        cost: 0.0,
        relations,
        leaf: false,
    }];
    let mut leaves = Vec::new();
    let mut stats = SearchStats::default();
    if root.v < cfg.min_speed && root.t < cfg.horizon {
        // waiting in place is always available from a standstill
        let cost = terminal_score(0.0, &AvState::new(root.t, root.s, 0.0, 0.0), cfg);
        let mut wait = nodes[0].clone();
        wait.state = AvState::new(cfg.horizon, root.s, 0.0, 0.0);
        wait.parent = Some(0);
        wait.leaf = true;
        wait.cost = cost;
        nodes.push(wait);
        leaves.push((1, cost));
    }
    let mut layer = vec![0usize];
    while !layer.is_empty() {
        stats.layers += 1;
        let mut open: Vec<SearchNode> = Vec::new();
        for &pi in &layer {
            stats.parents_expanded += 1;
            let parent = nodes[pi].clone();
            for (child, leaf) in expand_children(&parent.state, path, cfg) {
                stats.edges_checked += 1;
                let res = checker.check(&parent, &child);
                stats.add(&res.counters);
                if !res.valid {
                    continue;
                }
                let relations = res.relations.unwrap_or_else(|| parent.relations.clone());
                if leaf && child.v < cfg.min_speed && !checker.standstill_ok(&child, &relations) {
                    continue;
                }
                let node = SearchNode {
                    state: child,
                    parent: Some(pi),
                    cost: node_cost(parent.cost, &parent.state, &child, cfg),
                    relations,
                    leaf,
                };
                if leaf {
                    let sc = terminal_score(node.cost, &child, cfg);
                    nodes.push(node);
                    leaves.push((nodes.len() - 1, sc));
                } else {
                    open.push(node);
                }
            }
        }
        let keyed: Vec<(AvState, f64)> = open.iter().map(|n| (n.state, n.cost)).collect();
        let keep = prune(&keyed, &cfg.prune_grid);
        let mut keep_sorted = keep;
        keep_sorted.sort_unstable();
        let mut next = Vec::with_capacity(keep_sorted.len());
        let mut open: Vec<Option<SearchNode>> = open.into_iter().map(Some).collect();
        for i in keep_sorted {
            nodes.push(open[i].take().unwrap());
            next.push(nodes.len() - 1);
        }
        layer = next;
    }
    stats.nodes = nodes.len() as u64;
    SearchTree { nodes, leaves, stats }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub trajectory: Option<Trajectory>,
    pub stats: SearchStats,
}

/// Runs the search and extracts the best trajectory sampled at `dt`.
pub fn search(
    path: &PlannedPath,
    root: AvState,
    relations: RelationRecord,
    checker: &dyn EdgeChecker,
    cfg: &PlannerConfig,
    dt: f64,
) -> SearchOutcome {
    let tree = build_tree(path, root, relations, checker, cfg);
    let trajectory = tree
        .best_leaf()
        .map(|(leaf, score)| tree.trajectory(leaf, score, cfg, dt));
    SearchOutcome {
        trajectory,
        stats: tree.stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PlannerConfig {
        PlannerConfig::default()
    }

    #[test]
    fn sampling_distance_values() {
        let c = cfg();
        assert_eq!(sampling_distance(0.0, &c), 2.0);
        assert_eq!(sampling_distance(5.0, &c), 6.5);
        assert_eq!(sampling_distance(20.0, &c), 12.0);
    }

    #[test]
    fn control_set_spans_feasible_interval() {
        let c = cfg();
        let u = control_set(5.0, 2.0, &c);
        assert_eq!(u.len(), 7);
        assert_eq!(u[0], -4.0);
        assert_eq!(u[6], 3.0);
        assert_eq!(u[3], 0.0);
        assert_eq!(u[1], -4.0 * 2.0 / 3.0);
        assert_eq!(u[4], 1.0);
        let slow = control_set(1.0, 2.0, &c);
        assert_eq!(slow[0], -0.25);
        assert_eq!(control_set(0.0, 2.0, &c)[0], 0.0);
    }

    #[test]
    fn cam_examples() {
        let c = cam_child(&AvState::new(0.0, 0.0, 5.0, 0.0), 0.0, 5.0).unwrap();
        assert_eq!(c, AvState::new(1.0, 5.0, 5.0, 0.0));
        let c = cam_child(&AvState::new(0.0, 0.0, 0.0, 0.0), 2.0, 4.0).unwrap();
        assert_eq!(c, AvState::new(2.0, 4.0, 4.0, 2.0));
        let c = cam_child(&AvState::new(0.0, 0.0, 5.0, 0.0), -4.0, 2.0).unwrap();
        assert_eq!((c.v, c.t, c.a), (3.0, 0.5, -4.0));
        assert!(cam_child(&AvState::new(0.0, 0.0, 0.0, 0.0), 0.0, 2.0).is_none());
    }

    #[test]
    fn horizon_marks_leaf() {
        let c = cfg();
        let path = PlannedPath::straight(&c);
        let kids = expand_children(&AvState::new(5.8, 10.0, 10.0, 0.0), &path, &c);
        assert!(!kids.is_empty());
        assert!(kids.iter().all(|(k, leaf)| k.t > 6.0 && *leaf));
    }

    #[test]
    fn jerk_filter_discards_hard_changes() {
        let c = cfg();
        let path = PlannedPath::straight(&c);
        let p = AvState::new(0.0, 0.0, 10.0, 3.0);
        for (k, _) in expand_children(&p, &path, &c) {
            assert!(edge_jerk(&p, &k) >= -8.0 - 1e-9);
        }
    }

    #[test]
    fn node_cost_examples() {
        let mut c = cfg();
        let p = AvState::new(0.0, 0.0, 4.0, 1.0);
        c.v_limit = 5.0;
        let k = AvState::new(1.0, 4.5, 5.0, 0.0);
        // zero increment needs v_c = v_limit, a=0, j=0
        let p0 = AvState::new(0.0, 0.0, 5.0, 0.0);
        assert_eq!(node_cost(3.0, &p0, &AvState::new(1.0, 5.0, 5.0, 0.0), &c), 3.0);
        assert!(node_cost(0.0, &p, &k, &c) > 0.0);
        c.v_limit = 10.0;
        let p = AvState::new(0.0, 0.0, 5.0, 1.0);
        let k = AvState::new(1.0, 6.0, 5.0, 2.0);
        assert!((node_cost(1.0, &p, &k, &c) - 1.0 - 27.8).abs() < 1e-12);
        let k2 = AvState::new(2.0, 12.0, 5.0, 3.0);
        // jerk 1 over 2 s, double duration
        assert!((node_cost(0.0, &p, &k2, &c) - (5.0 * 5.0 * 2.0 + 0.5 * 9.0 * 2.0 + 0.8 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn prune_examples() {
        let g = PruneGrid { ds: 1.0, dt: 0.25, dv: 0.5 };
        let a = (AvState::new(1.0, 5.2, 4.1, 0.0), 3.0);
        let b = (AvState::new(1.1, 5.4, 4.2, 0.0), 5.0);
        assert_eq!(prune(&[a, b], &g), vec![0]);
        let c = (AvState::new(1.0, 5.2, 6.0, 0.0), 5.0);
        assert_eq!(prune(&[a, c], &g).len(), 2);
        let lo = (AvState::new(1.0, 5.0, 4.0, 0.0), 3.0);
        let hi = (AvState::new(1.0, 5.0, 4.4, 0.0), 3.0);
        assert_eq!(prune(&[lo, hi], &g), vec![1]);
    }

    #[test]
    fn unobstructed_cruise_holds_speed() {
        let c = cfg();
        let path = PlannedPath::straight(&c);
        let out = search(&path, AvState::new(0.0, 0.0, c.v_limit, 0.0), vec![], &NoCheck, &c, 0.1);
        let traj = out.trajectory.unwrap();
        assert_eq!(traj.cost, 0.0);
        for s in &traj.samples {
            assert!((s.v - c.v_limit).abs() < 1e-9 && s.a == 0.0);
        }
        assert!(traj.nodes.last().unwrap().t > c.horizon || traj.nodes.last().unwrap().s > c.distance_horizon);
    }

    #[test]
    fn resampling_follows_cam() {
        let nodes = vec![AvState::new(0.0, 0.0, 0.0, 0.0), AvState::new(2.0, 4.0, 4.0, 2.0)];
        let s = Trajectory::from_nodes(nodes, 0.5, None);
        assert_eq!(s.len(), 5);
        assert!((s[2].s - 1.0).abs() < 1e-12 && (s[2].v - 2.0).abs() < 1e-12);
        let stop = vec![AvState::new(0.0, 0.0, 2.0, 0.0), AvState::new(2.0, 2.0, 0.0, -1.0)];
        let s = Trajectory::from_nodes(stop, 0.5, Some(3.0));
        assert_eq!(s.len(), 7);
        assert_eq!(s[6], AvState::new(3.0, 2.0, 0.0, 0.0));
    }

    #[test]
    fn standing_start_accelerates() {
        let c = cfg();
        let path = PlannedPath::straight(&c);
        let t = search(&path, AvState::new(0.0, 0.0, 0.0, 0.0), vec![], &NoCheck, &c, 0.1)
            .trajectory
            .unwrap();
        assert!(!t.stop_leaf);
        assert!(t.samples[1].v > 0.0);
    }

    #[test]
    fn search_is_deterministic() {
        let c = cfg();
        let path = PlannedPath::straight(&c);
        let a = search(&path, AvState::new(0.0, 0.0, 3.0, 0.0), vec![], &NoCheck, &c, 0.1);
        let b = search(&path, AvState::new(0.0, 0.0, 3.0, 0.0), vec![], &NoCheck, &c, 0.1);
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.stats, b.stats);
    }
}
