//! Interaction relations between the AV's plan and predicted agent states:
//! overlap extraction, interaction zones, relation judgement and the
//! relation-aware edge checker.

use crate::config::PlannerConfig;
use crate::frenet::PlannedPath;
use crate::geometry::OrientedRect;
use crate::prediction::PredictionSet;
use crate::stsearch::{edge_speed, edge_time, EdgeCheckResult, EdgeChecker, EdgeCounters, SearchNode};
use crate::types::{normalize_angle, AvState, Shape};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Guard on the stop-short bound of the agent response model.
pub const FEASIBILITY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationLabel {
    #[serde(rename = "R_f")]
    Influence,
    #[serde(rename = "R_y")]
    Yield,
    #[serde(rename = "R_o")]
    Overtake,
    #[serde(rename = "R_u")]
    Undetermined,
    #[serde(rename = "R_x")]
    Invalid,
}

impl RelationLabel {
    pub fn short(&self) -> &'static str {
        match self {
            Self::Influence => "R_f",
            Self::Yield => "R_y",
            Self::Overtake => "R_o",
            Self::Undetermined => "R_u",
            Self::Invalid => "R_x",
        }
    }
}

/// Zone id → label for every zone of the planning cycle.
pub type RelationRecord = Vec<RelationLabel>;

/// One contiguous run of AV path positions whose footprint overlaps one predicted state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapPair {
    pub traj: usize,
    pub state: usize,
    pub agent_id: u32,
    pub s_k: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    pub t_ij: f64,
    pub s_ij: f64,
    pub v0: f64,
    pub zone: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionZone {
    pub id: usize,
    pub traj: usize,
    pub agent_id: u32,
    pub mode: usize,
    /// Predicted state indices belonging to the zone.
    pub states: Vec<usize>,
    /// Overlap positions on the AV path, sorted.
    pub s_values: Vec<f64>,
    pub inverse: bool,
}

impl InteractionZone {
    pub fn span(&self) -> f64 {
        self.s_values.last().unwrap() - self.s_values[0]
    }
}

/// Zones and overlap pairs of one planning cycle. Pairs are sorted by `s_k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ZoneSet {
    pub zones: Vec<InteractionZone>,
    pub pairs: Vec<OverlapPair>,
}

impl ZoneSet {
    pub fn undetermined(&self) -> RelationRecord {
        vec![RelationLabel::Undetermined; self.zones.len()]
    }

    /// Pairs with `lo <= s_k <= hi`.
    pub fn pairs_in(&self, lo: f64, hi: f64) -> &[OverlapPair] {
        let a = self.pairs.partition_point(|p| p.s_k < lo);
        let b = self.pairs.partition_point(|p| p.s_k <= hi);
        &self.pairs[a..b.max(a)]
    }

    /// Pairs whose overlap run covers `s`.
    pub fn pairs_covering(&self, s: f64) -> impl Iterator<Item = &OverlapPair> {
        self.pairs.iter().filter(move |p| p.s_lo <= s && s <= p.s_hi)
    }
}

/// Footprint of the AV with its rear axle at `pose`.
pub fn av_footprint(path: &PlannedPath, s: f64, shape: Shape, cfg: &PlannerConfig) -> OrientedRect {
    OrientedRect::from_pose(&path.pose_at(s), shape, cfg.rear_axle_offset)
}

fn rear_rect_offset(cfg: &PlannerConfig) -> f64 {
    cfg.rear_axle_offset - 0.5 * cfg.av_shape.length + 0.5 * cfg.rear_shape.length
}

/// Runs of path samples whose AV rectangle (shape, center offset) overlaps each
/// predicted state: `(traj, state, s_lo, s_hi)`.
fn overlap_runs(
    predictions: &PredictionSet,
    shapes: &dyn Fn(u32) -> Shape,
    path: &PlannedPath,
    shape: Shape,
    center_offset: f64,
) -> Vec<(usize, usize, f64, f64)> {
    let rects: Vec<OrientedRect> = path
        .samples()
        .iter()
        .map(|p| OrientedRect::from_pose(&p.pose, shape, center_offset))
        .collect();
    let mut out = Vec::new();
    for (ti, traj) in predictions.trajectories.iter().enumerate() {
        let ashape = shapes(traj.agent_id);
        for (n, st) in traj.states.iter().enumerate() {
            let arect = OrientedRect::from_pose(&st.pose, ashape, 0.0);
            let mut run: Option<(f64, f64)> = None;
            for (i, r) in rects.iter().enumerate() {
                let s = path.samples()[i].s;
                if r.intersects(&arect) {
                    run = Some(match run {
                        None => (s, s),
                        Some((lo, _)) => (lo, s),
                    });
                } else if let Some((lo, hi)) = run.take() {
                    out.push((ti, n, lo, hi));
                }
            }
            if let Some((lo, hi)) = run {
                out.push((ti, n, lo, hi));
            }
        }
    }
    out
}

/// Groups overlap runs `(s_lo, s_hi, inverse)` of one trajectory into zones
/// by single linkage: a run joins the current zone when its start lies within
/// `c_z1` of the zone's furthest overlap. Groups containing an inverse-heading
/// entry are split from the near end into chunks whose run midpoints span at
/// most `c_z2`. Returns groups of input indices and their inverse flag.
pub fn group_overlaps(entries: &[(f64, f64, bool)], c_z1: f64, c_z2: f64) -> Vec<(Vec<usize>, bool)> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].0.total_cmp(&entries[b].0).then(a.cmp(&b)));
    let mut clusters: Vec<(Vec<usize>, f64)> = Vec::new();
    for i in order {
        let (lo, hi, _) = entries[i];
        match clusters.last_mut() {
            Some((c, reach)) if lo - *reach <= c_z1 => {
                c.push(i);
                *reach = reach.max(hi);
            }
            _ => clusters.push((vec![i], hi)),
        }
    }
    let mid = |i: usize| 0.5 * (entries[i].0 + entries[i].1);
    let mut out = Vec::new();
    for (mut c, _) in clusters {
        let inverse = c.iter().any(|&i| entries[i].2);
        if !inverse {
            out.push((c, false));
            continue;
        }
        c.sort_by(|&a, &b| mid(a).total_cmp(&mid(b)).then(a.cmp(&b)));
        let mut chunk: Vec<usize> = Vec::new();
        for i in c {
            if let Some(&first) = chunk.first() {
                if mid(i) - mid(first) > c_z2 {
                    out.push((std::mem::take(&mut chunk), true));
                }
            }
            chunk.push(i);
        }
        out.push((chunk, true));
    }
    out
}

/// Overlap pairs and interaction zones of a prediction set along `path`.
pub fn build_interaction_zones(
    predictions: &PredictionSet,
    shapes: &dyn Fn(u32) -> Shape,
    path: &PlannedPath,
    cfg: &PlannerConfig,
) -> ZoneSet {
    let runs = overlap_runs(predictions, shapes, path, cfg.av_shape, cfg.rear_axle_offset);
    let mut zones = Vec::new();
    let mut pairs = Vec::new();
    for (ti, traj) in predictions.trajectories.iter().enumerate() {
        let mine: Vec<&(usize, usize, f64, f64)> = runs.iter().filter(|r| r.0 == ti).collect();
        if mine.is_empty() {
            continue;
        }
        let entries: Vec<(f64, f64, bool)> = mine
            .iter()
            .map(|&&(_, n, lo, hi)| {
                let rel = normalize_angle(traj.states[n].pose.heading - path.pose_at(0.5 * (lo + hi)).heading);
                (lo, hi, rel.abs() > FRAC_PI_2)
            })
            .collect();
        for (group, inverse) in group_overlaps(&entries, cfg.zone_gap, cfg.inverse_zone_span) {
            let id = zones.len();
            let mut states: Vec<usize> = group.iter().map(|&g| mine[g].1).collect();
            states.sort_unstable();
            states.dedup();
            let mut s_values: Vec<f64> = group.iter().map(|&g| 0.5 * (entries[g].0 + entries[g].1)).collect();
            s_values.sort_by(f64::total_cmp);
            for &g in &group {
                let (_, n, lo, hi) = *mine[g];
                let st = &traj.states[n];
                pairs.push(OverlapPair {
                    traj: ti,
                    state: n,
                    agent_id: traj.agent_id,
                    s_k: 0.5 * (lo + hi),
                    s_lo: lo,
                    s_hi: hi,
                    t_ij: st.t,
                    s_ij: st.s_along,
                    v0: traj.v0,
                    zone: id,
                });
            }
            zones.push(InteractionZone {
                id,
                traj: ti,
                agent_id: traj.agent_id,
                mode: traj.mode,
                states,
                s_values,
                inverse,
            });
        }
    }
    pairs.sort_by(|a, b| a.s_k.total_cmp(&b.s_k));
    ZoneSet { zones, pairs }
}

/// Relations known before planning, from overlaps with the AV's rear part.
pub fn initial_relations(
    zones: &ZoneSet,
    predictions: &PredictionSet,
    shapes: &dyn Fn(u32) -> Shape,
    path: &PlannedPath,
    cfg: &PlannerConfig,
) -> RelationRecord {
    let mut record = zones.undetermined();
    if zones.zones.is_empty() {
        return record;
    }
    let runs = overlap_runs(predictions, shapes, path, cfg.rear_shape, rear_rect_offset(cfg));
    let mut influence = vec![false; zones.zones.len()];
    let mut yielding = vec![false; zones.zones.len()];
    for (ti, n, lo, hi) in runs {
        let s_k = 0.5 * (lo + hi);
        let Some(full) = zones
            .pairs
            .iter()
            .find(|p| p.traj == ti && p.state == n && p.s_lo <= s_k && s_k <= p.s_hi)
        else {
            continue;
        };
        let t = predictions.trajectories[ti].states[n].t;
        if s_k <= 0.0 && t >= cfg.safety_gap {
            influence[full.zone] = true;
        }
        if s_k > 0.0 && t < cfg.safety_gap {
            yielding[full.zone] = true;
        }
    }
    for z in 0..record.len() {
        if influence[z] {
            record[z] = RelationLabel::Influence;
        } else if yielding[z] {
            record[z] = RelationLabel::Yield;
        }
    }
    record
}

/// Earliest time an agent starting at `v0` covers `s` under constant
/// acceleration `u`, or `None` when it stops short.
pub fn response_time(v0: f64, s: f64, u: f64) -> Option<f64> {
    if s <= 0.0 {
        return Some(0.0);
    }
    let disc = v0 * v0 + 2.0 * u * s;
    if disc <= 0.0 {
        return None;
    }
    let root = disc.sqrt();
    if v0 + root <= 0.0 {
        return None;
    }
    Some(2.0 * s / (v0 + root))
}

/// Whether the agent can arrive at least `c_t` after `t_k` with a deceleration
/// no harder than `a_bound`.
pub fn influence_feasible(t_k: f64, s_ij: f64, v0: f64, a_bound: f64, c_t: f64) -> bool {
    if s_ij <= 0.0 {
        return -t_k >= c_t;
    }
    if v0 <= 0.0 || a_bound <= -v0 * v0 / (2.0 * s_ij) + FEASIBILITY_EPS {
        return true;
    }
    match response_time(v0, s_ij, a_bound) {
        None => true,
        Some(t) => t - t_k >= c_t,
    }
}

pub fn judge_relation_pred(t_k: f64, t_ij: f64, c_t: f64) -> RelationLabel {
    if t_k <= t_ij - c_t {
        RelationLabel::Overtake
    } else if t_k >= t_ij + c_t {
        RelationLabel::Yield
    } else {
        RelationLabel::Invalid
    }
}

pub fn judge_relation_influ(t_k: f64, v_k: f64, t_ij: f64, s_ij: f64, v0: f64, cfg: &PlannerConfig) -> RelationLabel {
    if v_k > cfg.min_speed
        && t_k + cfg.c_f1 + cfg.c_f2 / v_k <= t_ij
        && influence_feasible(t_k, s_ij, v0, cfg.a_i_judge, cfg.safety_gap)
    {
        return RelationLabel::Influence;
    }
    judge_relation_pred(t_k, t_ij, cfg.safety_gap)
}

/// Constraint satisfied by an entry with a settled label.
pub fn constraint_holds(label: RelationLabel, t_k: f64, pair: &OverlapPair, cfg: &PlannerConfig) -> bool {
    match label {
        RelationLabel::Influence => influence_feasible(t_k, pair.s_ij, pair.v0, cfg.a_i_check, cfg.safety_gap),
        RelationLabel::Overtake => t_k - pair.t_ij <= -cfg.safety_gap,
        RelationLabel::Yield => t_k - pair.t_ij >= cfg.safety_gap,
        RelationLabel::Undetermined | RelationLabel::Invalid => false,
    }
}

/// Merged zone label when several entries of one zone disagree.
pub fn merge_labels(labels: impl IntoIterator<Item = RelationLabel>) -> Option<RelationLabel> {
    let (mut f, mut y, mut o) = (false, false, false);
    for l in labels {
        match l {
            RelationLabel::Influence => f = true,
            RelationLabel::Yield => y = true,
            RelationLabel::Overtake => o = true,
            _ => {}
        }
    }
    if y {
        Some(RelationLabel::Yield)
    } else if f {
        Some(RelationLabel::Influence)
    } else if o {
        Some(RelationLabel::Overtake)
    } else {
        None
    }
}

/// Planned arrival `(t_k, v_k)` at every overlap on the edge parent → child.
pub fn edge_entries<'a>(
    zones: &'a ZoneSet,
    parent: &AvState,
    child: &AvState,
) -> impl Iterator<Item = (&'a OverlapPair, f64, f64)> {
    let (p, u) = (*parent, child.a);
    zones.pairs_in(parent.s, child.s).iter().map(move |pair| {
        let x = pair.s_k - p.s;
        (pair, p.t + edge_time(p.v, u, x), edge_speed(p.v, u, x))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JudgeMode {
    Pred,
    Influ,
    /// No relation determination: undetermined entries only get the plain collision band.
    Off,
}

/// Relation-aware edge checker.
pub struct InteractiveChecker<'a> {
    pub zones: &'a ZoneSet,
    pub cfg: &'a PlannerConfig,
    pub judge: JudgeMode,
}

impl EdgeChecker for InteractiveChecker<'_> {
    fn check(&self, parent: &SearchNode, child: &AvState) -> EdgeCheckResult {
        let cfg = self.cfg;
        let entries: Vec<(&OverlapPair, f64, f64)> = edge_entries(self.zones, &parent.state, child).collect();
        let k = entries.len();
        if k == 0 {
            return EdgeCheckResult::accept();
        }
        let mut counters = EdgeCounters {
            entries: k as u64,
            ..Default::default()
        };
        // relation determination for undetermined entries
        let mut labels: Vec<RelationLabel> = entries
            .iter()
            .map(|(pair, t_k, v_k)| match parent.relations[pair.zone] {
                RelationLabel::Undetermined => match self.judge {
                    JudgeMode::Pred => judge_relation_pred(*t_k, pair.t_ij, cfg.safety_gap),
                    JudgeMode::Influ => judge_relation_influ(*t_k, *v_k, pair.t_ij, pair.s_ij, pair.v0, cfg),
                    JudgeMode::Off => RelationLabel::Undetermined,
                },
                l => l,
            })
            .collect();
        let mut valid: Vec<bool> = labels
            .iter()
            .zip(&entries)
            .map(|(l, (pair, t_k, _))| match l {
                RelationLabel::Invalid => false,
                RelationLabel::Undetermined => (pair.t_ij - t_k).abs() >= cfg.safety_gap,
                _ => true,
            })
            .collect();
        for target in [RelationLabel::Influence, RelationLabel::Overtake, RelationLabel::Yield] {
            counters.constraint_checks += k as u64;
            for i in 0..k {
                if labels[i] == target {
                    counters.constraint_checks += 1;
                    let (pair, t_k, _) = entries[i];
                    valid[i] = valid[i] && constraint_holds(target, t_k, pair, cfg);
                }
            }
        }
        // conflicting reactions inside one zone
        let mut touched: Vec<usize> = entries.iter().map(|e| e.0.zone).collect();
        touched.sort_unstable();
        touched.dedup();
        counters.zones_touched = touched.len() as u64;
        for &z in &touched {
            counters.conflict_touches += 1;
            let (mut o, mut y) = (false, false);
            for (i, e) in entries.iter().enumerate() {
                if e.0.zone == z {
                    counters.conflict_touches += 1;
                    o |= labels[i] == RelationLabel::Overtake;
                    y |= labels[i] == RelationLabel::Yield;
                }
            }
            if o && y {
                valid.iter_mut().for_each(|v| *v = false);
            }
        }
        let ok = valid.iter().all(|v| *v);
        let relations = ok.then(|| {
            let mut rec = parent.relations.clone();
            for &z in &touched {
                if rec[z] == RelationLabel::Undetermined {
                    let zl = entries
                        .iter()
                        .zip(labels.iter_mut())
                        .filter(|(e, _)| e.0.zone == z)
                        .map(|(_, l)| *l);
                    if let Some(m) = merge_labels(zl) {
                        rec[z] = m;
                    }
                }
            }
            rec
        });
        EdgeCheckResult {
            valid: ok,
            relations,
            counters,
        }
    }

    fn standstill_ok(&self, state: &AvState, relations: &RelationRecord) -> bool {
        self.zones.pairs_covering(state.s).all(|p| {
            if relations[p.zone] == RelationLabel::Influence {
                influence_feasible(state.t, p.s_ij, p.v0, self.cfg.a_i_check, self.cfg.safety_gap)
            } else {
                p.t_ij <= state.t - self.cfg.safety_gap
            }
        })
    }
}
