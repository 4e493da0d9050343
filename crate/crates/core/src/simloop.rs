//! Closed-loop simulation: plan, track perfectly, move agents, detect collisions.

use crate::baselines::{plan_cycle, PlannerFlags, PlannerVariant};
use crate::config::PlannerConfig;
use crate::frenet::{generate_merge_path, project_to_frenet, PlannedPath, Route};
use crate::geometry::OrientedRect;
use crate::interaction::RelationLabel;
use crate::prediction::{degrade_predictions, predict_route_following, PredictedTrajectory, PredictionSet};
use crate::scenario::{AgentDescriptor, Behavior, ReactiveParams, Scenario, TimedPose};
use crate::stsearch::SearchStats;
use crate::types::{normalize_angle, AvState, PoseState, Shape};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Lookahead of a reactive agent's corridor.
pub const CORRIDOR_LENGTH: f64 = 20.0;
/// Part of the last plan a reactive agent treats as committed.
pub const COMMITTED_HORIZON: f64 = 1.0;
pub const RECOVERY_ACCEL: f64 = 1.0;
const GAP_MARGIN: f64 = 1.0;
const MIN_GAP: f64 = 0.5;
const CORRIDOR_STEP: f64 = 0.5;
/// Agents beyond this distance do not count toward reaction cost.
pub const REACTION_RANGE: f64 = 40.0;
pub const STATIONARY_SPEED: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub lateral: f64,
    pub timing: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { lateral: 0.0, timing: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub variant: PlannerVariant,
    pub flags: PlannerFlags,
    pub pred_k: usize,
    pub seed: u64,
    pub noise: NoiseSpec,
}

impl SimOptions {
    pub fn new(variant: PlannerVariant, pred_k: usize, seed: u64) -> Self {
        Self {
            variant,
            flags: variant.default_flags(),
            pred_k,
            seed,
            noise: NoiseSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollisionClass {
    Rear,
    Stationary,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub other_id: u32,
    pub classification: CollisionClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvLog {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub a: f64,
    /// Progress along the reference route since the start.
    pub progress: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentLog {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneLog {
    pub id: usize,
    pub agent_id: u32,
    pub mode: usize,
    pub inverse: bool,
    pub s_lo: f64,
    pub s_hi: f64,
    pub initial: RelationLabel,
    /// Label on the chosen plan's leaf.
    pub planned: Option<RelationLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapLog {
    pub s_k: f64,
    pub t_ij: f64,
    pub zone: usize,
}

/// Everything observable at one simulation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub t: f64,
    pub av: AvLog,
    pub agents: Vec<AgentLog>,
    pub status: PlanStatus,
    /// Planned samples `[t, s, v, a]` relative to the cycle start.
    pub plan: Vec<[f64; 4]>,
    /// Tree nodes of the plan, same layout.
    pub plan_nodes: Vec<[f64; 4]>,
    pub zones: Vec<ZoneLog>,
    pub overlaps: Vec<OverlapLog>,
    pub influence_established: usize,
    pub stats: SearchStats,
    /// Collision episodes that began during this step.
    pub collisions: Vec<CollisionEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub scenario: String,
    pub variant: PlannerVariant,
    pub flags: PlannerFlags,
    pub pred_k: usize,
    pub seed: u64,
    pub dt: f64,
    pub duration: f64,
    pub task_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Duration,
    Completed,
    Collision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub t: f64,
    pub av: AvLog,
    pub agents: Vec<AgentLog>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub header: LogHeader,
    pub steps: Vec<StepLog>,
    pub end: FinalState,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LogLine {
    Header(LogHeader),
    Step(Box<StepLog>),
    End(FinalState),
}

impl SimLog {
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &LogLine::Header(self.header.clone()))?;
        writeln!(w)?;
        for s in &self.steps {
            serde_json::to_writer(&mut w, &LogLine::Step(Box::new(s.clone())))?;
            writeln!(w)?;
        }
        serde_json::to_writer(&mut w, &LogLine::End(self.end.clone()))?;
        writeln!(w)
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self, String> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut end = None;
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogLine>(&line).map_err(|e| format!("line {}: {e}", i + 1))? {
                LogLine::Header(h) => header = Some(h),
                LogLine::Step(s) => steps.push(*s),
                LogLine::End(e) => end = Some(e),
            }
        }
        Ok(SimLog {
            header: header.ok_or("missing header line")?,
            steps,
            end: end.ok_or("missing end line")?,
        })
    }

    pub fn failed_cycles(&self) -> usize {
        self.steps.iter().filter(|s| s.status == PlanStatus::Failed).count()
    }

    pub fn influence_established(&self) -> usize {
        self.steps.iter().map(|s| s.influence_established).sum()
    }

    /// AV snapshots at every step plus the final one.
    pub fn av_series(&self) -> Vec<AvLog> {
        self.steps.iter().map(|s| s.av).chain(std::iter::once(self.end.av)).collect()
    }

    /// Route progress at time `t` (last step at or before `t`).
    pub fn progress_at(&self, t: f64) -> f64 {
        let mut p = 0.0;
        for s in &self.steps {
            if s.t <= t + 1e-9 {
                p = s.av.progress;
            }
        }
        if self.end.t <= t + 1e-9 {
            p = self.end.av.progress;
        }
        p
    }

    /// Lowest speed reached by agent `id`.
    pub fn agent_min_speed(&self, id: u32) -> Option<f64> {
        self.steps
            .iter()
            .flat_map(|s| s.agents.iter())
            .chain(self.end.agents.iter())
            .filter(|a| a.id == id)
            .map(|a| a.v)
            .reduce(f64::min)
    }
}

/// Mutable agent state during simulation.
#[derive(Debug, Clone)]
pub struct AgentRuntime {
    pub id: u32,
    pub shape: Shape,
    pub pose: PoseState,
    pub v: f64,
    pub a: f64,
    /// Arc length along the agent's route (reactive agents).
    pub route_s: f64,
}

impl AgentRuntime {
    pub fn rect(&self) -> OrientedRect {
        OrientedRect::from_pose(&self.pose, self.shape, 0.0)
    }

    fn log(&self) -> AgentLog {
        AgentLog {
            id: self.id,
            x: self.pose.x,
            y: self.pose.y,
            heading: self.pose.heading,
            v: self.v,
            a: self.a,
        }
    }
}

/// Scripted pose and speed at time `t`; the end poses are held.
pub fn scripted_state(traj: &[TimedPose], t: f64) -> (PoseState, f64) {
    let n = traj.len();
    if n == 1 || t <= traj[0].t {
        let v = if n > 1 { segment_speed(&traj[0], &traj[1]) } else { 0.0 };
        return (traj[0].pose, if t < traj[0].t { 0.0 } else { v });
    }
    if t >= traj[n - 1].t {
        return (traj[n - 1].pose, 0.0);
    }
    let i = traj.partition_point(|p| p.t <= t) - 1;
    let (a, b) = (&traj[i], &traj[i + 1]);
    let f = (t - a.t) / (b.t - a.t);
    let pose = PoseState::new(
        a.pose.x + f * (b.pose.x - a.pose.x),
        a.pose.y + f * (b.pose.y - a.pose.y),
        a.pose.heading + f * normalize_angle(b.pose.heading - a.pose.heading),
    );
    (pose, segment_speed(a, b))
}

fn segment_speed(a: &TimedPose, b: &TimedPose) -> f64 {
    a.pose.distance(&b.pose) / (b.t - a.t)
}

pub fn init_agents(scenario: &Scenario) -> Vec<AgentRuntime> {
    scenario
        .agents
        .iter()
        .map(|d| match &d.behavior {
            Behavior::Scripted(tr) => {
                let (pose, v) = scripted_state(tr, 0.0);
                AgentRuntime {
                    id: d.id,
                    shape: d.shape,
                    pose,
                    v,
                    a: 0.0,
                    route_s: 0.0,
                }
            }
            Behavior::Reactive(r) => {
                let route = d.route.as_ref().expect("validated reactive route");
                AgentRuntime {
                    id: d.id,
                    shape: d.shape,
                    pose: route.pose_at(r.start_s),
                    v: r.v0.unwrap_or(r.speed),
                    a: 0.0,
                    route_s: r.start_s,
                }
            }
        })
        .collect()
}

/// One AV footprint seen by reactive agents, `lead` seconds from now.
#[derive(Debug, Clone, Copy)]
pub struct AvFootprint {
    pub lead: f64,
    pub rect: OrientedRect,
    pub heading: f64,
    pub v: f64,
}

fn reactive_step(agent: &mut AgentRuntime, route: &Route, params: &ReactiveParams, av: &[AvFootprint], dt: f64) {
    let mut first_hit: Vec<Option<(f64, f64)>> = vec![None; av.len()];
    let mut d = CORRIDOR_STEP;
    while d <= CORRIDOR_LENGTH + 1e-9 {
        let pose = route.pose_at(agent.route_s + d);
        let probe = OrientedRect::from_pose(&pose, agent.shape, 0.0);
        for (hit, f) in first_hit.iter_mut().zip(av) {
            if hit.is_none() && probe.intersects(&f.rect) {
                *hit = Some((d, pose.heading));
            }
        }
        d += CORRIDOR_STEP;
    }
    let v = agent.v;
    // keep the gap to the nearest AV position the AV reaches first; the AV's
    // speed along the corridor sets the closing speed
    let blocking = first_hit
        .iter()
        .zip(av)
        .filter_map(|(hit, f)| {
            let (g, heading) = (*hit)?;
            (v <= 0.0 || g / v >= f.lead).then(|| (g, (f.v * normalize_angle(f.heading - heading).cos()).max(0.0)))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let accel = match blocking {
        Some((g, v_lead)) => {
            let closing = (v - v_lead).max(0.0);
            (-closing * closing / (2.0 * (g - GAP_MARGIN).max(MIN_GAP))).clamp(params.a_lo, 0.0)
        }
        None if v < params.speed => params.a_hi.min(RECOVERY_ACCEL).min((params.speed - v) / dt),
        None => 0.0,
    };
    let v_next = (v + accel * dt).max(0.0);
    agent.route_s += 0.5 * (v + v_next) * dt;
    agent.a = (v_next - v) / dt;
    agent.v = v_next;
    agent.pose = route.pose_at(agent.route_s);
}

/// Advances every agent to `t_next`. Reactive agents brake for the AV
/// footprints in `av` (current and committed near-term positions) unless they
/// would reach a committed position before the AV does.
pub fn step_agents(
    agents: &mut [AgentRuntime],
    descriptors: &[AgentDescriptor],
    t_next: f64,
    dt: f64,
    av: &[AvFootprint],
) {
    for (agent, desc) in agents.iter_mut().zip(descriptors) {
        match &desc.behavior {
            Behavior::Scripted(tr) => {
                let (pose, v) = scripted_state(tr, t_next);
                agent.a = (v - agent.v) / dt;
                agent.v = v;
                agent.pose = pose;
            }
            Behavior::Reactive(params) => {
                let route = desc.route.as_ref().expect("validated reactive route");
                reactive_step(agent, route, params, av, dt);
            }
        }
    }
}

/// Classifies every agent overlapping the AV footprint.
pub fn detect_collisions(av_rect: &OrientedRect, av_v: f64, agents: &[AgentRuntime]) -> Vec<CollisionEvent> {
    agents
        .iter()
        .filter_map(|a| {
            let (cx, cy) = av_rect.contact_centroid(&a.rect())?;
            let (forward, _) = av_rect.to_local(cx, cy);
            let classification = if forward < 0.0 && a.v > av_v {
                CollisionClass::Rear
            } else if av_v < STATIONARY_SPEED {
                CollisionClass::Stationary
            } else {
                CollisionClass::Valid
            };
            Some(CollisionEvent {
                other_id: a.id,
                classification,
            })
        })
        .collect()
}

fn ray_route(pose: &PoseState, length: f64) -> Route {
    let (s, c) = pose.heading.sin_cos();
    Route::new(&[[pose.x, pose.y], [pose.x + length * c, pose.y + length * s]], 0.5).expect("non-degenerate ray")
}

/// Snapshot of all agents' predictions for one cycle.
pub fn predict_agents(
    agents: &[AgentRuntime],
    descriptors: &[AgentDescriptor],
    k: usize,
    cfg: &PlannerConfig,
) -> PredictionSet {
    let mut all: Vec<PredictedTrajectory> = Vec::new();
    for (a, d) in agents.iter().zip(descriptors) {
        let ray;
        let route = match &d.route {
            Some(r) => r,
            None => {
                ray = ray_route(&a.pose, a.v * cfg.pred_horizon + 10.0 + 2.0 * cfg.pred_horizon * cfg.pred_horizon);
                &ray
            }
        };
        let modes = predict_route_following(
            a.id,
            a.pose,
            a.v,
            Some(route),
            k.min(cfg.accel_set.len()),
            cfg.pred_horizon,
            cfg.pred_interval,
            &cfg.accel_set,
        )
        .expect("route supplied and k clamped");
        all.extend(modes);
    }
    PredictionSet::new(all)
}

/// Merge path from the AV pose, falling back to a straight ray when no merge is possible.
pub fn plan_path(route: &Route, pose: &PoseState, cfg: &PlannerConfig) -> PlannedPath {
    let ray = |p: &PoseState| {
        let r = ray_route(p, cfg.distance_horizon + 60.0);
        PlannedPath::along_route(&r, 0.0, cfg)
    };
    match project_to_frenet(route, pose) {
        Ok(f) => generate_merge_path(route, &f, &cfg.s_f_candidates, cfg).unwrap_or_else(|_| ray(pose)),
        Err(_) => ray(pose),
    }
}

fn av_rect(pose: &PoseState, cfg: &PlannerConfig) -> OrientedRect {
    OrientedRect::from_pose(pose, cfg.av_shape, cfg.rear_axle_offset)
}

fn seed_for_step(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (step as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

fn as_row(s: &AvState) -> [f64; 4] {
    [s.t, s.s, s.v, s.a]
}

/// Runs one scenario in closed loop.
pub fn run_closed_loop(scenario: &Scenario, name: &str, opts: &SimOptions, base_cfg: &PlannerConfig) -> SimLog {
    let mut cfg = base_cfg.clone();
    if let Some(v) = scenario.speed_limit {
        cfg.v_limit = v;
    }
    let dt = scenario.dt;
    let shapes_tbl: Vec<(u32, Shape)> = scenario.agents.iter().map(|a| (a.id, a.shape)).collect();
    let shapes = move |id: u32| {
        shapes_tbl
            .iter()
            .find(|(i, _)| *i == id)
            .map(|(_, s)| *s)
            .unwrap_or(Shape::new(4.5, 1.8))
    };
    let route = &scenario.route;
    let mut pose = scenario.av.pose();
    let mut v = scenario.av.v;
    let mut a = scenario.av.a.clamp(cfg.a_min(), cfg.a_max());
    let start_s = route.project(pose.x, pose.y).0;
    let mut progress = 0.0f64;
    let mut agents = init_agents(scenario);
    let mut in_contact: Vec<u32> = Vec::new();
    let mut steps = Vec::new();
    let mut termination = Termination::Duration;
    let n_steps = scenario.step_count();
    let mut t = 0.0;

    for step in 0..n_steps {
        t = step as f64 * dt;
        let preds = predict_agents(&agents, &scenario.agents, opts.pred_k.max(1), &cfg);
        let preds = degrade_predictions(&preds, opts.noise.lateral, opts.noise.timing, seed_for_step(opts.seed, step));
        let path = plan_path(route, &pose, &cfg);
        let root = AvState::new(0.0, 0.0, v, a);
        let out = plan_cycle(opts.variant, opts.flags, &path, &preds, &shapes, root, &cfg, dt);

        let (status, next, committed): (PlanStatus, AvState, Vec<AvState>) = match &out.trajectory {
            Some(tr) => {
                let next = tr.samples.get(1).copied().unwrap_or(tr.samples[0]);
                let committed = tr
                    .samples
                    .iter()
                    .filter(|s| s.t >= dt - 1e-9 && s.t <= dt + COMMITTED_HORIZON + 1e-9)
                    .copied()
                    .collect();
                (PlanStatus::Ok, next, committed)
            }
            None => {
                let mut fallback = Vec::new();
                let (mut fs, mut fv) = (0.0, v);
                let mut tt = 0.0;
                while tt < COMMITTED_HORIZON + dt - 1e-9 {
                    let nv = (fv + cfg.fallback_decel * dt).max(0.0);
                    fs += 0.5 * (fv + nv) * dt;
                    tt += dt;
                    fallback.push(AvState::new(tt, fs, nv, (nv - fv) / dt));
                    fv = nv;
                }
                (PlanStatus::Failed, fallback[0], fallback)
            }
        };

        let zones: Vec<ZoneLog> = out
            .zones
            .zones
            .iter()
            .map(|z| ZoneLog {
                id: z.id,
                agent_id: z.agent_id,
                mode: z.mode,
                inverse: z.inverse,
                s_lo: z.s_values[0],
                s_hi: *z.s_values.last().unwrap(),
                initial: out.initial[z.id],
                planned: out.trajectory.as_ref().and_then(|t| t.relations.get(z.id).copied()),
            })
            .collect();
        let overlaps = out
            .zones
            .pairs
            .iter()
            .map(|p| OverlapLog {
                s_k: p.s_k,
                t_ij: p.t_ij,
                zone: p.zone,
            })
            .collect();
        let mut log = StepLog {
            step,
            t,
            av: AvLog {
                x: pose.x,
                y: pose.y,
                heading: pose.heading,
                v,
                a,
                progress,
            },
            agents: agents.iter().map(|a| a.log()).collect(),
            status,
            plan: out.trajectory.as_ref().map_or_else(Vec::new, |t| t.samples.iter().map(as_row).collect()),
            plan_nodes: out.trajectory.as_ref().map_or_else(Vec::new, |t| t.nodes.iter().map(as_row).collect()),
            zones,
            overlaps,
            influence_established: out.influence_established(),
            stats: out.stats,
            collisions: Vec::new(),
        };

        // perfect tracking along this cycle's path
        pose = path.pose_at(next.s);
        v = next.v;
        a = next.a;
        let mut footprints = vec![AvFootprint {
            lead: 0.0,
            rect: av_rect(&pose, &cfg),
            heading: pose.heading,
            v,
        }];
        footprints.extend(committed.iter().skip(1).map(|s| {
            let p = path.pose_at(s.s);
            AvFootprint {
                lead: s.t - next.t,
                rect: av_rect(&p, &cfg),
                heading: p.heading,
                v: s.v,
            }
        }));
        step_agents(&mut agents, &scenario.agents, t + dt, dt, &footprints);

        let contacts = detect_collisions(&footprints[0].rect, v, &agents);
        let mut stop = false;
        for c in &contacts {
            if !in_contact.contains(&c.other_id) {
                log.collisions.push(*c);
                if c.classification != CollisionClass::Rear {
                    stop = true;
                }
            }
        }
        in_contact = contacts.iter().map(|c| c.other_id).collect();
        let (s_r, _) = route.project(pose.x, pose.y);
        progress = progress.max((s_r - start_s).clamp(0.0, scenario.task_length));
        steps.push(log);
        t += dt;
        if stop {
            termination = Termination::Collision;
            break;
        }
        if progress >= scenario.task_length - 1e-9 {
            termination = Termination::Completed;
            break;
        }
    }
    SimLog {
        header: LogHeader {
            scenario: name.to_string(),
            variant: opts.variant,
            flags: opts.flags,
            pred_k: opts.pred_k,
            seed: opts.seed,
            dt,
            duration: scenario.duration,
            task_length: scenario.task_length,
        },
        steps,
        end: FinalState {
            t,
            av: AvLog {
                x: pose.x,
                y: pose.y,
                heading: pose.heading,
                v,
                a,
                progress,
            },
            agents: agents.iter().map(|a| a.log()).collect(),
            termination,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dist: f64,
    pub fr: f64,
    pub jerk: f64,
    pub rc: f64,
    pub ct: usize,
    pub rct: usize,
}

/// Σ (Δa/dt)²·dt over the executed AV accelerations.
pub fn jerk_cost(log: &SimLog) -> f64 {
    let dt = log.header.dt;
    log.av_series()
        .windows(2)
        .map(|w| {
            let j = (w[1].a - w[0].a) / dt;
            j * j * dt
        })
        .sum()
}

/// Σ a²·dt over decelerating agents within range of the AV.
pub fn reaction_cost(log: &SimLog) -> f64 {
    let dt = log.header.dt;
    let snaps = log
        .steps
        .iter()
        .map(|s| (&s.av, &s.agents))
        .chain(std::iter::once((&log.end.av, &log.end.agents)));
    snaps
        .skip(1)
        .map(|(av, agents)| {
            agents
                .iter()
                .filter(|a| a.a < 0.0 && (a.x - av.x).hypot(a.y - av.y) <= REACTION_RANGE)
                .map(|a| a.a * a.a * dt)
                .sum::<f64>()
        })
        .sum()
}

pub fn collision_counts(log: &SimLog) -> (usize, usize) {
    let mut ct = 0;
    let mut rct = 0;
    for c in log.steps.iter().flat_map(|s| &s.collisions) {
        match c.classification {
            CollisionClass::Valid => ct += 1,
            CollisionClass::Rear => rct += 1,
            CollisionClass::Stationary => {}
        }
    }
    (ct, rct)
}

/// Driving metrics over a batch of runs.
pub fn compute_metrics(logs: &[SimLog]) -> MetricsReport {
    if logs.is_empty() {
        return MetricsReport::default();
    }
    let n = logs.len() as f64;
    let cycles: usize = logs.iter().map(|l| l.steps.len()).sum();
    let failed: usize = logs.iter().map(|l| l.failed_cycles()).sum();
    let (mut ct, mut rct) = (0, 0);
    for l in logs {
        let (c, r) = collision_counts(l);
        ct += c;
        rct += r;
    }
    MetricsReport {
        dist: logs.iter().map(|l| l.end.av.progress).sum::<f64>() / n,
        fr: if cycles == 0 { 0.0 } else { failed as f64 / cycles as f64 },
        jerk: logs.iter().map(jerk_cost).sum::<f64>() / n,
        rc: logs.iter().map(reaction_cost).sum::<f64>() / n,
        ct,
        rct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(agents: &str, duration: f64) -> Scenario {
        Scenario::from_json_str(&format!(
            r#"{{"route": [[0,0],[400,0]], "av": {{"x":0,"y":0,"heading":0,"v":13.9}}, "task_length": 150,
                "agents": [{agents}], "duration": {duration}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn scripted_interpolation() {
        let tr = vec![
            TimedPose { t: 2.0, pose: PoseState::new(0.0, 0.0, 0.0) },
            TimedPose { t: 2.5, pose: PoseState::new(1.0, 0.0, 0.0) },
        ];
        let (p, v) = scripted_state(&tr, 2.3);
        assert!((p.x - 0.6).abs() < 1e-12 && (v - 2.0).abs() < 1e-12);
        assert_eq!(scripted_state(&tr, 9.0).0, tr[1].pose);
        assert_eq!(scripted_state(&tr, 0.0).0, tr[0].pose);
    }

    fn reactive_agent(v: f64) -> (AgentRuntime, Route, ReactiveParams) {
        let route = Route::straight(200.0);
        let params = ReactiveParams { a_lo: -3.0, a_hi: 2.0, speed: 10.0, start_s: 0.0, v0: None };
        let agent = AgentRuntime {
            id: 1,
            shape: Shape::new(4.0, 1.8),
            pose: route.pose_at(0.0),
            v,
            a: 0.0,
            route_s: 0.0,
        };
        (agent, route, params)
    }

    #[test]
    fn reactive_agent_brakes_within_bound() {
        let (mut a, route, p) = reactive_agent(10.0);
        let rect = OrientedRect::new(8.0, 0.0, 0.0, 4.8, 2.0);
        for _ in 0..5 {
            let before = a.v;
            reactive_step(&mut a, &route, &p, &[AvFootprint { lead: 0.0, rect, heading: 0.0, v: 0.0 }], 0.1);
            assert!(a.v < before);
            assert!(before - a.v <= 3.0 * 0.1 + 1e-12);
        }
    }

    #[test]
    fn reactive_agent_ignores_positions_it_clears_first() {
        let (mut a, route, p) = reactive_agent(10.0);
        let rect = OrientedRect::new(15.0, 0.0, 0.0, 4.8, 2.0);
        // probe first meets the rect near d = 10.5, about 1 s away
        reactive_step(&mut a, &route, &p, &[AvFootprint { lead: 1.5, rect, heading: 0.0, v: 0.0 }], 0.1);
        assert_eq!(a.v, 10.0);
        reactive_step(&mut a, &route, &p, &[AvFootprint { lead: 0.8, rect, heading: 0.0, v: 0.0 }], 0.1);
        assert!(a.v < 10.0);
    }

    #[test]
    fn reactive_agent_keeps_gap_to_moving_av() {
        let (mut a, route, p) = reactive_agent(10.0);
        let rect = OrientedRect::new(12.0, 0.0, 0.0, 4.8, 2.0);
        reactive_step(&mut a, &route, &p, &[AvFootprint { lead: 0.0, rect, heading: 0.0, v: 10.0 }], 0.1);
        assert_eq!(a.v, 10.0);
        let (mut a, route, p) = reactive_agent(10.0);
        reactive_step(&mut a, &route, &p, &[AvFootprint { lead: 0.0, rect, heading: 0.0, v: 6.0 }], 0.1);
        assert!(a.v < 10.0);
        // a crossing AV contributes no speed along the corridor
        let (mut b, route, p) = reactive_agent(10.0);
        reactive_step(&mut b, &route, &p, &[AvFootprint { lead: 0.0, rect, heading: std::f64::consts::FRAC_PI_2, v: 10.0 }], 0.1);
        assert!(b.v < a.v);
    }

    #[test]
    fn reactive_agent_recovers_when_clear() {
        let (mut a, route, p) = reactive_agent(6.0);
        reactive_step(&mut a, &route, &p, &[], 0.1);
        assert!((a.v - 6.1).abs() < 1e-12);
        let (mut a, route, p) = reactive_agent(9.95);
        reactive_step(&mut a, &route, &p, &[], 0.1);
        assert!((a.v - 10.0).abs() < 1e-12);
    }

    fn runtime(id: u32, x: f64, y: f64, h: f64, v: f64) -> AgentRuntime {
        AgentRuntime {
            id,
            shape: Shape::new(4.0, 1.8),
            pose: PoseState::new(x, y, h),
            v,
            a: 0.0,
            route_s: 0.0,
        }
    }

    #[test]
    fn collision_classes() {
        let cfg = PlannerConfig::default();
        let av = av_rect(&PoseState::new(0.0, 0.0, 0.0), &cfg);
        assert!(detect_collisions(&av, 0.0, &[runtime(1, 30.0, 0.0, 0.0, 5.0)]).is_empty());
        // rear-ended while stopped: contact behind the AV center
        let rear = detect_collisions(&av, 0.0, &[runtime(2, -2.5, 0.0, 0.0, 5.0)]);
        assert_eq!(rear[0].classification, CollisionClass::Rear);
        // front strike into a crossing agent
        let front = detect_collisions(&av, 3.0, &[runtime(3, 4.4, 0.0, 1.57, 4.0)]);
        assert_eq!(front[0].classification, CollisionClass::Valid);
        let parked = detect_collisions(&av, 0.0, &[runtime(4, 4.4, 0.0, 1.57, 0.0)]);
        assert_eq!(parked[0].classification, CollisionClass::Stationary);
    }

    #[test]
    fn unobstructed_run_completes() {
        let s = straight("", 20.0);
        let log = run_closed_loop(&s, "straight", &SimOptions::new(PlannerVariant::IrInflu, 1, 0), &PlannerConfig::default());
        assert_eq!(log.end.termination, Termination::Completed);
        let m = compute_metrics(std::slice::from_ref(&log));
        assert!((m.dist - 150.0).abs() < 1e-9);
        assert_eq!((m.fr, m.ct, m.rct), (0.0, 0, 0));
        assert!(m.jerk.abs() < 1e-9);
        assert!(log.steps.iter().all(|s| (s.av.v - 13.9).abs() < 1e-9));
    }

    #[test]
    fn metrics_examples() {
        let s = straight("", 10.0);
        let mut log = run_closed_loop(&s, "x", &SimOptions::new(PlannerVariant::Ca, 1, 0), &PlannerConfig::default());
        log.steps.truncate(100);
        for st in log.steps.iter_mut() {
            st.status = PlanStatus::Ok;
        }
        log.steps[3].status = PlanStatus::Failed;
        assert!((compute_metrics(std::slice::from_ref(&log)).fr - 0.01).abs() < 1e-12);
        for st in log.steps.iter_mut() {
            st.agents = vec![AgentLog { id: 9, x: st.av.x + 10.0, y: 0.0, heading: 0.0, v: 5.0, a: 0.0 }];
        }
        log.end.agents = vec![];
        for k in 1..=10 {
            log.steps[k].agents[0].a = -2.0;
        }
        assert!((reaction_cost(&log) - 4.0).abs() < 1e-9);
        log.steps[5].agents[0].x += 100.0;
        assert!((reaction_cost(&log) - 3.6).abs() < 1e-9);
    }

    #[test]
    fn jsonl_round_trip() {
        let s = straight(r#"{"id": 5, "shape": {"l": 4, "w": 1.8}, "behavior": "scripted", "trajectory": [[0, 60, 3.5, 3.14159], [10, 0, 3.5, 3.14159]]}"#, 3.0);
        let log = run_closed_loop(&s, "x", &SimOptions::new(PlannerVariant::IrInflu, 2, 3), &PlannerConfig::default());
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), log.steps.len() + 2);
        let back = SimLog::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn closed_loop_is_deterministic() {
        let s = straight(r#"{"id": 5, "shape": {"l": 4, "w": 1.8}, "behavior": "scripted", "trajectory": [[0, 40, 0, 0], [10, 80, 0, 0]]}"#, 5.0);
        let mut o = SimOptions::new(PlannerVariant::IrInflu, 3, 11);
        o.noise = NoiseSpec { lateral: 0.3, timing: 0.1 };
        let a = run_closed_loop(&s, "x", &o, &PlannerConfig::default()).to_jsonl();
        let b = run_closed_loop(&s, "x", &o, &PlannerConfig::default()).to_jsonl();
        assert_eq!(a, b);
    }
}
