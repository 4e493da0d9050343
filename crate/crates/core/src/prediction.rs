//! Kinematic multi-modal predictors.

use crate::frenet::Route;
use crate::types::PoseState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PredictionError {
    #[error("agent {0} has no route")]
    MissingRoute(u32),
    #[error("requested {k} modes but only {available} accelerations are configured")]
    TooManyModes { k: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedState {
    pub s_along: f64,
    pub t: f64,
    pub pose: PoseState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrajectory {
    pub agent_id: u32,
    pub mode: usize,
    pub states: Vec<PredictedState>,
    pub v0: f64,
}

/// All modal trajectories of all agents, ordered by agent then mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub trajectories: Vec<PredictedTrajectory>,
}

impl PredictionSet {
    pub fn new(mut trajectories: Vec<PredictedTrajectory>) -> Self {
        trajectories.sort_by_key(|t| (t.agent_id, t.mode));
        Self { trajectories }
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    /// Largest number of modes of any agent.
    pub fn max_modes(&self) -> usize {
        self.trajectories.iter().map(|t| t.mode + 1).max().unwrap_or(0)
    }

    /// Subset holding only mode `j` of every agent.
    pub fn mode(&self, j: usize) -> PredictionSet {
        PredictionSet {
            trajectories: self.trajectories.iter().filter(|t| t.mode == j).cloned().collect(),
        }
    }

    pub fn retain_agents(&self, keep: impl Fn(u32) -> bool) -> PredictionSet {
        PredictionSet {
            trajectories: self.trajectories.iter().filter(|t| keep(t.agent_id)).cloned().collect(),
        }
    }
}

fn state_count(horizon: f64, interval: f64) -> usize {
    (horizon / interval + 1e-9).floor() as usize + 1
}

/// Distance and speed after `t` seconds of constant acceleration `a`, stopping at zero speed.
pub fn cam_advance(v0: f64, a: f64, t: f64) -> (f64, f64) {
    if a < 0.0 {
        let t_stop = v0 / -a;
        if t >= t_stop {
            return (0.5 * v0 * t_stop, 0.0);
        }
    }
    (v0 * t + 0.5 * a * t * t, (v0 + a * t).max(0.0))
}

/// Straight-line constant-velocity prediction.
pub fn predict_constant_velocity(
    agent_id: u32,
    pose: PoseState,
    v: f64,
    horizon: f64,
    interval: f64,
) -> PredictedTrajectory {
    let (s, c) = pose.heading.sin_cos();
    let states = (0..state_count(horizon, interval))
        .map(|n| {
            let t = n as f64 * interval;
            let d = v * t;
            PredictedState {
                s_along: d,
                t,
                pose: PoseState::new(pose.x + d * c, pose.y + d * s, pose.heading),
            }
        })
        .collect();
    PredictedTrajectory {
        agent_id,
        mode: 0,
        states,
        v0: v,
    }
}

/// One trajectory per acceleration in `accel_set[..k]`, each following `route`
/// from the agent's projected position.
#[allow(clippy::too_many_arguments)]
pub fn predict_route_following(
    agent_id: u32,
    pose: PoseState,
    v: f64,
    route: Option<&Route>,
    k: usize,
    horizon: f64,
    interval: f64,
    accel_set: &[f64],
) -> Result<Vec<PredictedTrajectory>, PredictionError> {
    let route = route.ok_or(PredictionError::MissingRoute(agent_id))?;
    if k > accel_set.len() {
        return Err(PredictionError::TooManyModes {
            k,
            available: accel_set.len(),
        });
    }
    let (s0, _) = route.project(pose.x, pose.y);
    let n = state_count(horizon, interval);
    Ok(accel_set[..k]
        .iter()
        .enumerate()
        .map(|(mode, &a)| {
            let states = (0..n)
                .map(|i| {
                    let t = i as f64 * interval;
                    let (d, _) = cam_advance(v, a, t);
                    PredictedState {
                        s_along: d,
                        t,
                        pose: route.pose_at(s0 + d),
                    }
                })
                .collect();
            PredictedTrajectory {
                agent_id,
                mode,
                states,
                v0: v,
            }
        })
        .collect())
}

/// Adds Gaussian lateral and timing noise to every state after the first.
/// Zero sigmas return the input unchanged.
pub fn degrade_predictions(set: &PredictionSet, sigma_lat: f64, sigma_t: f64, seed: u64) -> PredictionSet {
    if sigma_lat <= 0.0 && sigma_t <= 0.0 {
        return set.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lat = Normal::new(0.0, sigma_lat.max(0.0)).expect("finite sigma");
    let tim = Normal::new(0.0, sigma_t.max(0.0)).expect("finite sigma");
    let mut out = set.clone();
    for traj in &mut out.trajectories {
        for n in 1..traj.states.len() {
            let st = &mut traj.states[n];
            if sigma_lat > 0.0 {
                let e = lat.sample(&mut rng);
                let (x, y) = st.pose.offset(0.0, e);
                st.pose = PoseState::new(x, y, st.pose.heading);
            }
            if sigma_t > 0.0 {
                st.t += tim.sample(&mut rng);
            }
        }
        for n in 1..traj.states.len() {
            let prev = traj.states[n - 1].t;
            if traj.states[n].t < prev {
                traj.states[n].t = prev;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_agent() {
        let p = PoseState::new(3.0, 4.0, 1.0);
        let tr = predict_constant_velocity(1, p, 0.0, 6.0, 0.5);
        assert_eq!(tr.states.len(), 13);
        assert!(tr.states.iter().all(|s| s.pose == p && s.s_along == 0.0));
    }

    #[test]
    fn constant_velocity_counts() {
        let tr = predict_constant_velocity(1, PoseState::new(0.0, 0.0, 0.3), 4.0, 6.0, 0.5);
        assert_eq!(tr.states.len(), 13);
        assert_eq!(tr.states[12].s_along, 24.0);
        assert_eq!(tr.states[5].t, 2.5);
        assert_eq!(tr.states[5].s_along, 10.0);
        for w in tr.states.windows(2) {
            let chord = w[0].pose.distance(&w[1].pose);
            assert!((chord - (w[1].s_along - w[0].s_along)).abs() < 1e-6);
        }
    }

    #[test]
    fn route_modes_follow_cam() {
        let r = Route::straight(200.0);
        let modes = predict_route_following(2, PoseState::new(10.0, 0.0, 0.0), 5.0, Some(&r), 3, 6.0, 0.5, &[0.0, -1.0, 1.0]).unwrap();
        assert_eq!(modes.len(), 3);
        let braking = &modes[1];
        assert_eq!(braking.states[12].s_along, 12.5);
        assert_eq!(braking.states[10].s_along, 12.5);
        assert!((braking.states[12].pose.x - 22.5).abs() < 1e-9);
        let accel = &modes[2];
        assert_eq!(accel.states[4].s_along, 12.0);
        let single = predict_route_following(2, PoseState::new(10.0, 0.0, 0.0), 5.0, Some(&r), 1, 6.0, 0.5, &[0.0, -1.0, 1.0]).unwrap();
        assert_eq!(single[0], modes[0]);
        for w in modes[0].states.windows(2) {
            let chord = w[0].pose.distance(&w[1].pose);
            assert!((chord - (w[1].s_along - w[0].s_along)).abs() < 1e-6);
        }
    }

    #[test]
    fn route_required() {
        assert_eq!(
            predict_route_following(9, PoseState::new(0.0, 0.0, 0.0), 1.0, None, 1, 6.0, 0.5, &[0.0]),
            Err(PredictionError::MissingRoute(9))
        );
    }

    fn sample_set() -> PredictionSet {
        let trajs = (0..84)
            .map(|i| {
                let mut t = predict_constant_velocity(i, PoseState::new(0.0, i as f64 * 10.0, 0.2), 6.0, 6.0, 0.5);
                t.mode = 0;
                t
            })
            .collect();
        PredictionSet::new(trajs)
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = sample_set();
        assert_eq!(degrade_predictions(&s, 0.0, 0.0, 3), s);
    }

    #[test]
    fn noise_is_deterministic() {
        let s = sample_set();
        assert_eq!(degrade_predictions(&s, 0.5, 0.1, 7), degrade_predictions(&s, 0.5, 0.1, 7));
        assert_ne!(degrade_predictions(&s, 0.5, 0.0, 7), degrade_predictions(&s, 0.5, 0.0, 8));
    }

    #[test]
    fn lateral_noise_has_requested_spread() {
        let s = sample_set();
        let d = degrade_predictions(&s, 0.5, 0.0, 7);
        let mut errs = Vec::new();
        for (a, b) in s.trajectories.iter().zip(&d.trajectories) {
            for (p, q) in a.states.iter().zip(&b.states).skip(1) {
                let (s_, c) = p.pose.heading.sin_cos();
                errs.push(-(q.pose.x - p.pose.x) * s_ + (q.pose.y - p.pose.y) * c);
            }
        }
        assert!(errs.len() >= 1000);
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.45..=0.55).contains(&sd), "{sd}");
    }

    #[test]
    fn timing_noise_keeps_order() {
        let d = degrade_predictions(&sample_set(), 0.0, 0.6, 1);
        for t in &d.trajectories {
            assert!(t.states.windows(2).all(|w| w[1].t >= w[0].t));
            assert_eq!(t.states[0].t, 0.0);
        }
    }
}
