//! Reference routes, Frenet projection and quintic merge paths.
//!
//! A [`PlannedPath`] is parameterized by arc length `s` measured from the AV's
//! rear axle (`s = 0`). It also extends `path_back` meters behind the AV so
//! that agents overlapping the AV's current footprint or trailing it can be
//! located on the path with `s <= 0`.

use crate::config::PlannerConfig;
use crate::types::{normalize_angle, PoseState};
use thiserror::Error;

/// Largest lateral offset accepted by [`project_to_frenet`].
pub const MAX_PROJECTION_OFFSET: f64 = 20.0;

const DENSE_STEP: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum FrenetError {
    #[error("route needs at least two distinct points")]
    TooFewPoints,
    #[error("merge length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("pose is {offset:.2} m off the route (limit {limit} m)")]
    ProjectionOutOfRange { offset: f64, limit: f64 },
    #[error("no merge candidate satisfies the curvature cap (best max |kappa| = {max_kappa:.3})")]
    CurvatureCap { max_kappa: f64 },
    #[error("candidate list is empty")]
    NoCandidates,
}

/// Polyline resampled to a maximum vertex spacing, with accumulated distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    xs: Vec<f64>,
    ys: Vec<f64>,
    s: Vec<f64>,
    headings: Vec<f64>,
}

impl Route {
    pub fn new(points: &[[f64; 2]], max_step: f64) -> Result<Self, FrenetError> {
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(points.len());
        for p in points {
            if pts
                .last()
                .is_none_or(|q: &[f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]) > 1e-9)
            {
                pts.push(*p);
            }
        }
        if pts.len() < 2 {
            return Err(FrenetError::TooFewPoints);
        }
        let mut xs = vec![pts[0][0]];
        let mut ys = vec![pts[0][1]];
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = (b[0] - a[0]).hypot(b[1] - a[1]);
            let n = (len / max_step).ceil().max(1.0) as usize;
            for k in 1..=n {
                let f = k as f64 / n as f64;
                xs.push(a[0] + f * (b[0] - a[0]));
                ys.push(a[1] + f * (b[1] - a[1]));
            }
        }
        Ok(Self::from_dense(xs, ys))
    }

    fn from_dense(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        let mut s = vec![0.0; n];
        for i in 1..n {
            s[i] = s[i - 1] + (xs[i] - xs[i - 1]).hypot(ys[i] - ys[i - 1]);
        }
        let headings = (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (ys[b] - ys[a]).atan2(xs[b] - xs[a])
            })
            .collect();
        Self { xs, ys, s, headings }
    }

    /// Straight route starting at the origin heading along +x.
    pub fn straight(length: f64) -> Self {
        Route::new(&[[0.0, 0.0], [length, 0.0]], 0.5).expect("straight route is valid")
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    fn segment_index(&self, s: f64) -> usize {
        match self.s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.len() - 2),
        }
    }

    /// Interpolated pose at arc length `s`; extrapolates straight past either end.
    pub fn pose_at(&self, s: f64) -> PoseState {
        let n = self.len();
        if s <= 0.0 {
            let h = self.headings[0];
            return PoseState::new(self.xs[0] + s * h.cos(), self.ys[0] + s * h.sin(), h);
        }
        let len = self.length();
        if s >= len {
            let h = self.headings[n - 1];
            let e = s - len;
            return PoseState::new(self.xs[n - 1] + e * h.cos(), self.ys[n - 1] + e * h.sin(), h);
        }
        let i = self.segment_index(s);
        let seg = self.s[i + 1] - self.s[i];
        let f = if seg > 0.0 { (s - self.s[i]) / seg } else { 0.0 };
        let dh = normalize_angle(self.headings[i + 1] - self.headings[i]);
        PoseState::new(
            self.xs[i] + f * (self.xs[i + 1] - self.xs[i]),
            self.ys[i] + f * (self.ys[i + 1] - self.ys[i]),
            self.headings[i] + f * dh,
        )
    }

    /// Signed curvature estimated from the vertex headings around `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        if s <= 0.0 || s >= self.length() {
            return 0.0;
        }
        let i = self.segment_index(s);
        let seg = self.s[i + 1] - self.s[i];
        if seg <= 0.0 {
            return 0.0;
        }
        normalize_angle(self.headings[i + 1] - self.headings[i]) / seg
    }

    /// Nearest-point projection: `(s, signed lateral offset)` with left positive.
    /// The first and last segments are extended so points beyond either end
    /// project to `s < 0` or `s > length`.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let n = self.len();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n - 1 {
            let (ax, ay) = (self.xs[i], self.ys[i]);
            let (dx, dy) = (self.xs[i + 1] - ax, self.ys[i + 1] - ay);
            let len2 = dx * dx + dy * dy;
            if len2 <= 0.0 {
                continue;
            }
            let mut f = ((x - ax) * dx + (y - ay) * dy) / len2;
            if i > 0 {
                f = f.max(0.0);
            }
            if i + 2 < n {
                f = f.min(1.0);
            }
            let (px, py) = (ax + f * dx, ay + f * dy);
            let dist2 = (x - px).powi(2) + (y - py).powi(2);
            if dist2 < best.0 {
                let len = len2.sqrt();
                let cross = (dx * (y - ay) - dy * (x - ax)) / len;
                best = (dist2, self.s[i] + f * len, cross);
            }
        }
        (best.1, best.2)
    }
}

/// Lateral state relative to the reference route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetState {
    pub s_r: f64,
    pub d: f64,
    pub d_p: f64,
    pub d_pp: f64,
}

/// Projects a pose onto the route. `d_pp` is not observable from a pose and
/// is reported as zero.
pub fn project_to_frenet(route: &Route, pose: &PoseState) -> Result<FrenetState, FrenetError> {
    let (s_r, d) = route.project(pose.x, pose.y);
    if d.abs() > MAX_PROJECTION_OFFSET {
        return Err(FrenetError::ProjectionOutOfRange {
            offset: d.abs(),
            limit: MAX_PROJECTION_OFFSET,
        });
    }
    let base = route.pose_at(s_r);
    let kappa = route.curvature_at(s_r);
    let rel = normalize_angle(pose.heading - base.heading);
    Ok(FrenetState {
        s_r,
        d,
        d_p: (1.0 - kappa * d) * rel.tan(),
        d_pp: 0.0,
    })
}

/// Coefficients `c0..c5` of the quintic lateral profile meeting `d0` at 0 and
/// `df` at `s_f` (value, first and second derivative).
pub fn quintic_coefficients(d0: [f64; 3], df: [f64; 3], s_f: f64) -> Result<[f64; 6], FrenetError> {
    if s_f.is_nan() || s_f <= 0.0 {
        return Err(FrenetError::NonPositiveLength(s_f));
    }
    let (c0, c1, c2) = (d0[0], d0[1], 0.5 * d0[2]);
    let t = s_f;
    let (t2, t3) = (t * t, t * t * t);
    let a = df[0] - d0[0] - d0[1] * t - 0.5 * d0[2] * t2;
    let b = df[1] - d0[1] - d0[2] * t;
    let c = df[2] - d0[2];
    let c3 = (10.0 * a - 4.0 * b * t + 0.5 * c * t2) / t3;
    let c4 = (-15.0 * a + 7.0 * b * t - c * t2) / (t3 * t);
    let c5 = (6.0 * a - 3.0 * b * t + 0.5 * c * t2) / (t3 * t2);
    Ok([c0, c1, c2, c3, c4, c5])
}

/// Evaluates the quintic and its first two derivatives at `x`.
pub fn eval_quintic(c: &[f64; 6], x: f64) -> [f64; 3] {
    let d = c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * (c[4] + x * c[5]))));
    let dp = c[1] + x * (2.0 * c[2] + x * (3.0 * c[3] + x * (4.0 * c[4] + x * 5.0 * c[5])));
    let dpp = 2.0 * c[2] + x * (6.0 * c[3] + x * (12.0 * c[4] + x * 20.0 * c[5]));
    [d, dp, dpp]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub s: f64,
    pub pose: PoseState,
    pub kappa: f64,
}

/// Merge path sampled at a fixed arc-length step, with curvature-limited speeds.
#[derive(Debug, Clone)]
pub struct PlannedPath {
    pub coefficients: [f64; 6],
    pub s_f: f64,
    /// Route arc length at which the path starts.
    pub s_r0: f64,
    step: f64,
    samples: Vec<PathSample>,
    v_kappa: Vec<f64>,
    v_kappa_prefix: Vec<f64>,
}

impl PlannedPath {
    fn build(
        route: &Route,
        s_r0: f64,
        coefficients: [f64; 6],
        s_f: f64,
        cfg: &PlannerConfig,
    ) -> Self {
        let step = cfg.path_step;
        let forward = cfg.distance_horizon + 30.0 + s_f;
        let n_fwd = (forward / DENSE_STEP).ceil() as usize;
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(n_fwd + 1);
        for k in 0..=n_fwd {
            let sigma = k as f64 * DENSE_STEP;
            let base = route.pose_at(s_r0 + sigma);
            let d = if sigma < s_f { eval_quintic(&coefficients, sigma)[0] } else { 0.0 };
            pts.push(base.offset(0.0, d));
        }
        let (hx, hy) = (pts[1].0 - pts[0].0, pts[1].1 - pts[0].1);
        let hn = hx.hypot(hy).max(1e-12);
        let back_n = (cfg.path_back / DENSE_STEP).ceil() as usize;
        let mut dense: Vec<(f64, f64)> = (1..=back_n)
            .rev()
            .map(|k| {
                let e = k as f64 * DENSE_STEP;
                (pts[0].0 - e * hx / hn, pts[0].1 - e * hy / hn)
            })
            .collect();
        dense.extend(pts);
        let mut acc = vec![0.0; dense.len()];
        for i in 1..dense.len() {
            acc[i] = acc[i - 1] + (dense[i].0 - dense[i - 1].0).hypot(dense[i].1 - dense[i - 1].1);
        }
        let origin = acc[back_n];
        let first = -((cfg.path_back / step).floor()) * step;
        let last = acc[acc.len() - 1] - origin;
        let count = ((last - first) / step).floor() as usize + 1;

        let mut xs = Vec::with_capacity(count);
        let mut ys = Vec::with_capacity(count);
        let mut j = 0;
        for i in 0..count {
            let target = first + i as f64 * step + origin;
            while j + 2 < acc.len() && acc[j + 1] < target {
                j += 1;
            }
            let seg = acc[j + 1] - acc[j];
            let f = if seg > 0.0 { ((target - acc[j]) / seg).clamp(0.0, 1.0) } else { 0.0 };
            xs.push(dense[j].0 + f * (dense[j + 1].0 - dense[j].0));
            ys.push(dense[j].1 + f * (dense[j + 1].1 - dense[j].1));
        }

        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(count - 1));
            let h = (b - a) as f64 * step;
            let dx = (xs[b] - xs[a]) / h;
            let dy = (ys[b] - ys[a]) / h;
            // wide stencil damps chord noise of polyline routes
            let w = if i >= 2 && i + 2 < count { 2 } else { 1 };
            let kappa = if i >= w && i + w < count {
                let h = w as f64 * step;
                let dx = (xs[i + w] - xs[i - w]) / (2.0 * h);
                let dy = (ys[i + w] - ys[i - w]) / (2.0 * h);
                let ddx = (xs[i + w] - 2.0 * xs[i] + xs[i - w]) / (h * h);
                let ddy = (ys[i + w] - 2.0 * ys[i] + ys[i - w]) / (h * h);
                (dx * ddy - dy * ddx) / (dx * dx + dy * dy).powf(1.5)
            } else {
                0.0
            };
            samples.push(PathSample {
                s: first + i as f64 * step,
                pose: PoseState::new(xs[i], ys[i], dy.atan2(dx)),
                kappa,
            });
        }
        // endpoints copy their neighbors
        if count > 2 {
            samples[0].kappa = samples[1].kappa;
            samples[count - 1].kappa = samples[count - 2].kappa;
        }
        let v_kappa: Vec<f64> = samples
            .iter()
            .map(|p| kappa_speed_limit(p.kappa, cfg.a_lat_max, cfg.v_limit))
            .collect();
        let mut v_kappa_prefix = vec![0.0; count + 1];
        for i in 0..count {
            v_kappa_prefix[i + 1] = v_kappa_prefix[i] + v_kappa[i];
        }
        Self {
            coefficients,
            s_f,
            s_r0,
            step,
            samples,
            v_kappa,
            v_kappa_prefix,
        }
    }

    /// Path that simply follows `route` from `s_r0`.
    pub fn along_route(route: &Route, s_r0: f64, cfg: &PlannerConfig) -> Self {
        Self::build(route, s_r0, [0.0; 6], 0.0, cfg)
    }

    /// Straight path along +x starting at the origin.
    pub fn straight(cfg: &PlannerConfig) -> Self {
        Self::along_route(&Route::straight(10.0), 0.0, cfg)
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn s_min(&self) -> f64 {
        self.samples[0].s
    }

    pub fn s_max(&self) -> f64 {
        self.samples[self.samples.len() - 1].s
    }

    /// Fractional sample index of arc length `s`, clamped to the path.
    fn locate(&self, s: f64) -> (usize, f64) {
        let x = ((s - self.s_min()) / self.step).clamp(0.0, (self.samples.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.samples.len() - 2);
        (i, x - i as f64)
    }

    pub fn pose_at(&self, s: f64) -> PoseState {
        let (i, f) = self.locate(s);
        let (a, b) = (&self.samples[i].pose, &self.samples[i + 1].pose);
        PoseState::new(
            a.x + f * (b.x - a.x),
            a.y + f * (b.y - a.y),
            a.heading + f * normalize_angle(b.heading - a.heading),
        )
    }

    pub fn kappa_at(&self, s: f64) -> f64 {
        let (i, f) = self.locate(s);
        self.samples[i].kappa + f * (self.samples[i + 1].kappa - self.samples[i].kappa)
    }

    /// Max |kappa| over samples with arc length in `[lo, hi]`.
    pub fn max_abs_kappa(&self, lo: f64, hi: f64) -> f64 {
        self.samples
            .iter()
            .filter(|p| p.s >= lo - 1e-9 && p.s <= hi + 1e-9)
            .map(|p| p.kappa.abs())
            .fold(0.0, f64::max)
    }

    /// Index range of samples inside `[lo, hi]`.
    pub fn index_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let n = self.samples.len();
        let start = (((lo - self.s_min()) / self.step) - 1e-9).ceil().max(0.0) as usize;
        let end = ((((hi - self.s_min()) / self.step) + 1e-9).floor() + 1.0).max(0.0) as usize;
        start.min(n)..end.min(n)
    }

    /// Curvature speed limit of sample `i`.
    pub fn v_kappa_sample(&self, i: usize) -> f64 {
        self.v_kappa[i]
    }

    /// Mean of the sampled curvature speed limit over `[lo, hi]`; falls back
    /// to the interpolated value when no sample lies inside.
    pub fn mean_v_kappa(&self, lo: f64, hi: f64, cfg: &PlannerConfig) -> f64 {
        let r = self.index_range(lo, hi);
        if r.is_empty() {
            return curvature_speed_limit(self, 0.5 * (lo + hi), cfg);
        }
        (self.v_kappa_prefix[r.end] - self.v_kappa_prefix[r.start]) / r.len() as f64
    }
}

fn kappa_speed_limit(kappa: f64, a_lat_max: f64, v_limit: f64) -> f64 {
    if kappa.abs() < 1e-6 {
        v_limit
    } else {
        (a_lat_max / kappa.abs()).sqrt().min(v_limit)
    }
}

/// Curvature speed limit at arc length `s`, capped by the speed limit.
pub fn curvature_speed_limit(path: &PlannedPath, s: f64, cfg: &PlannerConfig) -> f64 {
    kappa_speed_limit(path.kappa_at(s), cfg.a_lat_max, cfg.v_limit)
}

/// Merge score of a candidate: shorter merges and smaller peak curvature win.
pub fn merge_score(s_f: f64, max_kappa: f64, cfg: &PlannerConfig) -> f64 {
    cfg.w_len * s_f + cfg.w_smooth * max_kappa
}

/// Builds one quintic merge path per candidate length and keeps the best scoring
/// one that respects the curvature cap.
pub fn generate_merge_path(
    route: &Route,
    av: &FrenetState,
    s_f_candidates: &[f64],
    cfg: &PlannerConfig,
) -> Result<PlannedPath, FrenetError> {
    if s_f_candidates.is_empty() {
        return Err(FrenetError::NoCandidates);
    }
    let d0 = [av.d, av.d_p, av.d_pp];
    if d0.iter().all(|v| v.abs() < 1e-9) {
        return Ok(PlannedPath::along_route(route, av.s_r, cfg));
    }
    let mut best: Option<(f64, PlannedPath)> = None;
    let mut least_kappa = f64::INFINITY;
    for &s_f in s_f_candidates {
        let coefficients = quintic_coefficients(d0, [0.0; 3], s_f)?;
        let path = PlannedPath::build(route, av.s_r, coefficients, s_f, cfg);
        let kmax = path.max_abs_kappa(0.0, s_f);
        least_kappa = least_kappa.min(kmax);
        if kmax > cfg.curvature_cap {
            continue;
        }
        let score = merge_score(s_f, kmax, cfg);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, path));
        }
    }
    best.map(|(_, p)| p)
        .ok_or(FrenetError::CurvatureCap { max_kappa: least_kappa })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PlannerConfig {
        PlannerConfig::default()
    }

    #[test]
    fn resampling_respects_max_step() {
        let r = Route::new(&[[0.0, 0.0], [3.2, 0.0], [3.2, 10.0]], 0.5).unwrap();
        assert!((r.length() - 13.2).abs() < 1e-9);
        for w in r.s.windows(2) {
            assert!(w[1] - w[0] <= 0.5 + 1e-12);
        }
        assert_eq!(Route::new(&[[1.0, 1.0], [1.0, 1.0]], 0.5), Err(FrenetError::TooFewPoints));
    }

    #[test]
    fn projection_on_route_start() {
        let r = Route::straight(100.0);
        let f = project_to_frenet(&r, &PoseState::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!((f.s_r, f.d, f.d_p), (0.0, 0.0, 0.0));
    }

    #[test]
    fn projection_left_of_straight_route() {
        let r = Route::straight(100.0);
        let f = project_to_frenet(&r, &PoseState::new(10.0, 2.0, 0.2)).unwrap();
        assert!((f.s_r - 10.0).abs() < 1e-12);
        assert!((f.d - 2.0).abs() < 1e-12);
        assert!((f.d_p - 0.2f64.tan()).abs() < 1e-12);
        let right = project_to_frenet(&r, &PoseState::new(10.0, -2.0, 0.0)).unwrap();
        assert!((right.d + 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_too_far_is_an_error() {
        let r = Route::straight(100.0);
        assert!(matches!(
            project_to_frenet(&r, &PoseState::new(10.0, 25.0, 0.0)),
            Err(FrenetError::ProjectionOutOfRange { .. })
        ));
    }

    #[test]
    fn projection_beyond_ends_extrapolates() {
        let r = Route::straight(50.0);
        assert!((r.project(-3.0, 0.5).0 + 3.0).abs() < 1e-12);
        assert!((r.project(60.0, 0.0).0 - 60.0).abs() < 1e-12);
    }

    #[test]
    fn zero_boundary_quintic_is_zero() {
        assert_eq!(quintic_coefficients([0.0; 3], [0.0; 3], 50.0).unwrap(), [0.0; 6]);
    }

    #[test]
    fn quintic_reference_values() {
        let c = quintic_coefficients([2.0, 0.0, 0.0], [0.0; 3], 10.0).unwrap();
        let expected = [2.0, 0.0, 0.0, -0.02, 0.003, -1.2e-4];
        for (a, b) in c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{c:?}");
        }
    }

    #[test]
    fn quintic_meets_all_boundary_conditions() {
        let c = quintic_coefficients([1.0, 0.1, 0.0], [0.0; 3], 20.0).unwrap();
        let at0 = eval_quintic(&c, 0.0);
        let atf = eval_quintic(&c, 20.0);
        for (got, want) in at0.iter().chain(atf.iter()).zip([1.0, 0.1, 0.0, 0.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(
            quintic_coefficients([0.0; 3], [0.0; 3], 0.0),
            Err(FrenetError::NonPositiveLength(0.0))
        );
    }

    #[test]
    fn on_route_merge_is_the_route() {
        let r = Route::new(&[[0.0, 0.0], [40.0, 0.0], [80.0, 20.0]], 0.5).unwrap();
        let av = FrenetState { s_r: 5.0, d: 0.0, d_p: 0.0, d_pp: 0.0 };
        let p = generate_merge_path(&r, &av, &[10.0], &cfg()).unwrap();
        for s in [0.0, 10.0, 30.0, 50.0] {
            let a = p.pose_at(s);
            let b = r.pose_at(5.0 + s);
            assert!(a.distance(&b) < 0.05, "s={s}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn path_origin_is_av_position() {
        let r = Route::straight(200.0);
        let av = FrenetState { s_r: 3.0, d: 1.5, d_p: 0.0, d_pp: 0.0 };
        let p = generate_merge_path(&r, &av, &[20.0], &cfg()).unwrap();
        let o = p.pose_at(0.0);
        assert!((o.x - 3.0).abs() < 1e-9 && (o.y - 1.5).abs() < 1e-9);
        assert!(p.s_min() <= -10.0 + 1e-9);
        let end = p.pose_at(25.0);
        assert!(end.y.abs() < 1e-6);
    }

    /// Curvature of an offset quintic on a straight route, from its derivatives.
    fn analytic_max_kappa(c: &[f64; 6], s_f: f64) -> f64 {
        (0..=2000)
            .map(|k| {
                let [_, dp, dpp] = eval_quintic(c, s_f * k as f64 / 2000.0);
                dpp.abs() / (1.0 + dp * dp).powf(1.5)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn merge_picks_best_scoring_candidate() {
        let c = cfg();
        let r = Route::straight(300.0);
        let av = FrenetState { s_r: 0.0, d: 2.0, d_p: 0.0, d_pp: 0.0 };
        let candidates = [10.0, 30.0, 60.0];
        let scores: Vec<f64> = candidates
            .iter()
            .map(|&sf| {
                let q = quintic_coefficients([2.0, 0.0, 0.0], [0.0; 3], sf).unwrap();
                merge_score(sf, analytic_max_kappa(&q, sf), &c)
            })
            .collect();
        let best = candidates[scores
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0];
        let p = generate_merge_path(&r, &av, &candidates, &c).unwrap();
        assert_eq!(p.s_f, best);
        // numeric curvature tracks the analytic one
        let q = quintic_coefficients([2.0, 0.0, 0.0], [0.0; 3], p.s_f).unwrap();
        assert!((p.max_abs_kappa(0.0, p.s_f) - analytic_max_kappa(&q, p.s_f)).abs() < 5e-3);
    }

    #[test]
    fn steep_merge_hits_curvature_cap() {
        let r = Route::straight(300.0);
        let av = FrenetState { s_r: 0.0, d: 3.0, d_p: 0.0, d_pp: 0.0 };
        assert!(matches!(
            generate_merge_path(&r, &av, &[1.0], &cfg()),
            Err(FrenetError::CurvatureCap { .. })
        ));
    }

    #[test]
    fn merge_converges_to_route_as_offset_vanishes() {
        let r = Route::new(&[[0.0, 0.0], [50.0, 0.0], [100.0, 30.0]], 0.5).unwrap();
        let reference = PlannedPath::along_route(&r, 0.0, &cfg());
        let mut prev = f64::INFINITY;
        for d in [1.0, 0.1, 0.01, 0.001] {
            let av = FrenetState { s_r: 0.0, d, d_p: 0.0, d_pp: 0.0 };
            let p = generate_merge_path(&r, &av, &[20.0], &cfg()).unwrap();
            let dev = (0..100)
                .map(|k| p.pose_at(k as f64).distance(&reference.pose_at(k as f64)))
                .fold(0.0, f64::max);
            assert!(dev < prev + 1e-12);
            prev = dev;
        }
        assert!(prev < 2e-3);
    }

    #[test]
    fn curvature_speed_limit_values() {
        let c = cfg();
        assert_eq!(kappa_speed_limit(0.0, c.a_lat_max, c.v_limit), c.v_limit);
        let v = kappa_speed_limit(0.05, 3.43, 13.9);
        assert!((v - 68.6f64.sqrt()).abs() < 1e-12);
        assert!((v - 8.283).abs() < 1e-3);
        assert_eq!(kappa_speed_limit(-0.05, 3.43, 13.9), v);
        let p = PlannedPath::straight(&c);
        assert_eq!(curvature_speed_limit(&p, 20.0, &c), c.v_limit);
    }

    #[test]
    fn curvature_speed_limit_monotone() {
        let mut prev = f64::INFINITY;
        for k in 0..2000 {
            let kappa = k as f64 * 1e-4;
            let v = kappa_speed_limit(kappa, 3.43, 13.9);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn circular_route_curvature() {
        let radius = 20.0;
        let pts: Vec<[f64; 2]> = (0..=90)
            .map(|k| {
                let a = (k as f64).to_radians();
                [radius * a.sin(), radius * (1.0 - a.cos())]
            })
            .collect();
        let r = Route::new(&pts, 0.5).unwrap();
        let p = PlannedPath::along_route(&r, 0.0, &cfg());
        let k = p.kappa_at(10.0);
        assert!((k - 1.0 / radius).abs() < 2e-3, "{k}");
        let v = curvature_speed_limit(&p, 10.0, &cfg());
        assert!((v - (3.43f64 * radius).sqrt()).abs() < 0.2);
    }
}
