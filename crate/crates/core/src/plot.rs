//! Static SVG plots of simulation logs.

use crate::frenet::Route;
use crate::interaction::RelationLabel;
use crate::simloop::SimLog;
use std::fmt::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("cycle {index} out of range (log has {count} cycles)")]
    CycleOutOfRange { index: usize, count: usize },
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 50.0;

fn color(label: RelationLabel) -> &'static str {
    match label {
        RelationLabel::Influence => "#d62728",
        RelationLabel::Yield => "#1f77b4",
        RelationLabel::Overtake => "#2ca02c",
        RelationLabel::Undetermined => "#7f7f7f",
        RelationLabel::Invalid => "#000000",
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }

    fn polyline(&self, pts: impl Iterator<Item = (f64, f64)>, class: &str, stroke: &str) -> String {
        let coords: Vec<String> = pts.map(|(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        format!(
            "<polyline class=\"{class}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        )
    }
}

fn open(title: &str, f: &Frame, xl: &str, yl: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        W / 2.0
    );
    let (l, r, b, t) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(s, "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>");
    let _ = writeln!(s, "<line x1=\"{l}\" y1=\"{b}\" x2=\"{l}\" y2=\"{t}\" stroke=\"black\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{xl}</text>", W / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 {})\">{yl}</text>",
        H / 2.0,
        H / 2.0
    );
    for (v, x) in [(f.x0, l), (f.x1, r)] {
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{v:.1}</text>", b + 14.0);
    }
    for (v, y) in [(f.y0, b), (f.y1, t)] {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\" font-size=\"10\">{v:.1}</text>", l - 4.0);
    }
    s
}

/// s-t diagram of one planning cycle: planned profile, overlap points colored
/// by the zone's relation on the plan, and a shaded band of ±`c_t` around
/// each yield or overtake point.
pub fn st_diagram_svg(log: &SimLog, cycle: usize, c_t: f64) -> Result<String, PlotError> {
    let step = log.steps.get(cycle).ok_or(PlotError::CycleOutOfRange {
        index: cycle,
        count: log.steps.len(),
    })?;
    let t_max = step
        .plan
        .iter()
        .map(|p| p[0])
        .chain(step.overlaps.iter().map(|o| o.t_ij + c_t))
        .fold(1.0, f64::max);
    let s_max = step
        .plan
        .iter()
        .map(|p| p[1])
        .chain(step.overlaps.iter().map(|o| o.s_k))
        .fold(1.0, f64::max);
    let f = Frame {
        x0: 0.0,
        x1: t_max * 1.05,
        y0: 0.0,
        y1: s_max * 1.05,
    };
    let mut s = open(&format!("s-t diagram, cycle {cycle} (t = {:.1} s)", step.t), &f, "t (s)", "s (m)");
    for o in &step.overlaps {
        let z = step.zones.iter().find(|z| z.id == o.zone);
        let label = z.and_then(|z| z.planned).or(z.map(|z| z.initial)).unwrap_or(RelationLabel::Undetermined);
        if matches!(label, RelationLabel::Yield | RelationLabel::Overtake) {
            let _ = writeln!(
                s,
                "<rect class=\"band\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"6\" fill=\"{}\" fill-opacity=\"0.2\"/>",
                f.px((o.t_ij - c_t).max(0.0)),
                f.py(o.s_k) - 3.0,
                f.px(o.t_ij + c_t) - f.px((o.t_ij - c_t).max(0.0)),
                color(label)
            );
        }
        let _ = writeln!(
            s,
            "<circle class=\"pair {}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>",
            label.short(),
            f.px(o.t_ij),
            f.py(o.s_k),
            color(label)
        );
    }
    if !step.plan.is_empty() {
        s.push_str(&f.polyline(step.plan.iter().map(|p| (p[0], p[1])), "plan", "black"));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Top-down trace of the AV and every agent over the whole run.
pub fn birdseye_svg(log: &SimLog, route: Option<&Route>) -> String {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for a in log.av_series() {
        xs.push(a.x);
        ys.push(a.y);
    }
    for st in &log.steps {
        for a in &st.agents {
            xs.push(a.x);
            ys.push(a.y);
        }
    }
    let (mut x0, mut x1) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let (mut y0, mut y1) = (ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    // equal scale on both axes
    let span = ((x1 - x0).max(y1 - y0) + 10.0) / 2.0;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let aspect = (H - 2.0 * MARGIN) / (W - 2.0 * MARGIN);
    x0 = cx - span;
    x1 = cx + span;
    y0 = cy - span * aspect;
    y1 = cy + span * aspect;
    let f = Frame { x0, x1, y0, y1 };
    let mut s = open(&format!("{} / {}", log.header.scenario, log.header.variant), &f, "x (m)", "y (m)");
    if let Some(r) = route {
        s.push_str(&f.polyline(r.points(), "route", "#bbbbbb"));
    }
    s.push_str(&f.polyline(log.av_series().iter().map(|a| (a.x, a.y)), "av", "black"));
    let mut ids: Vec<u32> = log.steps.iter().flat_map(|st| st.agents.iter().map(|a| a.id)).collect();
    ids.sort_unstable();
    ids.dedup();
    for id in ids {
        let pts = log.steps.iter().flat_map(|st| st.agents.iter().filter(move |a| a.id == id)).map(|a| (a.x, a.y));
        s.push_str(&f.polyline(pts, &format!("agent agent-{id}"), "#ff7f0e"));
    }
    for c in log.steps.iter().flat_map(|st| st.collisions.iter().map(move |c| (st, c))) {
        let _ = writeln!(
            s,
            "<circle class=\"collision\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"5\" fill=\"none\" stroke=\"red\"/>",
            f.px(c.0.av.x),
            f.py(c.0.av.y)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::PlannerVariant;
    use crate::config::PlannerConfig;
    use crate::corpus;
    use crate::simloop::{run_closed_loop, SimOptions};

    #[test]
    fn unobstructed_cycle_has_no_points() {
        let sc = corpus::parse(&corpus::minimal());
        let mut sc2 = sc.clone();
        sc2.duration = 1.0;
        let log = run_closed_loop(&sc2, "minimal", &SimOptions::new(PlannerVariant::IrInflu, 1, 0), &PlannerConfig::default());
        let svg = st_diagram_svg(&log, 0, 0.5).unwrap();
        assert!(svg.contains("class=\"plan\""));
        assert!(!svg.contains("class=\"pair"));
        assert_eq!(
            st_diagram_svg(&log, 99, 0.5),
            Err(PlotError::CycleOutOfRange { index: 99, count: 10 })
        );
        let b = birdseye_svg(&log, Some(&sc.route));
        assert!(b.contains("class=\"route\"") && b.contains("class=\"av\""));
    }
}
