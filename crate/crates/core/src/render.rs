//! SVG 1.1 scene plots: raw trajectory points, and with a model the stopbar,
//! stopped locations, per-movement colouring and modelling trajectories.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::pipeline::{classify_dataset, stopped_locations, MovementModel};
use crate::trajectory::{ApproachDataset, MovementLabel, Trajectory, Vec2};

const PAD: f64 = 20.0;
const EMPTY_SIZE: (f64, f64) = (640.0, 480.0);

pub fn label_colour(l: MovementLabel) -> &'static str {
    const EXTRA: [&str; 6] = ["#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#ff7f0e"];
    match l {
        MovementLabel::Left => "#d62728",
        MovementLabel::Through => "#1f77b4",
        MovementLabel::Right => "#2ca02c",
        MovementLabel::Cluster(k) => EXTRA[k as usize % EXTRA.len()],
        MovementLabel::Unknown => "#7f7f7f",
    }
}

struct Frame {
    min: Vec2,
    width: f64,
    height: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = Vec2>) -> Frame {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.x.is_finite() {
            return Frame {
                min: Vec2::new(-PAD, -PAD),
                width: EMPTY_SIZE.0,
                height: EMPTY_SIZE.1,
            };
        }
        Frame {
            min: lo,
            width: (hi.x - lo.x) + 2.0 * PAD,
            height: (hi.y - lo.y) + 2.0 * PAD,
        }
    }

    fn map(&self, p: Vec2) -> (f64, f64) {
        (p.x - self.min.x + PAD, p.y - self.min.y + PAD)
    }
}

fn polyline(out: &mut String, f: &Frame, t: &Trajectory, colour: &str, width: f64) {
    let pts: Vec<String> = t
        .positions()
        .map(|p| {
            let (x, y) = f.map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(
        out,
        r#"  <polyline points="{}" fill="none" stroke="{colour}" stroke-width="{width}"/>"#,
        pts.join(" ")
    );
}

/// Renders `d`, decorated with `model` when given.
pub fn render_svg(d: &ApproachDataset, model: Option<&MovementModel>) -> String {
    let modelling = model.into_iter().flat_map(|m| m.movements.iter().flat_map(|mv| mv.modelling.iter()));
    let frame = Frame::fit(
        d.trajectories()
            .iter()
            .flat_map(|t| t.positions())
            .chain(modelling.flat_map(|t| t.positions())),
    );
    let labels: BTreeMap<String, MovementLabel> = match model {
        Some(m) => classify_dataset(d, m).labels(),
        None => BTreeMap::new(),
    };

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#,
        w = frame.width,
        h = frame.height
    );
    let _ = writeln!(out, r#"  <rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"  <g id="points">"#);
    for t in d.trajectories() {
        let colour = labels.get(t.vehicle_id()).map_or("#555555", |l| label_colour(*l));
        for p in t.positions() {
            let (x, y) = frame.map(p);
            let _ = writeln!(out, r#"    <circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="{colour}"/>"#);
        }
    }
    let _ = writeln!(out, "  </g>");

    if let Some(m) = model {
        let _ = writeln!(out, r#"  <g id="stopped">"#);
        for p in stopped_locations(d, m.config.stop_displacement_tolerance) {
            let (x, y) = frame.map(p);
            let _ = writeln!(
                out,
                r#"    <circle cx="{x:.2}" cy="{y:.2}" r="3" fill="none" stroke="black" stroke-width="0.8"/>"#
            );
        }
        let _ = writeln!(out, "  </g>");
        let (_, y) = frame.map(Vec2::new(0.0, m.stopbar.y_sl));
        let _ = writeln!(
            out,
            r#"  <line id="stopbar" x1="0" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="2" stroke-dasharray="8 4"/>"#,
            frame.width
        );
        let _ = writeln!(out, r#"  <g id="modelling">"#);
        for mv in &m.movements {
            for t in &mv.modelling {
                polyline(&mut out, &frame, t, label_colour(mv.label), 3.0);
            }
        }
        let _ = writeln!(out, "  </g>");
        let _ = writeln!(out, r#"  <g id="legend" font-family="sans-serif" font-size="12">"#);
        for (i, mv) in m.movements.iter().enumerate() {
            let y = 16.0 + 16.0 * i as f64;
            let _ = writeln!(
                out,
                r#"    <rect x="8" y="{:.0}" width="10" height="10" fill="{}"/><text x="24" y="{y:.0}">{}</text>"#,
                y - 10.0,
                label_colour(mv.label),
                mv.label
            );
        }
        let _ = writeln!(out, "  </g>");
    }
    let _ = writeln!(out, "</svg>");
    out
}
