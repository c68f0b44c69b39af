//! Minimal SVG diagrams of a network's units over the unit box.
//!
//! One dimension: the network output and each unit's contribution as
//! polylines, knots ticked on the axis. Two dimensions: the region-dividing
//! lines with `+` / `0` side markers. Negative units are red, positive blue,
//! globals black, inactivated gray.

use std::fmt::Write as _;

use crate::analyzer::{classify_units, UnitClass};
use crate::network::ReluNetwork;

pub fn render(net: &ReluNetwork) -> Result<String, String> {
    match net.n {
        1 => Ok(render_1d(net)),
        2 => Ok(render_2d(net)),
        n => Err(format!("svg diagrams support 1 or 2 inputs, network has {n}")),
    }
}

fn class_color(class: UnitClass) -> &'static str {
    match class {
        UnitClass::LocalNegative => "#d62728",
        UnitClass::LocalPositive => "#1f77b4",
        UnitClass::UniversalGlobal | UnitClass::GlobalForOrder => "#000000",
        UnitClass::Inactivated | UnitClass::Degenerate => "#aaaaaa",
    }
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 46.0;

fn render_1d(net: &ReluNetwork) -> String {
    let labels = classify_units(net);
    let samples = 512usize;
    let xs: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
    let mut curves: Vec<(Vec<f64>, &'static str, f64)> = Vec::new(); // values, color, width
    let output: Vec<f64> = xs.iter().map(|&x| net.eval(&[x])).collect();
    for (k, unit) in net.units.iter().enumerate() {
        let values = xs.iter().map(|&x| unit.output(&[x])).collect();
        curves.push((values, class_color(labels[k].class), 1.0));
    }
    curves.push((output, "#2ca02c", 2.0));

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (values, _, _) in &curves {
        for v in values {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let px = |x: f64| MARGIN + x * (W - 2.0 * MARGIN);
    let py = |v: f64| H - MARGIN - (v - lo) / (hi - lo) * (H - 2.0 * MARGIN);

    let mut svg = header();
    // Axis and zero line.
    let _ = writeln!(
        svg,
        "<line x1='{0}' y1='{1}' x2='{2}' y2='{1}' stroke='#444' stroke-width='1'/>",
        px(0.0),
        py(0.0f64.clamp(lo, hi)),
        px(1.0)
    );
    for (values, color, width) in &curves {
        let points: Vec<String> = xs
            .iter()
            .zip(values)
            .map(|(&x, &v)| format!("{:.2},{:.2}", px(x), py(v)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill='none' stroke='{color}' stroke-width='{width}' points='{}'/>",
            points.join(" ")
        );
    }
    // Knot ticks and unit tags.
    for (k, unit) in net.units.iter().enumerate() {
        if unit.is_degenerate() {
            continue;
        }
        let knot = -unit.b / unit.w[0];
        if !(0.0..=1.0).contains(&knot) {
            continue;
        }
        let x = px(knot);
        let _ = writeln!(
            svg,
            "<line x1='{x:.2}' y1='{0}' x2='{x:.2}' y2='{1}' stroke='{2}' stroke-width='1' stroke-dasharray='3 3'/>",
            H - MARGIN,
            H - MARGIN - 12.0,
            class_color(labels[k].class)
        );
        let _ = writeln!(
            svg,
            "<text x='{x:.2}' y='{0}' font-size='11' text-anchor='middle' fill='{1}'>u{k}</text>",
            H - MARGIN + 14.0,
            class_color(labels[k].class)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Intersection segment of the line `w.x + b = 0` with the unit box.
fn clip_line_to_box(w: &[f64], b: f64) -> Option<([f64; 2], [f64; 2])> {
    let mut pts: Vec<[f64; 2]> = Vec::new();
    let push = |p: [f64; 2], pts: &mut Vec<[f64; 2]>| {
        let eps = 1e-9;
        if p[0] >= -eps && p[0] <= 1.0 + eps && p[1] >= -eps && p[1] <= 1.0 + eps {
            if !pts.iter().any(|q| (q[0] - p[0]).abs() + (q[1] - p[1]).abs() < 1e-9) {
                pts.push([p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]);
            }
        }
    };
    if w[1].abs() > 1e-12 {
        for x in [0.0, 1.0] {
            push([x, -(b + w[0] * x) / w[1]], &mut pts);
        }
    }
    if w[0].abs() > 1e-12 {
        for y in [0.0, 1.0] {
            push([-(b + w[1] * y) / w[0], y], &mut pts);
        }
    }
    if pts.len() >= 2 {
        Some((pts[0], pts[1]))
    } else {
        None
    }
}

fn render_2d(net: &ReluNetwork) -> String {
    let labels = classify_units(net);
    let side = W.min(H);
    let px = |x: f64| MARGIN + x * (side - 2.0 * MARGIN);
    let py = |y: f64| side - MARGIN - y * (side - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 {side} {side}' width='{side}' height='{side}'>"
    );
    let _ = writeln!(
        svg,
        "<rect x='{0}' y='{0}' width='{1}' height='{1}' fill='none' stroke='#444'/>",
        MARGIN,
        side - 2.0 * MARGIN
    );
    for (k, unit) in net.units.iter().enumerate() {
        if unit.is_degenerate() {
            continue;
        }
        let Some((p, q)) = clip_line_to_box(&unit.w, unit.b) else {
            continue; // the line misses the box (global or inactivated)
        };
        let color = class_color(labels[k].class);
        let _ = writeln!(
            svg,
            "<line x1='{:.2}' y1='{:.2}' x2='{:.2}' y2='{:.2}' stroke='{color}' stroke-width='1.5'/>",
            px(p[0]),
            py(p[1]),
            px(q[0]),
            py(q[1])
        );
        // Side markers at the midpoint: '+' toward the positive side.
        let mid = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
        let norm = (unit.w[0] * unit.w[0] + unit.w[1] * unit.w[1]).sqrt();
        let dir = [unit.w[0] / norm, unit.w[1] / norm];
        let off = 0.025;
        let plus = [mid[0] + off * dir[0], mid[1] + off * dir[1]];
        let zero = [mid[0] - off * dir[0], mid[1] - off * dir[1]];
        let _ = writeln!(
            svg,
            "<text x='{:.2}' y='{:.2}' font-size='12' text-anchor='middle' fill='{color}'>+</text>",
            px(plus[0]),
            py(plus[1])
        );
        let _ = writeln!(
            svg,
            "<text x='{:.2}' y='{:.2}' font-size='12' text-anchor='middle' fill='{color}'>0</text>",
            px(zero[0]),
            py(zero[1])
        );
        let _ = writeln!(
            svg,
            "<text x='{:.2}' y='{:.2}' font-size='11' text-anchor='middle' fill='{color}'>u{k}</text>",
            px(q[0]).min(side - 14.0).max(14.0),
            (py(q[1]) - 6.0).max(12.0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn header() -> String {
    format!("<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 {W} {H}' width='{W}' height='{H}'>\n")
}
