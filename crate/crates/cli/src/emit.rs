//! JSON and SVG artifacts. Both are byte-deterministic: regions are listed
//! in canonical shape order and renumbered from zero, and every JSON object
//! has sorted keys.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use amoebot_convex::circuits::SimulationTrace;
use amoebot_convex::decompose::Decomposition;
use amoebot_convex::oracle::VerificationReport;
use amoebot_convex::split::RegionShape;
use amoebot_convex::{AmoebotStructure, GridPoint};
use serde_json::{json, Value};

fn pt(p: GridPoint) -> Value {
    json!([p.a, p.b])
}

pub fn json_value(dec: &Decomposition, report: Option<&VerificationReport>, trace: Option<&SimulationTrace>, events: bool) -> Value {
    let regions: Vec<Value> = dec
        .shapes()
        .into_iter()
        .enumerate()
        .map(|(id, (nodes, edges))| {
            json!({
                "id": id,
                "nodes": nodes.into_iter().map(pt).collect::<Vec<_>>(),
                "edges": edges.into_iter().map(|(u, v)| json!([pt(u), pt(v)])).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut gates: Vec<_> = dec.gates.iter().map(|g| (g.portal_id, g.side, g.nodes.clone())).collect();
    gates.sort();
    gates.dedup();
    let gates: Vec<Value> = gates
        .into_iter()
        .map(|(portal, side, nodes)| {
            json!({
                "portal": portal,
                "side": serde_json::to_value(side).expect("gate side serializes"),
                "nodes": nodes.into_iter().map(pt).collect::<Vec<_>>(),
            })
        })
        .collect();
    let verification = match report {
        Some(r) => {
            let mut v = serde_json::to_value(r).expect("report serializes");
            v["passed"] = json!(r.passed());
            v
        }
        None => Value::Null,
    };
    let trace = match trace {
        Some(t) => {
            let mut v = json!({
                "phase_rounds": t.phases.iter().map(|p| json!({"phase": p.phase, "rounds": p.rounds})).collect::<Vec<_>>(),
                "total": t.total_rounds,
                "seed": t.seed,
                "n_hat": t.n_hat,
                "memory_warnings": t.memory_warnings,
            });
            if events {
                v["events"] = serde_json::to_value(&t.events).expect("events serialize");
            }
            v
        }
        None => Value::Null,
    };
    json!({
        "regions": regions,
        "gates": gates,
        "holes": dec.holes,
        "verification": verification,
        "trace": trace,
    })
}

pub fn json_string(dec: &Decomposition, report: Option<&VerificationReport>, trace: Option<&SimulationTrace>, events: bool) -> String {
    // serde_json's default map is ordered, so keys come out sorted.
    let mut s = serde_json::to_string_pretty(&json_value(dec, report, trace, events)).expect("json value serializes");
    s.push('\n');
    s
}

pub fn emit_json(
    dec: &Decomposition,
    report: Option<&VerificationReport>,
    trace: Option<&SimulationTrace>,
    events: bool,
    path: &Path,
) -> std::io::Result<()> {
    fs::write(path, json_string(dec, report, trace, events))
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];
const SCALE: f64 = 20.0;
const RADIUS: f64 = 5.0;

/// Planar embedding of a grid point: unit edges, y pointing down.
fn embed(p: GridPoint) -> (f64, f64) {
    let x = p.a as f64 + p.b as f64 / 2.0;
    let y = p.b as f64 * 3f64.sqrt() / 2.0;
    // Adding zero turns -0.0 into 0.0 so it prints without a sign.
    (x * SCALE + 0.0, -y * SCALE + 0.0)
}

pub fn svg_string(structure: &AmoebotStructure, dec: &Decomposition) -> String {
    let shapes: Vec<RegionShape> = dec.shapes();
    let mut owners: BTreeMap<GridPoint, Vec<usize>> = BTreeMap::new();
    for (i, (nodes, _)) in shapes.iter().enumerate() {
        for &p in nodes {
            owners.entry(p).or_default().push(i);
        }
    }
    let pts: Vec<(f64, f64)> = structure.nodes().iter().map(|&p| embed(p)).collect();
    let min_x = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - SCALE;
    let max_x = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + SCALE;
    let min_y = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - SCALE;
    let max_y = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + SCALE;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.2} {:.2} {:.2} {:.2}" width="{:.0}" height="{:.0}">"#,
        min_x,
        min_y,
        max_x - min_x,
        max_y - min_y,
        max_x - min_x,
        max_y - min_y
    );
    let _ = writeln!(out, r##"<rect x="{min_x:.2}" y="{min_y:.2}" width="{:.2}" height="{:.2}" fill="#ffffff"/>"##, max_x - min_x, max_y - min_y);

    out.push_str("<g stroke-width=\"2\" stroke-linecap=\"round\">\n");
    for (i, (_, edges)) in shapes.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for &(u, v) in edges {
            let (x1, y1) = embed(u);
            let (x2, y2) = embed(v);
            let _ = writeln!(out, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{color}"/>"#);
        }
    }
    out.push_str("</g>\n");

    let mut gates: BTreeSet<Vec<GridPoint>> = BTreeSet::new();
    for g in &dec.gates {
        gates.insert(g.nodes.clone());
    }
    out.push_str("<g fill=\"none\" stroke=\"#000000\" stroke-width=\"4\" stroke-opacity=\"0.6\" stroke-linecap=\"round\">\n");
    for nodes in &gates {
        let path: Vec<String> = nodes
            .iter()
            .map(|&p| {
                let (x, y) = embed(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        if nodes.len() == 1 {
            let (x, y) = embed(nodes[0]);
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}"/>"#, RADIUS + 3.0);
        } else {
            let _ = writeln!(out, r#"<polyline points="{}"/>"#, path.join(" "));
        }
    }
    out.push_str("</g>\n");

    out.push_str("<g stroke=\"#222222\" stroke-width=\"1\">\n");
    for &p in structure.nodes() {
        let (x, y) = embed(p);
        let regs = owners.get(&p).map(Vec::as_slice).unwrap_or(&[]);
        let fill = regs.first().map_or("#cccccc", |&i| PALETTE[i % PALETTE.len()]);
        if regs.len() > 1 {
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="none"/>"#, RADIUS + 2.5);
        }
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{RADIUS:.2}" fill="{fill}"/>"#);
    }
    out.push_str("</g>\n</svg>\n");
    out
}

pub fn emit_svg(structure: &AmoebotStructure, dec: &Decomposition, path: &Path) -> std::io::Result<()> {
    fs::write(path, svg_string(structure, dec))
}
