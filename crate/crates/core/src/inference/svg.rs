use std::fmt::Write;

use crate::instances::RoutingInstance;
use crate::mdp::Solution;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Renders the routes of `sol` as a standalone SVG document.
pub fn solution_svg(inst: &RoutingInstance, sol: &Solution) -> String {
    let n = inst.num_nodes();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for i in 0..n {
        let p = inst.position(i);
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let xy = |node: usize| {
        let p = inst.position(node);
        (MARGIN + (p[0] - lo[0]) * scale, SIZE - MARGIN - (p[1] - lo[1]) * scale)
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="14" font-size="12" font-family="sans-serif">{} cost {:.2}</text>"#,
        inst.name, sol.distance
    );
    for (r, route) in sol.routes.iter().enumerate() {
        let mut pts: Vec<String> = Vec::with_capacity(route.len() + 2);
        let closed = std::iter::once(0)
            .chain(route.iter().copied())
            .chain(std::iter::once(0));
        for node in closed {
            let (x, y) = xy(node);
            pts.push(format!("{x:.1},{y:.1}"));
        }
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            PALETTE[r % PALETTE.len()]
        );
    }
    for i in 1..n {
        let (x, y) = xy(i);
        let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="black"/>"#);
    }
    let (x, y) = xy(0);
    let _ = writeln!(
        s,
        r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="red"/>"#,
        x - 5.0,
        y - 5.0
    );
    s.push_str("</svg>\n");
    s
}
