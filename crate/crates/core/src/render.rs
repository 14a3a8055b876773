//! Plain SVG output: a horizontal dendrogram and a labelled 2-D scatter.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::newick::NewickNode;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Layout {
    segments: Vec<String>,
    labels: Vec<String>,
}

/// Renders a tree with the root on the left and leaves on the right. Branch
/// lengths set horizontal distances; internal labels (support) are drawn next
/// to their node.
pub fn dendrogram_svg(tree: &NewickNode, title: &str) -> String {
    let n_leaves = tree.count_leaves().max(1);
    let total = max_depth(tree, 0.0).max(f64::MIN_POSITIVE);
    let (left, right_pad, top, row) = (40.0, 180.0, 40.0, 16.0);
    let plot_w = 600.0;
    let height = top + row * n_leaves as f64 + 50.0;
    let width = left + plot_w + right_pad;
    let sx = |depth: f64| left + plot_w * depth / total;

    let mut layout = Layout {
        segments: Vec::new(),
        labels: Vec::new(),
    };
    let mut next_leaf = 0usize;
    place(tree, 0.0, &sx, top, row, &mut next_leaf, &mut layout);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{left}" y="20" font-size="13">{}</text>"#,
        escape(title)
    )
    .unwrap();
    for s in &layout.segments {
        out.push_str(s);
        out.push('\n');
    }
    for l in &layout.labels {
        out.push_str(l);
        out.push('\n');
    }
    // height axis: value shown is distance from the leaves
    let axis_y = top + row * n_leaves as f64 + 10.0;
    writeln!(
        out,
        r#"<line x1="{left}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#,
        left + plot_w
    )
    .unwrap();
    for t in 0..=4 {
        let depth = total * f64::from(t) / 4.0;
        let x = sx(depth);
        writeln!(
            out,
            r#"<line x1="{x}" y1="{axis_y}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" text-anchor="middle">{:.2}</text>"#,
            axis_y + 4.0,
            axis_y + 16.0,
            total - depth
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn max_depth(node: &NewickNode, depth: f64) -> f64 {
    node.children
        .iter()
        .map(|c| max_depth(c, depth + c.length.unwrap_or(0.0)))
        .fold(depth, f64::max)
}

/// Returns the node's y coordinate.
fn place(
    node: &NewickNode,
    depth: f64,
    sx: &dyn Fn(f64) -> f64,
    top: f64,
    row: f64,
    next_leaf: &mut usize,
    layout: &mut Layout,
) -> f64 {
    let x = sx(depth);
    if node.is_leaf() {
        let y = top + row * (*next_leaf as f64 + 0.5);
        *next_leaf += 1;
        layout.labels.push(format!(
            r#"<text x="{}" y="{}" dominant-baseline="middle">{}</text>"#,
            x + 4.0,
            y,
            escape(node.label.as_deref().unwrap_or(""))
        ));
        return y;
    }
    let ys: Vec<(f64, f64)> = node
        .children
        .iter()
        .map(|c| {
            let cd = depth + c.length.unwrap_or(0.0);
            (place(c, cd, sx, top, row, next_leaf, layout), sx(cd))
        })
        .collect();
    let y_min = ys.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    layout.segments.push(format!(
        r#"<line x1="{x}" y1="{y_min}" x2="{x}" y2="{y_max}" stroke="black"/>"#
    ));
    for (cy, cx) in ys {
        layout.segments.push(format!(
            r#"<line x1="{x}" y1="{cy}" x2="{cx}" y2="{cy}" stroke="black"/>"#
        ));
    }
    let y = (y_min + y_max) / 2.0;
    if let Some(label) = &node.label {
        layout.labels.push(format!(
            r##"<text x="{}" y="{}" fill="#b22222" font-size="9" text-anchor="end">{}</text>"##,
            x - 2.0,
            y - 3.0,
            escape(label)
        ));
    }
    y
}

/// Scatter of 2-D points coloured by group, with a legend.
pub fn scatter_svg(
    labels: &[String],
    groups: &[String],
    points: &[[f64; 2]],
    title: &str,
) -> String {
    let (w, h, pad) = (640.0, 520.0, 50.0);
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (xs, ys) = (span(x0, x1), span(y0, y1));
    let px = |x: f64| pad + (w - 2.0 * pad - 150.0) * (x - x0) / xs;
    let py = |y: f64| h - pad - (h - 2.0 * pad) * (y - y0) / ys;

    let mut colour: BTreeMap<&str, &str> = BTreeMap::new();
    for g in groups {
        let next = PALETTE[colour.len() % PALETTE.len()];
        colour.entry(g.as_str()).or_insert(next);
    }
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{pad}" y="24" font-size="13">{}</text>"#,
        escape(title)
    )
    .unwrap();
    for ((label, group), p) in labels.iter().zip(groups).zip(points) {
        let (x, y) = (px(p[0]), py(p[1]));
        writeln!(
            out,
            r#"<circle cx="{x}" cy="{y}" r="4" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            colour[group.as_str()],
            x + 5.0,
            y - 4.0,
            escape(label)
        )
        .unwrap();
    }
    for (i, (g, c)) in colour.iter().enumerate() {
        let y = pad + 14.0 * i as f64;
        writeln!(
            out,
            r#"<rect x="{}" y="{}" width="8" height="8" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
            w - 140.0,
            y - 8.0,
            w - 128.0,
            y,
            escape(g)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
