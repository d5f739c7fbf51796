//! Atomic file writes and the regret-curve SVG.

use std::path::Path;

use mnlkb_core::harness::ScalingResult;

/// Writes via a sibling temp file plus rename, so partial runs never
/// leave truncated artifacts behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), String> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| format!("write {}: {e}", tmp.display()))?;
    std::fs::rename(&tmp, path).map_err(|e| format!("rename to {}: {e}", path.display()))
}

/// A minimal polyline plot of mean regret vs horizon, with the fitted
/// log-log slope in the title when available.
pub fn regret_curve_svg(scaling: &ScalingResult) -> String {
    let w = 640.0;
    let h = 420.0;
    let margin = 60.0;
    let rows = &scaling.rows;
    let (tmin, tmax) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.horizon as f64), hi.max(r.horizon as f64))
        });
    let (rmin, rmax) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.mean_regret), hi.max(r.mean_regret))
        });
    let rspan = (rmax - rmin).max(1e-9);
    let tspan = (tmax - tmin).max(1e-9);
    let x = |t: f64| margin + (t - tmin) / tspan * (w - 2.0 * margin);
    let y = |r: f64| h - margin - (r - rmin) / rspan * (h - 2.0 * margin);

    let points: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.2},{:.2}", x(r.horizon as f64), y(r.mean_regret)))
        .collect();
    let title = match scaling.slope {
        Some(s) => format!(
            "mean regret vs T ({}, log-log slope {s:.3})",
            scaling.policy
        ),
        None => format!("mean regret vs T ({})", scaling.policy),
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{tx}\" y=\"28\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n\
         <line x1=\"{m}\" y1=\"{ybase}\" x2=\"{xend}\" y2=\"{ybase}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{ybase}\" stroke=\"black\"/>\n",
        tx = w / 2.0,
        m = margin,
        ybase = h - margin,
        xend = w - margin,
    );
    svg.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n",
        points.join(" ")
    ));
    for (r, p) in rows.iter().zip(&points) {
        let (px, py) = p.split_once(',').expect("point format");
        svg.push_str(&format!(
            "<circle cx=\"{px}\" cy=\"{py}\" r=\"3\" fill=\"steelblue\"/>\n\
             <text x=\"{px}\" y=\"{ly}\" text-anchor=\"middle\" font-size=\"11\">T={}</text>\n",
            r.horizon,
            ly = h - margin + 18.0,
        ));
    }
    svg.push_str(&format!(
        "<text x=\"12\" y=\"{}\" font-size=\"11\">{rmin:.2}</text>\n\
         <text x=\"12\" y=\"{}\" font-size=\"11\">{rmax:.2}</text>\n</svg>\n",
        h - margin,
        margin
    ));
    svg
}
