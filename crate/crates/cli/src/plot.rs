//! Static SVG bar charts of operating characteristics.

use bibasket::oc::{Metric, OcRow};
use std::fmt::Write;

const PALETTE: [&str; 8] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000"];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 56.0;
const RIGHT: f64 = 140.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 44.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bars grouped by subtrial, one bar per model, with ±2 MC SE whiskers.
/// `rows` must belong to one scenario and one metric.
pub fn bar_chart(scenario: &str, metric: Metric, rows: &[&OcRow]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut groups: Vec<&str> = Vec::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        if !groups.contains(&r.subtrial.as_str()) {
            groups.push(&r.subtrial);
        }
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let group_w = plot_w / groups.len().max(1) as f64;
    let bar_w = group_w * 0.8 / models.len().max(1) as f64;
    let y = |v: f64| TOP + plot_h * (1.0 - v.clamp(0.0, 1.0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{} · {}</text>"#,
        LEFT + plot_w / 2.0,
        escape(scenario),
        metric
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y(v) + 4.0,
            y = y(v)
        );
    }
    for (g, name) in groups.iter().enumerate() {
        let x0 = LEFT + g as f64 * group_w + group_w * 0.1;
        for (m, model) in models.iter().enumerate() {
            let Some(r) = rows.iter().find(|r| r.model == *model && r.subtrial == *name) else {
                continue;
            };
            let x = x0 + m as f64 * bar_w;
            let colour = PALETTE[m % PALETTE.len()];
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{colour}"><title>{}: {:.3} ± {:.3}</title></rect>"#,
                y(r.estimate),
                bar_w * 0.9,
                y(0.0) - y(r.estimate),
                escape(model),
                r.estimate,
                r.mc_se
            );
            let cx = x + bar_w * 0.45;
            let _ = writeln!(
                svg,
                r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
                y(r.estimate - 2.0 * r.mc_se),
                y(r.estimate + 2.0 * r.mc_se)
            );
        }
        let label = if *name == "all" { "OER".to_string() } else { format!("k = {name}") };
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            LEFT + (g as f64 + 0.5) * group_w,
            HEIGHT - BOTTOM + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" x2="{LEFT}" y1="{TOP}" y2="{:.1}" stroke="black"/><line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
        y(0.0),
        LEFT + plot_w,
        y(0.0),
        y(0.0)
    );
    for (m, model) in models.iter().enumerate() {
        let ly = TOP + 8.0 + m as f64 * 18.0;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{}" y="{ly:.1}">{}</text>"#,
            ly - 10.0,
            PALETTE[m % PALETTE.len()],
            lx + 18.0,
            escape(model)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// File-name-safe rendering of a label.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, subtrial: &str, estimate: f64) -> OcRow {
        OcRow {
            scenario: "s".into(),
            model: model.into(),
            rule: "joint".into(),
            eta1: 0.8,
            eta2: 0.8,
            eta: 0.8,
            delta: 0.0,
            subtrial: subtrial.into(),
            metric: Metric::Power,
            estimate,
            mc_se: 0.02,
            n_reps: 500,
            mean_rhat_max: 1.0,
            n_flagged: 0,
        }
    }

    #[test]
    fn one_bar_per_row_and_legend_per_model() {
        let rows = [row("BHM", "1", 0.4), row("SA", "1", 0.3), row("BHM", "2", 0.5), row("SA", "2", 0.2)];
        let refs: Vec<&OcRow> = rows.iter().collect();
        let svg = bar_chart("Ia <x>", Metric::Power, &refs);
        assert_eq!(svg.matches("<title>").count(), 4);
        assert!(svg.contains("Ia &lt;x&gt;"));
        assert!(svg.contains(">BHM</text>") && svg.contains(">SA</text>"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn slug_replaces_spaces() {
        assert_eq!(slug("Global Null"), "Global_Null");
        assert_eq!(slug("1.4"), "1.4");
    }
}
