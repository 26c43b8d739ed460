//! Hand-written SVG for the scatter and heatmap figures.

use std::fmt::Write as _;

use crate::audit::{scatter_points, HeatmapMatrix, Metric, MetricMeans, SeriesKey};
use crate::audit::AuditRecord;

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps `[lo, hi]` onto a pixel span, padding degenerate ranges.
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, p0: f64, p1: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let pad = ((hi - lo) * 0.1).max(1e-3);
        Self {
            lo: lo - pad,
            hi: hi + pad,
            p0,
            p1,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

/// One marker per under-representation record of `key` in the
/// (unfairness, error) plane; lighter markers mean stronger bias. The
/// baseline, when given, is drawn as a horizontal and a vertical line.
pub fn emit_svg_scatter(
    records: &[AuditRecord],
    key: SeriesKey,
    unfairness: Metric,
    baseline: Option<&MetricMeans>,
) -> String {
    let pts = scatter_points(records, key, unfairness);
    let base = baseline.and_then(|b| Some((b.metric(unfairness)?, b.err?)));
    let xs = pts.iter().map(|p| p.0).chain(base.map(|b| b.0));
    let ys = pts.iter().map(|p| p.1).chain(base.map(|b| b.1));
    let ax = Axis::new(xs, MARGIN, W - MARGIN / 2.0);
    let ay = Axis::new(ys, H - MARGIN, MARGIN / 2.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(&key.to_string())
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/><line x1="{MARGIN}" y1="{y}" x2="{MARGIN}" y2="{top}" stroke="black"/>"#,
        y = H - MARGIN,
        x2 = W - MARGIN / 2.0,
        top = MARGIN / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">error rate</text>"#,
        W / 2.0,
        H - 15.0,
        unfairness.as_str().to_uppercase(),
        H / 2.0,
        H / 2.0
    );
    for (lo, hi, axis, horizontal) in [(ax.lo, ax.hi, &ax, true), (ay.lo, ay.hi, &ay, false)] {
        for t in 0..=4 {
            let v = lo + (hi - lo) * t as f64 / 4.0;
            let p = axis.map(v);
            if horizontal {
                let _ = writeln!(s, r#"<text x="{p:.1}" y="{}" text-anchor="middle">{v:.3}</text>"#, H - MARGIN + 14.0);
            } else {
                let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, MARGIN - 4.0, p + 4.0);
            }
        }
    }
    if let Some((bx, by)) = base {
        let _ = writeln!(
            s,
            r#"<line class="baseline" x1="{:.1}" y1="{top}" x2="{:.1}" y2="{bottom}" stroke="blue"/>"#,
            ax.map(bx),
            ax.map(bx),
            top = MARGIN / 2.0,
            bottom = H - MARGIN
        );
        let _ = writeln!(
            s,
            r#"<line class="baseline" x1="{MARGIN}" y1="{:.1}" x2="{right}" y2="{:.1}" stroke="blue"/>"#,
            ay.map(by),
            ay.map(by),
            right = W - MARGIN / 2.0
        );
    }
    for (x, y, r) in &pts {
        // Strength 0 is the darkest shade; strong bias fades toward white.
        let shade = (40.0 + 180.0 * r.setting.strength()).round() as u8;
        let _ = writeln!(
            s,
            r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="rgb({shade},{shade},{})" stroke="black" stroke-width="0.3"><title>beta_pos={} beta_neg={} run={}</title></circle>"#,
            ax.map(*x),
            ay.map(*y),
            shade.saturating_add(30),
            r.setting.beta_pos,
            r.setting.beta_neg,
            r.run
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Shaded grid with `beta_pos` rows and `beta_neg` columns. Shade is linear
/// on `[0, max]` with darker meaning lower; missing cells are hatched.
pub fn emit_heatmap_svg(m: &HeatmapMatrix) -> String {
    let rows = m.beta_pos.len();
    let cols = m.beta_neg.len();
    let cell = 48.0;
    let left = 70.0;
    let top = 40.0;
    let width = left + cell * cols as f64 + 20.0;
    let height = top + cell * rows as f64 + 50.0;
    let max = m.values.iter().flatten().flatten().copied().fold(0.0f64, f64::max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    s.push_str(
        r##"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><rect width="6" height="6" fill="white"/><line x1="0" y1="0" x2="0" y2="6" stroke="gray" stroke-width="2"/></pattern></defs>"##,
    );
    s.push('\n');
    let title = match m.lambda {
        Some(l) => format!("{} (lambda={l}) {}", m.classifier, m.metric),
        None => format!("{} {}", m.classifier, m.metric),
    };
    let _ = writeln!(s, r#"<text x="{}" y="16" text-anchor="middle">{}</text>"#, width / 2.0, escape(&title));
    for (i, row) in m.values.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + cell / 2.0 + 4.0,
            m.beta_pos[i]
        );
        for (j, v) in row.iter().enumerate() {
            let x = left + cell * j as f64;
            match v {
                Some(v) => {
                    let level = if max > 0.0 { (255.0 * v / max).round() as u8 } else { 0 };
                    let _ = writeln!(
                        s,
                        r#"<rect class="cell" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({level},{level},{level})" stroke="white"><title>{v}</title></rect>"#
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        r#"<rect class="cell missing" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="url(#hatch)" stroke="white"/>"#
                    );
                }
            }
        }
    }
    for (j, b) in m.beta_neg.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{b}</text>"#,
            left + cell * j as f64 + cell / 2.0,
            top + cell * rows as f64 + 14.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">beta_neg</text><text x="12" y="{:.1}" transform="rotate(-90 12 {:.1})" text-anchor="middle">beta_pos</text>"#,
        left + cell * cols as f64 / 2.0,
        top + cell * rows as f64 + 34.0,
        top + cell * rows as f64 / 2.0,
        top + cell * rows as f64 / 2.0
    );
    s.push_str("</svg>\n");
    s
}
