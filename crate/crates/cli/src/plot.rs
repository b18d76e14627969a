//! SVG line charts of the CSVs written by `run`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{io_error, CliError, CliResult};

const W: f64 = 720.0;
const H: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Numeric series from a CSV: x is the first column, one series per other
/// numeric column. Files with a `c` column (scaled tails) plot against `c`,
/// one series per `t`.
pub fn read_series(path: &Path) -> CliResult<(String, Vec<Series>)> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let rows: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()?;
    let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
    let numeric: Vec<usize> = (0..header.len())
        .filter(|&j| !rows.is_empty() && rows.iter().all(|r| r.get(j).and_then(|s| num(s)).is_some()))
        .collect();
    let bad = |msg: &str| CliError::Usage(format!("{}: {msg}", path.display()));

    if let (Some(ci), Some(ti)) = (
        header.iter().position(|h| h == "c"),
        header.iter().position(|h| h == "t"),
    ) {
        let yi = header
            .iter()
            .position(|h| h == "empirical_tail")
            .ok_or_else(|| bad("scaled table without empirical_tail"))?;
        let mut groups: BTreeMap<u64, Series> = BTreeMap::new();
        for r in &rows {
            let (t, c, y) = (num(&r[ti]), num(&r[ci]), num(&r[yi]));
            if let (Some(t), Some(c), Some(y)) = (t, c, y) {
                groups
                    .entry(t.to_bits())
                    .or_insert_with(|| Series {
                        label: format!("t={t}"),
                        points: Vec::new(),
                    })
                    .points
                    .push((c, y));
            }
        }
        if let Some(pi) = header.iter().position(|h| h == "predicted_tail") {
            let mut seen = BTreeMap::new();
            for r in &rows {
                if let (Some(c), Some(p)) = (num(&r[ci]), num(&r[pi])) {
                    seen.entry(c.to_bits()).or_insert((c, p));
                }
            }
            let mut points: Vec<(f64, f64)> = seen.into_values().collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            groups.insert(
                u64::MAX,
                Series {
                    label: "predicted".into(),
                    points,
                },
            );
        }
        return Ok(("c".into(), groups.into_values().collect()));
    }

    let xi = *numeric.first().ok_or_else(|| bad("no numeric column"))?;
    let series = numeric
        .iter()
        .skip(1)
        .map(|&j| Series {
            label: header[j].clone(),
            points: rows.iter().filter_map(|r| Some((num(&r[xi])?, num(&r[j])?))).collect(),
        })
        .collect::<Vec<_>>();
    if series.is_empty() {
        return Err(bad("need at least two numeric columns"));
    }
    Ok((header[xi].clone(), series))
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Renders the series; `log_y` plots `log10(y)` and drops nonpositive points.
pub fn render_svg(title: &str, x_label: &str, series: &[Series], log_y: bool) -> String {
    let tf = |y: f64| if log_y { y.log10() } else { y };
    let pts = series
        .iter()
        .flat_map(|s| s.points.iter())
        .filter(|p| !log_y || p.1 > 0.0)
        .map(|&(x, y)| (x, tf(y)));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for x in ticks(x0, x1) {
        let px = sx(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            H - MARGIN,
            H - MARGIN + 5.0,
            H - MARGIN + 18.0,
            label(x)
        );
    }
    for y in ticks(y0, y1) {
        let py = sy(y);
        let text = if log_y { format!("1e{}", label(y)) } else { label(y) };
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{MARGIN}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{text}</text>"#,
            MARGIN - 5.0,
            MARGIN - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 15.0,
        escape(x_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|p| !log_y || p.1 > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(tf(y))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = MARGIN + 16.0 * (k as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            W - MARGIN - 6.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn label(v: f64) -> String {
    let r = (v * 1e6).round() / 1e6;
    format!("{r}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<csv stem>.svg` (or `out`) and returns its path.
pub fn plot_csv(csv_path: &Path, out: Option<&Path>, log_y: bool) -> CliResult<std::path::PathBuf> {
    let (x_label, series) = read_series(csv_path)?;
    let title = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let svg = render_svg(&title, &x_label, &series, log_y);
    let target = out.map_or_else(|| csv_path.with_extension("svg"), Path::to_path_buf);
    std::fs::write(&target, svg).map_err(io_error(&target))?;
    Ok(target)
}
