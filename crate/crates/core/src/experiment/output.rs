//! CSV and SVG renderings of a [`PhaseTable`].

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::runner::{PhaseRow, PhaseTable};
use crate::divergence::{beta_star, boundary_curves, phase_regions};
use crate::error::{Error, Result};

pub const PHASE_COLUMNS: [&str; 11] = [
    "alpha",
    "beta",
    "p",
    "k",
    "lambda",
    "test",
    "type1_hat",
    "type2_hat",
    "se",
    "replicates",
    "seed",
];

/// Fixed scientific format for reals; every finite `f64` round-trips through it.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Writes the table as CSV: a header row, then one row per table row.
pub fn write_phase_csv<W: Write>(table: &PhaseTable, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PHASE_COLUMNS)?;
    for r in &table.rows {
        w.write_record([
            format_real(r.alpha),
            format_real(r.beta),
            r.p.to_string(),
            r.k.to_string(),
            format_real(r.lambda),
            r.test.clone(),
            format_real(r.type1_hat),
            format_real(r.type2_hat),
            format_real(r.se),
            r.replicates.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_phase_csv(table: &PhaseTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_phase_csv(table, std::io::BufWriter::new(file)).map_err(|e| io_err(path, e))
}

pub fn parse_phase_csv<R: Read>(input: R) -> std::result::Result<PhaseTable, String> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(PHASE_COLUMNS) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = i + 2;
        let real = |c: usize| -> std::result::Result<f64, String> {
            rec[c].parse().map_err(|_| format!("line {line}: bad {} value {:?}", PHASE_COLUMNS[c], &rec[c]))
        };
        let int = |c: usize| -> std::result::Result<u64, String> {
            rec[c].parse().map_err(|_| format!("line {line}: bad {} value {:?}", PHASE_COLUMNS[c], &rec[c]))
        };
        rows.push(PhaseRow {
            alpha: real(0)?,
            beta: real(1)?,
            p: int(2)? as usize,
            k: int(3)? as usize,
            lambda: real(4)?,
            test: rec[5].to_string(),
            type1_hat: real(6)?,
            type2_hat: real(7)?,
            se: real(8)?,
            replicates: int(9)? as usize,
            seed: int(10)?,
        });
    }
    Ok(PhaseTable { rows })
}

pub fn read_phase_csv(path: impl AsRef<Path>) -> Result<PhaseTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_phase_csv(file).map_err(|reason| Error::Parse {
        path: path.to_path_buf(),
        reason,
    })
}

const PLOT_LEFT: f64 = 70.0;
const PLOT_TOP: f64 = 40.0;
const PLOT_SIZE: f64 = 440.0;
const SVG_WIDTH: f64 = 720.0;
const SVG_HEIGHT: f64 = 540.0;

fn px(alpha: f64) -> f64 {
    PLOT_LEFT + alpha * PLOT_SIZE
}

fn py(beta: f64) -> f64 {
    PLOT_TOP + (1.0 - beta) * PLOT_SIZE
}

fn region_fill(name: &str) -> &'static str {
    match name {
        "impossible" => "#d9d9d9",
        "hard" => "#fdd0a2",
        "thresholding" => "#c7e9c0",
        _ => "#c6dbef",
    }
}

/// Marker color for a total error in `[0, 1]`: blue at 0, red at 1, linear
/// in RGB in between.
pub fn error_color(err: f64) -> String {
    let e = if err.is_nan() { 1.0 } else { err.clamp(0.0, 1.0) };
    let lerp = |a: f64, b: f64| (a + (b - a) * e).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(33.0, 178.0), lerp(102.0, 24.0), lerp(172.0, 43.0))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn marker(shape: usize, x: f64, y: f64, fill: &str) -> String {
    let r = 6.0;
    match shape % 4 {
        0 => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#),
        1 => format!(
            r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        2 => format!(
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
        _ => format!(
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{fill}" stroke="black" stroke-width="0.5"/>"#,
            x,
            y - r,
            x + r,
            y + r,
            x - r,
            y + r
        ),
    }
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    let pts: Vec<String> = points.iter().map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
    format!(r#"<polyline points="{}" fill="none" {style}/>"#, pts.join(" "))
}

/// Finite-`p` boundary curves in exponent coordinates over a geometric grid
/// of integer sparsities.
fn finite_p_curves(p: usize) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let ln_p = (p as f64).ln();
    let mut ks: Vec<usize> = (0..=200)
        .map(|i| ((p as f64).powf(i as f64 / 200.0)).round() as usize)
        .filter(|&k| k >= 1 && k <= p)
        .collect();
    ks.dedup();
    let (mut upper, mut lower) = (Vec::new(), Vec::new());
    for k in ks {
        let b = boundary_curves(p, k).expect("k in range");
        let a = (k as f64).ln() / ln_p;
        upper.push((a, (b.lambda1.ln() / ln_p).clamp(0.0, 1.0)));
        if b.lambda0 > 0.0 {
            lower.push((a, (b.lambda0.ln() / ln_p).clamp(0.0, 1.0)));
        }
    }
    (upper, lower)
}

/// Renders the table on the `(α, β)` unit square over the phase regions and
/// the critical exponent curve. Each point is colored by its total error
/// `type1_hat + type2_hat`; each test gets its own marker shape. When every
/// row shares one `p`, the finite-`p` boundary curves are drawn dashed.
/// Points outside the unit square are omitted and counted in a comment.
pub fn render_phase_svg(table: &PhaseTable) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, "<g id=\"regions\">");
    for region in phase_regions() {
        let pts: Vec<String> = region.polygon.iter().map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{}" fill-opacity="0.7" stroke="none"><title>{}</title></polygon>"#,
            pts.join(" "),
            region_fill(region.name),
            region.name
        );
    }
    let _ = writeln!(s, "</g>");

    // Axes, ticks and frame.
    let _ = writeln!(
        s,
        r#"<rect x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{PLOT_SIZE}" height="{PLOT_SIZE}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.2}</text>"#,
            px(v),
            PLOT_TOP + PLOT_SIZE + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
            PLOT_LEFT - 8.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">alpha = ln k / ln p</text>"#,
        px(0.5),
        PLOT_TOP + PLOT_SIZE + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">beta = ln lambda / ln p</text>"#,
        py(0.5),
        py(0.5)
    );

    let _ = writeln!(s, "<g id=\"boundary\">");
    let star: Vec<(f64, f64)> = [0.0, 1.0 / 3.0, 1.0].iter().map(|&a| (a, beta_star(a))).collect();
    let _ = writeln!(s, "{}", polyline(&star, r#"stroke="black" stroke-width="2.5""#));
    let mut ps: Vec<usize> = table.rows.iter().map(|r| r.p).collect();
    ps.dedup();
    if ps.len() == 1 && ps[0] >= 2 {
        let (upper, lower) = finite_p_curves(ps[0]);
        let _ = writeln!(
            s,
            "{}",
            polyline(&upper, r##"stroke="#444444" stroke-width="1.2" stroke-dasharray="6 3""##)
        );
        if lower.len() >= 2 {
            let _ = writeln!(
                s,
                "{}",
                polyline(&lower, r##"stroke="#444444" stroke-width="1.2" stroke-dasharray="2 3""##)
            );
        }
    }
    let _ = writeln!(s, "</g>");

    let tests = table.tests();
    let mut skipped = 0usize;
    let _ = writeln!(s, "<g id=\"data\">");
    for r in &table.rows {
        if !((0.0..=1.0).contains(&r.alpha) && (0.0..=1.0).contains(&r.beta)) {
            skipped += 1;
            continue;
        }
        let shape = tests.iter().position(|t| *t == r.test).unwrap_or(0);
        let _ = writeln!(s, "{}", marker(shape, px(r.alpha), py(r.beta), &error_color(r.type1_hat + r.type2_hat)));
    }
    let _ = writeln!(s, "</g>");
    if skipped > 0 {
        let _ = writeln!(s, "<!-- {skipped} point(s) outside the unit square omitted -->");
    }

    // Legend: marker shapes, then the error color bar.
    let lx = PLOT_LEFT + PLOT_SIZE + 30.0;
    let mut ly = PLOT_TOP + 10.0;
    for (i, t) in tests.iter().enumerate() {
        let _ = writeln!(s, "{}", marker(i, lx, ly, "#ffffff"));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 14.0, ly + 4.0, xml_escape(t));
        ly += 22.0;
    }
    ly += 10.0;
    let _ = writeln!(s, r#"<text x="{lx:.2}" y="{ly:.2}">type I + type II</text>"#);
    ly += 8.0;
    for i in 0..10 {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{ly:.2}" width="15" height="12" fill="{}"/>"#,
            lx + 15.0 * i as f64,
            error_color(i as f64 / 9.0)
        );
    }
    let _ = writeln!(s, r#"<text x="{lx:.2}" y="{:.2}">0</text>"#, ly + 26.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1</text>"#, lx + 150.0, ly + 26.0);
    ly += 50.0;
    for region in phase_regions() {
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{}"/>"#,
            ly - 10.0,
            region_fill(region.name)
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 18.0, region.name);
        ly += 18.0;
    }
    let _ = writeln!(s, "</svg>");
    s
}

pub fn emit_phase_plot(table: &PhaseTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_phase_svg(table)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(test: &str, lambda: f64, type2: f64) -> PhaseRow {
        PhaseRow {
            alpha: 0.25,
            beta: lambda.ln() / 16f64.ln(),
            p: 16,
            k: 2,
            lambda,
            test: test.into(),
            type1_hat: 0.05,
            type2_hat: type2,
            se: (type2 * (1.0 - type2) / 100.0).sqrt(),
            replicates: 100,
            seed: 9,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let table = PhaseTable {
            rows: vec![row("a,b", 2.0, 0.9), row("threshold", 1.0 / 3.0 + 1.5, 0.1 + 0.2)],
        };
        let mut buf = Vec::new();
        write_phase_csv(&table, &mut buf).unwrap();
        let back = parse_phase_csv(buf.as_slice()).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn empty_table_writes_header_only() {
        let mut buf = Vec::new();
        write_phase_csv(&PhaseTable::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", PHASE_COLUMNS.join(",")));
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(parse_phase_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn svg_is_deterministic_and_well_formed() {
        let table = PhaseTable {
            rows: vec![row("t<1>", 2.0, 0.9), row("t<1>", 8.0, 0.1)],
        };
        let a = render_phase_svg(&table);
        assert_eq!(a, render_phase_svg(&table));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("t&lt;1&gt;"));
        assert_eq!(a.matches("<circle").count(), 3);
        let empty = render_phase_svg(&PhaseTable::default());
        assert!(empty.contains("<polyline"));
        assert!(!empty.contains("<circle"));
    }

    #[test]
    fn color_is_monotone_in_error() {
        let reds: Vec<u8> = (0..=20)
            .map(|i| u8::from_str_radix(&error_color(i as f64 / 20.0)[1..3], 16).unwrap())
            .collect();
        assert!(reds.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(error_color(-1.0), error_color(0.0));
        assert_eq!(error_color(2.0), error_color(1.0));
    }
}
