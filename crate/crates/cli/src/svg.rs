//! Static single-file SVG line plots on a log-scale y axis.

use std::fmt::Write as _;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN: (f64, f64, f64, f64) = (58.0, 16.0, 30.0, 36.0); // left, right, top, bottom
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

/// Panels laid out two per row. Non-positive and non-finite values are
/// left out; a panel with nothing to draw keeps its frame.
pub fn render(panels: &[Panel]) -> String {
    let cols = panels.len().clamp(1, 2);
    let rows = panels.len().div_ceil(2).max(1);
    let (w, h) = (PANEL_W * cols as f64, PANEL_H * rows as f64);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#)
        .unwrap();
    writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    for (i, p) in panels.iter().enumerate() {
        let (x0, y0) = (PANEL_W * (i % 2) as f64, PANEL_H * (i / 2) as f64);
        panel(&mut s, p, x0, y0);
    }
    s.push_str("</svg>\n");
    s
}

fn panel(s: &mut String, p: &Panel, x0: f64, y0: f64) {
    let (ml, mr, mt, mb) = MARGIN;
    let (left, top) = (x0 + ml, y0 + mt);
    let (pw, ph) = (PANEL_W - ml - mr, PANEL_H - mt - mb);
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        left + pw / 2.0,
        y0 + 18.0,
        p.title
    )
    .unwrap();
    writeln!(s, r##"<rect x="{left:.1}" y="{top:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##).unwrap();

    let pts: Vec<Vec<(f64, f64)>> = p
        .series
        .iter()
        .map(|ser| {
            ser.points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && *y > 0.0)
                .map(|&(x, y)| (x, y.log10()))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (xmin, xmax) = all
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(x, _)| {
            (a.min(x), b.max(x))
        });
    let (lmin, lmax) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, y)| {
        (a.min(y), b.max(y))
    });
    if !xmin.is_finite() {
        return;
    }
    let (dmin, mut dmax) = (lmin.floor(), lmax.ceil());
    if dmax <= dmin {
        dmax = dmin + 1.0;
    }
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let sx = |x: f64| left + (x - xmin) / xspan * pw;
    let sy = |l: f64| top + ph - (l - dmin) / (dmax - dmin) * ph;

    let step = ((dmax - dmin) / 6.0).ceil().max(1.0);
    let mut dec = dmin;
    while dec <= dmax {
        let y = sy(dec);
        writeln!(
            s,
            r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##,
            left + pw
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{}</text>"#,
            left - 4.0,
            y + 4.0,
            dec as i64
        )
        .unwrap();
        dec += step;
    }
    for (frac, anchor) in [(0.0, "start"), (1.0, "end")] {
        let x = xmin + frac * (xmax - xmin);
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{}</text>"#,
            sx(x),
            top + ph + 14.0,
            x
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t</text>"#,
        left + pw / 2.0,
        top + ph + 28.0
    )
    .unwrap();

    for (k, (ser, line)) in p.series.iter().zip(&pts).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let coords: Vec<String> = line
            .iter()
            .map(|&(x, l)| format!("{:.2},{:.2}", sx(x), sy(l)))
            .collect();
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        )
        .unwrap();
        if p.series.len() > 1 {
            let ly = top + 14.0 + 14.0 * k as f64;
            writeln!(
                s,
                r#"<text x="{:.1}" y="{ly:.1}" text-anchor="end" fill="{color}">{}</text>"#,
                left + pw - 6.0,
                ser.label
            )
            .unwrap();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_log_panels() {
        let p = Panel {
            title: "loss".into(),
            series: vec![Series {
                label: "gd".into(),
                points: vec![(0.0, 1.0), (10.0, 1e-6), (20.0, 0.0)],
            }],
        };
        let svg = render(&[p]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("1e-6"));
    }

    #[test]
    fn empty_panel_keeps_frame() {
        let svg = render(&[Panel {
            title: "none".into(),
            series: vec![],
        }]);
        assert!(svg.contains("<rect x="));
        assert!(!svg.contains("polyline"));
    }
}
