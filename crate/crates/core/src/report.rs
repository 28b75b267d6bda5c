//! CSV and SVG emission.
//!
//! Numbers are printed with 12 significant digits in the style of C's
//! `%.12g`, `.` as decimal separator, LF line endings. Layout of the
//! SVG charts is fixed so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

const SIG_DIGITS: usize = 12;

/// Formats `x` with 12 significant digits, trailing zeros trimmed.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= SIG_DIGITS as i32 {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Simple in-memory CSV table.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }
}

/// Reads a headered numeric CSV into (header, rows).
pub fn read_numeric_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| crate::Error::Parse("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| crate::Error::Parse(format!("line {}: {s:?}: {e}", lineno + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(crate::Error::Parse(format!(
                "line {}: {} fields, header has {}",
                lineno + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heat map of a square matrix; NaN cells are drawn grey.
pub fn heatmap_svg(title: &str, labels: &[String], values: &nalgebra::DMatrix<f64>) -> String {
    let n = values.nrows();
    let cell = 24.0_f64.min(600.0 / n.max(1) as f64).max(4.0);
    let margin = 120.0;
    let size = margin + cell * n as f64 + 20.0;
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{:.0}" font-family="monospace" font-size="10">"#,
        size + 30.0
    );
    let _ = writeln!(svg, r#"<text x="4" y="14" font-size="12">{}</text>"#, escape(title));
    for i in 0..n {
        for j in 0..n {
            let v = values[(i, j)];
            let fill = if v.is_finite() {
                // white (low) to dark blue (high)
                let t = ((v - lo) / span).clamp(0.0, 1.0);
                let r = (255.0 * (1.0 - t)) as u8;
                let g = (255.0 * (1.0 - 0.8 * t)) as u8;
                format!("rgb({r},{g},255)")
            } else {
                "rgb(160,160,160)".to_string()
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}"><title>{} / {}: {}</title></rect>"#,
                margin + cell * j as f64,
                margin + cell * i as f64,
                escape(&labels.get(i).cloned().unwrap_or_default()),
                escape(&labels.get(j).cloned().unwrap_or_default()),
                fmt_num(v)
            );
        }
        let label = labels.get(i).cloned().unwrap_or_else(|| i.to_string());
        let _ = writeln!(
            svg,
            r#"<text x="4" y="{:.2}">{}</text>"#,
            margin + cell * (i as f64 + 0.7),
            escape(&label)
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate({:.2},{:.2}) rotate(-60)">{}</text>"#,
            margin + cell * (i as f64 + 0.7),
            margin - 4.0,
            escape(&label)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="4" y="{:.0}">range [{}, {}]</text>"#,
        size + 20.0,
        fmt_num(if lo.is_finite() { lo } else { f64::NAN }),
        fmt_num(if hi.is_finite() { hi } else { f64::NAN })
    );
    svg.push_str("</svg>\n");
    svg
}

/// Line chart of one or more named series over a shared x axis.
pub fn line_chart_svg(title: &str, x: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let all_y = series.iter().flat_map(|(_, ys)| ys.iter().copied()).filter(|v| v.is_finite());
    let ylo = all_y.clone().fold(f64::INFINITY, f64::min);
    let yhi = all_y.fold(f64::NEG_INFINITY, f64::max);
    let xlo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let xhi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let xs = if xhi > xlo { xhi - xlo } else { 1.0 };
    let ys = if yhi > ylo { yhi - ylo } else { 1.0 };
    let px = |v: f64| pad + (v - xlo) / xs * (w - 2.0 * pad);
    let py = |v: f64| h - pad - (v - ylo) / ys * (h - 2.0 * pad);
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="monospace" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<text x="{pad}" y="20" font-size="12">{}</text>"#, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{pad} {pad} L{pad} {b} L{r} {b}" stroke="black" fill="none"/>"#,
        b = h - pad,
        r = w - pad
    );
    if ylo.is_finite() && yhi.is_finite() {
        let _ = writeln!(svg, r#"<text x="2" y="{:.2}">{}</text>"#, py(yhi) + 4.0, fmt_num(yhi));
        let _ = writeln!(svg, r#"<text x="2" y="{:.2}">{}</text>"#, py(ylo), fmt_num(ylo));
    }
    for (k, (name, ys_k)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        for (i, (&xv, &yv)) in x.iter().zip(ys_k).enumerate() {
            if !yv.is_finite() {
                continue;
            }
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(xv), py(yv));
        }
        let _ = writeln!(svg, r#"<path d="{}" stroke="{color}" fill="none"/>"#, d.trim_end());
        let _ = writeln!(
            svg,
            r#"<text x="{:.0}" y="{:.0}" fill="{color}">{}</text>"#,
            w - pad - 120.0,
            pad + 14.0 * k as f64,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(123456.789), "123456.789");
        assert_eq!(fmt_num(1e-7), "1e-07");
        assert_eq!(fmt_num(1.5e20), "1.5e+20");
        assert_eq!(fmt_num(0.0001), "0.0001");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(f64::NAN), "nan");
        assert_eq!(fmt_num(std::f64::consts::PI), "3.14159265359");
    }

    #[test]
    fn csv_round_trip() {
        let mut t = CsvTable::new(["a", "b"]);
        t.push([fmt_num(1.0), fmt_num(0.5)]);
        let s = t.to_csv_string();
        assert_eq!(s, "a,b\n1,0.5\n");
        let (h, rows) = read_numeric_csv(&s).unwrap();
        assert_eq!(h, vec!["a", "b"]);
        assert_eq!(rows, vec![vec![1.0, 0.5]]);
        assert!(read_numeric_csv("a,b\n1\n").is_err());
    }

    #[test]
    fn svg_is_deterministic() {
        let m = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, f64::NAN]);
        let labels = vec!["a".to_string(), "b<".to_string()];
        let s1 = heatmap_svg("t", &labels, &m);
        assert_eq!(s1, heatmap_svg("t", &labels, &m));
        assert!(s1.contains("b&lt;"));
        let l = line_chart_svg("x", &[0.0, 1.0], &[("s".into(), vec![1.0, 2.0])]);
        assert!(l.starts_with("<svg"));
    }
}
