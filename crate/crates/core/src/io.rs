//! Artifact formats: RFC-4180 CSV at round-trip precision, JSON with sorted
//! keys, and static SVG plots.

use std::fmt::Write as _;

use serde::Serialize;

use crate::contour::{Point, Polyline};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::pulse_design::RField;
use crate::spectral::{S1Status, SampledField};
use crate::uncertainty::UncertaintyEnvelope;

/// 17 significant digits in scientific notation; `inf`, `-inf`, `nan`
/// for non-finite values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        "nan" => Ok(f64::NAN),
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|_| Error::Config(format!("not a number: {t:?}"))),
    }
}

pub fn status_str(s: S1Status) -> &'static str {
    match s {
        S1Status::Converged => "converged",
        S1Status::Diverged => "diverged",
        S1Status::NotConverged => "not_converged",
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rd
            .headers()
            .map_err(|e| Error::Config(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = rd
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { header, rows })
    }
}

/// `t,x1..xn,u1..um`, one row per stored sample or per requested time.
pub fn trajectory_csv(traj: &Trajectory, at_times: Option<&[f64]>) -> Result<String> {
    let n = traj.states.first().map_or(0, Vec::len);
    let m = traj.inputs.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    let mut table = CsvTable::new(&header);
    match at_times {
        None => {
            for k in 0..traj.len() {
                let mut row = vec![traj.times[k]];
                row.extend(&traj.states[k]);
                row.extend(&traj.inputs[k]);
                table.push_numbers(&row);
            }
        }
        Some(ts) => {
            for &t in ts {
                let x = traj.sample(t).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "time {t} outside the simulated range [{}, {}]",
                        traj.times[0],
                        traj.final_time()
                    ))
                })?;
                // input of the step that covers t
                let k = traj.times.partition_point(|s| *s < t).min(traj.len() - 1);
                let mut row = vec![t];
                row.extend(&x);
                row.extend(&traj.inputs[k]);
                table.push_numbers(&row);
            }
        }
    }
    Ok(table.to_csv())
}

/// `x1,x2,s1,status`.
pub fn sampled_field_csv(field: &SampledField) -> String {
    let g = &field.grid;
    let mut table = CsvTable::new(&["x1", "x2", "s1", "status"]);
    for j in 0..g.ys.len() {
        for i in 0..g.xs.len() {
            let k = j * g.xs.len() + i;
            table.push(vec![
                fmt_f64(g.xs[i]),
                fmt_f64(g.ys[j]),
                fmt_f64(g.values[k]),
                status_str(field.status[k]).into(),
            ]);
        }
    }
    table.to_csv()
}

fn r_field_rows(table: &mut CsvTable, field: &RField, tag: Option<&str>) {
    for e in &field.evals {
        let mut row = vec![
            fmt_f64(e.mu),
            fmt_f64(e.tau),
            fmt_f64(e.r.unwrap_or(f64::NAN)),
            status_str(e.status).into(),
        ];
        if let Some(t) = tag {
            row.push(t.into());
        }
        table.push(row);
    }
}

/// `mu,tau,r,status`.
pub fn r_field_csv(field: &RField) -> String {
    let mut table = CsvTable::new(&["mu", "tau", "r", "status"]);
    r_field_rows(&mut table, field, None);
    table.to_csv()
}

/// Both parameter fields stacked, with a `p_tag` column.
pub fn tagged_r_fields_csv(p1: &RField, p2: &RField) -> String {
    let mut table = CsvTable::new(&["mu", "tau", "r", "status", "p_tag"]);
    r_field_rows(&mut table, p1, Some("p1"));
    r_field_rows(&mut table, p2, Some("p2"));
    table.to_csv()
}

/// `mu,tau,r1,r2,member,diverged`.
pub fn membership_csv(env: &UncertaintyEnvelope) -> String {
    let mut table = CsvTable::new(&["mu", "tau", "r1", "r2", "member", "diverged"]);
    for p in &env.points {
        table.push(vec![
            fmt_f64(p.mu),
            fmt_f64(p.tau),
            fmt_f64(p.r1.unwrap_or(f64::NAN)),
            fmt_f64(p.r2.unwrap_or(f64::NAN)),
            p.member.to_string(),
            p.diverged.to_string(),
        ]);
    }
    table.to_csv()
}

/// Pretty JSON with object keys in lexicographic order and a final newline.
pub fn to_sorted_json<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    // serde_json's Value map is ordered by key
    let value = serde_json::to_value(v).map_err(|e| Error::Config(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&value).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

#[derive(Clone, Debug)]
pub enum Layer {
    Lines {
        name: String,
        color: String,
        dashed: bool,
        lines: Vec<Polyline>,
    },
    Rect {
        name: String,
        color: String,
        lo: Point,
        hi: Point,
    },
    Points {
        name: String,
        color: String,
        points: Vec<Point>,
    },
}

impl Layer {
    pub fn lines(name: &str, color: &str, lines: Vec<Polyline>) -> Self {
        Layer::Lines {
            name: name.into(),
            color: color.into(),
            dashed: false,
            lines,
        }
    }

    pub fn dashed(name: &str, color: &str, lines: Vec<Polyline>) -> Self {
        Layer::Lines {
            name: name.into(),
            color: color.into(),
            dashed: true,
            lines,
        }
    }

    fn name(&self) -> &str {
        match self {
            Layer::Lines { name, .. } | Layer::Rect { name, .. } | Layer::Points { name, .. } => name,
        }
    }

    fn color(&self) -> &str {
        match self {
            Layer::Lines { color, .. } | Layer::Rect { color, .. } | Layer::Points { color, .. } => color,
        }
    }

    fn extent(&self) -> Vec<Point> {
        match self {
            Layer::Lines { lines, .. } => lines.iter().flatten().copied().collect(),
            Layer::Rect { lo, hi, .. } => vec![*lo, *hi],
            Layer::Points { points, .. } => points.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
    /// `[x_lo, x_hi, y_lo, y_hi]`; derived from the layers when `None`.
    pub bounds: Option<[f64; 4]>,
    pub layers: Vec<Layer>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            width: 640.0,
            height: 480.0,
            bounds: None,
            layers: Vec::new(),
        }
    }

    pub fn with_bounds(mut self, b: [f64; 4]) -> Self {
        self.bounds = Some(b);
        self
    }

    pub fn layer(mut self, l: Layer) -> Self {
        self.layers.push(l);
        self
    }

    fn data_bounds(&self) -> [f64; 4] {
        if let Some(b) = self.bounds {
            return b;
        }
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in self.layers.iter().flat_map(Layer::extent) {
            if p[0].is_finite() && p[1].is_finite() {
                b[0] = b[0].min(p[0]);
                b[1] = b[1].max(p[0]);
                b[2] = b[2].min(p[1]);
                b[3] = b[3].max(p[1]);
            }
        }
        if !b[0].is_finite() {
            return [0.0, 1.0, 0.0, 1.0];
        }
        for k in [0, 2] {
            if b[k + 1] - b[k] <= 0.0 {
                b[k] -= 0.5;
                b[k + 1] += 0.5;
            }
        }
        b
    }

    pub fn render(&self) -> String {
        let [x0, x1, y0, y1] = self.data_bounds();
        let (w, h) = (self.width, self.height);
        let (ml, mr, mt, mb) = (70.0, 150.0, 40.0, 50.0);
        let pw = w - ml - mr;
        let ph = h - mt - mb;
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<defs><clipPath id="plot"><rect x="{ml}" y="{mt}" width="{pw}" height="{ph}"/></clipPath></defs>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            ml + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for t in ticks(x0, x1) {
            let x = sx(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                mt + ph,
                mt + ph + 5.0,
                mt + ph + 18.0,
                tick_label(t)
            );
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{ml}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                ml - 5.0,
                ml - 8.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            ml + pw / 2.0,
            h - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            mt + ph / 2.0,
            mt + ph / 2.0,
            escape(&self.y_label)
        );

        let _ = writeln!(s, r#"<g clip-path="url(#plot)">"#);
        for layer in &self.layers {
            match layer {
                Layer::Lines {
                    color, dashed, lines, ..
                } => {
                    let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
                    for l in lines {
                        let pts: Vec<String> = l
                            .iter()
                            .filter(|p| p[0].is_finite() && p[1].is_finite())
                            .map(|p| format!("{:.2},{:.2}", sx(p[0]), sy(p[1])))
                            .collect();
                        if pts.len() >= 2 {
                            let _ = writeln!(
                                s,
                                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                                pts.join(" ")
                            );
                        }
                    }
                }
                Layer::Rect { color, lo, hi, .. } => {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                        sx(lo[0]),
                        sy(hi[1]),
                        sx(hi[0]) - sx(lo[0]),
                        sy(lo[1]) - sy(hi[1])
                    );
                }
                Layer::Points { color, points, .. } => {
                    for p in points {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                            sx(p[0]),
                            sy(p[1])
                        );
                    }
                }
            }
        }
        let _ = writeln!(s, "</g>");

        for (k, layer) in self.layers.iter().enumerate() {
            let y = mt + 10.0 + 18.0 * k as f64;
            let x = ml + pw + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                x + 20.0,
                layer.color(),
                x + 26.0,
                y + 4.0,
                escape(layer.name())
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Round tick positions, about five per axis.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
