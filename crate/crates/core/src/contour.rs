//! Marching-squares contour extraction on rectilinear grids.
//!
//! Cells with a masked (NaN) corner are skipped, so contours stop at the
//! edge of the region where the sampled function is defined.

use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];
pub type Polyline = Vec<Point>;

/// Scalar field sampled on the tensor grid `xs × ys`; `values[j * xs.len() + i]`
/// holds the value at `(xs[i], ys[j])`, NaN where undefined.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridField {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), xs.len() * ys.len(), "grid size mismatch");
        Self { xs, ys, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.xs.len() + i]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

/// Evenly spaced points including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn lerp(a: Point, b: Point, va: f64, vb: f64, level: f64) -> Point {
    let t = if vb == va { 0.5 } else { (level - va) / (vb - va) };
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Raw, unordered contour segments of `field = level`.
pub fn segments(field: &GridField, level: f64) -> Vec<[Point; 2]> {
    let nx = field.xs.len();
    let ny = field.ys.len();
    let mut out = Vec::new();
    if nx < 2 || ny < 2 {
        return out;
    }
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            // corners counter-clockwise from bottom-left
            let p = [
                [field.xs[i], field.ys[j]],
                [field.xs[i + 1], field.ys[j]],
                [field.xs[i + 1], field.ys[j + 1]],
                [field.xs[i], field.ys[j + 1]],
            ];
            let v = [
                field.at(i, j),
                field.at(i + 1, j),
                field.at(i + 1, j + 1),
                field.at(i, j + 1),
            ];
            if v.iter().any(|x| x.is_nan()) {
                continue;
            }
            let above: Vec<bool> = v.iter().map(|x| *x >= level).collect();
            let mut crossings = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if above[a] != above[b] {
                    crossings.push((e, lerp(p[a], p[b], v[a], v[b], level)));
                }
            }
            let cell = (p[2][0] - p[0][0]).abs().max((p[2][1] - p[0][1]).abs());
            let mut push = |a: Point, b: Point| {
                // a contour through a grid vertex yields zero-length pieces
                if !close(a, b, 1e-12 * cell) {
                    out.push([a, b]);
                }
            };
            match crossings.len() {
                2 => push(crossings[0].1, crossings[1].1),
                4 => {
                    // Saddle cell: connect according to the cell-center value.
                    let center = 0.25 * v.iter().sum::<f64>();
                    let center_above = center >= level;
                    if center_above == above[0] {
                        // corners 0 and 2 join through the center; cut off 1 and 3
                        push(crossings[0].1, crossings[1].1);
                        push(crossings[2].1, crossings[3].1);
                    } else {
                        push(crossings[3].1, crossings[0].1);
                        push(crossings[1].1, crossings[2].1);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

fn close(a: Point, b: Point, tol: f64) -> bool {
    (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
}

/// Contour polylines of `field = level`, with segments chained end to end.
pub fn contour_lines(field: &GridField, level: f64) -> Vec<Polyline> {
    let segs = segments(field, level);
    let span_x = field.xs.last().copied().unwrap_or(0.0) - field.xs.first().copied().unwrap_or(0.0);
    let span_y = field.ys.last().copied().unwrap_or(0.0) - field.ys.first().copied().unwrap_or(0.0);
    let tol = 1e-9 * span_x.abs().max(span_y.abs()).max(1e-300);
    let mut used = vec![false; segs.len()];
    let mut lines = Vec::new();
    for start in 0..segs.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut line: std::collections::VecDeque<Point> = segs[start].iter().copied().collect();
        loop {
            let mut extended = false;
            for (k, seg) in segs.iter().enumerate() {
                if used[k] {
                    continue;
                }
                let back = *line.back().unwrap();
                let front = *line.front().unwrap();
                if close(seg[0], back, tol) {
                    line.push_back(seg[1]);
                } else if close(seg[1], back, tol) {
                    line.push_back(seg[0]);
                } else if close(seg[1], front, tol) {
                    line.push_front(seg[0]);
                } else if close(seg[0], front, tol) {
                    line.push_front(seg[1]);
                } else {
                    continue;
                }
                used[k] = true;
                extended = true;
            }
            if !extended {
                break;
            }
        }
        lines.push(line.into_iter().collect());
    }
    lines
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Proper intersection point of segments `ab` and `cd`, if any.
pub fn segment_intersection(a: Point, b: Point, c: Point, d: Point) -> Option<Point> {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        let t = d1 / (d1 - d2);
        Some([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
    } else {
        None
    }
}

/// All proper crossings between two sets of polylines.
pub fn polyline_crossings(first: &[Polyline], second: &[Polyline]) -> Vec<Point> {
    let mut hits = Vec::new();
    for l1 in first {
        for s1 in l1.windows(2) {
            for l2 in second {
                for s2 in l2.windows(2) {
                    if let Some(p) = segment_intersection(s1[0], s1[1], s2[0], s2[1]) {
                        hits.push(p);
                    }
                }
            }
        }
    }
    hits
}
