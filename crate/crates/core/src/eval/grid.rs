//! The cell grid, its file formats and onset statistics.
//!
//! CSV layout: one `#` metadata line, then `cell_x,cell_y,value` rows for
//! every unmasked cell in row-major order. `cell_x`/`cell_y` are the cell
//! centre in road coordinates (`s`, `d`).

use std::fmt::Write as _;
use std::path::Path;

use super::EvalError;
use crate::scenario::{FrenetPoint, Road};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cell_length: f64,
    pub cell_width: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { cell_length: 4.0, cell_width: 1.0 }
    }
}

/// Values on a regular road-aligned grid. Row 0 is the rightmost row;
/// `None` marks masked cells.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    pub quantity: String,
    pub ego_speed: f64,
    pub cell_length: f64,
    pub cell_width: f64,
    /// Lower corner (smallest `s` and `d`) of cell (0, 0).
    pub origin_s: f64,
    pub origin_d: f64,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<Option<f64>>,
}

impl EvalGrid {
    /// Grid covering the carriageway, every cell masked. Row centres sit on
    /// multiples of the cell width so one row runs along the reference line.
    pub fn covering(road: &Road, spec: GridSpec, quantity: &str, ego_speed: f64) -> Result<Self, EvalError> {
        let (l, w) = (spec.cell_length, spec.cell_width);
        if !(l > 0.0 && w > 0.0 && l.is_finite() && w.is_finite()) {
            return Err(EvalError::Invalid(format!("cell size {l} x {w} must be positive")));
        }
        let k0 = (road.right_bound() / w).floor();
        let k1 = (road.left_bound() / w).ceil();
        let rows = (k1 - k0) as usize + 1;
        let cols = ((road.s_max - road.s_min) / l).ceil().max(1.0) as usize;
        Ok(Self {
            quantity: quantity.to_string(),
            ego_speed,
            cell_length: l,
            cell_width: w,
            origin_s: road.s_min,
            origin_d: (k0 - 0.5) * w,
            rows,
            cols,
            values: vec![None; rows * cols],
        })
    }

    pub fn center(&self, row: usize, col: usize) -> FrenetPoint {
        FrenetPoint {
            s: self.origin_s + (col as f64 + 0.5) * self.cell_length,
            d: self.origin_d + (row as f64 + 0.5) * self.cell_width,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row < self.rows && col < self.cols {
            self.values[row * self.cols + col]
        } else {
            None
        }
    }

    /// Row whose centre is nearest to `d`; ties go to the right.
    pub fn row_of(&self, d: f64) -> Option<usize> {
        let k = ((d - self.origin_d) / self.cell_width - 0.5 - 1e-9).round();
        (k >= 0.0 && (k as usize) < self.rows).then_some(k as usize)
    }

    pub fn same_shape(&self, other: &EvalGrid) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.cell_length == other.cell_length
            && self.cell_width == other.cell_width
            && self.origin_s == other.origin_s
            && self.origin_d == other.origin_d
    }

    /// Cell-wise `self - other`, masked where either is masked.
    pub fn contrast(&self, other: &EvalGrid, quantity: &str) -> Result<EvalGrid, EvalError> {
        if !self.same_shape(other) {
            return Err(EvalError::Invalid("contrast of grids with different layouts".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| Some((*a)? - (*b)?)).collect();
        Ok(EvalGrid { quantity: quantity.to_string(), values, ..self.clone() })
    }

    fn unmasked(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i / self.cols, i % self.cols, v)))
    }

    /// Value range over unmasked cells.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.unmasked().fold(None, |acc, (_, _, v)| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# quantity={} ego_speed={} cell_length={} cell_width={} origin_s={} origin_d={} rows={} cols={}\n",
            self.quantity,
            self.ego_speed,
            self.cell_length,
            self.cell_width,
            self.origin_s,
            self.origin_d,
            self.rows,
            self.cols
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cell_x", "cell_y", "value"]).expect("in-memory write");
        for (r, c, v) in self.unmasked() {
            let p = self.center(r, c);
            w.write_record([p.s.to_string(), p.d.to_string(), v.to_string()]).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output"));
        out
    }

    pub fn from_csv(text: &str) -> Result<EvalGrid, EvalError> {
        let bad = |m: String| EvalError::Parse(m);
        let meta_line = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| bad("missing `#` metadata line".into()))?;
        let mut g = EvalGrid {
            quantity: String::new(),
            ego_speed: f64::NAN,
            cell_length: f64::NAN,
            cell_width: f64::NAN,
            origin_s: f64::NAN,
            origin_d: f64::NAN,
            rows: 0,
            cols: 0,
            values: Vec::new(),
        };
        for item in meta_line.split_whitespace() {
            let (k, v) = item.split_once('=').ok_or_else(|| bad(format!("malformed metadata `{item}`")))?;
            let num = || v.parse::<f64>().map_err(|_| bad(format!("{k}: not a number: {v}")));
            let count = || v.parse::<usize>().map_err(|_| bad(format!("{k}: not a count: {v}")));
            match k {
                "quantity" => g.quantity = v.to_string(),
                "ego_speed" => g.ego_speed = num()?,
                "cell_length" => g.cell_length = num()?,
                "cell_width" => g.cell_width = num()?,
                "origin_s" => g.origin_s = num()?,
                "origin_d" => g.origin_d = num()?,
                "rows" => g.rows = count()?,
                "cols" => g.cols = count()?,
                _ => return Err(bad(format!("unknown metadata key `{k}`"))),
            }
        }
        let dims = [g.cell_length, g.cell_width, g.origin_s, g.origin_d];
        if dims.iter().any(|v| !v.is_finite()) || !(g.cell_length > 0.0 && g.cell_width > 0.0) {
            return Err(bad("incomplete grid metadata".into()));
        }
        let n = g.rows.checked_mul(g.cols).filter(|n| *n <= 100_000_000).ok_or_else(|| bad("grid too large".into()))?;
        g.values = vec![None; n];
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| bad(e.to_string()))?;
        if header != vec!["cell_x", "cell_y", "value"] {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |j: usize| -> Result<f64, EvalError> {
                rec.get(j)
                    .and_then(|s| s.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("row {}: field {} is not a finite number", i + 1, j + 1)))
            };
            let (x, y, v) = (field(0)?, field(1)?, field(2)?);
            let c = ((x - g.origin_s) / g.cell_length - 0.5).round();
            let r = ((y - g.origin_d) / g.cell_width - 0.5).round();
            if c < 0.0 || r < 0.0 || c as usize >= g.cols || r as usize >= g.rows {
                return Err(bad(format!("row {}: cell ({x}, {y}) outside the grid", i + 1)));
            }
            g.values[r as usize * g.cols + c as usize] = Some(v);
        }
        Ok(g)
    }

    /// SVG picture: `s` to the right, left lanes on top. Values map onto a
    /// purple (low) to yellow (high) ramp; masked cells are grey.
    pub fn to_svg(&self, overlay: &Overlay) -> String {
        const PX_S: f64 = 2.0;
        const PX_D: f64 = 10.0;
        let width = self.cols as f64 * self.cell_length * PX_S;
        let height = self.rows as f64 * self.cell_width * PX_D;
        let top_d = self.origin_d + self.rows as f64 * self.cell_width;
        let x_of = |s: f64| (s - self.origin_s) * PX_S;
        let y_of = |d: f64| (top_d - d) * PX_D;
        let (lo, hi) = self.range().unwrap_or((0.0, 0.0));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
        );
        let _ = writeln!(out, "<title>{} (min {lo}, max {hi})</title>", self.quantity);
        let cw = self.cell_length * PX_S;
        let ch = self.cell_width * PX_D;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let fill = match self.get(r, c) {
                    Some(v) => ramp(if hi > lo { (v - lo) / (hi - lo) } else { 0.5 }),
                    None => "#bbbbbb".to_string(),
                };
                let x = c as f64 * cw;
                let y = y_of(self.origin_d + (r + 1) as f64 * self.cell_width);
                let _ = writeln!(out, "<rect x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{ch}\" fill=\"{fill}\"/>");
            }
        }
        for d in &overlay.lane_bounds {
            let y = y_of(*d);
            let _ = writeln!(
                out,
                "<line x1=\"0\" y1=\"{y}\" x2=\"{width}\" y2=\"{y}\" stroke=\"white\" stroke-dasharray=\"6 4\"/>"
            );
        }
        for s in &overlay.signs {
            let x = x_of(*s);
            let _ = writeln!(out, "<line x1=\"{x}\" y1=\"0\" x2=\"{x}\" y2=\"{height}\" stroke=\"red\" stroke-width=\"2\"/>");
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Lines drawn over an SVG grid, in road coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overlay {
    pub lane_bounds: Vec<f64>,
    pub signs: Vec<f64>,
}

impl Overlay {
    pub fn of_road(road: &Road, signs: &[f64]) -> Self {
        let mut lane_bounds: Vec<f64> = road.lanes.iter().map(|l| l.d_right).collect();
        lane_bounds.extend(road.lanes.last().map(|l| l.d_left));
        Self { lane_bounds, signs: signs.to_vec() }
    }
}

fn ramp(t: f64) -> String {
    const LOW: [f64; 3] = [68.0, 1.0, 84.0];
    const HIGH: [f64; 3] = [253.0, 231.0, 37.0];
    let t = t.clamp(0.0, 1.0);
    let c: Vec<u8> = LOW.iter().zip(HIGH).map(|(a, b)| (a + (b - a) * t).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Csv,
    Svg,
}

pub fn emit_grid(grid: &EvalGrid, path: &Path, format: GridFormat, overlay: &Overlay) -> Result<(), EvalError> {
    let text = match format {
        GridFormat::Csv => grid.to_csv(),
        GridFormat::Svg => grid.to_svg(overlay),
    };
    std::fs::write(path, text).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

/// Distance before `sign_s` where row `row` drops below `threshold`: the
/// run of below-threshold cells ending at the last cell before the sign is
/// followed upstream, and the onset is measured to the upstream edge of its
/// first cell. `None` when the cell next to the sign is not below.
pub fn onset_distance(grid: &EvalGrid, row: usize, sign_s: f64, threshold: f64) -> Option<f64> {
    if row >= grid.rows {
        return None;
    }
    let before = (0..grid.cols).take_while(|c| grid.center(row, *c).s < sign_s).count();
    let mut first = None;
    for c in (0..before).rev() {
        match grid.get(row, c) {
            Some(v) if v < threshold => first = Some(c),
            _ => break,
        }
    }
    first.map(|c| sign_s - (grid.origin_s + c as f64 * grid.cell_length))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Midpoint between the median of `rows` far upstream of the sign (more
/// than `upstream` metres before it) and their median inside the zone.
pub fn midpoint_threshold(grid: &EvalGrid, rows: &[usize], sign_s: f64, upstream: f64) -> Option<f64> {
    let collect = |keep: &dyn Fn(f64) -> bool| {
        let mut v = Vec::new();
        for &r in rows {
            for c in 0..grid.cols {
                if let (Some(x), true) = (grid.get(r, c), keep(grid.center(r, c).s)) {
                    v.push(x);
                }
            }
        }
        v
    };
    let far = median(collect(&|s| s < sign_s - upstream))?;
    let zone = median(collect(&|s| s >= sign_s))?;
    Some(0.5 * (far + zone))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Option<f64>) -> EvalGrid {
        let values = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        EvalGrid {
            quantity: "test".into(),
            ego_speed: 25.0,
            cell_length: 5.0,
            cell_width: 1.0,
            origin_s: 0.0,
            origin_d: -0.5,
            rows,
            cols,
            values,
        }
    }

    #[test]
    fn csv_rows_and_mask() {
        let g = grid(2, 2, |_, _| Some(1.5));
        let text = g.to_csv();
        let body: Vec<_> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body.len(), 5);
        assert_eq!(body[0], "cell_x,cell_y,value");

        let masked = grid(2, 2, |r, c| (r + c != 1).then_some(-0.25));
        let body = masked.to_csv().lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(body, 3);
        let svg = masked.to_svg(&Overlay::default());
        assert_eq!(svg.matches("#bbbbbb").count(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(3, 4, |r, c| (c != 2).then(|| (r as f64 * 0.1 - c as f64 / 3.0).exp()));
        assert_eq!(EvalGrid::from_csv(&g.to_csv()).unwrap(), g);
    }

    #[test]
    fn csv_rejects_outside_cells() {
        let g = grid(1, 1, |_, _| Some(0.0));
        let text = g.to_csv() + "100,0,1\n";
        assert!(matches!(EvalGrid::from_csv(&text), Err(EvalError::Parse(_))));
    }

    #[test]
    fn onset_of_uniform_grid_is_none() {
        let g = grid(1, 80, |_, _| Some(3.0));
        assert_eq!(onset_distance(&g, 0, 300.0, 0.0), None);
    }

    #[test]
    fn onset_of_step() {
        // Negative from 250 m on, sign at 300 m.
        let g = grid(1, 80, |_, c| Some(if c as f64 * 5.0 >= 250.0 { -1.0 } else { 1.0 }));
        assert_eq!(onset_distance(&g, 0, 300.0, 0.0), Some(50.0));
        // An isolated dip far upstream does not count.
        let g = grid(1, 80, |_, c| Some(if c == 10 || c as f64 * 5.0 >= 280.0 { -1.0 } else { 1.0 }));
        assert_eq!(onset_distance(&g, 0, 300.0, 0.0), Some(20.0));
    }

    #[test]
    fn midpoint_of_two_levels() {
        let g = grid(1, 80, |_, c| Some(if c as f64 * 5.0 >= 250.0 { -2.0 } else { 4.0 }));
        assert_eq!(midpoint_threshold(&g, &[0], 300.0, 100.0), Some(1.0));
    }

    #[test]
    fn row_lookup_prefers_right() {
        let g = grid(10, 1, |_, _| None);
        assert_eq!(g.row_of(0.0), Some(0));
        assert_eq!(g.row_of(3.5), Some(3));
        assert_eq!(g.row_of(3.6), Some(4));
        assert_eq!(g.row_of(-2.0), None);
    }
}
