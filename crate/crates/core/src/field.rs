//! Uniform cell-centred grid, cell-average fields, face antiderivatives and norms.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0:?} vs {1:?}")]
    GridMismatch(Grid, Grid),
    #[error("field has {got} values, grid has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} in cell {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("csv line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Minimum number of cells accepted by [`Grid::new`].
pub const MIN_CELLS: usize = 16;

/// `n` cells of width `h = (b - a)/n`; nodes are cell centres `a + (i + 1/2) h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self, FieldError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(FieldError::InvalidGrid(format!("need a < b, got [{a}, {b}]")));
        }
        if n < MIN_CELLS {
            return Err(FieldError::InvalidGrid(format!(
                "need at least {MIN_CELLS} cells, got {n}"
            )));
        }
        Ok(Self { a, b, n })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn node(&self, i: usize) -> f64 {
        self.a + (i as f64 + 0.5) * self.h()
    }

    /// Face `i` sits at `a + i h`, `i = 0..=n`.
    pub fn face(&self, i: usize) -> f64 {
        self.a + i as f64 * self.h()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.node(i))
    }

    fn check_same(&self, other: &Grid) -> Result<(), FieldError> {
        if self != other {
            return Err(FieldError::GridMismatch(*self, *other));
        }
        Ok(())
    }
}

/// Cell averages of `u` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.n() {
            return Err(FieldError::LengthMismatch {
                expected: grid.n(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(FieldError::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.n()],
        }
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: Grid, f: F) -> Result<Self, FieldError> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `x,u` rows with a grid-echo header that [`Field::read_csv`] checks.
    pub fn write_csv<W: Write>(&self, mut out: W, extra_header: &[String]) -> Result<(), FieldError> {
        writeln!(
            out,
            "# grid a={} b={} n={}",
            self.grid.a, self.grid.b, self.grid.n
        )?;
        for line in extra_header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "x,u")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.grid.node(i), v)?;
        }
        Ok(())
    }

    /// Reads a field written by [`Field::write_csv`]. Returns the field and the extra
    /// header lines (without the leading `# `).
    pub fn read_csv<R: BufRead>(input: R) -> Result<(Self, Vec<String>), FieldError> {
        let mut grid: Option<Grid> = None;
        let mut extra = Vec::new();
        let mut body = String::new();
        let mut body_start = 0;
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if let Some(meta) = line.strip_prefix('#') {
                let meta = meta.trim();
                if let Some(rest) = meta.strip_prefix("grid ") {
                    grid = Some(parse_grid_echo(rest).map_err(|message| FieldError::Parse {
                        line: lineno,
                        message,
                    })?);
                } else {
                    extra.push(meta.to_string());
                }
                continue;
            }
            if body.is_empty() {
                body_start = lineno;
            }
            body.push_str(&line);
            body.push('\n');
        }
        let grid = grid.ok_or(FieldError::Parse {
            line: 1,
            message: "missing '# grid a=.. b=.. n=..' header".into(),
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let mut values = Vec::with_capacity(grid.n());
        for (row_idx, record) in reader.records().enumerate() {
            // +1 for the column header line
            let lineno = body_start + 1 + row_idx;
            let record = record.map_err(|e| FieldError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if record.len() != 2 {
                return Err(FieldError::Parse {
                    line: lineno,
                    message: format!("expected 2 columns, found {}", record.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|e| FieldError::Parse {
                    line: lineno,
                    message: format!("'{s}': {e}"),
                })
            };
            let x = parse(&record[0])?;
            let u = parse(&record[1])?;
            let i = values.len();
            if i >= grid.n() || (x - grid.node(i)).abs() > 1e-9 * grid.length().max(1.0) {
                return Err(FieldError::Parse {
                    line: lineno,
                    message: format!("node x={x} does not match grid"),
                });
            }
            values.push(u);
        }
        Ok((Self::new(grid, values)?, extra))
    }
}

fn parse_grid_echo(rest: &str) -> Result<Grid, String> {
    let mut a = None;
    let mut b = None;
    let mut n = None;
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("bad token '{tok}'"))?;
        match k {
            "a" => a = Some(v.parse::<f64>().map_err(|e| e.to_string())?),
            "b" => b = Some(v.parse::<f64>().map_err(|e| e.to_string())?),
            "n" => n = Some(v.parse::<usize>().map_err(|e| e.to_string())?),
            _ => return Err(format!("unknown grid key '{k}'")),
        }
    }
    match (a, b, n) {
        (Some(a), Some(b), Some(n)) => Grid::new(a, b, n).map_err(|e| e.to_string()),
        _ => Err("grid header needs a, b and n".into()),
    }
}

/// `ũ` at the `n + 1` faces, `ũ(a) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AntiField {
    grid: Grid,
    values: Vec<f64>,
}

impl AntiField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Face differences divided by `h`, which reproduce the original field.
    pub fn derivative(&self) -> Field {
        let h = self.grid.h();
        Field {
            grid: self.grid,
            values: self.values.windows(2).map(|w| (w[1] - w[0]) / h).collect(),
        }
    }

    /// `h Σ |ũ_f - ṽ_f|` over faces (trapezoid weights at the two ends).
    pub fn l1_dist(&self, other: &AntiField) -> Result<f64, FieldError> {
        self.grid.check_same(&other.grid)?;
        let h = self.grid.h();
        let n = self.values.len();
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * (a - b).abs()
            })
            .sum();
        Ok(h * sum)
    }
}

/// Cumulative sum `ũ_{i+1} = ũ_i + h u_i`, `ũ_0 = 0`.
pub fn antiderivative(u: &Field) -> AntiField {
    let h = u.grid.h();
    let mut values = Vec::with_capacity(u.values.len() + 1);
    let mut acc = 0.0;
    values.push(acc);
    for v in &u.values {
        acc += h * v;
        values.push(acc);
    }
    AntiField {
        grid: u.grid,
        values,
    }
}

pub fn mass(u: &Field) -> f64 {
    u.grid.h() * u.values.iter().sum::<f64>()
}

pub fn l1_dist(u: &Field, v: &Field) -> Result<f64, FieldError> {
    u.grid.check_same(&v.grid)?;
    Ok(u.grid.h() * u.values.iter().zip(&v.values).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

pub fn l2_norm(u: &Field) -> f64 {
    (u.grid.h() * u.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Sign changes of `u - level` between neighbouring nodes, linearly interpolated.
pub fn level_crossings(u: &Field, level: f64) -> Vec<f64> {
    let g = u.grid;
    let v = &u.values;
    let mut out = Vec::new();
    for i in 0..v.len().saturating_sub(1) {
        let (a, b) = (v[i] - level, v[i + 1] - level);
        if a == 0.0 {
            out.push(g.node(i));
        } else if a * b < 0.0 {
            out.push(g.node(i) + g.h() * a / (a - b));
        }
    }
    if let Some(&last) = v.last() {
        if last == level {
            out.push(g.node(v.len() - 1));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(n: usize) -> Grid {
        Grid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1.0, 0.0, 32).is_err());
        assert!(Grid::new(0.0, 1.0, 15).is_err());
        let g = unit(16);
        assert_eq!(g.h(), 1.0 / 16.0);
        assert_eq!(g.node(0), 0.5 / 16.0);
        assert_eq!(g.face(16), 1.0);
    }

    #[test]
    fn antiderivative_of_one() {
        let g = unit(16);
        let ut = antiderivative(&Field::constant(g, 1.0));
        assert_eq!(ut.values()[0], 0.0);
        for (i, v) in ut.values().iter().enumerate() {
            assert!((v - i as f64 / 16.0).abs() < 1e-15);
        }
        let z = antiderivative(&Field::constant(g, 0.0));
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn odd_field_has_zero_total() {
        let g = Grid::new(-1.0, 1.0, 64).unwrap();
        let u = Field::from_fn(g, |x| x.powi(3) - 0.5 * x).unwrap();
        let ut = antiderivative(&u);
        assert!(ut.values()[64].abs() < 1e-15);
    }

    #[test]
    fn norms() {
        let g = unit(32);
        let u = Field::constant(g, -1.0);
        assert!((mass(&u) + 1.0).abs() < 1e-15);
        assert_eq!(l1_dist(&u, &u).unwrap(), 0.0);
        assert!((l2_norm(&u) - 1.0).abs() < 1e-15);
        let other = Field::constant(Grid::new(0.0, 2.0, 32).unwrap(), 1.0);
        assert!(matches!(l1_dist(&u, &other), Err(FieldError::GridMismatch(..))));
    }

    #[test]
    fn crossings_are_interpolated() {
        let g = unit(100);
        let u = Field::from_fn(g, |x| (x - 0.3) * (x - 0.7)).unwrap();
        let z = level_crossings(&u, 0.0);
        assert_eq!(z.len(), 2);
        assert!((z[0] - 0.3).abs() < 1e-4 && (z[1] - 0.7).abs() < 1e-4);
        assert!(level_crossings(&Field::constant(g, 1.0), 0.0).is_empty());
    }

    #[test]
    fn tanh_layer_distance_is_order_epsilon() {
        // ∫|tanh(x/(√2ε)) - sign(x)| dx = 2√2 ln2 ε on the whole line.
        let g = Grid::new(-1.0, 1.0, 20_000).unwrap();
        let dist = |eps: f64| {
            let u = Field::from_fn(g, |x| (x / (2f64.sqrt() * eps)).tanh()).unwrap();
            let v = Field::from_fn(g, |x: f64| x.signum()).unwrap();
            l1_dist(&u, &v).unwrap()
        };
        let d1 = dist(0.05);
        let d2 = dist(0.025);
        let oracle = 2.0 * 2f64.sqrt() * 2f64.ln() * 0.05;
        assert!(d1 < 0.2);
        assert!((d1 - oracle).abs() < 1e-3 * oracle);
        let ratio = d2 / d1;
        assert!((ratio - 0.5).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let g = Grid::new(-0.5, 1.5, 20).unwrap();
        let u = Field::from_fn(g, |x| (3.0 * x).sin() / 7.0).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf, &["kind=test".into()]).unwrap();
        let (back, extra) = Field::read_csv(&buf[..]).unwrap();
        assert_eq!(back, u);
        assert_eq!(extra, vec!["kind=test".to_string()]);

        let text = String::from_utf8(buf).unwrap();
        let corrupted = text.replacen("\n0.", "\nzz0.", 1);
        match Field::read_csv(corrupted.as_bytes()) {
            Err(FieldError::Parse { line, .. }) => assert!(line >= 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(Field::read_csv("x,u\n0.1,0.2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn face_difference_inverts_antiderivative(vals in prop::collection::vec(-2.0f64..2.0, 16..80)) {
            let g = Grid::new(0.0, 3.0, vals.len()).unwrap();
            let u = Field::new(g, vals).unwrap();
            let back = antiderivative(&u).derivative();
            for (a, b) in back.values().iter().zip(u.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn antiderivative_distance_bounded_by_field_distance(
            a in prop::collection::vec(-1.5f64..1.5, 32),
            b in prop::collection::vec(-1.5f64..1.5, 32),
        ) {
            let g = Grid::new(-1.0, 1.0, 32).unwrap();
            let u = Field::new(g, a).unwrap();
            let v = Field::new(g, b).unwrap();
            let lhs = antiderivative(&u).l1_dist(&antiderivative(&v)).unwrap();
            let rhs = g.length() * l1_dist(&u, &v).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
