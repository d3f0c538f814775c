//! Real conic programs in the form
//!
//! ```text
//! minimize    cᵀx
//! subject to  s = b − A x,   s ∈ K₁ × K₂ × …
//! ```
//!
//! where each `Kᵢ` is a zero cone, nonnegative orthant, second-order cone
//! `{(t, u) : ‖u‖ ≤ t}`, rotated second-order cone
//! `{(u, v, w) : 2uv ≥ ‖w‖², u, v ≥ 0}` or the exponential cone
//! `cl{(x, y, z) : y > 0, y·exp(x/y) ≤ z}`.
//!
//! Solving is delegated to a [`ConicSolver`]; [`check_solution`] verifies
//! any returned point independently of the solver.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Zero(usize),
    Nonnegative(usize),
    SecondOrder(usize),
    RotatedSecondOrder(usize),
    Exponential,
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d)
            | Cone::Nonnegative(d)
            | Cone::SecondOrder(d)
            | Cone::RotatedSecondOrder(d) => d,
            Cone::Exponential => 3,
        }
    }

    fn keyword(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::Nonnegative(_) => "nonneg",
            Cone::SecondOrder(_) => "soc",
            Cone::RotatedSecondOrder(_) => "rsoc",
            Cone::Exponential => "exp",
        }
    }

    /// Violation of membership for one slack segment (zero when inside).
    pub fn violation(&self, s: &[f64]) -> f64 {
        match self {
            Cone::Zero(_) => s.iter().fold(0.0, |acc, v| acc.max(v.abs())),
            Cone::Nonnegative(_) => s.iter().fold(0.0, |acc, v| acc.max(-v)),
            Cone::SecondOrder(_) => {
                let tail: f64 = s[1..].iter().map(|v| v * v).sum();
                (libm::sqrt(tail) - s[0]).max(0.0)
            }
            Cone::RotatedSecondOrder(_) => {
                let (u, v) = (s[0], s[1]);
                let head = (u + v) * core::f64::consts::FRAC_1_SQRT_2;
                let diff = (u - v) * core::f64::consts::FRAC_1_SQRT_2;
                let tail: f64 = diff * diff + s[2..].iter().map(|w| w * w).sum::<f64>();
                (libm::sqrt(tail) - head).max(0.0)
            }
            Cone::Exponential => {
                let (x, y, z) = (s[0], s[1], s[2]);
                if y > 0.0 && z > 0.0 {
                    (x - y * libm::log(z / y)).max(0.0)
                } else {
                    (-y).max(0.0) + (-z).max(0.0) + x.max(0.0)
                }
            }
        }
    }
}

/// `constant + Σ coeff · x[index]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(value: f64) -> Self {
        Self { terms: Vec::new(), constant: value }
    }

    pub fn var(index: usize) -> Self {
        Self { terms: vec![(index, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, index: usize, coeff: f64) -> Self {
        if coeff != 0.0 {
            self.terms.push((index, coeff));
        }
        self
    }

    pub fn plus(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn scale(mut self, factor: f64) -> Self {
        for (_, c) in self.terms.iter_mut() {
            *c *= factor;
        }
        self.constant *= factor;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

/// A conic program with `A` stored row-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    /// Row-major sparse `A`: `row_ptr` has `rows + 1` entries.
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub offsets: Vec<f64>,
    pub cones: Vec<Cone>,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error("cone dimensions sum to {cones} but A has {rows} rows")]
    ConeRows { cones: usize, rows: usize },
    #[error("column index {0} out of range")]
    Column(usize),
    #[error("non-finite data in {0}")]
    NonFinite(&'static str),
    #[error("malformed program text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl ConicProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let cones: usize = self.cones.iter().map(Cone::dim).sum();
        if cones != self.num_rows() || self.row_ptr.len() != self.num_rows() + 1 {
            return Err(ProgramError::ConeRows { cones, rows: self.num_rows() });
        }
        if let Some(&j) = self.cols.iter().find(|&&j| j >= self.num_vars()) {
            return Err(ProgramError::Column(j));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("objective"));
        }
        if self.vals.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("A"));
        }
        if self.offsets.iter().any(|v| !v.is_finite()) {
            return Err(ProgramError::NonFinite("b"));
        }
        Ok(())
    }

    /// Slack `s = b − A x`.
    pub fn slack(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_rows())
            .map(|i| self.offsets[i] - self.row(i).map(|(j, a)| a * x[j]).sum::<f64>())
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Sparse text dump.
    ///
    /// ```text
    /// conic-program v1
    /// vars <n>
    /// rows <m>
    /// var <j> <name>          one per variable
    /// obj <j> <c_j>           nonzero objective entries
    /// cone <kind> <dim>       in row order; kind ∈ zero|nonneg|soc|rsoc|exp
    /// a <i> <j> <A_ij>        nonzero entries, row-major
    /// b <i> <b_i>             nonzero offsets
    /// ```
    ///
    /// Numbers use the shortest representation that round-trips binary64.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "conic-program v1");
        let _ = writeln!(out, "vars {}", self.num_vars());
        let _ = writeln!(out, "rows {}", self.num_rows());
        for (j, name) in self.names.iter().enumerate() {
            let _ = writeln!(out, "var {j} {name}");
        }
        for (j, c) in self.objective.iter().enumerate().filter(|(_, c)| **c != 0.0) {
            let _ = writeln!(out, "obj {j} {c:?}");
        }
        for cone in &self.cones {
            let _ = writeln!(out, "cone {} {}", cone.keyword(), cone.dim());
        }
        for i in 0..self.num_rows() {
            for (j, a) in self.row(i) {
                let _ = writeln!(out, "a {i} {j} {a:?}");
            }
        }
        for (i, b) in self.offsets.iter().enumerate().filter(|(_, b)| **b != 0.0) {
            let _ = writeln!(out, "b {i} {b:?}");
        }
        out
    }

    /// Parses the format written by [`ConicProgram::to_text`].
    pub fn from_text(text: &str) -> Result<Self, ProgramError> {
        let err = |line: usize, reason: &str| ProgramError::Parse { line, reason: reason.to_string() };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == "conic-program v1" => {}
            _ => return Err(err(1, "missing header")),
        }
        let mut n = None;
        let mut m = None;
        let mut names = Vec::new();
        let mut objective = Vec::new();
        let mut cones = Vec::new();
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut offsets = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("");
            let mut num = |what: &str| -> Result<&str, ProgramError> {
                parts.next().ok_or_else(|| err(lineno, &format!("missing {what}")))
            };
            let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| err(lineno, "bad integer"));
            let parse_f64 = |s: &str| s.parse::<f64>().map_err(|_| err(lineno, "bad number"));
            match key {
                "vars" => {
                    let v = parse_usize(num("count")?)?;
                    n = Some(v);
                    objective = vec![0.0; v];
                    names = (0..v).map(|j| format!("x{j}")).collect();
                }
                "rows" => {
                    let v = parse_usize(num("count")?)?;
                    m = Some(v);
                    offsets = vec![0.0; v];
                }
                "var" => {
                    let j = parse_usize(num("index")?)?;
                    let name = num("name")?;
                    *names.get_mut(j).ok_or_else(|| err(lineno, "variable out of range"))? =
                        name.to_string();
                }
                "obj" => {
                    let j = parse_usize(num("index")?)?;
                    let c = parse_f64(num("value")?)?;
                    *objective.get_mut(j).ok_or_else(|| err(lineno, "variable out of range"))? = c;
                }
                "cone" => {
                    let kind = num("kind")?;
                    let dim = parse_usize(num("dim")?)?;
                    cones.push(match kind {
                        "zero" => Cone::Zero(dim),
                        "nonneg" => Cone::Nonnegative(dim),
                        "soc" => Cone::SecondOrder(dim),
                        "rsoc" => Cone::RotatedSecondOrder(dim),
                        "exp" if dim == 3 => Cone::Exponential,
                        _ => return Err(err(lineno, "unknown cone")),
                    });
                }
                "a" => {
                    let i = parse_usize(num("row")?)?;
                    let j = parse_usize(num("column")?)?;
                    let a = parse_f64(num("value")?)?;
                    entries.push((i, j, a));
                }
                "b" => {
                    let i = parse_usize(num("row")?)?;
                    let b = parse_f64(num("value")?)?;
                    *offsets.get_mut(i).ok_or_else(|| err(lineno, "row out of range"))? = b;
                }
                _ => return Err(err(lineno, "unknown record")),
            }
        }
        let (Some(_), Some(m)) = (n, m) else {
            return Err(err(0, "missing vars/rows"));
        };
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; m + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        for &(i, j, a) in &entries {
            if i >= m {
                return Err(err(0, "row out of range"));
            }
            row_ptr[i + 1] += 1;
            cols.push(j);
            vals.push(a);
        }
        for i in 0..m {
            row_ptr[i + 1] += row_ptr[i];
        }
        let program = ConicProgram { objective, row_ptr, cols, vals, offsets, cones, names };
        program.validate()?;
        Ok(program)
    }
}

/// Incremental program assembly.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    objective: Vec<f64>,
    names: Vec<String>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    offsets: Vec<f64>,
    cones: Vec<Cone>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self { row_ptr: vec![0], ..Self::default() }
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.objective.push(0.0);
        self.names.push(name.into());
        self.objective.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_objective(&mut self, index: usize, coeff: f64) {
        self.objective[index] = coeff;
    }

    /// Appends a cone whose slack components equal `exprs`.
    pub fn add_block(&mut self, cone: Cone, exprs: &[AffineExpr]) {
        debug_assert_eq!(cone.dim(), exprs.len());
        for e in exprs {
            // s = b − A x, so A holds the negated coefficients.
            let mut terms = e.terms.clone();
            terms.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
            for (j, c) in terms {
                match merged.last_mut() {
                    Some((last, acc)) if *last == j => *acc += c,
                    _ => merged.push((j, c)),
                }
            }
            for (j, c) in merged.into_iter().filter(|&(_, c)| c != 0.0) {
                self.cols.push(j);
                self.vals.push(-c);
            }
            self.row_ptr.push(self.cols.len());
            self.offsets.push(e.constant);
        }
        self.cones.push(cone);
    }

    pub fn nonneg(&mut self, expr: AffineExpr) {
        self.add_block(Cone::Nonnegative(1), &[expr]);
    }

    pub fn build(self) -> ConicProgram {
        ConicProgram {
            objective: self.objective,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
            offsets: self.offsets,
            cones: self.cones,
            names: self.names,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x: Vec<f64>,
    /// Dual multipliers of the cone rows.
    pub y: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: u32,
}

/// A numerical backend able to solve [`ConicProgram`]s.
pub trait ConicSolver {
    fn solve(&self, program: &ConicProgram) -> ConicSolution;
}

impl<S: ConicSolver + ?Sized> ConicSolver for &S {
    fn solve(&self, program: &ConicProgram) -> ConicSolution {
        (**self).solve(program)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResidual {
    pub segment: usize,
    pub cone: Cone,
    pub first_row: usize,
    pub violation: f64,
}

/// Per-cone feasibility of a candidate point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub segments: Vec<SegmentResidual>,
    pub worst: f64,
    pub worst_segment: Option<usize>,
    pub tolerance: f64,
}

impl ResidualReport {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

/// Worst violation of every cone segment at `x`.
pub fn check_solution(program: &ConicProgram, x: &[f64], tol: f64) -> ResidualReport {
    assert_eq!(x.len(), program.num_vars(), "point dimension mismatch");
    let s = program.slack(x);
    let mut segments = Vec::with_capacity(program.cones.len());
    let mut row = 0;
    let mut worst = 0.0;
    let mut worst_segment = None;
    for (i, cone) in program.cones.iter().enumerate() {
        let d = cone.dim();
        let v = cone.violation(&s[row..row + d]);
        if v > worst || v.is_nan() {
            worst = v;
            worst_segment = Some(i);
        }
        segments.push(SegmentResidual { segment: i, cone: *cone, first_row: row, violation: v });
        row += d;
    }
    ResidualReport { segments, worst, worst_segment, tolerance: tol }
}
