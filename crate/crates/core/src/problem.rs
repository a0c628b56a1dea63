//! Continuous problem data.
//!
//! The model problem on the unit square is
//!
//! ```text
//! -eps^2 (u_xx + u_yy) + a(x,y) u_x + b(x,y) u = f(x,y)   in (0,1)^2
//!                                            u = q       on the boundary
//! ```
//!
//! where `f` is smooth inside each of the four quadrants cut out by the lines
//! `x = d1` and `y = d2` and may jump across them. On a line the source is
//! two-valued, so every evaluation there names the side it wants.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::TensorMesh;

/// A scalar field on the closed unit square.
pub type ScalarField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Wraps a closure as a [`ScalarField`].
pub fn field(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> ScalarField {
    Arc::new(f)
}

/// The four open quadrants.
///
/// `Q1 = (0,d1)x(0,d2)`, `Q2 = (d1,1)x(0,d2)`, `Q3 = (0,d1)x(d2,1)`,
/// `Q4 = (d1,1)x(d2,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrant {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quadrant {
    pub fn from_halves(right: bool, upper: bool) -> Self {
        match (right, upper) {
            (false, false) => Quadrant::Q1,
            (true, false) => Quadrant::Q2,
            (false, true) => Quadrant::Q3,
            (true, true) => Quadrant::Q4,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One-sided selector used when a coordinate sits on a discontinuity line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
    NotOnLine,
}

/// Boundary edges in the order of the traces `q1..q4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    West,
    South,
    East,
    North,
}

/// Immutable problem description.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub epsilon: f64,
    pub convection: ScalarField,
    pub reaction: ScalarField,
    /// `f_1..f_4`, one per [`Quadrant`].
    pub sources: [ScalarField; 4],
    /// `q_1..q_4` on the west, south, east and north edges. West and east
    /// traces are functions of `y`, south and north of `x`; both arguments
    /// are passed so a single field type serves all four.
    pub boundary: [ScalarField; 4],
    pub d1: f64,
    pub d2: f64,
    /// Lower bound on the convection coefficient used to size the mesh.
    pub alpha: f64,
    /// `beta^2` bounds the reaction coefficient from below.
    pub beta: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("epsilon", &self.epsilon)
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

/// Registered problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinProblem {
    /// Constant coefficients, `d1 = d2 = 1/2`.
    Example1,
    /// Variable coefficients, `d1 = 0.4`, `d2 = 0.6`.
    Example2,
}

impl FromStr for BuiltinProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "example1" | "ex1" | "1" => Ok(BuiltinProblem::Example1),
            "example2" | "ex2" | "2" => Ok(BuiltinProblem::Example2),
            other => Err(Error::Config(format!("unknown problem '{other}'"))),
        }
    }
}

impl fmt::Display for BuiltinProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinProblem::Example1 => f.write_str("example1"),
            BuiltinProblem::Example2 => f.write_str("example2"),
        }
    }
}

fn zero() -> ScalarField {
    field(|_, _| 0.0)
}

/// Builds one of the registered problems. `epsilon` is left at `1e-2`; use
/// [`ProblemSpec::with_epsilon`] to sweep it.
pub fn builtin_problem(which: BuiltinProblem) -> ProblemSpec {
    match which {
        BuiltinProblem::Example1 => ProblemSpec {
            name: which.to_string(),
            epsilon: 1e-2,
            convection: field(|_, _| 2.0),
            reaction: field(|_, _| 25.0),
            sources: [
                field(|_, _| 0.5),
                field(|_, _| 0.6),
                field(|_, _| -0.6),
                field(|_, _| -0.5),
            ],
            boundary: [zero(), zero(), zero(), zero()],
            d1: 0.5,
            d2: 0.5,
            alpha: 2.0,
            beta: 5.0,
        },
        // a = 4 + x admits alpha = 4, but the mesh is sized with alpha = 2.
        BuiltinProblem::Example2 => ProblemSpec {
            name: which.to_string(),
            epsilon: 1e-2,
            convection: field(|x, _| 4.0 + x),
            reaction: field(|x, y| 25.0 + x * y / 2.0),
            sources: [
                field(|x, y| 1.0 + x + y),
                field(|x, y| -(1.0 + x * x * y * y)),
                field(|x, y| -(1.0 + x * y)),
                field(|x, y| 1.0 + x + y),
            ],
            boundary: [zero(), zero(), zero(), zero()],
            d1: 0.4,
            d2: 0.6,
            alpha: 2.0,
            beta: 5.0,
        },
    }
}

impl ProblemSpec {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn a(&self, x: f64, y: f64) -> f64 {
        (self.convection)(x, y)
    }

    pub fn b(&self, x: f64, y: f64) -> f64 {
        (self.reaction)(x, y)
    }

    /// Checks the scalar invariants that do not need a mesh.
    pub fn check_parameters(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::MalformedSpec(format!(
                "epsilon = {} must lie in (0, 1)",
                self.epsilon
            )));
        }
        if !in_unit(self.d1) || !in_unit(self.d2) {
            return Err(Error::MalformedSpec(format!(
                "discontinuity lines d1 = {}, d2 = {} must lie in (0, 1)",
                self.d1, self.d2
            )));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::MalformedSpec(format!(
                "alpha = {} and beta = {} must be positive",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Quadrant selected by position, with side flags breaking ties on the lines.
    pub fn quadrant(&self, x: f64, y: f64, side_x: Side, side_y: Side) -> Result<Quadrant> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::OutOfDomain { x, y });
        }
        let right = pick_half(x, self.d1, side_x).ok_or(Error::OnDiscontinuityWithoutSide { x, y })?;
        let upper = pick_half(y, self.d2, side_y).ok_or(Error::OnDiscontinuityWithoutSide { x, y })?;
        Ok(Quadrant::from_halves(right, upper))
    }

    /// Evaluates the piecewise source.
    pub fn source_at(&self, x: f64, y: f64, side_x: Side, side_y: Side) -> Result<f64> {
        let q = self.quadrant(x, y, side_x, side_y)?;
        Ok((self.sources[q.index()])(x, y))
    }

    /// `f` at a point known to be off both lines.
    pub(crate) fn source_off_lines(&self, x: f64, y: f64) -> f64 {
        self.source_at(x, y, Side::NotOnLine, Side::NotOnLine)
            .expect("mesh point off the discontinuity lines")
    }

    /// `[f](d1, y) = f(d1+, y) - f(d1-, y)`.
    pub fn jump_f_across_x(&self, y: f64, side_y: Side) -> Result<f64> {
        let plus = self.source_at(self.d1, y, Side::Plus, side_y)?;
        let minus = self.source_at(self.d1, y, Side::Minus, side_y)?;
        Ok(plus - minus)
    }

    /// `[f](x, d2) = f(x, d2+) - f(x, d2-)`.
    pub fn jump_f_across_y(&self, x: f64, side_x: Side) -> Result<f64> {
        let plus = self.source_at(x, self.d2, side_x, Side::Plus)?;
        let minus = self.source_at(x, self.d2, side_x, Side::Minus)?;
        Ok(plus - minus)
    }

    /// Dirichlet value at a boundary point. At corners the west/east trace wins.
    pub fn boundary_value(&self, x: f64, y: f64) -> Option<f64> {
        let edge = if x == 0.0 {
            Edge::West
        } else if x == 1.0 {
            Edge::East
        } else if y == 0.0 {
            Edge::South
        } else if y == 1.0 {
            Edge::North
        } else {
            return None;
        };
        Some((self.boundary[edge as usize])(x, y))
    }
}

fn pick_half(v: f64, line: f64, side: Side) -> Option<bool> {
    if v == line {
        match side {
            Side::Minus => Some(false),
            Side::Plus => Some(true),
            Side::NotOnLine => None,
        }
    } else {
        Some(v > line)
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    /// Hypotheses that fail on the target mesh.
    pub violations: Vec<String>,
    /// Conditions whose failure only means the run is outside the layer regime.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a problem against the hypotheses of the method on the `N` mesh.
///
/// Coefficient bounds `a >= alpha` and `b >= beta^2` are sampled at every
/// mesh point. The requirement `d1, d2 > 8 (eps/beta) ln N` is reported as a
/// warning only.
pub fn validate(spec: &ProblemSpec, n: usize) -> Result<ValidationReport> {
    spec.check_parameters()?;
    let mut report = ValidationReport::default();

    let threshold = 8.0 * (spec.epsilon / spec.beta) * (n as f64).ln();
    for (name, d) in [("d1", spec.d1), ("d2", spec.d2)] {
        if d <= threshold {
            report.warnings.push(format!(
                "{name} = {d} does not exceed 8 (eps/beta) ln N = {threshold:.4e}; layers are not thin relative to the mesh"
            ));
        }
    }

    let mesh = match TensorMesh::shishkin(spec, n) {
        Ok(m) => m,
        Err(e @ Error::BadN(_)) => return Err(e),
        Err(e) => {
            report.violations.push(e.to_string());
            return Ok(report);
        }
    };

    let beta2 = spec.beta * spec.beta;
    let mut worst_a: Option<(f64, f64, f64)> = None;
    let mut worst_b: Option<(f64, f64, f64)> = None;
    for &y in &mesh.y.points {
        for &x in &mesh.x.points {
            let a = spec.a(x, y);
            let b = spec.b(x, y);
            if !(a >= spec.alpha) && worst_a.is_none_or(|w| a < w.2) {
                worst_a = Some((x, y, a));
            }
            if !(b >= beta2) && worst_b.is_none_or(|w| b < w.2) {
                worst_b = Some((x, y, b));
            }
        }
    }
    if let Some((x, y, a)) = worst_a {
        report
            .violations
            .push(format!("a({x}, {y}) = {a} is below alpha = {}", spec.alpha));
    }
    if let Some((x, y, b)) = worst_b {
        report
            .violations
            .push(format!("b({x}, {y}) = {b} is below beta^2 = {beta2}"));
    }
    Ok(report)
}
