//! Finite difference scheme on the fitted mesh.
//!
//! Rows by point kind:
//!
//! * interior points: standard upwinding,
//!   `-eps^2 (d2xx + d2yy) U + a D-x U + b U = f`, with the nonuniform
//!   second differences `d2xx U = (D+x U - D-x U) / hbar_i`, `hbar_i = (h_i + h_{i+1}) / 2`;
//! * `y = d2`: the same stencil with `a`, `b` and `f` averaged over the
//!   neighbours `y_{N/2 - 1}` and `y_{N/2 + 1}` (midpoint upwinding);
//! * `x = d1`: matching of the one-sided second-order derivatives
//!   `D++ U - D-- U = 0` (the [`Variant::Raw`] row), or the same condition
//!   after `U_{N/2-2}` and `U_{N/2+2}` are eliminated with the x-direction
//!   split of the neighbouring upwind rows (the [`Variant::Transformed`]
//!   three-point row);
//! * Dirichlet rows on the boundary.
//!
//! The transformed row uses a split in which the reaction and source of the
//! rows at `N/2 +- 1` are halved and the `y` second difference is dropped.
//! It is therefore not an exact elimination of the raw system, and the two
//! variants give solutions that differ at the discretization-error level.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use faer::linalg::solvers::DenseSolveCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{PointKind, TensorMesh};
use crate::problem::ProblemSpec;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowKind {
    InteriorUpwind,
    InterfaceXTransformed,
    InterfaceXRaw,
    InterfaceYMidpoint,
    Dirichlet,
}

impl RowKind {
    fn name(self) -> &'static str {
        match self {
            RowKind::InteriorUpwind => "InteriorUpwind",
            RowKind::InterfaceXTransformed => "InterfaceXTransformed",
            RowKind::InterfaceXRaw => "InterfaceXRaw",
            RowKind::InterfaceYMidpoint => "InterfaceYMidpoint",
            RowKind::Dirichlet => "Dirichlet",
        }
    }
}

/// Which transmission row to use on `x = d1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Transformed,
    Raw,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transformed" => Ok(Variant::Transformed),
            "raw" => Ok(Variant::Raw),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Transformed => "transformed",
            Variant::Raw => "raw",
        })
    }
}

/// One equation of the discrete system, in grid coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilRow {
    pub center: (usize, usize),
    pub entries: Vec<((usize, usize), f64)>,
    pub rhs: f64,
    pub kind: RowKind,
}

impl StencilRow {
    pub fn coefficient(&self, at: (usize, usize)) -> Option<f64> {
        self.entries.iter().find(|(p, _)| *p == at).map(|&(_, v)| v)
    }

    /// Applies the row to a grid function given by index.
    pub fn apply(&self, u: impl Fn(usize, usize) -> f64) -> f64 {
        self.entries.iter().map(|&((i, j), c)| c * u(i, j)).sum()
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.entries.iter().map(|&(_, c)| c).sum()
    }
}

fn expect_kind(mesh: &TensorMesh, i: usize, j: usize, ok: &[PointKind], expected: &'static str) -> Result<()> {
    let actual = mesh.classify(i, j);
    if ok.contains(&actual) {
        Ok(())
    } else {
        Err(Error::WrongKind { i, j, expected, actual: kind_name(actual) })
    }
}

fn kind_name(k: PointKind) -> &'static str {
    match k {
        PointKind::Interior => "Interior",
        PointKind::Boundary => "Boundary",
        PointKind::InterfaceX => "InterfaceX",
        PointKind::InterfaceY => "InterfaceY",
        PointKind::Cross => "Cross",
    }
}

/// Five-point upwind stencil, ordered W, E, S, N, centre.
fn upwind_stencil(mesh: &TensorMesh, i: usize, j: usize, eps2: f64, a: f64, b: f64) -> Vec<((usize, usize), f64)> {
    let (hw, he) = (mesh.x.h(i), mesh.x.h(i + 1));
    let (ks, kn) = (mesh.y.h(j), mesh.y.h(j + 1));
    let hbar = 0.5 * (hw + he);
    let kbar = 0.5 * (ks + kn);
    let diff_w = eps2 / (hbar * hw);
    let diff_e = eps2 / (hbar * he);
    let diff_s = eps2 / (kbar * ks);
    let diff_n = eps2 / (kbar * kn);
    let conv = a / hw;
    vec![
        ((i - 1, j), -diff_w - conv),
        ((i + 1, j), -diff_e),
        ((i, j - 1), -diff_s),
        ((i, j + 1), -diff_n),
        ((i, j), diff_w + diff_e + diff_s + diff_n + conv + b),
    ]
}

pub fn assemble_interior_row(spec: &ProblemSpec, mesh: &TensorMesh, i: usize, j: usize) -> Result<StencilRow> {
    expect_kind(mesh, i, j, &[PointKind::Interior], "Interior")?;
    let (x, y) = mesh.point(i, j);
    let eps2 = spec.epsilon * spec.epsilon;
    Ok(StencilRow {
        center: (i, j),
        entries: upwind_stencil(mesh, i, j, eps2, spec.a(x, y), spec.b(x, y)),
        rhs: spec.source_off_lines(x, y),
        kind: RowKind::InteriorUpwind,
    })
}

/// Source seen by the `x = d1` row at `(x_i, y_j)`, `i = N/2 +- 1`. On the
/// crossing row the argument sits on `y = d2`, where the average over the
/// two neighbouring levels is used.
fn transmission_source(spec: &ProblemSpec, mesh: &TensorMesh, i: usize, j: usize) -> f64 {
    let m = mesh.mid();
    let x = mesh.x.points[i];
    if j == m {
        0.5 * (spec.source_off_lines(x, mesh.y.points[m - 1]) + spec.source_off_lines(x, mesh.y.points[m + 1]))
    } else {
        spec.source_off_lines(x, mesh.y.points[j])
    }
}

/// Transformed three-point transmission row on `x = d1`, also used at the
/// crossing point.
pub fn assemble_interface_x_row(spec: &ProblemSpec, mesh: &TensorMesh, j: usize) -> Result<StencilRow> {
    let m = mesh.mid();
    expect_kind(mesh, m, j, &[PointKind::InterfaceX, PointKind::Cross], "InterfaceX")?;
    let eps2 = spec.epsilon * spec.epsilon;
    let y = mesh.y.points[j];
    let (xl, xr) = (mesh.x.points[m - 1], mesh.x.points[m + 1]);
    let h1 = mesh.x.h(m);
    let big_h2 = mesh.x.h(m + 1);
    let (a_l, b_l) = (spec.a(xl, y), spec.b(xl, y));
    let (a_r, b_r) = (spec.a(xr, y), spec.b(xr, y));
    let f_l = transmission_source(spec, mesh, m - 1, j);
    let f_r = transmission_source(spec, mesh, m + 1, j);

    let denom = eps2 + h1 * a_l;
    let c_center = a_r / (2.0 * eps2) + eps2 / (2.0 * h1 * denom) - 1.0 / big_h2 - 3.0 / (2.0 * h1);
    let c_right = -(a_r / (2.0 * eps2) + big_h2 * b_r / (4.0 * eps2) - 1.0 / big_h2);
    let c_left = -(h1 / (2.0 * denom) * (2.0 * eps2 / (h1 * h1) + a_l / h1 + b_l / 2.0) - 2.0 / h1);
    let rhs = -(big_h2 / (4.0 * eps2)) * f_r - h1 / (4.0 * denom) * f_l;

    Ok(StencilRow {
        center: (m, j),
        entries: vec![((m - 1, j), c_left), ((m, j), c_center), ((m + 1, j), c_right)],
        rhs,
        kind: RowKind::InterfaceXTransformed,
    })
}

/// Weights `(w_i, w_{i-1}, w_{i-2})` of the backward three-point first derivative.
fn backward_three_point(h_i: f64, h_im1: f64) -> [f64; 3] {
    [
        (2.0 * h_i + h_im1) / (h_i * (h_i + h_im1)),
        -(h_i + h_im1) / (h_i * h_im1),
        h_i / (h_im1 * (h_i + h_im1)),
    ]
}

/// Weights `(w_i, w_{i+1}, w_{i+2})` of the forward three-point first derivative.
fn forward_three_point(h_ip1: f64, h_ip2: f64) -> [f64; 3] {
    [
        -(2.0 * h_ip1 + h_ip2) / (h_ip1 * (h_ip1 + h_ip2)),
        (h_ip1 + h_ip2) / (h_ip1 * h_ip2),
        -h_ip1 / (h_ip2 * (h_ip1 + h_ip2)),
    ]
}

/// Untransformed derivative-matching row `D++ U - D-- U = 0` on `x = d1`.
pub fn assemble_interface_x_row_raw(_spec: &ProblemSpec, mesh: &TensorMesh, j: usize) -> Result<StencilRow> {
    let m = mesh.mid();
    expect_kind(mesh, m, j, &[PointKind::InterfaceX, PointKind::Cross], "InterfaceX")?;
    let back = backward_three_point(mesh.x.h(m), mesh.x.h(m - 1));
    let fwd = forward_three_point(mesh.x.h(m + 1), mesh.x.h(m + 2));
    Ok(StencilRow {
        center: (m, j),
        entries: vec![
            ((m - 2, j), -back[2]),
            ((m - 1, j), -back[1]),
            ((m, j), fwd[0] - back[0]),
            ((m + 1, j), fwd[1]),
            ((m + 2, j), fwd[2]),
        ],
        rhs: 0.0,
        kind: RowKind::InterfaceXRaw,
    })
}

/// Midpoint upwind row on `y = d2`.
pub fn assemble_interface_y_row(spec: &ProblemSpec, mesh: &TensorMesh, i: usize) -> Result<StencilRow> {
    let m = mesh.mid();
    expect_kind(mesh, i, m, &[PointKind::InterfaceY], "InterfaceY")?;
    let x = mesh.x.points[i];
    let (ys, yn) = (mesh.y.points[m - 1], mesh.y.points[m + 1]);
    let a_hat = 0.5 * (spec.a(x, ys) + spec.a(x, yn));
    let b_hat = 0.5 * (spec.b(x, ys) + spec.b(x, yn));
    let f_hat = 0.5 * (spec.source_off_lines(x, ys) + spec.source_off_lines(x, yn));
    let eps2 = spec.epsilon * spec.epsilon;
    Ok(StencilRow {
        center: (i, m),
        entries: upwind_stencil(mesh, i, m, eps2, a_hat, b_hat),
        rhs: f_hat,
        kind: RowKind::InterfaceYMidpoint,
    })
}

fn dirichlet_row(spec: &ProblemSpec, mesh: &TensorMesh, i: usize, j: usize) -> StencilRow {
    let (x, y) = mesh.point(i, j);
    StencilRow {
        center: (i, j),
        entries: vec![((i, j), 1.0)],
        rhs: spec.boundary_value(x, y).expect("boundary point"),
        kind: RowKind::Dirichlet,
    }
}

/// The row the scheme uses at `(i, j)`.
pub fn assemble_row(spec: &ProblemSpec, mesh: &TensorMesh, variant: Variant, i: usize, j: usize) -> Result<StencilRow> {
    match mesh.classify(i, j) {
        PointKind::Boundary => Ok(dirichlet_row(spec, mesh, i, j)),
        PointKind::Interior => assemble_interior_row(spec, mesh, i, j),
        PointKind::InterfaceY => assemble_interface_y_row(spec, mesh, i),
        PointKind::InterfaceX | PointKind::Cross => match variant {
            Variant::Transformed => assemble_interface_x_row(spec, mesh, j),
            Variant::Raw => assemble_interface_x_row_raw(spec, mesh, j),
        },
    }
}

/// Assembled sparse system over all `(N+1)^2` grid values.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub mesh: Arc<TensorMesh>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub kinds: Vec<RowKind>,
    pub variant: Variant,
}

impl LinearSystem {
    pub fn dimension(&self) -> usize {
        self.rhs.len()
    }
}

/// Assembles every row. Rows are built in parallel into per-row slots and
/// compacted in flat-index order, so the output does not depend on the
/// thread count.
pub fn assemble_system(spec: &ProblemSpec, mesh: &TensorMesh, variant: Variant) -> Result<LinearSystem> {
    let len = mesh.len();
    let rows: Vec<StencilRow> = (0..len)
        .into_par_iter()
        .map(|flat| {
            let (i, j) = mesh.coords(flat);
            assemble_row(spec, mesh, variant, i, j)
        })
        .collect::<Result<_>>()?;

    let mut rhs = Vec::with_capacity(len);
    let mut kinds = Vec::with_capacity(len);
    let mut triplets = Vec::with_capacity(len);
    for row in rows {
        rhs.push(row.rhs);
        kinds.push(row.kind);
        triplets.push(row.entries.iter().map(|&((i, j), v)| (mesh.index(i, j), v)).collect());
    }
    let matrix = CsrMatrix::from_rows(len, triplets)?;
    Ok(LinearSystem { mesh: Arc::new(mesh.clone()), matrix, rhs, kinds, variant })
}

/// Largest system for which the dense inverse is formed (`N = 32`).
pub const DENSE_INVERSE_LIMIT: usize = 33 * 33;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignViolation {
    pub row: usize,
    pub center: (usize, usize),
    pub kind: RowKind,
    pub col: usize,
    pub value: f64,
}

/// Result of [`m_matrix_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MMatrixReport {
    /// Non-positive diagonals (`col == row`) and positive off-diagonals.
    pub violations: Vec<SignViolation>,
    /// Smallest entry of the dense inverse, when it was formed.
    pub inverse_min: Option<f64>,
}

impl MMatrixReport {
    pub fn sign_structure_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violating_rows(&self) -> BTreeSet<usize> {
        self.violations.iter().map(|v| v.row).collect()
    }

    /// Kinds of the rows that break the sign pattern.
    pub fn violating_kinds(&self) -> BTreeSet<&'static str> {
        self.violations.iter().map(|v| v.kind.name()).collect()
    }
}

/// Row-by-row sign check and, optionally for systems up to
/// [`DENSE_INVERSE_LIMIT`] unknowns, the minimum entry of the dense inverse.
pub fn m_matrix_check(system: &LinearSystem, dense_inverse: bool) -> MMatrixReport {
    let mesh = &system.mesh;
    let mut violations = Vec::new();
    for r in 0..system.dimension() {
        let (cols, vals) = system.matrix.row(r);
        let diag_present = cols.contains(&r);
        for (&c, &v) in cols.iter().zip(vals) {
            let bad = if c == r { v <= 0.0 } else { v > 0.0 };
            if bad {
                violations.push(SignViolation { row: r, center: mesh.coords(r), kind: system.kinds[r], col: c, value: v });
            }
        }
        if !diag_present {
            violations.push(SignViolation { row: r, center: mesh.coords(r), kind: system.kinds[r], col: r, value: 0.0 });
        }
    }
    let n = system.dimension();
    let inverse_min = (dense_inverse && n <= DENSE_INVERSE_LIMIT).then(|| {
        let dense = system.matrix.to_dense();
        let a = faer::Mat::<f64>::from_fn(n, n, |r, c| dense[r][c]);
        let inv = a.partial_piv_lu().inverse();
        let mut min = f64::INFINITY;
        for c in 0..n {
            for r in 0..n {
                min = min.min(inv[(r, c)]);
            }
        }
        min
    });
    MMatrixReport { violations, inverse_min }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Axis, Mesh1D, TransitionParams};
    use crate::problem::{builtin_problem, field, BuiltinProblem, Side};
    use proptest::prelude::*;

    fn ex1(eps: f64) -> ProblemSpec {
        builtin_problem(BuiltinProblem::Example1).with_epsilon(eps)
    }

    fn uniform_mesh(n: usize, d: f64) -> TensorMesh {
        let x = Mesh1D::piecewise(Axis::X, &[0.0, 1.0], &[n]).unwrap();
        TensorMesh {
            y: Mesh1D { axis: Axis::Y, ..x.clone() },
            x,
            n,
            params: TransitionParams { sigma_x: 0.0, sigma_y: 0.0, n },
            d1: d,
            d2: d,
        }
    }

    #[test]
    fn interior_row_uniform_patch() {
        // eps = 1e-2, h = k = 0.125: eps^2/h^2 = 0.0064, a/h = 16.
        let mesh = uniform_mesh(8, 0.5);
        let row = assemble_interior_row(&ex1(1e-2), &mesh, 2, 2).unwrap();
        let c = |i, j| row.coefficient((i, j)).unwrap();
        assert!((c(2, 2) - 41.0256).abs() < 1e-12);
        assert!((c(1, 2) + 16.0064).abs() < 1e-12);
        for p in [(3, 2), (2, 1), (2, 3)] {
            assert!((c(p.0, p.1) + 0.0064).abs() < 1e-15);
        }
        assert_eq!(row.entries.len(), 5);
        assert!((row.coefficient_sum() - 25.0).abs() < 1e-12);
        assert_eq!(row.rhs, 0.5);
    }

    #[test]
    fn wrong_kind_errors() {
        let p = ex1(1e-2);
        let mesh = TensorMesh::shishkin(&p, 8).unwrap();
        assert!(matches!(assemble_interior_row(&p, &mesh, 4, 2), Err(Error::WrongKind { .. })));
        assert!(matches!(assemble_interior_row(&p, &mesh, 0, 2), Err(Error::WrongKind { .. })));
        assert!(matches!(assemble_interface_y_row(&p, &mesh, 4), Err(Error::WrongKind { .. })));
        assert!(matches!(assemble_interface_x_row(&p, &mesh, 0), Err(Error::WrongKind { .. })));
        assert!(matches!(assemble_interface_x_row_raw(&p, &mesh, 8), Err(Error::WrongKind { .. })));
    }

    /// The transmission coefficients, written out independently.
    #[allow(clippy::too_many_arguments)]
    fn transmission_oracle(eps: f64, h1: f64, hh2: f64, al: f64, bl: f64, ar: f64, br: f64, fl: f64, fr: f64) -> [f64; 4] {
        let e2 = eps * eps;
        let g = e2 + h1 * al;
        let u0 = ar / (2.0 * e2) + e2 / (2.0 * h1 * g) - 1.0 / hh2 - 3.0 / (2.0 * h1);
        let up = -(ar / (2.0 * e2) + hh2 * br / (4.0 * e2) - 1.0 / hh2);
        let um = -((h1 / (2.0 * g)) * (2.0 * e2 / (h1 * h1) + al / h1 + bl / 2.0) - 2.0 / h1);
        let rhs = -hh2 / (4.0 * e2) * fr - h1 / (4.0 * g) * fl;
        [um, u0, up, rhs]
    }

    #[test]
    fn transformed_row_matches_closed_form() {
        let p = ex1(1e-2);
        let mesh = TensorMesh::shishkin(&p, 8).unwrap();
        let sx = 1e-4 * 8f64.ln();
        let (h1, hh2) = (4.0 * sx / 8.0, 4.0 * (1.0 - sx - 0.5) / 8.0);
        let row = assemble_interface_x_row(&p, &mesh, 2).unwrap();
        let want = transmission_oracle(1e-2, h1, hh2, 2.0, 25.0, 2.0, 25.0, 0.5, 0.6);
        let got = [row.coefficient((3, 2)).unwrap(), row.coefficient((4, 2)).unwrap(), row.coefficient((5, 2)).unwrap(), row.rhs];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{got:?} vs {want:?}");
        }
        assert_eq!(row.entries.len(), 3);
        assert!(row.entries.iter().all(|((_, j), _)| *j == 2));
    }

    #[test]
    fn transformed_row_zero_source() {
        let mut p = ex1(1e-2);
        p.sources = [field(|_, _| 0.0), field(|_, _| 0.0), field(|_, _| 0.0), field(|_, _| 0.0)];
        let mesh = TensorMesh::shishkin(&p, 16).unwrap();
        assert_eq!(assemble_interface_x_row(&p, &mesh, 3).unwrap().rhs, 0.0);
    }

    /// Eliminating `U_{N/2 +- 2}` from the raw row with the x-direction split
    /// rows `-eps^2 d2xx U + a D-x U + (b/2) U = f/2` at `N/2 +- 1`
    /// reproduces the transformed row entrywise.
    #[test]
    fn transformed_row_is_split_elimination_of_raw_row() {
        for (which, eps, n, j) in [(BuiltinProblem::Example1, 1e-2, 16, 3), (BuiltinProblem::Example2, 1e-1, 32, 20), (BuiltinProblem::Example2, 1e-3, 16, 8)] {
            let p = builtin_problem(which).with_epsilon(eps);
            let mesh = TensorMesh::shishkin(&p, n).unwrap();
            let m = mesh.mid();
            let raw = assemble_interface_x_row_raw(&p, &mesh, j).unwrap();
            let e2 = eps * eps;
            let y = mesh.y.points[j];
            let fsrc = |i: usize| if j == m {
                0.5 * (p.source_at(mesh.x.points[i], mesh.y.points[m - 1], Side::NotOnLine, Side::NotOnLine).unwrap()
                    + p.source_at(mesh.x.points[i], mesh.y.points[m + 1], Side::NotOnLine, Side::NotOnLine).unwrap())
            } else {
                p.source_at(mesh.x.points[i], y, Side::NotOnLine, Side::NotOnLine).unwrap()
            };
            // split row at i: [c_{i-1}, c_i, c_{i+1}] . U = f/2
            let split = |i: usize| {
                let (hw, he) = (mesh.x.h(i), mesh.x.h(i + 1));
                let hb = 0.5 * (hw + he);
                let a = p.a(mesh.x.points[i], y);
                let b = p.b(mesh.x.points[i], y);
                ([-e2 / (hb * hw) - a / hw, e2 / (hb * hw) + e2 / (hb * he) + a / hw + b / 2.0, -e2 / (hb * he)], fsrc(i) / 2.0)
            };
            // U_{m-2} = (f_l/2 - cl1 U_{m-1} - cl2 U_m) / cl0 ; U_{m+2} = (f_r/2 - cr0 U_m - cr1 U_{m+1}) / cr2
            let (cl, fl) = split(m - 1);
            let (cr, fr) = split(m + 1);
            let w = |k: usize| raw.coefficient((k, j)).unwrap();
            let mut coef = [w(m - 1), w(m), w(m + 1)];
            let mut rhs = 0.0;
            let wl = w(m - 2) / cl[0];
            coef[0] -= wl * cl[1];
            coef[1] -= wl * cl[2];
            rhs -= wl * fl;
            let wr = w(m + 2) / cr[2];
            coef[1] -= wr * cr[0];
            coef[2] -= wr * cr[1];
            rhs -= wr * fr;

            let t = assemble_interface_x_row(&p, &mesh, j).unwrap();
            let got = [t.coefficient((m - 1, j)).unwrap(), t.coefficient((m, j)).unwrap(), t.coefficient((m + 1, j)).unwrap()];
            for (g, c) in got.iter().zip(&coef) {
                assert!((g - c).abs() <= 1e-9 * c.abs().max(1.0), "{which:?}: {got:?} vs {coef:?}");
            }
            assert!((t.rhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "{} vs {}", t.rhs, rhs);
        }
    }

    #[test]
    fn transformed_row_constant_image() {
        // the transformed row applied to U = 1 equals -(H2 b+ / (4 eps^2) + h1 b- / (4 (eps^2 + h1 a-)))
        let p = builtin_problem(BuiltinProblem::Example2).with_epsilon(1e-2);
        let mesh = TensorMesh::shishkin(&p, 32).unwrap();
        let m = mesh.mid();
        for j in [1, 5, m, 30] {
            let row = assemble_interface_x_row(&p, &mesh, j).unwrap();
            let y = mesh.y.points[j];
            let (h1, hh2, e2) = (mesh.x.h(m), mesh.x.h(m + 1), 1e-4);
            let (xl, xr) = (mesh.x.points[m - 1], mesh.x.points[m + 1]);
            let want = -(hh2 * p.b(xr, y) / (4.0 * e2) + h1 * p.b(xl, y) / (4.0 * (e2 + h1 * p.a(xl, y))));
            let got = row.coefficient_sum();
            assert!((got - want).abs() <= 1e-9 * want.abs(), "{got} vs {want}");
        }
    }

    #[test]
    fn raw_row_uniform_pattern() {
        let p = ex1(0.5);
        let mesh = uniform_mesh(8, 0.5);
        let row = assemble_interface_x_row_raw(&p, &mesh, 3).unwrap();
        let h = 0.125;
        let want = [-1.0, 4.0, -6.0, 4.0, -1.0].map(|c| c / (2.0 * h));
        for (k, w) in want.iter().enumerate() {
            assert!((row.coefficient((2 + k, 3)).unwrap() - w).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_row_exact_on_linears() {
        let p = builtin_problem(BuiltinProblem::Example2).with_epsilon(1e-2);
        let mesh = TensorMesh::shishkin(&p, 32).unwrap();
        let row = assemble_interface_x_row_raw(&p, &mesh, 7).unwrap();
        let scale: f64 = row.entries.iter().map(|e| e.1.abs()).sum();
        assert!(row.coefficient_sum().abs() <= 1e-12 * scale);
        // reconstruct offsets from the nominal widths to stay away from coordinate rounding
        let m = mesh.mid();
        let offset = |i: usize| -> f64 {
            if i >= m { mesh.x.widths[m..i].iter().sum() } else { -mesh.x.widths[i..m].iter().sum::<f64>() }
        };
        let lin = row.apply(|i, _| offset(i));
        assert!(lin.abs() <= 1e-10, "{lin}");
    }

    #[test]
    fn midpoint_row_averages() {
        let p = ex1(1e-2);
        let mesh = TensorMesh::shishkin(&p, 16).unwrap();
        let left = assemble_interface_y_row(&p, &mesh, 3).unwrap();
        assert!((left.rhs + 0.05).abs() < 1e-15);
        let right = assemble_interface_y_row(&p, &mesh, 12).unwrap();
        assert!((right.rhs - 0.05).abs() < 1e-15);
        assert!((left.coefficient_sum() - 25.0).abs() < 1e-9 * left.coefficient((3, 8)).unwrap());
        assert_eq!(left.entries.len(), 5);

        let q = builtin_problem(BuiltinProblem::Example2).with_epsilon(1e-2);
        let mesh = TensorMesh::shishkin(&q, 16).unwrap();
        let row = assemble_interface_y_row(&q, &mesh, 3).unwrap();
        let x = mesh.x.points[3];
        let (ys, yn) = (mesh.y.points[7], mesh.y.points[9]);
        let b_hat = 0.5 * ((25.0 + x * ys / 2.0) + (25.0 + x * yn / 2.0));
        let diag = row.coefficient((3, 8)).unwrap();
        assert!((row.coefficient_sum() - b_hat).abs() <= 1e-12 * diag);
    }

    #[test]
    fn system_census_n8() {
        let p = ex1(1e-2);
        let mesh = TensorMesh::shishkin(&p, 8).unwrap();
        let sys = assemble_system(&p, &mesh, Variant::Transformed).unwrap();
        let count = |k| sys.kinds.iter().filter(|&&x| x == k).count();
        assert_eq!(sys.dimension(), 81);
        assert_eq!(count(RowKind::InterfaceXTransformed), 7);
        assert_eq!(count(RowKind::InterfaceYMidpoint), 6);
        assert_eq!(count(RowKind::Dirichlet), 32);
        assert_eq!(count(RowKind::InteriorUpwind), 36);
        for r in 0..sys.dimension() {
            let (cols, _) = sys.matrix.row(r);
            assert!(!cols.is_empty() && cols.contains(&r));
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
        let raw = assemble_system(&p, &mesh, Variant::Raw).unwrap();
        assert_eq!(raw.kinds.iter().filter(|&&x| x == RowKind::InterfaceXRaw).count(), 7);
    }

    #[test]
    fn assembly_is_thread_count_independent() {
        let p = builtin_problem(BuiltinProblem::Example2).with_epsilon(1e-3);
        let mesh = TensorMesh::shishkin(&p, 32).unwrap();
        let par = assemble_system(&p, &mesh, Variant::Transformed).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool.install(|| assemble_system(&p, &mesh, Variant::Transformed).unwrap());
        assert_eq!(par.matrix, seq.matrix);
        assert_eq!(par.rhs.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), seq.rhs.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn dirichlet_only_system_passes_check() {
        let mesh = Arc::new(uniform_mesh(8, 0.5));
        let n = mesh.len();
        let sys = LinearSystem {
            matrix: CsrMatrix::from_rows(n, (0..n).map(|r| vec![(r, 1.0)]).collect()).unwrap(),
            rhs: vec![0.0; n],
            kinds: vec![RowKind::Dirichlet; n],
            mesh,
            variant: Variant::Transformed,
        };
        let rep = m_matrix_check(&sys, true);
        assert!(rep.sign_structure_ok());
        assert_eq!(rep.inverse_min, Some(0.0));
    }

    #[test]
    fn raw_system_violates_sign_pattern_on_transmission_line() {
        let p = ex1(1e-3);
        let mesh = TensorMesh::shishkin(&p, 16).unwrap();
        let sys = assemble_system(&p, &mesh, Variant::Raw).unwrap();
        let rep = m_matrix_check(&sys, false);
        assert!(!rep.sign_structure_ok());
        assert!(rep.violations.iter().all(|v| v.center.0 == 8 && v.kind == RowKind::InterfaceXRaw));
        assert_eq!(rep.violating_rows().len(), 15);
    }

    #[test]
    fn non_transmission_rows_keep_m_matrix_signs() {
        for which in [BuiltinProblem::Example1, BuiltinProblem::Example2] {
            for eps in [1e-1, 1e-3, 1e-6] {
                let p = builtin_problem(which).with_epsilon(eps);
                let mesh = TensorMesh::shishkin(&p, 16).unwrap();
                let sys = assemble_system(&p, &mesh, Variant::Transformed).unwrap();
                let rep = m_matrix_check(&sys, false);
                assert!(rep.violations.iter().all(|v| v.kind == RowKind::InterfaceXTransformed), "{which:?} {eps}");
            }
        }
    }

    proptest! {
        #[test]
        fn upwind_rows_sign_and_dominance(
            which in prop_oneof![Just(BuiltinProblem::Example1), Just(BuiltinProblem::Example2)],
            le in -6.0f64..-1.0,
            n in prop_oneof![Just(8usize), Just(16), Just(32)],
            ii in 0.0f64..1.0, jj in 0.0f64..1.0,
        ) {
            let p = builtin_problem(which).with_epsilon(10f64.powf(le));
            let mesh = TensorMesh::shishkin(&p, n).unwrap();
            let i = 1 + ((ii * (n - 1) as f64) as usize).min(n - 2);
            let j = 1 + ((jj * (n - 1) as f64) as usize).min(n - 2);
            let row = assemble_row(&p, &mesh, Variant::Transformed, i, j).unwrap();
            match row.kind {
                RowKind::InteriorUpwind | RowKind::InterfaceYMidpoint => {
                    let diag = row.coefficient((i, j)).unwrap();
                    let off: f64 = row.entries.iter().filter(|e| e.0 != (i, j)).map(|e| e.1).sum();
                    prop_assert!(diag > 0.0);
                    prop_assert!(row.entries.iter().filter(|e| e.0 != (i, j)).all(|e| e.1 <= 0.0));
                    // diag + sum(off) is the (averaged) reaction, >= beta^2
                    prop_assert!(diag + off >= 25.0 - 1e-9 * diag);
                    let (x, y) = mesh.point(i, j);
                    if row.kind == RowKind::InteriorUpwind {
                        prop_assert!(((diag + off) - p.b(x, y)).abs() <= 1e-9 * diag);
                    }
                }
                RowKind::InterfaceXTransformed => prop_assert_eq!(row.entries.len(), 3),
                _ => {}
            }
        }
    }
}
