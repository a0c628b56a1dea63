//! Double-mesh error estimates, convergence tables and sweeps.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{assemble_system, Variant};
use crate::error::{Error, Result};
use crate::mesh::{PointKind, TensorMesh};
use crate::problem::{field, validate, ProblemSpec, Side};
use crate::solver::{residual_norm, solve_direct, GridFunction};

/// How the fine mesh of the double-mesh estimate is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoubleMeshMode {
    /// Bisect every interval of the `N` mesh; transition points are kept.
    #[default]
    Bisect,
    /// Build a fresh `2N` mesh with its own transition points and compare by index.
    Regenerate,
}

impl FromStr for DoubleMeshMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bisect" => Ok(DoubleMeshMode::Bisect),
            "regenerate" => Ok(DoubleMeshMode::Regenerate),
            other => Err(Error::Config(format!("unknown double-mesh mode '{other}'"))),
        }
    }
}

impl fmt::Display for DoubleMeshMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DoubleMeshMode::Bisect => "bisect",
            DoubleMeshMode::Regenerate => "regenerate",
        })
    }
}

/// `max |fine(x_{2i}, y_{2j}) - coarse(x_i, y_j)|` over the coarse points.
/// The fine mesh must contain every coarse point exactly.
pub fn double_mesh_error(coarse: &GridFunction, fine: &GridFunction) -> Result<f64> {
    let (cm, fm) = (&coarse.mesh, &fine.mesh);
    if fm.n != 2 * cm.n {
        return Err(Error::MeshMismatch(format!("fine N = {} is not twice coarse N = {}", fm.n, cm.n)));
    }
    for (axis, c, f) in [("x", &cm.x.points, &fm.x.points), ("y", &cm.y.points, &fm.y.points)] {
        if let Some(i) = (0..c.len()).find(|&i| c[i] != f[2 * i]) {
            return Err(Error::MeshMismatch(format!("{axis}_{i} = {} but fine {axis}_{} = {}", c[i], 2 * i, f[2 * i])));
        }
    }
    Ok(even_index_difference(coarse, fine))
}

/// Same comparison without the nesting check, for regenerated fine meshes.
pub fn double_mesh_error_by_index(coarse: &GridFunction, fine: &GridFunction) -> Result<f64> {
    if fine.mesh.n != 2 * coarse.mesh.n {
        return Err(Error::MeshMismatch(format!("fine N = {} is not twice coarse N = {}", fine.mesh.n, coarse.mesh.n)));
    }
    Ok(even_index_difference(coarse, fine))
}

fn even_index_difference(coarse: &GridFunction, fine: &GridFunction) -> f64 {
    let side = coarse.mesh.side();
    let mut max = 0.0f64;
    for j in 0..side {
        for i in 0..side {
            max = max.max((fine.at(2 * i, 2 * j) - coarse.at(i, j)).abs());
        }
    }
    max
}

/// `log2(d_n / d_2n)`.
pub fn order_estimate(d_n: f64, d_2n: f64) -> Result<f64> {
    if !(d_n > 0.0 && d_2n > 0.0) {
        return Err(Error::NonPositiveError(d_n, d_2n));
    }
    Ok((d_n / d_2n).log2())
}

/// Errors per `(epsilon, N)` and their reductions over `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub epsilons: Vec<f64>,
    pub ns: Vec<usize>,
    /// `d_eps[e][k]` for `epsilons[e]` and `ns[k]`; `None` marks a failed cell.
    pub d_eps: Vec<Vec<Option<f64>>>,
    /// Maximum over `epsilon`; `None` if any cell in the column is missing.
    pub d_uniform: Vec<Option<f64>>,
    /// `log2(d_uniform[k] / d_uniform[k + 1])` when `ns[k + 1] = 2 ns[k]`.
    pub e_uniform: Vec<Option<f64>>,
}

impl ConvergenceTable {
    pub fn from_cells(epsilons: Vec<f64>, ns: Vec<usize>, d_eps: Vec<Vec<Option<f64>>>) -> Self {
        let d_uniform: Vec<Option<f64>> = (0..ns.len())
            .map(|k| {
                d_eps.iter().try_fold(None::<f64>, |acc, row| {
                    row[k].map(|d| Some(acc.map_or(d, |a: f64| a.max(d))))
                })?
            })
            .collect();
        let e_uniform = (0..ns.len().saturating_sub(1))
            .map(|k| match (d_uniform[k], d_uniform[k + 1]) {
                (Some(a), Some(b)) if ns[k + 1] == 2 * ns[k] => order_estimate(a, b).ok(),
                _ => None,
            })
            .collect();
        Self { epsilons, ns, d_eps, d_uniform, e_uniform }
    }

    pub fn cell(&self, epsilon: f64, n: usize) -> Option<f64> {
        let e = self.epsilons.iter().position(|&x| x == epsilon)?;
        let k = self.ns.iter().position(|&x| x == n)?;
        self.d_eps[e][k]
    }

    pub fn uniform(&self, n: usize) -> Option<f64> {
        self.d_uniform[self.ns.iter().position(|&x| x == n)?]
    }

    pub fn order(&self, n: usize) -> Option<f64> {
        *self.e_uniform.get(self.ns.iter().position(|&x| x == n)?)?
    }

    pub fn missing_cells(&self) -> usize {
        self.d_eps.iter().flatten().filter(|c| c.is_none()).count()
    }

    /// Header of `N`s, one row per `epsilon`, then the `D` and `E` rows.
    /// Numbers use four significant digits; missing cells print as `—`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon");
        for n in &self.ns {
            write!(out, ",{n}").unwrap();
        }
        out.push('\n');
        let cell = |v: Option<f64>| v.map_or_else(|| "—".to_string(), |d| format!("{d:.3e}"));
        for (eps, row) in self.epsilons.iter().zip(&self.d_eps) {
            write!(out, "{eps:.3e}").unwrap();
            for &d in row {
                write!(out, ",{}", cell(d)).unwrap();
            }
            out.push('\n');
        }
        out.push_str("D^N");
        for &d in &self.d_uniform {
            write!(out, ",{}", cell(d)).unwrap();
        }
        out.push('\n');
        if self.ns.len() > 1 {
            out.push_str("E^N");
            for k in 0..self.ns.len() {
                write!(out, ",{}", cell(self.e_uniform.get(k).copied().flatten())).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Per-cell diagnostics of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub epsilon: f64,
    pub n: usize,
    pub d_eps: Option<f64>,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub residual_coarse: Option<f64>,
    pub residual_fine: Option<f64>,
    /// `max |U|` over the coarse and fine solutions.
    pub u_max: Option<f64>,
    /// `max |f| / alpha + max |q|` sampled on the fine mesh.
    pub stability_bound: f64,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl CellReport {
    pub fn within_stability_bound(&self) -> Option<bool> {
        self.u_max.map(|u| u <= self.stability_bound * (1.0 + 1e-12))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub problem: String,
    pub variant: Variant,
    pub mode: DoubleMeshMode,
    pub table: ConvergenceTable,
    pub cells: Vec<CellReport>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub variant: Variant,
    pub mode: DoubleMeshMode,
    /// Worker threads for cells; `None` uses the global pool.
    pub workers: Option<usize>,
}

/// `max |f| / alpha + max |q|` over the points of `mesh`, with both one-sided
/// values of `f` taken on the discontinuity lines.
pub fn stability_bound(spec: &ProblemSpec, mesh: &TensorMesh) -> f64 {
    let sides = |v: f64, d: f64| if v == d { vec![Side::Minus, Side::Plus] } else { vec![Side::NotOnLine] };
    let (mut f_max, mut q_max) = (0.0f64, 0.0f64);
    for j in 0..mesh.side() {
        for i in 0..mesh.side() {
            let (x, y) = mesh.point(i, j);
            if mesh.classify(i, j) == PointKind::Boundary {
                q_max = q_max.max(spec.boundary_value(x, y).unwrap_or(0.0).abs());
            }
            for sx in sides(x, spec.d1) {
                for sy in sides(y, spec.d2) {
                    if let Ok(f) = spec.source_at(x, y, sx, sy) {
                        f_max = f_max.max(f.abs());
                    }
                }
            }
        }
    }
    f_max / spec.alpha + q_max
}

/// Assembles and solves on `mesh`, returning the solution and its relative residual.
pub fn solve_on(spec: &ProblemSpec, mesh: &TensorMesh, variant: Variant) -> Result<(GridFunction, f64)> {
    let system = assemble_system(spec, mesh, variant)?;
    let u = solve_direct(&system)?;
    let residual = residual_norm(&system, &u.values)?;
    Ok((u, residual))
}

fn run_cell(base: &ProblemSpec, epsilon: f64, n: usize, opts: SweepOptions) -> CellReport {
    let start = Instant::now();
    let spec = base.clone().with_epsilon(epsilon);
    let mut report = CellReport {
        epsilon,
        n,
        d_eps: None,
        sigma_x: f64::NAN,
        sigma_y: f64::NAN,
        residual_coarse: None,
        residual_fine: None,
        u_max: None,
        stability_bound: f64::NAN,
        warnings: Vec::new(),
        error: None,
        seconds: 0.0,
    };
    let outcome = (|| -> Result<()> {
        let validation = validate(&spec, n)?;
        report.warnings = validation.warnings;
        report.warnings.extend(validation.violations.iter().map(|v| format!("violation: {v}")));
        let coarse_mesh = TensorMesh::shishkin(&spec, n)?;
        report.sigma_x = coarse_mesh.params.sigma_x;
        report.sigma_y = coarse_mesh.params.sigma_y;
        let fine_mesh = match opts.mode {
            DoubleMeshMode::Bisect => coarse_mesh.bisect(),
            DoubleMeshMode::Regenerate => TensorMesh::shishkin(&spec, 2 * n)?,
        };
        report.stability_bound = stability_bound(&spec, &fine_mesh).max(stability_bound(&spec, &coarse_mesh));
        let (coarse, rc) = solve_on(&spec, &coarse_mesh, opts.variant)?;
        report.residual_coarse = Some(rc);
        let (fine, rf) = solve_on(&spec, &fine_mesh, opts.variant)?;
        report.residual_fine = Some(rf);
        report.u_max = Some(coarse.max_abs().max(fine.max_abs()));
        report.d_eps = Some(match opts.mode {
            DoubleMeshMode::Bisect => double_mesh_error(&coarse, &fine)?,
            DoubleMeshMode::Regenerate => double_mesh_error_by_index(&coarse, &fine)?,
        });
        Ok(())
    })();
    if let Err(e) = outcome {
        report.error = Some(e.to_string());
    }
    report.seconds = start.elapsed().as_secs_f64();
    report
}

/// Runs every `(epsilon, N)` cell. Cells run concurrently; results are
/// placed by cell index, so the table does not depend on completion order.
/// A failed cell is recorded as missing.
pub fn run_sweep(base: &ProblemSpec, epsilons: &[f64], ns: &[usize], opts: SweepOptions) -> Result<SweepReport> {
    if epsilons.is_empty() || ns.is_empty() {
        return Err(Error::Config("a sweep needs at least one epsilon and one N".into()));
    }
    let jobs: Vec<(f64, usize)> = epsilons.iter().flat_map(|&e| ns.iter().map(move |&n| (e, n))).collect();
    let run = || jobs.par_iter().map(|&(e, n)| run_cell(base, e, n, opts)).collect::<Vec<_>>();
    let cells = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    };
    let d_eps = cells.chunks(ns.len()).map(|row| row.iter().map(|c| c.d_eps).collect()).collect();
    Ok(SweepReport {
        problem: base.name.clone(),
        variant: opts.variant,
        mode: opts.mode,
        table: ConvergenceTable::from_cells(epsilons.to_vec(), ns.to_vec(), d_eps),
        cells,
    })
}

/// Diffusion parameter of the smooth test problem.
pub const MANUFACTURED_EPSILON: f64 = 0.1;

/// `amplitude * x sin(pi x) sin(pi y)`.
pub fn manufactured_exact(amplitude: f64, x: f64, y: f64) -> f64 {
    amplitude * x * (PI * x).sin() * (PI * y).sin()
}

/// Smooth problem with `a = 2`, `b = 25`, `epsilon = 0.1`, lines at `1/2`,
/// zero boundary data and `f = L u*` for [`manufactured_exact`], the same in
/// every quadrant.
pub fn manufactured_problem(amplitude: f64) -> ProblemSpec {
    let (eps, a, b) = (MANUFACTURED_EPSILON, 2.0, 25.0);
    let source = field(move |x, y| {
        let (sx, cx, sy) = ((PI * x).sin(), (PI * x).cos(), (PI * y).sin());
        let u = x * sx * sy;
        let u_x = sx * sy + PI * x * cx * sy;
        let u_xx = 2.0 * PI * cx * sy - PI * PI * x * sx * sy;
        let u_yy = -PI * PI * x * sx * sy;
        amplitude * (-eps * eps * (u_xx + u_yy) + a * u_x + b * u)
    });
    let zero = field(|_, _| 0.0);
    ProblemSpec {
        name: "manufactured".into(),
        epsilon: eps,
        convection: field(move |_, _| a),
        reaction: field(move |_, _| b),
        sources: [source.clone(), source.clone(), source.clone(), source],
        boundary: [zero.clone(), zero.clone(), zero.clone(), zero],
        d1: 0.5,
        d2: 0.5,
        alpha: 2.0,
        beta: 5.0,
    }
}

/// Exact nodal errors of the smooth problem on the fitted mesh, one column per `N`.
pub fn manufactured_solution_study(ns: &[usize], amplitude: f64, variant: Variant) -> Result<ConvergenceTable> {
    let spec = manufactured_problem(amplitude);
    let errors = ns
        .par_iter()
        .map(|&n| {
            let mesh = TensorMesh::shishkin(&spec, n)?;
            let (u, _) = solve_on(&spec, &mesh, variant)?;
            let mut err = 0.0f64;
            for j in 0..mesh.side() {
                for i in 0..mesh.side() {
                    let (x, y) = mesh.point(i, j);
                    err = err.max((u.at(i, j) - manufactured_exact(amplitude, x, y)).abs());
                }
            }
            Ok(Some(err))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable::from_cells(vec![MANUFACTURED_EPSILON], ns.to_vec(), vec![errors]))
}
