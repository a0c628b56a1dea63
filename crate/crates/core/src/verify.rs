//! Property suites run by `shishkin-cd verify`.

use serde::Serialize;

use crate::analysis::{manufactured_solution_study, solve_on, stability_bound};
use crate::discretization::{assemble_system, m_matrix_check, Variant, DENSE_INVERSE_LIMIT};
use crate::error::Result;
use crate::mesh::TensorMesh;
use crate::problem::{builtin_problem, BuiltinProblem};

/// Observed-order band accepted for the smooth problem.
pub const MANUFACTURED_ORDER_BAND: (f64, f64) = (0.8, 1.3);
/// Largest max-norm difference accepted between the two transmission rows.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;
/// Smallest dense-inverse entry accepted by the inverse-positivity check.
pub const INVERSE_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// What to check and on which cells.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyPlan {
    pub problems: Vec<BuiltinProblem>,
    pub variant: Variant,
    pub m_matrix_ns: Vec<usize>,
    pub m_matrix_epsilons: Vec<f64>,
    pub equivalence_ns: Vec<usize>,
    pub equivalence_epsilons: Vec<f64>,
    pub manufactured_ns: Vec<usize>,
}

impl Default for VerifyPlan {
    fn default() -> Self {
        Self {
            problems: vec![BuiltinProblem::Example1, BuiltinProblem::Example2],
            variant: Variant::Transformed,
            m_matrix_ns: vec![16, 32],
            m_matrix_epsilons: vec![1e-1, 1e-3, 1e-6],
            equivalence_ns: vec![8, 16, 32],
            equivalence_epsilons: vec![1e-1, 1e-3],
            manufactured_ns: vec![32, 64, 128, 256],
        }
    }
}

/// Sign pattern on every cell; dense-inverse minimum on the smallest `N`.
pub fn check_m_matrix(plan: &VerifyPlan) -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    let smallest = plan.m_matrix_ns.iter().copied().min();
    for &which in &plan.problems {
        for &n in &plan.m_matrix_ns {
            for &eps in &plan.m_matrix_epsilons {
                let spec = builtin_problem(which).with_epsilon(eps);
                let mesh = TensorMesh::shishkin(&spec, n)?;
                let system = assemble_system(&spec, &mesh, plan.variant)?;
                let dense = Some(n) == smallest && mesh.len() <= DENSE_INVERSE_LIMIT;
                let report = m_matrix_check(&system, dense);
                let rows = report.violating_rows();
                let mut detail = format!("{} sign violations in {} rows", report.violations.len(), rows.len());
                if !rows.is_empty() {
                    let kinds: Vec<_> = report.violating_kinds().into_iter().collect();
                    let cols: std::collections::BTreeSet<usize> = report.violations.iter().map(|v| v.center.0).collect();
                    detail += &format!(" (kinds {kinds:?}, grid columns i = {cols:?})");
                }
                let mut passed = report.sign_structure_ok();
                if let Some(min) = report.inverse_min {
                    detail += &format!("; min inverse entry {min:.3e}");
                    passed &= min >= INVERSE_FLOOR;
                }
                out.push(PropertyResult {
                    name: format!("m-matrix {which} {} N={n} eps={eps:.0e}", plan.variant),
                    passed,
                    detail,
                });
            }
        }
    }
    Ok(out)
}

/// `max |U| <= max |f| / alpha + max |q|` on the M-matrix cells.
pub fn check_stability(plan: &VerifyPlan) -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    for &which in &plan.problems {
        for &n in &plan.m_matrix_ns {
            for &eps in &plan.m_matrix_epsilons {
                let spec = builtin_problem(which).with_epsilon(eps);
                let mesh = TensorMesh::shishkin(&spec, n)?;
                let (u, _) = solve_on(&spec, &mesh, plan.variant)?;
                let bound = stability_bound(&spec, &mesh);
                let u_max = u.max_abs();
                out.push(PropertyResult {
                    name: format!("stability {which} {} N={n} eps={eps:.0e}", plan.variant),
                    passed: u_max <= bound,
                    detail: format!("max|U| = {u_max:.4e}, bound {bound:.4e}"),
                });
            }
        }
    }
    Ok(out)
}

/// Max-norm difference between the transformed and the raw solutions.
pub fn check_equivalence(plan: &VerifyPlan) -> Result<Vec<PropertyResult>> {
    let mut out = Vec::new();
    for &which in &plan.problems {
        for &n in &plan.equivalence_ns {
            for &eps in &plan.equivalence_epsilons {
                let spec = builtin_problem(which).with_epsilon(eps);
                let mesh = TensorMesh::shishkin(&spec, n)?;
                let (t, _) = solve_on(&spec, &mesh, Variant::Transformed)?;
                let (r, _) = solve_on(&spec, &mesh, Variant::Raw)?;
                let diff = t.values.iter().zip(&r.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                out.push(PropertyResult {
                    name: format!("raw/transformed {which} N={n} eps={eps:.0e}"),
                    passed: diff <= EQUIVALENCE_TOLERANCE,
                    detail: format!("max |U_T - U_R| = {diff:.3e}"),
                });
            }
        }
    }
    Ok(out)
}

/// Monotone decay and observed order of the smooth-problem error.
pub fn check_manufactured(plan: &VerifyPlan) -> Result<PropertyResult> {
    let table = manufactured_solution_study(&plan.manufactured_ns, 1.0, plan.variant)?;
    let errors: Vec<f64> = table.d_uniform.iter().flatten().copied().collect();
    let orders: Vec<f64> = table.e_uniform.iter().flatten().copied().collect();
    let decreasing = errors.len() == plan.manufactured_ns.len() && errors.windows(2).all(|w| w[1] < w[0]);
    let (lo, hi) = MANUFACTURED_ORDER_BAND;
    let in_band = orders.iter().all(|e| (lo..=hi).contains(e));
    Ok(PropertyResult {
        name: format!("manufactured solution {}", plan.variant),
        passed: decreasing && in_band,
        detail: format!(
            "errors {:?}, orders {:?}",
            errors.iter().map(|e| format!("{e:.4e}")).collect::<Vec<_>>(),
            orders.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>()
        ),
    })
}

/// All suites in order.
pub fn run_all(plan: &VerifyPlan) -> Result<Vec<PropertyResult>> {
    let mut out = check_m_matrix(plan)?;
    out.extend(check_stability(plan)?);
    out.extend(check_equivalence(plan)?);
    out.push(check_manufactured(plan)?);
    Ok(out)
}
