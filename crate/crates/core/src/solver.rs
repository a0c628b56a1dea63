//! Direct sparse solve of the assembled system.

use std::io::{self, Write};
use std::sync::{Arc, Once};

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::discretization::LinearSystem;
use crate::error::{Error, Result};
use crate::mesh::TensorMesh;

/// Relative residual accepted from the direct solver.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Nodal values on a tensor mesh, flat-indexed as [`TensorMesh::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub mesh: Arc<TensorMesh>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.mesh.index(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `x y U` lines, `x` fastest, with a blank line between `y` levels.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        let side = self.mesh.side();
        for j in 0..side {
            for i in 0..side {
                let (x, y) = self.mesh.point(i, j);
                writeln!(out, "{x:.17e} {y:.17e} {:.17e}", self.at(i, j))?;
            }
            if j + 1 < side {
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

static SEQUENTIAL: Once = Once::new();

fn pin_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// `||A u - rhs||_inf / (||A||_inf ||u||_inf + ||rhs||_inf)`.
pub fn residual_norm(system: &LinearSystem, u: &[f64]) -> Result<f64> {
    let au = system.matrix.matvec(u)?;
    let res = au.iter().zip(&system.rhs).fold(0.0, |m: f64, (l, r)| m.max((l - r).abs()));
    let u_norm = u.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let rhs_norm = system.rhs.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let scale = system.matrix.norm_inf() * u_norm + rhs_norm;
    Ok(if scale == 0.0 { res } else { res / scale })
}

/// Sparse LU solve. Each row is scaled by its largest coefficient before
/// factorization. The factorization runs single-threaded, so repeated solves
/// are bitwise identical.
pub fn solve_direct(system: &LinearSystem) -> Result<GridFunction> {
    pin_sequential();
    let n = system.dimension();
    if system.matrix.nrows != n || system.matrix.ncols != n {
        return Err(Error::DimensionMismatch { expected: n, actual: system.matrix.nrows });
    }

    let mut triplets = Vec::with_capacity(system.matrix.nnz());
    let mut rhs = Col::<f64>::zeros(n);
    for r in 0..n {
        let (cols, vals) = system.matrix.row(r);
        let scale = vals.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::SingularMatrix(format!("row {r} has no usable coefficient")));
        }
        for (&c, &v) in cols.iter().zip(vals) {
            triplets.push(Triplet::new(r, c, v / scale));
        }
        rhs[r] = system.rhs[r] / scale;
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::SingularMatrix(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::SingularMatrix(format!("{e:?}")))?;
    let x = lu.solve(&rhs);

    let values: Vec<f64> = (0..n).map(|k| x[k]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSolution);
    }
    let residual = residual_norm(system, &values)?;
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::SingularMatrix(format!("relative residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE:.0e}")));
    }
    Ok(GridFunction { mesh: Arc::clone(&system.mesh), values })
}
