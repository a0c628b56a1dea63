//! Piecewise-uniform (Shishkin) meshes fitted to the layers.
//!
//! In `x` the unit interval is split at `d1 - sigma_x`, `d1` and
//! `1 - sigma_x` into four pieces of `N/4` intervals each. In `y` the splits
//! are `sigma_y`, `d2 - sigma_y`, `d2`, `d2 + sigma_y` and `1 - sigma_y`,
//! with `N/8` intervals on the four fine pieces and `N/4` on the two coarse
//! ones. Breakpoints are stored exactly and each interior point is computed
//! as `breakpoint + k * width`, so `points[N/2]` is bitwise `d1` (or `d2`).
//!
//! Every mesh keeps the nominal width of each interval alongside its points.
//! Inside the layers the widths can be a few hundred ulps of the coordinates,
//! so differencing coordinates would lose most of their digits; the
//! discretization reads widths from here instead.

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::ProblemSpec;

/// Layer widths of the fitted mesh for a given `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub n: usize,
}

pub(crate) fn check_n(n: usize) -> Result<()> {
    if n < 8 || !n.is_multiple_of(8) {
        return Err(Error::BadN(n));
    }
    Ok(())
}

/// `sigma_x = min(d1/2, 2 eps^2 ln N / alpha)` and
/// `sigma_y = min(d2/4, 2 eps ln N / beta)`.
pub fn compute_transition_points(spec: &ProblemSpec, n: usize) -> Result<TransitionParams> {
    check_n(n)?;
    spec.check_parameters()?;
    let ln_n = (n as f64).ln();
    let eps = spec.epsilon;
    Ok(TransitionParams {
        sigma_x: (spec.d1 / 2.0).min(2.0 * eps * eps / spec.alpha * ln_n),
        sigma_y: (spec.d2 / 4.0).min(2.0 * eps / spec.beta * ln_n),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    X,
    Y,
}

/// A one-dimensional piecewise-uniform mesh on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mesh1D {
    pub axis: Axis,
    pub points: Vec<f64>,
    /// `widths[k]` is the nominal length of `[points[k], points[k+1]]`.
    pub widths: Vec<f64>,
    pub breakpoints: Vec<f64>,
    /// Intervals per piece between consecutive breakpoints.
    pub counts: Vec<usize>,
}

impl Mesh1D {
    /// Uniform sub-meshes between exact breakpoints.
    pub fn piecewise(axis: Axis, breakpoints: &[f64], counts: &[usize]) -> Result<Self> {
        if breakpoints.len() != counts.len() + 1 {
            return Err(Error::GeometryError(
                "need one more breakpoint than piece counts".into(),
            ));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::GeometryError(format!(
                "{axis:?} breakpoints not increasing: {} then {}",
                w[0], w[1]
            )));
        }
        if counts.contains(&0) {
            return Err(Error::GeometryError("empty mesh piece".into()));
        }
        let total: usize = counts.iter().sum();
        let mut points = Vec::with_capacity(total + 1);
        let mut widths = Vec::with_capacity(total);
        points.push(breakpoints[0]);
        for (k, &count) in counts.iter().enumerate() {
            let (lo, hi) = (breakpoints[k], breakpoints[k + 1]);
            let w = (hi - lo) / count as f64;
            points.extend((1..count).map(|m| lo + m as f64 * w));
            points.push(hi);
            widths.extend(std::iter::repeat_n(w, count));
        }
        Ok(Self {
            axis,
            points,
            widths,
            breakpoints: breakpoints.to_vec(),
            counts: counts.to_vec(),
        })
    }

    pub fn intervals(&self) -> usize {
        self.widths.len()
    }

    /// `h_i = x_i - x_{i-1}` (nominal), for `1 <= i <= N`.
    pub fn h(&self, i: usize) -> f64 {
        self.widths[i - 1]
    }

    /// Distinct nominal widths in order of first appearance.
    pub fn distinct_widths(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &w in &self.widths {
            if !out.contains(&w) {
                out.push(w);
            }
        }
        out
    }

    /// Inserts the midpoint of every interval. Existing points keep their
    /// exact values at even indices.
    pub fn bisect(&self) -> Self {
        let n = self.intervals();
        let mut points = Vec::with_capacity(2 * n + 1);
        for k in 0..n {
            points.push(self.points[k]);
            points.push(0.5 * (self.points[k] + self.points[k + 1]));
        }
        points.push(self.points[n]);
        let widths = self.widths.iter().flat_map(|&w| [0.5 * w, 0.5 * w]).collect();
        Self {
            axis: self.axis,
            points,
            widths,
            breakpoints: self.breakpoints.clone(),
            counts: self.counts.iter().map(|c| 2 * c).collect(),
        }
    }

    /// Two columns, `index coordinate`, one point per line.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            writeln!(out, "{i} {p:.17e}")?;
        }
        Ok(())
    }
}

/// The four-piece `x` mesh.
pub fn build_mesh_x(params: &TransitionParams, d1: f64) -> Result<Mesh1D> {
    check_n(params.n)?;
    let s = params.sigma_x;
    if !(s > 0.0 && s <= d1 / 2.0) {
        return Err(Error::GeometryError(format!(
            "sigma_x = {s} must lie in (0, d1/2 = {}]",
            d1 / 2.0
        )));
    }
    if 1.0 - s <= d1 {
        return Err(Error::GeometryError(format!(
            "layer at x = 1 (width {s}) overlaps d1 = {d1}"
        )));
    }
    let q = params.n / 4;
    Mesh1D::piecewise(Axis::X, &[0.0, d1 - s, d1, 1.0 - s, 1.0], &[q; 4])
}

/// The six-piece `y` mesh.
pub fn build_mesh_y(params: &TransitionParams, d2: f64) -> Result<Mesh1D> {
    check_n(params.n)?;
    let s = params.sigma_y;
    if !(s > 0.0 && s <= d2 / 4.0) {
        return Err(Error::GeometryError(format!(
            "sigma_y = {s} must lie in (0, d2/4 = {}]",
            d2 / 4.0
        )));
    }
    if d2 + s >= 1.0 - s {
        return Err(Error::GeometryError(format!(
            "layers at y = d2 and y = 1 (width {s}) overlap for d2 = {d2}"
        )));
    }
    let (q, e) = (params.n / 4, params.n / 8);
    Mesh1D::piecewise(
        Axis::Y,
        &[0.0, s, d2 - s, d2, d2 + s, 1.0 - s, 1.0],
        &[e, q, e, e, q, e],
    )
}

/// Role of a grid point in the discrete problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum PointKind {
    Interior,
    Boundary,
    /// On `x = d1`, off `y = d2`.
    InterfaceX,
    /// On `y = d2`, off `x = d1`.
    InterfaceY,
    /// The crossing `(d1, d2)`.
    Cross,
}

/// Tensor product of an `x` and a `y` mesh with the same interval count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorMesh {
    pub x: Mesh1D,
    pub y: Mesh1D,
    /// Intervals per axis.
    pub n: usize,
    /// Transition points the mesh was built from. Bisected meshes inherit them.
    pub params: TransitionParams,
    pub d1: f64,
    pub d2: f64,
}

impl TensorMesh {
    pub fn shishkin(spec: &ProblemSpec, n: usize) -> Result<Self> {
        let params = compute_transition_points(spec, n)?;
        Ok(Self {
            x: build_mesh_x(&params, spec.d1)?,
            y: build_mesh_y(&params, spec.d2)?,
            n,
            params,
            d1: spec.d1,
            d2: spec.d2,
        })
    }

    pub fn mid(&self) -> usize {
        self.n / 2
    }

    pub fn side(&self) -> usize {
        self.n + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major flat index `j (N+1) + i`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.side() + i
    }

    pub fn coords(&self, flat: usize) -> (usize, usize) {
        (flat % self.side(), flat / self.side())
    }

    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x.points[i], self.y.points[j])
    }

    pub fn classify(&self, i: usize, j: usize) -> PointKind {
        let (n, m) = (self.n, self.mid());
        if i == 0 || j == 0 || i == n || j == n {
            PointKind::Boundary
        } else if i == m && j == m {
            PointKind::Cross
        } else if i == m {
            PointKind::InterfaceX
        } else if j == m {
            PointKind::InterfaceY
        } else {
            PointKind::Interior
        }
    }

    pub fn bisect(&self) -> Self {
        Self {
            x: self.x.bisect(),
            y: self.y.bisect(),
            n: 2 * self.n,
            params: self.params,
            d1: self.d1,
            d2: self.d2,
        }
    }
}
