//! Finite metric spaces, probability vectors over them, and couplings.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const METRIC_RTOL: f64 = 1e-12;
const MASS_TOL: f64 = 1e-10;

/// A labelled point, optionally embedded in Euclidean space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum Distances {
    /// Computed on demand from the coordinates of every point.
    Euclidean,
    /// Dense row-major matrix.
    Explicit(Vec<f64>),
}

/// A finite set of points with a metric.
///
/// Spaces built from coordinates evaluate Euclidean distances lazily, so large
/// state spaces (tens of thousands of points) do not pay for a quadratic matrix.
#[derive(Debug, Clone)]
pub struct FiniteMetricSpace {
    points: Vec<Point>,
    distances: Distances,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= METRIC_RTOL * a.abs().max(b.abs()).max(1.0)
}

impl FiniteMetricSpace {
    /// Points labelled `0..n` at the given coordinates, with the Euclidean metric.
    pub fn euclidean(coords: Vec<Vec<f64>>) -> Result<Self> {
        let points = coords
            .into_iter()
            .enumerate()
            .map(|(i, c)| Point {
                label: i.to_string(),
                coords: Some(c),
            })
            .collect();
        Self::from_points(points)
    }

    /// Labelled points that all carry coordinates of one common dimension.
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return invalid("a metric space needs at least one point");
        }
        let dim = match &points[0].coords {
            Some(c) => c.len(),
            None => return invalid("point 0 has no coordinates"),
        };
        for (index, p) in points.iter().enumerate() {
            let c = p
                .coords
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("point {index} has no coordinates")))?;
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: dim,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return invalid(format!("point {index} has a non-finite coordinate"));
            }
        }
        Ok(Self {
            points,
            distances: Distances::Euclidean,
        })
    }

    /// Points with an explicit distance matrix. The metric axioms are checked
    /// in full (cubic in the number of points), as is agreement with any
    /// coordinates the points carry.
    pub fn from_matrix(points: Vec<Point>, matrix: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return invalid("a metric space needs at least one point");
        }
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return invalid(format!("distance matrix must be {n}x{n}"));
        }
        let flat: Vec<f64> = matrix.into_iter().flatten().collect();
        check_metric(n, &flat)?;
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (&points[i].coords, &points[j].coords) {
                    if a.len() != b.len() {
                        return Err(Error::DimensionMismatch {
                            index: j,
                            expected: a.len(),
                            found: b.len(),
                        });
                    }
                    if !close(flat[i * n + j], euclid(a, b)) {
                        return Err(Error::NotAMetric(format!(
                            "d({i},{j}) = {} disagrees with the coordinates",
                            flat[i * n + j]
                        )));
                    }
                }
            }
        }
        Ok(Self {
            points,
            distances: Distances::Explicit(flat),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.distances {
            Distances::Euclidean => euclid(
                self.points[i].coords.as_deref().unwrap_or_default(),
                self.points[j].coords.as_deref().unwrap_or_default(),
            ),
            Distances::Explicit(m) => m[i * self.points.len() + j],
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.distances, Distances::Euclidean)
    }

    /// Dense copy of the distance matrix.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n).map(|i| (0..n).map(|j| self.dist(i, j)).collect()).collect()
    }

    /// The subspace on the given indices, in the given order.
    pub fn subspace(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return invalid(format!("index {bad} out of range for {} points", self.len()));
        }
        let points: Vec<Point> = indices.iter().map(|&i| self.points[i].clone()).collect();
        let distances = match &self.distances {
            Distances::Euclidean => Distances::Euclidean,
            Distances::Explicit(_) => Distances::Explicit(
                indices
                    .iter()
                    .flat_map(|&i| indices.iter().map(move |&j| (i, j)))
                    .map(|(i, j)| self.dist(i, j))
                    .collect(),
            ),
        };
        Ok(Self { points, distances })
    }

    /// `A^eps = { y : min_{x in A} d(y, x) <= eps }`, returned sorted.
    ///
    /// The empty set maps to the empty set.
    pub fn closed_neighborhood(&self, set: &[usize], eps: f64) -> Result<Vec<usize>> {
        if !(eps >= 0.0) {
            return invalid(format!("neighbourhood radius must be >= 0, got {eps}"));
        }
        if let Some(&bad) = set.iter().find(|&&i| i >= self.len()) {
            return invalid(format!("index {bad} out of range for {} points", self.len()));
        }
        Ok((0..self.len())
            .filter(|&y| set.iter().any(|&x| self.dist(y, x) <= eps))
            .collect())
    }
}

/// `build_euclidean_space`: pairwise Euclidean distances of the given coordinates.
pub fn build_euclidean_space(coords: Vec<Vec<f64>>) -> Result<FiniteMetricSpace> {
    FiniteMetricSpace::euclidean(coords)
}

/// Checks symmetry, zero diagonal, nonnegativity and the triangle inequality
/// on a dense row-major `n x n` matrix.
pub fn check_metric(n: usize, m: &[f64]) -> Result<()> {
    for i in 0..n {
        if m[i * n + i] != 0.0 {
            return Err(Error::NotAMetric(format!("d({i},{i}) = {} != 0", m[i * n + i])));
        }
        for j in 0..n {
            let d = m[i * n + j];
            if !d.is_finite() || d < 0.0 {
                return Err(Error::NotAMetric(format!("d({i},{j}) = {d}")));
            }
            if !close(d, m[j * n + i]) {
                return Err(Error::NotAMetric(format!("d({i},{j}) != d({j},{i})")));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let dij = m[i * n + j];
            for k in 0..n {
                let bound = dij + m[j * n + k];
                if m[i * n + k] > bound + METRIC_RTOL * bound.max(1.0) {
                    return Err(Error::NotAMetric(format!(
                        "triangle inequality fails: d({i},{k}) > d({i},{j}) + d({j},{k})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// A probability vector indexed by the points of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    /// Validates nonnegativity and unit mass (within 1e-10), then renormalizes.
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return invalid("distribution over an empty space");
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return invalid(format!("weight {i} is {w}"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return invalid(format!("weights sum to {total}, not 1"));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { weights })
    }

    pub fn point_mass(len: usize, at: usize) -> Result<Self> {
        if at >= len {
            return invalid(format!("state {at} out of range for {len} points"));
        }
        let mut weights = vec![0.0; len];
        weights[at] = 1.0;
        Ok(Self { weights })
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return invalid("distribution over an empty space");
        }
        Ok(Self {
            weights: vec![1.0 / len as f64; len],
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    pub fn mass_of(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.weights[i]).sum()
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.weights
    }
}

/// One cell of a sparse joint distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointMass {
    pub left: usize,
    pub right: usize,
    pub mass: f64,
}

/// A joint law with prescribed marginals, stored sparsely.
#[derive(Debug, Clone, Serialize)]
pub struct Coupling {
    joint: Vec<JointMass>,
    left: Distribution,
    right: Distribution,
}

impl Coupling {
    /// Validates that row sums match `left` and column sums match `right`
    /// within 1e-10. Zero cells are dropped.
    pub fn new(joint: Vec<JointMass>, left: Distribution, right: Distribution) -> Result<Self> {
        let mut rows = vec![0.0; left.len()];
        let mut cols = vec![0.0; right.len()];
        for cell in &joint {
            if cell.left >= left.len() || cell.right >= right.len() {
                return invalid(format!("cell ({}, {}) out of range", cell.left, cell.right));
            }
            if !cell.mass.is_finite() || cell.mass < 0.0 {
                return invalid(format!("cell ({}, {}) has mass {}", cell.left, cell.right, cell.mass));
            }
            rows[cell.left] += cell.mass;
            cols[cell.right] += cell.mass;
        }
        for (i, (got, want)) in rows.iter().zip(left.weights()).enumerate() {
            if (got - want).abs() > MASS_TOL {
                return invalid(format!("row {i} sums to {got}, marginal is {want}"));
            }
        }
        for (j, (got, want)) in cols.iter().zip(right.weights()).enumerate() {
            if (got - want).abs() > MASS_TOL {
                return invalid(format!("column {j} sums to {got}, marginal is {want}"));
            }
        }
        let joint = joint.into_iter().filter(|c| c.mass > 0.0).collect();
        Ok(Self { joint, left, right })
    }

    /// The coupling that keeps every point in place.
    pub fn identity(p: &Distribution) -> Self {
        let joint = p
            .support()
            .into_iter()
            .map(|i| JointMass {
                left: i,
                right: i,
                mass: p.weights()[i],
            })
            .collect();
        Self {
            joint,
            left: p.clone(),
            right: p.clone(),
        }
    }

    pub fn joint(&self) -> &[JointMass] {
        &self.joint
    }

    pub fn left_marginal(&self) -> &Distribution {
        &self.left
    }

    pub fn right_marginal(&self) -> &Distribution {
        &self.right
    }

    /// Mass on pairs strictly farther apart than `threshold`.
    pub fn mass_beyond(&self, space: &FiniteMetricSpace, threshold: f64) -> f64 {
        self.joint
            .iter()
            .filter(|c| space.dist(c.left, c.right) > threshold)
            .map(|c| c.mass)
            .sum()
    }
}
