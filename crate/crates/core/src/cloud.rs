//! Point clouds in ambient space and the diagonal rescaling metric used for
//! every distance computation on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal rescaling `y' = R y` with positive scale factors.
///
/// Species concentrations span many orders of magnitude, so distances are
/// taken between rescaled points. The usual choice is `r = 1 / max(y)` per
/// coordinate over the sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMetric {
    diag: Vec<f64>,
}

impl ScaledMetric {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::param("metric needs at least one coordinate"));
        }
        if let Some((i, r)) = diag.iter().enumerate().find(|(_, r)| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::param(format!("scale factor {i} must be positive, got {r}")));
        }
        Ok(Self { diag })
    }

    pub fn identity(n: usize) -> Self {
        Self { diag: vec![1.0; n] }
    }

    /// `r_b = 1 / max_i |y_ib|` over the rows of `cloud`. Coordinates that
    /// vanish on every sample keep unit scale.
    pub fn from_max_abs(points: &[f64], dim: usize) -> Self {
        let mut max = vec![0.0f64; dim];
        for row in points.chunks_exact(dim) {
            for (m, v) in max.iter_mut().zip(row) {
                *m = m.max(v.abs());
            }
        }
        Self { diag: max.into_iter().map(|m| if m > 0.0 { 1.0 / m } else { 1.0 }).collect() }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn scale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.diag).map(|(v, r)| v * r).collect()
    }

    pub fn squared_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.diag)
            .map(|((x, y), r)| {
                let d = r * (x - y);
                d * d
            })
            .sum()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.squared_distance(a, b).sqrt()
    }
}

/// Where a sample came from: the trajectory it was harvested from and the
/// time at which it was recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub trajectory: usize,
    pub time: f64,
}

/// `M` samples in `n`-dimensional ambient space, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<f64>,
    dim: usize,
    metric: ScaledMetric,
    names: Vec<String>,
    provenance: Option<Vec<Provenance>>,
    labels: Option<Labels>,
}

/// Ground-truth generating coordinates for synthetic clouds.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub names: Vec<String>,
    /// Row-major, one row per point.
    pub values: Vec<f64>,
}

impl Labels {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.dim();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.chunks_exact(self.dim()).map(|r| r[j]).collect()
    }
}

impl PointCloud {
    /// Builds a cloud with the identity metric and default coordinate names.
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        Self::with_metric(points, dim, ScaledMetric::identity(dim.max(1)))
    }

    pub fn with_metric(points: Vec<f64>, dim: usize, metric: ScaledMetric) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("ambient dimension must be at least 1"));
        }
        if !points.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not form rows of length {dim}",
                points.len()
            )));
        }
        if metric.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "metric has {} scales for {dim} coordinates",
                metric.dim()
            )));
        }
        if let Some(k) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: k / dim, col: k % dim });
        }
        let names = (1..=dim).map(|i| format!("y{i}")).collect();
        Ok(Self { points, dim, metric, names, provenance: None, labels: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch("rows differ in length".into()));
        }
        Self::new(rows.concat(), dim.max(1))
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} coordinates",
                names.len(),
                self.dim
            )));
        }
        self.names = names;
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: Vec<Provenance>) -> Result<Self> {
        if provenance.len() != self.len() {
            return Err(Error::DimensionMismatch("provenance length differs from cloud".into()));
        }
        self.provenance = Some(provenance);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.values.len() != labels.dim() * self.len() {
            return Err(Error::DimensionMismatch("label rows differ from cloud".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Replaces the metric (for example after computing the max-abs rescaling).
    pub fn set_metric(&mut self, metric: ScaledMetric) -> Result<()> {
        if metric.dim() != self.dim {
            return Err(Error::DimensionMismatch("metric dimension differs from cloud".into()));
        }
        self.metric = metric;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> &ScaledMetric {
        &self.metric
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn provenance(&self) -> Option<&[Provenance]> {
        self.provenance.as_deref()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.metric.distance(self.row(i), self.row(j))
    }

    /// Rows scaled by the metric, row-major.
    pub fn scaled_points(&self) -> Vec<f64> {
        self.rows().flat_map(|r| self.metric.scale(r)).collect()
    }

    /// Keeps the rows at `indices`, in that order, with their provenance and labels.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let points = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        let provenance =
            self.provenance.as_ref().map(|p| indices.iter().map(|&i| p[i]).collect());
        let labels = self.labels.as_ref().map(|l| Labels {
            names: l.names.clone(),
            values: indices.iter().flat_map(|&i| l.row(i).iter().copied()).collect(),
        });
        PointCloud {
            points,
            dim: self.dim,
            metric: self.metric.clone(),
            names: self.names.clone(),
            provenance,
            labels,
        }
    }

    /// A copy whose rows are permuted so that new row `k` is old row `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> PointCloud {
        self.select(perm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_distance_matches_hand_value() {
        let m = ScaledMetric::new(vec![1.0, 0.5]).unwrap();
        let d = m.distance(&[1.0, 0.0], &[0.0, 2.0]);
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_scale() {
        assert!(ScaledMetric::new(vec![1.0, 0.0]).is_err());
        assert!(ScaledMetric::new(vec![-1.0]).is_err());
    }

    #[test]
    fn max_abs_rescaling() {
        let m = ScaledMetric::from_max_abs(&[1.0, 0.0, 4.0, 0.0], 2);
        assert_eq!(m.diag(), &[0.25, 1.0]);
    }

    #[test]
    fn non_finite_row_is_reported() {
        let err = PointCloud::new(vec![0.0, 1.0, f64::NAN, 2.0], 2).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0 }));
    }
}
