//! Tensor grids and discrete probability measures on them.

use serde::Serialize;

use crate::error::MeasureError;

/// Tolerance on the total mass of a [`GridMeasure`].
pub const MASS_TOL: f64 = 1e-12;

/// One axis of cell-centred points on `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self, MeasureError> {
        if cells == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(MeasureError::BadAxis);
        }
        Ok(Self { lo, hi, cells })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|k| self.center(k)).collect()
    }
}

/// Cartesian product of axes; the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorGrid {
    pub axes: Vec<Axis>,
}

impl TensorGrid {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self { axes }
    }

    /// Same axis repeated `dim` times.
    pub fn cube(lo: f64, hi: f64, cells: usize, dim: usize) -> Result<Self, MeasureError> {
        let axis = Axis::new(lo, hi, cells)?;
        Ok(Self { axes: vec![axis; dim] })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::width).product()
    }

    /// Multi-index of the flat index `k`.
    pub fn unravel(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (slot, axis) in idx.iter_mut().zip(&self.axes).rev() {
            *slot = k % axis.cells;
            k /= axis.cells;
        }
        idx
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        self.unravel(k).iter().zip(&self.axes).map(|(&i, a)| a.center(i)).collect()
    }

    /// All points, flattened row-major (`len * dim` values).
    pub fn flat_points(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.dim());
        for k in 0..self.len() {
            out.extend(self.point(k));
        }
        out
    }

    /// Whether `x` lies at least `margin` cells inside every face.
    pub fn contains_with_margin(&self, x: &[f64], margin: f64) -> bool {
        x.iter().zip(&self.axes).all(|(&v, a)| {
            let m = margin * a.width();
            v > a.lo + m && v < a.hi - m
        })
    }
}

/// Probability weights on a finite set of points in `R^dim`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    /// Cell volume when the points are centres of a uniform tensor grid.
    cell_volume: Option<f64>,
}

impl GridMeasure {
    /// Validate weights (non-negative, unit mass) and distinct points.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if dim == 0 || points.len() != dim * weights.len() {
            return Err(MeasureError::LengthMismatch {
                points: points.len().checked_div(dim).unwrap_or(0),
                weights: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(MeasureError::BadWeight(i));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL * (weights.len() as f64).sqrt().max(1.0) {
            return Err(MeasureError::NotNormalized(total));
        }
        let m = Self { dim, points, weights, cell_volume: None };
        if m.has_duplicate_points() {
            return Err(MeasureError::DuplicatePoints);
        }
        Ok(m)
    }

    /// Weights on the centres of `grid`, remembering the cell volume.
    pub fn on_grid(grid: &TensorGrid, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if weights.len() != grid.len() {
            return Err(MeasureError::LengthMismatch { points: grid.len(), weights: weights.len() });
        }
        let vol = grid.cell_volume();
        if !(vol > 0.0) {
            return Err(MeasureError::ZeroVolume(vol));
        }
        let mut m = Self::new(grid.dim(), grid.flat_points(), weights)?;
        m.cell_volume = Some(vol);
        Ok(m)
    }

    /// Sample a non-negative density at the centres and normalize.
    pub fn from_density(grid: &TensorGrid, density: impl Fn(&[f64]) -> f64) -> Result<Self, MeasureError> {
        let raw: Vec<f64> = (0..grid.len()).map(|k| density(&grid.point(k)).max(0.0)).collect();
        Self::on_grid(grid, normalize(raw)?)
    }

    /// Replace the weights, keeping points and cell volume.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self, MeasureError> {
        let mut m = Self::new(self.dim, self.points.clone(), weights)?;
        m.cell_volume = self.cell_volume;
        Ok(m)
    }

    /// Single point mass.
    pub fn dirac(point: Vec<f64>) -> Self {
        Self { dim: point.len(), points: point, weights: vec![1.0], cell_volume: None }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn flat_points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_volume(&self) -> Option<f64> {
        self.cell_volume
    }

    /// Density value `w_i / vol` on cell `i`.
    pub fn density(&self, i: usize) -> Result<f64, MeasureError> {
        match self.cell_volume {
            Some(v) if v > 0.0 => Ok(self.weights[i] / v),
            other => Err(MeasureError::ZeroVolume(other.unwrap_or(0.0))),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (acc, x) in m.iter_mut().zip(self.point(i)) {
                *acc += w * x;
            }
        }
        m
    }

    /// `int |x|^2 d rho`.
    pub fn second_moment(&self) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| w * self.point(i).iter().map(|x| x * x).sum::<f64>()).sum()
    }

    /// `sum |w_i - v_i|` for measures on the same points.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len(), "measures on different supports");
        self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Mass within `cells` cells of the boundary of `grid`.
    pub fn boundary_mass(&self, grid: &TensorGrid, cells: f64) -> f64 {
        (0..self.len()).filter(|&i| !grid.contains_with_margin(self.point(i), cells)).map(|i| self.weights[i]).sum()
    }

    fn has_duplicate_points(&self) -> bool {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.point(a).partial_cmp(self.point(b)).unwrap_or(std::cmp::Ordering::Equal));
        idx.windows(2).any(|w| self.point(w[0]) == self.point(w[1]))
    }
}

/// Scale non-negative values to unit sum.
pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, MeasureError> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(MeasureError::NotNormalized(total));
    }
    v.iter_mut().for_each(|w| *w /= total);
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_row_major() {
        let g = TensorGrid::new(vec![Axis::new(0.0, 2.0, 2).unwrap(), Axis::new(0.0, 3.0, 3).unwrap()]);
        assert_eq!(g.len(), 6);
        assert_eq!(g.point(0), vec![0.5, 0.5]);
        assert_eq!(g.point(1), vec![0.5, 1.5]);
        assert_eq!(g.point(3), vec![1.5, 0.5]);
        assert!((g.cell_volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn measure_validation() {
        assert!(matches!(GridMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.6]), Err(MeasureError::NotNormalized(_))));
        assert!(matches!(GridMeasure::new(1, vec![0.0, 1.0], vec![-0.5, 1.5]), Err(MeasureError::BadWeight(0))));
        assert!(GridMeasure::new(1, vec![0.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(GridMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn density_and_moments() {
        let g = TensorGrid::cube(-1.0, 1.0, 4, 1).unwrap();
        let m = GridMeasure::from_density(&g, |_| 1.0).unwrap();
        assert!((m.density(0).unwrap() - 0.5).abs() < 1e-15);
        assert!(m.mean()[0].abs() < 1e-15);
        let want = (0.25 * 0.25 * 2.0 + 0.75 * 0.75 * 2.0) / 4.0;
        assert!((m.second_moment() - want).abs() < 1e-15);
    }
}
