use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::Matrix;
use crate::shared_control::Bounds;

/// Spans narrower than this are treated as constant.
pub const DEGENERATE_SPAN: f64 = 1e-9;

/// Per-dimension affine map `x ↦ (x − offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            offset: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Maps the observed `[min, max]` of every column onto `[−1, 1]`.
    /// Degenerate columns keep unit scale and are centred on their value.
    pub fn fit(data: &Matrix) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::Empty("normalizer data"));
        }
        let dim = data.cols();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for i in 0..data.rows() {
            for (j, &v) in data.row(i).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("non-finite value in column {j}")));
                }
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let mut map = Self::identity(dim);
        for j in 0..dim {
            if hi[j] - lo[j] < DEGENERATE_SPAN {
                map.offset[j] = lo[j];
            } else {
                map.offset[j] = 0.5 * (hi[j] + lo[j]);
                map.scale[j] = 0.5 * (hi[j] - lo[j]);
            }
        }
        Ok(map)
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| (v - o) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| v * s + o)
            .collect()
    }

    pub fn forward_rows(&self, data: &Matrix) -> Result<Matrix> {
        if data.cols() != self.dim() {
            return Err(shape_err(format!(
                "normalizer of width {} applied to {} columns",
                self.dim(),
                data.cols()
            )));
        }
        let mut out = data.clone();
        for i in 0..out.rows() {
            let z = self.forward(data.row(i));
            out.row_mut(i).copy_from_slice(&z);
        }
        Ok(out)
    }

    /// Image of `bounds` under the map.
    pub fn map_bounds(&self, bounds: &Bounds) -> Result<Bounds> {
        Bounds::new(self.forward(&bounds.low), self.forward(&bounds.high))
    }

    fn validate(&self) -> Result<()> {
        if self.offset.len() != self.scale.len() {
            return Err(shape_err("offset and scale differ in length"));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("normalizer scales must be positive".into()));
        }
        Ok(())
    }
}

/// Separate affine maps for states and actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub state: AffineMap,
    pub action: AffineMap,
}

impl Normalizer {
    pub fn identity(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state: AffineMap::identity(state_dim),
            action: AffineMap::identity(action_dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.state.validate()?;
        self.action.validate()
    }
}

/// Fits both maps to a set of `(state, action)` rows.
pub fn fit_normalizer(samples: &Samples) -> Result<Normalizer> {
    if samples.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    Ok(Normalizer {
        state: AffineMap::fit(&samples.states)?,
        action: AffineMap::fit(&samples.actions)?,
    })
}

/// Paired state and action rows used for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub states: Matrix,
    pub actions: Matrix,
}

impl Samples {
    pub fn new(states: Matrix, actions: Matrix) -> Result<Self> {
        if states.rows() != actions.rows() {
            return Err(shape_err("states and actions differ in count"));
        }
        Ok(Self { states, actions })
    }

    pub fn from_pairs<S: AsRef<[f64]>, A: AsRef<[f64]>>(states: &[S], actions: &[A]) -> Result<Self> {
        if states.is_empty() || states.len() != actions.len() {
            return Err(Error::Empty("dataset"));
        }
        Self::new(Matrix::from_rows(states)?, Matrix::from_rows(actions)?)
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn normalized(&self, norm: &Normalizer) -> Result<Self> {
        Ok(Self {
            states: norm.state.forward_rows(&self.states)?,
            actions: norm.action.forward_rows(&self.actions)?,
        })
    }

    pub(crate) fn select(&self, idx: &[usize]) -> Self {
        Self {
            states: self.states.select_rows(idx),
            actions: self.actions.select_rows(idx),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_span() {
        let data = Matrix::from_rows(&[[-2.0], [0.5], [2.0]]).unwrap();
        let map = AffineMap::fit(&data).unwrap();
        assert_eq!(map.forward(&[-2.0]), vec![-1.0]);
        assert_eq!(map.forward(&[2.0]), vec![1.0]);
        assert_eq!(map.forward(&[0.0]), vec![0.0]);
    }

    #[test]
    fn single_row_is_degenerate() {
        let data = Matrix::from_rows(&[[3.0, -1.0]]).unwrap();
        let map = AffineMap::fit(&data).unwrap();
        assert_eq!(map.scale, vec![1.0, 1.0]);
        assert_eq!(map.offset, vec![3.0, -1.0]);
        assert_eq!(map.forward(&[3.0, -1.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(AffineMap::fit(&Matrix::zeros(0, 2)).is_err());
        assert!(Samples::from_pairs::<Vec<f64>, Vec<f64>>(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn fitted_data_spans_unit_interval(rows in prop::collection::vec(
            prop::collection::vec(-50.0f64..50.0, 3), 2..40)) {
            let data = Matrix::from_rows(&rows).unwrap();
            let map = AffineMap::fit(&data).unwrap();
            let z = map.forward_rows(&data).unwrap();
            for j in 0..3 {
                let col: Vec<f64> = (0..z.rows()).map(|i| z[(i, j)]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let span = (0..data.rows()).map(|i| data[(i, j)]).fold(f64::NEG_INFINITY, f64::max)
                    - (0..data.rows()).map(|i| data[(i, j)]).fold(f64::INFINITY, f64::min);
                if span >= DEGENERATE_SPAN {
                    prop_assert!((lo + 1.0).abs() < 1e-12);
                    prop_assert!((hi - 1.0).abs() < 1e-12);
                }
            }
            for row in &rows {
                let back = map.inverse(&map.forward(row));
                for (a, b) in back.iter().zip(row) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
