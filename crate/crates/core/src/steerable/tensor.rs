use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::o3::{transform_rows, GroupElement, IrrepsLayout};
use crate::tensor::DenseTensor;

/// Batched steerable vectors: a dense buffer whose trailing extent is the
/// layout dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteerableTensor {
    layout: IrrepsLayout,
    data: DenseTensor,
}

impl SteerableTensor {
    pub fn new(layout: IrrepsLayout, data: DenseTensor) -> Result<Self> {
        if data.shape().last() != Some(&layout.dim()) {
            return Err(Error::Shape(format!(
                "trailing extent of {:?} does not match layout {layout} (dim {})",
                data.shape(),
                layout.dim()
            )));
        }
        Ok(Self { layout, data })
    }

    /// `rows × layout.dim()` tensor from a flat row-major buffer.
    pub fn from_rows(layout: IrrepsLayout, rows: usize, data: Vec<f64>) -> Result<Self> {
        let dim = layout.dim();
        Self::new(layout, DenseTensor::new(vec![rows, dim], data)?)
    }

    pub fn zeros(layout: IrrepsLayout, batch: &[usize]) -> Self {
        let mut shape = batch.to_vec();
        shape.push(layout.dim());
        Self {
            layout,
            data: DenseTensor::zeros(shape),
        }
    }

    pub fn layout(&self) -> &IrrepsLayout {
        &self.layout
    }

    pub fn data(&self) -> &DenseTensor {
        &self.data
    }

    pub fn into_data(self) -> DenseTensor {
        self.data
    }

    pub fn batch(&self) -> &[usize] {
        let s = self.data.shape();
        &s[..s.len() - 1]
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.data.row(r)
    }

    /// Copy with every row acted on by `g`.
    pub fn transformed(&self, g: &GroupElement) -> Self {
        let mut out = self.clone();
        transform_rows(&self.layout, g, out.data.data_mut());
        out
    }
}
