use std::fmt;

use super::DiffError;

/// Shape of a 2-D `batch × feature` array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.rows, self.cols)
    }
}

/// Dense row-major real array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DiffError> {
        if rows == 0 || cols == 0 {
            return Err(DiffError::EmptyShape { rows, cols });
        }
        if rows * cols != data.len() {
            return Err(DiffError::DataLength {
                shape: Shape::new(rows, cols),
                len: data.len(),
            });
        }
        Ok(Self {
            shape: Shape::new(rows, cols),
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be positive");
        Self {
            shape: Shape::new(rows, cols),
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    /// Builds a tensor from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, DiffError> {
        let n = rows.len();
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(DiffError::ShapeMismatch {
                    op: "from_rows",
                    left: Shape::new(1, cols),
                    right: Shape::new(1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(n, cols, data)
    }

    pub fn row_vector(values: &[f64]) -> Result<Self, DiffError> {
        Self::new(1, values.len(), values.to_vec())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.shape.cols;
        &self.data[row * c..(row + 1) * c]
    }

    /// Value of a 1×1 tensor.
    pub fn item(&self) -> Result<f64, DiffError> {
        if self.shape.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(DiffError::NotScalar { shape: self.shape })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise `c · self`.
    pub fn scale(&self, c: f64) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| v * c).collect() }
    }
}
