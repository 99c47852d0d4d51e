use super::{GradError, Scalar};

/// Dense row-major array. Every tensor is treated as a matrix whose column
/// count is the last dimension and whose row count is the product of the
/// remaining dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    values: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, values: Vec<S>) -> Result<Self, GradError> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != values.len() {
            return Err(GradError::Shape {
                op: "tensor",
                detail: format!(
                    "shape {:?} needs {} values, got {}",
                    shape,
                    expected,
                    values.len()
                ),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<S>) -> Result<Self, GradError> {
        Self::new(vec![rows, cols], values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::full(rows, cols, S::zero())
    }

    pub fn full(rows: usize, cols: usize, v: S) -> Self {
        Self {
            shape: vec![rows, cols],
            values: vec![v; rows * cols],
        }
    }

    pub fn scalar(v: S) -> Self {
        Self {
            shape: vec![1, 1],
            values: vec![v],
        }
    }

    pub fn row(values: Vec<S>) -> Self {
        Self {
            shape: vec![1, values.len()],
            values,
        }
    }

    pub fn column(values: Vec<S>) -> Self {
        Self {
            shape: vec![values.len(), 1],
            values,
        }
    }

    /// Stacks equally long rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            values.extend_from_slice(r);
        }
        Self {
            shape: vec![rows.len(), cols],
            values,
        }
    }

    pub fn from_f64(rows: usize, cols: usize, values: &[f64]) -> Self {
        assert_eq!(rows * cols, values.len());
        Self {
            shape: vec![rows, cols],
            values: values.iter().map(|&v| S::lit(v)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    pub fn rows(&self) -> usize {
        let c = self.cols();
        if c == 0 {
            0
        } else {
            self.values.len() / c
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.values[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }

    /// Value of a 1x1 tensor (or the first element otherwise).
    pub fn item(&self) -> S {
        self.values[0]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows() == other.rows() && self.cols() == other.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64()).collect()
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }
}
