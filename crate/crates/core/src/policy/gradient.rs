use std::ops::{Add, AddAssign, Sub};

use super::shape::{GroupKey, PolicyShape};

/// A flat parameter-space vector laid out like a policy's logit table.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    values: Vec<f64>,
    shape: PolicyShape,
}

impl GradientVector {
    pub fn zeros(shape: &PolicyShape) -> Self {
        Self {
            values: vec![0.0; shape.num_params()],
            shape: shape.clone(),
        }
    }

    pub fn from_values(shape: &PolicyShape, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), shape.num_params(), "layout mismatch");
        Self {
            values,
            shape: shape.clone(),
        }
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The entry for `action` in `group`.
    pub fn entry(&self, group: usize, action: usize) -> f64 {
        self.values[group * self.shape.vocab() + action]
    }

    /// Coordinates of flat entry `index`.
    pub fn key(&self, index: usize) -> (GroupKey, usize) {
        let v = self.shape.vocab();
        (self.shape.group_key(index / v), index % v)
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &GradientVector) -> f64 {
        assert_eq!(self.shape, other.shape, "layout mismatch");
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &GradientVector) -> f64 {
        (self - other).max_abs()
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &GradientVector, factor: f64) {
        assert_eq!(self.shape, other.shape, "layout mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Sum of the entries in each softmax group.
    pub fn group_sums(&self) -> Vec<f64> {
        self.values.chunks(self.shape.vocab()).map(|c| c.iter().sum()).collect()
    }

    pub fn cosine(&self, other: &GradientVector) -> f64 {
        self.dot(other) / (self.norm() * other.norm())
    }
}

impl Sub for &GradientVector {
    type Output = GradientVector;

    fn sub(self, rhs: &GradientVector) -> GradientVector {
        let mut out = self.clone();
        out.add_scaled(rhs, -1.0);
        out
    }
}

impl Add for &GradientVector {
    type Output = GradientVector;

    fn add(self, rhs: &GradientVector) -> GradientVector {
        let mut out = self.clone();
        out.add_scaled(rhs, 1.0);
        out
    }
}

impl AddAssign<&GradientVector> for GradientVector {
    fn add_assign(&mut self, rhs: &GradientVector) {
        self.add_scaled(rhs, 1.0);
    }
}
