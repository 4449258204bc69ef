//! Dense row-major `f64` arrays.
//!
//! `Array` is the plain, thread-safe value type. It carries no graph
//! provenance; see [`crate::autodiff::Tensor`] for the recorded counterpart.
//! Serialized form is a nested JSON array following the shape (a bare number
//! for rank-0).

use serde::de::Error as _;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape {
                op: "array",
                shapes: vec![shape, vec![data.len()]],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: Vec<usize>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn eye(n: usize) -> Self {
        let mut a = Self::zeros(vec![n, n]);
        for i in 0..n {
            a.data[i * n + i] = 1.0;
        }
        a
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a single-element array.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshaped(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::Shape {
                op: "reshape",
                shapes: vec![self.shape, shape],
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                op: "zip",
                shapes: vec![self.shape.clone(), other.shape.clone()],
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product of two rank-2 arrays.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::Shape {
                op: "matmul",
                shapes: vec![self.shape.clone(), other.shape.clone()],
            });
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[l * n..(l + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Self::matrix(m, n, out)
    }

    /// Matrix-vector product `A v` for rank-2 `A` and rank-1 `v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.shape.len() != 2 || self.shape[1] != v.len() {
            return Err(Error::Shape {
                op: "matvec",
                shapes: vec![self.shape.clone(), vec![v.len()]],
            });
        }
        let k = self.shape[1];
        Ok(self
            .data
            .chunks(k)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn transpose(&self) -> Result<Self> {
        if self.shape.len() != 2 {
            return Err(Error::Shape {
                op: "transpose",
                shapes: vec![self.shape.clone()],
            });
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::matrix(n, m, out)
    }
}

struct Nested<'a> {
    shape: &'a [usize],
    data: &'a [f64],
}

impl Serialize for Nested<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.shape.split_first() {
            None => s.serialize_f64(self.data[0]),
            Some((&n, rest)) => {
                let stride: usize = rest.iter().product();
                let mut seq = s.serialize_seq(Some(n))?;
                for i in 0..n {
                    seq.serialize_element(&Nested {
                        shape: rest,
                        data: &self.data[i * stride..(i + 1) * stride],
                    })?;
                }
                seq.end()
            }
        }
    }
}

impl Serialize for Array {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        Nested {
            shape: &self.shape,
            data: &self.data,
        }
        .serialize(s)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NestedValue {
    Num(f64),
    List(Vec<NestedValue>),
}

fn flatten_nested(
    v: NestedValue,
    depth: usize,
    shape: &mut Vec<usize>,
    out: &mut Vec<f64>,
) -> std::result::Result<(), String> {
    match v {
        NestedValue::Num(x) => {
            if depth != shape.len() {
                return Err("inconsistent nesting depth".into());
            }
            out.push(x);
        }
        NestedValue::List(items) => {
            if depth == shape.len() {
                if depth > 0 && out.len() > 0 {
                    return Err("inconsistent nesting depth".into());
                }
                shape.push(items.len());
            } else if shape[depth] != items.len() {
                return Err(format!(
                    "ragged array: expected {} entries at depth {depth}, found {}",
                    shape[depth],
                    items.len()
                ));
            }
            for item in items {
                flatten_nested(item, depth + 1, shape, out)?;
            }
        }
    }
    Ok(())
}

impl<'de> Deserialize<'de> for Array {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = NestedValue::deserialize(d)?;
        let mut shape = Vec::new();
        let mut data = Vec::new();
        flatten_nested(v, 0, &mut shape, &mut data).map_err(D::Error::custom)?;
        // Empty trailing dimensions never reach a leaf.
        if data.is_empty() && shape.iter().product::<usize>() != 0 {
            return Err(D::Error::custom("empty array with non-zero shape"));
        }
        Array::new(shape, data).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_json_round_trip() {
        let a = Array::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 0.1 + 0.2]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[1.0,2.0,3.0],[4.0,5.0,0.30000000000000004]]");
        let b: Array = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
        let c: Array = serde_json::from_str("2.5").unwrap();
        assert_eq!(c.shape(), &[] as &[usize]);
    }

    #[test]
    fn ragged_json_rejected() {
        assert!(serde_json::from_str::<Array>("[[1.0],[2.0,3.0]]").is_err());
        assert!(serde_json::from_str::<Array>("[[1.0],2.0]").is_err());
    }

    #[test]
    fn matmul_identity() {
        let x = Array::matrix(2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(Array::eye(2).matmul(&x).unwrap(), x);
        assert!(x.matmul(&x).is_err());
    }
}
