use crate::error::{Error, Result};

/// Dense row-major `f64` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} needs {len} values, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: Vec::new(), data: vec![v] }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Rows of a matrix; a vector counts as one row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows())
            .map(|i| {
                let r = self.row(i);
                let mut best = 0;
                for (j, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Compressed sparse row matrix used as a constant operand.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(Error::Shape(format!("entry ({r}, {c}) outside {rows}x{cols}")));
        }
        triplets.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(SparseMatrix { rows, cols, indptr, indices, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn transpose(&self) -> SparseMatrix {
        let triplets = (0..self.rows).flat_map(|r| self.row_entries(r).map(move |(c, v)| (c, r, v))).collect();
        SparseMatrix::from_triplets(self.cols, self.rows, triplets).expect("transpose in bounds")
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(vec![self.rows, self.cols]);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                t.data[r * self.cols + c] += v;
            }
        }
        t
    }

    /// `self · dense`.
    pub fn matmul(&self, dense: &Tensor) -> Tensor {
        let h = dense.cols();
        let mut out = Tensor::zeros(vec![self.rows, h]);
        for r in 0..self.rows {
            let (head, _) = out.data.split_at_mut((r + 1) * h);
            let dst = &mut head[r * h..];
            for (c, v) in self.row_entries(r) {
                for (o, x) in dst.iter_mut().zip(dense.row(c)) {
                    *o += v * x;
                }
            }
        }
        out
    }
}

/// `a · b` for matrices. Zero entries of `a` are skipped, which pays off for
/// the sparse hashed and histogram input features.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let dst = &mut out[i * m..(i + 1) * m];
        for (p, &av) in a.row(i).iter().enumerate().take(k) {
            if av == 0.0 {
                continue;
            }
            for (o, bv) in dst.iter_mut().zip(b.row(p)) {
                *o += av * bv;
            }
        }
    }
    Tensor { shape: vec![n, m], data: out }
}

/// `a · bᵀ`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m) = (a.rows(), b.rows());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let ar = a.row(i);
        for j in 0..m {
            out[i * m + j] = ar.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    Tensor { shape: vec![n, m], data: out }
}

/// `aᵀ · b`.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (k, m) = (a.cols(), b.cols());
    let mut out = vec![0.0; k * m];
    for i in 0..a.rows() {
        let br = b.row(i);
        for (p, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, bv) in out[p * m..(p + 1) * m].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    Tensor { shape: vec![k, m], data: out }
}
