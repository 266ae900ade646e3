use crate::error::{CiqError, Result};

/// Compressed sparse row matrix used for the image stencils.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl StencilMatrix {
    /// Builds from per-row `(column, value)` lists. Duplicate columns in a
    /// row are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|&(c, _)| c);
            let start = indices.len();
            for (c, v) in row {
                debug_assert!(c < ncols);
                if indices.len() > start && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: rows.len(),
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "stencil input length");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows, "stencil transpose input length");
        let mut out = vec![0.0; self.ncols];
        for (i, &yi) in y.iter().enumerate() {
            for (c, v) in self.row(i) {
                out[c] += v * yi;
            }
        }
        out
    }

    /// Row sums of the matrix.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Diagonal of `SᵀS`, i.e. squared column norms.
    pub fn gram_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.ncols];
        for (c, v) in self.indices.iter().zip(&self.values) {
            d[*c] += v * v;
        }
        d
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in m.iter_mut().enumerate() {
            for (c, v) in self.row(i) {
                row[c] += v;
            }
        }
        m
    }

    /// Composite `self · other`.
    pub fn compose(&self, other: &StencilMatrix) -> StencilMatrix {
        assert_eq!(self.ncols, other.nrows);
        let rows = (0..self.nrows)
            .map(|i| {
                self.row(i)
                    .flat_map(|(k, a)| other.row(k).map(move |(c, b)| (c, a * b)))
                    .collect()
            })
            .collect();
        StencilMatrix::from_rows(other.ncols, rows)
    }
}

/// Index reflection with the edge sample duplicated: `d c b a | a b c d | d c b a`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn convolve_stencil(n: usize, kernel: &[f64], size: usize) -> StencilMatrix {
    let half = (size / 2) as isize;
    let rows = (0..n * n)
        .map(|p| {
            let (r, c) = ((p / n) as isize, (p % n) as isize);
            let mut row = Vec::with_capacity(size * size);
            for dy in 0..size {
                for dx in 0..size {
                    let rr = reflect(r + dy as isize - half, n);
                    let cc = reflect(c + dx as isize - half, n);
                    row.push((rr * n + cc, kernel[dy * size + dx]));
                }
            }
            row
        })
        .collect();
    StencilMatrix::from_rows(n * n, rows)
}

/// Normalized 2-D Gaussian sampled on a `size × size` grid.
pub fn gaussian_filter(size: usize, std: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size * size)
        .map(|p| {
            let y = (p / size) as f64 - half;
            let x = (p % size) as f64 - half;
            (-(x * x + y * y) / (2.0 * std * std)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub const LAPLACIAN_FILTER: [f64; 9] = [
    1.0 / 12.0,
    2.0 / 12.0,
    1.0 / 12.0,
    2.0 / 12.0,
    -12.0 / 12.0,
    2.0 / 12.0,
    1.0 / 12.0,
    2.0 / 12.0,
    1.0 / 12.0,
];

pub const BLUR_SIZE: usize = 5;
pub const BLUR_STD: f64 = 2.5;

/// Blur, decimation and Laplacian for `n_high × n_high` images observed as
/// `n_images` shifted `n_low × n_low` copies. Pixels are stored row-major.
#[derive(Debug, Clone)]
pub struct ImageOperators {
    pub n_high: usize,
    pub n_low: usize,
    pub n_images: usize,
    pub blur: StencilMatrix,
    pub decimate: StencilMatrix,
    pub laplacian: StencilMatrix,
}

impl ImageOperators {
    pub fn new(n_high: usize, n_low: usize, n_images: usize) -> Result<Self> {
        if n_high == 0 || n_low == 0 || n_images == 0 {
            return Err(CiqError::invalid("image sizes and image count must be positive"));
        }
        if n_high % n_low != 0 {
            return Err(CiqError::invalid(format!(
                "high-resolution size {n_high} is not divisible by low-resolution size {n_low}"
            )));
        }
        let f = n_high / n_low;
        let m2 = n_low * n_low;
        let mut rows = Vec::with_capacity(n_images * m2);
        for r in 0..n_images {
            let (oy, ox) = decimation_offset(r, f);
            for i in 0..n_low {
                for j in 0..n_low {
                    rows.push(vec![((i * f + oy) * n_high + j * f + ox, 1.0)]);
                }
            }
        }
        Ok(Self {
            n_high,
            n_low,
            n_images,
            blur: convolve_stencil(n_high, &gaussian_filter(BLUR_SIZE, BLUR_STD), BLUR_SIZE),
            decimate: StencilMatrix::from_rows(n_high * n_high, rows),
            laplacian: convolve_stencil(n_high, &LAPLACIAN_FILTER, 3),
        })
    }

    /// Replaces the blur with the identity (pure decimation).
    pub fn without_blur(mut self) -> Self {
        self.blur = StencilMatrix::identity(self.n_high * self.n_high);
        self
    }

    pub fn high_len(&self) -> usize {
        self.n_high * self.n_high
    }

    pub fn obs_len(&self) -> usize {
        self.n_images * self.n_low * self.n_low
    }

    /// `A x = D (B x)`.
    pub fn observe(&self, x: &[f64]) -> Vec<f64> {
        self.decimate.apply(&self.blur.apply(x))
    }

    /// `Aᵀ y = Bᵀ (Dᵀ y)`.
    pub fn observe_transpose(&self, y: &[f64]) -> Vec<f64> {
        self.blur.apply_transpose(&self.decimate.apply_transpose(y))
    }

    /// `A = D·B` as an explicit sparse matrix.
    pub fn observation_matrix(&self) -> StencilMatrix {
        self.decimate.compose(&self.blur)
    }
}

/// Sub-pixel offset `(row, col)` of low-resolution image `r` for decimation
/// factor `f`. Offsets walk the `f × f` raster row by row and wrap after `f²`.
pub fn decimation_offset(r: usize, f: usize) -> (usize, usize) {
    let r = r % (f * f);
    (r / f, r % f)
}

pub fn build_image_operators(n_high: usize, n_low: usize, n_images: usize) -> Result<ImageOperators> {
    ImageOperators::new(n_high, n_low, n_images)
}
