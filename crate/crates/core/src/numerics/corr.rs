use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric positive-definite matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim < 1 {
            return Err(Error::InvalidCorrelation("empty matrix".into()));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for r in &rows {
            if r.len() != dim {
                return Err(Error::InvalidCorrelation("matrix is not square".into()));
            }
            entries.extend_from_slice(r);
        }
        let m = Self { dim, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    /// Build from the upper triangle in row order: (1,2), (1,3), ..., (2,3), ...
    pub fn from_pairs(dim: usize, pairs: &[f64]) -> Result<Self> {
        if pairs.len() != dim * (dim - 1) / 2 {
            return Err(Error::LengthMismatch(pairs.len(), dim * (dim - 1) / 2));
        }
        let mut m = Self::identity(dim);
        for (k, (i, j)) in pair_indices(dim).enumerate() {
            m.entries[i * dim + j] = pairs[k];
            m.entries[j * dim + i] = pairs[k];
        }
        m.validate()?;
        Ok(m)
    }

    /// Nearest valid matrix to the given pairwise correlations: eigenvalues are
    /// floored at `floor` and the result is rescaled to unit diagonal.
    pub fn project_pairs(dim: usize, pairs: &[f64], floor: f64) -> Result<Self> {
        if pairs.len() != dim * (dim - 1) / 2 {
            return Err(Error::LengthMismatch(pairs.len(), dim * (dim - 1) / 2));
        }
        let mut a = DMatrix::<f64>::identity(dim, dim);
        for (k, (i, j)) in pair_indices(dim).enumerate() {
            let r = pairs[k].clamp(-0.999_999, 0.999_999);
            a[(i, j)] = r;
            a[(j, i)] = r;
        }
        let eig = SymmetricEigen::new(a.clone());
        if eig.eigenvalues.min() <= floor {
            let lam = eig.eigenvalues.map(|l| l.max(floor));
            let rec =
                &eig.eigenvectors * DMatrix::from_diagonal(&lam) * eig.eigenvectors.transpose();
            for i in 0..dim {
                for j in 0..dim {
                    a[(i, j)] = rec[(i, j)] / (rec[(i, i)] * rec[(j, j)]).sqrt();
                }
            }
        }
        let mut m = Self::identity(dim);
        for i in 0..dim {
            for j in 0..dim {
                if i != j {
                    m.entries[i * dim + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
                }
            }
        }
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim;
        for i in 0..d {
            if (self.get(i, i) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidCorrelation(format!(
                    "diagonal entry {i} is not 1"
                )));
            }
            for j in 0..d {
                let v = self.get(i, j);
                if !v.is_finite() || (v - self.get(j, i)).abs() > 1e-12 {
                    return Err(Error::InvalidCorrelation(format!(
                        "entry ({i},{j}) not symmetric"
                    )));
                }
                if i != j && v.abs() >= 1.0 {
                    return Err(Error::InvalidCorrelation(format!(
                        "entry ({i},{j}) = {v} outside (-1, 1)"
                    )));
                }
            }
        }
        if self.min_eigenvalue() <= 1e-10 {
            return Err(Error::SingularCorrelation);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Upper-triangle entries in row order.
    pub fn pairs(&self) -> Vec<f64> {
        pair_indices(self.dim)
            .map(|(i, j)| self.get(i, j))
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        pair_indices(self.dim).all(|(i, j)| self.get(i, j) == 0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix()).eigenvalues.min()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(|c| c.to_vec()).collect()
    }

    /// Sub-matrix on the given indices (kept in the order given).
    pub fn submatrix(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter()
            .map(|&i| idx.iter().map(|&j| self.get(i, j)).collect())
            .collect()
    }
}

/// Index pairs (i, j), i < j, in row order.
pub fn pair_indices(dim: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..dim).flat_map(move |i| (i + 1..dim).map(move |j| (i, j)))
}

impl TryFrom<Vec<Vec<f64>>> for CorrelationMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<CorrelationMatrix> for Vec<Vec<f64>> {
    fn from(m: CorrelationMatrix) -> Self {
        m.rows()
    }
}
