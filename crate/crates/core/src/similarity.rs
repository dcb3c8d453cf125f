//! Embedding batches on the unit hypersphere and their pairwise similarities.
//!
//! The encoder maps inputs onto `S^d`, so cosine similarity between two
//! embeddings is just their dot product. Similarities are divided by a
//! temperature before entering any loss; the losses themselves treat the
//! scaled similarity matrix as given.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// How far a row norm may drift from 1 before the batch is rejected.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Norm below which a vector cannot be projected onto the sphere.
pub const MIN_PROJECTABLE_NORM: f64 = 1e-12;

/// A batch of N unit-norm d-dimensional embeddings with their continuous
/// labels (age, years) and acquisition-site ids.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    vectors: Array2<f64>,
    labels: Vec<f64>,
    sites: Vec<u32>,
}

impl EmbeddingBatch {
    /// Wrap vectors that are already unit-norm (within [`UNIT_NORM_TOL`]).
    pub fn new(vectors: Array2<f64>, labels: Vec<f64>, sites: Vec<u32>) -> Result<Self> {
        let (n, d) = vectors.dim();
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        if d < 2 {
            return Err(Error::InvalidArgument(format!(
                "embedding dimension must be at least 2, got {d}"
            )));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if sites.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: sites.len(),
            });
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::InvalidArgument("labels must be finite".into()));
        }
        for (row, v) in vectors.rows().into_iter().enumerate() {
            let norm = v.dot(&v).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotOnHypersphere { row, norm });
            }
        }
        Ok(Self {
            vectors,
            labels,
            sites,
        })
    }

    /// Project raw (not necessarily unit) vectors row-wise onto the sphere.
    pub fn project(raw: Array2<f64>, labels: Vec<f64>, sites: Vec<u32>) -> Result<Self> {
        let unit = project_rows(&raw)?;
        Self::new(unit, labels, sites)
    }

    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn sites(&self) -> &[u32] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Normalize one vector to unit length.
///
/// Errors on norms below [`MIN_PROJECTABLE_NORM`].
pub fn project_to_sphere(v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let norm = v.dot(&v).sqrt();
    if !norm.is_finite() || norm <= MIN_PROJECTABLE_NORM {
        return Err(Error::ZeroNormRow { row: 0 });
    }
    Ok(v.mapv(|x| x / norm))
}

/// Row-wise sphere projection; the error names the offending row.
pub fn project_rows(raw: &Array2<f64>) -> Result<Array2<f64>> {
    let mut out = raw.clone();
    for (row, mut r) in out.rows_mut().into_iter().enumerate() {
        let norm = r.dot(&r).sqrt();
        if !norm.is_finite() || norm <= MIN_PROJECTABLE_NORM {
            return Err(Error::ZeroNormRow { row });
        }
        r.mapv_inplace(|x| x / norm);
    }
    Ok(out)
}

/// Pairwise similarity matrix `s[i][k] = ⟨z_i, z_k⟩ / temperature`, together
/// with the unit embeddings that produced it (kept so that losses can chain
/// their gradients back to the embeddings).
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
    temperature: f64,
    embeddings: Array2<f64>,
}

impl SimilarityMatrix {
    /// Build from unit-norm rows. Symmetry is exact: each pair is computed
    /// once and mirrored.
    pub fn from_unit_rows(embeddings: Array2<f64>, temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let n = embeddings.nrows();
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        for (row, v) in embeddings.rows().into_iter().enumerate() {
            let norm = v.dot(&v).sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotOnHypersphere { row, norm });
            }
        }
        let mut values = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let zi = embeddings.row(i);
            values[[i, i]] = zi.dot(&zi) / temperature;
            for k in (i + 1)..n {
                let s = zi.dot(&embeddings.row(k)) / temperature;
                values[[i, k]] = s;
                values[[k, i]] = s;
            }
        }
        Ok(Self {
            values,
            temperature,
            embeddings,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn embeddings(&self) -> ArrayView2<'_, f64> {
        self.embeddings.view()
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Temperature-scaled cosine similarity matrix of a batch.
pub fn cosine_similarity_matrix(
    batch: &EmbeddingBatch,
    temperature: f64,
) -> Result<SimilarityMatrix> {
    SimilarityMatrix::from_unit_rows(batch.vectors.clone(), temperature)
}
