use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub mean: Vec<f64>,
    /// Principal directions, one unit vector per row, by decreasing variance.
    pub basis: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub projected: Vec<Vec<f64>>,
}

/// Mean-centred projection onto the top `dims` principal directions. Each
/// direction's sign is fixed so its largest-magnitude entry is positive.
pub fn pca_project(vectors: &[Vec<f64>], dims: usize) -> Result<Projection> {
    let n = vectors.len();
    let d = vectors.first().map(Vec::len).unwrap_or(0);
    if n == 0 || d == 0 {
        return Err(Error::Validation("no vectors to project".into()));
    }
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Validation("vectors have differing dimensions".into()));
    }
    if dims == 0 || dims > d {
        return Err(Error::contract(format!(
            "cannot project {d}-dimensional data onto {dims} components"
        )));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64)
        .collect();
    let centred = DMatrix::from_fn(n, d, |i, j| vectors[i][j] - mean[j]);
    let cov = centred.transpose() * &centred / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(dims);
    let mut explained_variance = Vec::with_capacity(dims);
    for &i in order.iter().take(dims) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        basis.push(v);
        explained_variance.push(eig.eigenvalues[i].max(0.0));
    }
    let projected = vectors
        .iter()
        .map(|x| {
            basis
                .iter()
                .map(|b| b.iter().zip(x).zip(&mean).map(|((bi, xi), m)| bi * (xi - m)).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        mean,
        basis,
        explained_variance,
        projected,
    })
}
