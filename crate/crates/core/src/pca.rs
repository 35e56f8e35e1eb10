//! Principal components of the multi-channel ECoG and their AM features.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{compute_am, ColumnMeta, FeatureMatrix};
use crate::recording::Recording;

const COVARIANCE_BLOCK: usize = 4096;

/// Full (untruncated, unwhitened) PCA basis of a set of channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `components[k]` is the unit-norm loading vector of component `k`.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaBasis {
    pub fn n_channels(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Loadings as an `[n_channels × n_components]` matrix.
    pub fn components_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_iterator(
            self.n_channels(),
            self.n_components(),
            self.components.iter().flatten().copied(),
        )
    }

    /// Scores of one component for data laid out `[n_samples × n_channels]`.
    pub fn project_component(&self, data: &DMatrix<f64>, k: usize) -> Vec<f64> {
        let n = data.nrows();
        let mut out = vec![0.0; n];
        for (c, (&w, &m)) in self.components[k].iter().zip(&self.mean).enumerate() {
            let col = &data.as_slice()[c * n..(c + 1) * n];
            for (o, x) in out.iter_mut().zip(col) {
                *o += w * (x - m);
            }
        }
        out
    }

    /// Scores of every component, `[n_samples × n_components]`.
    pub fn project(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = (0..self.n_components())
            .map(|k| self.project_component(data, k))
            .collect();
        DMatrix::from_iterator(data.nrows(), cols.len(), cols.into_iter().flatten())
    }

    /// Maps scores back to channel space.
    pub fn reconstruct(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = scores * self.components_matrix().transpose();
        for (c, m) in self.mean.iter().enumerate() {
            out.column_mut(c).add_scalar_mut(*m);
        }
        out
    }
}

/// Eigendecomposition of the sample covariance of `data` (`[n_samples ×
/// n_channels]`), keeping every component.
///
/// Components are sorted by decreasing variance and signed so that each
/// loading vector's largest-magnitude entry is positive (lowest channel wins
/// ties).
pub fn fit_pca(data: &DMatrix<f64>) -> Result<PcaBasis> {
    let (n, p) = data.shape();
    if n <= p {
        return Err(Error::TooShort {
            what: "samples for PCA (must exceed channel count)",
            needed: p + 1,
            got: n,
        });
    }
    let mean: Vec<f64> = data
        .column_iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    let mut start = 0;
    while start < n {
        let len = COVARIANCE_BLOCK.min(n - start);
        let mut block = data.rows(start, len).into_owned();
        for (c, m) in mean.iter().enumerate() {
            block.column_mut(c).add_scalar_mut(-m);
        }
        cov += block.tr_mul(&block);
        start += len;
    }
    cov /= (n - 1) as f64;

    if cov.trace() <= 0.0 {
        return Err(Error::DegenerateData(
            "every channel is constant; PCA has no variance to explain".into(),
        ));
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(p);
    let mut explained_variance = Vec::with_capacity(p);
    for k in order {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let mut lead = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaBasis {
        mean,
        components,
        explained_variance,
    })
}

/// AM of each principal-component score series.
pub fn pca_am_features(
    recording: &Recording,
    basis: &PcaBasis,
    bin_ms: u32,
) -> Result<FeatureMatrix> {
    if basis.n_channels() != recording.n_channels() {
        return Err(Error::Shape(format!(
            "PCA basis expects {} channels, recording has {}",
            basis.n_channels(),
            recording.n_channels()
        )));
    }
    recording.samples_per_bin(bin_ms)?;
    let series = (0..basis.n_components())
        .into_par_iter()
        .map(|k| pc_am(recording, basis, k, bin_ms))
        .collect::<Result<Vec<_>>>()?;
    let n_bins = series.first().map_or(0, Vec::len);
    let columns = (0..basis.n_components())
        .map(|component| ColumnMeta::PrincipalComponent { component })
        .collect();
    FeatureMatrix::new(
        DMatrix::from_iterator(n_bins, series.len(), series.into_iter().flatten()),
        bin_ms,
        columns,
    )
}

/// AM of a single component's score series.
pub fn pc_am(recording: &Recording, basis: &PcaBasis, k: usize, bin_ms: u32) -> Result<Vec<f64>> {
    let scores = basis.project_component(recording.ecog(), k);
    compute_am(&scores, recording.ecog_rate(), bin_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, stds: &[f64], seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(n, stds.len());
        for c in 0..stds.len() {
            for i in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                m[(i, c)] = stds[c] * z + c as f64;
            }
        }
        m
    }

    #[test]
    fn orthonormal_sorted_and_energy_conserving() {
        let data = gaussian(5000, &[1.0, 3.0, 0.5, 2.0], 1);
        let b = fit_pca(&data).unwrap();
        let v = b.components_matrix();
        let gram = v.tr_mul(&v);
        assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-9);
        assert!(b.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        let total: f64 = (0..4)
            .map(|c| {
                let col = data.column(c);
                let m = col.mean();
                col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4999.0
            })
            .sum();
        let s: f64 = b.explained_variance.iter().sum();
        assert!((s - total).abs() <= 1e-9 * total);
    }

    #[test]
    fn sign_convention() {
        let data = gaussian(2000, &[1.0, 2.0, 3.0], 5);
        let b = fit_pca(&data).unwrap();
        for comp in &b.components {
            let lead = comp.iter().fold(0.0_f64, |m, x| if x.abs() > m.abs() { *x } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn full_basis_reconstructs() {
        let data = gaussian(1000, &[1.0, 2.0, 0.3], 9);
        let b = fit_pca(&data).unwrap();
        let back = b.reconstruct(&b.project(&data));
        assert!((back - &data).amax() < 1e-9);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let data = DMatrix::from_element(100, 3, 4.0);
        assert!(matches!(fit_pca(&data), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn too_few_samples() {
        let data = gaussian(3, &[1.0, 1.0, 1.0], 2);
        assert!(matches!(fit_pca(&data), Err(Error::TooShort { .. })));
    }

    #[test]
    fn axis_aligned_projection_matches_dominant_channel() {
        // Zero sample covariance by construction: the two patterns are
        // orthogonal over every period of four samples.
        let n = 4000;
        let big: Vec<f64> = (0..n).map(|i| if i % 4 < 2 { 4.0 } else { -4.0 }).collect();
        let small: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.25 } else { -0.25 }).collect();
        let r = Recording::new("a", vec![small, big.clone()], 1000, vec![vec![0.0; n / 40]; 5], 25, None)
            .unwrap();
        let b = fit_pca(r.ecog()).unwrap();
        assert!(b.components[0][1].abs() >= 0.999);
        let fm = pca_am_features(&r, &b, 40).unwrap();
        let centered: Vec<f64> = big.iter().map(|x| x - b.mean[1]).collect();
        let expect = compute_am(&centered, 1000, 40).unwrap();
        for (a, e) in fm.column(0).iter().zip(&expect) {
            assert!((a - e).abs() <= 1e-9 * e.abs().max(1.0));
        }
    }
}
