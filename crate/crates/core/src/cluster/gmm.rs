use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numerics::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Relative change of the mean log-likelihood that counts as converged.
    pub tol: f64,
    pub seed: u64,
    pub var_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
            var_floor: 1e-6,
        }
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub vars: Vec<Vec<f64>>,
    /// Mean per-point log-likelihood after every EM iteration of the kept run.
    pub ll_trace: Vec<f64>,
    /// Final mean log-likelihood of every restart.
    pub restart_ll: Vec<f64>,
    pub best_restart: usize,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// `log w_k + log N(x | μ_k, diag σ²_k)` for every component.
    fn log_joint(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..self.k() {
            let mut s = 0.0;
            for ((xi, m), v) in x.iter().zip(&self.means[k]).zip(&self.vars[k]) {
                let d = xi - m;
                s += (2.0 * PI * v).ln() + d * d / v;
            }
            out[k] = self.weights[k].ln() - 0.5 * s;
        }
    }

    fn check_dim(&self, vectors: &[Vec<f64>]) -> Result<()> {
        if let Some(v) = vectors.iter().find(|v| v.len() != self.dim()) {
            return Err(Error::Shape {
                op: "gmm",
                left: vec![v.len()],
                right: vec![self.dim()],
            });
        }
        Ok(())
    }

    /// Posterior component probabilities, one row per vector.
    pub fn responsibilities(&self, vectors: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(vectors)?;
        let mut lj = vec![0.0; self.k()];
        Ok(vectors
            .iter()
            .map(|x| {
                self.log_joint(x, &mut lj);
                let lse = log_sum_exp(&lj);
                lj.iter().map(|l| (l - lse).exp()).collect()
            })
            .collect())
    }

    /// Most probable component per vector; ties go to the lower index.
    pub fn assign(&self, vectors: &[Vec<f64>]) -> Result<Vec<usize>> {
        self.check_dim(vectors)?;
        let mut lj = vec![0.0; self.k()];
        Ok(vectors
            .iter()
            .map(|x| {
                self.log_joint(x, &mut lj);
                let mut best = 0;
                for k in 1..lj.len() {
                    if lj[k] > lj[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }

    pub fn mean_log_likelihood(&self, vectors: &[Vec<f64>]) -> Result<f64> {
        self.check_dim(vectors)?;
        let mut lj = vec![0.0; self.k()];
        let total: f64 = vectors
            .iter()
            .map(|x| {
                self.log_joint(x, &mut lj);
                log_sum_exp(&lj)
            })
            .sum();
        Ok(total / vectors.len() as f64)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn validate_vectors(vectors: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::contract("need at least one cluster"));
    }
    let dim = vectors.first().map(Vec::len).unwrap_or(0);
    if dim == 0 {
        return Err(Error::Validation("no vectors to cluster".into()));
    }
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Validation("vectors have differing dimensions".into()));
    }
    if vectors.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Numeric("non-finite value in clustering input".into()));
    }
    let mut sorted: Vec<&Vec<f64>> = vectors.iter().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    sorted.dedup();
    if sorted.len() < k {
        return Err(Error::Validation(format!(
            "{} distinct vectors cannot form {k} clusters",
            sorted.len()
        )));
    }
    Ok(dim)
}

/// k-means++ seeding: first centre uniform, the rest with probability
/// proportional to squared distance from the nearest chosen centre.
pub(crate) fn kmeans_pp(vectors: &[Vec<f64>], k: usize, r: &mut Rng) -> Vec<Vec<f64>> {
    let mut centres = vec![vectors[r.random_range(0..vectors.len())].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = r.random_range(0.0..total);
            let mut idx = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            r.random_range(0..vectors.len())
        };
        centres.push(vectors[pick].clone());
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, centres.last().expect("just pushed")));
        }
    }
    centres
}

fn em_run(vectors: &[Vec<f64>], k: usize, dim: usize, config: &GmmConfig, r: &mut Rng) -> GmmModel {
    let n = vectors.len() as f64;
    let mut global_var = vec![0.0; dim];
    let mean: Vec<f64> = (0..dim)
        .map(|d| vectors.iter().map(|v| v[d]).sum::<f64>() / n)
        .collect();
    for v in vectors {
        for d in 0..dim {
            global_var[d] += (v[d] - mean[d]).powi(2) / n;
        }
    }
    let global_var: Vec<f64> = global_var.iter().map(|v| v.max(config.var_floor)).collect();
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(vectors, k, r),
        vars: vec![global_var; k],
        ll_trace: Vec::new(),
        restart_ll: Vec::new(),
        best_restart: 0,
    };
    let mut resp = vec![vec![0.0; k]; vectors.len()];
    let mut prev: Option<f64> = None;
    for _ in 0..config.max_iter {
        // E-step; the log-likelihood is that of the parameters going in.
        let mut ll = 0.0;
        for (x, row) in vectors.iter().zip(resp.iter_mut()) {
            model.log_joint(x, row);
            let lse = log_sum_exp(row);
            ll += lse;
            row.iter_mut().for_each(|l| *l = (*l - lse).exp());
        }
        let ll = ll / n;
        model.ll_trace.push(ll);
        // M-step, accumulated row by row for cache locality.
        let mut nk = vec![0.0; k];
        let mut sums = vec![vec![0.0; dim]; k];
        for (x, row) in vectors.iter().zip(&resp) {
            for c in 0..k {
                nk[c] += row[c];
                for (s, xi) in sums[c].iter_mut().zip(x) {
                    *s += row[c] * xi;
                }
            }
        }
        let live: Vec<bool> = nk.iter().map(|&m| m > 1e-12).collect();
        for c in (0..k).filter(|&c| live[c]) {
            model.means[c] = sums[c].iter().map(|s| s / nk[c]).collect();
            sums[c].iter_mut().for_each(|s| *s = 0.0);
        }
        for (x, row) in vectors.iter().zip(&resp) {
            for c in (0..k).filter(|&c| live[c]) {
                for ((s, xi), m) in sums[c].iter_mut().zip(x).zip(&model.means[c]) {
                    *s += row[c] * (xi - m) * (xi - m);
                }
            }
        }
        for c in 0..k {
            if live[c] {
                model.weights[c] = nk[c] / n;
                model.vars[c] = sums[c].iter().map(|s| (s / nk[c]).max(config.var_floor)).collect();
            } else {
                // An empty component keeps its parameters with a negligible weight.
                model.weights[c] = 1e-300;
            }
        }
        let total: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= total);
        let done = prev.is_some_and(|p| (ll - p).abs() <= config.tol * p.abs().max(1e-12));
        prev = Some(ll);
        if done {
            break;
        }
    }
    // Record the log-likelihood of the final parameters as well.
    let final_ll = model.mean_log_likelihood(vectors).expect("dimensions match");
    model.ll_trace.push(final_ll);
    model
}

/// EM from k-means++ starts; keeps the restart with the highest final
/// log-likelihood (lowest index on ties).
pub fn gmm_fit(vectors: &[Vec<f64>], k: usize, config: &GmmConfig) -> Result<GmmModel> {
    let dim = validate_vectors(vectors, k)?;
    if config.restarts == 0 || config.max_iter == 0 {
        return Err(Error::contract("restarts and max_iter must be positive"));
    }
    let mut best: Option<GmmModel> = None;
    let mut restart_ll = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let mut r = rng::stream_indexed(config.seed, "gmm-restart", restart as u64);
        let mut m = em_run(vectors, k, dim, config, &mut r);
        let ll = *m.ll_trace.last().expect("trace is non-empty");
        restart_ll.push(ll);
        m.best_restart = restart;
        if best
            .as_ref()
            .is_none_or(|b| ll > *b.ll_trace.last().expect("non-empty"))
        {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one restart");
    best.restart_ll = restart_ll;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centres: &[f64], n: usize, sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng::stream(seed, "blobs");
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, &m) in centres.iter().enumerate() {
            let d = Normal::new(m, sd).unwrap();
            for _ in 0..n {
                x.push(vec![d.sample(&mut r)]);
                y.push(c);
            }
        }
        (x, y)
    }

    #[test]
    fn separated_blobs_recover_sample_means() {
        let (x, y) = blobs(&[-5.0, 5.0], 200, 0.5, 1);
        let m = gmm_fit(&x, 2, &GmmConfig::default()).unwrap();
        let mut fitted: Vec<f64> = m.means.iter().map(|v| v[0]).collect();
        fitted.sort_by(f64::total_cmp);
        for (c, f) in fitted.iter().enumerate() {
            let pts: Vec<f64> = x.iter().zip(&y).filter(|(_, &l)| l == c).map(|(v, _)| v[0]).collect();
            let sample_mean = pts.iter().sum::<f64>() / pts.len() as f64;
            assert!((f - sample_mean).abs() < 0.2, "{f} vs {sample_mean}");
        }
        let labels = m.assign(&x).unwrap();
        for (c, mean) in m.means.iter().enumerate() {
            assert_eq!(m.assign(std::slice::from_ref(mean)).unwrap(), vec![c]);
        }
        assert!(labels.iter().all(|&l| l < 2));
    }

    #[test]
    fn single_component_is_global_moments() {
        let x: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i as f64 * 0.7).sin() * 3.0, i as f64 / 7.0])
            .collect();
        let m = gmm_fit(&x, 1, &GmmConfig::default()).unwrap();
        for d in 0..2 {
            let mean = x.iter().map(|v| v[d]).sum::<f64>() / 50.0;
            let var = x.iter().map(|v| (v[d] - mean).powi(2)).sum::<f64>() / 50.0;
            assert!((m.means[0][d] - mean).abs() < 1e-9);
            assert!((m.vars[0][d] - var).abs() < 1e-9);
        }
        assert!((m.weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_is_monotone() {
        let (x, _) = blobs(&[-2.0, 0.0, 1.5, 4.0], 60, 1.0, 2);
        let m = gmm_fit(&x, 4, &GmmConfig::default()).unwrap();
        for w in m.ll_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{} then {}", w[0], w[1]);
        }
        assert_eq!(m.restart_ll.len(), 10);
        let best = m.restart_ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(*m.ll_trace.last().unwrap(), best);
    }

    #[test]
    fn ties_go_to_the_lower_component() {
        let m = GmmModel {
            weights: vec![0.5, 0.5],
            means: vec![vec![-1.0], vec![1.0]],
            vars: vec![vec![1.0], vec![1.0]],
            ll_trace: vec![],
            restart_ll: vec![],
            best_restart: 0,
        };
        assert_eq!(m.assign(&[vec![0.0], vec![0.5]]).unwrap(), vec![0, 1]);
        assert!(m.assign(&[vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn rejects_too_few_distinct_vectors() {
        let x = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            gmm_fit(&x, 3, &GmmConfig::default()),
            Err(Error::Validation(_))
        ));
        assert!(gmm_fit(&x, 2, &GmmConfig::default()).is_ok());
        assert!(gmm_fit(&[], 1, &GmmConfig::default()).is_err());
        assert!(gmm_fit(&[vec![f64::NAN]], 1, &GmmConfig::default()).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let (x, _) = blobs(&[0.0, 3.0], 40, 1.0, 3);
        let c = GmmConfig {
            seed: 9,
            ..GmmConfig::default()
        };
        assert_eq!(gmm_fit(&x, 2, &c).unwrap(), gmm_fit(&x, 2, &c).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn responsibilities_sum_to_one(seed in 0u64..500, k in 1usize..4) {
            let (x, _) = blobs(&[0.0, 2.0, 5.0], 10, 0.8, seed);
            let c = GmmConfig { restarts: 2, seed, ..GmmConfig::default() };
            let m = gmm_fit(&x, k, &c).unwrap();
            for row in m.responsibilities(&x).unwrap() {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            prop_assert!(m.vars.iter().flatten().all(|&v| v >= 1e-6));
        }
    }
}
