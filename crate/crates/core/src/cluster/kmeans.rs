use super::gmm::{kmeans_pp, validate_vectors};
use crate::error::Result;
use crate::numerics::rng;

pub const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITER: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centres: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn nearest(x: &[f64], centres: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centres.iter().enumerate() {
        let d: f64 = x.iter().zip(centre).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(vectors: &[Vec<f64>], mut centres: Vec<Vec<f64>>) -> KMeansResult {
    let dim = vectors[0].len();
    let mut assignments = vec![usize::MAX; vectors.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (a, x) in assignments.iter_mut().zip(vectors) {
            let (c, _) = nearest(x, &centres);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centres.len()];
        let mut counts = vec![0usize; centres.len()];
        for (&a, x) in assignments.iter().zip(vectors) {
            counts[a] += 1;
            sums[a].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        for (c, centre) in centres.iter_mut().enumerate() {
            // An emptied cluster keeps its previous centre.
            if counts[c] > 0 {
                *centre = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = vectors.iter().map(|x| nearest(x, &centres).1).sum();
    KMeansResult {
        assignments,
        centres,
        inertia,
    }
}

/// Lloyd's algorithm from k-means++ starts; best inertia of 10 restarts.
pub fn kmeans_baseline(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult> {
    validate_vectors(vectors, k)?;
    let mut best: Option<KMeansResult> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut r = rng::stream_indexed(seed, "kmeans-restart", restart as u64);
        let run = lloyd(vectors, kmeans_pp(vectors, k, &mut r));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_obvious_groups() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i / 10) as f64 * 10.0 + (i % 10) as f64 * 0.1])
            .collect();
        let r = kmeans_baseline(&x, 3, 0).unwrap();
        for g in 0..3 {
            let a = r.assignments[g * 10];
            assert!(r.assignments[g * 10..g * 10 + 10].iter().all(|&b| b == a));
        }
        let oracle: f64 = (0..10).map(|i| ((i as f64 - 4.5) * 0.1).powi(2)).sum::<f64>() * 3.0;
        assert!((r.inertia - oracle).abs() < 1e-9);
        assert!(kmeans_baseline(&x, 31, 0).is_err());
        assert!(kmeans_baseline(&x, 1, 0).unwrap().assignments.iter().all(|&a| a == 0));
        assert_eq!(kmeans_baseline(&x, 3, 5).unwrap(), kmeans_baseline(&x, 3, 5).unwrap());
    }

    #[test]
    fn separated_blobs_score_perfectly() {
        let mut x = Vec::new();
        let mut truth = Vec::new();
        for i in 0..80 {
            let c = i % 2;
            x.push(vec![c as f64 * 20.0 + (i as f64 * 0.91).sin(), (i as f64 * 0.37).cos()]);
            truth.push(c);
        }
        let r = kmeans_baseline(&x, 2, 0).unwrap();
        assert_eq!(crate::cluster::ari(&truth, &r.assignments).unwrap(), 1.0);
    }
}
