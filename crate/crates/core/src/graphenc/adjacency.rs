use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numerics::rng::Rng;
use crate::numerics::Tensor;

fn check_adjacency(a: &Tensor) -> Result<usize> {
    let (n, m) = a.dims2("normalize_adjacency")?;
    if n != m {
        return Err(Error::contract(format!(
            "adjacency must be square, got {:?}",
            a.shape()
        )));
    }
    for i in 0..n {
        if a.get2(i, i) != 0.0 {
            return Err(Error::contract(format!("adjacency has a self-loop at node {i}")));
        }
        for j in 0..i {
            if a.get2(i, j) != a.get2(j, i) {
                return Err(Error::contract(format!("adjacency is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(n)
}

/// `D^-1/2 (A + I) D^-1/2` with `D` the degree matrix of `A + I`.
pub fn normalize_adjacency(a: &Tensor) -> Result<Tensor> {
    let n = check_adjacency(a)?;
    let mut tilde = a.clone();
    for i in 0..n {
        tilde.data_mut()[i * n + i] = 1.0;
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / tilde.row_slice(i).iter().sum::<f64>().sqrt())
        .collect();
    let mut out = tilde;
    for i in 0..n {
        for j in 0..n {
            out.data_mut()[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(out)
}

/// Edges of the labelled tree encoded by a Prüfer sequence over `0..n`.
pub fn prufer_decode(seq: &[usize], n: usize) -> Result<Vec<(usize, usize)>> {
    if n < 2 || seq.len() != n - 2 {
        return Err(Error::contract(format!(
            "a Prüfer sequence for {n} nodes has length {}, got {}",
            n.saturating_sub(2),
            seq.len()
        )));
    }
    if let Some(&bad) = seq.iter().find(|&&v| v >= n) {
        return Err(Error::contract(format!(
            "Prüfer entry {bad} out of range for {n} nodes"
        )));
    }
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let Reverse(leaf) = leaves.pop().expect("a tree always has a leaf");
        edges.push((leaf, v));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.push(Reverse(v));
        }
    }
    let Reverse(a) = leaves.pop().expect("two nodes remain");
    let Reverse(b) = leaves.pop().expect("two nodes remain");
    edges.push((a, b));
    Ok(edges)
}

pub fn edges_to_adjacency(n: usize, edges: &[(usize, usize)]) -> Tensor {
    let mut a = Tensor::zeros(&[n, n]);
    for &(u, v) in edges {
        a.data_mut()[u * n + v] = 1.0;
        a.data_mut()[v * n + u] = 1.0;
    }
    a
}

/// Uniformly random labelled tree on `n` nodes, as an adjacency matrix.
pub fn sample_negative_tree(n: usize, rng: &mut Rng) -> Result<Tensor> {
    if n < 2 {
        return Err(Error::contract(format!("random trees need at least 2 nodes, got {n}")));
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    Ok(edges_to_adjacency(n, &prufer_decode(&seq, n)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;

    #[test]
    fn single_node() {
        let a = normalize_adjacency(&Tensor::zeros(&[1, 1])).unwrap();
        assert_eq!(a.data(), &[1.0]);
    }

    #[test]
    fn two_node_path() {
        let a = normalize_adjacency(&edges_to_adjacency(2, &[(0, 1)])).unwrap();
        assert!(a.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn three_node_path() {
        let a = normalize_adjacency(&edges_to_adjacency(3, &[(0, 1), (1, 2)])).unwrap();
        let s6 = 1.0 / 6f64.sqrt();
        let expected = [0.5, s6, 0.0, s6, 1.0 / 3.0, s6, 0.0, s6, 0.5];
        for (x, e) in a.data().iter().zip(expected) {
            assert!((x - e).abs() < 1e-15);
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let mut a = Tensor::zeros(&[2, 2]);
        a.data_mut()[1] = 1.0;
        assert!(normalize_adjacency(&a).is_err());
    }

    #[test]
    fn star_from_constant_sequence() {
        let mut edges = prufer_decode(&[0, 0], 4).unwrap();
        edges.iter_mut().for_each(|e| *e = (e.0.max(e.1), e.0.min(e.1)));
        edges.sort();
        assert_eq!(edges, vec![(1, 0), (2, 0), (3, 0)]);
    }

    #[test]
    fn two_nodes_single_edge() {
        let a = sample_negative_tree(2, &mut rng::stream(0, "t")).unwrap();
        assert_eq!(a.data(), &[0.0, 1.0, 1.0, 0.0]);
        assert!(sample_negative_tree(1, &mut rng::stream(0, "t")).is_err());
    }
}
