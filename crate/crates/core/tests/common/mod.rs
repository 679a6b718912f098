#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcrg_core::{FeatureMatrix, Graph, Matrix};

/// Erdős–Rényi graph plus a ring, so no node is isolated.
pub fn random_connected(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap().0
}

/// Erdős–Rényi graph that may contain isolated nodes.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap().0
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_features(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
    FeatureMatrix::new(random_matrix(rows, cols, seed)).unwrap()
}

/// Dense adjacency built straight from the edge list.
pub fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for (u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    a
}

/// `A D^-1` with zero columns for isolated nodes.
pub fn dense_column_stochastic(g: &Graph) -> Vec<Vec<f64>> {
    let mut a = dense_adjacency(g);
    let n = a.len();
    for j in 0..n {
        let d: f64 = (0..n).map(|i| a[i][j]).sum();
        if d > 0.0 {
            for row in a.iter_mut() {
                row[j] /= d;
            }
        }
    }
    a
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Exact PPR by solving `(I - alpha P) r = (1 - alpha) e_source` densely.
pub fn dense_ppr(g: &Graph, source: usize, alpha: f64) -> Vec<f64> {
    let p = dense_column_stochastic(g);
    let n = p.len();
    let m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j)) - alpha * p[i][j]).collect())
        .collect();
    let mut b = vec![0.0; n];
    b[source] = 1.0 - alpha;
    solve(m, b)
}

pub fn dense_mul(a: &[Vec<f64>], m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.len(), m.cols());
    for i in 0..a.len() {
        for k in 0..a.len() {
            if a[i][k] != 0.0 {
                for j in 0..m.cols() {
                    out.set(i, j, out.get(i, j) + a[i][k] * m.get(k, j));
                }
            }
        }
    }
    out
}

/// `D^-1/2 A D^-1/2` built densely from the edge list.
pub fn dense_symmetric(g: &Graph) -> Vec<Vec<f64>> {
    let mut a = dense_adjacency(g);
    let n = a.len();
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                a[i][j] /= (deg[i] * deg[j]).sqrt();
            }
        }
    }
    a
}
