//! Lloyd's k-means with k-means++ seeding, used for content pseudo-labels.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ContentAssignment, ContentSource};
use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

pub const KMEANS_MAX_ITERS: usize = 100;
/// Stop once an iteration lowers the inertia by less than this fraction.
pub const KMEANS_REL_TOL: f64 = 1e-4;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center, ties to the lower index.
fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centers(features: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = features.node_count();
    let mut centers = vec![features.row(rng.gen_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = (0..n).map(|v| sq_dist(features.row(v), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (v, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = v;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let center = features.row(pick).to_vec();
        for (v, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(features.row(v), &center));
        }
        centers.push(center);
    }
    centers
}

/// Clusters the feature rows into `k` groups. Empty clusters are reseeded at
/// the point farthest from its center; if every point sits on its center
/// the cluster stays empty.
pub fn kmeans_pseudo_labels(features: &FeatureMatrix, k: usize, seed: u64) -> Result<ContentAssignment> {
    let n = features.node_count();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k-means cluster count {k} outside 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_centers(features, k, &mut rng);
    let mut assign = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut previous = f64::INFINITY;

    for _ in 0..KMEANS_MAX_ITERS {
        for v in 0..n {
            (assign[v], dist[v]) = nearest(features.row(v), &centers);
        }
        repair_empty(features, &mut centers, &mut assign, &mut dist);
        let inertia: f64 = dist.iter().sum();
        let converged = inertia == 0.0 || (previous - inertia) <= KMEANS_REL_TOL * previous;
        previous = inertia;
        if converged {
            break;
        }
        let mut sums = vec![vec![0.0; features.dim()]; k];
        let mut counts = vec![0usize; k];
        for v in 0..n {
            counts[assign[v]] += 1;
            for (s, &x) in sums[assign[v]].iter_mut().zip(features.row(v)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(ContentAssignment { groups: assign.into_iter().map(Some).collect(), count: k, source: ContentSource::Kmeans })
}

fn repair_empty(features: &FeatureMatrix, centers: &mut [Vec<f64>], assign: &mut [usize], dist: &mut [f64]) {
    let k = centers.len();
    let mut counts = vec![0usize; k];
    for &c in assign.iter() {
        counts[c] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let farthest = (0..assign.len())
            .filter(|&v| counts[assign[v]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
        let Some(v) = farthest.filter(|&v| dist[v] > 0.0) else { continue };
        counts[assign[v]] -= 1;
        counts[empty] = 1;
        assign[v] = empty;
        dist[v] = 0.0;
        centers[empty] = features.row(v).to_vec();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use rand_distr::{Distribution, StandardNormal};

    fn features(rows: Vec<Vec<f64>>) -> FeatureMatrix {
        FeatureMatrix::new(Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn separated_clouds_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for v in 0..200 {
            let c = v % 2;
            let offset = if c == 0 { 0.0 } else { 10.0 };
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            rows.push(vec![offset + x, y]);
            truth.push(c);
        }
        let f = features(rows);
        let out = kmeans_pseudo_labels(&f, 2, 3).unwrap();
        let got: Vec<usize> = out.groups.iter().map(|g| g.unwrap()).collect();
        let same = got.iter().zip(&truth).filter(|(a, b)| a == b).count();
        assert!(same == 200 || same == 0, "agreement {same}");

        // Every point sits with its nearest final center.
        let mut centers = vec![vec![0.0; 2]; 2];
        let mut counts = [0.0; 2];
        for (v, &c) in got.iter().enumerate() {
            counts[c] += 1.0;
            centers[c][0] += f.row(v)[0];
            centers[c][1] += f.row(v)[1];
        }
        for c in 0..2 {
            centers[c].iter_mut().for_each(|x| *x /= counts[c]);
        }
        for (v, &c) in got.iter().enumerate() {
            let other = 1 - c;
            assert!(sq_dist(f.row(v), &centers[c]) <= sq_dist(f.row(v), &centers[other]));
        }
    }

    #[test]
    fn single_center() {
        let f = features(vec![vec![0.0], vec![1.0], vec![5.0]]);
        let out = kmeans_pseudo_labels(&f, 1, 0).unwrap();
        assert!(out.groups.iter().all(|&g| g == Some(0)));
    }

    #[test]
    fn identical_points_collapse_to_cluster_zero() {
        let f = features(vec![vec![2.0, 2.0]; 6]);
        let out = kmeans_pseudo_labels(&f, 2, 4).unwrap();
        assert!(out.groups.iter().all(|&g| g == Some(0)));
        assert_eq!(out.count, 2);
    }

    #[test]
    fn too_many_clusters() {
        let f = features(vec![vec![0.0]; 3]);
        assert!(kmeans_pseudo_labels(&f, 4, 0).is_err());
        assert!(kmeans_pseudo_labels(&f, 0, 0).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let f = features((0..50).map(|v| vec![(v * 7 % 13) as f64, (v % 5) as f64]).collect());
        assert_eq!(kmeans_pseudo_labels(&f, 4, 8).unwrap(), kmeans_pseudo_labels(&f, 4, 8).unwrap());
    }
}
