use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 100,
            tol: 1e-6,
            seed,
        }
    }
}

/// Topic id per input row.
pub type TopicAssignment = Vec<usize>;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub assignment: TopicAssignment,
    pub centroids: Array2<f64>,
    /// Sum of squared distances to the assigned centroid after every
    /// assignment step.
    pub objective_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(data: ArrayView2<f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut centroids = Array2::zeros((k, data.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&data.row(first));
    let mut d2: Vec<f64> = data
        .axis_iter(Axis(0))
        .map(|r| sq_dist(r, data.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&data.row(pick));
        for (i, r) in data.axis_iter(Axis(0)).enumerate() {
            d2[i] = d2[i].min(sq_dist(r, data.row(pick)));
        }
    }
    centroids
}

/// Nearest centroid per row (lowest index on ties) and the resulting
/// objective.
fn assign(data: ArrayView2<f64>, centroids: &Array2<f64>, out: &mut [usize]) -> f64 {
    let mut objective = 0.0;
    for (i, r) in data.axis_iter(Axis(0)).enumerate() {
        let (best, best_d) = centroids
            .axis_iter(Axis(0))
            .map(|c| sq_dist(r, c))
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (j, d)| if d < acc.1 { (j, d) } else { acc },
            );
        out[i] = best;
        objective += best_d;
    }
    objective
}

/// Seeded k-means with k-means++ initialization.
pub fn cluster_embeddings(data: ArrayView2<f64>, config: &KMeansConfig) -> Result<KMeansResult> {
    let (n, _) = data.dim();
    let k = config.k;
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    if k > n {
        return Err(Error::TooManyClusters { k, n });
    }
    let mut rng = rng_from_seed(config.seed);
    let mut centroids = plus_plus_init(data, k, &mut rng);
    let mut assignment = vec![0; n];
    let mut objective_trace = Vec::new();

    for _ in 0..config.max_iter {
        objective_trace.push(assign(data, &centroids, &mut assignment));
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, r) in data.axis_iter(Axis(0)).enumerate() {
            sums.row_mut(assignment[i]).scaled_add(1.0, &r);
            counts[assignment[i]] += 1;
        }
        let mut shift = 0.0f64;
        for (c, &count) in counts.iter().enumerate() {
            // empty clusters keep their previous centroid
            if count == 0 {
                continue;
            }
            let new = sums.row(c).mapv(|v| v / count as f64);
            shift = shift.max(sq_dist(new.view(), centroids.row(c)).sqrt());
            centroids.row_mut(c).assign(&new);
        }
        if shift < config.tol {
            break;
        }
    }
    objective_trace.push(assign(data, &centroids, &mut assignment));
    Ok(KMeansResult {
        assignment,
        centroids,
        objective_trace,
    })
}
