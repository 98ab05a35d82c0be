//! Lloyd's K-means with k-means++ seeding.

use ndarray::Array2;
use rand::Rng;

use crate::error::{CademError, Result};

#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
    pub n_iter: usize,
    /// Inertia after each assignment step of the winning initialization.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best-inertia result over `n_init` k-means++ initializations; Lloyd
/// iterations run until the largest center shift drops below `tol` or
/// `max_iter` is reached. An emptied cluster is reseeded at the point
/// farthest from its assigned center.
pub fn kmeans<R: Rng>(
    x: &Array2<f64>,
    k: usize,
    n_init: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut R,
) -> Result<KmeansResult> {
    let n = x.nrows();
    if k == 0 || n < k {
        return Err(CademError::InvalidArgument(format!(
            "kmeans needs 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    if n_init == 0 {
        return Err(CademError::InvalidArgument("kmeans needs n_init >= 1".into()));
    }
    let mut best: Option<KmeansResult> = None;
    for _ in 0..n_init {
        let result = kmeans_once(x, k, max_iter, tol, rng)?;
        if best.as_ref().map_or(true, |b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("n_init >= 1"))
}

fn kmeans_once<R: Rng>(
    x: &Array2<f64>,
    k: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut R,
) -> Result<KmeansResult> {
    let (n, d) = x.dim();
    let mut centers = Array2::zeros((k, d));

    // k-means++ seeding.
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centers.row_mut(c).assign(&x.row(pick));
        for i in 0..n {
            let dn = sq_dist(x.row(i), centers.row(c));
            if dn < dist[i] {
                dist[i] = dn;
            }
        }
    }

    let mut labels = vec![0usize; n];
    let mut inertia_history = Vec::new();
    let mut n_iter = 0;
    for iter in 0..max_iter {
        n_iter = iter + 1;
        // Assign.
        let mut inertia = 0.0;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dd = sq_dist(x.row(i), centers.row(c));
                if dd < best_d {
                    best_d = dd;
                    best_c = c;
                }
            }
            labels[i] = best_c;
            inertia += best_d;
        }
        inertia_history.push(inertia);

        // Update, reseeding empty clusters at the farthest point.
        let mut counts = vec![0usize; k];
        let mut sums = Array2::<f64>::zeros((k, d));
        for i in 0..n {
            counts[labels[i]] += 1;
            let mut row = sums.row_mut(labels[i]);
            row += &x.row(i);
        }
        let mut new_centers = Array2::zeros((k, d));
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(x.row(a), centers.row(labels[a]))
                            .partial_cmp(&sq_dist(x.row(b), centers.row(labels[b])))
                            .unwrap()
                    })
                    .unwrap();
                new_centers.row_mut(c).assign(&x.row(far));
                labels[far] = c;
            } else {
                let mut row = new_centers.row_mut(c);
                row.assign(&sums.row(c));
                row /= counts[c] as f64;
            }
        }

        let shift = (0..k)
            .map(|c| sq_dist(centers.row(c), new_centers.row(c)).sqrt())
            .fold(0.0f64, f64::max);
        centers = new_centers;
        if shift < tol {
            break;
        }
    }

    // Final assignment against the converged centers.
    let mut inertia = 0.0;
    for i in 0..n {
        let mut best_c = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..k {
            let dd = sq_dist(x.row(i), centers.row(c));
            if dd < best_d {
                best_d = dd;
                best_c = c;
            }
        }
        labels[i] = best_c;
        inertia += best_d;
    }
    inertia_history.push(inertia);

    Ok(KmeansResult {
        labels,
        centers,
        inertia,
        n_iter,
        inertia_history,
    })
}
