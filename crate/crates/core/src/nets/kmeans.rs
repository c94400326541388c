use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KMeans {
    /// One center per row.
    pub centers: DMatrix<f64>,
    pub assignments: Vec<usize>,
}

fn dist2(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, k: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(centers.row(k).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding. `points` holds one point per
/// row. A `k` larger than the point count is reduced to the point count.
pub fn kmeans<R: Rng + ?Sized>(
    points: &DMatrix<f64>,
    k: usize,
    iterations: usize,
    rng: &mut R,
) -> Result<KMeans> {
    let n = points.nrows();
    if n == 0 || k == 0 {
        return Err(Error::invalid(
            "k-means needs at least one point and one center",
        ));
    }
    let k = if k > n {
        log::warn!("k-means: requested {k} centers for {n} points, using {n}");
        n
    } else {
        k
    };
    let d = points.ncols();

    let mut centers = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.set_row(0, &points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| dist2(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in nearest.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(c, &points.row(pick));
        for (i, best) in nearest.iter_mut().enumerate() {
            *best = best.min(dist2(points, i, &centers, c));
        }
    }

    let mut assignments = vec![0usize; n];
    for _ in 0..iterations.max(1) {
        let mut changed = false;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for c in 0..k {
                let d2 = dist2(points, i, &centers, c);
                if d2 < best.0 {
                    best = (d2, c);
                }
            }
            if *slot != best.1 {
                *slot = best.1;
                changed = true;
            }
        }
        let mut sums = DMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            let row = sums.row(c) + points.row(i);
            sums.set_row(c, &row);
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c) / counts[c] as f64;
                centers.set_row(c, &mean);
            } else {
                // empty cluster: reseed at the point farthest from its center
                let far = (0..n)
                    .max_by(|&a, &b| {
                        dist2(points, a, &centers, assignments[a]).total_cmp(&dist2(
                            points,
                            b,
                            &centers,
                            assignments[b],
                        ))
                    })
                    .unwrap_or(0);
                centers.set_row(c, &points.row(far));
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centers,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separates_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = DMatrix::from_fn(40, 2, |i, _| {
            let base = if i < 20 { -5.0 } else { 5.0 };
            base + rng.random_range(-0.5..0.5)
        });
        let km = kmeans(&pts, 2, 50, &mut rng).unwrap();
        let a = km.assignments[0];
        assert!(km.assignments[..20].iter().all(|&c| c == a));
        assert!(km.assignments[20..].iter().all(|&c| c != a));
    }

    #[test]
    fn reduces_k_to_point_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let km = kmeans(&pts, 10, 10, &mut rng).unwrap();
        assert_eq!(km.centers.nrows(), 3);
    }
}
