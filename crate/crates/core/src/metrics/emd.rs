//! Earth Mover Distance: exact Hungarian assignment for small clouds, a
//! deterministic greedy-plus-swaps approximation above the exact cutoff.

use crate::geom::Point3;

/// O(n^3) Hungarian algorithm (shortest augmenting paths with potentials)
/// over a dense square cost matrix. Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-indexed working arrays; index 0 is the virtual start column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Exact minimal-mean-cost perfect matching between equal-size clouds.
pub fn emd_exact(a: &[Point3], b: &[Point3]) -> f64 {
    let n = a.len();
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|&pa| b.iter().map(|&pb| pa.dist(pb)).collect())
        .collect();
    let assignment = hungarian(&cost);
    let mut costs: Vec<f64> = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .collect();
    // Sorted summation keeps the value exactly permutation-invariant.
    costs.sort_by(|x, y| x.total_cmp(y));
    costs.iter().sum::<f64>() / n as f64
}

/// Deterministic approximation: canonical coordinate order, greedy nearest
/// unused match, then pair-swap improvement passes until fixpoint (capped).
pub fn emd_approx(a: &[Point3], b: &[Point3]) -> f64 {
    let n = a.len();
    let canonical = |pts: &[Point3]| {
        let mut v: Vec<Point3> = pts.to_vec();
        v.sort_by(|p, q| {
            p.x.total_cmp(&q.x)
                .then(p.y.total_cmp(&q.y))
                .then(p.z.total_cmp(&q.z))
        });
        v
    };
    let a = canonical(a);
    let b = canonical(b);

    let mut assignment = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for (i, &pa) in a.iter().enumerate() {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (j, &pb) in b.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = pa.dist_sq(pb);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        assignment[i] = best;
        used[best] = true;
    }

    const MAX_PASSES: usize = 4;
    for _ in 0..MAX_PASSES {
        let mut improved = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (ai, aj) = (assignment[i], assignment[j]);
                let current = a[i].dist(b[ai]) + a[j].dist(b[aj]);
                let swapped = a[i].dist(b[aj]) + a[j].dist(b[ai]);
                if swapped + 1e-15 < current {
                    assignment.swap(i, j);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }

    let mut costs: Vec<f64> = (0..n).map(|i| a[i].dist(b[assignment[i]])).collect();
    costs.sort_by(|x, y| x.total_cmp(y));
    costs.iter().sum::<f64>() / n as f64
}
