use super::KdTree;

pub const NOISE: i64 = -1;

/// Canonical DBSCAN. Points are visited in index order; a point is core when
/// its closed `eps`-ball holds at least `min_pts` points (itself included).
/// Border points join the first cluster that reaches them. Returns a label per
/// point: cluster id from 0, or [`NOISE`].
pub fn dbscan(points: &[[f64; 3]], eps: f64, min_pts: usize) -> Vec<i64> {
    let tree = KdTree::new(points.to_vec());
    let n = points.len();
    let mut labels = vec![None::<i64>; n];
    let mut next = 0i64;
    for p in 0..n {
        if labels[p].is_some() {
            continue;
        }
        let nb = tree.within(points[p], eps);
        if nb.len() < min_pts {
            labels[p] = Some(NOISE);
            continue;
        }
        let c = next;
        next += 1;
        labels[p] = Some(c);
        let mut queue: std::collections::VecDeque<usize> = nb.into_iter().filter(|&q| q != p).collect();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                Some(NOISE) => labels[q] = Some(c),
                Some(_) => continue,
                None => {
                    labels[q] = Some(c);
                    let nq = tree.within(points[q], eps);
                    if nq.len() >= min_pts {
                        queue.extend(nq.into_iter().filter(|&r| labels[r].is_none() || labels[r] == Some(NOISE)));
                    }
                }
            }
        }
    }
    labels.into_iter().map(|l| l.unwrap_or(NOISE)).collect()
}

/// Label of the largest cluster, ties to the smaller label; `None` if all noise.
pub fn largest_cluster(labels: &[i64]) -> Option<i64> {
    let max = *labels.iter().max()?;
    if max < 0 {
        return None;
    }
    let mut counts = vec![0usize; max as usize + 1];
    for &l in labels.iter().filter(|l| **l >= 0) {
        counts[l as usize] += 1;
    }
    let best = counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
    Some(best.0 as i64)
}
