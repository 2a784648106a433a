use std::collections::VecDeque;

use crate::model::EmbeddingVector;

pub const NOISE: i64 = -1;

/// DBSCAN over cosine distance `1 - cos`. Neighbourhoods are inclusive and
/// contain the point itself. Clusters are numbered in order of their first
/// core point, so labels depend only on input order.
pub fn dbscan_cluster(points: &[EmbeddingVector], eps: f64, min_pts: usize) -> Vec<i64> {
    let n = points.len();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| 1.0 - points[i].cosine(&points[j]) <= eps).collect())
        .collect();
    let core: Vec<bool> = neighbours.iter().map(|nb| nb.len() >= min_pts).collect();
    let mut labels = vec![NOISE; n];
    let mut next = 0;
    for start in 0..n {
        if labels[start] != NOISE || !core[start] {
            continue;
        }
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbours[p] {
                if labels[q] == NOISE {
                    labels[q] = next;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    labels
}

/// Members of the largest cluster; ties go to the cluster holding the
/// lowest index. All-noise keeps everything and returns `false`.
pub fn dominant_cluster_retain(labels: &[i64]) -> (Vec<usize>, bool) {
    let mut sizes = std::collections::BTreeMap::<i64, (usize, usize)>::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            let e = sizes.entry(l).or_insert((0, i));
            e.0 += 1;
        }
    }
    let best = sizes
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(l, _)| *l);
    match best {
        Some(l) => ((0..labels.len()).filter(|&i| labels[i] == l).collect(), true),
        None => {
            tracing::warn!("all embeddings are noise; keeping all");
            ((0..labels.len()).collect(), false)
        }
    }
}
