use std::collections::BinaryHeap;

/// Exact 3-d kd-tree. Ties in distance are broken by smaller index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cand {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
    }
}

fn d2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

impl KdTree {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut t = KdTree { points, nodes: Vec::new(), root: None };
        t.root = t.build(&mut idx, 0);
        t
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        // split on the widest axis of this subset
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in idx.iter() {
            for k in 0..3 {
                lo[k] = lo[k].min(self.points[i][k]);
                hi[k] = hi[k].max(self.points[i][k]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap_or(depth % 3);
        let pts = &self.points;
        idx.sort_unstable_by(|&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let point = idx[mid];
        let slot = self.nodes.len();
        self.nodes.push(Node { point, axis, left: None, right: None });
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(&mut r[1..], depth + 1);
        self.nodes[slot].left = left;
        self.nodes[slot].right = right;
        Some(slot)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    /// The `k` nearest points to `q`, nearest first.
    pub fn knn(&self, q: [f64; 3], k: usize) -> Vec<usize> {
        self.knn_with_dist(q, k).into_iter().map(|(i, _)| i).collect()
    }

    /// `(index, squared distance)` of the `k` nearest points, nearest first.
    pub fn knn_with_dist(&self, q: [f64; 3], k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(self.root, &q, k, &mut heap);
        let mut v: Vec<Cand> = heap.into_vec();
        v.sort();
        v.into_iter().map(|c| (c.1, c.0)).collect()
    }

    fn knn_rec(&self, node: Option<usize>, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Cand>) {
        let Some(n) = node else { return };
        let nd = &self.nodes[n];
        let p = &self.points[nd.point];
        let c = Cand(d2(p, q), nd.point);
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().unwrap() {
            heap.pop();
            heap.push(c);
        }
        let diff = q[nd.axis] - p[nd.axis];
        let (near, far) = if diff < 0.0 { (nd.left, nd.right) } else { (nd.right, nd.left) };
        self.knn_rec(near, q, k, heap);
        // equality must be visited: a tie at a smaller index may sit across the plane
        if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
            self.knn_rec(far, q, k, heap);
        }
    }

    /// Indices within distance `r` (inclusive), ascending.
    pub fn within(&self, q: [f64; 3], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        let r2 = r * r;
        while let Some(n) = stack.pop() {
            let nd = &self.nodes[n];
            let p = &self.points[nd.point];
            if d2(p, &q) <= r2 {
                out.push(nd.point);
            }
            let diff = q[nd.axis] - p[nd.axis];
            if let Some(l) = nd.left {
                if diff <= r {
                    stack.push(l);
                }
            }
            if let Some(rr) = nd.right {
                if diff >= -r {
                    stack.push(rr);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Reference implementation: full sort by (distance, index).
pub fn brute_knn(points: &[[f64; 3]], q: [f64; 3], k: usize) -> Vec<usize> {
    let mut v: Vec<Cand> = points.iter().enumerate().map(|(i, p)| Cand(d2(p, &q), i)).collect();
    v.sort();
    v.into_iter().take(k).map(|c| c.1).collect()
}
