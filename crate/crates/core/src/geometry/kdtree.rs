//! Static 3-d tree over a point slice.
//!
//! Results are exact and deterministic: neighbors are ordered by squared
//! distance, ties broken by the smaller point index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Point3;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Neighbor returned by a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist2.sqrt()
    }
}

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    // point indices, permuted into implicit tree order
    order: Vec<usize>,
    // split axis for the median slot of each internal node, indexed by slot
    axis: Vec<u8>,
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let pts: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let mut axis = vec![0u8; pts.len()];
        build(&pts, &mut order, &mut axis, 0);
        Self {
            points: pts,
            order,
            axis,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points, ascending by distance. `k` is clamped to the size.
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let q = [query.x, query.y, query.z];
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, self.order.len(), &q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        out.into_iter()
            .map(|c| Neighbor {
                index: c.index,
                dist2: c.dist2,
            })
            .collect()
    }

    pub fn nearest(&self, query: &Point3) -> Option<Neighbor> {
        self.knn(query, 1).into_iter().next()
    }

    /// All points with distance `<= radius`, ascending by distance.
    pub fn within_radius(&self, query: &Point3, radius: f64) -> Vec<Neighbor> {
        let q = [query.x, query.y, query.z];
        let r2 = radius * radius;
        let mut out = Vec::new();
        self.radius_rec(0, self.order.len(), &q, r2, &mut out);
        out.sort_unstable();
        out.into_iter()
            .map(|c| Neighbor {
                index: c.index,
                dist2: c.dist2,
            })
            .collect()
    }

    fn dist2(&self, idx: usize, q: &[f64; 3]) -> f64 {
        let p = &self.points[idx];
        let dx = p[0] - q[0];
        let dy = p[1] - q[1];
        let dz = p[2] - q[2];
        dx * dx + dy * dy + dz * dz
    }

    fn knn_rec(&self, lo: usize, hi: usize, q: &[f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        if hi - lo <= LEAF_SIZE {
            for &idx in &self.order[lo..hi] {
                self.offer(
                    Candidate {
                        dist2: self.dist2(idx, q),
                        index: idx,
                    },
                    k,
                    heap,
                );
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[idx][ax];
        self.offer(
            Candidate {
                dist2: self.dist2(idx, q),
                index: idx,
            },
            k,
            heap,
        );
        let (near, far) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(near.0, near.1, q, k, heap);
        // Equal distance still descends: a tie may carry a smaller index.
        let worst = heap.peek().map(|c| c.dist2).unwrap_or(f64::INFINITY);
        if heap.len() < k || diff * diff <= worst {
            self.knn_rec(far.0, far.1, q, k, heap);
        }
    }

    fn offer(&self, c: Candidate, k: usize, heap: &mut BinaryHeap<Candidate>) {
        if heap.len() < k {
            heap.push(c);
        } else if let Some(top) = heap.peek() {
            if c < *top {
                heap.pop();
                heap.push(c);
            }
        }
    }

    fn radius_rec(&self, lo: usize, hi: usize, q: &[f64; 3], r2: f64, out: &mut Vec<Candidate>) {
        if hi - lo <= LEAF_SIZE {
            for &idx in &self.order[lo..hi] {
                let d = self.dist2(idx, q);
                if d <= r2 {
                    out.push(Candidate { dist2: d, index: idx });
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let ax = self.axis[mid] as usize;
        let diff = q[ax] - self.points[idx][ax];
        let d = self.dist2(idx, q);
        if d <= r2 {
            out.push(Candidate { dist2: d, index: idx });
        }
        if diff <= 0.0 || diff * diff <= r2 {
            self.radius_rec(lo, mid, q, r2, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.radius_rec(mid + 1, hi, q, r2, out);
        }
    }
}

fn build(points: &[[f64; 3]], order: &mut [usize], axis: &mut [u8], offset: usize) {
    let n = order.len();
    if n <= LEAF_SIZE {
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let ax = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][ax].total_cmp(&points[b][ax]).then(a.cmp(&b)));
    axis[offset + mid] = ax as u8;
    let (left, rest) = order.split_at_mut(mid);
    build(points, left, axis, offset);
    build(points, &mut rest[1..], axis, offset + mid + 1);
}
