//! Exact nearest-neighbour queries over a static 3D point set.

use nalgebra::Point3;

use crate::scalar::Real;

const LEAF: usize = 8;

/// Balanced k-d tree stored implicitly in a permuted index array.
#[derive(Debug, Clone)]
pub struct KdTree<T: Real> {
    points: Vec<Point3<T>>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

/// Nearest neighbour: index into the indexed set and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub dist2: T,
}

impl<T: Real> KdTree<T> {
    pub fn new(points: &[Point3<T>]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            axes: vec![0; points.len()],
        };
        tree.build(0, points.len());
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    fn build(&mut self, lo: usize, hi: usize) {
        if hi - lo <= LEAF {
            return;
        }
        let axis = self.widest_axis(lo, hi);
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a][axis]
                .partial_cmp(&points[b][axis])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        self.axes[mid] = axis as u8;
        self.build(lo, mid);
        self.build(mid + 1, hi);
    }

    fn widest_axis(&self, lo: usize, hi: usize) -> usize {
        let mut min = self.points[self.order[lo]];
        let mut max = min;
        for &i in &self.order[lo..hi] {
            let p = &self.points[i];
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let spread = max - min;
        (0..3)
            .max_by(|&a, &b| {
                spread[a]
                    .partial_cmp(&spread[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .unwrap_or(0)
    }

    /// Closest indexed point; ties resolve to the lowest index.
    pub fn nearest(&self, q: &Point3<T>) -> Option<Neighbor<T>> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = Neighbor {
            index: usize::MAX,
            dist2: T::max_value().expect("real type has a maximum"),
        };
        self.search(0, self.points.len(), q, &mut best);
        Some(best)
    }

    #[inline]
    fn consider(&self, i: usize, q: &Point3<T>, best: &mut Neighbor<T>) {
        let d = (self.points[i] - q).norm_squared();
        if d < best.dist2 || (d == best.dist2 && i < best.index) {
            *best = Neighbor { index: i, dist2: d };
        }
    }

    fn search(&self, lo: usize, hi: usize, q: &Point3<T>, best: &mut Neighbor<T>) {
        if hi - lo <= LEAF {
            for &i in &self.order[lo..hi] {
                self.consider(i, q, best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let i = self.order[mid];
        let axis = self.axes[mid] as usize;
        self.consider(i, q, best);
        let diff = q[axis] - self.points[i][axis];
        let (near, far) = if diff < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        if diff * diff <= best.dist2 {
            self.search(far.0, far.1, q, best);
        }
    }
}
