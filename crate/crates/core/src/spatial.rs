//! Exact k-nearest-neighbour search over a static point set.
//!
//! Results are ordered by `(squared distance, index)`, so ties resolve to
//! the lower index and agree exactly with a quadratic scan that uses
//! [`Point3::dist_squared`].

use crate::cloud::Point3;

const LEAF_SIZE: usize = 12;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<usize>,
    root: Node,
}

/// Bounded candidate list kept sorted by `(d2, index)`.
struct Candidates {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Candidates {
    fn new(k: usize) -> Self {
        Candidates {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn worst(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.items.len() - 1].0
        }
    }

    #[inline]
    fn offer(&mut self, d2: f64, idx: usize) {
        if self.items.len() == self.k {
            let (wd, wi) = self.items[self.k - 1];
            if d2 > wd || (d2 == wd && idx > wi) {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|&(d, i)| d < d2 || (d == d2 && i < idx));
        self.items.insert(pos, (d2, idx));
        self.items.truncate(self.k);
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = build(points, &mut order, 0);
        KdTree {
            points,
            order,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points to `query` as `(squared distance, index)`,
    /// skipping `exclude` if given.
    pub fn nearest_k(&self, query: Point3, k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        if k == 0 {
            return Vec::new();
        }
        let mut cand = Candidates::new(k);
        self.search(&self.root, query, exclude, &mut cand);
        cand.items
    }

    /// Nearest point as `(squared distance, index)`. Panics on an empty tree.
    pub fn nearest(&self, query: Point3) -> (f64, usize) {
        self.nearest_k(query, 1, None)[0]
    }

    fn search(&self, node: &Node, q: Point3, exclude: Option<usize>, cand: &mut Candidates) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    cand.offer(q.dist_squared(self.points[i]), i);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q.coord(*axis) - value;
                let (near, far) = if delta <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, exclude, cand);
                // Visit on equality: an equidistant point may have a lower index.
                if delta * delta <= cand.worst() {
                    self.search(far, q, exclude, cand);
                }
            }
        }
    }
}

fn build(points: &[Point3], order: &mut [usize], offset: usize) -> Node {
    let n = order.len();
    if n <= LEAF_SIZE {
        return Node::Leaf {
            start: offset,
            end: offset + n,
        };
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for a in 0..3 {
            let v = points[i].coord(a);
            lo[a] = lo[a].min(v);
            hi[a] = hi[a].max(v);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    if hi[axis] - lo[axis] == 0.0 {
        return Node::Leaf {
            start: offset,
            end: offset + n,
        };
    }
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a].coord(axis).total_cmp(&points[b].coord(axis))
    });
    let value = points[order[mid]].coord(axis);
    // Left holds coords <= value, right holds coords >= value.
    let (left, right) = order.split_at_mut(mid);
    Node::Split {
        axis,
        value,
        left: Box::new(build(points, left, offset)),
        right: Box::new(build(points, right, offset + mid)),
    }
}
