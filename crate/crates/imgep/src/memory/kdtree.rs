//! Exact nearest-neighbor kd-tree with incremental insertion.
//!
//! Points are inserted one at a time; the tree is rebuilt balanced after a
//! fixed number of insertions to bound degradation. Queries return the exact
//! nearest point under squared Euclidean distance with a deterministic
//! tie-break on the item id, so the answer is independent of tree shape and
//! always equals an exhaustive scan over the same points.

/// Which of two equally distant items wins a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Prefer the lowest item id (the oldest insertion).
    #[default]
    LowestItem,
    /// Prefer the highest item id (the most recent insertion).
    HighestItem,
}

impl TieBreak {
    fn wins(self, candidate: u32, incumbent: u32) -> bool {
        match self {
            TieBreak::LowestItem => candidate < incumbent,
            TieBreak::HighestItem => incumbent == u32::MAX || candidate > incumbent,
        }
    }
}

/// Squared Euclidean distance, summed in index order. Scans that must agree
/// bit-for-bit with tree queries use this same function.
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone)]
struct Node {
    point: Box<[f64]>,
    item: u32,
    axis: u16,
    left: Option<u32>,
    right: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dims: usize,
    nodes: Vec<Node>,
    root: Option<u32>,
    inserts_since_rebuild: usize,
    rebuild_every: usize,
    tie_break: TieBreak,
}

impl KdTree {
    pub fn new(dims: usize, rebuild_every: usize) -> Self {
        Self::with_tie_break(dims, rebuild_every, TieBreak::LowestItem)
    }

    pub fn with_tie_break(dims: usize, rebuild_every: usize, tie_break: TieBreak) -> Self {
        assert!(dims > 0);
        assert!(rebuild_every > 0);
        Self {
            dims,
            nodes: Vec::new(),
            root: None,
            inserts_since_rebuild: 0,
            rebuild_every,
            tie_break,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Inserts `point` with caller-assigned id `item`. Triggers a balanced
    /// rebuild every `rebuild_every` insertions.
    pub fn insert(&mut self, point: Vec<f64>, item: u32) {
        assert_eq!(point.len(), self.dims);
        let new_index = self.nodes.len() as u32;
        let mut cursor = self.root;
        let mut parent: Option<(u32, bool)> = None;
        let mut axis = 0u16;
        while let Some(idx) = cursor {
            let node = &self.nodes[idx as usize];
            axis = node.axis;
            let go_left = point[axis as usize] < node.point[axis as usize];
            parent = Some((idx, go_left));
            cursor = if go_left { node.left } else { node.right };
        }
        let node_axis = match parent {
            None => 0,
            Some(_) => (axis as usize + 1) % self.dims,
        } as u16;
        self.nodes.push(Node {
            point: point.into_boxed_slice(),
            item,
            axis: node_axis,
            left: None,
            right: None,
        });
        match parent {
            None => self.root = Some(new_index),
            Some((idx, true)) => self.nodes[idx as usize].left = Some(new_index),
            Some((idx, false)) => self.nodes[idx as usize].right = Some(new_index),
        }
        self.inserts_since_rebuild += 1;
        if self.inserts_since_rebuild >= self.rebuild_every {
            self.rebuild();
        }
    }

    /// Rebuilds the tree balanced by recursive median splits.
    pub fn rebuild(&mut self) {
        let mut items: Vec<(Box<[f64]>, u32)> = self
            .nodes
            .drain(..)
            .map(|n| (n.point, n.item))
            .collect();
        items.sort_by_key(|(_, item)| *item);
        self.root = None;
        self.nodes.reserve(items.len());
        self.root = self.build_balanced(&mut items, 0);
        self.inserts_since_rebuild = 0;
    }

    fn build_balanced(&mut self, items: &mut [(Box<[f64]>, u32)], depth: usize) -> Option<u32> {
        if items.is_empty() {
            return None;
        }
        let axis = depth % self.dims;
        let median = items.len() / 2;
        items.select_nth_unstable_by(median, |a, b| {
            a.0[axis]
                .partial_cmp(&b.0[axis])
                .unwrap()
                .then(a.1.cmp(&b.1))
        });
        let (left_items, rest) = items.split_at_mut(median);
        let (pivot, right_items) = rest.split_first_mut().unwrap();
        let index = self.nodes.len() as u32;
        self.nodes.push(Node {
            point: std::mem::take(&mut pivot.0),
            item: pivot.1,
            axis: axis as u16,
            left: None,
            right: None,
        });
        let left = self.build_balanced(left_items, depth + 1);
        let right = self.build_balanced(right_items, depth + 1);
        self.nodes[index as usize].left = left;
        self.nodes[index as usize].right = right;
        Some(index)
    }

    /// Exact nearest neighbor of `query`: `(item, squared distance)`, ties
    /// broken per the configured [`TieBreak`]. `None` for an empty tree.
    pub fn nearest(&self, query: &[f64]) -> Option<(u32, f64)> {
        assert_eq!(query.len(), self.dims);
        let root = self.root?;
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(root, query, &mut best);
        Some(best)
    }

    fn search(&self, index: u32, query: &[f64], best: &mut (u32, f64)) {
        let node = &self.nodes[index as usize];
        let d = dist_sq(&node.point, query);
        if d < best.1 || (d == best.1 && self.tie_break.wins(node.item, best.0)) {
            *best = (node.item, d);
        }
        let axis = node.axis as usize;
        let diff = query[axis] - node.point[axis];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search(n, query, best);
        }
        // Not a strict inequality: an equally distant point with a smaller
        // item id may hide on the far side.
        if let Some(f) = far {
            if diff * diff <= best.1 {
                self.search(f, query, best);
            }
        }
    }

    /// All `(point, item)` pairs, in unspecified order.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], u32)> {
        self.nodes.iter().map(|n| (&*n.point, n.item))
    }
}

/// Exhaustive-scan nearest neighbor over `(point, item)` pairs with the same
/// metric and tie-breaking as the tree. This is the reference the tree must
/// match exactly.
pub fn scan_nearest<'a, I>(points: I, query: &[f64]) -> Option<(u32, f64)>
where
    I: IntoIterator<Item = (&'a [f64], u32)>,
{
    let mut best: Option<(u32, f64)> = None;
    for (point, item) in points {
        let d = dist_sq(point, query);
        best = match best {
            None => Some((item, d)),
            Some((bi, bd)) if d < bd || (d == bd && item < bi) => Some((item, d)),
            other => other,
        };
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(n: usize, dims: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dims).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect()
    }

    #[test]
    fn empty_tree_has_no_answer() {
        let tree = KdTree::new(3, 500);
        assert!(tree.nearest(&[0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn matches_scan_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dims in [1, 2, 5, 16] {
            let points = random_points(800, dims, &mut rng);
            let mut tree = KdTree::new(dims, 97);
            for (i, p) in points.iter().enumerate() {
                tree.insert(p.clone(), i as u32);
            }
            for _ in 0..200 {
                let q: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.2..=1.2)).collect();
                let tree_ans = tree.nearest(&q).unwrap();
                let scan_ans = scan_nearest(
                    points.iter().enumerate().map(|(i, p)| (p.as_slice(), i as u32)),
                    &q,
                )
                .unwrap();
                assert_eq!(tree_ans, scan_ans);
            }
        }
    }

    #[test]
    fn duplicate_points_break_ties_by_lowest_item() {
        let mut tree = KdTree::new(2, 500);
        // Insert in non-ascending item order to make the tie-break do work.
        tree.insert(vec![0.5, 0.5], 7);
        tree.insert(vec![0.5, 0.5], 2);
        tree.insert(vec![0.5, 0.5], 9);
        tree.insert(vec![-0.5, 0.0], 0);
        let (item, d) = tree.nearest(&[0.5, 0.5]).unwrap();
        assert_eq!(item, 2);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn highest_item_tie_break_prefers_recent_insertions() {
        let mut tree = KdTree::with_tie_break(2, 500, TieBreak::HighestItem);
        tree.insert(vec![0.5, 0.5], 2);
        tree.insert(vec![0.5, 0.5], 9);
        tree.insert(vec![0.5, 0.5], 7);
        let (item, d) = tree.nearest(&[0.5, 0.5]).unwrap();
        assert_eq!(item, 9);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn equidistant_points_on_both_sides_prefer_lower_item() {
        let mut tree = KdTree::new(1, 500);
        tree.insert(vec![1.0], 5);
        tree.insert(vec![-1.0], 3);
        let (item, d) = tree.nearest(&[0.0]).unwrap();
        assert_eq!(item, 3);
        assert_eq!(d, 1.0);
    }

    #[test]
    fn scan_equivalence_holds_across_rebuild_checkpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dims = 4;
        let mut tree = KdTree::new(dims, 500);
        let mut points: Vec<Vec<f64>> = Vec::new();
        for i in 0..5000 {
            let p: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..=1.0)).collect();
            tree.insert(p.clone(), i as u32);
            points.push(p);
            if (i + 1) % 500 == 0 {
                for _ in 0..20 {
                    let q: Vec<f64> =
                        (0..dims).map(|_| rng.random_range(-1.0..=1.0)).collect();
                    let tree_ans = tree.nearest(&q).unwrap();
                    let scan_ans = scan_nearest(
                        points.iter().enumerate().map(|(j, p)| (p.as_slice(), j as u32)),
                        &q,
                    )
                    .unwrap();
                    assert_eq!(tree_ans, scan_ans);
                }
            }
        }
        assert_eq!(tree.len(), 5000);
    }
}
