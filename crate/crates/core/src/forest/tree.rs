//! Regression tree grown with the MSE criterion on presorted columns.

use serde::{Deserialize, Serialize};

/// Relative tolerance used when comparing split gains. A later candidate
/// replaces the current best only if it beats it by more than
/// `GAIN_TOLERANCE * sum(y^2)` over the node.
pub const GAIN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: usize,
        right: usize,
        samples: usize,
        /// Decrease in total squared error achieved by this split.
        gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Arena; the root is node 0.
    pub nodes: Vec<Node>,
    /// Number of (bootstrap) samples the tree was grown on.
    pub samples: usize,
}

/// Split point between two consecutive distinct sorted values.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= lo && mid < hi { mid } else { lo }
}

impl Tree {
    pub fn predict<F: Fn(usize) -> f64>(&self, value_of: F) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if value_of(*feature) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Features this tree splits on.
    pub fn used_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    /// Grows a tree on `rows` (indices into the columns; repeats allowed).
    /// Every feature is considered at every node; nodes with fewer than
    /// `min_samples_split` samples, constant targets, or no distinct
    /// feature values become leaves. Ties go to the lower feature index and
    /// then the lower threshold.
    pub fn grow(columns: &[&[f64]], targets: &[f64], rows: &[usize], min_samples_split: usize) -> Tree {
        let m = rows.len();
        let y: Vec<f64> = rows.iter().map(|&r| targets[r]).collect();
        // per-feature slot orderings, sorted by value then slot
        let mut order: Vec<Vec<u32>> = columns
            .iter()
            .map(|col| {
                let mut o: Vec<u32> = (0..m as u32).collect();
                o.sort_by(|&a, &b| col[rows[a as usize]].total_cmp(&col[rows[b as usize]]).then(a.cmp(&b)));
                o
            })
            .collect();
        let value = |f: usize, slot: u32| columns[f][rows[slot as usize]];

        let mut nodes = Vec::new();
        let mut goes_left = vec![false; m];
        let mut scratch: Vec<u32> = Vec::with_capacity(m);
        // (node index, lo, hi) over every ordering
        let mut stack = vec![(0usize, 0usize, m)];
        nodes.push(Node::Leaf { value: 0.0, samples: m });

        while let Some((id, lo, hi)) = stack.pop() {
            let n = hi - lo;
            let leaf = |slots: &[u32]| {
                let mut s: Vec<u32> = slots.to_vec();
                s.sort_unstable();
                let sum: f64 = s.iter().map(|&i| y[i as usize]).sum();
                Node::Leaf { value: sum / n as f64, samples: n }
            };
            let slots0 = &order.first().map_or(&[][..], |o| &o[lo..hi]);
            let slots: Vec<u32> = if columns.is_empty() { (lo as u32..hi as u32).collect() } else { slots0.to_vec() };
            let first = y[slots[0] as usize];
            if n < min_samples_split.max(2) || slots.iter().all(|&s| y[s as usize] == first) {
                nodes[id] = leaf(&slots);
                continue;
            }

            let total: f64 = slots.iter().map(|&s| y[s as usize]).sum();
            let total_sq: f64 = slots.iter().map(|&s| y[s as usize] * y[s as usize]).sum();
            let base = total * total / n as f64;
            let tol = GAIN_TOLERANCE * total_sq;
            let mut best: Option<(usize, usize, f64, f64)> = None; // feature, split position, threshold, gain
            for (f, o) in order.iter().enumerate() {
                let o = &o[lo..hi];
                let mut left_sum = 0.0;
                for i in 0..n - 1 {
                    left_sum += y[o[i] as usize];
                    let (a, b) = (value(f, o[i]), value(f, o[i + 1]));
                    if a >= b {
                        continue;
                    }
                    let nl = (i + 1) as f64;
                    let nr = (n - i - 1) as f64;
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
                    if best.is_none_or(|(_, _, _, g)| gain > g + tol) {
                        best = Some((f, i, midpoint(a, b), gain));
                    }
                }
            }
            let Some((feature, pos, threshold, gain)) = best else {
                nodes[id] = leaf(&slots);
                continue;
            };

            for &s in &order[feature][lo..=lo + pos] {
                goes_left[s as usize] = true;
            }
            for o in order.iter_mut() {
                scratch.clear();
                scratch.extend(o[lo..hi].iter().filter(|&&s| goes_left[s as usize]));
                scratch.extend(o[lo..hi].iter().filter(|&&s| !goes_left[s as usize]));
                o[lo..hi].copy_from_slice(&scratch);
            }
            for &s in &order[feature][lo..=lo + pos] {
                goes_left[s as usize] = false;
            }

            let mid = lo + pos + 1;
            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0, samples: mid - lo });
            let right = nodes.len();
            nodes.push(Node::Leaf { value: 0.0, samples: hi - mid });
            nodes[id] = Node::Split { feature, threshold, left, right, samples: n, gain: gain.max(0.0) };
            stack.push((right, mid, hi));
            stack.push((left, lo, mid));
        }
        Tree { nodes, samples: m }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_is_one_leaf() {
        let x = vec![0.0, 1.0, 2.0, 3.0];
        let y = vec![5.0; 4];
        let t = Tree::grow(&[&x], &y, &[0, 1, 2, 3], 2);
        assert_eq!(t.nodes, vec![Node::Leaf { value: 5.0, samples: 4 }]);
    }

    #[test]
    fn step_function() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let t = Tree::grow(&[&x], &y, &[0, 1, 2, 3], 2);
        match t.nodes[0] {
            Node::Split { feature: 0, threshold, gain, .. } => {
                assert_eq!(threshold, 2.5);
                assert_eq!(gain, 1.0);
            }
            ref other => panic!("{other:?}"),
        }
        assert_eq!(t.predict(|_| 1.5), 0.0);
        assert_eq!(t.predict(|_| 3.5), 1.0);
        assert_eq!(t.leaf_count(), 2);
    }

    #[test]
    fn indistinguishable_rows_stay_together() {
        let x = vec![1.0, 1.0];
        let y = vec![0.0, 2.0];
        let t = Tree::grow(&[&x], &y, &[0, 1], 2);
        assert_eq!(t.nodes, vec![Node::Leaf { value: 1.0, samples: 2 }]);
    }

    #[test]
    fn repeated_rows_weigh_more() {
        let x = vec![0.0, 1.0];
        let y = vec![0.0, 3.0];
        let t = Tree::grow(&[&x], &y, &[0, 1, 1, 1], 2);
        assert_eq!(t.samples, 4);
        match &t.nodes[0] {
            Node::Split { samples: 4, .. } => {}
            other => panic!("{other:?}"),
        }
        assert_eq!(t.predict(|_| 1.0), 3.0);
    }

    #[test]
    fn midpoint_of_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), a);
        assert_eq!(midpoint(1.0, 2.0), 1.5);
    }
}
