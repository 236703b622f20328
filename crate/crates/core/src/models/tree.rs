//! Binary decision trees shared by the random forest, the boosted model and
//! the adversarial forest generator.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        /// Number of training rows (counting bootstrap repeats) in the leaf.
        count: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf node reached by `row`.
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.nodes[self.leaf_of(row)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!("leaf_of returns a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Row-major view of a dense feature matrix.
#[derive(Clone, Copy)]
pub struct Rows<'a> {
    pub data: &'a [f64],
    pub ncols: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f64], ncols: usize) -> Self {
        Rows { data, ncols }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.ncols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &'a [f64] {
        &self.data[row * self.ncols..(row + 1) * self.ncols]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GiniParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub min_split: usize,
    /// Number of non-constant features examined per split.
    pub mtry: usize,
}

fn gini_mass(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        let p = pos / n;
        n * 2.0 * p * (1.0 - p)
    }
}

/// Grows a CART classification tree with the Gini criterion. `rows` may
/// contain repeats (bootstrap). Leaves hold the positive fraction.
pub fn grow_gini(x: Rows<'_>, y: &[u8], rows: Vec<usize>, params: GiniParams, rng: &mut Rng) -> Tree {
    let mut nodes = Vec::new();
    let mut stack = vec![(0usize, rows, 0usize)];
    nodes.push(Node::Leaf { value: 0.0, count: 0 });
    let mut features: Vec<usize> = (0..x.ncols).collect();
    let mut buf: Vec<(f64, u8)> = Vec::new();
    while let Some((id, rows, depth)) = stack.pop() {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| y[r] == 1).count();
        let leaf = Node::Leaf {
            value: if n == 0 { 0.0 } else { pos as f64 / n as f64 },
            count: n,
        };
        let can_split = pos > 0
            && pos < n
            && n >= params.min_split.max(2)
            && n >= 2 * params.min_leaf.max(1)
            && params.max_depth.is_none_or(|d| depth < d);
        if !can_split {
            nodes[id] = leaf;
            continue;
        }
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut examined = 0;
        for &f in &features {
            if examined >= params.mtry {
                break;
            }
            buf.clear();
            buf.extend(rows.iter().map(|&r| (x.get(r, f), y[r])));
            buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if buf[0].0 == buf[n - 1].0 {
                continue;
            }
            examined += 1;
            let mut left_pos = 0usize;
            let min_leaf = params.min_leaf.max(1);
            for i in 0..n - 1 {
                left_pos += buf[i].1 as usize;
                if buf[i].0 == buf[i + 1].0 {
                    continue;
                }
                let nl = i + 1;
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let impurity = gini_mass(left_pos as f64, nl as f64)
                    + gini_mass((pos - left_pos) as f64, (n - nl) as f64);
                if best.is_none_or(|(b, _, _)| impurity < b - 1e-12) {
                    best = Some((impurity, f, 0.5 * (buf[i].0 + buf[i + 1].0)));
                }
            }
        }
        match best {
            None => nodes[id] = leaf,
            Some((_, feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&row| x.get(row, feature) <= threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                nodes[id] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
        }
    }
    Tree { nodes }
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub lambda: f64,
}

/// Grows a regression tree on first/second-order loss derivatives with
/// exact greedy splits; leaf weights are `-G / (H + lambda)`.
pub fn grow_newton(
    x: Rows<'_>,
    grad: &[f64],
    hess: &[f64],
    rows: Vec<usize>,
    features: &[usize],
    params: NewtonParams,
) -> Tree {
    let lambda = params.lambda;
    let score = |g: f64, h: f64| g * g / (h + lambda);
    let mut nodes = vec![Node::Leaf { value: 0.0, count: 0 }];
    let mut stack = vec![(0usize, rows, 0usize)];
    let mut buf: Vec<(f64, f64, f64)> = Vec::new();
    while let Some((id, rows, depth)) = stack.pop() {
        let g: f64 = rows.iter().map(|&r| grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| hess[r]).sum();
        let leaf = Node::Leaf {
            value: -g / (h + lambda),
            count: rows.len(),
        };
        if depth >= params.max_depth || rows.len() < 2 {
            nodes[id] = leaf;
            continue;
        }
        let parent = score(g, h);
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in features {
            buf.clear();
            buf.extend(rows.iter().map(|&r| (x.get(r, f), grad[r], hess[r])));
            buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let (mut gl, mut hl) = (0.0, 0.0);
            for i in 0..buf.len() - 1 {
                gl += buf[i].1;
                hl += buf[i].2;
                if buf[i].0 == buf[i + 1].0 {
                    continue;
                }
                let hr = h - hl;
                if hl < params.min_child_weight || hr < params.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (score(gl, hl) + score(g - gl, hr) - parent);
                if best.is_none_or(|(b, _, _)| gain > b + 1e-15) {
                    best = Some((gain, f, 0.5 * (buf[i].0 + buf[i + 1].0)));
                }
            }
        }
        match best {
            Some((gain, feature, threshold)) if gain >= 0.0 => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&row| x.get(row, feature) <= threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                let right = nodes.len();
                nodes.push(Node::Leaf { value: 0.0, count: 0 });
                nodes[id] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                stack.push((right, r, depth + 1));
                stack.push((left, l, depth + 1));
            }
            _ => nodes[id] = leaf,
        }
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn stump_separates_one_feature() {
        let data = [0.0, 5.0, 1.0, 3.0, 2.0, 9.0, 3.0, 1.0];
        let y = [0, 0, 1, 1];
        let x = Rows::new(&data, 2);
        let params = GiniParams { max_depth: Some(1), min_leaf: 1, min_split: 2, mtry: 2 };
        let t = grow_gini(x, &y, vec![0, 1, 2, 3], params, &mut rng::rng(0));
        assert_eq!(t.depth(), 1);
        for r in 0..4 {
            assert_eq!(t.predict_row(x.row(r)), f64::from(y[r]));
        }
    }

    #[test]
    fn min_leaf_respected() {
        let data: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let x = Rows::new(&data, 1);
        let params = GiniParams { max_depth: None, min_leaf: 4, min_split: 2, mtry: 1 };
        let t = grow_gini(x, &y, (0..20).collect(), params, &mut rng::rng(1));
        for n in t.nodes() {
            if let Node::Leaf { count, .. } = n {
                assert!(*count >= 4);
            }
        }
    }

    #[test]
    fn newton_leaf_weight() {
        let data = [0.0, 1.0, 2.0];
        let g = [1.0, 1.0, 1.0];
        let h = [0.5, 0.5, 0.5];
        let params = NewtonParams { max_depth: 0, min_child_weight: 0.0, lambda: 1.0 };
        let t = grow_newton(Rows::new(&data, 1), &g, &h, vec![0, 1, 2], &[0], params);
        assert!((t.predict_row(&[0.0]) + 3.0 / 2.5).abs() < 1e-12);
    }
}
