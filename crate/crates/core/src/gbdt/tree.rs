//! Regression trees fit to λ targets with Newton leaf values. Split
//! search is exact greedy over presorted feature columns; growth is
//! best-first (leaf-wise) up to a leaf budget.

use rayon::prelude::*;

/// One tree node; children are indices into the tree's node vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize, gain: f64 },
    Leaf { value: f64 },
}

/// A fitted binary regression tree (node 0 is the root).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub(crate) nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// (feature, gain) of every internal node, for importance accounting.
    pub fn split_gains(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, gain, .. } => Some((*feature, *gain)),
            Node::Leaf { .. } => None,
        })
    }
}

const H_EPS: f64 = 1e-9;
const MIN_GAIN: f64 = 1e-12;

fn leaf_score(g: f64, h: f64) -> f64 {
    g * g / (h + H_EPS)
}

fn leaf_value(g: f64, h: f64) -> f64 {
    if h > 0.0 {
        g / h
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitPlan {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best split of one node given its per-feature sorted row lists.
fn best_split(
    data: &[Vec<f64>],
    lists: &[Vec<u32>],
    lambdas: &[f64],
    weights: &[f64],
    g_total: f64,
    h_total: f64,
) -> Option<SplitPlan> {
    let parent = leaf_score(g_total, h_total);
    let per_feature: Vec<Option<SplitPlan>> = lists
        .par_iter()
        .enumerate()
        .map(|(feature, rows)| {
            let mut best: Option<SplitPlan> = None;
            let mut g_left = 0.0;
            let mut h_left = 0.0;
            for pair in rows.windows(2) {
                let (r, next) = (pair[0] as usize, pair[1] as usize);
                g_left += lambdas[r];
                h_left += weights[r];
                let (v, v_next) = (data[r][feature], data[next][feature]);
                if v == v_next {
                    continue;
                }
                let gain = leaf_score(g_left, h_left)
                    + leaf_score(g_total - g_left, h_total - h_left)
                    - parent;
                if gain > MIN_GAIN && best.is_none_or(|b| gain > b.gain) {
                    best = Some(SplitPlan { gain, feature, threshold: (v + v_next) / 2.0 });
                }
            }
            best
        })
        .collect();
    // Lowest feature index wins ties, for determinism.
    per_feature
        .into_iter()
        .flatten()
        .max_by(|a, b| a.gain.total_cmp(&b.gain).then(b.feature.cmp(&a.feature)))
}

struct OpenLeaf {
    node: usize,
    lists: Vec<Vec<u32>>,
    g: f64,
    h: f64,
    plan: Option<SplitPlan>,
}

/// Fit one tree to the λ targets. `sorted_lists` holds every row index
/// ordered by each feature's value (ties by row), shared across rounds
/// because feature values never change.
pub(crate) fn fit_tree(
    data: &[Vec<f64>],
    sorted_lists: &[Vec<u32>],
    lambdas: &[f64],
    weights: &[f64],
    max_leaves: usize,
) -> RegressionTree {
    let g_root: f64 = lambdas.iter().sum();
    let h_root: f64 = weights.iter().sum();
    let mut nodes = vec![Node::Leaf { value: leaf_value(g_root, h_root) }];
    if max_leaves < 2 {
        return RegressionTree { nodes };
    }
    let root_plan = best_split(data, sorted_lists, lambdas, weights, g_root, h_root);
    let mut open = vec![OpenLeaf {
        node: 0,
        lists: sorted_lists.to_vec(),
        g: g_root,
        h: h_root,
        plan: root_plan,
    }];
    let mut n_leaves = 1;
    while n_leaves < max_leaves {
        // Split the open leaf whose planned split gains most (ties: the
        // earliest-created node).
        let Some(pick) = open
            .iter()
            .enumerate()
            .filter(|(_, l)| l.plan.is_some())
            .max_by(|(ia, a), (ib, b)| {
                let (ga, gb) = (a.plan.unwrap().gain, b.plan.unwrap().gain);
                ga.total_cmp(&gb).then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        let leaf = open.swap_remove(pick);
        let plan = leaf.plan.expect("picked leaves carry a plan");

        // Route rows; the first list is in parent order, preserving the
        // sort when filtered.
        let n_rows = data.len();
        let mut goes_left = vec![false; n_rows];
        let mut g_left = 0.0;
        let mut h_left = 0.0;
        let mut left_count = 0usize;
        for &r in &leaf.lists[plan.feature] {
            if data[r as usize][plan.feature] <= plan.threshold {
                goes_left[r as usize] = true;
                g_left += lambdas[r as usize];
                h_left += weights[r as usize];
                left_count += 1;
            }
        }
        let node_rows = leaf.lists[plan.feature].len();
        let mut left_lists = Vec::with_capacity(leaf.lists.len());
        let mut right_lists = Vec::with_capacity(leaf.lists.len());
        for list in &leaf.lists {
            let mut l = Vec::with_capacity(left_count);
            let mut r = Vec::with_capacity(node_rows - left_count);
            for &row in list {
                if goes_left[row as usize] {
                    l.push(row);
                } else {
                    r.push(row);
                }
            }
            left_lists.push(l);
            right_lists.push(r);
        }
        let (g_right, h_right) = (leaf.g - g_left, leaf.h - h_left);

        let left_id = nodes.len();
        nodes.push(Node::Leaf { value: leaf_value(g_left, h_left) });
        let right_id = nodes.len();
        nodes.push(Node::Leaf { value: leaf_value(g_right, h_right) });
        nodes[leaf.node] = Node::Split {
            feature: plan.feature,
            threshold: plan.threshold,
            left: left_id,
            right: right_id,
            gain: plan.gain,
        };
        n_leaves += 1;

        let left_plan = best_split(data, &left_lists, lambdas, weights, g_left, h_left);
        open.push(OpenLeaf { node: left_id, lists: left_lists, g: g_left, h: h_left, plan: left_plan });
        let right_plan = best_split(data, &right_lists, lambdas, weights, g_right, h_right);
        open.push(OpenLeaf {
            node: right_id,
            lists: right_lists,
            g: g_right,
            h: h_right,
            plan: right_plan,
        });
    }
    RegressionTree { nodes }
}

/// Sorted row indices per feature (value ascending, row index on ties).
pub(crate) fn presort_columns(data: &[Vec<f64>]) -> Vec<Vec<u32>> {
    if data.is_empty() {
        return Vec::new();
    }
    (0..data[0].len())
        .into_par_iter()
        .map(|feature| {
            let mut idx: Vec<u32> = (0..data.len() as u32).collect();
            idx.sort_by(|&a, &b| {
                data[a as usize][feature]
                    .total_cmp(&data[b as usize][feature])
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(data: &[Vec<f64>], lambdas: &[f64], weights: &[f64], max_leaves: usize) -> RegressionTree {
        let sorted = presort_columns(data);
        fit_tree(data, &sorted, lambdas, weights, max_leaves)
    }

    #[test]
    fn a_step_function_is_recovered_with_two_newton_leaves() {
        let data: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let lambdas: Vec<f64> = (0..10).map(|i| if i < 4 { -2.0 } else { 3.0 }).collect();
        let weights = vec![1.0; 10];
        let tree = fit(&data, &lambdas, &weights, 2);
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.predict(&[0.0]), -2.0);
        assert_eq!(tree.predict(&[9.0]), 3.0);
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 3.5);
            }
            other => panic!("root should split, got {other:?}"),
        }
    }

    #[test]
    fn leaf_budget_is_respected_and_internals_have_two_children() {
        let data: Vec<Vec<f64>> =
            (0..64).map(|i| vec![(i % 8) as f64, (i / 8) as f64]).collect();
        let lambdas: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let weights = vec![1.0; 64];
        for budget in [2, 4, 7, 150] {
            let tree = fit(&data, &lambdas, &weights, budget);
            assert!(tree.n_leaves() <= budget);
            let splits = tree.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count();
            assert_eq!(splits + tree.n_leaves(), tree.nodes.len());
            assert_eq!(tree.n_leaves(), splits + 1, "binary tree leaf/internal balance");
        }
    }

    #[test]
    fn constant_features_are_never_split() {
        let data: Vec<Vec<f64>> = (0..12).map(|_| vec![1.5, -0.25]).collect();
        let lambdas: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let tree = fit(&data, &lambdas, &vec![1.0; 12], 150);
        assert_eq!(tree.n_leaves(), 1);
        // The single leaf carries the Newton value over everything.
        assert!((tree.predict(&[1.5, -0.25]) - 66.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn zero_hessian_leaves_predict_zero() {
        let data: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let tree = fit(&data, &[0.0; 4], &[0.0; 4], 3);
        assert_eq!(tree.predict(&[2.0]), 0.0);
    }

    #[test]
    fn deeper_trees_fit_the_targets_at_least_as_well() {
        let data: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let targets: Vec<f64> = (0..40).map(|i| ((i as f64) * 0.7).sin() * 2.0).collect();
        let weights = vec![1.0; 40];
        let sse = |tree: &RegressionTree| -> f64 {
            data.iter()
                .zip(&targets)
                .map(|(x, t)| (tree.predict(x) - t).powi(2))
                .sum()
        };
        let shallow = fit(&data, &targets, &weights, 2);
        let deep = fit(&data, &targets, &weights, 16);
        assert!(sse(&deep) <= sse(&shallow) + 1e-12);
        assert!(deep.n_leaves() > shallow.n_leaves());
    }
}
