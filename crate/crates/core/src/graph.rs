//! Weighted relation graphs and the greedy ascending-edge path search.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected graph over nodes `0..node_count` with at most one edge per
/// unordered pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationGraph {
    node_count: usize,
    edges: BTreeMap<(usize, usize), f64>,
}

impl RelationGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            node_count,
            edges: BTreeMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Inserts or replaces the edge `{a, b}`.
    pub fn add_edge(&mut self, a: usize, b: usize, weight: f64) -> Result<()> {
        if a == b || a >= self.node_count || b >= self.node_count {
            return Err(Error::InvalidInput(format!("bad edge ({a}, {b}) for {} nodes", self.node_count)));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidInput(format!("edge ({a}, {b}) weight {weight} must be finite and positive")));
        }
        self.edges.insert((a.min(b), a.max(b)), weight);
        Ok(())
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.edges.get(&(a.min(b), a.max(b))).copied()
    }

    /// Edges in canonical `(min, max)` order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().map(|(&(a, b), &weight)| Edge { a, b, weight })
    }

    /// Edges sorted ascending by weight, ties by `(a, b)`.
    pub fn sorted_edges(&self) -> Vec<Edge> {
        let mut e: Vec<Edge> = self.edges().collect();
        e.sort_by(|x, y| x.weight.total_cmp(&y.weight).then((x.a, x.b).cmp(&(y.a, y.b))));
        e
    }
}

/// A path from some node to the root, with the weights of its edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPath {
    /// Starts at the image, ends at the root.
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

impl GraphPath {
    /// Inverse of the mean edge weight; infinite for the root's empty path.
    pub fn confidence(&self) -> f64 {
        if self.weights.is_empty() {
            return f64::INFINITY;
        }
        self.weights.len() as f64 / self.weights.iter().sum::<f64>()
    }

    /// Consecutive `(from, to)` hops.
    pub fn hops(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Adds edges in ascending weight order and, the first time a node becomes
/// connected to `root`, records its shortest path in the graph built so far.
/// The root gets the trivial path `[root]`.
pub fn greedy_paths(graph: &RelationGraph, root: usize) -> Result<Vec<GraphPath>> {
    let n = graph.node_count();
    if root >= n {
        return Err(Error::InvalidInput(format!("root {root} not in graph of {n} nodes")));
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut found: Vec<Option<GraphPath>> = vec![None; n];
    found[root] = Some(GraphPath {
        nodes: vec![root],
        weights: Vec::new(),
    });
    let mut remaining = n - 1;
    for e in graph.sorted_edges() {
        if remaining == 0 {
            break;
        }
        adj[e.a].push((e.b, e.weight));
        adj[e.b].push((e.a, e.weight));
        if found[e.a].is_some() == found[e.b].is_some() {
            continue;
        }
        let pred = shortest_path_tree(&adj, root);
        for k in 0..n {
            if found[k].is_none() && pred[k].is_some() {
                found[k] = Some(trace(&pred, k, root));
                remaining -= 1;
            }
        }
    }
    let missing: Vec<usize> = (0..n).filter(|&k| found[k].is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::Disconnected(missing));
    }
    Ok(found.into_iter().map(Option::unwrap).collect())
}

/// Dijkstra from `root`; `pred[k] = (parent, edge weight)` for reached nodes.
/// Ties keep the first-settled parent, and settling is ordered by
/// `(distance, node)`, so the tree is deterministic.
fn shortest_path_tree(adj: &[Vec<(usize, f64)>], root: usize) -> Vec<Option<(usize, f64)>> {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut pred: Vec<Option<(usize, f64)>> = vec![None; n];
    dist[root] = 0.0;
    pred[root] = Some((root, 0.0));
    loop {
        let next = (0..n)
            .filter(|&k| !done[k] && dist[k].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let Some(u) = next else { break };
        done[u] = true;
        for &(v, w) in &adj[u] {
            if !done[v] && dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                pred[v] = Some((u, w));
            }
        }
    }
    pred
}

fn trace(pred: &[Option<(usize, f64)>], from: usize, root: usize) -> GraphPath {
    let mut nodes = vec![from];
    let mut weights = Vec::new();
    let mut k = from;
    while k != root {
        let (p, w) = pred[k].expect("node is reachable");
        nodes.push(p);
        weights.push(w);
        k = p;
    }
    GraphPath { nodes, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> RelationGraph {
        let mut g = RelationGraph::new(n);
        for &(a, b, w) in edges {
            g.add_edge(a, b, w).unwrap();
        }
        g
    }

    #[test]
    fn star_uses_direct_edges() {
        let g = graph(5, &[(0, 1, 3.0), (0, 2, 1.0), (0, 3, 2.0), (0, 4, 5.0)]);
        let p = greedy_paths(&g, 0).unwrap();
        for k in 1..5 {
            assert_eq!(p[k].nodes, vec![k, 0]);
        }
        assert_eq!(p[4].confidence(), 0.2);
    }

    #[test]
    fn two_hop_cheaper_than_direct() {
        // Nodes: 0 = reference, 1, 2 historical.
        let g = graph(3, &[(1, 0, 10.0), (1, 2, 1.0), (2, 0, 1.0)]);
        let p = greedy_paths(&g, 0).unwrap();
        assert_eq!(p[1].nodes, vec![1, 2, 0]);
        assert_eq!(p[2].nodes, vec![2, 0]);
        assert_eq!(p[1].confidence(), 1.0);
    }

    #[test]
    fn five_image_topology() {
        // Root 0; images 2 and 4 are confidently tied to the root, 1 and 3
        // reach it only through a neighbor.
        let g = graph(
            5,
            &[
                (2, 0, 1.0),
                (4, 0, 1.2),
                (1, 2, 1.5),
                (3, 4, 2.0),
                (1, 0, 6.0),
                (3, 0, 7.0),
                (1, 3, 4.0),
                (2, 4, 3.0),
            ],
        );
        let p = greedy_paths(&g, 0).unwrap();
        assert_eq!(p[2].nodes, vec![2, 0]);
        assert_eq!(p[4].nodes, vec![4, 0]);
        assert_eq!(p[1].nodes, vec![1, 2, 0]);
        assert_eq!(p[3].nodes, vec![3, 4, 0]);
        let mut conf: Vec<(f64, usize)> = (1..5).map(|k| (p[k].confidence(), k)).collect();
        conf.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!([conf[0].1, conf[1].1], [3, 1]);
    }

    #[test]
    fn ties_are_deterministic() {
        let g = graph(4, &[(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)]);
        let p = greedy_paths(&g, 0).unwrap();
        assert_eq!(p[3].nodes, vec![3, 1, 0]);
        assert_eq!(greedy_paths(&g, 0).unwrap(), p);
    }

    #[test]
    fn disconnected_lists_unreachable() {
        let g = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        match greedy_paths(&g, 0) {
            Err(Error::Disconnected(v)) => assert_eq!(v, vec![2, 3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_weights() {
        let mut g = RelationGraph::new(2);
        assert!(g.add_edge(0, 1, 0.0).is_err());
        assert!(g.add_edge(0, 1, f64::NAN).is_err());
        assert!(g.add_edge(0, 0, 1.0).is_err());
    }

    /// Replays the greedy rule literally: after each insertion, every node
    /// without a path takes the minimum-weight simple path to the root, found
    /// by exhaustive enumeration.
    fn replay(g: &RelationGraph, root: usize) -> Vec<Vec<usize>> {
        let n = g.node_count();
        let mut inserted: Vec<Edge> = Vec::new();
        let mut out: Vec<Option<Vec<usize>>> = vec![None; n];
        out[root] = Some(vec![root]);
        for e in g.sorted_edges() {
            inserted.push(e);
            for k in 0..n {
                if out[k].is_some() {
                    continue;
                }
                let mut best: Option<(f64, Vec<usize>)> = None;
                let mut stack = vec![(vec![k], 0.0)];
                while let Some((path, cost)) = stack.pop() {
                    let last = *path.last().unwrap();
                    if last == root {
                        if best.as_ref().is_none_or(|b| cost < b.0 - 1e-12) {
                            best = Some((cost, path));
                        }
                        continue;
                    }
                    for f in &inserted {
                        let next = if f.a == last { f.b } else if f.b == last { f.a } else { continue };
                        if !path.contains(&next) {
                            let mut p = path.clone();
                            p.push(next);
                            stack.push((p, cost + f.weight));
                        }
                    }
                }
                out[k] = best.map(|b| b.1);
            }
        }
        out.into_iter().map(Option::unwrap).collect()
    }

    #[test]
    fn random_graphs_match_replay() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut g = RelationGraph::new(6);
            for a in 0..6 {
                for b in a + 1..6 {
                    if rng.random_bool(0.6) {
                        // Distinct random weights keep shortest paths unique.
                        g.add_edge(a, b, rng.random_range(0.1..10.0)).unwrap();
                    }
                }
            }
            for k in 1..6 {
                if g.weight(0, k).is_none() && (1..6).all(|j| g.weight(j, k).is_none()) {
                    g.add_edge(0, k, rng.random_range(0.1..10.0)).unwrap();
                }
            }
            let Ok(paths) = greedy_paths(&g, 0) else {
                continue;
            };
            let want = replay(&g, 0);
            for k in 0..6 {
                assert_eq!(paths[k].nodes, want[k]);
            }
        }
    }
}
