use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::graph::{greedy_paths, GraphPath, RelationGraph};

/// Relation graph whose edges carry the most likely pairwise transform in
/// both directions. Edge weights are inverse peak likelihoods.
#[derive(Debug, Clone, Default)]
pub struct EstimatorGraph {
    pub graph: RelationGraph,
    relations: BTreeMap<(usize, usize), RigidTransform>,
}

impl EstimatorGraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            graph: RelationGraph::new(node_count),
            relations: BTreeMap::new(),
        }
    }

    /// Adds edge `{a, b}` whose relation maps a's coordinates into b's.
    /// The reverse hop uses the inverse unless set separately.
    pub fn add_relation(&mut self, a: usize, b: usize, weight: f64, a_to_b: RigidTransform) -> Result<()> {
        self.graph.add_edge(a, b, weight)?;
        self.relations.insert((a, b), a_to_b);
        self.relations.entry((b, a)).or_insert_with(|| a_to_b.inverse());
        Ok(())
    }

    /// Overrides the relation used when walking from `a` to `b`.
    pub fn set_directed(&mut self, a: usize, b: usize, a_to_b: RigidTransform) {
        self.relations.insert((a, b), a_to_b);
    }

    pub fn relation(&self, a: usize, b: usize) -> Option<RigidTransform> {
        self.relations.get(&(a, b)).copied()
    }

    /// Composition of the hop relations along `path`, mapping its first
    /// node into its last.
    pub fn concatenate(&self, path: &GraphPath) -> Result<RigidTransform> {
        let mut t = RigidTransform::IDENTITY;
        for (a, b) in path.hops() {
            let hop = self.relation(a, b).ok_or(Error::MissingSpace(a, b))?;
            t = hop.after(&t);
        }
        Ok(t)
    }
}

/// Greedy initialization: each node's concatenated relation to `root` along
/// its first-found path, and that path's confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyInit {
    pub values: Vec<RigidTransform>,
    pub confidences: Vec<f64>,
    pub paths: Vec<GraphPath>,
}

pub fn greedy_init(g: &EstimatorGraph, root: usize) -> Result<GreedyInit> {
    let paths = greedy_paths(&g.graph, root)?;
    let values = paths.iter().map(|p| g.concatenate(p)).collect::<Result<_>>()?;
    Ok(GreedyInit {
        values,
        confidences: paths.iter().map(GraphPath::confidence).collect(),
        paths,
    })
}

/// Indices of the `ceil(fraction * len)` least confident entries of
/// `confidences[1..]` (offset back to full indices), lowest first; ties by index.
pub(crate) fn least_confident(confidences: &[f64], fraction: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..confidences.len()).collect();
    let count = ((fraction * idx.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    idx.sort_by(|&a, &b| confidences[a].total_cmp(&confidences[b]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_init_is_direct_relation() {
        let mut g = EstimatorGraph::new(4);
        let rels = [
            RigidTransform::from_degrees(10.0, 0.0, 40.0),
            RigidTransform::from_degrees(-5.0, 3.0, 200.0),
            RigidTransform::from_degrees(1.0, 1.0, 0.0),
        ];
        for (i, r) in rels.iter().enumerate() {
            g.add_relation(i + 1, 0, 1.0 + i as f64, *r).unwrap();
        }
        let init = greedy_init(&g, 0).unwrap();
        for (i, r) in rels.iter().enumerate() {
            assert_eq!(init.values[i + 1], *r);
            assert_eq!(init.confidences[i + 1], 1.0 / (1.0 + i as f64));
        }
        assert_eq!(init.values[0], RigidTransform::IDENTITY);
    }

    #[test]
    fn chained_relations_compose() {
        let mut g = EstimatorGraph::new(3);
        let r20 = RigidTransform::from_degrees(5.0, -2.0, 30.0);
        let r12 = RigidTransform::from_degrees(-7.0, 4.0, 100.0);
        g.add_relation(2, 0, 1.0, r20).unwrap();
        g.add_relation(1, 2, 1.0, r12).unwrap();
        g.add_relation(1, 0, 50.0, RigidTransform::IDENTITY).unwrap();
        let init = greedy_init(&g, 0).unwrap();
        assert_eq!(init.paths[1].nodes, vec![1, 2, 0]);
        let want = r20.after(&r12);
        let got = init.values[1];
        assert!((got.vx - want.vx).abs() < 1e-12 && (got.vy - want.vy).abs() < 1e-12);
        assert!((got.gamma() - want.gamma()).abs() < 1e-12);
        assert_eq!(init.confidences[1], 1.0);
    }

    #[test]
    fn reverse_hop_uses_inverse() {
        let mut g = EstimatorGraph::new(2);
        let r = RigidTransform::from_degrees(3.0, 4.0, 90.0);
        g.add_relation(0, 1, 1.0, r).unwrap();
        let init = greedy_init(&g, 0).unwrap();
        let back = init.values[1].after(&r);
        assert!(back.translation().norm() < 1e-12 && crate::geometry::angle_diff(back.gamma(), 0.0).abs() < 1e-12);
    }

    #[test]
    fn lowest_confidences_selected() {
        let c = [f64::INFINITY, 0.5, 0.1, 0.9, 0.1];
        assert_eq!(least_confident(&c, 0.3), vec![2, 4]);
        assert_eq!(least_confident(&c, 0.0), Vec::<usize>::new());
        assert_eq!(least_confident(&c[..2], 0.3), vec![1]);
    }
}
