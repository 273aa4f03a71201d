use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::kinematics::layout::{KEYPOINT_EDGES, MID_HIP};
use crate::kinematics::NUM_KEYPOINTS;

/// Neighbor subset of an ordered node pair under spatial-configuration partitioning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subset {
    Root,
    Centripetal,
    Centrifugal,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Root, Subset::Centripetal, Subset::Centrifugal];

    pub fn index(self) -> usize {
        match self {
            Subset::Root => 0,
            Subset::Centripetal => 1,
            Subset::Centrifugal => 2,
        }
    }
}

/// Tree-shaped skeleton graph with a designated center node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonGraph {
    pub num_nodes: usize,
    /// Undirected bones as (parent, child) pairs; the child side is the one farther
    /// from the center.
    pub edges: Vec<(usize, usize)>,
    pub center: usize,
}

impl SkeletonGraph {
    /// The 25-keypoint body graph centered on the mid hip.
    pub fn body25() -> Self {
        SkeletonGraph {
            num_nodes: NUM_KEYPOINTS,
            edges: KEYPOINT_EDGES.to_vec(),
            center: MID_HIP,
        }
    }

    pub fn new(num_nodes: usize, edges: Vec<(usize, usize)>, center: usize) -> Result<Self> {
        let g = SkeletonGraph {
            num_nodes,
            edges,
            center,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn num_bones(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.num_nodes];
        for &(a, b) in &self.edges {
            if a < self.num_nodes && b < self.num_nodes {
                nb[a].push(b);
                nb[b].push(a);
            }
        }
        nb
    }

    /// Checks that the edges form a spanning tree and the center is a node.
    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if self.center >= self.num_nodes {
            return Err(Error::InvalidGraph(format!(
                "center {} out of range",
                self.center
            )));
        }
        for &(a, b) in &self.edges {
            if a >= self.num_nodes || b >= self.num_nodes || a == b {
                return Err(Error::InvalidGraph(format!("bad edge ({a}, {b})")));
            }
        }
        if self.edges.len() + 1 != self.num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} edges cannot form a tree over {} nodes",
                self.edges.len(),
                self.num_nodes
            )));
        }
        if self.hop_distances_unchecked().iter().any(Option::is_none) {
            return Err(Error::InvalidGraph("graph is disconnected".into()));
        }
        Ok(())
    }

    fn hop_distances_unchecked(&self) -> Vec<Option<usize>> {
        let nb = self.neighbors();
        let mut dist = vec![None; self.num_nodes];
        dist[self.center] = Some(0);
        let mut queue = VecDeque::from([self.center]);
        while let Some(i) = queue.pop_front() {
            let d = dist[i].unwrap();
            for &j in &nb[i] {
                if dist[j].is_none() {
                    dist[j] = Some(d + 1);
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    /// Hop distance of every node to the center.
    pub fn hop_distances(&self) -> Result<Vec<usize>> {
        self.validate()?;
        Ok(self
            .hop_distances_unchecked()
            .into_iter()
            .map(Option::unwrap)
            .collect())
    }

    /// Subset of `j` as seen from `i`, or `None` when `j` is neither `i` nor a
    /// 1-hop neighbor.
    pub fn subset(&self, dist: &[usize], i: usize, j: usize) -> Option<Subset> {
        if i == j {
            return Some(Subset::Root);
        }
        let adjacent = self
            .edges
            .iter()
            .any(|&(a, b)| (a == i && b == j) || (a == j && b == i));
        if !adjacent {
            return None;
        }
        Some(if dist[j] < dist[i] {
            Subset::Centripetal
        } else {
            Subset::Centrifugal
        })
    }

    /// Unnormalized 0/1 adjacency of each subset, in [`Subset::ALL`] order.
    pub fn partition_masks(&self) -> Result<[Tensor; 3]> {
        let dist = self.hop_distances()?;
        let v = self.num_nodes;
        let mut masks = [
            Tensor::zeros(&[v, v]),
            Tensor::zeros(&[v, v]),
            Tensor::zeros(&[v, v]),
        ];
        for i in 0..v {
            for j in 0..v {
                if let Some(s) = self.subset(&dist, i, j) {
                    masks[s.index()].data_mut()[i * v + j] = 1.0;
                }
            }
        }
        Ok(masks)
    }

    /// Bone index placed at each node: bone `b` sits at its child node, the center
    /// holds no bone.
    pub fn bone_nodes(&self) -> Vec<usize> {
        self.edges.iter().map(|&(_, child)| child).collect()
    }
}

/// Row-normalized adjacency `D_p⁻¹ A_p` for each subset; zero-degree rows stay zero.
pub fn build_partitioned_adjacency(graph: &SkeletonGraph) -> Result<[Tensor; 3]> {
    let mut masks = graph.partition_masks()?;
    let v = graph.num_nodes;
    for m in &mut masks {
        for row in m.data_mut().chunks_mut(v) {
            let deg: f64 = row.iter().sum();
            if deg > 0.0 {
                row.iter_mut().for_each(|x| *x /= deg);
            }
        }
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> SkeletonGraph {
        // hip(0) - knee(1) - ankle(2)
        SkeletonGraph::new(3, vec![(0, 1), (1, 2)], 0).unwrap()
    }

    #[test]
    fn knee_neighbors_split_by_distance() {
        let g = chain();
        let d = g.hop_distances().unwrap();
        assert_eq!(g.subset(&d, 1, 0), Some(Subset::Centripetal));
        assert_eq!(g.subset(&d, 1, 2), Some(Subset::Centrifugal));
        assert_eq!(g.subset(&d, 1, 1), Some(Subset::Root));
        assert_eq!(g.subset(&d, 0, 2), None);
    }

    #[test]
    fn center_neighbors_are_centrifugal() {
        let g = SkeletonGraph::body25();
        let d = g.hop_distances().unwrap();
        for nb in &g.neighbors()[g.center] {
            assert_eq!(g.subset(&d, g.center, *nb), Some(Subset::Centrifugal));
        }
    }

    #[test]
    fn masks_sum_to_adjacency_plus_identity() {
        let g = SkeletonGraph::body25();
        let m = g.partition_masks().unwrap();
        let v = g.num_nodes;
        let nb = g.neighbors();
        for i in 0..v {
            for j in 0..v {
                let total: f64 = m.iter().map(|t| t.data()[i * v + j]).sum();
                let expected = if i == j || nb[i].contains(&j) {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(total, expected, "({i}, {j})");
            }
        }
    }

    #[test]
    fn normalized_rows_sum_to_zero_or_one() {
        let a = build_partitioned_adjacency(&SkeletonGraph::body25()).unwrap();
        for t in &a {
            for row in t.data().chunks(25) {
                let s: f64 = row.iter().sum();
                assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disconnected_and_cyclic_graphs_rejected() {
        assert!(SkeletonGraph::new(4, vec![(0, 1), (2, 3)], 0).is_err());
        assert!(SkeletonGraph::new(3, vec![(0, 1), (1, 2), (2, 0)], 0).is_err());
        assert!(SkeletonGraph::new(3, vec![(0, 1), (1, 1)], 0).is_err());
        assert!(SkeletonGraph::new(4, vec![(0, 1), (0, 1), (2, 3)], 0).is_err());
    }
}
