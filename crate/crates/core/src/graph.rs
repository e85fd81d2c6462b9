//! Time-invariant directed communication graphs.
//!
//! An edge `(i, j)` means `j ∈ N_i`: agent `i` reads agent `j`'s values, so in
//! a message pass `j` sends to `i`. Every node is its own neighbor.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    node_count: usize,
    /// Sorted out-neighbor lists, self included.
    neighbors: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidInput("graph needs at least one node".into()));
        }
        let mut sets: Vec<BTreeSet<usize>> = (0..node_count).map(|i| BTreeSet::from([i])).collect();
        for &(i, j) in edges {
            for node in [i, j] {
                if node >= node_count {
                    return Err(Error::NodeOutOfRange {
                        node,
                        nodes: node_count,
                    });
                }
            }
            sets[i].insert(j);
        }
        Ok(Self {
            node_count,
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn complete(node_count: usize) -> Result<Self> {
        let edges: Vec<_> = (0..node_count)
            .flat_map(|i| (0..node_count).map(move |j| (i, j)))
            .collect();
        Self::new(node_count, &edges)
    }

    /// Edges `(i, i+1 mod N)`.
    pub fn directed_ring(node_count: usize) -> Result<Self> {
        let edges: Vec<_> = (0..node_count).map(|i| (i, (i + 1) % node_count.max(1))).collect();
        Self::new(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Explicit edges excluding self-loops.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j != i).map(move |&j| (i, j)))
            .collect()
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.node_count {
            return Err(Error::NodeOutOfRange {
                node: i,
                nodes: self.node_count,
            });
        }
        Ok(())
    }

    /// `N_i`, sorted, always containing `i`.
    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        self.check(i)?;
        Ok(&self.neighbors[i])
    }

    /// Nodes `i` with `j ∈ N_i`, i.e. the recipients of `j`'s messages.
    pub fn readers_of(&self, j: usize) -> Result<Vec<usize>> {
        self.check(j)?;
        Ok((0..self.node_count)
            .filter(|&i| self.neighbors[i].binary_search(&j).is_ok())
            .collect())
    }

    /// Shortest hop distance from `i` to every node (`None` if unreachable).
    pub fn distances_from(&self, i: usize) -> Result<Vec<Option<usize>>> {
        self.check(i)?;
        let mut dist = vec![None; self.node_count];
        dist[i] = Some(0);
        let mut queue = VecDeque::from([i]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// `N_i^d`: nodes reachable from `i` in at most `d` hops, sorted.
    pub fn dhop(&self, i: usize, d: usize) -> Result<Vec<usize>> {
        Ok(self
            .distances_from(i)?
            .into_iter()
            .enumerate()
            .filter_map(|(j, dist)| dist.filter(|&h| h <= d).map(|_| j))
            .collect())
    }

    pub fn diameter(&self) -> Result<usize> {
        let mut diam = 0;
        for i in 0..self.node_count {
            for (j, dist) in self.distances_from(i)?.into_iter().enumerate() {
                match dist {
                    Some(h) => diam = diam.max(h),
                    None => return Err(Error::NotStronglyConnected { from: i, to: j }),
                }
            }
        }
        Ok(diam)
    }
}
