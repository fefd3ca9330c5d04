//! Compressed sparse row graphs shared by the level graphs and the solvers.

use std::collections::VecDeque;

/// Undirected graph in CSR form. Every edge is stored in both directions.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Graph {
    /// Builds a graph by asking `fill` for the neighbours of each vertex.
    ///
    /// The neighbour relation must already be symmetric; self loops are dropped.
    pub fn from_fn(n: usize, mut fill: impl FnMut(usize, &mut Vec<usize>)) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        let mut buf = Vec::new();
        offsets.push(0);
        for i in 0..n {
            buf.clear();
            fill(i, &mut buf);
            buf.sort_unstable();
            buf.dedup();
            targets.extend(buf.iter().filter(|&&j| j != i).map(|&j| j as u32));
            offsets.push(targets.len());
        }
        Self { offsets, targets }
    }

    /// Builds a graph from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        Self::from_fn(n, |i, buf| buf.extend_from_slice(&adj[i]))
    }

    /// A path with `n_edges` edges (so `n_edges + 1` vertices).
    pub fn path(n_edges: usize) -> Self {
        let edges: Vec<_> = (0..n_edges).map(|i| (i, i + 1)).collect();
        Self::from_edges(n_edges + 1, &edges)
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.len()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    /// Undirected edges `(a, b)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |a| {
            self.neighbors(a)
                .iter()
                .map(|&b| b as usize)
                .filter(move |&b| a < b)
                .map(move |b| (a, b))
        })
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    /// Induced subgraph on `vertices` (indices into `self`), relabelled `0..vertices.len()`.
    pub fn induced(&self, vertices: &[usize]) -> Graph {
        let mut local = vec![u32::MAX; self.len()];
        for (k, &v) in vertices.iter().enumerate() {
            local[v] = k as u32;
        }
        Graph::from_fn(vertices.len(), |k, buf| {
            for &u in self.neighbors(vertices[k]) {
                let l = local[u as usize];
                if l != u32::MAX {
                    buf.push(l as usize);
                }
            }
        })
    }

    /// Connected component label of every vertex, and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.len()];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for s in 0..self.len() {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = count;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                for &u in self.neighbors(v) {
                    let u = u as usize;
                    if label[u] == usize::MAX {
                        label[u] = count;
                        queue.push_back(u);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.len()).all(|a| self.neighbors(a).iter().all(|&b| self.has_edge(b as usize, a)))
    }

    pub fn is_irreflexive(&self) -> bool {
        (0..self.len()).all(|a| !self.has_edge(a, a))
    }
}
