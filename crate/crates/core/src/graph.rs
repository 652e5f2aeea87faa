//! Undirected communication topology over `K` learners.
//!
//! Nodes are `0..K`. Edges are stored once as `(k, l)` with `k < l`, and
//! the adjacency lists are sorted so neighbor iteration order is stable.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::Rng as _;

use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

/// A connected Erdős–Rényi draw together with the number of draws it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledGraph {
    pub graph: Graph,
    pub attempts: usize,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate pairs (in either
    /// orientation) are merged; self-loops and out-of-range indices are
    /// rejected.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::Parameter("graph needs at least one node".into()));
        }
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::Parameter(format!(
                    "edge ({a}, {b}) out of range for {num_nodes} nodes"
                )));
            }
            if a == b {
                return Err(Error::Parameter(format!("self-loop at node {a}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(a, b) in &norm {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges: norm,
            adjacency,
        })
    }

    pub fn empty(num_nodes: usize) -> Result<Self> {
        Self::from_edges(num_nodes, &[])
    }

    pub fn complete(num_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (0..num_nodes)
            .flat_map(|a| (a + 1..num_nodes).map(move |b| (a, b)))
            .collect();
        Self::from_edges(num_nodes, &edges)
    }

    pub fn path(num_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (1..num_nodes).map(|b| (b - 1, b)).collect();
        Self::from_edges(num_nodes, &edges)
    }

    /// Star with node 0 at the center.
    pub fn star(num_nodes: usize) -> Result<Self> {
        let edges: Vec<_> = (1..num_nodes).map(|b| (0, b)).collect();
        Self::from_edges(num_nodes, &edges)
    }

    pub fn cycle(num_nodes: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..num_nodes).map(|b| (b - 1, b)).collect();
        if num_nodes > 2 {
            edges.push((num_nodes - 1, 0));
        }
        Self::from_edges(num_nodes, &edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Unordered edges, each as `(k, l)` with `k < l`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor indices of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.num_nodes && self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Index of the unordered edge `{a, b}` in [`Graph::edges`].
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        self.bfs_from(0, &mut vec![false; self.num_nodes]) == self.num_nodes
    }

    fn bfs_from(&self, start: usize, seen: &mut [bool]) -> usize {
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 0;
        while let Some(n) = queue.pop_front() {
            count += 1;
            for &m in &self.adjacency[n] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        count
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.num_nodes];
        let mut out = Vec::new();
        for start in 0..self.num_nodes {
            if seen[start] {
                continue;
            }
            let before: Vec<bool> = seen.clone();
            self.bfs_from(start, &mut seen);
            let comp: Vec<usize> = (0..self.num_nodes)
                .filter(|&i| seen[i] && !before[i])
                .collect();
            out.push(comp);
        }
        out
    }

    /// Induced subgraph on `nodes`, relabeled `0..nodes.len()` in the given order.
    pub fn subgraph(&self, nodes: &[usize]) -> Result<Self> {
        let mut local = vec![usize::MAX; self.num_nodes];
        for (i, &n) in nodes.iter().enumerate() {
            local[n] = i;
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .filter(|(a, b)| local[*a] != usize::MAX && local[*b] != usize::MAX)
            .map(|&(a, b)| (local[a], local[b]))
            .collect();
        Self::from_edges(nodes.len(), &edges)
    }

    pub fn is_forest(&self) -> bool {
        self.edges.len() + self.components().len() == self.num_nodes
    }

    /// Edge-list text: one `k l` pair per line, preceded by a `# nodes: K`
    /// header so isolated trailing nodes survive a round trip.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# nodes: {}", self.num_nodes);
        for (a, b) in &self.edges {
            let _ = writeln!(s, "{a} {b}");
        }
        s
    }

    /// Parses the edge-list format. Blank lines and `#` comments are
    /// ignored; without a `# nodes:` header the node count is one more than
    /// the largest index seen.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(n) = rest.trim().strip_prefix("nodes:") {
                    let n = n.trim().parse::<usize>().map_err(|_| {
                        Error::Parameter(format!("line {}: bad node count", lineno + 1))
                    })?;
                    declared = Some(n);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize> {
                tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                    Error::Parameter(format!("line {}: expected `k l`", lineno + 1))
                })
            };
            let a = parse(it.next())?;
            let b = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Parameter(format!(
                    "line {}: trailing tokens",
                    lineno + 1
                )));
            }
            edges.push((a, b));
        }
        let inferred = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
        let n = declared.unwrap_or(inferred);
        Self::from_edges(n, &edges)
    }
}

fn check_er_params(num_nodes: usize, connection_prob: f64) -> Result<()> {
    if num_nodes < 2 {
        return Err(Error::Parameter(format!(
            "random graph needs at least 2 nodes, got {num_nodes}"
        )));
    }
    if !(connection_prob > 0.0 && connection_prob <= 1.0) {
        return Err(Error::Parameter(format!(
            "connection probability must lie in (0, 1], got {connection_prob}"
        )));
    }
    Ok(())
}

/// Erdős–Rényi graph: every unordered pair is kept independently with
/// probability `connection_prob`, pairs visited in lexicographic order.
pub fn generate_er(num_nodes: usize, connection_prob: f64, seed: u64) -> Result<Graph> {
    check_er_params(num_nodes, connection_prob)?;
    let mut rng = seeded_rng(seed);
    let mut edges = Vec::new();
    for a in 0..num_nodes {
        for b in a + 1..num_nodes {
            if rng.random::<f64>() < connection_prob {
                edges.push((a, b));
            }
        }
    }
    Graph::from_edges(num_nodes, &edges)
}

/// Rejection sampler: attempt `i` (0-based) draws with seed `seed + i` and
/// the first connected draw is returned.
pub fn sample_connected_er(
    num_nodes: usize,
    connection_prob: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<SampledGraph> {
    check_er_params(num_nodes, connection_prob)?;
    if max_attempts == 0 {
        return Err(Error::Parameter("max_attempts must be at least 1".into()));
    }
    for attempt in 0..max_attempts {
        let graph = generate_er(num_nodes, connection_prob, seed.wrapping_add(attempt as u64))?;
        if graph.is_connected() {
            return Ok(SampledGraph {
                graph,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::SamplingFailed {
        attempts: max_attempts,
    })
}
