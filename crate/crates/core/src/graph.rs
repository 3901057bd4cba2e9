//! Directed graphs over variable blocks, with deterministic DOT export.

use std::collections::BTreeSet;

/// Directed graph with one node per block. Self-loops are tracked per node
/// rather than stored in the edge list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    nodes: Vec<String>,
    /// Edges `(from, to)` with `from != to`, sorted.
    edges: BTreeSet<(usize, usize)>,
    self_loops: Vec<bool>,
}

impl Digraph {
    pub fn new(nodes: Vec<String>) -> Self {
        let n = nodes.len();
        Digraph {
            nodes,
            edges: BTreeSet::new(),
            self_loops: vec![false; n],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        if from == to {
            self.self_loops[from] = true;
        } else {
            self.edges.insert((from, to));
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        if from == to {
            self.self_loops[from]
        } else {
            self.edges.contains(&(from, to))
        }
    }

    pub fn has_self_loop(&self, node: usize) -> bool {
        self.self_loops[node]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Parents of `node`: sources of edges into it, including itself when the
    /// node carries a self-loop.
    pub fn parents(&self, node: usize) -> BTreeSet<usize> {
        let mut out: BTreeSet<usize> = self
            .edges
            .iter()
            .filter(|&&(_, to)| to == node)
            .map(|&(from, _)| from)
            .collect();
        if self.self_loops[node] {
            out.insert(node);
        }
        out
    }

    /// True when the graph (ignoring self-loops) has no directed cycle.
    pub fn is_acyclic_ignoring_self_loops(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Topological order over the non-self-loop edges, if one exists.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for &(_, to) in &self.edges {
            indegree[to] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(next) = ready.pop() {
            order.push(next);
            for &(from, to) in &self.edges {
                if from == next {
                    indegree[to] -= 1;
                    if indegree[to] == 0 {
                        ready.push(to);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// DOT rendering. Byte-stable: nodes in block order, then all edges
    /// (self-loops included) sorted by source and target index, two-space
    /// indent, quoted identifiers.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph {\n");
        for name in &self.nodes {
            out.push_str(&format!("  \"{name}\";\n"));
        }
        let mut all_edges: Vec<(usize, usize)> = self.edges.iter().copied().collect();
        for (i, &sl) in self.self_loops.iter().enumerate() {
            if sl {
                all_edges.push((i, i));
            }
        }
        all_edges.sort();
        for (from, to) in all_edges {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\";\n",
                self.nodes[from], self.nodes[to]
            ));
        }
        out.push_str("}\n");
        out
    }
}
