//! Comparison graphs: Erdos-Renyi sampling and connectivity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ComparisonDataset;
use crate::rng;

/// Undirected simple graph on `0..n`; edges are `(i, j)` with `i > j`, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl ComparisonGraph {
    /// Canonicalises and validates an edge list.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut out = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::invalid(format!("self-loop at {a}")));
            }
            if a.max(b) >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for n = {n}")));
            }
            out.push((a.max(b), a.min(b)));
        }
        out.sort_unstable();
        if out.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate edge"));
        }
        Ok(ComparisonGraph { n, edges: out })
    }

    pub fn of_dataset(dataset: &ComparisonDataset) -> Self {
        ComparisonGraph { n: dataset.n(), edges: dataset.edges().iter().map(|e| (e.i, e.j)).collect() }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (1..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
        ComparisonGraph { n, edges }
    }
}

/// Erdos-Renyi `G(n, p)`. Pairs are visited as `(i, j)`, `i = 1..n`,
/// `j = 0..i`, each consuming exactly one uniform draw from
/// `rng::stream(seed, Graph, 0)`.
pub fn sample_er_graph(n: usize, p: f64, seed: u64) -> Result<ComparisonGraph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("edge probability must lie in [0, 1], got {p}")));
    }
    if n < 2 {
        return Err(Error::invalid(format!("need at least two vertices, got {n}")));
    }
    let mut r = rng::stream(seed, rng::Purpose::Graph, 0);
    let mut edges = Vec::new();
    for i in 1..n {
        for j in 0..i {
            let u: f64 = r.random();
            if u < p {
                edges.push((i, j));
            }
        }
    }
    Ok(ComparisonGraph { n, edges })
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Component label per vertex; a component is labelled by its smallest
/// vertex.
pub fn connected_components(graph: &ComparisonGraph) -> Vec<usize> {
    let mut dsu = DisjointSet::new(graph.n);
    for &(i, j) in &graph.edges {
        dsu.union(i, j);
    }
    let mut label_of_root = vec![usize::MAX; graph.n];
    let mut labels = vec![0; graph.n];
    for (v, label) in labels.iter_mut().enumerate() {
        let root = dsu.find(v);
        if label_of_root[root] == usize::MAX {
            label_of_root[root] = v;
        }
        *label = label_of_root[root];
    }
    labels
}

pub fn component_count(graph: &ComparisonGraph) -> usize {
    connected_components(graph).iter().enumerate().filter(|(v, l)| *v == **l).count()
}

pub fn is_connected(graph: &ComparisonGraph) -> bool {
    graph.n > 0 && component_count(graph) == 1
}

/// Vertices of the largest component, ascending. Ties go to the component
/// holding the smallest vertex.
pub fn largest_component(graph: &ComparisonGraph) -> Vec<usize> {
    if graph.n == 0 {
        return Vec::new();
    }
    let labels = connected_components(graph);
    let mut sizes = vec![0usize; graph.n];
    for &l in &labels {
        sizes[l] += 1;
    }
    // Labels are smallest members, so scanning labels in ascending order
    // and keeping strict improvements breaks ties by smallest index.
    let mut best = 0;
    for l in 0..graph.n {
        if sizes[l] > sizes[best] {
            best = l;
        }
    }
    (0..graph.n).filter(|&v| labels[v] == best).collect()
}

/// Restriction of a dataset to its largest connected component.
#[derive(Debug, Clone)]
pub struct Restriction {
    pub dataset: ComparisonDataset,
    /// `index_map[old] = Some(new)` for kept items.
    pub index_map: Vec<Option<usize>>,
}

impl Restriction {
    pub fn is_identity(&self) -> bool {
        self.index_map.iter().enumerate().all(|(old, new)| *new == Some(old))
    }

    /// `kept[new] = old`.
    pub fn kept(&self) -> Vec<usize> {
        let mut kept = vec![0; self.dataset.n()];
        for (old, new) in self.index_map.iter().enumerate() {
            if let Some(new) = new {
                kept[*new] = old;
            }
        }
        kept
    }
}

pub fn largest_component_restrict(dataset: &ComparisonDataset) -> Result<Restriction> {
    let keep = largest_component(&ComparisonGraph::of_dataset(dataset));
    let (dataset, index_map) = dataset.restrict(&keep)?;
    Ok(Restriction { dataset, index_map })
}
