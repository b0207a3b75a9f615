//! Undirected connected graphs over dense node indices `0..n`.
//!
//! Graphs come either from a generator descriptor (`path:16`, `grid:4x4`,
//! `gnp:32:0.2:7`, ...) or from an edge-list text. All-pairs hop distances
//! are computed eagerly by [`distances`].

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Connectivity resampling limit for `gnp` descriptors.
pub const GNP_RETRY_CAP: u32 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("malformed graph descriptor `{spec}`: {reason}")]
    BadSpec { spec: String, reason: String },
    #[error("gnp graph still disconnected after {cap} resampling attempts")]
    GnpRetryCap { cap: u32 },
    #[error("line {line}: cannot parse edge: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: self-loop on node {node}")]
    SelfLoop { line: usize, node: usize },
    #[error("edge ({u}, {v}) references a node outside 0..{n}")]
    NodeOutOfRange { u: usize, v: usize, n: usize },
    #[error("graph is disconnected: node {unreachable} is not reachable from node 0")]
    Disconnected { unreachable: usize },
    #[error("graph has no nodes")]
    Empty,
}

/// Generator descriptor. The textual form is what the CLI accepts.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Path(usize),
    Cycle(usize),
    Clique(usize),
    Grid { width: usize, height: usize },
    /// Uniform random labeled tree (Prüfer decoding).
    Tree { n: usize, seed: u64 },
    /// Erdős–Rényi G(n, p), resampled until connected.
    Gnp { n: usize, p: f64, seed: u64 },
}

impl GraphSpec {
    pub fn node_count(&self) -> usize {
        match *self {
            GraphSpec::Path(n) | GraphSpec::Cycle(n) | GraphSpec::Clique(n) => n,
            GraphSpec::Grid { width, height } => width * height,
            GraphSpec::Tree { n, .. } | GraphSpec::Gnp { n, .. } => n,
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Path(n) => write!(f, "path:{n}"),
            GraphSpec::Cycle(n) => write!(f, "cycle:{n}"),
            GraphSpec::Clique(n) => write!(f, "clique:{n}"),
            GraphSpec::Grid { width, height } => write!(f, "grid:{width}x{height}"),
            GraphSpec::Tree { n, seed } => write!(f, "tree:{n}:{seed}"),
            GraphSpec::Gnp { n, p, seed } => write!(f, "gnp:{n}:{p}:{seed}"),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |reason: &str| GraphError::BadSpec {
            spec: s.to_string(),
            reason: reason.to_string(),
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        let count = |text: &str| -> Result<usize, GraphError> {
            let n: usize = text.parse().map_err(|_| bad("node count must be an integer"))?;
            if n == 0 {
                return Err(bad("node count must be at least 1"));
            }
            Ok(n)
        };
        let seed = |text: &str| -> Result<u64, GraphError> {
            text.parse().map_err(|_| bad("seed must be a 64-bit unsigned integer"))
        };
        match parts.as_slice() {
            ["path", n] => Ok(GraphSpec::Path(count(n)?)),
            ["cycle", n] => {
                let n = count(n)?;
                if n < 3 {
                    return Err(bad("cycle needs at least 3 nodes"));
                }
                Ok(GraphSpec::Cycle(n))
            }
            ["clique", n] => Ok(GraphSpec::Clique(count(n)?)),
            ["grid", dims] => {
                let (w, h) = dims
                    .split_once('x')
                    .ok_or_else(|| bad("grid expects WxH"))?;
                Ok(GraphSpec::Grid {
                    width: count(w)?,
                    height: count(h)?,
                })
            }
            ["tree", n, s] => Ok(GraphSpec::Tree {
                n: count(n)?,
                seed: seed(s)?,
            }),
            ["gnp", n, p, s] => {
                let p: f64 = p.parse().map_err(|_| bad("edge probability must be a float"))?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(bad("edge probability must lie in (0, 1]"));
                }
                Ok(GraphSpec::Gnp {
                    n: count(n)?,
                    p,
                    seed: seed(s)?,
                })
            }
            _ => Err(bad(
                "expected path:n, cycle:n, clique:n, grid:WxH, tree:n:seed or gnp:n:p:seed",
            )),
        }
    }
}

/// An undirected connected simple graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate edges (in either
    /// orientation) are collapsed.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::NodeOutOfRange { u, v, n });
            }
            if u == v {
                return Err(GraphError::SelfLoop { line: 0, node: u });
            }
            set.insert((u.min(v), u.max(v)));
        }
        let graph = Self::from_canonical(n, set.into_iter().collect());
        graph.check_connected()?;
        Ok(graph)
    }

    fn from_canonical(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Graph { n, adj, edges }
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        match self.first_unreachable() {
            Some(unreachable) => Err(GraphError::Disconnected { unreachable }),
            None => Ok(()),
        }
    }

    fn first_unreachable(&self) -> Option<usize> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Sorted neighbor list of `u`.
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adj[u].binary_search(&v).is_ok()
    }

    /// Serializes to the edge-list text format understood by
    /// [`load_edge_list`]. The `# nodes` line keeps single-node graphs
    /// representable.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# nodes {}\n", self.n);
        for &(u, v) in &self.edges {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    /// A shortest path from `from` to `to` as a vertex sequence, picking the
    /// lowest-index neighbor at each hop.
    pub fn shortest_path(&self, dist: &DistanceTable, from: usize, to: usize) -> Vec<usize> {
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            let want = dist.get(cur, to) - 1;
            cur = *self.adj[cur]
                .iter()
                .find(|&&w| dist.get(w, to) == want)
                .expect("distance table is consistent with the graph");
            path.push(cur);
        }
        path
    }
}

/// Builds the graph named by a generator descriptor.
pub fn generate(spec: &GraphSpec) -> Result<Graph, GraphError> {
    let n = spec.node_count();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let edges: Vec<(usize, usize)> = match *spec {
        GraphSpec::Path(n) => (1..n).map(|i| (i - 1, i)).collect(),
        GraphSpec::Cycle(n) => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        GraphSpec::Clique(n) => (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect(),
        GraphSpec::Grid { width, height } => {
            let mut e = Vec::new();
            for y in 0..height {
                for x in 0..width {
                    let id = y * width + x;
                    if x + 1 < width {
                        e.push((id, id + 1));
                    }
                    if y + 1 < height {
                        e.push((id, id + width));
                    }
                }
            }
            e
        }
        GraphSpec::Tree { n, seed } => random_tree(n, &mut ChaCha8Rng::seed_from_u64(seed)),
        GraphSpec::Gnp { n, p, seed } => return gnp_connected(n, p, seed),
    };
    Graph::from_edges(n, edges)
}

fn random_tree(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    match n {
        0 | 1 => return Vec::new(),
        2 => return vec![(0, 1)],
        _ => {}
    }
    let prufer: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &x in &prufer {
        degree[x] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &x in &prufer {
        let leaf = leaves.pop_first().expect("a Prüfer sequence always leaves a leaf");
        edges.push((leaf, x));
        degree[x] -= 1;
        if degree[x] == 1 {
            leaves.insert(x);
        }
    }
    let mut rest = leaves.into_iter();
    let (a, b) = (rest.next().unwrap(), rest.next().unwrap());
    edges.push((a, b));
    edges
}

fn gnp_connected(n: usize, p: f64, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GNP_RETRY_CAP {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let graph = Graph::from_canonical(n, edges);
        if graph.first_unreachable().is_none() {
            return Ok(graph);
        }
    }
    Err(GraphError::GnpRetryCap { cap: GNP_RETRY_CAP })
}

/// Parses `u v` lines. Blank lines and `#` comments are skipped; a
/// `# nodes N` line declares the node count explicitly.
pub fn load_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut declared: Option<usize> = None;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(count) = comment.trim().strip_prefix("nodes") {
                let n = count.trim().parse().map_err(|_| GraphError::Parse {
                    line,
                    reason: format!("bad node count `{}`", count.trim()),
                })?;
                declared = Some(n);
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(GraphError::Parse {
                line,
                reason: format!("expected two node indices, found {} fields", fields.len()),
            });
        }
        let parse = |f: &str| {
            f.parse::<usize>().map_err(|_| GraphError::Parse {
                line,
                reason: format!("`{f}` is not a non-negative integer"),
            })
        };
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        if u == v {
            return Err(GraphError::SelfLoop { line, node: u });
        }
        edges.push((u, v));
    }
    let implied = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    let n = match declared {
        Some(d) if d < implied => {
            return Err(GraphError::NodeOutOfRange {
                u: implied - 1,
                v: implied - 1,
                n: d,
            })
        }
        Some(d) => d,
        None => implied,
    };
    Graph::from_edges(n, edges)
}

/// All-pairs hop distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<u32>,
    diameter: u32,
}

impl DistanceTable {
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.dist[u * self.n + v]
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Nodes at distance exactly `d` from `u`.
    pub fn neighborhood(&self, u: usize, d: u32) -> Vec<usize> {
        (0..self.n).filter(|&v| self.get(u, v) == d).collect()
    }

    pub fn row(&self, u: usize) -> &[u32] {
        &self.dist[u * self.n..(u + 1) * self.n]
    }
}

/// BFS from every node.
pub fn distances(g: &Graph) -> DistanceTable {
    let n = g.node_count();
    let mut dist = vec![u32::MAX; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        let row = &mut dist[s * n..(s + 1) * n];
        row[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in g.neighbors(u) {
                if row[v] == u32::MAX {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    let diameter = dist.iter().copied().max().unwrap_or(0);
    DistanceTable { n, dist, diameter }
}

/// A random walk of exactly `len` edges starting at a uniformly chosen node.
/// Vertices may repeat. Returns a single vertex if the graph has no edges.
pub fn random_walk<R: Rng + ?Sized>(g: &Graph, len: usize, rng: &mut R) -> Vec<usize> {
    let mut walk = vec![rng.gen_range(0..g.node_count())];
    for _ in 0..len {
        let cur = *walk.last().unwrap();
        match g.neighbors(cur).choose(rng) {
            Some(&next) => walk.push(next),
            None => break,
        }
    }
    walk
}
