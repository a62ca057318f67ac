use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

/// Index of a node in a [`Tree`].
pub type NodeId = usize;

/// Undirected tree with labeled nodes. Leaves (degree-1 nodes) are ordered by
/// their first appearance in the edge list; constraint and covariance code
/// refers to leaves by their position in that order.
#[derive(Clone, Debug)]
pub struct Tree {
    names: Vec<String>,
    // (neighbor, edge id)
    adj: Vec<Vec<(NodeId, usize)>>,
    edges: Vec<(NodeId, NodeId)>,
    leaves: Vec<NodeId>,
    // rooted at node 0: (parent, edge to parent)
    parent: Vec<Option<(NodeId, usize)>>,
    depth: Vec<usize>,
}

/// A quartet split `{a,b}|{c,d}` in leaf indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Split {
    pub left: [usize; 2],
    pub right: [usize; 2],
}

/// Outcome of comparing the three path-pair intersections of four leaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuartetClass {
    /// All three intersections are empty.
    AllEmpty,
    /// Exactly one intersection is empty; the split names the disjoint paths.
    InQ(Split),
}

impl Tree {
    /// Builds and validates a tree from labeled edges.
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S)]) -> Result<Self> {
        let mut index: HashMap<String, NodeId> = HashMap::new();
        let mut names = Vec::new();
        let mut id_of = |name: &str, names: &mut Vec<String>| -> NodeId {
            *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            })
        };
        let mut pairs = Vec::with_capacity(edges.len());
        let mut seen = HashSet::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            if a == b {
                return Err(Error::Tree(format!("self-loop at node `{a}`")));
            }
            let (ia, ib) = (id_of(a, &mut names), id_of(b, &mut names));
            if !seen.insert((ia.min(ib), ia.max(ib))) {
                return Err(Error::Tree(format!("duplicate edge `{a}`-`{b}`")));
            }
            pairs.push((ia, ib));
        }
        if names.len() < 2 {
            return Err(Error::Tree("a tree needs at least one edge".into()));
        }
        let mut adj = vec![Vec::new(); names.len()];
        for (e, &(a, b)) in pairs.iter().enumerate() {
            adj[a].push((b, e));
            adj[b].push((a, e));
        }

        // BFS from node 0 detects cycles and disconnected parts
        let mut parent = vec![None; names.len()];
        let mut depth = vec![0; names.len()];
        let mut visited = vec![false; names.len()];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        while let Some(x) = queue.pop_front() {
            for &(y, e) in &adj[x] {
                if parent[x].map(|(_, pe)| pe) == Some(e) {
                    continue;
                }
                if visited[y] {
                    return Err(Error::Tree(format!(
                        "cycle through edge `{}`-`{}`",
                        names[x], names[y]
                    )));
                }
                visited[y] = true;
                parent[y] = Some((x, e));
                depth[y] = depth[x] + 1;
                queue.push_back(y);
            }
        }
        if let Some(lost) = visited.iter().position(|v| !v) {
            return Err(Error::Tree(format!(
                "node `{}` is disconnected from `{}`",
                names[lost], names[0]
            )));
        }
        if let Some(bad) = (0..names.len()).find(|&v| adj[v].len() == 2) {
            return Err(Error::Tree(format!(
                "inner node `{}` has degree 2 (inner nodes need degree at least 3)",
                names[bad]
            )));
        }
        let leaves = (0..names.len()).filter(|&v| adj[v].len() == 1).collect();
        Ok(Self {
            names,
            adj,
            edges: pairs,
            leaves,
            parent,
            depth,
        })
    }

    /// Parses the plain-text format: one `nodeA nodeB` edge per line, `#`
    /// starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(Error::Tree(format!(
                    "line {}: expected `nodeA nodeB`, found {} fields",
                    lineno + 1,
                    fields.len()
                )));
            }
            edges.push((fields[0].to_string(), fields[1].to_string()));
        }
        Self::from_edges(&edges)
    }

    /// Star tree with hub `h` and leaves `1..=l`.
    pub fn star(l: usize) -> Result<Self> {
        if l < 3 {
            return Err(Error::Tree(format!("a star tree needs at least 3 leaves, got {l}")));
        }
        let edges: Vec<(String, String)> = (1..=l).map(|i| ("h".to_string(), i.to_string())).collect();
        Self::from_edges(&edges)
    }

    /// Binary caterpillar with spine `s1..s{l-2}`: leaves 1 and 2 hang off
    /// `s1`, leaf `i+1` off `s_i` for interior spine nodes, and leaves `l-1`,
    /// `l` off the last spine node.
    pub fn caterpillar(l: usize) -> Result<Self> {
        if l < 4 {
            return Err(Error::Tree(format!("a caterpillar needs at least 4 leaves, got {l}")));
        }
        let spine = l - 2;
        let s = |i: usize| format!("s{i}");
        let mut edges = vec![(s(1), "1".to_string()), (s(1), "2".to_string())];
        for i in 1..spine {
            edges.push((s(i), s(i + 1)));
            if i + 1 < spine {
                edges.push((s(i + 1), (i + 2).to_string()));
            }
        }
        edges.push((s(spine), (l - 1).to_string()));
        edges.push((s(spine), l.to_string()));
        let tree = Self::from_edges(&edges)?;
        debug_assert_eq!(tree.leaf_count(), l);
        Ok(tree)
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v].len()
    }

    /// Edge ids incident to `v`.
    pub fn incident_edges(&self, v: NodeId) -> impl Iterator<Item = usize> + '_ {
        self.adj[v].iter().map(|&(_, e)| e)
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_name(&self, leaf: usize) -> &str {
        &self.names[self.leaves[leaf]]
    }

    /// Position of node `v` among the leaves.
    pub fn leaf_index(&self, v: NodeId) -> Option<usize> {
        self.leaves.iter().position(|&x| x == v)
    }

    /// Sorted ids of the edges on the unique path between `u` and `v`.
    pub fn path_edges(&self, u: NodeId, v: NodeId) -> Vec<usize> {
        let (mut a, mut b) = (u, v);
        let mut out = Vec::new();
        while self.depth[a] > self.depth[b] {
            let (p, e) = self.parent[a].expect("non-root has a parent");
            out.push(e);
            a = p;
        }
        while self.depth[b] > self.depth[a] {
            let (p, e) = self.parent[b].expect("non-root has a parent");
            out.push(e);
            b = p;
        }
        while a != b {
            let (pa, ea) = self.parent[a].expect("non-root has a parent");
            let (pb, eb) = self.parent[b].expect("non-root has a parent");
            out.push(ea);
            out.push(eb);
            a = pa;
            b = pb;
        }
        out.sort_unstable();
        out
    }

    /// Path edge sets for every pair of leaves, as bitsets.
    pub(crate) fn leaf_path_bitsets(&self) -> PathTable {
        let l = self.leaf_count();
        let words = self.edges.len().div_ceil(64);
        let mut bits = vec![0u64; l * l * words];
        for a in 0..l {
            for b in a + 1..l {
                for e in self.path_edges(self.leaves[a], self.leaves[b]) {
                    bits[(a * l + b) * words + e / 64] |= 1 << (e % 64);
                    bits[(b * l + a) * words + e / 64] |= 1 << (e % 64);
                }
            }
        }
        PathTable { l, words, bits }
    }

    /// Classifies four distinct leaves (by leaf index).
    pub fn classify_quadruple(&self, quad: [usize; 4]) -> Result<QuartetClass> {
        let mut sorted = quad;
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) || sorted[3] >= self.leaf_count() {
            return Err(Error::Input(format!("{quad:?} are not four distinct leaf indices")));
        }
        classify_with(&self.leaf_path_bitsets(), quad)
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &(a, b) in &self.edges {
            writeln!(f, "{} {}", self.names[a], self.names[b])?;
        }
        Ok(())
    }
}

pub(crate) struct PathTable {
    l: usize,
    words: usize,
    bits: Vec<u64>,
}

impl PathTable {
    fn path(&self, a: usize, b: usize) -> &[u64] {
        let start = (a * self.l + b) * self.words;
        &self.bits[start..start + self.words]
    }

    fn disjoint(&self, (a, b): (usize, usize), (c, d): (usize, usize)) -> bool {
        self.path(a, b).iter().zip(self.path(c, d)).all(|(x, y)| x & y == 0)
    }
}

pub(crate) fn classify_with(table: &PathTable, [u, v, w, z]: [usize; 4]) -> Result<QuartetClass> {
    let splits = [
        Split { left: [u, v], right: [w, z] },
        Split { left: [u, w], right: [v, z] },
        Split { left: [u, z], right: [v, w] },
    ];
    let empty: Vec<&Split> = splits
        .iter()
        .filter(|s| table.disjoint((s.left[0], s.left[1]), (s.right[0], s.right[1])))
        .collect();
    match empty.len() {
        3 => Ok(QuartetClass::AllEmpty),
        1 => Ok(QuartetClass::InQ(*empty[0])),
        k => Err(Error::Invariant(format!(
            "quartet {:?} has {k} empty path intersections (expected 1 or 3)",
            [u, v, w, z]
        ))),
    }
}
