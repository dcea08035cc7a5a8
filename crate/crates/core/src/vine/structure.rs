//! R-vine tree sequences.
//!
//! Variables are numbered `1..=d`. Tree `i` holds `d - i` edges, each
//! labelled by an ordered conditioned pair and a sorted conditioning set of
//! size `i - 1`. The order of the conditioned pair fixes which argument of
//! the pair copula belongs to which variable.

use crate::error::{Result, VineError};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VineEdge {
    pub conditioned: (usize, usize),
    pub conditioning: Vec<usize>,
    pub tree: usize,
}

impl VineEdge {
    pub fn new(j: usize, k: usize, given: &[usize]) -> Self {
        let mut conditioning = given.to_vec();
        conditioning.sort_unstable();
        VineEdge { conditioned: (j, k), conditioning, tree: given.len() + 1 }
    }

    /// Conditioned and conditioning variables together, sorted.
    pub fn constraint_set(&self) -> Vec<usize> {
        let mut s = self.conditioning.clone();
        s.push(self.conditioned.0);
        s.push(self.conditioned.1);
        s.sort_unstable();
        s
    }

    /// Same edge with the conditioned pair in ascending order.
    pub fn canonical(&self) -> VineEdge {
        let (j, k) = self.conditioned;
        VineEdge { conditioned: (j.min(k), j.max(k)), ..self.clone() }
    }

    pub fn same_pair(&self, other: &VineEdge) -> bool {
        self.canonical() == other.canonical()
    }

    fn partial_set(&self, var: usize) -> Vec<usize> {
        let mut s = self.conditioning.clone();
        s.push(var);
        s.sort_unstable();
        s
    }
}

impl fmt::Display for VineEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.conditioned.0, self.conditioned.1)?;
        if !self.conditioning.is_empty() {
            let d: Vec<String> = self.conditioning.iter().map(|x| x.to_string()).collect();
            write!(f, "|{}", d.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Wrong number of trees or edges, or a malformed edge label.
    Shape,
    /// A tree is not a spanning tree on its node set.
    NotATree,
    /// An edge does not join two edges of the previous tree.
    NodeInheritance,
    /// The two joined edges share no common node.
    Proximity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub tree: usize,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tree {}: {:?}: {}", self.tree, self.kind, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RVineStructure {
    d: usize,
    trees: Vec<Vec<VineEdge>>,
}

impl RVineStructure {
    /// Build without checking; use [`validate`](Self::validate) to inspect.
    pub fn new_unchecked(d: usize, trees: Vec<Vec<VineEdge>>) -> Self {
        RVineStructure { d, trees }
    }

    /// Build and validate.
    pub fn new(d: usize, trees: Vec<Vec<VineEdge>>) -> Result<Self> {
        let s = Self::new_unchecked(d, trees);
        s.ensure_valid()?;
        Ok(s)
    }

    /// Group a flat edge list by tree level, keeping the given order within a level.
    pub fn from_edges(d: usize, edges: Vec<VineEdge>) -> Result<Self> {
        let mut trees: Vec<Vec<VineEdge>> = vec![Vec::new(); d.saturating_sub(1)];
        for e in edges {
            if e.tree == 0 || e.tree >= d {
                return Err(VineError::InvalidStructure(format!("edge {e} has tree level {}", e.tree)));
            }
            trees[e.tree - 1].push(e);
        }
        Self::new(d, trees)
    }

    /// C-vine with the given root order.
    pub fn cvine(order: &[usize]) -> Result<Self> {
        let d = order.len();
        let mut trees = Vec::new();
        for i in 0..d.saturating_sub(1) {
            let given = &order[..i];
            let tree = order[i + 1..].iter().map(|&k| VineEdge::new(order[i], k, given)).collect();
            trees.push(tree);
        }
        Self::new(d, trees)
    }

    /// D-vine along the given path.
    pub fn dvine(order: &[usize]) -> Result<Self> {
        let d = order.len();
        let mut trees = Vec::new();
        for i in 1..d {
            let tree = (0..d - i)
                .map(|s| VineEdge::new(order[s], order[s + i], &order[s + 1..s + i]))
                .collect();
            trees.push(tree);
        }
        Self::new(d, trees)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn trees(&self) -> &[Vec<VineEdge>] {
        &self.trees
    }

    pub fn n_edges(&self) -> usize {
        self.trees.iter().map(Vec::len).sum()
    }

    /// Edges in tree-major order; positions in this order are edge ids.
    pub fn edges(&self) -> impl Iterator<Item = &VineEdge> {
        self.trees.iter().flatten()
    }

    pub fn edge(&self, id: usize) -> &VineEdge {
        self.edges().nth(id).expect("edge id out of range")
    }

    /// Edge id of the edge with the same unordered label, if present.
    pub fn find_edge(&self, e: &VineEdge) -> Option<usize> {
        self.edges().position(|x| x.same_pair(e))
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
            Err(VineError::InvalidStructure(msgs.join("; ")))
        }
    }

    /// Every violated tree-sequence condition; empty for a valid R-vine.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let d = self.d;
        let push = |out: &mut Vec<Violation>, tree, kind, message: String| {
            out.push(Violation { tree, kind, message })
        };
        if d < 2 {
            push(&mut out, 0, ViolationKind::Shape, format!("dimension {d} below 2"));
            return out;
        }
        if self.trees.len() != d - 1 {
            push(&mut out, 0, ViolationKind::Shape, format!("{} trees, expected {}", self.trees.len(), d - 1));
            return out;
        }
        let mut shape_ok = true;
        for (i, tree) in self.trees.iter().enumerate() {
            let level = i + 1;
            if tree.len() != d - level {
                push(&mut out, level, ViolationKind::Shape, format!("{} edges, expected {}", tree.len(), d - level));
                shape_ok = false;
            }
            for e in tree {
                let (j, k) = e.conditioned;
                let in_range = |x: usize| (1..=d).contains(&x);
                let mut bad = Vec::new();
                if e.tree != level {
                    bad.push(format!("declares tree {}", e.tree));
                }
                if j == k {
                    bad.push("repeated conditioned variable".to_string());
                }
                if !in_range(j) || !in_range(k) || !e.conditioning.iter().all(|&x| in_range(x)) {
                    bad.push("variable index out of range".to_string());
                }
                if e.conditioning.len() != level - 1 {
                    bad.push(format!("conditioning set of size {}, expected {}", e.conditioning.len(), level - 1));
                }
                if e.conditioning.contains(&j) || e.conditioning.contains(&k) {
                    bad.push("conditioned variable inside conditioning set".to_string());
                }
                if e.conditioning.windows(2).any(|w| w[0] >= w[1]) {
                    bad.push("conditioning set not sorted and distinct".to_string());
                }
                if !bad.is_empty() {
                    shape_ok = false;
                    push(&mut out, level, ViolationKind::Shape, format!("edge {e}: {}", bad.join(", ")));
                }
            }
        }
        if !shape_ok {
            return out;
        }

        // node pairs of each edge: variables for tree 1, previous-tree edge ids above
        let mut prev_nodes: Vec<(usize, usize)> = Vec::new();
        for (i, tree) in self.trees.iter().enumerate() {
            let level = i + 1;
            let mut nodes = Vec::with_capacity(tree.len());
            let mut complete = true;
            for e in tree {
                if level == 1 {
                    nodes.push((e.conditioned.0 - 1, e.conditioned.1 - 1));
                    continue;
                }
                let prev = &self.trees[i - 1];
                let a = e.partial_set(e.conditioned.0);
                let b = e.partial_set(e.conditioned.1);
                let pa = prev.iter().position(|x| x.constraint_set() == a);
                let pb = prev.iter().position(|x| x.constraint_set() == b);
                match (pa, pb) {
                    (Some(pa), Some(pb)) => {
                        let (x, y) = (prev_nodes[pa], prev_nodes[pb]);
                        let shared = x.0 == y.0 || x.0 == y.1 || x.1 == y.0 || x.1 == y.1;
                        if !shared {
                            push(
                                &mut out,
                                level,
                                ViolationKind::Proximity,
                                format!("edge {e} joins {} and {} which share no node", prev[pa], prev[pb]),
                            );
                        }
                        nodes.push((pa, pb));
                    }
                    _ => {
                        complete = false;
                        push(
                            &mut out,
                            level,
                            ViolationKind::NodeInheritance,
                            format!("edge {e} does not join two edges of tree {}", level - 1),
                        );
                    }
                }
            }
            let n_nodes = d - level + 1;
            if complete {
                if let Some(msg) = spanning_tree_defect(n_nodes, &nodes) {
                    push(&mut out, level, ViolationKind::NotATree, msg);
                }
            }
            if !complete {
                return out;
            }
            prev_nodes = nodes;
        }
        out
    }

    /// Every tree has a node adjacent to all others.
    pub fn is_cvine(&self) -> bool {
        self.node_degrees().iter().all(|deg| {
            let n = deg.len();
            deg.iter().any(|&x| x == n - 1)
        })
    }

    /// Every node of the first tree has degree at most two.
    pub fn is_dvine(&self) -> bool {
        self.node_degrees().first().is_some_and(|deg| deg.iter().all(|&x| x <= 2))
    }

    /// Node degrees per tree; requires a valid structure.
    fn node_degrees(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for (i, tree) in self.trees.iter().enumerate() {
            let n_nodes = self.d - i;
            let mut deg = vec![0; n_nodes];
            for e in tree {
                let (a, b) = if i == 0 {
                    (e.conditioned.0 - 1, e.conditioned.1 - 1)
                } else {
                    let prev = &self.trees[i - 1];
                    let pa = prev.iter().position(|x| x.constraint_set() == e.partial_set(e.conditioned.0));
                    let pb = prev.iter().position(|x| x.constraint_set() == e.partial_set(e.conditioned.1));
                    match (pa, pb) {
                        (Some(a), Some(b)) => (a, b),
                        _ => continue,
                    }
                };
                deg[a] += 1;
                deg[b] += 1;
            }
            out.push(deg);
        }
        out
    }
}

fn spanning_tree_defect(n_nodes: usize, edges: &[(usize, usize)]) -> Option<String> {
    let mut parent: Vec<usize> = (0..n_nodes).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in edges {
        if a >= n_nodes || b >= n_nodes {
            return Some("edge endpoint outside the node set".into());
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return Some("edges contain a cycle".into());
        }
        parent[ra] = rb;
    }
    let root = find(&mut parent, 0);
    if (1..n_nodes).any(|x| find(&mut parent, x) != root) {
        return Some("edges do not connect all nodes".into());
    }
    None
}

/// Where a pair copula argument comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Source {
    /// Column `j` (zero-based) of the observation.
    Var(usize),
    /// F(first | second) of an edge.
    H1(usize),
    /// F(second | first) of an edge.
    H2(usize),
}

#[derive(Clone, Debug)]
pub(crate) struct EvalPlan {
    pub args: Vec<(Source, Source)>,
    pub need_h1: Vec<bool>,
    pub need_h2: Vec<bool>,
    /// Edges that depend, directly or through their arguments, on each edge.
    pub descendants: Vec<Vec<usize>>,
    /// Variables in sampling order with the edge column of each: edge ids in
    /// ascending tree order, flagged true when the variable is the first argument.
    pub sim_order: Vec<(usize, Vec<(usize, bool)>)>,
}

impl EvalPlan {
    pub fn new(s: &RVineStructure) -> Result<Self> {
        s.ensure_valid()?;
        let edges: Vec<&VineEdge> = s.edges().collect();
        let m = edges.len();
        let mut offsets = vec![0];
        for t in s.trees() {
            offsets.push(offsets.last().unwrap() + t.len());
        }
        let source = |e: &VineEdge, var: usize| -> Source {
            if e.tree == 1 {
                return Source::Var(var - 1);
            }
            let want = e.partial_set(var);
            let range = offsets[e.tree - 2]..offsets[e.tree - 1];
            let id = range.clone().find(|&i| edges[i].constraint_set() == want).expect("validated");
            if edges[id].conditioned.0 == var {
                Source::H1(id)
            } else {
                Source::H2(id)
            }
        };
        let args: Vec<(Source, Source)> =
            edges.iter().map(|e| (source(e, e.conditioned.0), source(e, e.conditioned.1))).collect();
        let mut need_h1 = vec![false; m];
        let mut need_h2 = vec![false; m];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (id, &(l, r)) in args.iter().enumerate() {
            for src in [l, r] {
                match src {
                    Source::H1(p) => {
                        need_h1[p] = true;
                        children[p].push(id);
                    }
                    Source::H2(p) => {
                        need_h2[p] = true;
                        children[p].push(id);
                    }
                    Source::Var(_) => {}
                }
            }
        }
        let mut descendants = vec![Vec::new(); m];
        for id in (0..m).rev() {
            let mut set: Vec<usize> = vec![id];
            for &c in &children[id] {
                set.extend(descendants[c].iter().copied());
            }
            set.sort_unstable();
            set.dedup();
            descendants[id] = set;
        }
        let sim_order = simulation_order(s, &edges, &offsets)?;
        Ok(EvalPlan { args, need_h1, need_h2, descendants, sim_order })
    }
}

/// Peel variables off the top of the vine. Each peeled variable owns one
/// edge per tree, the chain from the top edge down through parents that
/// contain it.
fn simulation_order(
    s: &RVineStructure,
    edges: &[&VineEdge],
    offsets: &[usize],
) -> Result<Vec<(usize, Vec<(usize, bool)>)>> {
    let d = s.d();
    let mut removed = vec![false; edges.len()];
    let mut remaining: Vec<usize> = (1..=d).collect();
    let mut peeled = Vec::new();
    for level in (1..d).rev() {
        let range = offsets[level - 1]..offsets[level];
        let top = range
            .clone()
            .find(|&i| !removed[i])
            .ok_or_else(|| VineError::InvalidStructure("no edge left to peel".into()))?;
        let (j, k) = edges[top].conditioned;
        let chain = [j, k]
            .into_iter()
            .find_map(|var| column_chain(edges, offsets, &removed, top, var).map(|c| (var, c)))
            .ok_or_else(|| VineError::InvalidStructure("cannot derive a sampling order".into()))?;
        let (var, column) = chain;
        for &(id, _) in &column {
            removed[id] = true;
        }
        remaining.retain(|&x| x != var);
        peeled.push((var, column));
    }
    let mut order = vec![(remaining[0], Vec::new())];
    order.extend(peeled.into_iter().rev());
    Ok(order)
}

fn column_chain(
    edges: &[&VineEdge],
    offsets: &[usize],
    removed: &[bool],
    top: usize,
    var: usize,
) -> Option<Vec<(usize, bool)>> {
    let mut chain = vec![top];
    let mut current = top;
    for level in (1..edges[top].tree).rev() {
        let want = edges[current].partial_set(var);
        let next = (offsets[level - 1]..offsets[level]).find(|&i| {
            let e = edges[i];
            !removed[i] && (e.conditioned.0 == var || e.conditioned.1 == var) && e.constraint_set() == want
        })?;
        chain.push(next);
        current = next;
    }
    chain.reverse();
    Some(chain.into_iter().map(|id| (id, edges[id].conditioned.0 == var)).collect())
}
