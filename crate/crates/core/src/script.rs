use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::ontology::{NodeKind, Ontology};

pub type NodeId = usize;
pub type AceId = u32;

/// A slot value: a constant (plain or class-valued, decided by the slot's
/// domain) or an ace — a variable local to one script. Repeated ace ids
/// express co-reference within the script.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotValue {
    Sym(String),
    Ace(AceId),
}

impl SlotValue {
    pub fn sym(s: &str) -> SlotValue {
        SlotValue::Sym(s.to_string())
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            SlotValue::Sym(s) => Some(s),
            SlotValue::Ace(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub slots: BTreeMap<String, SlotValue>,
    pub children: Vec<NodeId>,
    /// Time-order arrows between this node's children, by child position.
    pub arrows: BTreeSet<(usize, usize)>,
}

impl Node {
    pub fn new(kind: NodeKind) -> Node {
        Node { kind, slots: BTreeMap::new(), children: Vec::new(), arrows: BTreeSet::new() }
    }
}

/// A rooted ordered tree of typed nodes. Child order is non-semantic;
/// equality is up to reordering consistent with arrows and consistent ace
/// renaming. Node 0 is always the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    nodes: Vec<Node>,
}

impl Script {
    pub fn from_nodes(nodes: Vec<Node>) -> Script {
        debug_assert!(!nodes.is_empty());
        Script { nodes }
    }

    pub fn leaf(kind: NodeKind) -> Script {
        Script { nodes: vec![Node::new(kind)] }
    }

    pub const ROOT: NodeId = 0;

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id]
    }

    /// Append a node to the arena; the caller wires up its parent.
    pub fn push_node(&mut self, n: Node) -> NodeId {
        self.nodes.push(n);
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        0..self.nodes.len()
    }

    /// Depth-first, children in stored order. Root first.
    pub fn dfs(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            order.push(id);
            for &c in self.nodes[id].children.iter().rev() {
                stack.push(c);
            }
        }
        order
    }

    pub fn parent_of(&self, id: NodeId) -> Option<NodeId> {
        self.ids().find(|&p| self.nodes[p].children.contains(&id))
    }

    /// All nodes in the subtree rooted at `at` (DFS order).
    pub fn subtree_ids(&self, at: NodeId) -> Vec<NodeId> {
        let mut order = Vec::new();
        let mut stack = vec![at];
        while let Some(id) = stack.pop() {
            order.push(id);
            for &c in self.nodes[id].children.iter().rev() {
                stack.push(c);
            }
        }
        order
    }

    pub fn is_ancestor(&self, anc: NodeId, id: NodeId) -> bool {
        if anc == id {
            return true;
        }
        self.nodes[anc].children.iter().any(|&c| self.is_ancestor(c, id))
    }

    /// Extract the subtree at `at` as a fresh script. Returns the new
    /// script and a map old-id -> new-id.
    pub fn extract(&self, at: NodeId) -> (Script, HashMap<NodeId, NodeId>) {
        let order = self.subtree_ids(at);
        let mut map = HashMap::new();
        for (new, &old) in order.iter().enumerate() {
            map.insert(old, new);
        }
        let mut nodes = Vec::with_capacity(order.len());
        for &old in &order {
            let mut n = self.nodes[old].clone();
            n.children = n.children.iter().map(|c| map[c]).collect();
            nodes.push(n);
        }
        (Script { nodes }, map)
    }

    /// Replace the subtree at `at` with `sub`. Returns the new script plus
    /// id maps for the untouched part of `self` and for `sub`.
    ///
    /// The ace namespaces of self and sub are treated as disjoint: sub's
    /// aces are offset past self's.
    pub fn replace_subtree(
        &self,
        at: NodeId,
        sub: &Script,
    ) -> (Script, HashMap<NodeId, NodeId>, HashMap<NodeId, NodeId>) {
        let offset = self.max_ace().map_or(0, |a| a + 1);
        self.replace_subtree_inner(at, sub, offset)
    }

    /// Like `replace_subtree`, but sub's ace ids are taken verbatim: the
    /// caller has already arranged a shared namespace.
    pub fn replace_subtree_keep_aces(
        &self,
        at: NodeId,
        sub: &Script,
    ) -> (Script, HashMap<NodeId, NodeId>, HashMap<NodeId, NodeId>) {
        self.replace_subtree_inner(at, sub, 0)
    }

    fn replace_subtree_inner(
        &self,
        at: NodeId,
        sub: &Script,
        offset: u32,
    ) -> (Script, HashMap<NodeId, NodeId>, HashMap<NodeId, NodeId>) {
        let removed: BTreeSet<NodeId> = self.subtree_ids(at).into_iter().collect();
        let mut nodes = Vec::new();
        let mut self_map: HashMap<NodeId, NodeId> = HashMap::new();
        let mut sub_map: HashMap<NodeId, NodeId> = HashMap::new();

        fn copy_self(
            s: &Script,
            sub: &Script,
            id: NodeId,
            at: NodeId,
            offset: u32,
            nodes: &mut Vec<Node>,
            self_map: &mut HashMap<NodeId, NodeId>,
            sub_map: &mut HashMap<NodeId, NodeId>,
        ) -> NodeId {
            if id == at {
                return copy_sub(sub, Script::ROOT, offset, nodes, sub_map);
            }
            let slot = nodes.len();
            nodes.push(Node::new(s.nodes[id].kind));
            nodes[slot].slots = s.nodes[id].slots.clone();
            nodes[slot].arrows = s.nodes[id].arrows.clone();
            self_map.insert(id, slot);
            let kids: Vec<NodeId> = s.nodes[id].children.clone();
            let mut new_kids = Vec::with_capacity(kids.len());
            for c in kids {
                new_kids.push(copy_self(s, sub, c, at, offset, nodes, self_map, sub_map));
            }
            nodes[slot].children = new_kids;
            slot
        }

        fn copy_sub(
            sub: &Script,
            id: NodeId,
            offset: u32,
            nodes: &mut Vec<Node>,
            sub_map: &mut HashMap<NodeId, NodeId>,
        ) -> NodeId {
            let slot = nodes.len();
            nodes.push(Node::new(sub.nodes[id].kind));
            let mut slots = sub.nodes[id].slots.clone();
            for v in slots.values_mut() {
                if let SlotValue::Ace(a) = v {
                    *v = SlotValue::Ace(*a + offset);
                }
            }
            nodes[slot].slots = slots;
            nodes[slot].arrows = sub.nodes[id].arrows.clone();
            sub_map.insert(id, slot);
            let kids: Vec<NodeId> = sub.nodes[id].children.clone();
            let mut new_kids = Vec::with_capacity(kids.len());
            for c in kids {
                new_kids.push(copy_sub(sub, c, offset, nodes, sub_map));
            }
            nodes[slot].children = new_kids;
            slot
        }

        let root = copy_self(self, sub, Self::ROOT, at, offset, &mut nodes, &mut self_map, &mut sub_map);
        debug_assert_eq!(root, 0);
        debug_assert!(removed.iter().all(|r| !self_map.contains_key(r)));
        (Script { nodes }, self_map, sub_map)
    }

    pub fn max_ace(&self) -> Option<AceId> {
        self.nodes
            .iter()
            .flat_map(|n| n.slots.values())
            .filter_map(|v| match v {
                SlotValue::Ace(a) => Some(*a),
                _ => None,
            })
            .max()
    }

    /// Occurrences of each ace, in DFS slot order.
    pub fn ace_occurrences(&self) -> BTreeMap<AceId, Vec<(NodeId, String)>> {
        let mut out: BTreeMap<AceId, Vec<(NodeId, String)>> = BTreeMap::new();
        for id in self.dfs() {
            for (name, v) in &self.nodes[id].slots {
                if let SlotValue::Ace(a) = v {
                    out.entry(*a).or_default().push((id, name.clone()));
                }
            }
        }
        out
    }

    /// Rewrite ace occurrences according to `map`; unmapped aces stay.
    pub fn substitute_aces(&mut self, map: &HashMap<AceId, SlotValue>) {
        for id in 0..self.nodes.len() {
            let names: Vec<String> = self.nodes[id].slots.keys().cloned().collect();
            for name in names {
                if let Some(SlotValue::Ace(a)) = self.nodes[id].slots.get(&name) {
                    if let Some(v) = map.get(a) {
                        self.nodes[id].slots.insert(name, v.clone());
                    }
                }
            }
        }
    }

    /// Relabel aces in depth-first first-occurrence order (0, 1, 2, ...).
    pub fn canonicalize_aces(&mut self) {
        let mut next: AceId = 0;
        let mut map: HashMap<AceId, AceId> = HashMap::new();
        for id in self.dfs() {
            // BTreeMap iteration gives slot-name order within a node.
            let names: Vec<String> = self.nodes[id].slots.keys().cloned().collect();
            for name in names {
                if let Some(SlotValue::Ace(a)) = self.nodes[id].slots.get(&name) {
                    let a = *a;
                    let canon = *map.entry(a).or_insert_with(|| {
                        let v = next;
                        next += 1;
                        v
                    });
                    self.nodes[id].slots.insert(name, SlotValue::Ace(canon));
                }
            }
        }
    }

    /// Validate kinds, slot domains, child permissions and arrow sanity
    /// against the ontology.
    pub fn validate(&self, ont: &Ontology) -> Result<()> {
        if self.nodes[0].kind != ont.root_kind {
            return Err(Error::Ontology(format!(
                "root must be a {} node, found {}",
                ont.root_kind,
                self.nodes[0].kind
            )));
        }
        let mut seen = vec![false; self.nodes.len()];
        for id in self.dfs() {
            if seen[id] {
                return Err(Error::Ontology("node reachable twice: not a tree".into()));
            }
            seen[id] = true;
            let n = &self.nodes[id];
            for (name, v) in &n.slots {
                let def = ont.slot(n.kind, name).ok_or_else(|| {
                    Error::Ontology(format!("slot '{name}' not declared for kind {}", n.kind))
                })?;
                if let SlotValue::Sym(s) = v {
                    if !def.domain.contains(s) {
                        return Err(Error::Ontology(format!(
                            "value '{s}' not in the domain of slot '{name}'"
                        )));
                    }
                }
            }
            for &c in &n.children {
                if !ont.child_allowed(n.kind, self.nodes[c].kind) {
                    return Err(Error::Ontology(format!(
                        "a {} node may not have a {} child",
                        n.kind, self.nodes[c].kind
                    )));
                }
            }
            for &(i, j) in &n.arrows {
                if i >= n.children.len() || j >= n.children.len() || i == j {
                    return Err(Error::Ontology("arrow endpoints out of range".into()));
                }
                let (ci, cj) = (n.children[i], n.children[j]);
                if self.nodes[ci].kind != NodeKind::Scene || self.nodes[cj].kind != NodeKind::Scene {
                    return Err(Error::Ontology("arrows join sibling scene nodes only".into()));
                }
            }
            closed_arrows(&n.arrows, n.children.len())?;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Ontology("unreachable nodes in arena".into()));
        }
        Ok(())
    }

    /// Close every node's arrow set under transitivity. Errors on cycles.
    pub fn transitive_closure_arrows(&self) -> Result<Script> {
        let mut out = self.clone();
        for id in out.ids().collect::<Vec<_>>() {
            let n = &out.nodes[id];
            let closed = closed_arrows(&n.arrows, n.children.len())?;
            out.nodes[id].arrows = closed;
        }
        Ok(out)
    }

    /// Reduce every node's arrow set to its transitive reduction.
    pub fn arrow_reduction(&self) -> Result<Script> {
        let mut out = self.clone();
        for id in out.ids().collect::<Vec<_>>() {
            let n = &out.nodes[id];
            let closed = closed_arrows(&n.arrows, n.children.len())?;
            let reduced: BTreeSet<(usize, usize)> = closed
                .iter()
                .filter(|&&(i, j)| {
                    !closed.iter().any(|&(a, b)| a == i && closed.contains(&(b, j)) && b != j)
                })
                .copied()
                .collect();
            out.nodes[id].arrows = reduced;
        }
        Ok(out)
    }

    /// Information content: the sum of slot bit costs plus the arrow cost
    /// per arrow in the transitive reduction. An ace contributes nothing on
    /// its first (DFS-order) occurrence and its slot's cost afterwards.
    pub fn info_content(&self, ont: &Ontology) -> Result<Bits> {
        let mut total = Bits::ZERO;
        let mut aces_seen: BTreeSet<AceId> = BTreeSet::new();
        for id in self.dfs() {
            let n = &self.nodes[id];
            for (name, v) in &n.slots {
                let def = ont.slot(n.kind, name).ok_or_else(|| {
                    Error::Ontology(format!("slot '{name}' not declared for kind {}", n.kind))
                })?;
                match v {
                    SlotValue::Sym(s) => {
                        if !def.domain.contains(s) {
                            return Err(Error::Ontology(format!(
                                "value '{s}' not in the domain of slot '{name}'"
                            )));
                        }
                        total += def.cost;
                    }
                    SlotValue::Ace(a) => {
                        if !aces_seen.insert(*a) {
                            total += def.cost;
                        }
                    }
                }
            }
        }
        let reduced = self.arrow_reduction()?;
        let arrow_count: usize = reduced.nodes.iter().map(|n| n.arrows.len()).sum();
        for _ in 0..arrow_count {
            total += ont.arrow_cost;
        }
        Ok(total)
    }

    /// P(S) = 2^(-I(S)).
    pub fn prob(&self, ont: &Ontology) -> Result<f64> {
        Ok(self.info_content(ont)?.prob())
    }

    /// Structural equality up to child reordering (consistent with arrows)
    /// and consistent ace renaming: mutual inclusion.
    pub fn equivalent(&self, other: &Script, ont: &Ontology) -> Result<bool> {
        let budget = crate::algebra::Budget::default();
        Ok(crate::algebra::includes(self, other, ont, &budget)?
            && crate::algebra::includes(other, self, ont, &budget)?)
    }
}

/// Transitive closure of an arrow relation over child positions; errors on
/// a cycle.
pub fn closed_arrows(
    arrows: &BTreeSet<(usize, usize)>,
    n_children: usize,
) -> Result<BTreeSet<(usize, usize)>> {
    let n = n_children;
    let mut reach = vec![vec![false; n]; n];
    for &(i, j) in arrows {
        if i < n && j < n {
            reach[i][j] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for i in 0..n {
        if reach[i][i] {
            return Err(Error::ArrowCycle);
        }
        for j in 0..n {
            if reach[i][j] {
                out.insert((i, j));
            }
        }
    }
    Ok(out)
}

/// Convenience builder used throughout the tests and fixtures.
pub struct ScriptBuilder {
    nodes: Vec<Node>,
}

impl ScriptBuilder {
    pub fn root(kind: NodeKind) -> ScriptBuilder {
        ScriptBuilder { nodes: vec![Node::new(kind)] }
    }

    pub fn node(&mut self, parent: NodeId, kind: NodeKind) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node::new(kind));
        self.nodes[parent].children.push(id);
        id
    }

    pub fn slot(&mut self, id: NodeId, name: &str, value: SlotValue) -> &mut Self {
        self.nodes[id].slots.insert(name.to_string(), value);
        self
    }

    pub fn sym(&mut self, id: NodeId, name: &str, value: &str) -> &mut Self {
        self.slot(id, name, SlotValue::sym(value))
    }

    pub fn ace(&mut self, id: NodeId, name: &str, ace: AceId) -> &mut Self {
        self.slot(id, name, SlotValue::Ace(ace))
    }

    /// Arrow between two direct children of `parent`, given as node ids.
    pub fn arrow(&mut self, parent: NodeId, from: NodeId, to: NodeId) -> &mut Self {
        let fi = self.nodes[parent].children.iter().position(|&c| c == from).unwrap();
        let ti = self.nodes[parent].children.iter().position(|&c| c == to).unwrap();
        self.nodes[parent].arrows.insert((fi, ti));
        self
    }

    /// Arrow between two direct children of `parent`, by child position.
    pub fn arrow_by_index(&mut self, parent: NodeId, from: usize, to: usize) -> &mut Self {
        self.nodes[parent].arrows.insert((from, to));
        self
    }

    pub fn peek_kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id].kind
    }

    pub fn peek_children(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id].children.clone()
    }

    pub fn build(self) -> Script {
        let mut s = Script { nodes: self.nodes };
        s.canonicalize_aces();
        s
    }
}

/// Record of how an operation's result nodes relate to its inputs.
#[derive(Debug, Clone, Default)]
pub struct NodeMaps {
    pub from_a: HashMap<NodeId, NodeId>,
    pub from_b: HashMap<NodeId, NodeId>,
}

pub fn kind_label(k: NodeKind) -> &'static str {
    k.tag()
}

/// A slot-by-slot summation oracle, independent of `info_content`'s
/// implementation path: walks the raw node list without DFS or dedup
/// shortcuts and recomputes arrow reductions by brute force.
pub fn info_summation_oracle(s: &Script, ont: &Ontology) -> Bits {
    let mut total = Bits::ZERO;
    // Gather every (dfs position, slot) pair in order.
    let mut entries: Vec<(NodeId, String)> = Vec::new();
    for id in s.dfs() {
        for name in s.node(id).slots.keys() {
            entries.push((id, name.clone()));
        }
    }
    let mut seen: BTreeSet<AceId> = BTreeSet::new();
    for (id, name) in entries {
        let cost = ont.slot(s.node(id).kind, &name).unwrap().cost;
        match &s.node(id).slots[&name] {
            SlotValue::Sym(_) => total += cost,
            SlotValue::Ace(a) => {
                if !seen.insert(*a) {
                    total += cost;
                }
            }
        }
    }
    for id in s.ids() {
        let n = s.node(id);
        let closed = closed_arrows(&n.arrows, n.children.len()).unwrap();
        // Count reduction edges: closed edges with no interposed hop.
        for &(i, j) in &closed {
            let skippable =
                closed.iter().any(|&(a, b)| a == i && b != j && closed.contains(&(b, j)));
            if !skippable {
                total += ont.arrow_cost;
            }
        }
    }
    total
}
