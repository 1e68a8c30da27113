//! The four tree-algebra operations on scripts: inclusion, unification,
//! intersection and subtraction.
//!
//! All four work by matching two trees node by node from the roots down,
//! searching over child pairings. Unification keeps the pairing with the
//! smallest result information content, intersection the largest. The
//! search is exhaustive with a hard budget: exceeding it is an explicit
//! resource error, never a silent approximation.

use std::cell::Cell;
use std::collections::{BTreeSet, HashMap};

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::ontology::{Domain, Ontology};
use crate::script::{closed_arrows, Node, NodeId, Script, SlotValue};

/// Search budget shared by one operation. Counts node-pairing evaluations.
pub struct Budget {
    cap: u64,
    used: Cell<u64>,
}

impl Budget {
    pub fn new(cap: u64) -> Budget {
        Budget { cap, used: Cell::new(0) }
    }

    pub fn used(&self) -> u64 {
        self.used.get()
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    /// A fresh budget with the same cap, for the next operation.
    pub fn fresh(&self) -> Budget {
        Budget::new(self.cap)
    }

    fn tick(&self) -> Result<()> {
        let u = self.used.get() + 1;
        self.used.set(u);
        if u > self.cap {
            Err(Error::BudgetExceeded(self.cap))
        } else {
            Ok(())
        }
    }
}

impl Default for Budget {
    fn default() -> Budget {
        Budget::new(1_000_000)
    }
}

/// Result of unify/intersect along with node provenance maps.
#[derive(Debug, Clone)]
pub struct OpResult {
    pub script: Script,
    /// a-node -> result node (total for unify, partial for intersect).
    pub from_a: HashMap<NodeId, NodeId>,
    /// b-node -> result node.
    pub from_b: HashMap<NodeId, NodeId>,
    pub paired: usize,
}

// ---------------------------------------------------------------------------
// Inclusion
// ---------------------------------------------------------------------------

/// Does `a` carry all the information of `b`?
pub fn includes(a: &Script, b: &Script, ont: &Ontology, budget: &Budget) -> Result<bool> {
    Ok(inclusion_map(a, b, ont, budget)?.is_some())
}

/// If `a` includes `b`, the first (deterministic) node matching found,
/// as a map b-node -> a-node.
pub fn inclusion_map(
    a: &Script,
    b: &Script,
    ont: &Ontology,
    budget: &Budget,
) -> Result<Option<HashMap<NodeId, NodeId>>> {
    Ok(inclusion_maps(a, b, ont, budget, 1)?.into_iter().next())
}

/// Up to `limit` distinct total inclusion matchings of `b` into `a`, in
/// deterministic order. Empty when `a` does not include `b`.
pub fn inclusion_maps(
    a: &Script,
    b: &Script,
    ont: &Ontology,
    budget: &Budget,
    limit: usize,
) -> Result<Vec<HashMap<NodeId, NodeId>>> {
    if a.node(Script::ROOT).kind != b.node(Script::ROOT).kind {
        return Ok(Vec::new());
    }
    let a = a.transitive_closure_arrows()?;
    let b = b.transitive_closure_arrows()?;
    let mut search = InclSearch {
        a: &a,
        b: &b,
        ont,
        budget,
        bind: HashMap::new(),
        trail: Vec::new(),
        map: HashMap::new(),
        found: Vec::new(),
        limit,
    };
    let mut goals = vec![(Script::ROOT, Script::ROOT)];
    let _ = search.solve(&mut goals)?;
    Ok(search.found)
}

#[derive(Clone, PartialEq)]
enum Bound {
    Sym(String),
    Ace(u32),
}

struct InclSearch<'x> {
    a: &'x Script,
    b: &'x Script,
    ont: &'x Ontology,
    budget: &'x Budget,
    /// b-ace -> the single a-value it must match everywhere.
    bind: HashMap<u32, Bound>,
    trail: Vec<u32>,
    map: HashMap<NodeId, NodeId>,
    found: Vec<HashMap<NodeId, NodeId>>,
    limit: usize,
}

impl<'x> InclSearch<'x> {
    /// goals: (a node, b node) pairs still to be matched. Returns true when
    /// enough matchings have been collected to stop the search.
    fn solve(&mut self, goals: &mut Vec<(NodeId, NodeId)>) -> Result<bool> {
        let (aid, bid) = match goals.pop() {
            None => {
                self.found.push(self.map.clone());
                let full = self.found.len() >= self.limit;
                return Ok(full);
            }
            Some(g) => g,
        };
        self.budget.tick()?;
        let mark = self.trail.len();
        if !self.slots_include(aid, bid) {
            self.undo(mark);
            goals.push((aid, bid));
            return Ok(false);
        }
        self.map.insert(bid, aid);
        let an = self.a.node(aid);
        let bn = self.b.node(bid);
        let mut assign: Vec<Option<usize>> = vec![None; bn.children.len()];
        let mut used = vec![false; an.children.len()];
        if self.pair_children(aid, bid, 0, &mut assign, &mut used, goals)? {
            return Ok(true);
        }
        self.map.remove(&bid);
        self.undo(mark);
        goals.push((aid, bid));
        Ok(false)
    }

    /// Assign each b-child (index k upward) to a distinct kind-equal
    /// a-child, honouring b's time-order arrows under a's closure.
    fn pair_children(
        &mut self,
        aid: NodeId,
        bid: NodeId,
        k: usize,
        assign: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        goals: &mut Vec<(NodeId, NodeId)>,
    ) -> Result<bool> {
        let an = self.a.node(aid).clone();
        let bn = self.b.node(bid).clone();
        if k == bn.children.len() {
            // All assigned; recurse into the pairs.
            let extend: Vec<(NodeId, NodeId)> = assign
                .iter()
                .enumerate()
                .map(|(bi, ai)| (an.children[ai.unwrap()], bn.children[bi]))
                .collect();
            let base = goals.len();
            goals.extend(extend);
            if self.solve(goals)? {
                return Ok(true);
            }
            goals.truncate(base);
            return Ok(false);
        }
        for aj in 0..an.children.len() {
            if used[aj] {
                continue;
            }
            if self.a.node(an.children[aj]).kind != self.b.node(bn.children[k]).kind {
                continue;
            }
            // Arrow consistency against earlier assignments.
            let ok = (0..k).all(|prev| {
                let ap = assign[prev].unwrap();
                let fwd = !bn.arrows.contains(&(prev, k)) || an.arrows.contains(&(ap, aj));
                let bwd = !bn.arrows.contains(&(k, prev)) || an.arrows.contains(&(aj, ap));
                fwd && bwd
            });
            if !ok {
                continue;
            }
            self.budget.tick()?;
            assign[k] = Some(aj);
            used[aj] = true;
            if self.pair_children(aid, bid, k + 1, assign, used, goals)? {
                return Ok(true);
            }
            assign[k] = None;
            used[aj] = false;
        }
        Ok(false)
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let k = self.trail.pop().unwrap();
            self.bind.remove(&k);
        }
    }

    fn slots_include(&mut self, aid: NodeId, bid: NodeId) -> bool {
        let an = self.a.node(aid);
        let bn = self.b.node(bid);
        for (name, vb) in &bn.slots {
            let va = match an.slots.get(name) {
                Some(v) => v,
                None => return false,
            };
            match vb {
                SlotValue::Sym(v) => {
                    let matched = match va {
                        SlotValue::Sym(w) => {
                            w == v || self.class_subsumes(an.kind, name, w, v)
                        }
                        SlotValue::Ace(_) => false,
                    };
                    if !matched {
                        return false;
                    }
                }
                SlotValue::Ace(x) => {
                    let val = match va {
                        SlotValue::Sym(w) => Bound::Sym(w.clone()),
                        SlotValue::Ace(y) => Bound::Ace(*y),
                    };
                    match self.bind.get(x) {
                        Some(prev) => {
                            if *prev != val {
                                return false;
                            }
                        }
                        None => {
                            self.bind.insert(*x, val);
                            self.trail.push(*x);
                        }
                    }
                }
            }
        }
        true
    }

    /// Is `w` the same class as `v` or a descendant of it?
    fn class_subsumes(
        &self,
        kind: crate::ontology::NodeKind,
        slot: &str,
        w: &str,
        v: &str,
    ) -> bool {
        match self.ont.slot(kind, slot) {
            Some(def) => match &def.domain {
                Domain::Classes(t) => t.is_subclass(w, v),
                Domain::Flat(_) => false,
            },
            None => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Matching search shared by unify and intersect
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Unify,
    Intersect,
}

type Matching = Vec<(NodeId, NodeId)>;

/// Exhaustive search over tree-consistent node matchings with exact
/// branch-and-bound pruning.
///
/// For every node pair the search holds an admissible bound on how much
/// information pairing that subtree pair can retain (intersection) or
/// save (unification): the shared slot costs plus the smaller arrow count,
/// relaxed non-injectively over children. A branch whose optimistic total
/// cannot beat the best complete matching found so far is cut; results are
/// still exact because the bound never underestimates the branch.
struct Searcher<'x> {
    a: &'x Script,
    b: &'x Script,
    ont: &'x Ontology,
    budget: &'x Budget,
    mode: Mode,
    /// (full bound in micro-bits, relaxed max pairs) per node pair.
    memo: HashMap<(NodeId, NodeId), (u64, usize)>,
    /// Occurrence counts of (slot name, value) across each script, for
    /// deciding whether a conflicting pair could ever co-vary.
    a_counts: HashMap<(String, SlotValue), usize>,
    b_counts: HashMap<(String, SlotValue), usize>,
    base_sum: u64,
    best: Option<(Bits, usize, Matching)>,
}

fn value_counts(s: &Script) -> HashMap<(String, SlotValue), usize> {
    let mut out = HashMap::new();
    for id in s.ids() {
        for (name, v) in &s.node(id).slots {
            *out.entry((name.clone(), v.clone())).or_insert(0) += 1;
        }
    }
    out
}

impl<'x> Searcher<'x> {
    fn new(
        a: &'x Script,
        b: &'x Script,
        ont: &'x Ontology,
        budget: &'x Budget,
        mode: Mode,
    ) -> Result<Searcher<'x>> {
        let base_sum = match mode {
            Mode::Unify => a.info_content(ont)?.0 + b.info_content(ont)?.0,
            Mode::Intersect => 0,
        };
        Ok(Searcher {
            a,
            b,
            ont,
            budget,
            mode,
            memo: HashMap::new(),
            a_counts: value_counts(a),
            b_counts: value_counts(b),
            base_sum,
            best: None,
        })
    }

    fn slot_cost(&self, kind: crate::ontology::NodeKind, name: &str) -> u64 {
        self.ont.slot(kind, name).map_or(0, |d| d.cost.0)
    }

    /// Shared-slot and arrow bound for one node pair, children excluded.
    /// A conflicting value pair can only retain information by co-varying,
    /// which needs the same pair to occur at least twice overall.
    fn local_bound(&self, aid: NodeId, bid: NodeId) -> u64 {
        let an = self.a.node(aid);
        let bn = self.b.node(bid);
        let mut total: u64 = 0;
        for (name, va) in &an.slots {
            let vb = match bn.slots.get(name) {
                Some(v) => v,
                None => continue,
            };
            let counts = match (va, vb) {
                (SlotValue::Sym(v), SlotValue::Sym(w)) if v == w => true,
                (SlotValue::Sym(v), SlotValue::Sym(w))
                    if self.class_related(an, name, v, w) =>
                {
                    true
                }
                _ => {
                    let ca = self.a_counts.get(&(name.clone(), va.clone())).copied().unwrap_or(0);
                    let cb = self.b_counts.get(&(name.clone(), vb.clone())).copied().unwrap_or(0);
                    match self.mode {
                        // Co-variation ace: the key must repeat.
                        Mode::Intersect => ca.min(cb) >= 2,
                        // Merging an ace with anything can save its cost.
                        Mode::Unify => true,
                    }
                }
            };
            if counts {
                total += self.slot_cost(an.kind, name);
            }
        }
        total + (an.arrows.len().min(bn.arrows.len()) as u64) * self.ont.arrow_cost.0
    }

    /// For unification, a node pair with irreconcilable constants cannot
    /// be matched at all.
    fn pair_possible(&self, aid: NodeId, bid: NodeId) -> bool {
        self.mode != Mode::Unify || self.slots_compatible(aid, bid)
    }

    /// Full subtree-pair bound and relaxed pair count.
    fn full_bound(&mut self, aid: NodeId, bid: NodeId) -> (u64, usize) {
        if let Some(&v) = self.memo.get(&(aid, bid)) {
            return v;
        }
        let result = if !self.pair_possible(aid, bid) {
            (0, 0)
        } else {
            let mut info = self.local_bound(aid, bid);
            let mut pairs = 1usize;
            let b_kids: Vec<NodeId> = self.b.node(bid).children.clone();
            let a_kids: Vec<NodeId> = self.a.node(aid).children.clone();
            for bc in b_kids {
                let mut best_i = 0u64;
                let mut best_p = 0usize;
                for &ac in &a_kids {
                    if self.a.node(ac).kind != self.b.node(bc).kind {
                        continue;
                    }
                    let (i, p) = self.full_bound(ac, bc);
                    best_i = best_i.max(i);
                    best_p = best_p.max(p);
                }
                info += best_i;
                pairs += best_p;
            }
            (info, pairs)
        };
        self.memo.insert((aid, bid), result);
        result
    }

    /// Can the optimistic completion still beat the current best?
    fn viable(&self, pot_info: u64, pot_pairs: usize) -> bool {
        let (best_info, best_pairs) = match &self.best {
            None => return true,
            Some((i, p, _)) => (i.0, *p),
        };
        match self.mode {
            Mode::Intersect => {
                pot_info > best_info || (pot_info == best_info && pot_pairs > best_pairs)
            }
            Mode::Unify => {
                let pot_min = self.base_sum.saturating_sub(pot_info);
                pot_min < best_info || (pot_min == best_info && pot_pairs > best_pairs)
            }
        }
    }

    fn run(&mut self) -> Result<Option<Matching>> {
        if !self.pair_possible(Script::ROOT, Script::ROOT) {
            return Ok(None);
        }
        let (root_bound, root_pairs) = self.full_bound(Script::ROOT, Script::ROOT);
        let mut work = vec![(Script::ROOT, Script::ROOT)];
        let mut chosen: Matching = vec![(Script::ROOT, Script::ROOT)];
        self.expand(&mut work, &mut chosen, 0, root_bound, 0, root_pairs)?;
        Ok(self.best.take().map(|(_, _, m)| m))
    }

    /// `settled_info`/`settled_pairs`: exhausted upper parts of the bound;
    /// `work_info`/`work_pairs`: optimistic contributions of pending pairs.
    fn expand(
        &mut self,
        work: &mut Vec<(NodeId, NodeId)>,
        chosen: &mut Matching,
        settled_info: u64,
        work_info: u64,
        settled_pairs: usize,
        work_pairs: usize,
    ) -> Result<()> {
        if !self.viable(settled_info + work_info, settled_pairs + work_pairs) {
            return Ok(());
        }
        let (aid, bid) = match work.pop() {
            None => {
                self.consider(chosen)?;
                return Ok(());
            }
            Some(p) => p,
        };
        let (fb, fp) = self.full_bound(aid, bid);
        let lb = self.local_bound(aid, bid);
        // This pair's own contribution moves from optimistic to settled;
        // its children enter explicitly through the assignment below.
        let work_info = work_info - fb;
        let work_pairs = work_pairs - (fp - 1);
        let settled_info = settled_info + lb;
        let mut assign: Vec<Option<usize>> = vec![None; self.b.node(bid).children.len()];
        let mut used = vec![false; self.a.node(aid).children.len()];
        // Suffix bounds for the not-yet-assigned b-children.
        let b_kids: Vec<NodeId> = self.b.node(bid).children.clone();
        let a_kids: Vec<NodeId> = self.a.node(aid).children.clone();
        let mut suffix: Vec<(u64, usize)> = vec![(0, 0); b_kids.len() + 1];
        for k in (0..b_kids.len()).rev() {
            let mut best_i = 0u64;
            let mut best_p = 0usize;
            for &ac in &a_kids {
                if self.a.node(ac).kind == self.b.node(b_kids[k]).kind {
                    let (i, p) = self.full_bound(ac, b_kids[k]);
                    best_i = best_i.max(i);
                    best_p = best_p.max(p);
                }
            }
            suffix[k] = (suffix[k + 1].0 + best_i, suffix[k + 1].1 + best_p);
        }
        self.pairings(
            aid,
            bid,
            0,
            &mut assign,
            &mut used,
            work,
            chosen,
            (settled_info, work_info),
            (settled_pairs, work_pairs),
            (0, 0),
            &suffix,
        )?;
        work.push((aid, bid));
        Ok(())
    }

    /// `acc`: optimistic contribution of the children assigned so far at
    /// positions below `k`.
    #[allow(clippy::too_many_arguments)]
    fn pairings(
        &mut self,
        aid: NodeId,
        bid: NodeId,
        k: usize,
        assign: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        work: &mut Vec<(NodeId, NodeId)>,
        chosen: &mut Matching,
        info: (u64, u64),
        pairs: (usize, usize),
        acc: (u64, usize),
        suffix: &[(u64, usize)],
    ) -> Result<()> {
        let (settled_info, work_info) = info;
        let (settled_pairs, work_pairs) = pairs;
        if !self.viable(
            settled_info + work_info + acc.0 + suffix[k].0,
            settled_pairs + work_pairs + acc.1 + suffix[k].1,
        ) {
            return Ok(());
        }
        let an = self.a.node(aid);
        let bn = self.b.node(bid);
        if k == bn.children.len() {
            let committed: Vec<(NodeId, NodeId)> = assign
                .iter()
                .enumerate()
                .filter_map(|(bi, ai)| ai.map(|aj| (an.children[aj], bn.children[bi])))
                .collect();
            if self.mode == Mode::Unify && !self.arrows_consistent(an, bn, assign) {
                return Ok(());
            }
            let cbase = chosen.len();
            let wbase = work.len();
            chosen.extend(committed.iter().copied());
            work.extend(committed.iter().copied());
            self.expand(
                work,
                chosen,
                settled_info,
                work_info + acc.0,
                settled_pairs,
                work_pairs + acc.1,
            )?;
            work.truncate(wbase);
            chosen.truncate(cbase);
            return Ok(());
        }
        // Option: pair b-child k with any unused, kind-equal a-child.
        for aj in 0..an.children.len() {
            if used[aj] {
                continue;
            }
            let ac = an.children[aj];
            let bc = bn.children[k];
            if self.a.node(ac).kind != self.b.node(bc).kind {
                continue;
            }
            if self.mode == Mode::Unify && !self.slots_compatible(ac, bc) {
                continue;
            }
            self.budget.tick()?;
            assign[k] = Some(aj);
            used[aj] = true;
            let (fi, fp) = self.full_bound(ac, bc);
            self.pairings(
                aid,
                bid,
                k + 1,
                assign,
                used,
                work,
                chosen,
                info,
                pairs,
                (acc.0 + fi, acc.1 + fp),
                suffix,
            )?;
            assign[k] = None;
            used[aj] = false;
        }
        // Option: leave b-child k unpaired.
        self.budget.tick()?;
        self.pairings(aid, bid, k + 1, assign, used, work, chosen, info, pairs, acc, suffix)
    }

    /// A complete matching: build it, score it, keep the better one.
    fn consider(&mut self, matching: &Matching) -> Result<()> {
        let (info, pairs) = match self.mode {
            Mode::Unify => match build_unified(self.a, self.b, self.ont, matching) {
                Some(r) => (r.script.info_content(self.ont)?, r.paired),
                None => return Ok(()),
            },
            Mode::Intersect => {
                let r = build_intersected(self.a, self.b, self.ont, matching);
                (r.script.info_content(self.ont)?, r.paired)
            }
        };
        let better = match (&self.best, self.mode) {
            (None, _) => true,
            (Some((bi, bp, _)), Mode::Intersect) => {
                info > *bi || (info == *bi && pairs > *bp)
            }
            (Some((bi, bp, _)), Mode::Unify) => info < *bi || (info == *bi && pairs > *bp),
        };
        if better {
            self.best = Some((info, pairs, matching.clone()));
        }
        Ok(())
    }

    /// No time-order arrow of b may be reversed in a (both closed).
    fn arrows_consistent(&self, an: &Node, bn: &Node, assign: &[Option<usize>]) -> bool {
        for &(bi, bj) in &bn.arrows {
            if let (Some(Some(ai)), Some(Some(aj))) = (assign.get(bi), assign.get(bj)) {
                if an.arrows.contains(&(*aj, *ai)) {
                    return false;
                }
            }
        }
        true
    }

    /// Local pruning for unification: two constants in the same slot must
    /// be equal or class-related.
    fn slots_compatible(&self, aid: NodeId, bid: NodeId) -> bool {
        let an = self.a.node(aid);
        let bn = self.b.node(bid);
        for (name, va) in &an.slots {
            if let (SlotValue::Sym(v), Some(SlotValue::Sym(w))) = (va, bn.slots.get(name)) {
                if v != w && !self.class_related(an, name, v, w) {
                    return false;
                }
            }
        }
        true
    }

    fn class_related(&self, node: &Node, slot: &str, v: &str, w: &str) -> bool {
        match self.ont.slot(node.kind, slot).map(|d| &d.domain) {
            Some(Domain::Classes(t)) => t.is_subclass(v, w) || t.is_subclass(w, v),
            _ => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Unification
// ---------------------------------------------------------------------------

/// The smallest-information script carrying all the information of both
/// inputs. Fails with `Error::Disjoint` when their scopes cannot overlap.
pub fn unify(a: &Script, b: &Script, ont: &Ontology, budget: &Budget) -> Result<OpResult> {
    if a.node(Script::ROOT).kind != b.node(Script::ROOT).kind {
        return Err(Error::Disjoint("root node kinds differ".into()));
    }
    let ac = a.transitive_closure_arrows()?;
    let bc = b.transitive_closure_arrows()?;
    let mut search = Searcher::new(&ac, &bc, ont, budget, Mode::Unify)?;
    let matching = search.run()?;
    match matching.and_then(|m| build_unified(&ac, &bc, ont, &m)) {
        Some(mut r) => {
            r.script.canonicalize_aces();
            r.script = r.script.arrow_reduction()?;
            Ok(r)
        }
        None => Err(Error::Disjoint("no consistent node pairing".into())),
    }
}

/// Union-find over the two scripts' ace namespaces, with optional constant
/// bindings discovered during merging.
struct VarTable<'o> {
    ont: &'o Ontology,
    parent: Vec<usize>,
    bound: Vec<Option<(crate::ontology::NodeKind, String, String)>>, // (kind, slot, value)
    keys: HashMap<(bool, u32), usize>,
}

impl<'o> VarTable<'o> {
    fn new(ont: &'o Ontology) -> VarTable<'o> {
        VarTable { ont, parent: Vec::new(), bound: Vec::new(), keys: HashMap::new() }
    }

    fn var(&mut self, side_a: bool, ace: u32) -> usize {
        let n = self.parent.len();
        *self.keys.entry((side_a, ace)).or_insert_with(|| {
            self.parent.push(n);
            self.bound.push(None);
            n
        })
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, x: usize, y: usize) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return true;
        }
        match (self.bound[rx].clone(), self.bound[ry].clone()) {
            (Some(bx), Some(by)) => match self.merge_consts(&bx, &by) {
                Some(m) => {
                    self.parent[ry] = rx;
                    self.bound[rx] = Some(m);
                    true
                }
                None => false,
            },
            (None, by @ Some(_)) => {
                self.parent[ry] = rx;
                self.bound[rx] = by;
                true
            }
            _ => {
                self.parent[ry] = rx;
                true
            }
        }
    }

    fn bind(&mut self, x: usize, kind: crate::ontology::NodeKind, slot: &str, value: &str) -> bool {
        let r = self.find(x);
        let new = (kind, slot.to_string(), value.to_string());
        match self.bound[r].clone() {
            None => {
                self.bound[r] = Some(new);
                true
            }
            Some(prev) => match self.merge_consts(&prev, &new) {
                Some(m) => {
                    self.bound[r] = Some(m);
                    true
                }
                None => false,
            },
        }
    }

    /// Two constant bindings merge when equal, or when class-related
    /// (keeping the subclass).
    fn merge_consts(
        &self,
        x: &(crate::ontology::NodeKind, String, String),
        y: &(crate::ontology::NodeKind, String, String),
    ) -> Option<(crate::ontology::NodeKind, String, String)> {
        if x.2 == y.2 {
            return Some(x.clone());
        }
        if let Some(Domain::Classes(t)) = self.ont.slot(x.0, &x.1).map(|d| &d.domain) {
            if t.is_subclass(&x.2, &y.2) {
                return Some(x.clone());
            }
            if t.is_subclass(&y.2, &x.2) {
                return Some(y.clone());
            }
        }
        None
    }

    fn resolved(&mut self, side_a: bool, ace: u32) -> Option<ResolvedVar> {
        let key = (side_a, ace);
        let idx = *self.keys.get(&key)?;
        let r = self.find(idx);
        Some(match &self.bound[r] {
            Some((_, _, v)) => ResolvedVar::Const(v.clone()),
            None => ResolvedVar::Var(r),
        })
    }
}

enum ResolvedVar {
    Const(String),
    Var(usize),
}

fn build_unified(
    a: &Script,
    b: &Script,
    ont: &Ontology,
    matching: &Matching,
) -> Option<OpResult> {
    let amap: HashMap<NodeId, NodeId> = matching.iter().map(|&(x, y)| (x, y)).collect();
    let bmap: HashMap<NodeId, NodeId> = matching.iter().map(|&(x, y)| (y, x)).collect();

    // Register every ace of both sides up front so resolution always goes
    // through the table (fresh result ids never collide with input ids).
    let mut vars = VarTable::new(ont);
    for id in a.ids() {
        for v in a.node(id).slots.values() {
            if let SlotValue::Ace(x) = v {
                vars.var(true, *x);
            }
        }
    }
    for id in b.ids() {
        for v in b.node(id).slots.values() {
            if let SlotValue::Ace(x) = v {
                vars.var(false, *x);
            }
        }
    }
    for &(aid, bid) in matching {
        let an = a.node(aid);
        let bn = b.node(bid);
        for (name, va) in &an.slots {
            let vb = match bn.slots.get(name) {
                Some(v) => v,
                None => continue,
            };
            match (va, vb) {
                (SlotValue::Sym(v), SlotValue::Sym(w)) => {
                    if v != w {
                        // Must be class-related; pick the subclass later.
                        match ont.slot(an.kind, name).map(|d| &d.domain) {
                            Some(Domain::Classes(t))
                                if t.is_subclass(v, w) || t.is_subclass(w, v) => {}
                            _ => return None,
                        }
                    }
                }
                (SlotValue::Ace(x), SlotValue::Sym(w)) => {
                    let vx = vars.var(true, *x);
                    if !vars.bind(vx, an.kind, name, w) {
                        return None;
                    }
                }
                (SlotValue::Sym(v), SlotValue::Ace(y)) => {
                    let vy = vars.var(false, *y);
                    if !vars.bind(vy, an.kind, name, v) {
                        return None;
                    }
                }
                (SlotValue::Ace(x), SlotValue::Ace(y)) => {
                    let vx = vars.var(true, *x);
                    let vy = vars.var(false, *y);
                    if !vars.union(vx, vy) {
                        return None;
                    }
                }
            }
        }
    }

    // Build the result tree.
    let mut nodes: Vec<Node> = Vec::new();
    let mut from_a = HashMap::new();
    let mut from_b = HashMap::new();
    let mut var_ids: HashMap<usize, u32> = HashMap::new();
    let mut next_ace: u32 = 0;

    #[allow(clippy::too_many_arguments)]
    fn resolve(
        vars: &mut VarTable,
        var_ids: &mut HashMap<usize, u32>,
        next_ace: &mut u32,
        side_a: bool,
        v: &SlotValue,
    ) -> SlotValue {
        match v {
            SlotValue::Sym(s) => SlotValue::Sym(s.clone()),
            SlotValue::Ace(x) => match vars.resolved(side_a, *x) {
                Some(ResolvedVar::Const(c)) => SlotValue::Sym(c),
                Some(ResolvedVar::Var(r)) => {
                    let id = *var_ids.entry(r).or_insert_with(|| {
                        let v = *next_ace;
                        *next_ace += 1;
                        v
                    });
                    SlotValue::Ace(id)
                }
                None => SlotValue::Ace(*x),
            },
        }
    }

    struct Ctx<'c> {
        a: &'c Script,
        b: &'c Script,
        ont: &'c Ontology,
        amap: HashMap<NodeId, NodeId>,
        bmap: HashMap<NodeId, NodeId>,
    }

    #[allow(clippy::too_many_arguments)]
    fn build_pair(
        cx: &Ctx,
        vars: &mut VarTable,
        var_ids: &mut HashMap<usize, u32>,
        next_ace: &mut u32,
        nodes: &mut Vec<Node>,
        from_a: &mut HashMap<NodeId, NodeId>,
        from_b: &mut HashMap<NodeId, NodeId>,
        aid: NodeId,
        bid: NodeId,
    ) -> Option<NodeId> {
        let slot = nodes.len();
        nodes.push(Node::new(cx.a.node(aid).kind));
        from_a.insert(aid, slot);
        from_b.insert(bid, slot);
        let an = cx.a.node(aid);
        let bn = cx.b.node(bid);
        let mut names: Vec<&String> = an.slots.keys().collect();
        for n in bn.slots.keys() {
            if !an.slots.contains_key(n) {
                names.push(n);
            }
        }
        names.sort();
        for name in names {
            let out = match (an.slots.get(name), bn.slots.get(name)) {
                (Some(SlotValue::Sym(v)), Some(SlotValue::Sym(w))) => {
                    if v == w {
                        SlotValue::Sym(v.clone())
                    } else {
                        // Class-related; keep the subclass.
                        match cx.ont.slot(an.kind, name).map(|d| &d.domain) {
                            Some(Domain::Classes(t)) if t.is_subclass(v, w) => {
                                SlotValue::Sym(v.clone())
                            }
                            _ => SlotValue::Sym(w.clone()),
                        }
                    }
                }
                (Some(va), None) => resolve(vars, var_ids, next_ace, true, va),
                (None, Some(vb)) => resolve(vars, var_ids, next_ace, false, vb),
                (Some(va), Some(_vb)) => {
                    // At least one side is an ace: both sides resolve to the
                    // same variable or constant through the table.
                    resolve(vars, var_ids, next_ace, true, va)
                }
                (None, None) => unreachable!(),
            };
            nodes[slot].slots.insert(name.clone(), out);
        }

        // Children: a's order first (paired or copied), then b's leftovers.
        let mut kids: Vec<NodeId> = Vec::new();
        let mut a_pos: HashMap<NodeId, usize> = HashMap::new();
        let mut b_pos: HashMap<NodeId, usize> = HashMap::new();
        for (ai, &ac) in an.children.iter().enumerate() {
            let pos = kids.len();
            a_pos.insert(ac, pos);
            if let Some(&bc) = cx.amap.get(&ac) {
                b_pos.insert(bc, pos);
                let built = build_pair(
                    cx, vars, var_ids, next_ace, nodes, from_a, from_b, ac, bc,
                )?;
                kids.push(built);
            } else {
                let copy = copy_side(cx, vars, var_ids, next_ace, nodes, from_a, from_b, ac, true);
                kids.push(copy);
            }
            let _ = ai;
        }
        for &bc in &bn.children {
            if cx.bmap.contains_key(&bc) {
                continue;
            }
            let pos = kids.len();
            b_pos.insert(bc, pos);
            let copy = copy_side(cx, vars, var_ids, next_ace, nodes, from_a, from_b, bc, false);
            kids.push(copy);
        }
        // Arrows: union of both inputs' (closed) arrows.
        let mut arrows: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &(i, j) in &an.arrows {
            let (ci, cj) = (an.children[i], an.children[j]);
            arrows.insert((a_pos[&ci], a_pos[&cj]));
        }
        for &(i, j) in &bn.arrows {
            let (ci, cj) = (bn.children[i], bn.children[j]);
            let pi = b_pos.get(&ci).copied().or_else(|| {
                cx.bmap.get(&ci).and_then(|ac| a_pos.get(ac)).copied()
            })?;
            let pj = b_pos.get(&cj).copied().or_else(|| {
                cx.bmap.get(&cj).and_then(|ac| a_pos.get(ac)).copied()
            })?;
            arrows.insert((pi, pj));
        }
        if closed_arrows(&arrows, kids.len()).is_err() {
            return None; // reversed time order shows up as a cycle
        }
        nodes[slot].children = kids;
        nodes[slot].arrows = arrows;
        Some(slot)
    }

    /// Copy an unmatched subtree into the result, resolving its aces.
    #[allow(clippy::too_many_arguments)]
    fn copy_side(
        cx: &Ctx,
        vars: &mut VarTable,
        var_ids: &mut HashMap<usize, u32>,
        next_ace: &mut u32,
        nodes: &mut Vec<Node>,
        from_a: &mut HashMap<NodeId, NodeId>,
        from_b: &mut HashMap<NodeId, NodeId>,
        id: NodeId,
        side_a: bool,
    ) -> NodeId {
        let src = if side_a { cx.a } else { cx.b };
        let slot = nodes.len();
        nodes.push(Node::new(src.node(id).kind));
        if side_a {
            from_a.insert(id, slot);
        } else {
            from_b.insert(id, slot);
        }
        for (name, v) in &src.node(id).slots {
            let out = resolve(vars, var_ids, next_ace, side_a, v);
            nodes[slot].slots.insert(name.clone(), out);
        }
        let kids: Vec<NodeId> = src.node(id).children.clone();
        let mut new_kids = Vec::with_capacity(kids.len());
        for c in kids {
            new_kids.push(copy_side(cx, vars, var_ids, next_ace, nodes, from_a, from_b, c, side_a));
        }
        nodes[slot].arrows = src.node(id).arrows.clone();
        nodes[slot].children = new_kids;
        slot
    }

    let cx = Ctx { a, b, ont, amap, bmap };
    let root = build_pair(
        &cx,
        &mut vars,
        &mut var_ids,
        &mut next_ace,
        &mut nodes,
        &mut from_a,
        &mut from_b,
        Script::ROOT,
        Script::ROOT,
    )?;
    debug_assert_eq!(root, 0);
    // An ace group forced to a constant outside one of its slots' domains
    // means the scopes cannot overlap under this matching.
    for n in &nodes {
        for (name, v) in &n.slots {
            if let SlotValue::Sym(s) = v {
                match ont.slot(n.kind, name) {
                    Some(def) if def.domain.contains(s) => {}
                    _ => return None,
                }
            }
        }
    }
    let paired = matching.len();
    Some(OpResult { script: Script::from_nodes(nodes), from_a, from_b, paired })
}

// ---------------------------------------------------------------------------
// Intersection
// ---------------------------------------------------------------------------

/// The largest-information script included in both inputs. Always succeeds
/// (for scripts sharing a root kind).
pub fn intersect(a: &Script, b: &Script, ont: &Ontology, budget: &Budget) -> Result<OpResult> {
    if a.node(Script::ROOT).kind != b.node(Script::ROOT).kind {
        return Err(Error::Invalid("intersect requires a common root kind".into()));
    }
    let ac = a.transitive_closure_arrows()?;
    let bc = b.transitive_closure_arrows()?;
    let mut search = Searcher::new(&ac, &bc, ont, budget, Mode::Intersect)?;
    let matching = search.run()?.expect("at least the root-only matching exists");
    let mut r = build_intersected(&ac, &bc, ont, &matching);
    r.script.canonicalize_aces();
    r.script = r.script.arrow_reduction()?;
    Ok(r)
}

/// Also reports, for scoring, the bits of outright slot conflicts seen at
/// paired nodes (used by generation's "truth" criterion).
pub fn intersect_with_conflicts(
    a: &Script,
    b: &Script,
    ont: &Ontology,
    budget: &Budget,
) -> Result<(OpResult, Bits)> {
    let r = intersect(a, b, ont, budget)?;
    let mut conflict = Bits::ZERO;
    for (&aid, &rid) in &r.from_a {
        let bid = match r.from_b.iter().find(|(_, &v)| v == rid) {
            Some((&bid, _)) => bid,
            None => continue,
        };
        let an = a.node(aid);
        let bn = b.node(bid);
        for (name, va) in &an.slots {
            if let (SlotValue::Sym(v), Some(SlotValue::Sym(w))) = (va, bn.slots.get(name)) {
                if v != w {
                    let related = match ont.slot(an.kind, name).map(|d| &d.domain) {
                        Some(Domain::Classes(t)) => t.is_subclass(v, w) || t.is_subclass(w, v),
                        _ => false,
                    };
                    if !related {
                        if let Some(def) = ont.slot(an.kind, name) {
                            conflict += def.cost;
                        }
                    }
                }
            }
        }
    }
    Ok((r, conflict))
}

fn build_intersected(a: &Script, b: &Script, ont: &Ontology, matching: &Matching) -> OpResult {
    let amap: HashMap<NodeId, NodeId> = matching.iter().map(|&(x, y)| (x, y)).collect();

    let mut nodes: Vec<Node> = Vec::new();
    let mut from_a = HashMap::new();
    let mut from_b = HashMap::new();
    // Shared-ace discovery: identical (slot, a-value, b-value) conflicts
    // get one ace (Appendix step 7).
    let mut ace_keys: HashMap<(String, SlotValue, SlotValue), u32> = HashMap::new();
    let mut next_ace: u32 = 0;

    #[allow(clippy::too_many_arguments)]
    fn build(
        a: &Script,
        b: &Script,
        ont: &Ontology,
        amap: &HashMap<NodeId, NodeId>,
        nodes: &mut Vec<Node>,
        from_a: &mut HashMap<NodeId, NodeId>,
        from_b: &mut HashMap<NodeId, NodeId>,
        ace_keys: &mut HashMap<(String, SlotValue, SlotValue), u32>,
        next_ace: &mut u32,
        aid: NodeId,
        bid: NodeId,
    ) -> NodeId {
        let slot = nodes.len();
        nodes.push(Node::new(a.node(aid).kind));
        from_a.insert(aid, slot);
        from_b.insert(bid, slot);
        let an = a.node(aid);
        let bn = b.node(bid);
        for (name, va) in &an.slots {
            let vb = match bn.slots.get(name) {
                Some(v) => v,
                None => continue,
            };
            let out = match (va, vb) {
                (SlotValue::Sym(v), SlotValue::Sym(w)) if v == w => Some(SlotValue::Sym(v.clone())),
                (SlotValue::Sym(v), SlotValue::Sym(w)) => {
                    match ont.slot(an.kind, name).map(|d| &d.domain) {
                        Some(Domain::Classes(t)) => {
                            // Common ancestor; the tree root carries no
                            // information, so the slot drops there.
                            match t.common_ancestor(v, w) {
                                Some(anc) if anc != t.root() => Some(SlotValue::sym(anc)),
                                _ => None,
                            }
                        }
                        _ => {
                            let key = (name.clone(), va.clone(), vb.clone());
                            let id = *ace_keys.entry(key).or_insert_with(|| {
                                let v = *next_ace;
                                *next_ace += 1;
                                v
                            });
                            Some(SlotValue::Ace(id))
                        }
                    }
                }
                _ => {
                    let key = (name.clone(), va.clone(), vb.clone());
                    let id = *ace_keys.entry(key).or_insert_with(|| {
                        let v = *next_ace;
                        *next_ace += 1;
                        v
                    });
                    Some(SlotValue::Ace(id))
                }
            };
            if let Some(v) = out {
                nodes[slot].slots.insert(name.clone(), v);
            }
        }
        let mut kids = Vec::new();
        let mut a_pos: HashMap<NodeId, usize> = HashMap::new();
        for &ac in &an.children {
            if let Some(&bc) = amap.get(&ac) {
                a_pos.insert(ac, kids.len());
                let built = build(
                    a, b, ont, amap, nodes, from_a, from_b, ace_keys, next_ace, ac, bc,
                );
                kids.push(built);
            }
        }
        // Arrows survive only when present in both (closed) inputs.
        let mut arrows = BTreeSet::new();
        for &(i, j) in &an.arrows {
            let (ci, cj) = (an.children[i], an.children[j]);
            if let (Some(&pi), Some(&pj)) = (a_pos.get(&ci), a_pos.get(&cj)) {
                let (bi, bj) = (amap[&ci], amap[&cj]);
                let b_has = bn.arrows.iter().any(|&(x, y)| {
                    bn.children[x] == bi && bn.children[y] == bj
                });
                if b_has {
                    arrows.insert((pi, pj));
                }
            }
        }
        nodes[slot].children = kids;
        nodes[slot].arrows = arrows;
        slot
    }

    let root = build(
        a,
        b,
        ont,
        &amap,
        &mut nodes,
        &mut from_a,
        &mut from_b,
        &mut ace_keys,
        &mut next_ace,
        Script::ROOT,
        Script::ROOT,
    );
    debug_assert_eq!(root, 0);
    let mut script = Script::from_nodes(nodes);
    prune_single_aces(&mut script);
    let remap = prune_empty_leaves(&mut script).expect("intersection arrows stay acyclic");
    let from_a = from_a
        .into_iter()
        .filter_map(|(k, v)| remap.get(&v).map(|&n| (k, n)))
        .collect();
    let from_b = from_b
        .into_iter()
        .filter_map(|(k, v)| remap.get(&v).map(|&n| (k, n)))
        .collect();
    OpResult { script, from_a, from_b, paired: matching.len() }
}

/// An ace occurring once carries no information and is removed.
pub fn prune_single_aces(s: &mut Script) {
    let occ = s.ace_occurrences();
    for (ace, places) in occ {
        if places.len() == 1 {
            let (id, name) = &places[0];
            s.node_mut(*id).slots.remove(name);
            let _ = ace;
        }
    }
}

/// Remove information-free leaves: nodes with no slots and no children
/// say nothing about the denoted situations, and if kept they would
/// survive every later intersection, so learned structures could never
/// converge on the generating one. Arrow order through a removed scene is
/// preserved via the transitive closure. Returns the surviving-node remap.
pub fn prune_empty_leaves(s: &mut Script) -> Result<HashMap<NodeId, NodeId>> {
    let mut total: HashMap<NodeId, NodeId> = s.ids().map(|i| (i, i)).collect();
    loop {
        let mut removable: Option<NodeId> = None;
        for id in (1..s.len()).rev() {
            let n = s.node(id);
            if !(n.slots.is_empty() && n.children.is_empty()) {
                continue;
            }
            // A bare node at the end of a time-order arrow still carries
            // the ordering bit; only arrow-free bare leaves go.
            let parent = s.parent_of(id).expect("non-root node has a parent");
            let pos = s.node(parent).children.iter().position(|&c| c == id).unwrap();
            let touched =
                s.node(parent).arrows.iter().any(|&(i, j)| i == pos || j == pos);
            if !touched {
                removable = Some(id);
                break;
            }
        }
        let id = match removable {
            None => break,
            Some(id) => id,
        };
        let parent = s.parent_of(id).expect("non-root node has a parent");
        let closed = crate::script::closed_arrows(
            &s.node(parent).arrows,
            s.node(parent).children.len(),
        )?;
        let pos = s.node(parent).children.iter().position(|&c| c == id).unwrap();
        let remap = |i: usize| if i > pos { i - 1 } else { i };
        let arrows: std::collections::BTreeSet<(usize, usize)> = closed
            .into_iter()
            .filter(|&(i, j)| i != pos && j != pos)
            .map(|(i, j)| (remap(i), remap(j)))
            .collect();
        // Rebuild without the removed node.
        let keep: Vec<NodeId> = s.ids().filter(|&x| x != id).collect();
        let mut new_ids: HashMap<NodeId, NodeId> = HashMap::new();
        for (new, &old) in keep.iter().enumerate() {
            new_ids.insert(old, new);
        }
        let mut nodes = Vec::with_capacity(keep.len());
        for &old in &keep {
            let mut n = s.node(old).clone();
            n.children = n.children.iter().filter(|&&c| c != id).map(|c| new_ids[c]).collect();
            if old == parent {
                n.arrows = arrows.clone();
            }
            nodes.push(n);
        }
        *s = Script::from_nodes(nodes);
        total = total
            .into_iter()
            .filter_map(|(orig, cur)| new_ids.get(&cur).map(|&n| (orig, n)))
            .collect();
    }
    *s = s.arrow_reduction()?;
    Ok(total)
}

// ---------------------------------------------------------------------------
// Subtraction
// ---------------------------------------------------------------------------

/// The smallest script `e` with `unify(e, a) = b`. Fails with
/// `Error::Disjoint` when `b` does not include `a`.
///
/// Stripping everything the matching covers can overshoot: when `b` holds
/// the removed information redundantly, re-unification may attach `a`
/// elsewhere and land below `b`. Each candidate is therefore verified
/// against the defining equation, falling back to lighter stripping and
/// ultimately to `b` itself (which always satisfies it).
pub fn subtract(b: &Script, a: &Script, ont: &Ontology, budget: &Budget) -> Result<Script> {
    let maps = inclusion_maps(b, a, ont, budget, 8)?;
    if maps.is_empty() {
        return Err(Error::Disjoint("subtrahend is not included".into()));
    }
    let mut best: Option<(Bits, Script)> = None;
    for map in &maps {
        for strip_nodes in [true, false] {
            let e = subtract_candidate(b, a, map, strip_nodes)?;
            let info = e.info_content(ont)?;
            if best.as_ref().map_or(false, |(bi, _)| info >= *bi) {
                continue;
            }
            let back = match unify(&e, a, ont, budget) {
                Ok(u) => u.script,
                Err(err) if err.is_disjoint() => continue,
                Err(err) => return Err(err),
            };
            if back.equivalent(b, ont)? {
                best = Some((info, e));
            }
        }
    }
    match best {
        Some((_, e)) => Ok(e),
        None => {
            let mut e = b.arrow_reduction()?;
            e.canonicalize_aces();
            Ok(e)
        }
    }
}

fn subtract_candidate(
    b: &Script,
    a: &Script,
    map: &HashMap<NodeId, NodeId>,
    strip_nodes: bool,
) -> Result<Script> {
    // map: a-node -> b-node
    let bc = b.transitive_closure_arrows()?;
    let acl = a.transitive_closure_arrows()?;

    // Which a-aces correspond one-to-one with a b-ace?
    let mut ace_pairs: HashMap<u32, BTreeSet<Option<u32>>> = HashMap::new();
    let mut b_ace_hits: HashMap<u32, usize> = HashMap::new();
    for (aid, bid) in map {
        for (name, va) in &acl.node(*aid).slots {
            if let SlotValue::Ace(x) = va {
                match bc.node(*bid).slots.get(name) {
                    Some(SlotValue::Ace(y)) => {
                        ace_pairs.entry(*x).or_default().insert(Some(*y));
                        *b_ace_hits.entry(*y).or_default() += 1;
                    }
                    _ => {
                        ace_pairs.entry(*x).or_default().insert(None);
                    }
                }
            }
        }
    }
    let b_occ = bc.ace_occurrences();
    let bijective: BTreeSet<u32> = ace_pairs
        .iter()
        .filter_map(|(x, targets)| {
            if targets.len() != 1 {
                return None;
            }
            match targets.iter().next().unwrap() {
                Some(y) => {
                    let covered = b_ace_hits.get(y).copied().unwrap_or(0);
                    let total = b_occ.get(y).map_or(0, |v| v.len());
                    if covered == total {
                        Some(*x)
                    } else {
                        None
                    }
                }
                None => None,
            }
        })
        .collect();

    // Slots to strip from each b node.
    let mut strip: HashMap<NodeId, BTreeSet<String>> = HashMap::new();
    for (aid, bid) in map {
        for (name, va) in &acl.node(*aid).slots {
            let vb = &bc.node(*bid).slots[name];
            let removable = match (va, vb) {
                (SlotValue::Sym(v), SlotValue::Sym(w)) => v == w,
                (SlotValue::Ace(x), SlotValue::Ace(_)) => bijective.contains(x),
                _ => false,
            };
            if removable {
                strip.entry(*bid).or_default().insert(name.clone());
            }
        }
    }
    // Arrows implied by a (mapped into b, closed) are dropped.
    let mut drop_arrows: HashMap<NodeId, BTreeSet<(NodeId, NodeId)>> = HashMap::new();
    for (aid, bid) in map {
        let an = acl.node(*aid);
        for &(i, j) in &an.arrows {
            let (ci, cj) = (an.children[i], an.children[j]);
            if let (Some(&bi), Some(&bj)) = (map.get(&ci), map.get(&cj)) {
                drop_arrows.entry(*bid).or_default().insert((bi, bj));
            }
        }
    }
    // Fully-covered nodes (no slots left, all children removed) disappear.
    let covered: BTreeSet<NodeId> = map.values().copied().collect();
    let mut removed: BTreeSet<NodeId> = BTreeSet::new();
    // Bottom-up pass.
    let mut order = bc.dfs();
    order.reverse();
    for id in order {
        if !strip_nodes || id == Script::ROOT || !covered.contains(&id) {
            continue;
        }
        let n = bc.node(id);
        let empty = strip.get(&id).map_or(false, |s| s.len() == n.slots.len())
            || n.slots.is_empty();
        let kids_gone = n.children.iter().all(|c| removed.contains(c));
        if empty && kids_gone {
            removed.insert(id);
        }
    }

    fn rebuild(
        bc: &Script,
        id: NodeId,
        strip: &HashMap<NodeId, BTreeSet<String>>,
        drop_arrows: &HashMap<NodeId, BTreeSet<(NodeId, NodeId)>>,
        removed: &BTreeSet<NodeId>,
        nodes: &mut Vec<Node>,
    ) -> NodeId {
        let slot = nodes.len();
        nodes.push(Node::new(bc.node(id).kind));
        for (name, v) in &bc.node(id).slots {
            if strip.get(&id).map_or(false, |s| s.contains(name)) {
                continue;
            }
            nodes[slot].slots.insert(name.clone(), v.clone());
        }
        let mut kids = Vec::new();
        let mut pos: HashMap<NodeId, usize> = HashMap::new();
        for &c in &bc.node(id).children {
            if removed.contains(&c) {
                continue;
            }
            pos.insert(c, kids.len());
            let built = rebuild(bc, c, strip, drop_arrows, removed, nodes);
            kids.push(built);
        }
        let dropped = drop_arrows.get(&id);
        let mut arrows = BTreeSet::new();
        for &(i, j) in &bc.node(id).arrows {
            let (ci, cj) = (bc.node(id).children[i], bc.node(id).children[j]);
            if dropped.map_or(false, |d| d.contains(&(ci, cj))) {
                continue;
            }
            if let (Some(&pi), Some(&pj)) = (pos.get(&ci), pos.get(&cj)) {
                arrows.insert((pi, pj));
            }
        }
        nodes[slot].children = kids;
        nodes[slot].arrows = arrows;
        slot
    }

    let mut nodes = Vec::new();
    rebuild(&bc, Script::ROOT, &strip, &drop_arrows, &removed, &mut nodes);
    let mut e = Script::from_nodes(nodes);
    e = e.arrow_reduction()?;
    e.canonicalize_aces();
    Ok(e)
}
