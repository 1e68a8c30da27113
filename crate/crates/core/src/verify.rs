//! Randomized verification of the script-algebra laws, plus brute-force
//! reference oracles used by the test suites.
//!
//! The oracles deliberately avoid the production code paths: inclusion is
//! decided by enumerating ace substitutions and ground embeddings, and the
//! unify/intersect references enumerate node matchings as flat sets and
//! rebuild results with the dumbest possible merge.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{self, Budget};
use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::gen::{self, GenConfig};
use crate::ontology::{NodeKind, Ontology};
use crate::script::{Node, NodeId, Script, SlotValue};

/// The operations under test, pluggable so a deliberately broken variant
/// can be checked to fail the suite.
pub trait AlgebraOps {
    fn unify(&self, a: &Script, b: &Script, ont: &Ontology, budget: &Budget) -> Result<Script>;
    fn intersect(&self, a: &Script, b: &Script, ont: &Ontology, budget: &Budget)
        -> Result<Script>;
    fn includes(&self, a: &Script, b: &Script, ont: &Ontology, budget: &Budget) -> Result<bool>;
}

/// The production implementations.
pub struct StdOps;

impl AlgebraOps for StdOps {
    fn unify(&self, a: &Script, b: &Script, ont: &Ontology, budget: &Budget) -> Result<Script> {
        algebra::unify(a, b, ont, budget).map(|r| r.script)
    }

    fn intersect(
        &self,
        a: &Script,
        b: &Script,
        ont: &Ontology,
        budget: &Budget,
    ) -> Result<Script> {
        algebra::intersect(a, b, ont, budget).map(|r| r.script)
    }

    fn includes(&self, a: &Script, b: &Script, ont: &Ontology, budget: &Budget) -> Result<bool> {
        algebra::includes(a, b, ont, budget)
    }
}

#[derive(Debug, Default)]
pub struct VerifyReport {
    pub cases: usize,
    pub commutativity_failures: usize,
    pub absorption_failures: usize,
    pub associativity_failures: usize,
    pub distributivity_failures: usize,
    pub ordering_failures: usize,
    pub monotonicity_failures: usize,
    pub first_failure: Option<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.commutativity_failures == 0
            && self.absorption_failures == 0
            && self.associativity_failures == 0
            && self.distributivity_failures == 0
            && self.ordering_failures == 0
            && self.monotonicity_failures == 0
    }

    pub fn lines(&self) -> Vec<String> {
        let one = |name: &str, n: usize| {
            format!("{}: {} ({} failures)", name, if n == 0 { "pass" } else { "FAIL" }, n)
        };
        vec![
            format!("cases: {}", self.cases),
            one("commutativity (exact)", self.commutativity_failures),
            one("absorption (exact)", self.absorption_failures),
            one("associativity (<= 2 bits)", self.associativity_failures),
            one("distributivity (<= 2 bits)", self.distributivity_failures),
            one("inclusion ordering", self.ordering_failures),
            one("monotonicity", self.monotonicity_failures),
        ]
    }
}

/// Run the randomized identity suite on `n_cases` seeded triples.
pub fn verify_algebra(
    ont: &Ontology,
    seed: u64,
    n_cases: usize,
    ops: &dyn AlgebraOps,
) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = GenConfig { max_nodes: 6, ..GenConfig::default() };
    let budget = Budget::new(10_000_000);
    let tol = Bits::from_bits(2);
    let mut rep = VerifyReport::default();
    fn note(slot: &mut usize, first: &mut Option<String>, msg: String) {
        *slot += 1;
        if first.is_none() {
            *first = Some(msg);
        }
    }
    for case in 0..n_cases {
        rep.cases += 1;
        let a = gen::random_script(ont, &cfg, &mut rng);
        let b = gen::random_script(ont, &cfg, &mut rng);
        let c = gen::random_script(ont, &cfg, &mut rng);

        let equiv = |x: &Script, y: &Script| -> Result<bool> {
            Ok(ops.includes(x, y, ont, &budget)? && ops.includes(y, x, ont, &budget)?)
        };

        // Eq 2.7: commutativity, exactly.
        let iab = ops.intersect(&a, &b, ont, &budget)?;
        let iba = ops.intersect(&b, &a, ont, &budget)?;
        if !equiv(&iab, &iba)? {
            note(
                &mut rep.commutativity_failures,
                &mut rep.first_failure,
                format!("case {case}: intersect not commutative"),
            );
        }
        let uab = ops.unify(&a, &b, ont, &budget);
        let uba = ops.unify(&b, &a, ont, &budget);
        match (&uab, &uba) {
            (Ok(x), Ok(y)) => {
                if !equiv(x, y)? {
                    note(
                        &mut rep.commutativity_failures,
                        &mut rep.first_failure,
                        format!("case {case}: unify not commutative"),
                    );
                }
            }
            (Err(e1), Err(e2)) if e1.is_disjoint() && e2.is_disjoint() => {}
            (Err(e), _) | (_, Err(e)) if !e.is_disjoint() => return Err(e.clone()),
            _ => note(
                &mut rep.commutativity_failures,
                &mut rep.first_failure,
                format!("case {case}: unify failure not symmetric"),
            ),
        }

        // Eq 2.8: absorption, exactly.
        match ops.unify(&a, &iab, ont, &budget) {
            Ok(u) => {
                if !equiv(&u, &a)? {
                    note(
                        &mut rep.absorption_failures,
                        &mut rep.first_failure,
                        format!("case {case}: unify(a, intersect(a,b)) != a"),
                    );
                }
            }
            Err(e) if e.is_disjoint() => note(
                &mut rep.absorption_failures,
                &mut rep.first_failure,
                format!("case {case}: unify(a, intersect(a,b)) failed"),
            ),
            Err(e) => return Err(e),
        }

        // Monotonicity of information content.
        let (ia, ib) = (a.info_content(ont)?, b.info_content(ont)?);
        let ii = iab.info_content(ont)?;
        if ii > ia.min(ib) {
            note(
                &mut rep.monotonicity_failures,
                &mut rep.first_failure,
                format!("case {case}: intersect info above min"),
            );
        }
        if let Ok(u) = &uab {
            let iu = u.info_content(ont)?;
            if iu < ia.max(ib) {
                note(
                    &mut rep.monotonicity_failures,
                    &mut rep.first_failure,
                    format!("case {case}: unify info below max"),
                );
            }
        }

        // Eq 2.9: associativity within tolerance, whenever both exist.
        let left = ops
            .unify(&b, &c, ont, &budget)
            .and_then(|bc| ops.unify(&a, &bc, ont, &budget));
        let right = uab
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|ab| ops.unify(ab, &c, ont, &budget));
        if let (Ok(l), Ok(r)) = (&left, &right) {
            let d = l.info_content(ont)?.abs_diff(r.info_content(ont)?);
            if d > tol {
                note(
                    &mut rep.associativity_failures,
                    &mut rep.first_failure,
                    format!("case {case}: associativity off by {d}"),
                );
            }
        }

        // Eq 2.10: distributivity within tolerance, whenever defined.
        if let Ok(ubc) = ops.unify(&b, &c, ont, &budget) {
            let lhs = ops.intersect(&a, &ubc, ont, &budget)?;
            let iac = ops.intersect(&a, &c, ont, &budget)?;
            match ops.unify(&iab, &iac, ont, &budget) {
                Ok(rhs) => {
                    let d = lhs.info_content(ont)?.abs_diff(rhs.info_content(ont)?);
                    if d > tol {
                        note(
                            &mut rep.distributivity_failures,
                            &mut rep.first_failure,
                            format!("case {case}: distributivity off by {d}"),
                        );
                    }
                }
                Err(e) if e.is_disjoint() => {}
                Err(e) => return Err(e),
            }
        }

        // Inclusion is a partial order up to renaming.
        if !ops.includes(&a, &a, ont, &budget)? {
            note(
                &mut rep.ordering_failures,
                &mut rep.first_failure,
                format!("case {case}: inclusion not reflexive"),
            );
        }
        // unify(a,b) >= a >= intersect(a,b); transitivity demands
        // unify(a,b) >= intersect(a,b).
        if let Ok(top) = &uab {
            if ops.includes(top, &a, ont, &budget)?
                && ops.includes(&a, &iab, ont, &budget)?
                && !ops.includes(top, &iab, ont, &budget)?
            {
                note(
                    &mut rep.ordering_failures,
                    &mut rep.first_failure,
                    format!("case {case}: inclusion not transitive"),
                );
            }
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Brute-force oracles
// ---------------------------------------------------------------------------

pub mod oracle {
    use super::*;
    use crate::ontology::Domain;

    /// Every fully-specified script over a tiny flat ontology, up to the
    /// given shape caps: the situations of the scope-set semantics.
    pub struct Universe {
        pub grounds: Vec<Script>,
    }

    impl Universe {
        pub fn build(ont: &Ontology, max_scenes: usize, max_ens: usize) -> Universe {
            let scene_kind = NodeKind::Scene;
            let en_kind = NodeKind::Entity;
            let scene_slots = flat_slots(ont, scene_kind);
            let en_slots = flat_slots(ont, en_kind);

            let en_configs = all_assignments(&en_slots);
            let scene_configs = all_assignments(&scene_slots);

            let mut scenes: Vec<Vec<Node>> = Vec::new();
            for sc in &scene_configs {
                for n_en in 0..=max_ens {
                    for ens in combos(&en_configs, n_en) {
                        let mut nodes = vec![Node::new(scene_kind)];
                        nodes[0].slots = sc.clone();
                        for e in &ens {
                            let id = nodes.len();
                            let mut n = Node::new(en_kind);
                            n.slots = (*e).clone();
                            nodes.push(n);
                            nodes[0].children.push(id);
                        }
                        scenes.push(nodes);
                    }
                }
            }

            let mut grounds = Vec::new();
            for n_sc in 0..=max_scenes {
                for pick in combos_idx(scenes.len(), n_sc) {
                    for arrows in acyclic_arrow_sets(n_sc) {
                        let mut nodes = vec![Node::new(ont.root_kind)];
                        for &si in &pick {
                            let offset = nodes.len();
                            for (k, n) in scenes[si].iter().enumerate() {
                                let mut n = n.clone();
                                n.children = n.children.iter().map(|c| c + offset).collect();
                                nodes.push(n);
                                if k == 0 {
                                    nodes[0].children.push(offset);
                                }
                            }
                        }
                        nodes[0].arrows = arrows.clone();
                        grounds.push(Script::from_nodes(nodes));
                    }
                }
            }
            Universe { grounds }
        }

        /// Membership mask of sigma(s) over the universe.
        pub fn scope(&self, s: &Script, ont: &Ontology) -> Vec<bool> {
            self.grounds.iter().map(|g| ground_includes(g, s, ont)).collect()
        }
    }

    pub fn subset(a: &[bool], b: &[bool]) -> bool {
        a.iter().zip(b).all(|(&x, &y)| !x || y)
    }

    fn flat_slots(ont: &Ontology, kind: NodeKind) -> Vec<(String, Vec<String>)> {
        ont.slots_of(kind)
            .filter_map(|(name, def)| match &def.domain {
                Domain::Flat(vs) => Some((name.clone(), vs.iter().cloned().collect())),
                Domain::Classes(_) => None,
            })
            .collect()
    }

    fn all_assignments(
        slots: &[(String, Vec<String>)],
    ) -> Vec<std::collections::BTreeMap<String, SlotValue>> {
        let mut out = vec![std::collections::BTreeMap::new()];
        for (name, values) in slots {
            let mut next = Vec::new();
            for m in &out {
                for v in values {
                    let mut m2 = m.clone();
                    m2.insert(name.clone(), SlotValue::sym(v));
                    next.push(m2);
                }
            }
            out = next;
        }
        out
    }

    /// Ordered selections with repetition, length exactly n.
    fn combos<T>(pool: &[T], n: usize) -> Vec<Vec<&T>> {
        let mut out: Vec<Vec<&T>> = vec![Vec::new()];
        for _ in 0..n {
            let mut next = Vec::new();
            for c in &out {
                for item in pool {
                    let mut c2 = c.clone();
                    c2.push(item);
                    next.push(c2);
                }
            }
            out = next;
        }
        out
    }

    fn combos_idx(pool: usize, n: usize) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..n {
            let mut next = Vec::new();
            for c in &out {
                for i in 0..pool {
                    let mut c2 = c.clone();
                    c2.push(i);
                    next.push(c2);
                }
            }
            out = next;
        }
        out
    }

    /// Every acyclic arrow relation over n ordered siblings.
    fn acyclic_arrow_sets(n: usize) -> Vec<BTreeSet<(usize, usize)>> {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        let mut out = Vec::new();
        for mask in 0u32..(1 << pairs.len()) {
            let set: BTreeSet<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, &p)| p)
                .collect();
            if crate::script::closed_arrows(&set, n).is_ok() {
                out.push(set);
            }
        }
        out
    }

    /// Inclusion decided the slow, independent way: try every substitution
    /// of the pattern's aces by constants, then look for a plain embedding
    /// with exact value equality.
    pub fn ground_includes(g: &Script, pattern: &Script, ont: &Ontology) -> bool {
        let occ = pattern.ace_occurrences();
        let aces: Vec<u32> = occ.keys().copied().collect();
        let mut cands: Vec<Vec<String>> = Vec::new();
        for ace in &aces {
            let mut vs: BTreeSet<String> = BTreeSet::new();
            for (id, name) in &occ[ace] {
                let kind = pattern.node(*id).kind;
                if let Some(def) = ont.slot(kind, name) {
                    if let Domain::Flat(set) = &def.domain {
                        vs.extend(set.iter().cloned());
                    }
                }
            }
            cands.push(vs.into_iter().collect());
        }
        let g = match g.transitive_closure_arrows() {
            Ok(g) => g,
            Err(_) => return false,
        };
        let p = match pattern.transitive_closure_arrows() {
            Ok(p) => p,
            Err(_) => return false,
        };
        subst_search(&g, &p, &aces, &cands, &mut HashMap::new(), 0)
    }

    fn subst_search(
        g: &Script,
        p: &Script,
        aces: &[u32],
        cands: &[Vec<String>],
        theta: &mut HashMap<u32, String>,
        k: usize,
    ) -> bool {
        if k == aces.len() {
            let grounded = substitute(p, theta);
            return embed(g, &grounded, Script::ROOT, Script::ROOT);
        }
        for v in &cands[k] {
            theta.insert(aces[k], v.clone());
            if subst_search(g, p, aces, cands, theta, k + 1) {
                return true;
            }
        }
        theta.remove(&aces[k]);
        false
    }

    fn substitute(p: &Script, theta: &HashMap<u32, String>) -> Script {
        let mut out = p.clone();
        for id in out.ids().collect::<Vec<_>>() {
            let names: Vec<String> = out.node(id).slots.keys().cloned().collect();
            for name in names {
                if let Some(SlotValue::Ace(a)) = out.node(id).slots.get(&name) {
                    let v = theta[a].clone();
                    out.node_mut(id).slots.insert(name, SlotValue::sym(&v));
                }
            }
        }
        out
    }

    /// Plain embedding of a fully-constant pattern into a ground script:
    /// exact slot equality, injective kind-equal child mapping, pattern
    /// arrows present in the ground closure.
    fn embed(g: &Script, p: &Script, gid: NodeId, pid: NodeId) -> bool {
        let gn = g.node(gid);
        let pn = p.node(pid);
        if gn.kind != pn.kind {
            return false;
        }
        for (name, v) in &pn.slots {
            if gn.slots.get(name) != Some(v) {
                return false;
            }
        }
        embed_children(g, p, gid, pid, 0, &mut vec![None; pn.children.len()])
    }

    fn embed_children(
        g: &Script,
        p: &Script,
        gid: NodeId,
        pid: NodeId,
        k: usize,
        assign: &mut Vec<Option<usize>>,
    ) -> bool {
        let gn = g.node(gid);
        let pn = p.node(pid);
        if k == pn.children.len() {
            for &(i, j) in &pn.arrows {
                let (gi, gj) = match (assign[i], assign[j]) {
                    (Some(x), Some(y)) => (x, y),
                    _ => return false,
                };
                if !gn.arrows.contains(&(gi, gj)) {
                    return false;
                }
            }
            return true;
        }
        for gk in 0..gn.children.len() {
            if assign.iter().any(|a| *a == Some(gk)) {
                continue;
            }
            if !embed(g, p, gn.children[gk], pn.children[k]) {
                continue;
            }
            assign[k] = Some(gk);
            if embed_children(g, p, gid, pid, k + 1, assign) {
                return true;
            }
            assign[k] = None;
        }
        false
    }

    // -- Naive matching-based references for unify and intersect ----------

    /// All tree-consistent injective node matchings between two scripts,
    /// enumerated as flat pair sets.
    pub fn all_matchings(a: &Script, b: &Script) -> Vec<Vec<(NodeId, NodeId)>> {
        let b_nodes: Vec<NodeId> = b.ids().collect();
        let mut out = Vec::new();
        let mut current: Vec<(NodeId, NodeId)> = Vec::new();
        fn rec(
            a: &Script,
            b: &Script,
            b_nodes: &[NodeId],
            k: usize,
            current: &mut Vec<(NodeId, NodeId)>,
            out: &mut Vec<Vec<(NodeId, NodeId)>>,
        ) {
            if k == b_nodes.len() {
                if is_tree_consistent(a, b, current) {
                    out.push(current.clone());
                }
                return;
            }
            let bn = b_nodes[k];
            if bn != Script::ROOT {
                rec(a, b, b_nodes, k + 1, current, out);
            }
            for an in a.ids() {
                if a.node(an).kind != b.node(bn).kind {
                    continue;
                }
                if current.iter().any(|&(x, _)| x == an) {
                    continue;
                }
                if bn == Script::ROOT && an != Script::ROOT {
                    continue;
                }
                current.push((an, bn));
                rec(a, b, b_nodes, k + 1, current, out);
                current.pop();
            }
        }
        rec(a, b, &b_nodes, 0, &mut current, &mut out);
        out
    }

    fn is_tree_consistent(a: &Script, b: &Script, m: &[(NodeId, NodeId)]) -> bool {
        if !m.contains(&(Script::ROOT, Script::ROOT)) {
            return false;
        }
        for &(an, bn) in m {
            if an == Script::ROOT || bn == Script::ROOT {
                if an != bn {
                    return false;
                }
                continue;
            }
            let ap = a.parent_of(an).unwrap();
            let bp = b.parent_of(bn).unwrap();
            if !m.contains(&(ap, bp)) {
                return false;
            }
        }
        true
    }

    /// Naive unification over ace-free inputs: merge per matching, reject
    /// slot conflicts and arrow cycles, return every valid candidate.
    pub fn naive_unify_candidates(a: &Script, b: &Script) -> Vec<Script> {
        let ac = match a.transitive_closure_arrows() {
            Ok(s) => s,
            Err(_) => return Vec::new(),
        };
        let bc = match b.transitive_closure_arrows() {
            Ok(s) => s,
            Err(_) => return Vec::new(),
        };
        let mut out = Vec::new();
        'matchings: for m in all_matchings(&ac, &bc) {
            let amap: HashMap<NodeId, NodeId> = m.iter().map(|&(x, y)| (x, y)).collect();
            let bmap: HashMap<NodeId, NodeId> = m.iter().map(|&(x, y)| (y, x)).collect();
            for &(an, bn) in &m {
                for (name, va) in &ac.node(an).slots {
                    if let Some(vb) = bc.node(bn).slots.get(name) {
                        if va != vb {
                            continue 'matchings;
                        }
                    }
                }
            }
            if let Some(c) = naive_merge(&ac, &bc, &amap, &bmap) {
                out.push(c);
            }
        }
        out
    }

    fn naive_merge(
        a: &Script,
        b: &Script,
        amap: &HashMap<NodeId, NodeId>,
        bmap: &HashMap<NodeId, NodeId>,
    ) -> Option<Script> {
        let mut nodes: Vec<Node> = Vec::new();
        fn copy_tree(s: &Script, id: NodeId, nodes: &mut Vec<Node>) -> NodeId {
            let slot = nodes.len();
            nodes.push(Node::new(s.node(id).kind));
            nodes[slot].slots = s.node(id).slots.clone();
            nodes[slot].arrows = s.node(id).arrows.clone();
            let kids: Vec<NodeId> = s.node(id).children.clone();
            let mut new_kids = Vec::new();
            for c in kids {
                new_kids.push(copy_tree(s, c, nodes));
            }
            nodes[slot].children = new_kids;
            slot
        }
        fn walk(
            a: &Script,
            b: &Script,
            amap: &HashMap<NodeId, NodeId>,
            bmap: &HashMap<NodeId, NodeId>,
            an: NodeId,
            bn: NodeId,
            nodes: &mut Vec<Node>,
        ) -> Option<NodeId> {
            let slot = nodes.len();
            nodes.push(Node::new(a.node(an).kind));
            let mut slots = a.node(an).slots.clone();
            for (name, v) in &b.node(bn).slots {
                slots.insert(name.clone(), v.clone());
            }
            nodes[slot].slots = slots;
            let mut kids = Vec::new();
            let mut a_pos: HashMap<NodeId, usize> = HashMap::new();
            let mut b_pos: HashMap<NodeId, usize> = HashMap::new();
            for &ac_ in &a.node(an).children {
                a_pos.insert(ac_, kids.len());
                if let Some(&bc_) = amap.get(&ac_) {
                    b_pos.insert(bc_, kids.len());
                    let built = walk(a, b, amap, bmap, ac_, bc_, nodes)?;
                    kids.push(built);
                } else {
                    kids.push(copy_tree(a, ac_, nodes));
                }
            }
            for &bc_ in &b.node(bn).children {
                if bmap.contains_key(&bc_) {
                    continue;
                }
                b_pos.insert(bc_, kids.len());
                kids.push(copy_tree(b, bc_, nodes));
            }
            let mut arrows = BTreeSet::new();
            for &(i, j) in &a.node(an).arrows {
                let (ci, cj) = (a.node(an).children[i], a.node(an).children[j]);
                arrows.insert((a_pos[&ci], a_pos[&cj]));
            }
            for &(i, j) in &b.node(bn).arrows {
                let (ci, cj) = (b.node(bn).children[i], b.node(bn).children[j]);
                arrows.insert((b_pos[&ci], b_pos[&cj]));
            }
            if crate::script::closed_arrows(&arrows, kids.len()).is_err() {
                return None;
            }
            nodes[slot].children = kids;
            nodes[slot].arrows = arrows;
            Some(slot)
        }
        walk(a, b, amap, bmap, Script::ROOT, Script::ROOT, &mut nodes)?;
        Some(Script::from_nodes(nodes))
    }

    /// Naive intersection over ace-free inputs: keep exactly-shared slots
    /// and children per matching; conflicting slot pairs either drop or
    /// become shared tokens, enumerated exhaustively.
    pub fn naive_intersect_candidates(a: &Script, b: &Script) -> Vec<Script> {
        let ac = match a.transitive_closure_arrows() {
            Ok(s) => s,
            Err(_) => return Vec::new(),
        };
        let bc = match b.transitive_closure_arrows() {
            Ok(s) => s,
            Err(_) => return Vec::new(),
        };
        let mut out = Vec::new();
        for m in all_matchings(&ac, &bc) {
            let amap: HashMap<NodeId, NodeId> = m.iter().map(|&(x, y)| (x, y)).collect();
            let mut groups: Vec<(String, SlotValue, SlotValue)> = Vec::new();
            for &(an, bn) in &m {
                for (name, va) in &ac.node(an).slots {
                    if let Some(vb) = bc.node(bn).slots.get(name) {
                        if va != vb {
                            let key = (name.clone(), va.clone(), vb.clone());
                            if !groups.contains(&key) {
                                groups.push(key);
                            }
                        }
                    }
                }
            }
            let n_groups = groups.len().min(16);
            for mask in 0u32..(1 << n_groups) {
                let tokens: Vec<bool> = (0..groups.len())
                    .map(|i| i < n_groups && mask & (1 << i) != 0)
                    .collect();
                out.push(naive_project(&ac, &bc, &amap, &groups, &tokens));
            }
        }
        out
    }

    fn naive_project(
        a: &Script,
        b: &Script,
        amap: &HashMap<NodeId, NodeId>,
        groups: &[(String, SlotValue, SlotValue)],
        tokens: &[bool],
    ) -> Script {
        let mut nodes: Vec<Node> = Vec::new();
        #[allow(clippy::too_many_arguments)]
        fn walk(
            a: &Script,
            b: &Script,
            amap: &HashMap<NodeId, NodeId>,
            groups: &[(String, SlotValue, SlotValue)],
            tokens: &[bool],
            an: NodeId,
            bn: NodeId,
            nodes: &mut Vec<Node>,
        ) -> NodeId {
            let slot = nodes.len();
            nodes.push(Node::new(a.node(an).kind));
            for (name, va) in &a.node(an).slots {
                if let Some(vb) = b.node(bn).slots.get(name) {
                    if va == vb {
                        nodes[slot].slots.insert(name.clone(), va.clone());
                    } else {
                        let key = (name.clone(), va.clone(), vb.clone());
                        if let Some(gi) = groups.iter().position(|g| *g == key) {
                            if tokens[gi] {
                                nodes[slot]
                                    .slots
                                    .insert(name.clone(), SlotValue::Ace(gi as u32));
                            }
                        }
                    }
                }
            }
            let mut kids = Vec::new();
            let mut pos: HashMap<NodeId, usize> = HashMap::new();
            for &ac_ in &a.node(an).children {
                if let Some(&bc_) = amap.get(&ac_) {
                    pos.insert(ac_, kids.len());
                    let built = walk(a, b, amap, groups, tokens, ac_, bc_, nodes);
                    kids.push(built);
                }
            }
            let mut arrows = BTreeSet::new();
            for &(i, j) in &a.node(an).arrows {
                let (ci, cj) = (a.node(an).children[i], a.node(an).children[j]);
                if let (Some(&pi), Some(&pj)) = (pos.get(&ci), pos.get(&cj)) {
                    let (bi, bj) = (amap[&ci], amap[&cj]);
                    let has = b.node(bn).arrows.iter().any(|&(x, y)| {
                        b.node(bn).children[x] == bi && b.node(bn).children[y] == bj
                    });
                    if has {
                        arrows.insert((pi, pj));
                    }
                }
            }
            nodes[slot].children = kids;
            nodes[slot].arrows = arrows;
            slot
        }
        walk(a, b, amap, groups, tokens, Script::ROOT, Script::ROOT, &mut nodes);
        let mut s = Script::from_nodes(nodes);
        crate::algebra::prune_single_aces(&mut s);
        s.canonicalize_aces();
        s
    }
}

/// Mutant used by the mutation test: a unification that skips every
/// pairing below the root, so absorption must fail.
pub struct NoPairingOps;

impl AlgebraOps for NoPairingOps {
    fn unify(&self, a: &Script, b: &Script, ont: &Ontology, _budget: &Budget) -> Result<Script> {
        if a.node(Script::ROOT).kind != b.node(Script::ROOT).kind {
            return Err(Error::Disjoint("root node kinds differ".into()));
        }
        let _ = ont;
        let mut nodes: Vec<Node> = a.ids().map(|i| a.node(i).clone()).collect();
        let offset = nodes.len();
        for id in b.ids() {
            let mut n = b.node(id).clone();
            n.children = n.children.iter().map(|c| c + offset).collect();
            for v in n.slots.values_mut() {
                if let SlotValue::Ace(x) = v {
                    *v = SlotValue::Ace(*x + 1_000_000);
                }
            }
            nodes.push(n);
        }
        let b_root_kids: Vec<NodeId> = nodes[offset].children.clone();
        nodes[Script::ROOT].children.extend(b_root_kids);
        nodes[offset].children.clear();
        nodes[offset].arrows.clear();
        let mut s = Script::from_nodes(nodes);
        s.canonicalize_aces();
        Ok(s)
    }

    fn intersect(
        &self,
        a: &Script,
        b: &Script,
        ont: &Ontology,
        budget: &Budget,
    ) -> Result<Script> {
        StdOps.intersect(a, b, ont, budget)
    }

    fn includes(&self, a: &Script, b: &Script, ont: &Ontology, budget: &Budget) -> Result<bool> {
        StdOps.includes(a, b, ont, budget)
    }
}
