//! M-scripts: scripts with trump nodes and trump links, denoting sets of
//! scripts and acting as partial, reversible, unbounded script functions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::algebra::{self, inclusion_maps, intersect, subtract, unify, Budget};
use crate::error::{Error, Result};
use crate::ontology::{NodeKind, Ontology};
use crate::script::{NodeId, Script, SlotValue};

/// How many inclusion matchings the scope-style tests try before giving up.
const MATCHING_LIMIT: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct MScript {
    pub base: Script,
    pub trumps: BTreeSet<NodeId>,
    /// Directed links (source trump -> target trump).
    pub links: BTreeSet<(NodeId, NodeId)>,
}

impl MScript {
    /// Construct and validate the structural trump constraints: links join
    /// trump nodes, each trump node carries at most one attached link, and
    /// the two ends of a link are not nested.
    pub fn new(
        base: Script,
        trumps: BTreeSet<NodeId>,
        links: BTreeSet<(NodeId, NodeId)>,
    ) -> Result<MScript> {
        let mut attached: BTreeMap<NodeId, usize> = BTreeMap::new();
        for &(s, t) in &links {
            if !trumps.contains(&s) || !trumps.contains(&t) {
                return Err(Error::TrumpConfig("link end is not a trump node".into()));
            }
            if s == t {
                return Err(Error::TrumpConfig("link joins a node to itself".into()));
            }
            if base.is_ancestor(s, t) || base.is_ancestor(t, s) {
                return Err(Error::TrumpConfig("link ends are nested".into()));
            }
            *attached.entry(s).or_default() += 1;
            *attached.entry(t).or_default() += 1;
        }
        if let Some((n, _)) = attached.iter().find(|(_, &c)| c > 1) {
            return Err(Error::TrumpConfig(format!(
                "trump node {n} carries more than one attached link"
            )));
        }
        for &t in &trumps {
            if t >= base.len() {
                return Err(Error::TrumpConfig("trump id out of range".into()));
            }
        }
        Ok(MScript { base, trumps, links })
    }

    /// A plain script as a degenerate m-script (no trumps).
    pub fn plain(base: Script) -> MScript {
        MScript { base, trumps: BTreeSet::new(), links: BTreeSet::new() }
    }

    /// A script with a trump on its top node: scope = every extension of it.
    pub fn top_trumped(base: Script) -> MScript {
        let mut trumps = BTreeSet::new();
        trumps.insert(Script::ROOT);
        MScript { base, trumps, links: BTreeSet::new() }
    }

    /// The plain script M_s: trump structure stripped.
    pub fn strip(&self) -> Script {
        self.base.clone()
    }

    pub fn validate(&self, ont: &Ontology) -> Result<()> {
        self.base.validate(ont)
    }

    /// Ordering surrogate for m-script information: the base information
    /// plus one bit per link, minus (1 + depth below the trump) bits per
    /// trump node. Lower and fewer trumps, and more links, mean more
    /// information.
    pub fn m_info(&self, ont: &Ontology) -> Result<f64> {
        let base = self.base.info_content(ont)?.as_f64();
        let depth = node_depths(&self.base);
        let max_depth = depth.iter().copied().max().unwrap_or(0) as f64;
        let mut v = base + self.links.len() as f64;
        for &t in &self.trumps {
            v -= 1.0 + (max_depth - depth[t] as f64);
        }
        Ok(v)
    }

    /// The truncated subtrees: one top piece, plus one per trump node.
    /// Every slot of the base appears in exactly one piece.
    pub fn truncated_subtrees(&self, ont: &Ontology) -> Vec<(PieceKey, Script)> {
        let mut out = Vec::new();
        out.push((PieceKey::Top, piece(&self.base, &self.trumps, ont, None)));
        for id in crate::text::trump_order(&self.base, &self.trumps) {
            out.push((PieceKey::Trump(id), piece(&self.base, &self.trumps, ont, Some(id))));
        }
        out
    }

    /// Well-formed: every link i -> j satisfies piece(j) includes piece(i).
    pub fn is_well_formed(&self, ont: &Ontology, budget: &Budget) -> Result<bool> {
        for &(s, t) in &self.links {
            let ps = piece(&self.base, &self.trumps, ont, Some(s));
            let pt = piece(&self.base, &self.trumps, ont, Some(t));
            if ps.node(Script::ROOT).kind != pt.node(Script::ROOT).kind {
                return Ok(false);
            }
            if !algebra::includes(&pt, &ps, ont, budget)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKey {
    Top,
    Trump(NodeId),
}

fn node_depths(s: &Script) -> Vec<usize> {
    let mut depth = vec![0usize; s.len()];
    let mut stack = vec![Script::ROOT];
    while let Some(id) = stack.pop() {
        for &c in &s.node(id).children {
            depth[c] = depth[id] + 1;
            stack.push(c);
        }
    }
    depth
}

/// Extract a truncated subtree. `root = None` is the top piece.
///
/// The piece rooted at a trump node keeps only that node's "down" slots;
/// a piece is cut at any lower trump node, keeping only its "up" slots and
/// none of its children.
pub fn piece(
    base: &Script,
    trumps: &BTreeSet<NodeId>,
    ont: &Ontology,
    root: Option<NodeId>,
) -> Script {
    let start = root.unwrap_or(Script::ROOT);
    let mut nodes: Vec<crate::script::Node> = Vec::new();

    fn up_only(ont: &Ontology, kind: NodeKind, name: &str) -> bool {
        ont.slot(kind, name).map_or(false, |d| d.up)
    }

    #[allow(clippy::too_many_arguments)]
    fn copy(
        base: &Script,
        trumps: &BTreeSet<NodeId>,
        ont: &Ontology,
        id: NodeId,
        at_piece_root: bool,
        piece_is_trump: bool,
        nodes: &mut Vec<crate::script::Node>,
    ) -> NodeId {
        let n = base.node(id);
        let slot = nodes.len();
        nodes.push(crate::script::Node::new(n.kind));
        let boundary = trumps.contains(&id) && !(at_piece_root && piece_is_trump);
        if boundary {
            // Truncation frontier: keep up slots only, drop children.
            for (name, v) in &n.slots {
                if up_only(ont, n.kind, name) {
                    nodes[slot].slots.insert(name.clone(), v.clone());
                }
            }
            return slot;
        }
        for (name, v) in &n.slots {
            let keep = if at_piece_root && piece_is_trump {
                !up_only(ont, n.kind, name)
            } else {
                true
            };
            if keep {
                nodes[slot].slots.insert(name.clone(), v.clone());
            }
        }
        let kids: Vec<NodeId> = n.children.clone();
        let mut new_kids = Vec::with_capacity(kids.len());
        for c in kids {
            new_kids.push(copy(base, trumps, ont, c, false, false, nodes));
        }
        nodes[slot].arrows = n.arrows.clone();
        nodes[slot].children = new_kids;
        slot
    }

    copy(base, trumps, ont, start, true, root.is_some(), &mut nodes);
    let mut s = Script::from_nodes(nodes);
    s.canonicalize_aces();
    s
}

/// Pieces of a plain script `s` relative to trump positions mapped from an
/// m-script, used by the scope and m-inclusion tests.
fn mapped_piece(
    s: &Script,
    mapped_trumps: &BTreeSet<NodeId>,
    ont: &Ontology,
    root: Option<NodeId>,
) -> Script {
    piece(s, mapped_trumps, ont, root)
}

fn equivalent(a: &Script, b: &Script, ont: &Ontology, budget: &Budget) -> Result<bool> {
    if a.node(Script::ROOT).kind != b.node(Script::ROOT).kind {
        return Ok(false);
    }
    Ok(algebra::includes(a, b, ont, budget)? && algebra::includes(b, a, ont, budget)?)
}

// ---------------------------------------------------------------------------
// Scope test
// ---------------------------------------------------------------------------

/// Is the plain script `s` within the scope of `m`?
pub fn in_scope(s: &Script, m: &MScript, ont: &Ontology, budget: &Budget) -> Result<bool> {
    let matchings = inclusion_maps(s, &m.base, ont, budget, MATCHING_LIMIT)?;
    for map in matchings {
        if scope_holds(s, m, &map, ont, budget)? {
            return Ok(true);
        }
    }
    Ok(false)
}

fn scope_holds(
    s: &Script,
    m: &MScript,
    map: &HashMap<NodeId, NodeId>, // m-node -> s-node
    ont: &Ontology,
    budget: &Budget,
) -> Result<bool> {
    let mapped: BTreeSet<NodeId> = m.trumps.iter().map(|t| map[t]).collect();
    // Above the top trumps, S and M are equal.
    let s_top = mapped_piece(s, &mapped, ont, None);
    let m_top = piece(&m.base, &m.trumps, ont, None);
    if !equivalent(&s_top, &m_top, ont, budget)? {
        return Ok(false);
    }
    // Each trump link demands S[j] = S[i] Us M[j].
    for &(i, j) in &m.links {
        let si = mapped_piece(s, &mapped, ont, Some(map[&i]));
        let sj = mapped_piece(s, &mapped, ont, Some(map[&j]));
        let mj = piece(&m.base, &m.trumps, ont, Some(j));
        if si.node(Script::ROOT).kind != sj.node(Script::ROOT).kind {
            return Ok(false);
        }
        match unify(&si, &mj, ont, budget) {
            Ok(u) => {
                if !equivalent(&u.script, &sj, ont, budget)? {
                    return Ok(false);
                }
            }
            Err(e) if e.is_disjoint() => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// M-inclusion
// ---------------------------------------------------------------------------

/// Does every script in the scope of `n` lie in the scope of `m`?
pub fn m_includes(n: &MScript, m: &MScript, ont: &Ontology, budget: &Budget) -> Result<bool> {
    let matchings = inclusion_maps(&n.base, &m.base, ont, budget, MATCHING_LIMIT)?;
    'outer: for map in matchings {
        // Steps 2-3: n's base must sit inside m's scope under this labelling.
        if !scope_holds(&n.base, m, &map, ont, budget)? {
            continue;
        }
        let m_trump_images: BTreeSet<NodeId> = m.trumps.iter().map(|t| map[t]).collect();
        // Step 4: every trump of n lies on or below some trump image of m.
        for &t in &n.trumps {
            let dominated =
                m_trump_images.iter().any(|&img| n.base.is_ancestor(img, t));
            if !dominated {
                continue 'outer;
            }
        }
        // Step 5: each link of m appears in n, unless n has no trumps on or
        // above either end.
        for &(i, j) in &m.links {
            let (ni, nj) = (map[&i], map[&j]);
            if n.links.contains(&(ni, nj)) {
                continue;
            }
            let touched = n.trumps.iter().any(|&t| {
                n.base.is_ancestor(t, ni) || n.base.is_ancestor(t, nj)
            });
            if touched {
                continue 'outer;
            }
        }
        return Ok(true);
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// M-unification
// ---------------------------------------------------------------------------

pub struct MUnifyResult {
    pub m: MScript,
    pub from_a: HashMap<NodeId, NodeId>,
    pub from_b: HashMap<NodeId, NodeId>,
}

/// The smallest m-script whose scope lies within both inputs' scopes.
pub fn m_unify(a: &MScript, b: &MScript, ont: &Ontology, budget: &Budget) -> Result<MUnifyResult> {
    let base = unify(&a.base, &b.base, ont, budget)?;
    let mut p = base.script;
    let mut a2p = base.from_a;
    let mut b2p = base.from_b;

    // Iterate forward and backward rounding over all links until stable.
    let links: Vec<(bool, NodeId, NodeId)> = {
        let mut v: Vec<(bool, NodeId, NodeId)> = a
            .links
            .iter()
            .map(|&(s, t)| (true, s, t))
            .chain(b.links.iter().map(|&(s, t)| (false, s, t)))
            .collect();
        // Deterministic order: by current source position, depth-first.
        let order = p.dfs();
        let posn = |side_a: bool, id: NodeId, a2p: &HashMap<_, _>, b2p: &HashMap<_, _>| {
            let pid = if side_a { a2p[&id] } else { b2p[&id] };
            order.iter().position(|&x| x == pid).unwrap_or(usize::MAX)
        };
        v.sort_by_key(|&(sa, s, _)| posn(sa, s, &a2p, &b2p));
        v
    };

    if !links.is_empty() {
        let max_pass = 2 * links.len() + 2;
        let mut pass = 0;
        loop {
            pass += 1;
            if pass > max_pass {
                return Err(Error::Disjoint(
                    "trump link equations failed to converge".into(),
                ));
            }
            let mut changed = false;
            for &(side_a, li, lj) in &links {
                let (src, own_trumps) =
                    if side_a { (a, &a.trumps) } else { (b, &b.trumps) };
                let map = if side_a { &a2p } else { &b2p };
                let (pi, pj) = (map[&li], map[&lj]);
                // Rounding acts on truncated pieces: content below the
                // input's other trump nodes stays out of the equation.
                let bounds: BTreeSet<NodeId> =
                    own_trumps.iter().filter_map(|t| map.get(t)).copied().collect();
                let mj = piece(&src.base, own_trumps, ont, Some(lj));
                // Forward rounding: P[j] <- P[j] Us (P[i] Us M[j]).
                let cur_i = subtree_piece(&p, pi, ont, &bounds);
                let cur_j = subtree_piece(&p, pj, ont, &bounds);
                let fwd = unify(&cur_i.content, &mj, ont, budget)?;
                let fwd2 = unify(&cur_j.content, &fwd.script, ont, budget)?;
                if !equivalent(&fwd2.script, &cur_j.content, ont, budget)? {
                    // Both pieces' aces are p's aces; track what became of
                    // them so bindings reach their outside occurrences.
                    let mut fate = ace_fate(&cur_j.content, &fwd2.from_a, &fwd2.script);
                    let via: HashMap<NodeId, NodeId> = fwd
                        .from_a
                        .iter()
                        .filter_map(|(ci, fi)| {
                            fwd2.from_b.get(fi).map(|&f2| (*ci, f2))
                        })
                        .collect();
                    for (k, v) in ace_fate(&cur_i.content, &via, &fwd2.script) {
                        fate.entry(k).or_insert(v);
                    }
                    graft(&mut p, &mut a2p, &mut b2p, pj, &cur_j, fwd2, fate)?;
                    changed = true;
                }
                // Backward rounding: P[i] <- P[i] Us (P[j] - M[j]).
                let map = if side_a { &a2p } else { &b2p };
                let (pi, pj) = (map[&li], map[&lj]);
                let bounds: BTreeSet<NodeId> =
                    own_trumps.iter().filter_map(|t| map.get(t)).copied().collect();
                let cur_i = subtree_piece(&p, pi, ont, &bounds);
                let cur_j = subtree_piece(&p, pj, ont, &bounds);
                let delta = subtract(&cur_j.content, &mj, ont, budget)?;
                let bwd = unify(&cur_i.content, &delta, ont, budget)?;
                if !equivalent(&bwd.script, &cur_i.content, ont, budget)? {
                    let fate = ace_fate(&cur_i.content, &bwd.from_a, &bwd.script);
                    graft(&mut p, &mut a2p, &mut b2p, pi, &cur_i, bwd, fate)?;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    // Trump placement (steps 4-5).
    let a_imgs: BTreeSet<NodeId> = a.trumps.iter().map(|t| a2p[t]).collect();
    let b_imgs: BTreeSet<NodeId> = b.trumps.iter().map(|t| b2p[t]).collect();
    let p2a: HashMap<NodeId, NodeId> = a2p.iter().map(|(&k, &v)| (v, k)).collect();
    let p2b: HashMap<NodeId, NodeId> = b2p.iter().map(|(&k, &v)| (v, k)).collect();
    let mut trumps = BTreeSet::new();
    for id in p.ids() {
        let ta = p2a.get(&id).map_or(false, |an| a.trumps.contains(an));
        let tb = p2b.get(&id).map_or(false, |bn| b.trumps.contains(bn));
        let under_a = a_imgs.iter().any(|&img| p.is_ancestor(img, id));
        let under_b = b_imgs.iter().any(|&img| p.is_ancestor(img, id));
        if (ta && tb) || (ta && under_b) || (tb && under_a) {
            trumps.insert(id);
        }
    }
    // All links of both inputs appear; their ends keep trumps.
    let mut links_p = BTreeSet::new();
    for &(s, t) in &a.links {
        links_p.insert((a2p[&s], a2p[&t]));
    }
    for &(s, t) in &b.links {
        links_p.insert((b2p[&s], b2p[&t]));
    }
    for &(s, t) in &links_p {
        trumps.insert(s);
        trumps.insert(t);
    }
    let m = MScript::new(p, trumps, links_p)?;
    Ok(MUnifyResult { m, from_a: a2p, from_b: b2p })
}

/// A truncated subtree of `p` at `at`: the piece content (up slots of the
/// root removed, boundary trumps reduced to up-slot stubs) plus everything
/// withheld for re-attachment after rounding.
struct SubtreeAt {
    content: Script,
    up_slots: BTreeMap<String, SlotValue>,
    /// old p-id (kept in content, including boundary stubs) -> content id
    ids: HashMap<NodeId, NodeId>,
    withheld: Vec<Withheld>,
}

/// The parts cut away at one boundary trump inside the piece.
struct Withheld {
    /// content id of the boundary stub
    stub: NodeId,
    down_slots: BTreeMap<String, SlotValue>,
    arrows: std::collections::BTreeSet<(usize, usize)>,
    /// child subtrees in order, with their p-id -> local-id maps
    children: Vec<(Script, HashMap<NodeId, NodeId>)>,
}

fn subtree_piece(
    p: &Script,
    at: NodeId,
    ont: &Ontology,
    boundaries: &std::collections::BTreeSet<NodeId>,
) -> SubtreeAt {
    let mut nodes: Vec<crate::script::Node> = Vec::new();
    let mut ids: HashMap<NodeId, NodeId> = HashMap::new();
    let mut withheld: Vec<Withheld> = Vec::new();

    fn copy(
        p: &Script,
        id: NodeId,
        at: NodeId,
        ont: &Ontology,
        boundaries: &std::collections::BTreeSet<NodeId>,
        nodes: &mut Vec<crate::script::Node>,
        ids: &mut HashMap<NodeId, NodeId>,
        withheld: &mut Vec<Withheld>,
    ) -> NodeId {
        let n = p.node(id);
        let slot = nodes.len();
        nodes.push(crate::script::Node::new(n.kind));
        ids.insert(id, slot);
        if id != at && boundaries.contains(&id) {
            // Boundary trump: keep up slots on the stub, withhold the rest.
            let mut down = BTreeMap::new();
            for (name, v) in &n.slots {
                if ont.slot(n.kind, name).map_or(false, |d| d.up) {
                    nodes[slot].slots.insert(name.clone(), v.clone());
                } else {
                    down.insert(name.clone(), v.clone());
                }
            }
            let children: Vec<(Script, HashMap<NodeId, NodeId>)> =
                n.children.iter().map(|&c| p.extract(c)).collect();
            withheld.push(Withheld {
                stub: slot,
                down_slots: down,
                arrows: n.arrows.clone(),
                children,
            });
            return slot;
        }
        let keep_up = id != at;
        for (name, v) in &n.slots {
            if keep_up || !ont.slot(n.kind, name).map_or(false, |d| d.up) {
                nodes[slot].slots.insert(name.clone(), v.clone());
            }
        }
        let kids: Vec<NodeId> = n.children.clone();
        let mut new_kids = Vec::with_capacity(kids.len());
        for c in kids {
            new_kids.push(copy(p, c, at, ont, boundaries, nodes, ids, withheld));
        }
        nodes[slot].arrows = n.arrows.clone();
        nodes[slot].children = new_kids;
        slot
    }

    copy(p, at, at, ont, boundaries, &mut nodes, &mut ids, &mut withheld);
    let kind = p.node(at).kind;
    let mut up_slots = BTreeMap::new();
    for (name, v) in &p.node(at).slots {
        if ont.slot(kind, name).map_or(false, |d| d.up) {
            up_slots.insert(name.clone(), v.clone());
        }
    }
    SubtreeAt { content: Script::from_nodes(nodes), up_slots, ids, withheld }
}

/// What each ace of `content` turned into inside a unify result, keyed by
/// the content's (= the host script's) ace ids.
fn ace_fate(
    content: &Script,
    into: &HashMap<NodeId, NodeId>,
    result: &Script,
) -> HashMap<u32, SlotValue> {
    let mut fate = HashMap::new();
    for cid in content.ids() {
        let nid = match into.get(&cid) {
            Some(&n) => n,
            None => continue,
        };
        for (name, v) in &content.node(cid).slots {
            if let SlotValue::Ace(alpha) = v {
                if let Some(img) = result.node(nid).slots.get(name) {
                    fate.entry(*alpha).or_insert_with(|| img.clone());
                }
            }
        }
    }
    fate
}

/// Replace the subtree of `p` at `at` with `new` (a unify result over the
/// current piece content), restoring withheld up slots, recomposing the
/// provenance maps, and propagating discovered ace bindings to the rest of
/// the script. A link-end piece may share aces with the outside (the
/// "hidden" co-reference of control relations); a constant bound inside
/// the piece must show up at every outside occurrence too.
fn graft(
    p: &mut Script,
    a2p: &mut HashMap<NodeId, NodeId>,
    b2p: &mut HashMap<NodeId, NodeId>,
    at: NodeId,
    old: &SubtreeAt,
    new: algebra::OpResult,
    fate: HashMap<u32, SlotValue>,
) -> Result<()> {
    // Build one shared ace namespace for the grafted script.
    let mut next: u32 = 0;
    let mut fresh_in: HashMap<u32, u32> = HashMap::new();
    let mut fresh_out: HashMap<u32, u32> = HashMap::new();
    let mut sub = new.script;
    for id in sub.ids().collect::<Vec<_>>() {
        let names: Vec<String> = sub.node(id).slots.keys().cloned().collect();
        for name in names {
            if let Some(SlotValue::Ace(beta)) = sub.node(id).slots.get(&name) {
                let beta = *beta;
                let fid = *fresh_in.entry(beta).or_insert_with(|| {
                    next += 1;
                    next - 1
                });
                sub.node_mut(id).slots.insert(name, SlotValue::Ace(fid));
            }
        }
    }
    // Outside occurrences of a piece ace follow its fate; everything else
    // gets a fresh distinct label.
    let mut outside: HashMap<u32, SlotValue> = HashMap::new();
    let resolve_out = |alpha: u32,
                           fate: &HashMap<u32, SlotValue>,
                           fresh_in: &HashMap<u32, u32>,
                           fresh_out: &mut HashMap<u32, u32>,
                           next: &mut u32|
     -> SlotValue {
        match fate.get(&alpha) {
            Some(SlotValue::Sym(c)) => SlotValue::Sym(c.clone()),
            Some(SlotValue::Ace(beta)) => match fresh_in.get(beta) {
                Some(&fid) => SlotValue::Ace(fid),
                None => SlotValue::Ace(*beta),
            },
            None => {
                let fid = *fresh_out.entry(alpha).or_insert_with(|| {
                    *next += 1;
                    *next - 1
                });
                SlotValue::Ace(fid)
            }
        }
    };
    for alpha in p.ace_occurrences().keys().copied().collect::<Vec<_>>() {
        let v = resolve_out(alpha, &fate, &fresh_in, &mut fresh_out, &mut next);
        outside.insert(alpha, v);
    }
    let mut p_rel = p.clone();
    p_rel.substitute_aces(&outside);
    // Withheld up slots of the piece root re-attach under the same rules.
    for (name, v) in &old.up_slots {
        let v = match v {
            SlotValue::Ace(alpha) => {
                resolve_out(*alpha, &fate, &fresh_in, &mut fresh_out, &mut next)
            }
            other => other.clone(),
        };
        sub.node_mut(Script::ROOT).slots.insert(name.clone(), v);
    }
    // Re-attach everything truncated away at boundary trumps. The
    // withheld parts count as outside content for ace purposes.
    let mut attach_map: HashMap<NodeId, NodeId> = HashMap::new();
    for w in &old.withheld {
        let img = match new.from_a.get(&w.stub) {
            Some(&i) => i,
            None => continue,
        };
        for (name, v) in &w.down_slots {
            let v = match v {
                SlotValue::Ace(alpha) => {
                    resolve_out(*alpha, &fate, &fresh_in, &mut fresh_out, &mut next)
                }
                other => other.clone(),
            };
            sub.node_mut(img).slots.insert(name.clone(), v);
        }
        for (child, pmap) in &w.children {
            let offset = sub.len();
            for lid in child.ids().collect::<Vec<_>>() {
                let mut n = child.node(lid).clone();
                n.children = n.children.iter().map(|c| c + offset).collect();
                for v in n.slots.values_mut() {
                    if let SlotValue::Ace(alpha) = v {
                        *v = resolve_out(*alpha, &fate, &fresh_in, &mut fresh_out, &mut next);
                    }
                }
                sub.push_node(n);
            }
            sub.node_mut(img).children.push(offset);
            for (pid, lid) in pmap {
                attach_map.insert(*pid, lid + offset);
            }
        }
        sub.node_mut(img).arrows = w.arrows.clone();
    }

    let (next_p, outer_map, sub_map) = p_rel.replace_subtree_keep_aces(at, &sub);
    let recompose = |m: &mut HashMap<NodeId, NodeId>| {
        let old_map = std::mem::take(m);
        for (src, pid) in old_map {
            if let Some(&n) = outer_map.get(&pid) {
                m.insert(src, n);
            } else if let Some(&cid) = old.ids.get(&pid) {
                // Inside the replaced piece: content id -> unify(a) -> new.
                if let Some(&uid) = new.from_a.get(&cid) {
                    if let Some(&n) = sub_map.get(&uid) {
                        m.insert(src, n);
                    }
                }
            } else if let Some(&sid) = attach_map.get(&pid) {
                // Inside a withheld part, re-attached into the new subtree.
                if let Some(&n) = sub_map.get(&sid) {
                    m.insert(src, n);
                }
            }
        }
    };
    recompose(a2p);
    recompose(b2p);
    *p = next_p;
    Ok(())
}

// ---------------------------------------------------------------------------
// M-intersection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntersectMode {
    /// Links kept only where both inputs satisfy the exact link equation.
    Strict,
    /// Learning mode: a link is discovered from the weaker inclusion
    /// relation between its ends, tolerating additive observation noise.
    Broad,
}

pub struct MIntersectResult {
    pub m: MScript,
    pub from_a: HashMap<NodeId, NodeId>,
    pub from_b: HashMap<NodeId, NodeId>,
}

/// The largest m-script whose scope contains both inputs' scopes. Always
/// succeeds for inputs sharing a root kind.
pub fn m_intersect(
    a: &MScript,
    b: &MScript,
    mode: IntersectMode,
    ont: &Ontology,
    budget: &Budget,
) -> Result<MIntersectResult> {
    let base = intersect(&a.base, &b.base, ont, budget)?;
    let q = base.script;
    let a2q = base.from_a;
    let b2q = base.from_b;
    let q2a: HashMap<NodeId, NodeId> = a2q.iter().map(|(&k, &v)| (v, k)).collect();
    let q2b: HashMap<NodeId, NodeId> = b2q.iter().map(|(&k, &v)| (v, k)).collect();

    // Step 2: trump wherever the inputs differ at a node, or either input
    // already has a trump there.
    let mut trumps = BTreeSet::new();
    for id in q.ids() {
        let an = q2a[&id];
        let bn = q2b[&id];
        let differs = node_differs(&q, id, &a.base, an, &a2q)
            || node_differs(&q, id, &b.base, bn, &b2q);
        let trumped = a.trumps.contains(&an) || b.trumps.contains(&bn);
        if differs || trumped {
            trumps.insert(id);
        }
    }

    // Step 3 / 3': discover links between trump pairs.
    let order = crate::text::trump_order(&q, &trumps);
    let mut links: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut linked: BTreeSet<NodeId> = BTreeSet::new();
    for &i in &order {
        for &j in &order {
            if i == j || linked.contains(&i) || linked.contains(&j) {
                continue;
            }
            if q.is_ancestor(i, j) || q.is_ancestor(j, i) {
                continue;
            }
            if q.node(i).kind != q.node(j).kind {
                continue;
            }
            // Guard: an input with its own trump at either end must carry
            // this very link.
            let (ai, aj) = (q2a[&i], q2a[&j]);
            let (bi, bj) = (q2b[&i], q2b[&j]);
            if (a.trumps.contains(&ai) || a.trumps.contains(&aj))
                && !a.links.contains(&(ai, aj))
            {
                continue;
            }
            if (b.trumps.contains(&bi) || b.trumps.contains(&bj))
                && !b.links.contains(&(bi, bj))
            {
                continue;
            }
            let a_tr: BTreeSet<NodeId> = trumps.iter().map(|t| q2a[t]).collect();
            let b_tr: BTreeSet<NodeId> = trumps.iter().map(|t| q2b[t]).collect();
            let pai = piece(&a.base, &a_tr, ont, Some(ai));
            let paj = piece(&a.base, &a_tr, ont, Some(aj));
            let pbi = piece(&b.base, &b_tr, ont, Some(bi));
            let pbj = piece(&b.base, &b_tr, ont, Some(bj));
            let ok = match mode {
                IntersectMode::Broad => {
                    algebra::includes(&paj, &pai, ont, budget)?
                        && algebra::includes(&pbj, &pbi, ont, budget)?
                }
                IntersectMode::Strict => {
                    let q_tr: BTreeSet<NodeId> = trumps.clone();
                    let qj = piece(&q, &q_tr, ont, Some(j));
                    link_equation_holds(&paj, &pai, &qj, ont, budget)?
                        && link_equation_holds(&pbj, &pbi, &qj, ont, budget)?
                }
            };
            if ok {
                links.insert((i, j));
                linked.insert(i);
                linked.insert(j);
            }
        }
    }

    let m = MScript::new(q, trumps, links)?;
    Ok(MIntersectResult { m, from_a: a2q, from_b: b2q })
}

/// M[j] = M[i] Us Q[j], up to ace renaming.
fn link_equation_holds(
    mj: &Script,
    mi: &Script,
    qj: &Script,
    ont: &Ontology,
    budget: &Budget,
) -> Result<bool> {
    if mi.node(Script::ROOT).kind != mj.node(Script::ROOT).kind {
        return Ok(false);
    }
    match unify(mi, qj, ont, budget) {
        Ok(u) => equivalent(&u.script, mj, ont, budget),
        Err(e) if e.is_disjoint() => Ok(false),
        Err(e) => Err(e),
    }
}

/// Does the intersection node differ from the input node it came from, in
/// its own slots, its immediate children, or its arrows?
fn node_differs(
    q: &Script,
    qid: NodeId,
    input: &Script,
    iid: NodeId,
    i2q: &HashMap<NodeId, NodeId>,
) -> bool {
    let qn = q.node(qid);
    let in_ = input.node(iid);
    if qn.slots.len() != in_.slots.len() {
        return true;
    }
    for (name, qv) in &qn.slots {
        match in_.slots.get(name) {
            None => return true,
            Some(iv) => {
                let same = match (qv, iv) {
                    (SlotValue::Sym(x), SlotValue::Sym(y)) => x == y,
                    (SlotValue::Ace(_), SlotValue::Ace(_)) => true,
                    _ => false,
                };
                if !same {
                    return true;
                }
            }
        }
    }
    // Any unpaired input child is a difference.
    for &c in &in_.children {
        if !i2q.contains_key(&c) {
            return true;
        }
    }
    if qn.children.len() != in_.children.len() {
        return true;
    }
    // Arrows: compare reductions over the paired children.
    let q_arrows = qn.arrows.len();
    let i_arrows = in_.arrows.len();
    q_arrows != i_arrows
}

// ---------------------------------------------------------------------------
// Directed function application
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

pub struct ApplyOutcome {
    /// The opposite branch: the result of the function application, wrapped
    /// under a fresh root of the base's root kind.
    pub branch: Script,
    /// The full m-unified structure (the SMS fragment).
    pub sms: MScript,
    /// m-script node -> sms node.
    pub from_m: HashMap<NodeId, NodeId>,
    /// argument-script node -> sms node.
    pub from_arg: HashMap<NodeId, NodeId>,
}

/// Which root-child scene is the right (meaning) branch of a word-shaped
/// m-script: the unique non-sound scene that no link leaves.
pub fn right_branch_scene(m: &MScript, _ont: &Ontology) -> Result<NodeId> {
    let root = m.base.node(Script::ROOT);
    let mut candidates = Vec::new();
    for &c in &root.children {
        let n = m.base.node(c);
        if n.kind != NodeKind::Scene {
            continue;
        }
        let is_sound = matches!(
            n.slots.get(crate::ontology::DESIGNATOR_SLOT),
            Some(SlotValue::Sym(d)) if d == crate::ontology::DES_SOUND
        );
        if is_sound {
            continue;
        }
        let scene_nodes = m.base.subtree_ids(c);
        let sends = m.links.iter().any(|(s, _)| scene_nodes.contains(s));
        let receives = m.links.iter().any(|(_, t)| scene_nodes.contains(t));
        if sends && !receives {
            continue;
        }
        candidates.push((c, receives));
    }
    match candidates.len() {
        0 => Err(Error::Invalid("no right-branch meaning scene".into())),
        1 => Ok(candidates[0].0),
        _ => {
            // Prefer the one links point into.
            let with_links: Vec<NodeId> =
                candidates.iter().filter(|(_, r)| *r).map(|(c, _)| *c).collect();
            if with_links.len() == 1 {
                Ok(with_links[0])
            } else {
                Err(Error::Invalid("ambiguous right-branch scene".into()))
            }
        }
    }
}

/// Apply a word-shaped m-script as a script function: left-to-right for
/// understanding, right-to-left for generation. The argument script is
/// wrapped with a top trump and m-unified with `m`; the opposite branch of
/// the result is returned.
pub fn apply(
    m: &MScript,
    s: &Script,
    dir: Direction,
    ont: &Ontology,
    budget: &Budget,
) -> Result<ApplyOutcome> {
    let right = right_branch_scene(m, ont)?;
    // Precondition: the argument must include the relevant branch pattern.
    let pattern = branch_pattern(m, right, dir, ont);
    if !algebra::includes(s, &pattern, ont, budget)? {
        return Err(Error::Disjoint("argument does not match the branch pattern".into()));
    }
    let wrapped = MScript::top_trumped(s.clone());
    let res = m_unify(m, &wrapped, ont, budget)?;
    let p = &res.m;
    let right_p = res.from_a[&right];
    let branch = match dir {
        Direction::LeftToRight => wrap_scenes(&p.base, &[right_p], ont),
        Direction::RightToLeft => {
            let root_kids: Vec<NodeId> = p
                .base
                .node(Script::ROOT)
                .children
                .iter()
                .copied()
                .filter(|&c| c != right_p)
                .collect();
            wrap_scenes(&p.base, &root_kids, ont)
        }
    };
    Ok(ApplyOutcome { branch, sms: res.m, from_m: res.from_a, from_arg: res.from_b })
}

/// The branch pattern checked before application: the base minus the
/// opposite branch, trump structure ignored.
fn branch_pattern(m: &MScript, right: NodeId, dir: Direction, ont: &Ontology) -> Script {
    let keep: Vec<NodeId> = match dir {
        Direction::LeftToRight => m
            .base
            .node(Script::ROOT)
            .children
            .iter()
            .copied()
            .filter(|&c| c != right)
            .collect(),
        Direction::RightToLeft => vec![right],
    };
    wrap_scenes(&m.base, &keep, ont)
}

/// Wrap a set of scenes of `base` (with the arrows among them) under a new
/// root node of the ontology's root kind.
pub fn wrap_scenes(base: &Script, scenes: &[NodeId], ont: &Ontology) -> Script {
    let mut nodes = vec![crate::script::Node::new(ont.root_kind)];
    let mut positions: HashMap<NodeId, usize> = HashMap::new();
    for (pos, &sc) in scenes.iter().enumerate() {
        positions.insert(sc, pos);
        let (sub, _) = base.extract(sc);
        let offset = nodes.len();
        for id in sub.ids() {
            let mut n = sub.node(id).clone();
            n.children = n.children.iter().map(|c| c + offset).collect();
            nodes.push(n);
        }
        nodes[Script::ROOT].children.push(offset);
    }
    // Arrows among the chosen scenes, inherited from their shared parent.
    let mut arrows = BTreeSet::new();
    if let Some(parent) = scenes.first().and_then(|&s| base.parent_of(s)) {
        let pn = base.node(parent);
        for &(i, j) in &pn.arrows {
            let (ci, cj) = (pn.children[i], pn.children[j]);
            if let (Some(&pi), Some(&pj)) = (positions.get(&ci), positions.get(&cj)) {
                arrows.insert((pi, pj));
            }
        }
    }
    let mut s = Script::from_nodes(nodes);
    s.node_mut(Script::ROOT).arrows = arrows;
    s.canonicalize_aces();
    s
}
