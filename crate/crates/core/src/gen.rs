//! Seeded random script generation for the randomized law suites and
//! test harnesses. Everything is driven by a caller-provided RNG so that
//! identical seeds give identical scripts.

use rand::Rng;

use crate::ontology::{Domain, NodeKind, Ontology};
use crate::script::{NodeId, Script, ScriptBuilder};

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub max_nodes: usize,
    /// Chance that a declared slot gets a value on a node.
    pub slot_prob: f64,
    /// Chance that a chosen slot value is an ace rather than a constant.
    pub ace_prob: f64,
    /// Chance of an arrow between a pair of adjacent scene siblings.
    pub arrow_prob: f64,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig { max_nodes: 6, slot_prob: 0.6, ace_prob: 0.15, arrow_prob: 0.3 }
    }
}

pub fn random_script<R: Rng>(ont: &Ontology, cfg: &GenConfig, rng: &mut R) -> Script {
    let mut b = ScriptBuilder::root(ont.root_kind);
    let mut open: Vec<(NodeId, NodeKind)> = vec![(0, ont.root_kind)];
    let mut count = 1;
    let target = rng.gen_range(1..=cfg.max_nodes.max(1));
    while count < target {
        let (parent, pkind) = match pick(&open, rng) {
            Some(&p) => p,
            None => break,
        };
        let kinds: Vec<NodeKind> = ont.allowed_children_of(pkind).collect();
        if kinds.is_empty() {
            open.retain(|&(id, _)| id != parent);
            continue;
        }
        let kind = kinds[rng.gen_range(0..kinds.len())];
        let id = b.node(parent, kind);
        open.push((id, kind));
        count += 1;
    }
    // Slots, drawing from a per-slot ace pool so that shared aces stay
    // within one value domain (a cross-domain ace denotes nothing).
    let mut next_ace: u32 = 0;
    let mut ace_pool: std::collections::BTreeMap<String, Vec<u32>> =
        std::collections::BTreeMap::new();
    for id in 0..count {
        let kind = b.peek_kind(id);
        let defs: Vec<String> = ont.slots_of(kind).map(|(name, _)| name.clone()).collect();
        for name in defs {
            if !rng.gen_bool(cfg.slot_prob) {
                continue;
            }
            let values = domain_values(ont, kind, &name);
            if rng.gen_bool(cfg.ace_prob) || values.is_empty() {
                let pool = ace_pool.entry(name.clone()).or_default();
                let ace = if !pool.is_empty() && rng.gen_bool(0.5) {
                    pool[rng.gen_range(0..pool.len())]
                } else {
                    next_ace += 1;
                    pool.push(next_ace - 1);
                    next_ace - 1
                };
                b.ace(id, &name, ace);
            } else {
                let v = &values[rng.gen_range(0..values.len())];
                b.sym(id, &name, v);
            }
        }
    }
    // Arrows: forward-only between scene siblings keeps the relation acyclic.
    for id in 0..count {
        let kids = b.peek_children(id);
        let scenes: Vec<usize> = kids
            .iter()
            .enumerate()
            .filter(|(_, &c)| b.peek_kind(c) == NodeKind::Scene)
            .map(|(i, _)| i)
            .collect();
        for w in scenes.windows(2) {
            if rng.gen_bool(cfg.arrow_prob) {
                b.arrow_by_index(id, w[0], w[1]);
            }
        }
    }
    b.build()
}

pub fn domain_values(ont: &Ontology, kind: NodeKind, slot: &str) -> Vec<String> {
    match &ont.slot(kind, slot).unwrap().domain {
        Domain::Flat(set) => set.iter().cloned().collect(),
        Domain::Classes(t) => t.names().to_vec(),
    }
}

fn pick<'a, T, R: Rng>(v: &'a [T], rng: &mut R) -> Option<&'a T> {
    if v.is_empty() {
        None
    } else {
        Some(&v[rng.gen_range(0..v.len())])
    }
}

/// A two-value ontology small enough for exhaustive scope enumeration:
/// sr root, scenes with a binary `d` slot, entities with a binary `s` slot.
pub fn tiny_ontology() -> Ontology {
    Ontology::builder()
        .root(NodeKind::Script)
        .child(NodeKind::Script, NodeKind::Scene)
        .child(NodeKind::Scene, NodeKind::Entity)
        .flat_slot(NodeKind::Scene, "d", &["x", "y"])
        .flat_slot(NodeKind::Entity, "s", &["m", "f"])
        .build()
        .unwrap()
}

/// A mid-sized ontology for the randomized law suites: adds class values,
/// identity slots and deeper nesting.
pub fn law_ontology() -> Ontology {
    let mut classes = crate::ontology::ClassTree::new("thing");
    classes.add("thing", "animal").unwrap();
    classes.add("animal", "cat").unwrap();
    classes.add("animal", "dog").unwrap();
    classes.add("thing", "artifact").unwrap();
    Ontology::builder()
        .root(NodeKind::Script)
        .child(NodeKind::Script, NodeKind::Scene)
        .child(NodeKind::Scene, NodeKind::Entity)
        .child(NodeKind::Scene, NodeKind::Scene)
        .child(NodeKind::Entity, NodeKind::Property)
        .flat_slot(NodeKind::Scene, "des", &["event", "entity", "sound"])
        .flat_slot(NodeKind::Scene, "pol", &["yes", "no"])
        .flat_slot(NodeKind::Entity, "sex", &["male", "female"])
        .flat_slot(NodeKind::Entity, "id", &["i1", "i2", "i3", "i4", "i5", "i6", "i7", "i8"])
        .class_slot(NodeKind::Entity, "cls", classes)
        .flat_slot(NodeKind::Property, "p", &["red", "big", "hungry", "broken"])
        // One bit per slot keeps the paper's "one or two slots" play in the
        // approximate identities aligned with the 2-bit tolerance.
        .slot_cost(NodeKind::Scene, "des", 1.0)
        .slot_cost(NodeKind::Entity, "id", 1.0)
        .slot_cost(NodeKind::Entity, "cls", 1.0)
        .slot_cost(NodeKind::Property, "p", 1.0)
        .build()
        .unwrap()
}
