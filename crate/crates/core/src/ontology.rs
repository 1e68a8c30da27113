use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::bits::Bits;
use crate::error::{Error, Result};

/// The five node kinds: holder, script, scene, entity, property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Holder,
    Script,
    Scene,
    Entity,
    Property,
}

pub const ALL_KINDS: [NodeKind; 5] = [
    NodeKind::Holder,
    NodeKind::Script,
    NodeKind::Scene,
    NodeKind::Entity,
    NodeKind::Property,
];

impl NodeKind {
    pub fn tag(self) -> &'static str {
        match self {
            NodeKind::Holder => "ho",
            NodeKind::Script => "sr",
            NodeKind::Scene => "se",
            NodeKind::Entity => "en",
            NodeKind::Property => "pr",
        }
    }

    pub fn from_tag(s: &str) -> Option<NodeKind> {
        match s {
            "ho" => Some(NodeKind::Holder),
            "sr" => Some(NodeKind::Script),
            "se" => Some(NodeKind::Scene),
            "en" => Some(NodeKind::Entity),
            "pr" => Some(NodeKind::Property),
            _ => None,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A rooted class tree for a class-valued slot. Node 0 is the root class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTree {
    names: Vec<String>,
    parent: Vec<Option<usize>>,
    index: BTreeMap<String, usize>,
}

impl ClassTree {
    pub fn new(root: &str) -> ClassTree {
        let mut index = BTreeMap::new();
        index.insert(root.to_string(), 0);
        ClassTree { names: vec![root.to_string()], parent: vec![None], index }
    }

    pub fn add(&mut self, parent: &str, child: &str) -> Result<()> {
        let p = *self
            .index
            .get(parent)
            .ok_or_else(|| Error::Ontology(format!("unknown parent class '{parent}'")))?;
        if self.index.contains_key(child) {
            return Err(Error::Ontology(format!("duplicate class '{child}'")));
        }
        self.index.insert(child.to_string(), self.names.len());
        self.names.push(child.to_string());
        self.parent.push(Some(p));
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn root(&self) -> &str {
        &self.names[0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn ancestors(&self, mut id: usize) -> Vec<usize> {
        let mut out = vec![id];
        while let Some(p) = self.parent[id] {
            out.push(p);
            id = p;
        }
        out
    }

    /// Is `a` equal to or a descendant of `b`?
    pub fn is_subclass(&self, a: &str, b: &str) -> bool {
        match (self.id(a), self.id(b)) {
            (Some(a), Some(b)) => self.ancestors(a).contains(&b),
            _ => false,
        }
    }

    /// Lowest common ancestor class name.
    pub fn common_ancestor(&self, a: &str, b: &str) -> Option<&str> {
        let (a, b) = (self.id(a)?, self.id(b)?);
        let up_a = self.ancestors(a);
        let up_b: BTreeSet<usize> = self.ancestors(b).into_iter().collect();
        up_a.into_iter().find(|x| up_b.contains(x)).map(|i| self.names[i].as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Flat(BTreeSet<String>),
    Classes(ClassTree),
}

impl Domain {
    pub fn contains(&self, value: &str) -> bool {
        match self {
            Domain::Flat(set) => set.contains(value),
            Domain::Classes(t) => t.contains(value),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Domain::Flat(set) => set.len(),
            Domain::Classes(t) => t.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotDef {
    pub domain: Domain,
    pub cost: Bits,
    /// An "up" slot stays above a trump node placed on its carrier.
    pub up: bool,
}

/// Slot names the language machinery relies on by convention. A usable
/// ontology declares them on scene nodes; the algebra itself does not care.
pub const DESIGNATOR_SLOT: &str = "des";
pub const PHONEME_SLOT: &str = "ph";
pub const DES_SOUND: &str = "sound";
pub const DES_ENTITY: &str = "entity";
pub const DES_EVENT: &str = "event";

#[derive(Debug, Clone, PartialEq)]
pub struct Ontology {
    pub root_kind: NodeKind,
    pub precision: u32,
    pub arrow_cost: Bits,
    allowed_children: BTreeMap<NodeKind, BTreeSet<NodeKind>>,
    slots: BTreeMap<NodeKind, BTreeMap<String, SlotDef>>,
}

impl Ontology {
    pub fn builder() -> OntologyBuilder {
        OntologyBuilder::default()
    }

    pub fn slot(&self, kind: NodeKind, name: &str) -> Option<&SlotDef> {
        self.slots.get(&kind).and_then(|m| m.get(name))
    }

    pub fn slots_of(&self, kind: NodeKind) -> impl Iterator<Item = (&String, &SlotDef)> {
        self.slots.get(&kind).into_iter().flat_map(|m| m.iter())
    }

    pub fn child_allowed(&self, parent: NodeKind, child: NodeKind) -> bool {
        self.allowed_children.get(&parent).map_or(false, |s| s.contains(&child))
    }

    pub fn allowed_children_of(&self, parent: NodeKind) -> impl Iterator<Item = NodeKind> + '_ {
        self.allowed_children.get(&parent).into_iter().flatten().copied()
    }

    /// Value domain of the scene phoneme slot, if declared.
    pub fn phoneme_alphabet(&self) -> Option<&BTreeSet<String>> {
        match self.slot(NodeKind::Scene, PHONEME_SLOT)? {
            SlotDef { domain: Domain::Flat(s), .. } => Some(s),
            _ => None,
        }
    }

    /// Serialize to the line-oriented ontology format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("root {}\n", self.root_kind));
        out.push_str(&format!("precision {}\n", self.precision));
        out.push_str(&format!("arrow_bits {}\n", self.arrow_cost.as_f64()));
        for (k, kids) in &self.allowed_children {
            if kids.is_empty() {
                continue;
            }
            let list: Vec<&str> = kids.iter().map(|c| c.tag()).collect();
            out.push_str(&format!("child {} {}\n", k, list.join(" ")));
        }
        for (k, slots) in &self.slots {
            for (name, def) in slots {
                match &def.domain {
                    Domain::Flat(vals) => {
                        let vs: Vec<&str> = vals.iter().map(|s| s.as_str()).collect();
                        out.push_str(&format!("slot {} {} enum {}\n", k, name, vs.join(" ")));
                    }
                    Domain::Classes(t) => {
                        out.push_str(&format!("slot {} {} class {}\n", k, name, class_expr(t)));
                    }
                }
                if def.up {
                    out.push_str(&format!("up {} {}\n", k, name));
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Ontology> {
        let mut b = Ontology::builder();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let head = words.next().unwrap();
            let rest: Vec<&str> = words.collect();
            let col = raw.len() - raw.trim_start().len() + 1;
            let err = |msg: String| Error::parse(line_no, col, msg);
            match head {
                "root" => {
                    let k = rest.first().and_then(|t| NodeKind::from_tag(t));
                    b.root = Some(k.ok_or_else(|| err("expected a node kind after 'root'".into()))?);
                }
                "precision" => {
                    b.precision = rest
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err("expected an integer after 'precision'".into()))?;
                }
                "arrow_bits" => {
                    b.arrow_bits = rest
                        .first()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err("expected a number after 'arrow_bits'".into()))?;
                }
                "child" => {
                    let parent = rest
                        .first()
                        .and_then(|t| NodeKind::from_tag(t))
                        .ok_or_else(|| err("expected a parent kind after 'child'".into()))?;
                    for t in &rest[1..] {
                        let c = NodeKind::from_tag(t)
                            .ok_or_else(|| err(format!("unknown node kind '{t}'")))?;
                        b = b.child(parent, c);
                    }
                }
                "slot" => {
                    if rest.len() < 3 {
                        return Err(err("slot needs: kind name enum|class values".into()));
                    }
                    let kind = NodeKind::from_tag(rest[0])
                        .ok_or_else(|| err(format!("unknown node kind '{}'", rest[0])))?;
                    let name = rest[1];
                    match rest[2] {
                        "enum" => {
                            if rest.len() < 4 {
                                return Err(err("enum slot needs at least one value".into()));
                            }
                            b = b.flat_slot(kind, name, &rest[3..]);
                        }
                        "class" => {
                            let expr = rest[3..].join(" ");
                            let tree = parse_class_expr(&expr)
                                .map_err(|m| err(format!("bad class tree: {m}")))?;
                            b = b.class_slot(kind, name, tree);
                        }
                        other => return Err(err(format!("expected 'enum' or 'class', got '{other}'"))),
                    }
                }
                "slotcost" => {
                    if rest.len() != 3 {
                        return Err(err("slotcost needs: kind name bits".into()));
                    }
                    let kind = NodeKind::from_tag(rest[0])
                        .ok_or_else(|| err(format!("unknown node kind '{}'", rest[0])))?;
                    let bits: f64 = rest[2]
                        .parse()
                        .map_err(|_| err(format!("bad bit cost '{}'", rest[2])))?;
                    b.cost_overrides.push((kind, rest[1].to_string(), bits));
                }
                "up" => {
                    if rest.len() != 2 {
                        return Err(err("up needs: kind slot".into()));
                    }
                    let kind = NodeKind::from_tag(rest[0])
                        .ok_or_else(|| err(format!("unknown node kind '{}'", rest[0])))?;
                    b.ups.push((kind, rest[1].to_string()));
                }
                other => return Err(err(format!("unknown directive '{other}'"))),
            }
        }
        b.build()
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Nested-paren class expression: `animal(cat(tabby tom) dog)`.
fn parse_class_expr(expr: &str) -> std::result::Result<ClassTree, String> {
    let tokens = tokenize_classes(expr)?;
    let mut it = tokens.into_iter().peekable();
    let root = match it.next() {
        Some(ClassTok::Name(n)) => n,
        _ => return Err("expected a root class name".into()),
    };
    let mut tree = ClassTree::new(&root);
    fn children(
        it: &mut std::iter::Peekable<std::vec::IntoIter<ClassTok>>,
        tree: &mut ClassTree,
        parent: &str,
    ) -> std::result::Result<(), String> {
        if !matches!(it.peek(), Some(ClassTok::Open)) {
            return Ok(());
        }
        it.next();
        loop {
            match it.next() {
                Some(ClassTok::Name(n)) => {
                    tree.add(parent, &n).map_err(|e| e.to_string())?;
                    children(it, tree, &n)?;
                }
                Some(ClassTok::Close) => return Ok(()),
                _ => return Err("unbalanced class expression".into()),
            }
        }
    }
    children(&mut it, &mut tree, &root)?;
    if it.next().is_some() {
        return Err("trailing tokens after class tree".into());
    }
    Ok(tree)
}

enum ClassTok {
    Name(String),
    Open,
    Close,
}

fn tokenize_classes(expr: &str) -> std::result::Result<Vec<ClassTok>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in expr.chars() {
        match ch {
            '(' | ')' | ' ' | '\t' => {
                if !cur.is_empty() {
                    out.push(ClassTok::Name(std::mem::take(&mut cur)));
                }
                match ch {
                    '(' => out.push(ClassTok::Open),
                    ')' => out.push(ClassTok::Close),
                    _ => {}
                }
            }
            c if c.is_alphanumeric() || c == '_' || c == '-' => cur.push(c),
            c => return Err(format!("unexpected character '{c}'")),
        }
    }
    if !cur.is_empty() {
        out.push(ClassTok::Name(cur));
    }
    Ok(out)
}

fn class_expr(t: &ClassTree) -> String {
    fn walk(t: &ClassTree, id: usize, out: &mut String) {
        out.push_str(&t.names[id]);
        let kids: Vec<usize> =
            (0..t.names.len()).filter(|&i| t.parent[i] == Some(id)).collect();
        if !kids.is_empty() {
            out.push('(');
            for (n, k) in kids.iter().enumerate() {
                if n > 0 {
                    out.push(' ');
                }
                walk(t, *k, out);
            }
            out.push(')');
        }
    }
    let mut s = String::new();
    walk(t, 0, &mut s);
    s
}

#[derive(Default)]
pub struct OntologyBuilder {
    root: Option<NodeKind>,
    precision: u32,
    arrow_bits: f64,
    children: Vec<(NodeKind, NodeKind)>,
    flat_slots: Vec<(NodeKind, String, Vec<String>)>,
    class_slots: Vec<(NodeKind, String, ClassTree)>,
    cost_overrides: Vec<(NodeKind, String, f64)>,
    ups: Vec<(NodeKind, String)>,
}

impl OntologyBuilder {
    pub fn root(mut self, k: NodeKind) -> Self {
        self.root = Some(k);
        self
    }

    pub fn precision(mut self, p: u32) -> Self {
        self.precision = p;
        self
    }

    pub fn arrow_bits(mut self, bits: f64) -> Self {
        self.arrow_bits = bits;
        self
    }

    pub fn child(mut self, parent: NodeKind, c: NodeKind) -> Self {
        self.children.push((parent, c));
        self
    }

    pub fn flat_slot<S: AsRef<str>>(mut self, kind: NodeKind, name: &str, values: &[S]) -> Self {
        self.flat_slots.push((
            kind,
            name.to_string(),
            values.iter().map(|v| v.as_ref().to_string()).collect(),
        ));
        self
    }

    pub fn class_slot(mut self, kind: NodeKind, name: &str, tree: ClassTree) -> Self {
        self.class_slots.push((kind, name.to_string(), tree));
        self
    }

    pub fn slot_cost(mut self, kind: NodeKind, name: &str, bits: f64) -> Self {
        self.cost_overrides.push((kind, name.to_string(), bits));
        self
    }

    pub fn up_slot(mut self, kind: NodeKind, name: &str) -> Self {
        self.ups.push((kind, name.to_string()));
        self
    }

    pub fn build(self) -> Result<Ontology> {
        let precision = if self.precision == 0 { 3 } else { self.precision };
        let arrow_bits = if self.arrow_bits == 0.0 { 1.0 } else { self.arrow_bits };
        if arrow_bits <= 0.0 {
            return Err(Error::Ontology("arrow cost must be positive".into()));
        }
        let mut slots: BTreeMap<NodeKind, BTreeMap<String, SlotDef>> = BTreeMap::new();
        let mut seen: BTreeMap<String, NodeKind> = BTreeMap::new();
        let mut add = |kind: NodeKind, name: String, domain: Domain| -> Result<()> {
            if let Some(prev) = seen.get(&name) {
                return Err(Error::Ontology(format!(
                    "slot '{name}' declared for both {prev} and {kind}; a slot name maps to one kind"
                )));
            }
            if domain.size() < 2 {
                return Err(Error::Ontology(format!(
                    "slot '{name}' needs at least two values for a positive bit cost"
                )));
            }
            seen.insert(name.clone(), kind);
            let cost = Bits::from_f64_rounded((domain.size() as f64).log2(), precision);
            slots.entry(kind).or_default().insert(name, SlotDef { domain, cost, up: false });
            Ok(())
        };
        for (k, name, vals) in self.flat_slots {
            add(k, name, Domain::Flat(vals.into_iter().collect()))?;
        }
        for (k, name, tree) in self.class_slots {
            add(k, name, Domain::Classes(tree))?;
        }
        for (k, name, bits) in self.cost_overrides {
            let def = slots
                .get_mut(&k)
                .and_then(|m| m.get_mut(&name))
                .ok_or_else(|| Error::Ontology(format!("slotcost for unknown slot '{name}'")))?;
            if bits <= 0.0 {
                return Err(Error::Ontology("all bit costs must be positive".into()));
            }
            def.cost = Bits::from_f64_rounded(bits, precision);
        }
        for (k, name) in self.ups {
            let def = slots
                .get_mut(&k)
                .and_then(|m| m.get_mut(&name))
                .ok_or_else(|| Error::Ontology(format!("up for unknown slot '{name}'")))?;
            def.up = true;
        }
        let mut allowed: BTreeMap<NodeKind, BTreeSet<NodeKind>> = BTreeMap::new();
        for (p, c) in self.children {
            allowed.entry(p).or_default().insert(c);
        }
        Ok(Ontology {
            root_kind: self.root.unwrap_or(NodeKind::Script),
            precision,
            arrow_cost: Bits::from_f64_rounded(arrow_bits, precision),
            allowed_children: allowed,
            slots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Ontology {
        Ontology::builder()
            .root(NodeKind::Script)
            .child(NodeKind::Script, NodeKind::Scene)
            .child(NodeKind::Scene, NodeKind::Entity)
            .flat_slot(NodeKind::Entity, "sex", &["male", "female"])
            .flat_slot(NodeKind::Scene, "des", &["event", "entity", "sound"])
            .up_slot(NodeKind::Scene, "des")
            .build()
            .unwrap()
    }

    #[test]
    fn slot_costs_follow_domain_size() {
        let ont = tiny();
        assert_eq!(ont.slot(NodeKind::Entity, "sex").unwrap().cost, Bits::from_bits(1));
        assert_eq!(ont.slot(NodeKind::Scene, "des").unwrap().cost.0, 1_585_000);
        assert!(ont.slot(NodeKind::Scene, "des").unwrap().up);
    }

    #[test]
    fn duplicate_slot_name_rejected() {
        let err = Ontology::builder()
            .flat_slot(NodeKind::Entity, "x", &["a", "b"])
            .flat_slot(NodeKind::Scene, "x", &["a", "b"])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::Ontology(_)));
    }

    #[test]
    fn class_tree_relations() {
        let mut t = ClassTree::new("animal");
        t.add("animal", "cat").unwrap();
        t.add("animal", "dog").unwrap();
        t.add("cat", "tabby").unwrap();
        assert!(t.is_subclass("tabby", "animal"));
        assert!(t.is_subclass("cat", "cat"));
        assert!(!t.is_subclass("cat", "dog"));
        assert_eq!(t.common_ancestor("tabby", "dog"), Some("animal"));
        assert_eq!(t.common_ancestor("tabby", "cat"), Some("cat"));
    }

    #[test]
    fn text_round_trip() {
        let ont = tiny();
        let text = ont.to_text();
        let back = Ontology::parse(&text).unwrap();
        assert_eq!(ont, back);
    }

    #[test]
    fn parse_reports_line() {
        let err = Ontology::parse("root sr\nbogus line here\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn class_expr_round_trip() {
        let t = parse_class_expr("animal(cat(tabby tom) dog)").unwrap();
        assert_eq!(class_expr(&t), "animal(cat(tabby tom) dog)");
        assert_eq!(t.len(), 5);
    }
}
