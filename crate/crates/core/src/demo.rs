//! A demonstration ontology and lexicon: the worked words used across the
//! test suites, the CLI fixtures, and the bootstrap harness.
//!
//! Word m-scripts here follow the two-branch shape: a left branch of sound
//! scenes (one phoneme each, chained by time-order arrows) plus argument
//! scenes, and a right branch holding one meaning scene. Trump links run
//! from argument entities to role-tagged entities in the meaning.

use std::collections::BTreeSet;

use crate::error::Result;
use crate::mscript::MScript;
use crate::ontology::{ClassTree, NodeKind, Ontology};
use crate::script::{NodeId, Script, ScriptBuilder};

pub const PHONEMES: &[&str] = &[
    // demo English-ish fragments
    "fr", "ed", "mu", "my", "pe", "ter", "ba", "loon", "ca", "t", "hun", "gry", "re", "d",
    "shouts", "at", "gi", "v", "s", "ing", "go", "we", "nt", "bur", "st", "cu", "ho", "le",
    "ru", "n", "ea", "hop", "po", "ke", "ha", "nd",
    // toy language syllables for the bootstrap corpora
    "ka", "ra", "mi", "lo", "zu", "ni", "ta", "fu", "si", "ke2", "ro", "da", "bu", "pa", "ve",
];

pub const ACTS: &[&str] = &[
    "shout", "give", "burst", "go", "own", "eat", "cut", "hope", "let", "run", "hop", "poke",
    "hand", "see",
];

/// The shared demonstration ontology.
pub fn ontology() -> Ontology {
    let mut an = ClassTree::new("ent");
    an.add("ent", "anim").unwrap();
    an.add("anim", "hum").unwrap();
    an.add("anim", "beast").unwrap();
    an.add("ent", "inan").unwrap();

    Ontology::builder()
        .root(NodeKind::Script)
        .child(NodeKind::Script, NodeKind::Scene)
        .child(NodeKind::Scene, NodeKind::Entity)
        .child(NodeKind::Scene, NodeKind::Property)
        .child(NodeKind::Scene, NodeKind::Scene)
        .child(NodeKind::Entity, NodeKind::Property)
        .flat_slot(NodeKind::Scene, "des", &["event", "entity", "sound"])
        .flat_slot(NodeKind::Scene, "ph", PHONEMES)
        .flat_slot(NodeKind::Scene, "act", ACTS)
        .flat_slot(NodeKind::Scene, "time", &["past", "present", "future"])
        .flat_slot(NodeKind::Scene, "pol", &["certain", "maybe", "not"])
        .flat_slot(
            NodeKind::Entity,
            "id",
            &["i1", "i2", "i3", "i4", "i5", "i6", "i7", "i8"],
        )
        .class_slot(NodeKind::Entity, "an", an)
        .flat_slot(NodeKind::Entity, "num", &["sg", "pl"])
        .flat_slot(NodeKind::Entity, "sex", &["male", "female"])
        .flat_slot(
            NodeKind::Entity,
            "role",
            &["agent", "patient", "recipient", "gift", "topic"],
        )
        .flat_slot(
            NodeKind::Property,
            "p",
            &["hungry", "red", "big", "small", "broken", "loud", "soft", "furry"],
        )
        .up_slot(NodeKind::Scene, "des")
        .build()
        .expect("demo ontology is well-formed")
}

/// Helper assembling a word m-script from declarative parts.
pub struct WordBuilder<'o> {
    ont: &'o Ontology,
    b: ScriptBuilder,
    sounds: Vec<NodeId>,
    /// (scene id, trump entity id) per argument scene, in word order
    /// position: arguments before the sound come first.
    args: Vec<NodeId>,
    arg_ens: Vec<NodeId>,
    right: Option<NodeId>,
    right_targets: Vec<NodeId>,
    order: Vec<NodeId>,
}

impl<'o> WordBuilder<'o> {
    pub fn new(ont: &'o Ontology) -> WordBuilder<'o> {
        WordBuilder {
            ont,
            b: ScriptBuilder::root(NodeKind::Script),
            sounds: Vec::new(),
            args: Vec::new(),
            arg_ens: Vec::new(),
            right: None,
            right_targets: Vec::new(),
            order: Vec::new(),
        }
    }

    /// Append one sound scene per phoneme, in order.
    pub fn sounds(&mut self, phonemes: &[&str]) -> &mut Self {
        for ph in phonemes {
            let sc = self.b.node(0, NodeKind::Scene);
            self.b.sym(sc, "des", "sound");
            self.b.sym(sc, "ph", ph);
            self.sounds.push(sc);
            self.order.push(sc);
        }
        self
    }

    /// Append an argument scene constraining its entity with `slots`.
    /// Returns the entity id (a trump node and link source).
    pub fn argument(&mut self, slots: &[(&str, &str)]) -> NodeId {
        let sc = self.b.node(0, NodeKind::Scene);
        self.b.sym(sc, "des", "entity");
        let en = self.b.node(sc, NodeKind::Entity);
        for (k, v) in slots {
            self.b.sym(en, k, v);
        }
        self.args.push(sc);
        self.arg_ens.push(en);
        self.order.push(sc);
        en
    }

    /// Build the right branch from a closure over the builder; returns the
    /// scene id. Call exactly once, after sounds and arguments.
    pub fn meaning<F>(&mut self, f: F) -> NodeId
    where
        F: FnOnce(&mut ScriptBuilder, NodeId),
    {
        let sc = self.b.node(0, NodeKind::Scene);
        f(&mut self.b, sc);
        self.right = Some(sc);
        sc
    }

    /// Mark a meaning entity as a trump-link target for the n-th argument.
    pub fn target(&mut self, en: NodeId) -> &mut Self {
        self.right_targets.push(en);
        self
    }

    pub fn finish(mut self) -> Result<MScript> {
        // Word order: arrows chain the left-branch scenes as appended.
        for w in self.order.windows(2) {
            self.b.arrow(0, w[0], w[1]);
        }
        let base = self.b.build();
        let mut trumps: BTreeSet<NodeId> = BTreeSet::new();
        trumps.insert(Script::ROOT);
        let mut links = BTreeSet::new();
        for (src, tgt) in self.arg_ens.iter().zip(&self.right_targets) {
            trumps.insert(*src);
            trumps.insert(*tgt);
            links.insert((*src, *tgt));
        }
        let m = MScript::new(base, trumps, links)?;
        m.validate(self.ont)?;
        Ok(m)
    }
}

/// A surface form with its m-script and phoneme chain.
#[derive(Debug, Clone)]
pub struct DemoWord {
    pub surface: String,
    pub phonemes: Vec<String>,
    pub m: MScript,
}

fn word(ont: &Ontology, surface: &str, phonemes: &[&str], m: MScript) -> DemoWord {
    let _ = ont;
    DemoWord {
        surface: surface.to_string(),
        phonemes: phonemes.iter().map(|s| s.to_string()).collect(),
        m,
    }
}

/// Proper noun: sound chain -> one entity meaning scene.
pub fn noun(ont: &Ontology, surface: &str, phonemes: &[&str], slots: &[(&str, &str)]) -> DemoWord {
    let mut w = WordBuilder::new(ont);
    w.sounds(phonemes);
    w.meaning(|b, sc| {
        b.sym(sc, "des", "entity");
        let en = b.node(sc, NodeKind::Entity);
        for (k, v) in slots {
            b.sym(en, k, v);
        }
    });
    word(ont, surface, phonemes, w.finish().expect("noun shape"))
}

pub fn fred(ont: &Ontology) -> DemoWord {
    noun(
        ont,
        "fred",
        &["fr", "ed"],
        &[("id", "i1"), ("an", "hum"), ("sex", "male"), ("num", "sg")],
    )
}

pub fn mummy(ont: &Ontology) -> DemoWord {
    noun(
        ont,
        "mummy",
        &["mu", "my"],
        &[("id", "i2"), ("an", "hum"), ("sex", "female"), ("num", "sg")],
    )
}

pub fn peter(ont: &Ontology) -> DemoWord {
    noun(
        ont,
        "peter",
        &["pe", "ter"],
        &[("id", "i3"), ("an", "hum"), ("sex", "male"), ("num", "sg")],
    )
}

pub fn balloon(ont: &Ontology) -> DemoWord {
    noun(ont, "balloon", &["ba", "loon"], &[("id", "i4"), ("an", "inan"), ("num", "sg")])
}

pub fn cat(ont: &Ontology) -> DemoWord {
    noun(ont, "cat", &["ca", "t"], &[("id", "i5"), ("an", "beast"), ("num", "sg")])
}

/// Adjective: sound chain + one argument entity scene -> enriched entity.
pub fn adjective(
    ont: &Ontology,
    surface: &str,
    phonemes: &[&str],
    arg_slots: &[(&str, &str)],
    property: &str,
) -> DemoWord {
    let mut w = WordBuilder::new(ont);
    w.sounds(phonemes);
    let _src = w.argument(arg_slots);
    let mut tgt = None;
    w.meaning(|b, sc| {
        b.sym(sc, "des", "entity");
        let en = b.node(sc, NodeKind::Entity);
        for (k, v) in arg_slots {
            b.sym(en, k, v);
        }
        let pr = b.node(en, NodeKind::Property);
        b.sym(pr, "p", property);
        tgt = Some(en);
    });
    w.target(tgt.unwrap());
    word(ont, surface, phonemes, w.finish().expect("adjective shape"))
}

pub fn hungry(ont: &Ontology) -> DemoWord {
    adjective(ont, "hungry", &["hun", "gry"], &[("an", "anim")], "hungry")
}

pub fn red(ont: &Ontology) -> DemoWord {
    adjective(ont, "red", &["re", "d"], &[("an", "inan")], "red")
}

/// Intransitive verb: argument scene + sound chain -> event meaning.
pub fn intransitive(
    ont: &Ontology,
    surface: &str,
    phonemes: &[&str],
    act: &str,
    time: &str,
    agent_slots: &[(&str, &str)],
) -> DemoWord {
    let mut w = WordBuilder::new(ont);
    let _agent = w.argument(agent_slots);
    w.sounds(phonemes);
    let mut tgt = None;
    w.meaning(|b, sc| {
        b.sym(sc, "des", "event");
        b.sym(sc, "act", act);
        b.sym(sc, "time", time);
        b.sym(sc, "pol", "certain");
        let en = b.node(sc, NodeKind::Entity);
        b.sym(en, "role", "agent");
        for (k, v) in agent_slots {
            b.sym(en, k, v);
        }
        tgt = Some(en);
    });
    w.target(tgt.unwrap());
    word(ont, surface, phonemes, w.finish().expect("intransitive shape"))
}

/// The figure fixture uses the whole-word sound form.
pub fn shouts(ont: &Ontology) -> DemoWord {
    intransitive(ont, "shouts", &["shouts"], "shout", "present", &[("an", "anim"), ("num", "sg")])
}

/// Transitive verb: agent scene, sounds, patient scene -> event meaning.
pub fn transitive(
    ont: &Ontology,
    surface: &str,
    phonemes: &[&str],
    act: &str,
    time: &str,
    agent_slots: &[(&str, &str)],
    patient_slots: &[(&str, &str)],
) -> DemoWord {
    let mut w = WordBuilder::new(ont);
    let _agent = w.argument(agent_slots);
    w.sounds(phonemes);
    let _patient = w.argument(patient_slots);
    let mut tgts = (None, None);
    w.meaning(|b, sc| {
        b.sym(sc, "des", "event");
        b.sym(sc, "act", act);
        b.sym(sc, "time", time);
        b.sym(sc, "pol", "certain");
        let ag = b.node(sc, NodeKind::Entity);
        b.sym(ag, "role", "agent");
        for (k, v) in agent_slots {
            b.sym(ag, k, v);
        }
        let pt = b.node(sc, NodeKind::Entity);
        b.sym(pt, "role", "patient");
        for (k, v) in patient_slots {
            b.sym(pt, k, v);
        }
        tgts = (Some(ag), Some(pt));
    });
    w.target(tgts.0.unwrap());
    w.target(tgts.1.unwrap());
    word(ont, surface, phonemes, w.finish().expect("transitive shape"))
}

pub fn burst(ont: &Ontology) -> DemoWord {
    transitive(
        ont,
        "burst",
        &["bur", "st"],
        "burst",
        "past",
        &[("an", "anim")],
        &[("an", "inan")],
    )
}

/// Ditransitive verb with the hidden control relation: the recipient later
/// owns the gift, expressed by shared aces in the result scene.
pub fn ditransitive(
    ont: &Ontology,
    surface: &str,
    phonemes: &[&str],
    act: &str,
    time: &str,
) -> DemoWord {
    let mut w = WordBuilder::new(ont);
    let _donor = w.argument(&[("an", "anim"), ("num", "sg")]);
    w.sounds(phonemes);
    let _recipient = w.argument(&[("an", "anim")]);
    let _gift = w.argument(&[("an", "inan")]);
    let mut tgts = (None, None, None);
    w.meaning(|b, sc| {
        b.sym(sc, "des", "event");
        b.sym(sc, "act", act);
        b.sym(sc, "time", time);
        b.sym(sc, "pol", "certain");
        let donor = b.node(sc, NodeKind::Entity);
        b.sym(donor, "role", "agent");
        b.sym(donor, "an", "anim");
        b.sym(donor, "num", "sg");
        let rec = b.node(sc, NodeKind::Entity);
        b.sym(rec, "role", "recipient");
        b.sym(rec, "an", "anim");
        b.ace(rec, "id", 100);
        let gift = b.node(sc, NodeKind::Entity);
        b.sym(gift, "role", "gift");
        b.sym(gift, "an", "inan");
        b.ace(gift, "id", 101);
        // Result: the recipient owns the gift.
        let result = b.node(sc, NodeKind::Scene);
        b.sym(result, "des", "event");
        b.sym(result, "act", "own");
        b.sym(result, "time", "future");
        let owner = b.node(result, NodeKind::Entity);
        b.sym(owner, "role", "agent");
        b.ace(owner, "id", 100);
        let owned = b.node(result, NodeKind::Entity);
        b.sym(owned, "role", "patient");
        b.ace(owned, "id", 101);
        tgts = (Some(donor), Some(rec), Some(gift));
    });
    w.target(tgts.0.unwrap());
    w.target(tgts.1.unwrap());
    w.target(tgts.2.unwrap());
    word(ont, surface, phonemes, w.finish().expect("ditransitive shape"))
}

pub fn gives(ont: &Ontology) -> DemoWord {
    ditransitive(ont, "gives", &["gi", "v", "s"], "give", "present")
}

/// The past-tense pair used by the negative-evidence fixture.
pub fn went(ont: &Ontology) -> DemoWord {
    intransitive(ont, "went", &["we", "nt"], "go", "past", &[("an", "anim")])
}

pub fn goed(ont: &Ontology) -> DemoWord {
    intransitive(ont, "goed", &["go", "ed"], "go", "past", &[("an", "anim")])
}
