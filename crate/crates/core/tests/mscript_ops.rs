//! Trump machinery: truncated subtrees, well-formedness, scope,
//! m-inclusion, m-unification, m-intersection and directed application.

use std::collections::BTreeSet;

use mscript::algebra::Budget;
use mscript::demo;
use mscript::mscript::{
    apply, in_scope, m_includes, m_intersect, m_unify, Direction, IntersectMode, MScript,
    PieceKey,
};
use mscript::ontology::NodeKind::{Entity, Property};
use mscript::script::{Script, SlotValue};
use mscript::text::{mscript_to_text, parse_mscript, parse_script, script_to_text};
use mscript::{Error, Ontology};

fn b() -> Budget {
    Budget::new(10_000_000)
}

fn ont() -> Ontology {
    demo::ontology()
}

#[test]
fn mscript_text_round_trips() {
    let ont = ont();
    let w = demo::hungry(&ont);
    let text = mscript_to_text(&w.m);
    let back = parse_mscript(&text).unwrap();
    assert_eq!(mscript_to_text(&back), text);
    assert_eq!(back.links.len(), 1);
    assert_eq!(back.trumps.len(), 3);
}

#[test]
fn constructor_rejects_double_links() {
    let base = parse_script("sr{}[se{des:entity}[en{}], se{des:entity}[en{}], se{des:entity}[en{}]]")
        .unwrap();
    // Entities are nodes 2, 4, 6.
    let trumps: BTreeSet<usize> = [2usize, 4, 6].into_iter().collect();
    let links: BTreeSet<(usize, usize)> = [(2usize, 4usize), (4, 6)].into_iter().collect();
    let err = MScript::new(base, trumps, links).unwrap_err();
    assert!(matches!(err, Error::TrumpConfig(_)));
}

#[test]
fn pieces_partition_the_slots() {
    let ont = ont();
    // Zero trumps: one piece equal to the whole base.
    let plain = MScript::plain(parse_script("sr{}[se{des:event, act:shout}]").unwrap());
    let pieces = plain.truncated_subtrees(&ont);
    assert_eq!(pieces.len(), 1);
    assert!(matches!(pieces[0].0, PieceKey::Top));

    // One link: three pieces (top, source, target).
    let hungry = demo::hungry(&ont);
    let pieces = hungry.m.truncated_subtrees(&ont);
    assert_eq!(pieces.len(), 4); // top + root trump + two link ends
    count_partition(&hungry.m, &ont);

    // Three links: partition still exact.
    let gives = demo::gives(&ont);
    count_partition(&gives.m, &ont);
}

/// Every slot of the base appears in exactly one truncated subtree.
fn count_partition(m: &MScript, ont: &Ontology) {
    let total: usize = m.base.ids().map(|i| m.base.node(i).slots.len()).sum();
    let pieces = m.truncated_subtrees(ont);
    let in_pieces: usize =
        pieces.iter().map(|(_, p)| p.ids().map(|i| p.node(i).slots.len()).sum::<usize>()).sum();
    assert_eq!(total, in_pieces, "slot partition across pieces");
}

#[test]
fn well_formedness_checks_link_inclusion() {
    let ont = ont();
    let plain = MScript::plain(parse_script("sr{}[se{}]").unwrap());
    assert!(plain.is_well_formed(&ont, &b()).unwrap());
    let gives = demo::gives(&ont);
    assert!(gives.m.is_well_formed(&ont, &b()).unwrap());

    // Mutate: delete the donor entity from the right branch. The agent
    // link's target vanishes, so the link equation cannot hold.
    let mut base = gives.m.base.clone();
    let right = mscript::mscript::right_branch_scene(&gives.m, &ont).unwrap();
    let donor = *base
        .node(right)
        .children
        .iter()
        .find(|&&c| {
            base.node(c).kind == Entity
                && base.node(c).slots.get("role") == Some(&SlotValue::sym("agent"))
        })
        .unwrap();
    // Strip the donor's slots; its link to the left argument then demands
    // the impossible.
    base.node_mut(donor).slots.clear();
    let mutated = MScript::new(base, gives.m.trumps.clone(), gives.m.links.clone()).unwrap();
    assert!(!mutated.is_well_formed(&ont, &b()).unwrap());
}

#[test]
fn strip_is_in_own_scope() {
    let ont = ont();
    for w in [
        demo::fred(&ont),
        demo::hungry(&ont),
        demo::shouts(&ont),
        demo::gives(&ont),
        demo::red(&ont),
    ] {
        assert!(
            in_scope(&w.m.strip(), &w.m, &ont, &b()).unwrap(),
            "{} must lie in its own scope",
            w.surface
        );
    }
}

#[test]
fn scope_respects_trump_boundaries() {
    let ont = ont();
    // One lone trump on the entity: extensions below it stay in scope,
    // extensions elsewhere do not. No top trump here, so everything above
    // the entity must match exactly.
    let base = parse_script("sr{}[se{des:entity}[en{an:anim}]]").unwrap();
    let trumps: BTreeSet<usize> = [2usize].into_iter().collect();
    let m = MScript::new(base, trumps, BTreeSet::new()).unwrap();

    let deeper = parse_script("sr{}[se{des:entity}[en{an:hum, sex:male}[pr{p:big}]]]").unwrap();
    assert!(in_scope(&deeper, &m, &ont, &b()).unwrap());

    // Extra slot on the scene node (not below a trump): out of scope.
    let widened = parse_script("sr{}[se{des:entity, pol:certain}[en{an:anim}]]").unwrap();
    assert!(!in_scope(&widened, &m, &ont, &b()).unwrap());
}

#[test]
fn scope_enforces_link_equation() {
    let ont = ont();
    let hungry = demo::hungry(&ont);
    // In scope: argument content mirrored through the link.
    let good = parse_script(
        "sr{}[se{des:sound, ph:hun}, se{des:sound, ph:gry}, \
         se{des:entity}[en{an:hum, sex:male}], \
         se{des:entity}[en{an:hum, sex:male}[pr{p:hungry}]], \
         @arrows(1->2, 2->3)]",
    )
    .unwrap();
    assert!(in_scope(&good, &hungry.m, &ont, &b()).unwrap());

    // Out of scope: the meaning end has content the argument end lacks.
    let bad = parse_script(
        "sr{}[se{des:sound, ph:hun}, se{des:sound, ph:gry}, \
         se{des:entity}[en{an:hum}], \
         se{des:entity}[en{an:hum, sex:male}[pr{p:hungry}]], \
         @arrows(1->2, 2->3)]",
    )
    .unwrap();
    assert!(!in_scope(&bad, &hungry.m, &ont, &b()).unwrap());
}

#[test]
fn m_includes_is_reflexive_and_detects_narrowing() {
    let ont = ont();
    for w in [demo::fred(&ont), demo::hungry(&ont), demo::gives(&ont)] {
        assert!(m_includes(&w.m, &w.m, &ont, &b()).unwrap(), "{}", w.surface);
    }
    // A plain script within the scope m-includes the m-script... only if
    // trump steps 4-5 allow; a trump-free concrete instance does.
    let hungry = demo::hungry(&ont);
    let inst = parse_script(
        "sr{}[se{des:sound, ph:hun}, se{des:sound, ph:gry}, \
         se{des:entity}[en{an:hum, sex:male}], \
         se{des:entity}[en{an:hum, sex:male}[pr{p:hungry}]], \
         @arrows(1->2, 2->3)]",
    )
    .unwrap();
    assert!(m_includes(&MScript::plain(inst), &hungry.m, &ont, &b()).unwrap());
    // The reverse direction must fail: the word denotes more scripts.
    let inst2 = parse_script(
        "sr{}[se{des:sound, ph:hun}, se{des:sound, ph:gry}, \
         se{des:entity}[en{an:hum, sex:male}], \
         se{des:entity}[en{an:hum, sex:male}[pr{p:hungry}]], \
         @arrows(1->2, 2->3)]",
    )
    .unwrap();
    assert!(!m_includes(&hungry.m, &MScript::plain(inst2), &ont, &b()).unwrap());
}

#[test]
fn m_unify_is_idempotent() {
    let ont = ont();
    for w in [demo::fred(&ont), demo::hungry(&ont), demo::shouts(&ont), demo::gives(&ont)] {
        let u = m_unify(&w.m, &w.m, &ont, &b()).unwrap();
        assert!(
            u.m.base.equivalent(&w.m.base, &ont).unwrap(),
            "{}: base changed:\n{}",
            w.surface,
            script_to_text(&u.m.base)
        );
        assert_eq!(u.m.links.len(), w.m.links.len(), "{}", w.surface);
        assert_eq!(u.m.trumps.len(), w.m.trumps.len(), "{}", w.surface);
    }
}

/// Understanding "hungry fred": apply fred to its sound, then hungry to
/// the sound + fred meaning. The final meaning is fred enriched with the
/// hungry property, and the SMS embeds both words.
#[test]
fn hungry_fred_builds_the_figure_sms() {
    let ont = ont();
    let fred = demo::fred(&ont);
    let hungry = demo::hungry(&ont);

    // f('fred') = F
    let fred_sound =
        parse_script("sr{}[se{des:sound, ph:fr}, se{des:sound, ph:ed}, @arrows(1->2)]").unwrap();
    let f = apply(&fred.m, &fred_sound, Direction::LeftToRight, &ont, &b()).unwrap();
    let fred_meaning = parse_script(
        "sr{}[se{des:entity}[en{an:hum, id:i1, num:sg, sex:male}]]",
    )
    .unwrap();
    assert!(
        f.branch.equivalent(&fred_meaning, &ont).unwrap(),
        "f('fred') = {}",
        script_to_text(&f.branch)
    );

    // h('hungry', F) = hungry-fred meaning.
    let args = parse_script(
        "sr{}[se{des:sound, ph:hun}, se{des:sound, ph:gry}, \
         se{des:entity}[en{an:hum, id:i1, num:sg, sex:male}], @arrows(1->2, 2->3)]",
    )
    .unwrap();
    let h = apply(&hungry.m, &args, Direction::LeftToRight, &ont, &b()).unwrap();
    let z4 = parse_script(
        "sr{}[se{des:entity}[en{an:hum, id:i1, num:sg, sex:male}[pr{p:hungry}]]]",
    )
    .unwrap();
    assert!(
        h.branch.equivalent(&z4, &ont).unwrap(),
        "Z[4] = {}",
        script_to_text(&h.branch)
    );
    // The SMS m-includes the applied word.
    assert!(m_includes(&h.sms, &hungry.m, &ont, &b()).unwrap());
}

#[test]
fn gives_applies_right_to_left_producing_three_arguments() {
    let ont = ont();
    let gives = demo::gives(&ont);
    // Full meaning: fred gives mummy the balloon.
    let meaning = parse_script(
        "sr{}[se{act:give, des:event, pol:certain, time:present}[\
           en{an:hum, id:i1, num:sg, role:agent, sex:male}, \
           en{an:hum, id:i2, num:sg, role:recipient, sex:female}, \
           en{an:inan, id:i4, num:sg, role:gift}, \
           se{act:own, des:event, time:future}[\
             en{id:i2, role:agent}, en{id:i4, role:patient}]]]",
    )
    .unwrap();
    let out = apply(&gives.m, &meaning, Direction::RightToLeft, &ont, &b()).unwrap();
    // The left branch carries three argument scenes and the sound chain.
    let scenes: Vec<_> = out.branch.node(Script::ROOT).children.to_vec();
    let arg_count = scenes
        .iter()
        .filter(|&&sc| {
            out.branch.node(sc).slots.get("des") == Some(&SlotValue::sym("entity"))
        })
        .count();
    let sound_count = scenes
        .iter()
        .filter(|&&sc| {
            out.branch.node(sc).slots.get("des") == Some(&SlotValue::sym("sound"))
        })
        .count();
    assert_eq!(arg_count, 3, "branch = {}", script_to_text(&out.branch));
    assert_eq!(sound_count, 3);
    // Arguments carry the meanings passed back along the links.
    let texts = script_to_text(&out.branch);
    assert!(texts.contains("id:i1"), "{texts}");
    assert!(texts.contains("id:i2"), "{texts}");
    assert!(texts.contains("id:i4"), "{texts}");
}

#[test]
fn apply_round_trips_on_one_link_words() {
    let ont = ont();
    let hungry = demo::hungry(&ont);
    let args = parse_script(
        "sr{}[se{des:sound, ph:hun}, se{des:sound, ph:gry}, \
         se{des:entity}[en{an:beast, id:i5, num:sg}], @arrows(1->2, 2->3)]",
    )
    .unwrap();
    let fwd = apply(&hungry.m, &args, Direction::LeftToRight, &ont, &b()).unwrap();
    let back = apply(&hungry.m, &fwd.branch, Direction::RightToLeft, &ont, &b()).unwrap();
    // The reconstructed left branch includes the original arguments.
    assert!(
        mscript::includes(&back.branch, &args, &ont, &b()).unwrap(),
        "back = {}",
        script_to_text(&back.branch)
    );
}

#[test]
fn m_intersect_strict_is_idempotent() {
    let ont = ont();
    for w in [demo::hungry(&ont), demo::gives(&ont)] {
        let q = m_intersect(&w.m, &w.m, IntersectMode::Strict, &ont, &b()).unwrap();
        assert!(q.m.base.equivalent(&w.m.base, &ont).unwrap(), "{}", w.surface);
        assert_eq!(q.m.links.len(), w.m.links.len(), "{}", w.surface);
    }
}

/// The shouts induction: two example SMS built from "fred shouts" and
/// "mummy shouts at fred" (partially understood), broad-m-intersected.
/// The result is the shouts m-script: shared sound, shared agent shape,
/// one discovered trump link, and the identity co-variation ace.
#[test]
fn broad_intersection_discovers_the_shouts_link() {
    let ont = ont();
    // H(t): heard "fred shouts", inferred the full meaning.
    let ht = parse_script(
        "sr{}[se{des:sound, ph:fr}, se{des:sound, ph:ed}, se{des:sound, ph:shouts}, \
         se{des:entity}[en{an:hum, id:i1, num:sg, sex:male}], \
         se{act:shout, des:event, pol:certain, time:present}[\
           en{an:hum, id:i1, num:sg, role:agent, sex:male}], \
         @arrows(1->2, 2->3, 4->3)]",
    )
    .unwrap();
    // H(u): heard "mummy shouts"; extra meaning noise on the right.
    let hu = parse_script(
        "sr{}[se{des:sound, ph:mu}, se{des:sound, ph:my}, se{des:sound, ph:shouts}, \
         se{des:entity}[en{an:hum, id:i2, num:sg, sex:female}], \
         se{act:shout, des:event, pol:certain, time:present}[\
           en{an:hum, id:i2, num:sg, role:agent, sex:female}, \
           en{an:beast, id:i5, role:topic}], \
         @arrows(1->2, 2->3, 4->3)]",
    )
    .unwrap();
    let q = m_intersect(
        &MScript::top_trumped(ht),
        &MScript::top_trumped(hu),
        IntersectMode::Broad,
        &ont,
        &b(),
    )
    .unwrap();
    let got = mscript_to_text(&q.m);
    // One discovered link, entity to entity.
    assert_eq!(q.m.links.len(), 1, "{got}");
    let (src, tgt) = *q.m.links.iter().next().unwrap();
    assert_eq!(q.m.base.node(src).kind, Entity, "{got}");
    assert_eq!(q.m.base.node(tgt).kind, Entity, "{got}");
    // The shared sound survives; the non-shared sounds are gone.
    let text = script_to_text(&q.m.base);
    assert!(text.contains("ph:shouts"), "{text}");
    assert!(!text.contains("ph:mu"), "{text}");
    // Identity co-variation became a shared ace across the two ends.
    let base = &q.m.base;
    let src_id = base.node(src).slots.get("id").cloned();
    let tgt_id = base.node(tgt).slots.get("id").cloned();
    assert!(matches!(src_id, Some(SlotValue::Ace(_))), "{text}");
    assert_eq!(src_id, tgt_id, "{text}");
    // And the result reproduces the generating word, up to renaming and
    // the learned-from-examples agent detail (sex varies, so it is gone).
    // The learned m-script includes the truth: it may carry extra detail
    // from only two examples, but never contradicts the generating word.
    let shouts = demo::shouts(&ont);
    assert!(m_includes(&q.m, &shouts.m, &ont, &b()).unwrap(), "learned includes truth\n{got}");
}

/// The red induction (figure shapes): examples pair the partially
/// understood "red <noun>" span with the meaning scene produced by
/// generating the rest of the sentence. One link from the argument entity
/// to the enriched entity.
#[test]
fn broad_intersection_learns_red() {
    let ont = ont();
    let ht = parse_script(
        "sr{}[se{des:sound, ph:re}, se{des:sound, ph:d}, \
         se{des:entity}[en{an:inan, id:i4, num:sg}], \
         se{des:entity}[en{an:inan, id:i4, num:sg}[pr{p:red}]], \
         @arrows(1->2, 2->3)]",
    )
    .unwrap();
    let hu = parse_script(
        "sr{}[se{des:sound, ph:re}, se{des:sound, ph:d}, \
         se{des:entity}[en{an:inan, id:i6, num:sg}[pr{p:small}]], \
         se{des:entity}[en{an:inan, id:i6, num:sg}[pr{p:small}, pr{p:red}]], \
         @arrows(1->2, 2->3)]",
    )
    .unwrap();
    let q = m_intersect(
        &MScript::top_trumped(ht),
        &MScript::top_trumped(hu),
        IntersectMode::Broad,
        &ont,
        &b(),
    )
    .unwrap();
    let got = mscript_to_text(&q.m);
    assert_eq!(q.m.links.len(), 1, "{got}");
    let (src, tgt) = *q.m.links.iter().next().unwrap();
    assert_eq!(q.m.base.node(src).kind, Entity);
    assert_eq!(q.m.base.node(tgt).kind, Entity);
    // The property node survives under the target.
    let tgt_has_red = q.m.base.node(tgt).children.iter().any(|&c| {
        q.m.base.node(c).kind == Property
            && q.m.base.node(c).slots.get("p") == Some(&SlotValue::sym("red"))
    });
    assert!(tgt_has_red, "{got}");
    let red = demo::red(&ont);
    assert!(m_includes(&q.m, &red.m, &ont, &b()).unwrap(), "{got}");
}

#[test]
fn m_algebra_absorption_on_words() {
    let ont = ont();
    let a = demo::hungry(&ont);
    let n = demo::red(&ont);
    let q = m_intersect(&a.m, &n.m, IntersectMode::Strict, &ont, &b()).unwrap();
    let back = m_unify(&a.m, &q.m, &ont, &b()).unwrap();
    assert!(
        back.m.base.equivalent(&a.m.base, &ont).unwrap(),
        "absorption: {}",
        script_to_text(&back.m.base)
    );
}

#[test]
fn m_intersect_commutes() {
    let ont = ont();
    let a = demo::shouts(&ont);
    let n = demo::went(&ont);
    let q1 = m_intersect(&a.m, &n.m, IntersectMode::Strict, &ont, &b()).unwrap();
    let q2 = m_intersect(&n.m, &a.m, IntersectMode::Strict, &ont, &b()).unwrap();
    assert!(q1.m.base.equivalent(&q2.m.base, &ont).unwrap());
    assert_eq!(q1.m.links.len(), q2.m.links.len());
}

/// Probability that a spurious link survives: random noise subtrees of
/// >= 10 bits rarely include one another, and the chance falls with the
/// number of examples.
#[test]
fn spurious_link_rate_is_bounded() {
    use rand::SeedableRng;
    let ont = ont();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let cfg = mscript::gen::GenConfig {
        max_nodes: 5,
        slot_prob: 0.95,
        ace_prob: 0.0,
        arrow_prob: 0.0,
    };
    let mut hits = 0u32;
    let trials = 1000;
    for _ in 0..trials {
        // Two independent entity subtrees with >= 10 bits each.
        let x = random_entity(&ont, &cfg, &mut rng);
        let y = random_entity(&ont, &cfg, &mut rng);
        if mscript::includes(&y, &x, &ont, &b()).unwrap() {
            hits += 1;
        }
    }
    // 2^-10 per trial gives an expectation of about one in 1000.
    assert!(hits <= 5, "spurious inclusion rate too high: {hits}/{trials}");
}

fn random_entity(
    _ont: &Ontology,
    cfg: &mscript::gen::GenConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Script {
    use rand::Rng;
    // An entity with all slots set plus a property child: ~10 bits.
    let mut bld = mscript::ScriptBuilder::root(Entity);
    let ids = ["i1", "i2", "i3", "i4", "i5", "i6", "i7", "i8"];
    let ans = ["hum", "beast", "inan"];
    let ps = ["hungry", "red", "big", "small", "broken", "loud", "soft", "furry"];
    bld.sym(0, "id", ids[rng.gen_range(0..ids.len())]);
    bld.sym(0, "an", ans[rng.gen_range(0..ans.len())]);
    bld.sym(0, "num", if rng.gen_bool(0.5) { "sg" } else { "pl" });
    bld.sym(0, "sex", if rng.gen_bool(0.5) { "male" } else { "female" });
    let pr = bld.node(0, Property);
    bld.sym(pr, "p", ps[rng.gen_range(0..ps.len())]);
    let _ = cfg;
    bld.build()
}

#[test]
fn apply_fails_cleanly_when_pattern_unmatched() {
    let ont = ont();
    let hungry = demo::hungry(&ont);
    let wrong = parse_script("sr{}[se{des:sound, ph:fr}]").unwrap();
    let err = match apply(&hungry.m, &wrong, Direction::LeftToRight, &ont, &b()) {
        Err(e) => e,
        Ok(_) => panic!("application must fail on an unmatched pattern"),
    };
    assert!(err.is_disjoint());
}
