//! Hand-built cases for the four script operations.

use mscript::algebra::{includes, intersect, subtract, unify, Budget};
use mscript::gen::law_ontology;
use mscript::ontology::NodeKind::{Entity, Property, Scene, Script as Sr};
use mscript::script::ScriptBuilder;
use mscript::text::{parse_script, script_to_text};
use mscript::{Bits, Script};

fn b() -> Budget {
    Budget::default()
}

#[test]
fn includes_is_reflexive() {
    let ont = law_ontology();
    let s = parse_script("sr{}[se{des:event}[en{sex:male}, pr{} ]]").unwrap();
    assert!(includes(&s, &s, &ont, &b()).unwrap());
}

#[test]
fn includes_constant_matches_ace_pattern() {
    let ont = law_ontology();
    // "I bite Caesar" matches the rule condition "I bite ?X".
    let fact = parse_script(
        "sr{}[se{des:event}[en{id:i1}, pr{p:big}, en{id:i2}]]",
    )
    .unwrap();
    let pattern = parse_script(
        "sr{}[se{des:event}[en{id:i1}, en{id:?X}]]",
    )
    .unwrap();
    assert!(includes(&fact, &pattern, &ont, &b()).unwrap());
    assert!(!includes(&pattern, &fact, &ont, &b()).unwrap());
}

#[test]
fn includes_repeated_ace_needs_one_consistent_value() {
    let ont = law_ontology();
    let same = parse_script("sr{}[se{}[en{id:i1}, en{id:i1}]]").unwrap();
    let diff = parse_script("sr{}[se{}[en{id:i1}, en{id:i2}]]").unwrap();
    let pattern = parse_script("sr{}[se{}[en{id:?A}, en{id:?A}]]").unwrap();
    assert!(includes(&same, &pattern, &ont, &b()).unwrap());
    assert!(!includes(&diff, &pattern, &ont, &b()).unwrap());
}

#[test]
fn includes_honours_arrow_order() {
    let ont = law_ontology();
    let fwd = parse_script("sr{}[se{des:event}, se{des:entity}, @arrows(1->2)]").unwrap();
    let pat_fwd = parse_script("sr{}[se{des:event}, se{des:entity}, @arrows(1->2)]").unwrap();
    let pat_rev = parse_script("sr{}[se{des:event}, se{des:entity}, @arrows(2->1)]").unwrap();
    assert!(includes(&fwd, &pat_fwd, &ont, &b()).unwrap());
    assert!(!includes(&fwd, &pat_rev, &ont, &b()).unwrap());
}

#[test]
fn includes_uses_transitive_arrows() {
    let ont = law_ontology();
    let chain =
        parse_script("sr{}[se{pol:yes}, se{pol:no}, se{des:event}, @arrows(1->2, 2->3)]").unwrap();
    let pat = parse_script("sr{}[se{pol:yes}, se{des:event}, @arrows(1->2)]").unwrap();
    assert!(includes(&chain, &pat, &ont, &b()).unwrap());
}

#[test]
fn unify_is_idempotent() {
    let ont = law_ontology();
    let s = parse_script("sr{}[se{des:event}[en{sex:male, id:?A}, en{id:?A}]]").unwrap();
    let u = unify(&s, &s, &ont, &b()).unwrap();
    assert!(u.script.equivalent(&s, &ont).unwrap());
}

#[test]
fn unify_contradictory_constants_fails() {
    let ont = law_ontology();
    // The roots themselves must pair, so the conflict cannot be dodged.
    let a = parse_script("en{sex:male}").unwrap();
    let c = parse_script("en{sex:female}").unwrap();
    let err = unify(&a, &c, &ont, &b()).unwrap_err();
    assert!(err.is_disjoint());
    // Below the root the same conflict is legal: the entities stay separate
    // and the scopes overlap on situations containing both.
    let a2 = parse_script("sr{}[se{}[en{sex:male}]]").unwrap();
    let c2 = parse_script("sr{}[se{}[en{sex:female}]]").unwrap();
    let u = unify(&a2, &c2, &ont, &b()).unwrap().script;
    assert!(includes(&u, &a2, &ont, &b()).unwrap());
    assert!(includes(&u, &c2, &ont, &b()).unwrap());
}

#[test]
fn unify_ace_resolves_to_constant() {
    let ont = law_ontology();
    let a = parse_script("sr{}[se{}[en{id:?A}, en{id:?A}]]").unwrap();
    let c = parse_script("sr{}[se{}[en{id:i3}]]").unwrap();
    let u = unify(&a, &c, &ont, &b()).unwrap().script;
    // The constant propagates to every occurrence of the ace.
    let expect = parse_script("sr{}[se{}[en{id:i3}, en{id:i3}]]").unwrap();
    assert!(u.equivalent(&expect, &ont).unwrap());
}

#[test]
fn unify_class_values_take_subclass() {
    let ont = law_ontology();
    let a = parse_script("sr{}[se{}[en{cls:animal}]]").unwrap();
    let c = parse_script("sr{}[se{}[en{cls:cat}]]").unwrap();
    let u = unify(&a, &c, &ont, &b()).unwrap().script;
    let expect = parse_script("sr{}[se{}[en{cls:cat}]]").unwrap();
    assert!(u.equivalent(&expect, &ont).unwrap());
    // Unrelated classes conflict where the pairing is forced.
    let cat = parse_script("en{cls:cat}").unwrap();
    let dog = parse_script("en{cls:dog}").unwrap();
    assert!(unify(&cat, &dog, &ont, &b()).unwrap_err().is_disjoint());
}

#[test]
fn unify_keeps_unpaired_structure_of_both() {
    let ont = law_ontology();
    let a = parse_script("sr{}[se{des:event}[en{sex:male}]]").unwrap();
    let c = parse_script("sr{}[se{des:event}[pr{p:red}]]").unwrap();
    let u = unify(&a, &c, &ont, &b()).unwrap().script;
    assert!(includes(&u, &a, &ont, &b()).unwrap());
    assert!(includes(&u, &c, &ont, &b()).unwrap());
    // One scene, two children.
    assert_eq!(u.node(0).children.len(), 1);
}

#[test]
fn unify_reversed_arrows_never_pair_into_a_cycle() {
    let ont = law_ontology();
    let a = parse_script("sr{}[se{pol:yes}, se{pol:no}, @arrows(1->2)]").unwrap();
    let c = parse_script("sr{}[se{pol:yes}, se{pol:no}, @arrows(2->1)]").unwrap();
    // The scopes still overlap (on situations with extra scenes), so the
    // unification exists, but it cannot merge both scene pairs.
    let u = unify(&a, &c, &ont, &b()).unwrap().script;
    assert!(includes(&u, &a, &ont, &b()).unwrap());
    assert!(includes(&u, &c, &ont, &b()).unwrap());
    assert!(u.node(0).children.len() >= 3);
    u.transitive_closure_arrows().expect("result arrows stay acyclic");
}

#[test]
fn intersect_is_idempotent() {
    let ont = law_ontology();
    let s = parse_script("sr{}[se{des:event}[en{sex:male, id:?A}, en{id:?A}]]").unwrap();
    let d = intersect(&s, &s, &ont, &b()).unwrap().script;
    assert!(d.equivalent(&s, &ont).unwrap());
}

#[test]
fn intersect_keeps_only_shared_information() {
    let ont = law_ontology();
    let a = parse_script("sr{}[se{des:event, pol:yes}[en{sex:male}]]").unwrap();
    let c = parse_script("sr{}[se{des:event, pol:no}[en{sex:male}, pr{p:red}]]").unwrap();
    let d = intersect(&a, &c, &ont, &b()).unwrap().script;
    let expect = parse_script("sr{}[se{des:event}[en{sex:male}]]").unwrap();
    assert!(d.equivalent(&expect, &ont).unwrap());
    assert!(includes(&a, &d, &ont, &b()).unwrap());
    assert!(includes(&c, &d, &ont, &b()).unwrap());
}

#[test]
fn intersect_discovers_shared_variables() {
    let ont = law_ontology();
    // Same repeated identity on both sides, but with different values:
    // the co-variation survives as a shared ace.
    let a = parse_script("sr{}[se{}[en{id:i1, sex:male}], se{}[en{id:i1}]]").unwrap();
    let c = parse_script("sr{}[se{}[en{id:i2, sex:male}], se{}[en{id:i2}]]").unwrap();
    let d = intersect(&a, &c, &ont, &b()).unwrap().script;
    let expect = parse_script("sr{}[se{}[en{id:?A, sex:male}], se{}[en{id:?A}]]").unwrap();
    assert!(d.equivalent(&expect, &ont).unwrap());
}

#[test]
fn intersect_drops_one_sided_arrow_and_single_aces() {
    let ont = law_ontology();
    let a = parse_script("sr{}[se{pol:yes}[en{id:i1}], se{pol:no}, @arrows(1->2)]").unwrap();
    let c = parse_script("sr{}[se{pol:yes}[en{id:i2}], se{pol:no}]").unwrap();
    let d = intersect(&a, &c, &ont, &b()).unwrap().script;
    // Arrow present only in a: dropped. id conflict occurs once: dropped,
    // and the emptied entity leaf goes with it.
    let expect = parse_script("sr{}[se{pol:yes}, se{pol:no}]").unwrap();
    assert!(d.equivalent(&expect, &ont).unwrap());
}

#[test]
fn intersect_class_values_take_common_ancestor() {
    let ont = law_ontology();
    let a = parse_script("sr{}[se{}[en{cls:cat}]]").unwrap();
    let c = parse_script("sr{}[se{}[en{cls:dog}]]").unwrap();
    let d = intersect(&a, &c, &ont, &b()).unwrap().script;
    let expect = parse_script("sr{}[se{}[en{cls:animal}]]").unwrap();
    assert!(d.equivalent(&expect, &ont).unwrap());
    // Ancestor at the hierarchy root drops the slot, and the emptied
    // nodes evaporate with it.
    let e = parse_script("sr{}[se{}[en{cls:artifact}]]").unwrap();
    let d2 = intersect(&a, &e, &ont, &b()).unwrap().script;
    let expect2 = parse_script("sr{}").unwrap();
    assert!(d2.equivalent(&expect2, &ont).unwrap());
}

#[test]
fn subtract_self_gives_empty_root() {
    let ont = law_ontology();
    let s = parse_script("sr{}[se{des:event}[en{sex:male}]]").unwrap();
    let e = subtract(&s, &s, &ont, &b()).unwrap();
    assert_eq!(e.info_content(&ont).unwrap(), Bits::ZERO);
}

#[test]
fn subtract_empty_root_gives_original() {
    let ont = law_ontology();
    let s = parse_script("sr{}[se{des:event}[en{sex:male}]]").unwrap();
    let empty = Script::leaf(Sr);
    let e = subtract(&s, &empty, &ont, &b()).unwrap();
    assert!(e.equivalent(&s, &ont).unwrap());
}

#[test]
fn subtract_fails_without_inclusion() {
    let ont = law_ontology();
    let s = parse_script("sr{}[se{}[en{sex:male}]]").unwrap();
    let t = parse_script("sr{}[se{}[en{sex:female}]]").unwrap();
    assert!(subtract(&s, &t, &ont, &b()).unwrap_err().is_disjoint());
}

#[test]
fn subtract_then_unify_round_trips() {
    let ont = law_ontology();
    let a = parse_script("sr{}[se{des:event}[en{sex:male}]]").unwrap();
    let full =
        parse_script("sr{}[se{des:event, pol:yes}[en{sex:male, id:i1}, pr{p:red}], se{pol:no}]")
            .unwrap();
    let e = subtract(&full, &a, &ont, &b()).unwrap();
    let back = unify(&e, &a, &ont, &b()).unwrap().script;
    assert!(
        back.equivalent(&full, &ont).unwrap(),
        "subtract/unify failed to round-trip:\n e = {}\n back = {}\n full = {}",
        script_to_text(&e),
        script_to_text(&back),
        script_to_text(&full),
    );
}

#[test]
fn figure_two_intersection_shape() {
    let ont = law_ontology();
    // Two two-scene scripts. Only the first has a time-order arrow. Both
    // carry pol:yes, but at different positions. Both repeat an identity
    // value across their two scenes, with different constants.
    let a = parse_script(
        "sr{}[se{des:event, pol:yes}[en{id:i1, sex:male}], se{des:event}[en{id:i1}, pr{p:red}], @arrows(1->2)]",
    )
    .unwrap();
    let b_ = parse_script(
        "sr{}[se{des:event}[en{id:i2, sex:male}], se{des:event, pol:yes}[en{id:i2}, en{sex:female}]]",
    )
    .unwrap();
    let d = intersect(&a, &b_, &ont, &b()).unwrap().script;
    // Shared nodes survive; the arrow is gone; the mispositioned pol:yes is
    // gone; the repeated ids become one shared ace.
    let expect = parse_script(
        "sr{}[se{des:event}[en{id:?A, sex:male}], se{des:event}[en{id:?A}]]",
    )
    .unwrap();
    assert!(
        d.equivalent(&expect, &ont).unwrap(),
        "got {}",
        script_to_text(&d)
    );
}

#[test]
fn budget_breach_is_reported() {
    let ont = law_ontology();
    let mut bld = ScriptBuilder::root(Sr);
    let mut bld2 = ScriptBuilder::root(Sr);
    for _ in 0..8 {
        let s1 = bld.node(0, Scene);
        let e1 = bld.node(s1, Entity);
        let p1 = bld.node(e1, Property);
        bld.sym(p1, "p", "red");
        let s2 = bld2.node(0, Scene);
        let e2 = bld2.node(s2, Entity);
        let p2 = bld2.node(e2, Property);
        bld2.sym(p2, "p", "red");
    }
    let a = bld.build();
    let c = bld2.build();
    let tiny = Budget::new(50);
    let err = intersect(&a, &c, &ont, &tiny).unwrap_err();
    assert!(err.is_budget());
}
