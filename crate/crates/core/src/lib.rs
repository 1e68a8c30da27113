//! Scripts, m-scripts and a Bayesian lexicon learner.
//!
//! A script is a rooted tree of typed nodes carrying slot:value payloads,
//! variable values (aces) and time-order arrows; it denotes a set of
//! situations. An m-script adds trump nodes and trump links, turning the
//! structure into a partial, reversible, unbounded function from scripts to
//! scripts. Word m-scripts form a fully lexicalised unification grammar:
//! the same m-unification run left-to-right understands a phoneme stream
//! and run right-to-left generates one. Word m-scripts are learned from
//! noisy sentence-meaning pairs by broad m-intersection under a Bayesian
//! evidence criterion, and the whole lexicon can be bootstrapped from zero
//! vocabulary.

pub mod algebra;
pub mod bayes;
pub mod bits;
pub mod demo;
pub mod engine;
pub mod error;
pub mod gen;
pub mod learn;
pub mod lexicon;
pub mod mscript;
pub mod ontology;
pub mod script;
pub mod text;
pub mod verify;

pub use algebra::{includes, intersect, subtract, unify, Budget};
pub use bits::Bits;
pub use error::{Error, Result};
pub use mscript::{m_includes, m_intersect, m_unify, Direction, IntersectMode, MScript};
pub use ontology::{NodeKind, Ontology};
pub use script::{Script, ScriptBuilder, SlotValue};
