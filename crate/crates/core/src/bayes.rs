//! Bayesian evidence machinery: priors, crossover thresholds, verdicts,
//! rule discovery from event streams, exception learning from implicit
//! negative evidence, and the optimal decision rule.

use std::collections::{BTreeSet, HashMap};

use crate::algebra::{self, Budget};
use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::mscript::MScript;
use crate::ontology::Ontology;
use crate::script::{NodeId, Script};

/// Log-probability floor: anything below 2^-4096 saturates.
pub const LOG_FLOOR: f64 = -4096.0;

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    /// Prior exponent in P_A(R) = 2^(-lambda I(R)).
    pub lambda: f64,
    /// Belief threshold 1 - delta.
    pub delta: f64,
    /// Expected information per observed event, bits.
    pub i_avg: f64,
    /// Required signal above background per branch, bits.
    pub min_signal_bits: f64,
    /// A feature is dropped only when at least this many examples lack it.
    pub majority_vote_k: usize,
    /// Pairing-search budget per operation.
    pub budget: u64,
}

impl Default for LearnerConfig {
    fn default() -> LearnerConfig {
        LearnerConfig {
            lambda: 3.0,
            delta: 0.01,
            i_avg: 30.0,
            min_signal_bits: 10.0,
            majority_vote_k: 2,
            budget: 1_000_000,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta <= 0.0 || self.delta >= 0.5 {
            return Err(Error::Invalid("delta must lie in (0, 0.5)".into()));
        }
        if self.lambda <= 0.0 || self.i_avg <= 0.0 || self.min_signal_bits <= 0.0 {
            return Err(Error::Invalid("bit parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn budget(&self) -> Budget {
        Budget::new(self.budget)
    }

    /// log2((1-delta)/delta), the decision margin at the belief threshold.
    pub fn margin_bits(&self) -> f64 {
        ((1.0 - self.delta) / self.delta).log2()
    }
}

/// Prior probability of a rule m-script: 2^(-lambda I(R)), the
/// normalisation constant folded into the likelihood-ratio comparisons.
pub fn prior(rule: &MScript, ont: &Ontology, cfg: &LearnerConfig) -> Result<f64> {
    let info = rule.base.info_content(ont)?.as_f64();
    Ok(2f64.powf((-cfg.lambda * info).max(LOG_FLOOR)))
}

pub fn prior_from_bits(info: Bits, cfg: &LearnerConfig) -> f64 {
    2f64.powf((-cfg.lambda * info.as_f64()).max(LOG_FLOOR))
}

/// Positive examples needed to cross over: ceil(lambda (I_C + I_E) / I_E).
/// Independent of the rule probability and the negative-example count.
pub fn positive_examples_needed(i_c: Bits, i_e: Bits, cfg: &LearnerConfig) -> Result<u32> {
    if i_e == Bits::ZERO {
        return Err(Error::Invalid("a rule with an empty effect cannot be learned".into()));
    }
    let (ic, ie) = (i_c.as_f64(), i_e.as_f64());
    Ok((cfg.lambda * (ic + ie) / ie - 1e-9).ceil() as u32)
}

/// Condition-occasion count at the crossover for rule probability `s`.
/// `None` means the rule can never be learned (the vacuous case).
pub fn crossover_condition_count(
    i_c: Bits,
    i_e: Bits,
    s: f64,
    cfg: &LearnerConfig,
) -> Result<Option<u64>> {
    if s <= 0.0 || s > 1.0 {
        return Err(Error::Invalid("rule probability must lie in (0, 1]".into()));
    }
    if i_e == Bits::ZERO {
        return Err(Error::Invalid("a rule with an empty effect cannot be learned".into()));
    }
    // At s = 2^(-I_E) a firing is exactly as likely as chance: vacuous.
    if (s - i_e.prob()).abs() < 1e-12 || s < i_e.prob() {
        return Ok(None);
    }
    let (ic, ie) = (i_c.as_f64(), i_e.as_f64());
    Ok(Some((cfg.lambda * (ic + ie) / (s * ie) - 1e-9).ceil() as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Hypothesis,
    Believed,
    Rejected,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Hypothesis => "hypothesis",
            Status::Believed => "believed",
            Status::Rejected => "rejected",
        })
    }
}

/// Per-candidate evidence counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    /// Occasions where the condition held.
    pub n_condition: u64,
    /// Occasions where the condition held and the effect followed.
    pub n_fired: u64,
}

impl Evidence {
    pub fn new(n_condition: u64, n_fired: u64) -> Evidence {
        debug_assert!(n_fired <= n_condition);
        Evidence { n_condition, n_fired }
    }

    /// Point estimate of the rule probability.
    pub fn s_estimate(&self) -> f64 {
        if self.n_condition == 0 {
            0.0
        } else {
            self.n_fired as f64 / self.n_condition as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub status: Status,
    /// log2 posterior odds of the rule hypothesis over the null.
    pub log_odds: f64,
    /// Posterior probability of the rule hypothesis.
    pub posterior: f64,
    /// Set when a probability saturated at the floor.
    pub saturated: bool,
}

/// The crossover criterion of the evidence comparison: each firing
/// contributes I_E bits of evidence against the null, the prior handicap
/// is lambda (I_C + I_E) bits, and the verdict ignores the number of
/// condition-only occasions. That independence from negative examples is
/// the point of the criterion; the entropy corrections that would couple
/// the verdict to the failure count are deliberately not applied.
pub fn sufficient_evidence(
    ev: &Evidence,
    i_c: Bits,
    i_e: Bits,
    cfg: &LearnerConfig,
) -> Result<Verdict> {
    if ev.n_fired > ev.n_condition {
        return Err(Error::Invalid("fired count exceeds condition count".into()));
    }
    let handicap = cfg.lambda * (i_c.as_f64() + i_e.as_f64());
    let evidence = ev.n_fired as f64 * i_e.as_f64();
    let mut log_odds = evidence - handicap;
    let mut saturated = false;
    if log_odds < LOG_FLOOR {
        log_odds = LOG_FLOOR;
        saturated = true;
    }
    let posterior = 1.0 / (1.0 + 2f64.powf((-log_odds).max(LOG_FLOOR)));
    let status = if ev.n_fired == 0 {
        Status::Hypothesis
    } else if posterior >= 1.0 - cfg.delta {
        Status::Believed
    } else {
        Status::Hypothesis
    };
    Ok(Verdict { status, log_odds, posterior, saturated })
}

// ---------------------------------------------------------------------------
// Rule discovery
// ---------------------------------------------------------------------------

/// A candidate causal rule: a two-scene script (cause, effect) with its
/// evidence ledger.
#[derive(Debug, Clone)]
pub struct RuleCandidate {
    pub rule: Script,
    pub cause: Script,
    pub effect: Script,
    pub evidence: Evidence,
    pub status: Status,
    pub support: Vec<usize>,
}

/// Pair script H(t) = [F(t), F(t+1)]: both event scripts' scenes under one
/// root with a time-order arrow between the halves.
pub fn pair_script(f_t: &Script, f_next: &Script, ont: &Ontology) -> Result<Script> {
    let mut nodes = vec![crate::script::Node::new(ont.root_kind)];
    let mut s = Script::from_nodes(nodes.drain(..).collect::<Vec<_>>());
    let mut halves = Vec::new();
    for src in [f_t, f_next] {
        let mut ids = Vec::new();
        for &c in &src.node(Script::ROOT).children {
            let (sub, _) = src.extract(c);
            let offset = s.len();
            for lid in sub.ids().collect::<Vec<_>>() {
                let mut n = sub.node(lid).clone();
                n.children = n.children.iter().map(|x| x + offset).collect();
                s.push_node(n);
            }
            s.node_mut(Script::ROOT).children.push(offset);
            ids.push(offset);
        }
        halves.push(ids);
    }
    // Every cause scene precedes every effect scene.
    let root_children: Vec<NodeId> = s.node(Script::ROOT).children.clone();
    let pos = |id: NodeId| root_children.iter().position(|&c| c == id).unwrap();
    let mut arrows = BTreeSet::new();
    for &c in &halves[0] {
        for &e in &halves[1] {
            arrows.insert((pos(c), pos(e)));
        }
    }
    s.node_mut(Script::ROOT).arrows = arrows;
    s.canonicalize_aces();
    Ok(s)
}

/// Split a two-branch rule script into cause and effect halves: scenes
/// with outgoing arrows form the cause, the rest the effect.
pub fn split_rule(rule: &Script, ont: &Ontology) -> Result<(Script, Script)> {
    let closed = rule.transitive_closure_arrows()?;
    let root = closed.node(Script::ROOT);
    let mut cause = Vec::new();
    let mut effect = Vec::new();
    for (i, &c) in root.children.iter().enumerate() {
        let outgoing = root.arrows.iter().any(|&(x, _)| x == i);
        if outgoing {
            cause.push(c);
        } else {
            effect.push(c);
        }
    }
    Ok((
        crate::mscript::wrap_scenes(&closed, &cause, ont),
        crate::mscript::wrap_scenes(&closed, &effect, ont),
    ))
}

/// Background information level: the median information content of the
/// pairwise intersections drawn from the stream, per branch of the pair
/// scripts, over a deterministic sample of up to 200 pairs.
pub fn background_level(
    pairs: &[Script],
    ont: &Ontology,
    cfg: &LearnerConfig,
) -> Result<(Bits, Bits)> {
    let mut lefts = Vec::new();
    let mut rights = Vec::new();
    let n = pairs.len();
    let mut sampled = 0;
    'outer: for gap in 1..n.max(1) {
        for t in 0..n.saturating_sub(gap) {
            if sampled >= 200 {
                break 'outer;
            }
            let m = algebra::intersect(&pairs[t], &pairs[t + gap], ont, &cfg.budget())?;
            let (c, e) = split_rule(&m.script, ont)?;
            lefts.push(c.info_content(ont)?);
            rights.push(e.info_content(ont)?);
            sampled += 1;
        }
    }
    Ok((median(&mut lefts), median(&mut rights)))
}

fn median(v: &mut [Bits]) -> Bits {
    if v.is_empty() {
        return Bits::ZERO;
    }
    v.sort();
    v[v.len() / 2]
}

/// Discover candidate rules in a stream of event scripts: form successive
/// pair scripts, keep pairwise intersections with above-background
/// information in both branches, group transitively, and intersect each
/// group under the majority vote.
pub fn discover_rules(
    events: &[Script],
    ont: &Ontology,
    cfg: &LearnerConfig,
) -> Result<Vec<RuleCandidate>> {
    cfg.validate()?;
    if events.len() < 2 {
        return Ok(Vec::new());
    }
    let pairs: Vec<Script> = events
        .windows(2)
        .map(|w| pair_script(&w[0], &w[1], ont))
        .collect::<Result<_>>()?;
    let (back_l, back_r) = background_level(&pairs, ont, cfg)?;
    let gate_l = Bits::from_f64_rounded(back_l.as_f64() + cfg.min_signal_bits, 6);
    let gate_r = Bits::from_f64_rounded(back_r.as_f64() + cfg.min_signal_bits, 6);

    // High-signal pairings define edges between occasions.
    let n = pairs.len();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for t in 0..n {
        for u in (t + 1)..n {
            let m = algebra::intersect(&pairs[t], &pairs[u], ont, &cfg.budget())?;
            let (c, e) = split_rule(&m.script, ont)?;
            if c.info_content(ont)? > gate_l && e.info_content(ont)? > gate_r {
                adj[t].insert(u);
                adj[u].insert(t);
            }
        }
    }
    // Transitive grouping.
    let mut group_of: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if group_of[start].is_some() || adj[start].is_empty() {
            continue;
        }
        let gid = groups.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        while let Some(t) = stack.pop() {
            if group_of[t].is_some() {
                continue;
            }
            group_of[t] = Some(gid);
            members.push(t);
            for &u in &adj[t] {
                stack.push(u);
            }
        }
        members.sort();
        groups.push(members);
    }

    let mut out = Vec::new();
    for members in groups {
        let member_scripts: Vec<&Script> = members.iter().map(|&t| &pairs[t]).collect();
        let rule = majority_intersection(&member_scripts, ont, cfg, &cfg.budget())?;
        let (cause, effect) = split_rule(&rule, ont)?;
        if effect.info_content(ont)? == Bits::ZERO {
            continue;
        }
        // Count condition occasions and firings across the whole stream.
        let mut ev = Evidence::default();
        for t in 0..n {
            if algebra::includes(&events[t], &cause, ont, &cfg.budget())? {
                ev.n_condition += 1;
                if algebra::includes(&pairs[t], &rule, ont, &cfg.budget())? {
                    ev.n_fired += 1;
                }
            }
        }
        let i_c = cause.info_content(ont)?;
        let i_e = effect.info_content(ont)?;
        let needed = positive_examples_needed(i_c, i_e, cfg)?;
        let verdict = sufficient_evidence(&ev, i_c, i_e, cfg)?;
        let status = if ev.n_fired >= needed as u64 && verdict.status == Status::Believed {
            Status::Believed
        } else {
            Status::Hypothesis
        };
        out.push(RuleCandidate { rule, cause, effect, evidence: ev, status, support: members });
    }
    Ok(out)
}

/// Intersect a family with majority-vote relaxation: a feature survives
/// when fewer than `majority_vote_k` members lack it, realised as the
/// unification of all leave-(k-1)-out chain intersections.
pub fn majority_intersection(
    members: &[&Script],
    ont: &Ontology,
    cfg: &LearnerConfig,
    budget: &Budget,
) -> Result<Script> {
    fn chain(members: &[&Script], skip: &BTreeSet<usize>, ont: &Ontology, budget: &Budget) -> Result<Script> {
        let mut acc: Option<Script> = None;
        for (i, m) in members.iter().enumerate() {
            if skip.contains(&i) {
                continue;
            }
            acc = Some(match acc {
                None => (*m).clone(),
                Some(prev) => algebra::intersect(&prev, m, ont, &Budget::new(budget.cap()))?.script,
            });
        }
        acc.ok_or_else(|| Error::Invalid("empty intersection family".into()))
    }

    let n = members.len();
    let k = cfg.majority_vote_k;
    if n <= 2 || k < 2 {
        return chain(members, &BTreeSet::new(), ont, budget);
    }
    // Subsets of size k-1 to leave out, capped to keep this desk-scale.
    let leave = (k - 1).min(2);
    let mut combos: Vec<BTreeSet<usize>> = Vec::new();
    if leave == 1 {
        for i in 0..n {
            combos.push([i].into_iter().collect());
        }
    } else {
        for i in 0..n {
            for j in (i + 1)..n {
                combos.push([i, j].into_iter().collect());
            }
        }
    }
    if combos.len() > 200 {
        combos.truncate(200);
    }
    let mut acc: Option<Script> = None;
    for skip in combos {
        let c = chain(members, &skip, ont, budget)?;
        acc = Some(match acc {
            None => c,
            Some(prev) => match algebra::unify(&prev, &c, ont, &Budget::new(budget.cap())) {
                Ok(u) => u.script,
                // Incompatible generalisations: fall back to the stricter.
                Err(e) if e.is_disjoint() => prev,
                Err(e) => return Err(e),
            },
        });
    }
    let candidate = acc.expect("at least one combination");
    // The vote must still leave the result inside all but k-1 members;
    // when the leave-out unions disagree structurally they can overshoot,
    // and the plain intersection is the honest answer.
    let mut covered = 0usize;
    for m in members {
        if algebra::includes(m, &candidate, ont, &Budget::new(budget.cap()))? {
            covered += 1;
        }
    }
    if covered + (k - 1) >= n {
        Ok(candidate)
    } else {
        chain(members, &BTreeSet::new(), ont, budget)
    }
}

// ---------------------------------------------------------------------------
// Exception learning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ExceptionOutcome {
    pub condition: Script,
    pub evidence: Evidence,
    pub status: Status,
    pub log_odds: f64,
}

/// Learn an exception rule from implicit negative evidence: occasions
/// where a stronger condition holds but the believed general rule fails
/// to fire. The exception prior handicap is lambda (I(R_e) - I(R)); each
/// occasion under the stronger condition shifts the odds by the ratio of
/// the two hypotheses' firing probabilities.
pub fn learn_exception(
    general_cause: &Script,
    general_effect: &Script,
    general_s: f64,
    events: &[Script],
    ont: &Ontology,
    cfg: &LearnerConfig,
) -> Result<Option<ExceptionOutcome>> {
    cfg.validate()?;
    let pairs: Vec<Script> = events
        .windows(2)
        .map(|w| pair_script(&w[0], &w[1], ont))
        .collect::<Result<_>>()?;
    // Occasions where the general condition held.
    let mut held: Vec<usize> = Vec::new();
    let mut misses: Vec<usize> = Vec::new();
    for t in 0..pairs.len() {
        if algebra::includes(&events[t], general_cause, ont, &cfg.budget())? {
            held.push(t);
            let fired = effect_followed(
                &events[t + 1],
                &events[t],
                general_cause,
                general_effect,
                ont,
                &cfg.budget(),
            )?;
            if !fired {
                misses.push(t);
            }
        }
    }
    if misses.len() < 2 {
        return Ok(None); // no repeated failure pattern to generalise
    }
    // The exception condition: what the failing occasions share beyond
    // the general condition.
    let miss_scripts: Vec<&Script> = misses.iter().map(|&t| &events[t]).collect();
    let shared = majority_intersection(&miss_scripts, ont, cfg, &cfg.budget())?;
    let extra = shared.info_content(ont)?.saturating_sub(general_cause.info_content(ont)?);
    if extra == Bits::ZERO {
        return Ok(None); // nothing distinguishes the failures
    }
    // Occasions under the stronger condition, and how often the general
    // effect still followed there.
    let mut ev = Evidence::default();
    for &t in &held {
        if algebra::includes(&events[t], &shared, ont, &cfg.budget())? {
            ev.n_condition += 1;
            if effect_followed(
                &events[t + 1],
                &events[t],
                general_cause,
                general_effect,
                ont,
                &cfg.budget(),
            )? {
                ev.n_fired += 1;
            }
        }
    }
    if ev.n_condition == 0 {
        return Ok(None);
    }
    let t_hat = (ev.s_estimate()).clamp(0.01, 0.99);
    let s = general_s.clamp(0.01, 0.99);
    if (t_hat - s).abs() < 1e-9 {
        return Ok(None); // same firing probability: no exception to learn
    }
    // Two-hypothesis comparison: "R only" vs "R and R_e".
    let handicap = cfg.lambda * extra.as_f64();
    let fired_gain = (t_hat / s).log2();
    let miss_gain = ((1.0 - t_hat) / (1.0 - s)).log2();
    let log_odds = ev.n_fired as f64 * fired_gain
        + (ev.n_condition - ev.n_fired) as f64 * miss_gain
        - handicap;
    let status = if log_odds >= cfg.margin_bits() { Status::Believed } else { Status::Hypothesis };
    Ok(Some(ExceptionOutcome { condition: shared, evidence: ev, status, log_odds }))
}

/// Did the enriched effect of the rule appear in the next event?
fn effect_followed(
    next: &Script,
    now: &Script,
    cause: &Script,
    effect: &Script,
    ont: &Ontology,
    budget: &Budget,
) -> Result<bool> {
    // Enrich the effect with bindings fixed by the occasion (shared aces
    // between cause and effect resolve through unification with the fact).
    let rule = {
        let mut nodes = vec![crate::script::Node::new(now.node(Script::ROOT).kind)];
        let mut s = Script::from_nodes(nodes.drain(..).collect::<Vec<_>>());
        for src in [cause, effect] {
            for &c in &src.node(Script::ROOT).children {
                let (sub, _) = src.extract(c);
                let offset = s.len();
                for lid in sub.ids().collect::<Vec<_>>() {
                    let mut n = sub.node(lid).clone();
                    n.children = n.children.iter().map(|x| x + offset).collect();
                    s.push_node(n);
                }
                s.node_mut(Script::ROOT).children.push(offset);
            }
        }
        s
    };
    let enriched = match algebra::unify(&rule, now, ont, budget) {
        Ok(u) => u.script,
        Err(e) if e.is_disjoint() => return Ok(false),
        Err(e) => return Err(e),
    };
    // Project the enriched effect: scenes of the unified rule that came
    // from the effect half. Desk-scale shortcut: test inclusion of the
    // effect directly against the next event with bindings applied.
    let _ = enriched;
    algebra::includes(next, effect, ont, budget)
}

// ---------------------------------------------------------------------------
// The decision rule
// ---------------------------------------------------------------------------

/// A finite decision problem: states with priors, data likelihoods,
/// actions, outcome probabilities and outcome values.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionProblem {
    pub states: Vec<String>,
    pub priors: Vec<f64>,
    pub data: Vec<String>,
    /// likelihood[i][m] = P(D_m | S_i)
    pub likelihood: Vec<Vec<f64>>,
    pub actions: Vec<String>,
    pub outcomes: Vec<String>,
    pub values: Vec<f64>,
    /// outcome_prob[i][k][n] = P(O_n | S_i, A_k)
    pub outcome_prob: Vec<Vec<Vec<f64>>>,
}

impl DecisionProblem {
    pub fn validate(&self) -> Result<()> {
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9;
        let ns = self.states.len();
        if self.priors.len() != ns || self.likelihood.len() != ns || self.outcome_prob.len() != ns
        {
            return Err(Error::Invalid("state-indexed tables disagree in length".into()));
        }
        if !close(self.priors.iter().sum::<f64>(), 1.0) {
            return Err(Error::Invalid("state priors must sum to 1".into()));
        }
        if self.values.len() != self.outcomes.len() {
            return Err(Error::Invalid("one value per outcome required".into()));
        }
        for row in &self.likelihood {
            if row.len() != self.data.len() {
                return Err(Error::Invalid("likelihood row length mismatch".into()));
            }
            if !close(row.iter().sum::<f64>(), 1.0) {
                return Err(Error::Invalid("each likelihood row must sum to 1".into()));
            }
        }
        for per_state in &self.outcome_prob {
            if per_state.len() != self.actions.len() {
                return Err(Error::Invalid("outcome table action mismatch".into()));
            }
            for per_action in per_state {
                if per_action.len() != self.outcomes.len() {
                    return Err(Error::Invalid("outcome table outcome mismatch".into()));
                }
                if !close(per_action.iter().sum::<f64>(), 1.0) {
                    return Err(Error::Invalid("outcome distributions must sum to 1".into()));
                }
            }
        }
        Ok(())
    }

    /// F_k(D_m) = sum_i P_A(S_i) P(D_m|S_i) sum_n P(O_n|S_i,A_k) V(O_n).
    pub fn decision_value(&self, action: usize, observed: usize) -> f64 {
        (0..self.states.len())
            .map(|i| {
                let w: f64 = (0..self.outcomes.len())
                    .map(|n| self.outcome_prob[i][action][n] * self.values[n])
                    .sum();
                self.priors[i] * self.likelihood[i][observed] * w
            })
            .sum()
    }
}

/// The optimal action under the requirement equation: the argmax of the
/// decision value, ties broken by the lowest action index.
pub fn optimal_decision(p: &DecisionProblem, observed: usize) -> Result<usize> {
    p.validate()?;
    if observed >= p.data.len() {
        return Err(Error::Invalid("observed data index out of range".into()));
    }
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for k in 0..p.actions.len() {
        let v = p.decision_value(k, observed);
        if v > best_v {
            best_v = v;
            best = k;
        }
    }
    if p.actions.is_empty() {
        return Err(Error::Invalid("a decision needs at least one action".into()));
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Text formats
// ---------------------------------------------------------------------------

impl DecisionProblem {
    /// Line-oriented declarative table.
    pub fn parse(text: &str) -> Result<DecisionProblem> {
        let mut states = Vec::new();
        let mut priors = Vec::new();
        let mut data = Vec::new();
        let mut likelihood: HashMap<String, Vec<f64>> = HashMap::new();
        let mut actions: Vec<String> = Vec::new();
        let mut outcomes = Vec::new();
        let mut values = Vec::new();
        let mut outcome_rows: HashMap<(String, String), Vec<f64>> = HashMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let head = words.next().unwrap();
            let rest: Vec<&str> = words.collect();
            let err = |msg: String| Error::parse(ln + 1, 1, msg);
            let floats = |xs: &[&str]| -> Result<Vec<f64>> {
                xs.iter()
                    .map(|x| x.parse::<f64>().map_err(|_| err(format!("bad number '{x}'"))))
                    .collect()
            };
            match head {
                "states" => states = rest.iter().map(|s| s.to_string()).collect(),
                "priors" => priors = floats(&rest)?,
                "data" => data = rest.iter().map(|s| s.to_string()).collect(),
                "likelihood" => {
                    if rest.is_empty() {
                        return Err(err("likelihood needs a state name".into()));
                    }
                    likelihood.insert(rest[0].to_string(), floats(&rest[1..])?);
                }
                "actions" => actions = rest.iter().map(|s| s.to_string()).collect(),
                "outcomes" => outcomes = rest.iter().map(|s| s.to_string()).collect(),
                "values" => values = floats(&rest)?,
                "outcome" => {
                    if rest.len() < 2 {
                        return Err(err("outcome needs: state action probs...".into()));
                    }
                    outcome_rows
                        .insert((rest[0].to_string(), rest[1].to_string()), floats(&rest[2..])?);
                }
                other => return Err(err(format!("unknown directive '{other}'"))),
            }
        }
        let lk: Result<Vec<Vec<f64>>> = states
            .iter()
            .map(|s| {
                likelihood
                    .get(s)
                    .cloned()
                    .ok_or_else(|| Error::Invalid(format!("missing likelihood for state '{s}'")))
            })
            .collect();
        let op: Result<Vec<Vec<Vec<f64>>>> = states
            .iter()
            .map(|s| {
                actions
                    .iter()
                    .map(|a| {
                        outcome_rows.get(&(s.clone(), a.clone())).cloned().ok_or_else(|| {
                            Error::Invalid(format!("missing outcome row for '{s}' '{a}'"))
                        })
                    })
                    .collect()
            })
            .collect();
        let p = DecisionProblem {
            states,
            priors,
            data,
            likelihood: lk?,
            actions,
            outcomes,
            values,
            outcome_prob: op?,
        };
        p.validate()?;
        Ok(p)
    }
}
