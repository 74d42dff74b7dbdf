//! Bounded behavioral-equivalence games: strong and weak bisimulation and
//! the expansion preorder, with distinguishing-witness extraction.
//!
//! The checker plays an on-the-fly attacker/defender game over canonical
//! states. Pairs are memoized, and a pair reached again while still under
//! exploration is assumed equivalent (the usual coinductive discharge),
//! which is sound here because verdicts only ever claim indistinguishability
//! up to the budget. A `Distinguished` verdict, by contrast, never rests on
//! an assumption: its witness replays move by move.
//!
//! Verdicts are deterministic: state enumeration uses ordered maps and the
//! deterministic name supply throughout, so repeated runs agree.

use crate::lts::{
    cached_steps, tau_closure, transitions, weak_transitions, ActionPattern, NameSupply, StepCache,
};
use crate::pii::{
    canonical_key, rename, sort_check, struct_normalize_opts, Action, ConstEnv, Name, PiError,
    Process,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

/// Resource bounds for one equivalence check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Maximum number of attacker moves along any play, internal moves
    /// included.
    pub depth: usize,
    /// Internal steps a defender may absorb inside one weak answer.
    pub tau_budget: usize,
    /// Maximum number of distinct canonical states explored; overflowing
    /// yields `Inconclusive`, never a wrong verdict.
    pub state_cap: usize,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget {
            depth: 3,
            tau_budget: 16,
            state_cap: 20_000,
        }
    }
}

impl Budget {
    pub fn with_depth(self, depth: usize) -> Budget {
        Budget { depth, ..self }
    }

    pub fn with_tau(self, tau_budget: usize) -> Budget {
        Budget { tau_budget, ..self }
    }

    pub fn with_cap(self, state_cap: usize) -> Budget {
        Budget { state_cap, ..self }
    }
}

/// Which process the attacker moved in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// A winning attacker strategy, replayable against the original pair.
///
/// The attacker (on `side`) plays `action`, reaching `derivative`; every
/// defender answer is listed in `replies` together with the sub-witness
/// refuting it. An empty reply list means the defender had no answer at
/// all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub side: Side,
    pub action: Action,
    pub derivative: Process,
    pub replies: Vec<(Process, Witness)>,
}

impl Witness {
    /// Number of attacker moves along the deepest play in the strategy.
    pub fn depth(&self) -> usize {
        1 + self
            .replies
            .iter()
            .map(|(_, w)| w.depth())
            .max()
            .unwrap_or(0)
    }
}

/// Outcome of a bounded check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    /// The attacker wins: the two processes are NOT equivalent. Sound and
    /// checkable by replay.
    Distinguished { witness: Witness },
    /// The defender survived every play within the budget. Evidence only;
    /// no claim beyond the budget.
    IndistinguishableUpTo { budget: Budget },
    /// The check could not be completed (state cap, ill-sorted input,
    /// unguarded constants).
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn is_distinguished(&self) -> bool {
        matches!(self, Verdict::Distinguished { .. })
    }

    pub fn is_indistinguishable(&self) -> bool {
        matches!(self, Verdict::IndistinguishableUpTo { .. })
    }

    /// Conventional exit code: 0 indistinguishable, 1 distinguished,
    /// 2 inconclusive.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::IndistinguishableUpTo { .. } => 0,
            Verdict::Distinguished { .. } => 1,
            Verdict::Inconclusive { .. } => 2,
        }
    }
}

/// Which game is being played.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameMode {
    /// Every move answered by exactly one strong transition with the same
    /// action.
    Strong,
    /// Moves answered weakly, with the hat convention for internal moves.
    Weak,
    /// Asymmetric: the left process's moves are answered weakly by the
    /// right (an internal move needs at least one internal step), while the
    /// right's moves are answered by the left with at most one step.
    /// Indistinguishable means "left is expanded by right".
    Expansion,
}

/// Bounded strong bisimulation check.
pub fn strong_bisim_bounded(p: &Process, q: &Process, env: &ConstEnv, b: Budget) -> Verdict {
    run_game(GameMode::Strong, p, q, env, b, true)
}

/// Strong bisimulation with the normalizer's garbage-collection rewrite
/// switched off; used to validate that rewrite independently.
pub fn strong_bisim_bounded_opts(
    p: &Process,
    q: &Process,
    env: &ConstEnv,
    b: Budget,
    enable_gc: bool,
) -> Verdict {
    run_game(GameMode::Strong, p, q, env, b, enable_gc)
}

/// Bounded weak bisimulation check.
pub fn weak_bisim_bounded(p: &Process, q: &Process, env: &ConstEnv, b: Budget) -> Verdict {
    run_game(GameMode::Weak, p, q, env, b, true)
}

/// Bounded expansion check: indistinguishable means `q` expands `p`
/// (informally, `q` reaches everything `p` does, spending at least as many
/// internal steps).
pub fn expansion_bounded(p: &Process, q: &Process, env: &ConstEnv, b: Budget) -> Verdict {
    run_game(GameMode::Expansion, p, q, env, b, true)
}

fn run_game(
    mode: GameMode,
    p: &Process,
    q: &Process,
    env: &ConstEnv,
    budget: Budget,
    enable_gc: bool,
) -> Verdict {
    for (label, side) in [("left", p), ("right", q)] {
        if let Err(e) = sort_check(side, env) {
            return Verdict::Inconclusive {
                reason: format!("{label} process is ill-sorted: {e}"),
            };
        }
    }
    let mut game = Game {
        env,
        mode,
        budget,
        enable_gc,
        memo: BTreeMap::new(),
        in_progress: BTreeSet::new(),
        states_seen: BTreeSet::new(),
        overflow: false,
        cache: StepCache::new(),
        attacks: BTreeMap::new(),
        answers: BTreeMap::new(),
    };
    let pc = struct_normalize_opts(p, env, enable_gc);
    let qc = struct_normalize_opts(q, env, enable_gc);
    match game.check(&pc, &qc, budget.depth) {
        Err(e) => Verdict::Inconclusive {
            reason: e.to_string(),
        },
        Ok(Some(witness)) => Verdict::Distinguished { witness },
        Ok(None) => {
            if game.overflow {
                Verdict::Inconclusive {
                    reason: format!(
                        "state cap of {} distinct states exceeded",
                        budget.state_cap
                    ),
                }
            } else {
                Verdict::IndistinguishableUpTo { budget }
            }
        }
    }
}

struct PairInfo {
    /// Largest depth at which the defender is known to survive.
    survives_to: usize,
    /// Smallest depth at which a refutation is known, with its witness.
    refuted: Option<(usize, Witness)>,
}

struct Game<'a> {
    env: &'a ConstEnv,
    mode: GameMode,
    budget: Budget,
    enable_gc: bool,
    memo: BTreeMap<(String, String), PairInfo>,
    in_progress: BTreeSet<(String, String)>,
    states_seen: BTreeSet<String>,
    overflow: bool,
    cache: StepCache,
    /// Attacker moves per state, with bound names held as positional
    /// placeholders and instantiated per opponent.
    attacks: BTreeMap<String, Rc<Vec<(Action, Process)>>>,
    /// Defender answer sets per (defender state, attacking side, action).
    answers: BTreeMap<(String, Side, String), Rc<Vec<Process>>>,
}

impl Game<'_> {
    /// `Ok(Some(w))`: attacker wins within `depth` moves. `Ok(None)`: the
    /// defender survives (or exploration was cut off, recorded in
    /// `self.overflow`).
    fn check(&mut self, p: &Process, q: &Process, depth: usize) -> Result<Option<Witness>, PiError> {
        if depth == 0 {
            return Ok(None);
        }
        // States handed to `check` are already in normal form (run_game and
        // attack_round normalize before recursing), so their debug rendering
        // is the canonical key; re-normalizing here would repeat that work.
        let kp = format!("{p:?}");
        let kq = format!("{q:?}");
        self.states_seen.insert(kp.clone());
        self.states_seen.insert(kq.clone());
        if self.states_seen.len() > self.budget.state_cap {
            self.overflow = true;
            return Ok(None);
        }
        let key = (kp, kq);
        if let Some(info) = self.memo.get(&key) {
            if info.survives_to >= depth {
                return Ok(None);
            }
            if let Some((d, w)) = &info.refuted {
                if *d <= depth {
                    return Ok(Some(w.clone()));
                }
            }
        }
        if self.in_progress.contains(&key) {
            // Coinductive discharge: the pair is already under exploration
            // on this play; assume it equivalent for the remainder.
            return Ok(None);
        }
        self.in_progress.insert(key.clone());
        let result = self.attack_round(p, q, depth);
        self.in_progress.remove(&key);
        let result = result?;
        let info = self.memo.entry(key).or_insert(PairInfo {
            survives_to: 0,
            refuted: None,
        });
        match &result {
            None => {
                // Only a completed round counts as survival evidence.
                if !self.overflow && info.survives_to < depth {
                    info.survives_to = depth;
                }
            }
            Some(w) => {
                if info.refuted.as_ref().is_none_or(|(d, _)| *d > depth) {
                    info.refuted = Some((depth, w.clone()));
                }
            }
        }
        Ok(result)
    }

    fn attack_round(
        &mut self,
        p: &Process,
        q: &Process,
        depth: usize,
    ) -> Result<Option<Witness>, PiError> {
        for side in [Side::Left, Side::Right] {
            let (attacker, defender) = match side {
                Side::Left => (p, q),
                Side::Right => (q, p),
            };
            let moves = self.cached_attacker_moves(attacker, defender)?;
            for (act, deriv) in moves {
                let akey = (format!("{defender:?}"), side, format!("{act:?}"));
                let answers = match self.answers.get(&akey) {
                    Some(hit) => hit.clone(),
                    None => {
                        let fresh = Rc::new(defender_answers(
                            self.mode,
                            side,
                            defender,
                            &act,
                            self.env,
                            self.budget.tau_budget,
                            self.enable_gc,
                            &mut self.cache,
                        )?);
                        self.answers.insert(akey, fresh.clone());
                        fresh
                    }
                };
                let deriv_canon = struct_normalize_opts(&deriv, self.env, self.enable_gc);
                let mut refuted_replies = Vec::new();
                let mut attack_works = true;
                for answer in answers.iter() {
                    let (np, nq) = match side {
                        Side::Left => (&deriv_canon, answer),
                        Side::Right => (answer, &deriv_canon),
                    };
                    match self.check(np, nq, depth - 1)? {
                        Some(w) => refuted_replies.push((answer.clone(), w)),
                        None => {
                            attack_works = false;
                            break;
                        }
                    }
                }
                if attack_works {
                    return Ok(Some(Witness {
                        side,
                        action: act,
                        derivative: deriv_canon,
                        replies: refuted_replies,
                    }));
                }
            }
        }
        Ok(None)
    }

    /// Attacker moves with memoization. The expensive transition computation
    /// runs once per attacker state, with bound names rebased to positional
    /// placeholders; each call instantiates them with names fresh for both
    /// sides, one canonical vector per action arity, so identical attacks
    /// from different contexts land on identical names and memo keys.
    fn cached_attacker_moves(
        &mut self,
        attacker: &Process,
        defender: &Process,
    ) -> Result<Vec<(Action, Process)>, PiError> {
        let akey = format!("{attacker:?}");
        let cached = if let Some(hit) = self.attacks.get(&akey) {
            hit.clone()
        } else {
            let mut supply = NameSupply::for_exploration(&[attacker], self.env);
            let raw = transitions(attacker, self.env, &mut supply)?;
            let rebased: Vec<(Action, Process)> = raw
                .into_iter()
                .map(|(act, deriv)| {
                    let map: BTreeMap<Name, Name> = act
                        .bound_names()
                        .iter()
                        .enumerate()
                        .map(|(i, n)| {
                            (
                                n.clone(),
                                Name {
                                    id: format!("#b{i}"),
                                    sort: n.sort,
                                },
                            )
                        })
                        .collect();
                    (act.rename_bounds(&map), rename(&deriv, &map))
                })
                .collect();
            let rc = Rc::new(rebased);
            self.attacks.insert(akey, rc.clone());
            rc
        };
        let mut supply = NameSupply::for_exploration(&[attacker, defender], self.env);
        let mut per_shape: BTreeMap<Vec<crate::pii::Sort>, Vec<Name>> = BTreeMap::new();
        let moves = cached
            .iter()
            .map(|(act, deriv)| {
                let bounds = act.bound_names();
                if bounds.is_empty() {
                    return (act.clone(), deriv.clone());
                }
                let shape: Vec<crate::pii::Sort> = bounds.iter().map(|n| n.sort).collect();
                let fresh = per_shape
                    .entry(shape)
                    .or_insert_with(|| bounds.iter().map(|n| supply.fresh(n.sort)).collect());
                let map: BTreeMap<Name, Name> = bounds
                    .iter()
                    .cloned()
                    .zip(fresh.iter().cloned())
                    .collect();
                (act.rename_bounds(&map), rename(deriv, &map))
            })
            .collect();
        Ok(moves)
    }
}

/// The attacker's strong transitions, with bound names fresh for BOTH
/// processes so the defender's answers can be renamed onto them safely.
fn attacker_moves(
    attacker: &Process,
    defender: &Process,
    env: &ConstEnv,
) -> Result<Vec<(Action, Process)>, PiError> {
    let mut supply = NameSupply::for_exploration(&[attacker, defender], env);
    transitions(attacker, env, &mut supply)
}

/// The defender's full answer set for an attack, canonicalized and sorted.
#[allow(clippy::too_many_arguments)]
fn defender_answers(
    mode: GameMode,
    attacker_side: Side,
    defender: &Process,
    act: &Action,
    env: &ConstEnv,
    tau_budget: usize,
    enable_gc: bool,
    cache: &mut StepCache,
) -> Result<Vec<Process>, PiError> {
    let raw = match mode {
        GameMode::Strong => strong_matching(defender, act, env, cache)?,
        GameMode::Weak => match act {
            Action::Tau => {
                weak_transitions(defender, env, &ActionPattern::Tau, tau_budget, cache)?
            }
            _ => weak_transitions(defender, env, &pattern_of(act), tau_budget, cache)?,
        },
        GameMode::Expansion => match attacker_side {
            // Left moved; the right defender answers weakly, but an
            // internal move costs at least one internal step.
            Side::Left => match act {
                Action::Tau => weak_tau_at_least_one(defender, env, tau_budget, cache)?,
                _ => weak_transitions(defender, env, &pattern_of(act), tau_budget, cache)?,
            },
            // Right moved; the left defender answers with at most one step.
            Side::Right => match act {
                Action::Tau => {
                    let mut out = vec![defender.clone()];
                    out.extend(strong_matching(defender, act, env, cache)?);
                    out
                }
                _ => strong_matching(defender, act, env, cache)?,
            },
        },
    };
    let mut canon: BTreeMap<String, Process> = BTreeMap::new();
    for proc in raw {
        let n = struct_normalize_opts(&proc, env, enable_gc);
        canon.insert(format!("{n:?}"), n);
    }
    Ok(canon.into_values().collect())
}

fn pattern_of(act: &Action) -> ActionPattern {
    match act {
        Action::Tau => ActionPattern::Tau,
        Action::In { subject, bound } => ActionPattern::In {
            subject: subject.clone(),
            bound: Some(bound.clone()),
        },
        Action::BOut { subject, bound } => ActionPattern::BOut {
            subject: subject.clone(),
            bound: Some(bound.clone()),
        },
    }
}

/// Strong transitions of `defender` matching `act` exactly, derivatives
/// renamed onto the attack's bound names. The positional rename is safe
/// regardless of the names the cached steps drew: derivative binders are
/// canonical placeholders and the attack's names are fresh for the
/// defender, so nothing can be captured or conflated.
fn strong_matching(
    defender: &Process,
    act: &Action,
    env: &ConstEnv,
    cache: &mut StepCache,
) -> Result<Vec<Process>, PiError> {
    let dkey = format!("{defender:?}");
    let steps = cached_steps(defender, &dkey, env, cache)?;
    let mut out = Vec::new();
    for (da, dd) in steps.iter() {
        let matches = match (act, da) {
            (Action::Tau, Action::Tau) => true,
            (Action::In { subject: s1, .. }, Action::In { subject: s2, .. }) => s1 == s2,
            (Action::BOut { subject: s1, .. }, Action::BOut { subject: s2, .. }) => s1 == s2,
            _ => false,
        };
        if !matches || da.bound_names().len() != act.bound_names().len() {
            continue;
        }
        let map: BTreeMap<Name, Name> = da
            .bound_names()
            .iter()
            .cloned()
            .zip(act.bound_names().iter().cloned())
            .collect();
        out.push(rename(dd, &map));
    }
    Ok(out)
}

/// States reachable from `p` by one to `budget` internal steps (the strict
/// weak internal move: zero steps do NOT count).
fn weak_tau_at_least_one(
    p: &Process,
    env: &ConstEnv,
    budget: usize,
    cache: &mut StepCache,
) -> Result<Vec<Process>, PiError> {
    if budget == 0 {
        return Ok(vec![]);
    }
    let mut out: BTreeMap<String, Process> = BTreeMap::new();
    let mut supply = NameSupply::for_exploration(&[p], env);
    for (act, deriv) in transitions(p, env, &mut supply)? {
        if act != Action::Tau {
            continue;
        }
        for (key, (state, _)) in tau_closure(&deriv, env, budget - 1, cache)?.iter() {
            out.insert(key.clone(), state.clone());
        }
    }
    Ok(out.into_values().collect())
}

/// Error raised when a witness does not replay against the processes it
/// claims to distinguish.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("witness replay failed at {path}: {msg}")]
pub struct ReplayError {
    pub path: String,
    pub msg: String,
}

/// Replays a witness produced by a `Distinguished` verdict on `(p, q)`
/// under the same game mode and tau budget, and renders a human-readable
/// report of the winning strategy. Fails loudly if any claimed move or
/// reply set does not match what the transition system actually allows.
pub fn explain_witness(
    w: &Witness,
    p: &Process,
    q: &Process,
    env: &ConstEnv,
    mode: GameMode,
    tau_budget: usize,
) -> Result<String, ReplayError> {
    let mut report = String::new();
    let pc = struct_normalize_opts(p, env, true);
    let qc = struct_normalize_opts(q, env, true);
    replay(w, &pc, &qc, env, mode, tau_budget, "w", 0, &mut report)?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn replay(
    w: &Witness,
    p: &Process,
    q: &Process,
    env: &ConstEnv,
    mode: GameMode,
    tau_budget: usize,
    path: &str,
    indent: usize,
    report: &mut String,
) -> Result<(), ReplayError> {
    let pad = "  ".repeat(indent);
    let (attacker, defender) = match w.side {
        Side::Left => (p, q),
        Side::Right => (q, p),
    };
    let moves = attacker_moves(attacker, defender, env).map_err(|e| ReplayError {
        path: path.to_string(),
        msg: e.to_string(),
    })?;
    let want = canonical_key(&w.derivative, env);
    let found = moves
        .iter()
        .any(|(a, d)| a == &w.action && canonical_key(d, env) == want);
    if !found {
        return Err(ReplayError {
            path: path.to_string(),
            msg: format!(
                "claimed move {} to {} is not a transition of the {:?} process",
                w.action, w.derivative, w.side
            ),
        });
    }
    let answers = defender_answers(
        mode,
        w.side,
        defender,
        &w.action,
        env,
        tau_budget,
        true,
        &mut StepCache::new(),
    )
    .map_err(|e| ReplayError {
        path: path.to_string(),
        msg: e.to_string(),
    })?;
    let answer_keys: BTreeSet<String> =
        answers.iter().map(|a| canonical_key(a, env)).collect();
    let reply_keys: BTreeSet<String> = w
        .replies
        .iter()
        .map(|(r, _)| canonical_key(r, env))
        .collect();
    if answer_keys != reply_keys {
        return Err(ReplayError {
            path: path.to_string(),
            msg: format!(
                "witness covers {} defender replies but the game allows {}",
                reply_keys.len(),
                answer_keys.len()
            ),
        });
    }
    report.push_str(&format!(
        "{pad}[{:?}] attacker plays {}  ~>  {}\n",
        w.side, w.action, w.derivative
    ));
    if w.replies.is_empty() {
        report.push_str(&format!("{pad}  defender has no answer\n"));
        return Ok(());
    }
    for (i, (reply, sub)) in w.replies.iter().enumerate() {
        report.push_str(&format!("{pad}  reply {}: {}\n", i + 1, reply));
        let (np, nq) = match w.side {
            Side::Left => (&w.derivative, reply),
            Side::Right => (reply, &w.derivative),
        };
        replay(
            sub,
            np,
            nq,
            env,
            mode,
            tau_budget,
            &format!("{path}.{}", i + 1),
            indent + 2,
            report,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pii::parse_process;

    fn pp(s: &str) -> Process {
        parse_process(s).expect("test process parses")
    }

    fn env() -> ConstEnv {
        ConstEnv::new()
    }

    /// A process that performs one internal step and then continues as `p`.
    fn tau_then(p: Process) -> Process {
        Process::res(
            Name::var("t9"),
            Process::par(
                Process::bout(Name::var("t9"), vec![Name::loc("p9")], Process::Nil),
                Process::input(Name::var("t9"), vec![Name::loc("q9")], p),
            ),
        )
    }

    fn b(depth: usize, tau: usize) -> Budget {
        Budget::default().with_depth(depth).with_tau(tau)
    }

    #[test]
    fn strong_bisim_is_reflexive_on_samples() {
        let samples = [
            pp("0"),
            pp("a(x,q).x!(r).0"),
            pp("!x(p).p!(y,q).0 | x!(r).r(u,s).0"),
            tau_then(pp("b!(y,s).0")),
        ];
        for p in &samples {
            let v = strong_bisim_bounded(p, p, &env(), b(3, 0));
            assert!(v.is_indistinguishable(), "{p} vs itself: {v:?}");
        }
    }

    #[test]
    fn strong_bisim_separates_input_from_output() {
        let p = pp("a(x,q).0");
        let q = pp("a!(x,q).0");
        let v = strong_bisim_bounded(&p, &q, &env(), b(1, 0));
        match &v {
            Verdict::Distinguished { witness } => {
                assert_eq!(witness.side, Side::Left);
                assert!(matches!(&witness.action, Action::In { subject, .. }
                        if subject == &Name::loc("a")));
                assert!(witness.replies.is_empty());
                let report = explain_witness(witness, &p, &q, &env(), GameMode::Strong, 0)
                    .expect("witness replays");
                assert!(report.contains("defender has no answer"));
            }
            other => panic!("expected Distinguished, got {other:?}"),
        }
    }

    #[test]
    fn weak_bisim_absorbs_internal_steps() {
        let p = pp("b!(y,s).0");
        let v = weak_bisim_bounded(&tau_then(p.clone()), &p, &env(), b(2, 2));
        assert!(v.is_indistinguishable(), "{v:?}");
        // And strongly they differ: the left side has a tau the right cannot
        // match.
        let v = strong_bisim_bounded(&tau_then(p.clone()), &p, &env(), b(2, 0));
        assert!(v.is_distinguished(), "{v:?}");
    }

    #[test]
    fn expansion_orients_internal_steps() {
        let p = pp("b!(y,s).0");
        // p is expanded by tau.p ...
        let v = expansion_bounded(&p, &tau_then(p.clone()), &env(), b(2, 4));
        assert!(v.is_indistinguishable(), "{v:?}");
        // ... but tau.p is not expanded by p: the internal move needs at
        // least one internal step on the right, and p has none.
        let v = expansion_bounded(&tau_then(p.clone()), &p, &env(), b(2, 4));
        match &v {
            Verdict::Distinguished { witness } => {
                assert_eq!(witness.side, Side::Left);
                assert_eq!(witness.action, Action::Tau);
                assert!(witness.replies.is_empty());
            }
            other => panic!("expected Distinguished, got {other:?}"),
        }
    }

    #[test]
    fn distinguished_witnesses_replay() {
        let cases = [
            (pp("a(x,q).0"), pp("a!(x,q).0"), GameMode::Strong, 0usize),
            (tau_then(pp("b!(y,s).0")), pp("b!(y,s).0"), GameMode::Strong, 0),
            (pp("a(x,q).x!(r).0"), pp("a(x,q).0"), GameMode::Weak, 4),
        ];
        for (p, q, mode, tau) in &cases {
            let v = run_game(*mode, p, q, &env(), b(3, *tau), true);
            match &v {
                Verdict::Distinguished { witness } => {
                    explain_witness(witness, p, q, &env(), *mode, *tau)
                        .unwrap_or_else(|e| panic!("replay failed for {p} vs {q}: {e}"));
                }
                other => panic!("expected Distinguished for {p} vs {q}, got {other:?}"),
            }
        }
    }

    #[test]
    fn fabricated_witnesses_are_rejected() {
        let p = pp("a(x,q).0");
        let w = Witness {
            side: Side::Left,
            action: Action::BOut {
                subject: Name::loc("a"),
                bound: vec![Name::var("x1"), Name::loc("q1")],
            },
            derivative: Process::Nil,
            replies: vec![],
        };
        let err = explain_witness(&w, &p, &p, &env(), GameMode::Strong, 0)
            .expect_err("fabricated witness must not replay");
        assert!(err.msg.contains("not a transition"));
        // A witness that ignores an available defender reply is also bad:
        // take a real attacker move but claim there were no answers.
        let moves = attacker_moves(&p, &p, &env()).unwrap();
        let (action, derivative) = moves[0].clone();
        let w = Witness {
            side: Side::Left,
            action,
            derivative,
            replies: vec![],
        };
        let err = explain_witness(&w, &p, &p, &env(), GameMode::Strong, 0)
            .expect_err("incomplete witness must not replay");
        assert!(err.msg.contains("defender replies"));
    }

    #[test]
    fn distinguished_is_monotone_in_depth() {
        let p = pp("a(x,q).0");
        let q = pp("a!(x,q).0");
        for depth in 1..=4 {
            let v = strong_bisim_bounded(&p, &q, &env(), b(depth, 0));
            assert!(v.is_distinguished(), "depth {depth}: {v:?}");
        }
    }

    #[test]
    fn strong_indistinguishable_implies_weak() {
        let pairs = [
            (pp("a(x,q).x!(r).0"), pp("a(x,q).x!(r).0 | 0")),
            (pp("nu a.(a(x,q).0 | b(y,s).0)"), pp("b(y,s).0")),
        ];
        for (p, q) in &pairs {
            let s = strong_bisim_bounded(p, q, &env(), b(3, 0));
            assert!(s.is_indistinguishable(), "{p} vs {q}: {s:?}");
            let w = weak_bisim_bounded(p, q, &env(), b(3, 4));
            assert!(w.is_indistinguishable(), "{p} vs {q}: {w:?}");
        }
    }

    #[test]
    fn expansion_sandwich_implies_weak_bisim() {
        // tau.tau.0 and tau.0 | tau.0 expand each other (same internal
        // spend, different shape), hence are weakly bisimilar.
        let nested = tau_then(tau_then(Process::Nil));
        let side_by_side = Process::par(tau_then(Process::Nil), tau_then(Process::Nil));
        let budget = b(3, 4);
        let forward = expansion_bounded(&nested, &side_by_side, &env(), budget);
        let backward = expansion_bounded(&side_by_side, &nested, &env(), budget);
        assert!(forward.is_indistinguishable(), "{forward:?}");
        assert!(backward.is_indistinguishable(), "{backward:?}");
        let weak = weak_bisim_bounded(&nested, &side_by_side, &env(), budget);
        assert!(weak.is_indistinguishable(), "{weak:?}");
    }

    #[test]
    fn weak_bisim_is_preserved_by_spot_contexts() {
        let p = tau_then(pp("b!(y,s).0"));
        let q = pp("b!(y,s).0");
        let budget = b(2, 4);
        assert!(weak_bisim_bounded(&p, &q, &env(), budget).is_indistinguishable());
        // Restriction context.
        let rp = Process::res(Name::loc("c"), p.clone());
        let rq = Process::res(Name::loc("c"), q.clone());
        assert!(weak_bisim_bounded(&rp, &rq, &env(), budget).is_indistinguishable());
        // Parallel context that can interact on b.
        let r = pp("b(z,r).z(s').0");
        let pp_ = Process::par(p, r.clone());
        let qq_ = Process::par(q, r);
        let v = weak_bisim_bounded(&pp_, &qq_, &env(), b(3, 6));
        assert!(v.is_indistinguishable(), "{v:?}");
    }

    #[test]
    fn state_cap_overflow_is_inconclusive() {
        let p = tau_then(tau_then(pp("b!(y,s).0")));
        let q = tau_then(pp("b!(y,s).0"));
        let v = weak_bisim_bounded(&p, &q, &env(), b(3, 4).with_cap(1));
        assert!(
            matches!(&v, Verdict::Inconclusive { reason } if reason.contains("state cap")),
            "{v:?}"
        );
    }

    #[test]
    fn ill_sorted_input_is_inconclusive() {
        let p = pp("x(p).0");
        let bad = Process::input(Name::var("x"), vec![Name::var("y")], Process::Nil);
        let v = weak_bisim_bounded(&p, &bad, &env(), b(1, 1));
        assert!(matches!(&v, Verdict::Inconclusive { .. }), "{v:?}");
    }

    #[test]
    fn gc_rewrite_is_behaviorally_valid_without_gc() {
        // The normalizer claims nu x.(Q | !x(...).R) behaves like Q when x
        // is used only as an output subject in R. Validate with the game
        // itself running gc-free.
        let cases = [
            ("nu x.(y!(p).0 | !x(q).0)", "y!(p).0"),
            (
                "nu x.(a(z,r).z!(s).0 | !x(q).q(u,s').0)",
                "a(z,r).z!(s).0",
            ),
        ];
        for (with_server, plain) in &cases {
            let v = strong_bisim_bounded_opts(
                &pp(with_server),
                &pp(plain),
                &env(),
                b(4, 0),
                false,
            );
            assert!(v.is_indistinguishable(), "{with_server}: {v:?}");
        }
    }

    #[test]
    fn verdicts_serialize_roundtrip() {
        let p = pp("a(x,q).0");
        let q = pp("a!(x,q).0");
        let v = strong_bisim_bounded(&p, &q, &env(), b(2, 0));
        let json = serde_json::to_string(&v).unwrap();
        let back: Verdict = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.exit_code(), 1);
    }
}
