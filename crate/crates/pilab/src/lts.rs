//! Ground labelled transition system for the internal pi-calculus.
//!
//! Transitions are computed with one canonical fresh instantiation per
//! prefix: an input `a(b).P` contributes a single `In` transition whose
//! bound names are drawn from a deterministic supply, rather than one
//! transition per alpha-variant. Communication restricts the exchanged
//! names in the derivative, so every output stays bound.

use crate::pii::{
    all_ids, expected_params, rename, struct_normalize, unfold_const, Action, ConstEnv, Name,
    PiError, Process, Sort,
};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::rc::Rc;

/// Deterministic supply of fresh names.
///
/// Fresh identifiers are `x1, x2, ...` for variable names and `q1, q2, ...`
/// for location names, skipping anything in the avoid set. Seeding the
/// avoid set with [`all_ids`] of the processes under exploration (plus the
/// constant environment) guarantees the supply never clashes with a name
/// already in play, free or bound.
#[derive(Debug, Clone)]
pub struct NameSupply {
    counter: usize,
    avoid: BTreeSet<String>,
}

impl NameSupply {
    pub fn new(avoid: BTreeSet<String>) -> NameSupply {
        NameSupply { counter: 1, avoid }
    }

    /// Supply avoiding every identifier of `ps` and of every constant
    /// definition in `env`.
    pub fn for_exploration(ps: &[&Process], env: &ConstEnv) -> NameSupply {
        let mut avoid = BTreeSet::new();
        for p in ps {
            avoid.extend(all_ids(p));
        }
        for name in env.names() {
            if let Some(def) = env.lookup(&name) {
                avoid.extend(def.params.iter().map(|n| n.id.clone()));
                avoid.extend(all_ids(&def.body));
            }
        }
        NameSupply::new(avoid)
    }

    /// Marks an identifier as taken so the supply never returns it.
    pub fn reserve(&mut self, id: &str) {
        self.avoid.insert(id.to_string());
    }

    pub fn fresh(&mut self, sort: Sort) -> Name {
        loop {
            let id = match sort {
                Sort::Loc => format!("q{}", self.counter),
                Sort::Var => format!("x{}", self.counter),
            };
            self.counter += 1;
            if self.avoid.insert(id.clone()) {
                return Name { id, sort };
            }
        }
    }

    /// Fresh names matching the sorts of `params`, in order.
    pub fn fresh_like(&mut self, params: &[Name]) -> Vec<Name> {
        params.iter().map(|n| self.fresh(n.sort)).collect()
    }
}

/// Guard against unguarded constants such as `K <= (p) K<p>`: unfolding
/// deeper than this while searching for a prefix aborts the search.
const MAX_UNFOLD: usize = 64;

/// Recursive constants whose recursive calls sit in parallel position (the
/// permeable style, where a call spawns the next stage alongside its own
/// prefixes) unfold at most this many times per constant along one
/// derivation path. Deeper copies sit under restrictions whose ports only
/// come alive after the copies above them act, so they contribute no first
/// step; `transitions` re-checks one level deeper whenever this cutoff
/// actually fired and rejects the process if the extra level changes the
/// action set.
const NESTED_UNFOLD_LIMIT: usize = 2;

/// All strong transitions of `p`, with bound names drawn from `supply`.
///
/// The result is deduplicated structurally; callers that need semantic
/// deduplication should normalize the derivatives.
pub fn transitions(
    p: &Process,
    env: &ConstEnv,
    supply: &mut NameSupply,
) -> Result<Vec<(Action, Process)>, PiError> {
    let mut probe = supply.clone();
    let mut cut = BTreeSet::new();
    let mut out = trans(
        p,
        env,
        &mut probe,
        &mut Vec::new(),
        NESTED_UNFOLD_LIMIT,
        &mut cut,
    )?;
    if !cut.is_empty() {
        // Every derivation found at the cutoff is still found one level
        // deeper, so the deep pass returns a superset; equal counts mean the
        // extra level contributed nothing and the cutoff was exact.
        let mut deep_supply = supply.clone();
        let deep = trans(
            p,
            env,
            &mut deep_supply,
            &mut Vec::new(),
            NESTED_UNFOLD_LIMIT + 1,
            &mut BTreeSet::new(),
        )?;
        if deep.len() != out.len() {
            let name = cut.into_iter().next().unwrap_or_default();
            return Err(PiError::BadConst {
                name,
                msg: format!(
                    "recursive calls still active {} levels deep; \
                     cannot bound the one-step behaviour",
                    NESTED_UNFOLD_LIMIT + 1
                ),
            });
        }
    }
    *supply = probe;
    let mut seen = BTreeSet::new();
    out.retain(|step| seen.insert(format!("{step:?}")));
    Ok(out)
}

/// Convenience wrapper: transitions with a supply derived from `p` and `env`.
pub fn transitions_auto(p: &Process, env: &ConstEnv) -> Result<Vec<(Action, Process)>, PiError> {
    let mut supply = NameSupply::for_exploration(&[p], env);
    transitions(p, env, &mut supply)
}

fn trans(
    p: &Process,
    env: &ConstEnv,
    supply: &mut NameSupply,
    unfolding: &mut Vec<String>,
    nested_limit: usize,
    cut: &mut BTreeSet<String>,
) -> Result<Vec<(Action, Process)>, PiError> {
    match p {
        Process::Nil => Ok(vec![]),
        Process::Input {
            subject,
            params,
            body,
        } => {
            let fresh = supply.fresh_like(params);
            let map: BTreeMap<Name, Name> =
                params.iter().cloned().zip(fresh.iter().cloned()).collect();
            Ok(vec![(
                Action::In {
                    subject: subject.clone(),
                    bound: fresh,
                },
                rename(body, &map),
            )])
        }
        Process::BoundOutput {
            subject,
            params,
            body,
        } => {
            let fresh = supply.fresh_like(params);
            let map: BTreeMap<Name, Name> =
                params.iter().cloned().zip(fresh.iter().cloned()).collect();
            Ok(vec![(
                Action::BOut {
                    subject: subject.clone(),
                    bound: fresh,
                },
                rename(body, &map),
            )])
        }
        Process::ReplInput {
            subject,
            params,
            body,
        } => {
            let fresh = supply.fresh_like(params);
            let map: BTreeMap<Name, Name> =
                params.iter().cloned().zip(fresh.iter().cloned()).collect();
            Ok(vec![(
                Action::In {
                    subject: subject.clone(),
                    bound: fresh,
                },
                Process::par(rename(body, &map), p.clone()),
            )])
        }
        Process::ConstApp { name, args } => {
            if unfolding.iter().filter(|n| n.as_str() == name).count() >= nested_limit {
                cut.insert(name.clone());
                return Ok(vec![]);
            }
            // Resolve chains of constants that unfold directly to constants
            // without consuming nesting budget; a cycle here never reaches a
            // prefix and is rejected.
            let mut hops = 0usize;
            let mut cname = name.clone();
            let mut body = unfold_const(&cname, args, env)?;
            while let Process::ConstApp { name: n2, args: a2 } = body {
                hops += 1;
                if hops >= MAX_UNFOLD {
                    return Err(PiError::BadConst {
                        name: cname,
                        msg: format!(
                            "no prefix after {MAX_UNFOLD} unfoldings; unguarded recursion"
                        ),
                    });
                }
                body = unfold_const(&n2, &a2, env)?;
                cname = n2;
            }
            unfolding.push(name.clone());
            let result = trans(&body, env, supply, unfolding, nested_limit, cut);
            unfolding.pop();
            result
        }
        Process::Res { bound, body } => {
            let steps = trans(body, env, supply, unfolding, nested_limit, cut)?;
            Ok(steps
                .into_iter()
                .filter(|(act, _)| act.subject() != Some(bound))
                .map(|(act, deriv)| (act, Process::res(bound.clone(), deriv)))
                .collect())
        }
        Process::Par { left, right } => {
            let lsteps = trans(left, env, supply, unfolding, nested_limit, cut)?;
            let rsteps = trans(right, env, supply, unfolding, nested_limit, cut)?;
            let mut out = Vec::new();
            for (act, deriv) in &lsteps {
                out.push((
                    act.clone(),
                    Process::par(deriv.clone(), right.as_ref().clone()),
                ));
            }
            for (act, deriv) in &rsteps {
                out.push((
                    act.clone(),
                    Process::par(left.as_ref().clone(), deriv.clone()),
                ));
            }
            for (lact, lderiv) in &lsteps {
                for (ract, rderiv) in &rsteps {
                    if let Some(step) = communicate(lact, lderiv, ract, rderiv) {
                        out.push(step);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// The [com] rule: complementary actions on the same subject synchronize,
/// and the exchanged bound names are restricted in the derivative.
fn communicate(
    a1: &Action,
    d1: &Process,
    a2: &Action,
    d2: &Process,
) -> Option<(Action, Process)> {
    let (subj1, b1, subj2, b2, input_deriv, output_deriv) = match (a1, a2) {
        (
            Action::In { subject: s1, bound: b1 },
            Action::BOut { subject: s2, bound: b2 },
        ) => (s1, b1, s2, b2, d1, d2),
        (
            Action::BOut { subject: s1, bound: b1 },
            Action::In { subject: s2, bound: b2 },
        ) => (s2, b2, s1, b1, d2, d1),
        _ => return None,
    };
    if subj1 != subj2 || b1.len() != b2.len() {
        return None;
    }
    // Unify on the input side's names; both sets are fresh for everything
    // else in play, so this is a plain bijective rename.
    let map: BTreeMap<Name, Name> = b2.iter().cloned().zip(b1.iter().cloned()).collect();
    let deriv = Process::res_many(
        b1.clone(),
        Process::par(input_deriv.clone(), rename(output_deriv, &map)),
    );
    Some((Action::Tau, deriv))
}

/// A pattern selecting which weak transitions to collect.
///
/// `bound: None` means "any bound names"; the engine then picks canonical
/// fresh ones so results from different interleavings coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionPattern {
    Tau,
    In {
        subject: Name,
        bound: Option<Vec<Name>>,
    },
    BOut {
        subject: Name,
        bound: Option<Vec<Name>>,
    },
}

impl ActionPattern {
    fn matches(&self, act: &Action) -> bool {
        match (self, act) {
            (ActionPattern::Tau, Action::Tau) => true,
            (ActionPattern::In { subject, .. }, Action::In { subject: s, .. }) => subject == s,
            (ActionPattern::BOut { subject, .. }, Action::BOut { subject: s, .. }) => subject == s,
            _ => false,
        }
    }
}

/// Memo shared across transition and closure queries within one analysis.
///
/// Keys are debug renderings of normalized states, which are canonical for
/// their alpha classes. Entries are supply-insensitive: a normalized state
/// binds only canonical placeholder names, so the steps computed with its
/// own exploration supply rename cleanly onto any caller's target names.
#[derive(Default)]
pub struct StepCache {
    steps: BTreeMap<String, Rc<Vec<(Action, Process)>>>,
    tau: BTreeMap<(String, usize), Rc<BTreeMap<String, (Process, usize)>>>,
}

impl StepCache {
    pub fn new() -> StepCache {
        StepCache::default()
    }
}

/// Strong steps of a normalized state, memoized by its canonical key.
pub(crate) fn cached_steps(
    state: &Process,
    key: &str,
    env: &ConstEnv,
    cache: &mut StepCache,
) -> Result<Rc<Vec<(Action, Process)>>, PiError> {
    if let Some(hit) = cache.steps.get(key) {
        return Ok(hit.clone());
    }
    let mut supply = NameSupply::for_exploration(&[state], env);
    let steps = Rc::new(transitions(state, env, &mut supply)?);
    cache.steps.insert(key.to_string(), steps.clone());
    Ok(steps)
}

/// All processes reachable from `p` by a weak transition matching
/// `pattern`, using at most `tau_budget` internal steps in total.
///
/// The tau pattern follows the hat convention: zero steps count, so the
/// result always contains (the canonical form of) `p` itself. Results are
/// canonicalized, deduplicated and sorted.
pub fn weak_transitions(
    p: &Process,
    env: &ConstEnv,
    pattern: &ActionPattern,
    tau_budget: usize,
    cache: &mut StepCache,
) -> Result<Vec<Process>, PiError> {
    let mut avoid_extra: Vec<Name> = Vec::new();
    if let ActionPattern::In { bound: Some(bs), .. } | ActionPattern::BOut { bound: Some(bs), .. } =
        pattern
    {
        avoid_extra = bs.clone();
    }
    let mut supply = NameSupply::for_exploration(&[p], env);
    for n in &avoid_extra {
        supply.reserve(&n.id);
    }
    // Canonical target names for the visible action, fixed once per call.
    let target: Option<Vec<Name>> = match pattern {
        ActionPattern::Tau => None,
        ActionPattern::In { subject, bound } | ActionPattern::BOut { subject, bound } => {
            Some(match bound {
                Some(bs) => bs.clone(),
                None => {
                    let sorts = expected_params(subject);
                    sorts.iter().map(|s| supply.fresh(*s)).collect()
                }
            })
        }
    };

    let start = struct_normalize(p, env);
    let pre = tau_closure(&start, env, tau_budget, cache)?;

    let mut results: BTreeMap<String, Process> = BTreeMap::new();
    match pattern {
        ActionPattern::Tau => {
            for (state, _) in pre.values() {
                results.insert(format!("{state:?}"), state.clone());
            }
        }
        _ => {
            let want = target.as_ref().expect("visible pattern has target names");
            for (skey, (state, used)) in pre.iter() {
                let steps = cached_steps(state, skey, env, cache)?;
                for (act, deriv) in steps.iter() {
                    if !pattern.matches(act) {
                        continue;
                    }
                    let bound = act.bound_names();
                    if bound.len() != want.len() {
                        continue;
                    }
                    let map: BTreeMap<Name, Name> =
                        bound.iter().cloned().zip(want.iter().cloned()).collect();
                    let renamed = rename(deriv, &map);
                    let post = tau_closure(&renamed, env, tau_budget - used, cache)?;
                    for (final_state, _) in post.values() {
                        results.insert(format!("{final_state:?}"), final_state.clone());
                    }
                }
            }
        }
    }
    Ok(results.into_values().collect())
}

/// Breadth-first tau closure: canonical states reachable with at most
/// `budget` internal steps, each with the least step count that reaches it.
pub(crate) fn tau_closure(
    p: &Process,
    env: &ConstEnv,
    budget: usize,
    cache: &mut StepCache,
) -> Result<Rc<BTreeMap<String, (Process, usize)>>, PiError> {
    let start = struct_normalize(p, env);
    let start_key = format!("{start:?}");
    if let Some(hit) = cache.tau.get(&(start_key.clone(), budget)) {
        return Ok(hit.clone());
    }
    let mut seen: BTreeMap<String, (Process, usize)> = BTreeMap::new();
    seen.insert(start_key.clone(), (start.clone(), 0));
    let mut queue = VecDeque::new();
    queue.push_back((start, start_key.clone(), 0usize));
    while let Some((state, skey, used)) = queue.pop_front() {
        if used == budget {
            continue;
        }
        let steps = cached_steps(&state, &skey, env, cache)?;
        for (act, deriv) in steps.iter() {
            if *act != Action::Tau {
                continue;
            }
            let next = struct_normalize(deriv, env);
            let key = format!("{next:?}");
            if !seen.contains_key(&key) {
                seen.insert(key.clone(), (next.clone(), used + 1));
                queue.push_back((next, key, used + 1));
            }
        }
    }
    let out = Rc::new(seen);
    cache.tau.insert((start_key, budget), out.clone());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pii::{fn_set, parse_process, sort_check};

    fn pp(s: &str) -> Process {
        parse_process(s).expect("test process parses")
    }

    fn env() -> ConstEnv {
        ConstEnv::new()
    }

    #[test]
    fn input_takes_one_canonical_instantiation() {
        let p = pp("p(x,q).x!(r).0");
        let steps = transitions_auto(&p, &env()).unwrap();
        assert_eq!(steps.len(), 1);
        let (act, deriv) = &steps[0];
        match act {
            Action::In { subject, bound } => {
                assert_eq!(subject, &Name::loc("p"));
                assert_eq!(bound.len(), 2);
                assert_eq!(bound[0].sort, Sort::Var);
                assert_eq!(bound[1].sort, Sort::Loc);
                // Fresh: not among the original names.
                assert!(!all_ids(&p).contains(&bound[0].id));
                assert!(!all_ids(&p).contains(&bound[1].id));
                match deriv {
                    Process::BoundOutput { subject, .. } => assert_eq!(subject, &bound[0]),
                    other => panic!("unexpected derivative {other}"),
                }
            }
            other => panic!("expected input action, got {other}"),
        }
    }

    #[test]
    fn communication_restricts_exchanged_names() {
        // p!(x,q).0 | p(y,r).y!(s).0  --tau-->  nu x q.(0 | x!(s).0)
        let p = pp("p!(x,q).0 | p(y,r).y!(s).0");
        let steps = transitions_auto(&p, &env()).unwrap();
        let taus: Vec<&Process> = steps
            .iter()
            .filter(|(a, _)| *a == Action::Tau)
            .map(|(_, d)| d)
            .collect();
        assert_eq!(taus.len(), 1);
        let canon = struct_normalize(taus[0], &env());
        // After dropping Nil and the unused location binder, one bound
        // output on the exchanged variable remains, under a restriction.
        match &canon {
            Process::Res { bound, body } => {
                assert_eq!(bound.sort, Sort::Var);
                match body.as_ref() {
                    Process::BoundOutput { subject, params, .. } => {
                        assert_eq!(subject, bound);
                        assert_eq!(params.len(), 1);
                    }
                    other => panic!("unexpected body {other}"),
                }
            }
            other => panic!("expected restriction, got {other}"),
        }
        // Visible actions also present: one In, one BOut, on subject p.
        assert_eq!(steps.len(), 3);
    }

    #[test]
    fn replication_keeps_the_server() {
        let p = pp("!x(p).p!(y,q).0");
        let steps = transitions_auto(&p, &env()).unwrap();
        assert_eq!(steps.len(), 1);
        let (act, deriv) = &steps[0];
        match act {
            Action::In { subject, bound } => {
                assert_eq!(subject, &Name::var("x"));
                assert_eq!(bound.len(), 1);
            }
            other => panic!("expected input, got {other}"),
        }
        match deriv {
            Process::Par { left, right } => {
                assert!(matches!(left.as_ref(), Process::BoundOutput { .. }));
                assert_eq!(right.as_ref(), &p);
            }
            other => panic!("expected parallel, got {other}"),
        }
    }

    #[test]
    fn restriction_blocks_actions_on_the_bound_name() {
        let p = Process::res(Name::loc("p"), pp("p(x,q).0 | r(y,s).0"));
        let steps = transitions_auto(&p, &env()).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].0.subject(), Some(&Name::loc("r")));
        // But an internal communication under the restriction still fires.
        let q = Process::res(Name::loc("p"), pp("p(x,q).0 | p!(y,r).0"));
        let steps = transitions_auto(&q, &env()).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].0, Action::Tau);
    }

    #[test]
    fn constant_unfolding_is_transparent() {
        let mut e = ConstEnv::new();
        e.define(
            "Fwd",
            vec![Name::loc("p"), Name::loc("q")],
            pp("p(x,r).q!(y,s).0"),
        );
        let p = Process::constapp("Fwd", vec![Name::loc("a"), Name::loc("b")]);
        let steps = transitions_auto(&p, &e).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].0.subject(), Some(&Name::loc("a")));

        // Unguarded recursion is reported, not looped on.
        let mut bad = ConstEnv::new();
        bad.define(
            "Loop",
            vec![Name::loc("p")],
            Process::constapp("Loop", vec![Name::loc("p")]),
        );
        let p = Process::constapp("Loop", vec![Name::loc("a")]);
        assert!(matches!(
            transitions_auto(&p, &bad),
            Err(PiError::BadConst { .. })
        ));
    }

    #[test]
    fn weak_tau_includes_zero_steps() {
        let p = pp("p(x,q).0");
        let reached = weak_transitions(&p, &env(), &ActionPattern::Tau, 0, &mut StepCache::new()).unwrap();
        assert_eq!(reached, vec![struct_normalize(&p, &env())]);
    }

    #[test]
    fn weak_visible_fires_through_two_internal_steps() {
        // Two nested communications guard a bound output on a.
        let p = pp("nu u.(u!(p).0 | u(q).nu v.(v!(r).0 | v(s).a!(y,q0).0))");
        sort_check(&p, &env()).unwrap();
        let pat = ActionPattern::BOut {
            subject: Name::loc("a"),
            bound: None,
        };
        let reached = weak_transitions(&p, &env(), &pat, 2, &mut StepCache::new()).unwrap();
        assert_eq!(reached, vec![Process::Nil]);
        // Insufficient budget: no weak transition.
        let reached = weak_transitions(&p, &env(), &pat, 1, &mut StepCache::new()).unwrap();
        assert!(reached.is_empty());
    }

    #[test]
    fn weak_visible_respects_requested_bound_names() {
        let p = pp("p(x,q).x!(r).0");
        let pat = ActionPattern::In {
            subject: Name::loc("p"),
            bound: Some(vec![Name::var("u"), Name::loc("t0")]),
        };
        let reached = weak_transitions(&p, &env(), &pat, 4, &mut StepCache::new()).unwrap();
        assert_eq!(reached.len(), 1);
        let frees = fn_set(&reached[0]);
        assert!(frees.contains(&Name::var("u")));
    }

    #[test]
    fn bound_names_are_fresh_for_the_source() {
        let samples = [
            pp("p(x,q).x!(r).0 | p!(y,s).y(r').0"),
            pp("nu p.(p(x,q).0 | p!(y,s).0) | a(z,r).z!(w).0"),
            pp("!x(p).p!(y,q).0 | x!(r).r(u,s').0"),
        ];
        let e = env();
        for p in &samples {
            let frees = fn_set(p);
            for (act, _) in transitions_auto(p, &e).unwrap() {
                for b in act.bound_names() {
                    assert!(
                        !frees.contains(b),
                        "bound name {b:?} clashes with a free name of {p}"
                    );
                }
            }
        }
    }

    #[test]
    fn derivatives_stay_well_sorted() {
        let samples = [
            pp("p(x,q).x!(r).0 | p!(y,s).y(r').0"),
            pp("nu a.(a(x,q).x!(r).0 | a!(y,s).(y(r'').0 | s(z,q').0))"),
            pp("!x(p).p!(y,q).0 | x!(r).r(u,s').0"),
        ];
        let e = env();
        for p in &samples {
            sort_check(p, &e).unwrap();
            for (_, d) in transitions_auto(p, &e).unwrap() {
                sort_check(&d, &e)
                    .unwrap_or_else(|err| panic!("derivative of {p} ill-sorted: {err}"));
            }
        }
    }
}
