//! The three concrete wire families (IO, OI, P), permeable-prefix
//! desugaring parametric on the family, and the wire-axiom test battery.
//!
//! A wire `a -> b` forwards behavior from its input end `a` to its output
//! end `b`. Location wires are linear; variable wires are replicated
//! servers. Wires are registered as recursive constants, one location and
//! one variable wire per family, with fully desugared bodies (permeable
//! prefixes are sugar and never appear in stored definitions).
//!
//! Family conventions:
//! - `IO`: the input end of a location wire fires first, then the output.
//! - `OI`: the opposite control flow; its location wire is derived
//!   mechanically from the IO wire by dualization (swapping input and
//!   output prefixes and flipping wire directions), which this module
//!   asserts equal to the independent desugaring of its direct definition.
//! - `P`: input and output are both permeable and execute concurrently;
//!   its location wire is behaviorally self-dual.
//!
//! All wire constants take arguments in `(input end, output end)` order.

use crate::equiv::{expansion_bounded, Budget, Verdict};
use crate::lts::transitions_auto;
use crate::pii::{
    all_ids, canonical_key, free_names, rename, Action, ConstEnv, Name, PiError, Process, Sort,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// One of the three concrete wire disciplines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WireFamily {
    IO,
    OI,
    P,
}

impl WireFamily {
    pub fn all() -> [WireFamily; 3] {
        [WireFamily::IO, WireFamily::OI, WireFamily::P]
    }

    /// Name of the family's location-wire constant.
    pub fn loc_const(&self) -> &'static str {
        match self {
            WireFamily::IO => "LinkIO",
            WireFamily::OI => "LinkOI",
            WireFamily::P => "LinkP",
        }
    }

    /// Name of the family's variable-wire constant.
    pub fn var_const(&self) -> &'static str {
        match self {
            WireFamily::IO => "VLinkIO",
            WireFamily::OI => "VLinkOI",
            WireFamily::P => "VLinkP",
        }
    }
}

impl fmt::Display for WireFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WireFamily::IO => "IO",
            WireFamily::OI => "OI",
            WireFamily::P => "P",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for WireFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<WireFamily, String> {
        match s.to_ascii_uppercase().as_str() {
            "IO" => Ok(WireFamily::IO),
            "OI" => Ok(WireFamily::OI),
            "P" => Ok(WireFamily::P),
            other => Err(format!("unknown wire family {other:?}; expected IO, OI or P")),
        }
    }
}

/// A wire family together with the constant environment holding its two
/// recursive definitions. Immutable after construction.
#[derive(Debug, Clone)]
pub struct WireEnv {
    pub family: WireFamily,
    pub consts: ConstEnv,
}

/// The four permeable-prefix forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermeableKind {
    /// `[p:(x,q)] P` — permeable input at a location name.
    InLoc,
    /// `[p^:(x,q)] P` — permeable bound output at a location name.
    OutLoc,
    /// `[x:(p)] P` — permeable input at a variable name.
    InVar,
    /// `[x^:(p)] P` — permeable bound output at a variable name.
    OutVar,
}

/// Builds the family's location wire `a -> b`.
pub fn make_loc_wire(w: &WireEnv, a: &Name, b: &Name) -> Result<Process, PiError> {
    if a.sort != Sort::Loc || b.sort != Sort::Loc {
        return Err(PiError::Sort {
            path: "make_loc_wire".into(),
            msg: format!("location wire requires two location names, got {a:?} and {b:?}"),
        });
    }
    if a == b {
        return Err(PiError::Sort {
            path: "make_loc_wire".into(),
            msg: format!("wire endpoints must differ, got {} twice", a.id),
        });
    }
    Ok(Process::constapp(
        w.family.loc_const(),
        vec![a.clone(), b.clone()],
    ))
}

/// Builds the family's variable wire `x -> y`.
pub fn make_var_wire(w: &WireEnv, x: &Name, y: &Name) -> Result<Process, PiError> {
    if x.sort != Sort::Var || y.sort != Sort::Var {
        return Err(PiError::Sort {
            path: "make_var_wire".into(),
            msg: format!("variable wire requires two variable names, got {x:?} and {y:?}"),
        });
    }
    if x == y {
        return Err(PiError::Sort {
            path: "make_var_wire".into(),
            msg: format!("wire endpoints must differ, got {} twice", x.id),
        });
    }
    Ok(Process::constapp(
        w.family.var_const(),
        vec![x.clone(), y.clone()],
    ))
}

fn loc_wire(f: WireFamily, a: &Name, b: &Name) -> Process {
    Process::constapp(f.loc_const(), vec![a.clone(), b.clone()])
}

fn var_wire(f: WireFamily, x: &Name, y: &Name) -> Process {
    Process::constapp(f.var_const(), vec![x.clone(), y.clone()])
}

/// Picks `base` with enough primes appended to avoid `avoid`.
fn primed(base: &str, avoid: &BTreeSet<String>) -> String {
    let mut id = format!("{base}'");
    while avoid.contains(&id) {
        id.push('\'');
    }
    id
}

/// Emits the desugared permeable prefix for this family.
///
/// The prefix binds `bound` in `body`; the ordinary prefix underneath
/// receives primed copies of the bound names and connects them with the
/// family's wires, so `body` runs concurrently and only its actions on the
/// bound names are blocked until the prefix is consumed.
pub fn permeable(
    w: &WireEnv,
    kind: PermeableKind,
    subject: &Name,
    bound: &[Name],
    body: Process,
) -> Result<Process, PiError> {
    let f = w.family;
    let expect = |ok: bool, msg: &str| -> Result<(), PiError> {
        if ok {
            Ok(())
        } else {
            Err(PiError::Sort {
                path: "permeable".into(),
                msg: msg.to_string(),
            })
        }
    };
    let mut avoid = all_ids(&body);
    avoid.insert(subject.id.clone());
    for n in bound {
        avoid.insert(n.id.clone());
    }
    match kind {
        PermeableKind::InLoc | PermeableKind::OutLoc => {
            expect(
                subject.sort == Sort::Loc
                    && bound.len() == 2
                    && bound[0].sort == Sort::Var
                    && bound[1].sort == Sort::Loc,
                "location permeable prefix requires a location subject and (variable, location) bound names",
            )?;
            let (x, q) = (&bound[0], &bound[1]);
            let xp = Name::var(primed(&x.id, &avoid));
            avoid.insert(xp.id.clone());
            let qp = Name::loc(primed(&q.id, &avoid));
            let (wires, mk): (Process, fn(Name, Vec<Name>, Process) -> Process) = match kind {
                // [p:(x,q)] P  =  nu x q.( p(x',q').( x->x' | q'->q ) | P )
                PermeableKind::InLoc => (
                    Process::par(var_wire(f, x, &xp), loc_wire(f, &qp, q)),
                    Process::input,
                ),
                // [p^:(x,q)] P  =  nu x q.( p!(x',q').( x'->x | q->q' ) | P )
                PermeableKind::OutLoc => (
                    Process::par(var_wire(f, &xp, x), loc_wire(f, q, &qp)),
                    Process::bout,
                ),
                _ => unreachable!(),
            };
            let prefix = mk(subject.clone(), vec![xp, qp], wires);
            Ok(Process::res_many(
                vec![x.clone(), q.clone()],
                Process::par(prefix, body),
            ))
        }
        PermeableKind::InVar | PermeableKind::OutVar => {
            expect(
                subject.sort == Sort::Var && bound.len() == 1 && bound[0].sort == Sort::Loc,
                "variable permeable prefix requires a variable subject and one location bound name",
            )?;
            let p = &bound[0];
            let pp = Name::loc(primed(&p.id, &avoid));
            let (wire, mk): (Process, fn(Name, Vec<Name>, Process) -> Process) = match kind {
                // [x:(p)] P  =  nu p.( x(p').( p'->p ) | P )
                PermeableKind::InVar => (loc_wire(f, &pp, p), Process::input),
                // [x^:(p)] P  =  nu p.( x!(p').( p->p' ) | P )
                PermeableKind::OutVar => (loc_wire(f, p, &pp), Process::bout),
                _ => unreachable!(),
            };
            let prefix = mk(subject.clone(), vec![pp], wire);
            Ok(Process::res(
                p.clone(),
                Process::par(prefix, body),
            ))
        }
    }
}

/// Swaps every input prefix with the corresponding bound-output prefix and
/// flips the direction of every wire-constant reference. Replicated inputs
/// are left alone (variable wires keep their shape under duality).
fn dualize(p: &Process, loc_from: &str, loc_to: &str, var_from: &str, var_to: &str) -> Process {
    let go = |q: &Process| dualize(q, loc_from, loc_to, var_from, var_to);
    match p {
        Process::Nil => Process::Nil,
        Process::Input {
            subject,
            params,
            body,
        } => Process::bout(subject.clone(), params.clone(), go(body)),
        Process::BoundOutput {
            subject,
            params,
            body,
        } => Process::input(subject.clone(), params.clone(), go(body)),
        Process::ReplInput {
            subject,
            params,
            body,
        } => Process::repl(subject.clone(), params.clone(), go(body)),
        Process::Res { bound, body } => Process::res(bound.clone(), go(body)),
        Process::Par { left, right } => Process::par(go(left), go(right)),
        Process::ConstApp { name, args } => {
            let flipped = vec![args[1].clone(), args[0].clone()];
            if name == loc_from {
                Process::constapp(loc_to, flipped)
            } else if name == var_from {
                Process::constapp(var_to, flipped)
            } else {
                Process::constapp(name.clone(), args.clone())
            }
        }
    }
}

/// The desugared location-wire body for `family`, with formal parameters
/// `a` (input end) and `b` (output end).
fn loc_wire_body(family: WireFamily, a: &Name, b: &Name) -> Process {
    let w = WireEnv {
        family,
        consts: ConstEnv::new(),
    };
    let y = Name::var("y");
    let p1 = Name::loc("p1");
    let x = Name::var("x");
    let q1 = Name::loc("q1");
    match family {
        // a(y,p1). [b^:(x,q1)]( p1->q1 | x->y )
        WireFamily::IO => {
            let inner = Process::par(
                loc_wire(family, &p1, &q1),
                var_wire(family, &x, &y),
            );
            let out = permeable(&w, PermeableKind::OutLoc, b, &[x, q1], inner)
                .expect("wire body desugars");
            Process::input(a.clone(), vec![y, p1], out)
        }
        // Derived mechanically from the IO body by dualization; asserted
        // against the direct definition b!(x,q1). [a:(y,p1)]( p1->q1 | x->y )
        // in the tests.
        WireFamily::OI => {
            let io = loc_wire_body(WireFamily::IO, a, b);
            let dual = dualize(
                &io,
                WireFamily::IO.loc_const(),
                WireFamily::OI.loc_const(),
                WireFamily::IO.var_const(),
                WireFamily::OI.var_const(),
            );
            let swap: BTreeMap<Name, Name> = [
                (a.clone(), b.clone()),
                (b.clone(), a.clone()),
            ]
            .into_iter()
            .collect();
            rename(&dual, &swap)
        }
        // [a:(y,p1)] [b^:(x,q1)]( p1->q1 | x->y )
        WireFamily::P => {
            let inner = Process::par(
                loc_wire(family, &p1, &q1),
                var_wire(family, &x, &y),
            );
            let out = permeable(&w, PermeableKind::OutLoc, b, &[x, q1], inner)
                .expect("wire body desugars");
            permeable(&w, PermeableKind::InLoc, a, &[y, p1], out).expect("wire body desugars")
        }
    }
}

/// The desugared variable-wire body, identical in shape for every family:
/// `!x(p). [y^:(q)] (p -> q)` with the family's own location wires.
fn var_wire_body(family: WireFamily, x: &Name, y: &Name) -> Process {
    let w = WireEnv {
        family,
        consts: ConstEnv::new(),
    };
    let p = Name::loc("p");
    let q = Name::loc("q");
    let out = permeable(
        &w,
        PermeableKind::OutVar,
        y,
        &[q.clone()],
        loc_wire(family, &p, &q),
    )
    .expect("wire body desugars");
    Process::repl(x.clone(), vec![p], out)
}

/// Builds the constant environment for one family and validates it.
pub fn wire_env(family: WireFamily) -> WireEnv {
    let mut consts = ConstEnv::new();
    let a = Name::loc("a");
    let b = Name::loc("b");
    consts.define(
        family.loc_const(),
        vec![a.clone(), b.clone()],
        loc_wire_body(family, &a, &b),
    );
    let x = Name::var("u0");
    let y = Name::var("v0");
    consts.define(
        family.var_const(),
        vec![x.clone(), y.clone()],
        var_wire_body(family, &x, &y),
    );
    let env = WireEnv { family, consts };
    env.consts
        .validate()
        .expect("wire definitions are closed and well-sorted");
    env
}

/// How a single law fared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawVerdict {
    Pass,
    Fail,
    /// Returned for the substitution laws when no residual instances were
    /// supplied.
    Skipped,
    Inconclusive,
}

/// Outcome of one law of the wire-axiom battery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawResult {
    pub law: u8,
    pub description: String,
    pub verdict: LawVerdict,
    pub details: Vec<String>,
}

/// Report of the whole battery for one family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxiomReport {
    pub family: WireFamily,
    pub laws: Vec<LawResult>,
}

impl AxiomReport {
    /// True when no law failed or came back inconclusive (skipped laws are
    /// reported but do not count against the battery).
    pub fn all_passed(&self) -> bool {
        self.laws
            .iter()
            .all(|l| matches!(l.verdict, LawVerdict::Pass | LawVerdict::Skipped))
    }
}

/// Residual processes for the substitution laws 4-7.
///
/// The laws quantify over processes satisfying semantic respectfulness
/// premises that are not decidable in general; the battery therefore
/// instantiates them with supplied residuals (drawn from encodings of
/// corpus terms, where the premises are known to hold). This restriction
/// is a deliberate under-approximation and is noted in the report.
///
/// Each law wants residuals of the polarity its proviso demands, so the
/// four laws take four separate instance lists: a permeable input's body
/// inputs at its bound location and outputs at its bound variable, a
/// permeable output's body does the reverse, a replicated input's body
/// inputs at the replication parameter, and a variable output's body
/// outputs at its bound location.
#[derive(Debug, Clone, Default)]
pub struct SubstInstances {
    /// `(x, r, P)` for law 4: `P` sits under a permeable input `[q:(x,r)]`,
    /// using `x` in output and `r` in input.
    pub perm_in: Vec<(Name, Name, Process)>,
    /// `(x, r, P)` for law 5: `P` sits under a permeable output
    /// `[q^:(x,r)]`, using `x` in input and `r` in output.
    pub perm_out: Vec<(Name, Name, Process)>,
    /// `(p, P)` for law 6: `P` sits under a replicated input `!y(p)`,
    /// using the location `p` in input.
    pub repl: Vec<(Name, Process)>,
    /// `(p, P)` for law 7: `P` sits under a permeable variable output
    /// `[x^:(p)]`, using `p` in output.
    pub var_out: Vec<(Name, Process)>,
}

fn verdict_label(v: &Verdict) -> String {
    match v {
        Verdict::IndistinguishableUpTo { .. } => "indistinguishable".into(),
        Verdict::Distinguished { witness } => {
            format!("distinguished by {} on the {:?} side", witness.action, witness.side)
        }
        Verdict::Inconclusive { reason } => format!("inconclusive: {reason}"),
    }
}

fn merge(verdict: &mut LawVerdict, v: &Verdict) {
    match v {
        Verdict::IndistinguishableUpTo { .. } => {}
        Verdict::Distinguished { .. } => *verdict = LawVerdict::Fail,
        Verdict::Inconclusive { .. } => {
            if *verdict == LawVerdict::Pass {
                *verdict = LawVerdict::Inconclusive;
            }
        }
    }
}

/// Checks that `name` occurs in `body` only with the given polarity:
/// input subjects and wire input ends when `as_input`, output subjects and
/// wire output ends otherwise. Binders shadow.
fn polarity_ok(body: &Process, name: &Name, as_input: bool, env: &WireEnv) -> bool {
    match body {
        Process::Nil => true,
        Process::Input {
            subject,
            params,
            body,
        }
        | Process::ReplInput {
            subject,
            params,
            body,
        } => {
            (subject != name || as_input)
                && (params.contains(name) || polarity_ok(body, name, as_input, env))
        }
        Process::BoundOutput {
            subject,
            params,
            body,
        } => {
            (subject != name || !as_input)
                && (params.contains(name) || polarity_ok(body, name, as_input, env))
        }
        Process::Res { bound, body } => bound == name || polarity_ok(body, name, as_input, env),
        Process::Par { left, right } => {
            polarity_ok(left, name, as_input, env) && polarity_ok(right, name, as_input, env)
        }
        Process::ConstApp { name: c, args } => {
            if c == env.family.loc_const() || c == env.family.var_const() {
                let in_end = &args[0];
                let out_end = &args[1];
                (in_end != name || as_input) && (out_end != name || !as_input)
            } else {
                // Foreign constants: conservatively reject any occurrence.
                !args.contains(name)
            }
        }
    }
}

pub(crate) fn fresh_name(base: &str, sort: Sort, avoid: &mut BTreeSet<String>) -> Name {
    let mut id = base.to_string();
    while avoid.contains(&id) {
        id.push('\'');
    }
    avoid.insert(id.clone());
    Name { id, sort }
}

/// Runs the full axiom battery for one family.
///
/// Laws 1, 2 and 8 are syntactic; law 3 (transitivity) and the
/// substitution laws 4-7 are bounded expansion checks. An expansion
/// `L expands-to R` here means `expansion_bounded(R, L)` comes back
/// indistinguishable.
pub fn check_wire_axioms(w: &WireEnv, b: Budget, inst: &SubstInstances) -> AxiomReport {
    let env = &w.consts;
    let f = w.family;
    let mut laws = Vec::new();

    // Law 1: fn(a->b) = {a,b}; a used only in input, b only in output.
    {
        let mut verdict = LawVerdict::Pass;
        let mut details = Vec::new();
        for (cname, wire) in [
            (f.loc_const(), loc_wire(f, &Name::loc("a"), &Name::loc("b"))),
            (f.var_const(), var_wire(f, &Name::var("u0"), &Name::var("v0"))),
        ] {
            let def = env.lookup(cname).expect("wire constant registered");
            let frees = free_names(&wire, env).expect("wire free names");
            let expected: BTreeSet<Name> = def.params.iter().cloned().collect();
            if frees != expected {
                verdict = LawVerdict::Fail;
                details.push(format!("{cname}: free names {frees:?} differ from endpoints"));
            }
            let (a, bnd) = (&def.params[0], &def.params[1]);
            if !polarity_ok(&def.body, a, true, w) {
                verdict = LawVerdict::Fail;
                details.push(format!("{cname}: input end {} used in output", a.id));
            }
            if !polarity_ok(&def.body, bnd, false, w) {
                verdict = LawVerdict::Fail;
                details.push(format!("{cname}: output end {} used in input", bnd.id));
            }
        }
        laws.push(LawResult {
            law: 1,
            description: "free names are exactly the endpoints; input end used only in input, output end only in output".into(),
            verdict,
            details,
        });
    }

    // Law 2: no initial internal step.
    {
        let mut verdict = LawVerdict::Pass;
        let mut details = Vec::new();
        for wire in [
            loc_wire(f, &Name::loc("a"), &Name::loc("b")),
            var_wire(f, &Name::var("u0"), &Name::var("v0")),
        ] {
            match transitions_auto(&wire, env) {
                Ok(steps) => {
                    if steps.iter().any(|(act, _)| *act == Action::Tau) {
                        verdict = LawVerdict::Fail;
                        details.push(format!("{wire} has an initial internal step"));
                    } else {
                        details.push(format!(
                            "{wire}: {} initial action(s), none internal",
                            steps.len()
                        ));
                    }
                }
                Err(e) => {
                    verdict = LawVerdict::Inconclusive;
                    details.push(format!("{wire}: {e}"));
                }
            }
        }
        laws.push(LawResult {
            law: 2,
            description: "a wire has no initial internal step".into(),
            verdict,
            details,
        });
    }

    // Law 3: transitivity, nu b.( a->b | b->c ) expands-to a->c, for both
    // sorts.
    {
        let mut verdict = LawVerdict::Pass;
        let mut details = Vec::new();
        let (p, q, r) = (Name::loc("p"), Name::loc("q"), Name::loc("r"));
        let (x, y, z) = (Name::var("x"), Name::var("y"), Name::var("z"));
        let cases = [
            (
                "location",
                Process::res(
                    q.clone(),
                    Process::par(loc_wire(f, &p, &q), loc_wire(f, &q, &r)),
                ),
                loc_wire(f, &p, &r),
            ),
            (
                "variable",
                Process::res(
                    y.clone(),
                    Process::par(var_wire(f, &x, &y), var_wire(f, &y, &z)),
                ),
                var_wire(f, &x, &z),
            ),
        ];
        for (label, chain, direct) in cases {
            let v = expansion_bounded(&direct, &chain, env, b);
            merge(&mut verdict, &v);
            details.push(format!("{label}: {}", verdict_label(&v)));
        }
        laws.push(LawResult {
            law: 3,
            description: "wires are transitive: a chain through a restricted middle expands-to the direct wire".into(),
            verdict,
            details,
        });
    }

    // Laws 4-7: wires act as substitutions on permeable prefixes and
    // replicated inputs. Instantiated on supplied residuals only; the
    // respectfulness premises are assumed for them (they hold for encoded
    // terms), which is an under-approximation of the law's quantification.
    let law47 = |law: u8, description: &str, results: Vec<(String, Verdict)>, skipped: bool| {
        let mut verdict = if skipped {
            LawVerdict::Skipped
        } else {
            LawVerdict::Pass
        };
        let mut details = Vec::new();
        if skipped {
            details.push("no residual instances supplied".into());
        }
        for (label, v) in &results {
            merge(&mut verdict, v);
            details.push(format!("{label}: {}", verdict_label(v)));
        }
        LawResult {
            law,
            description: description.to_string(),
            verdict,
            details,
        }
    };

    // Law 4: nu q.( p->q | [q:(x,r)]P ) expands-to [p:(x,r)]P.
    {
        let mut results = Vec::new();
        for (i, (x, r, proc)) in inst.perm_in.iter().enumerate() {
            let mut avoid = all_ids(proc);
            avoid.insert(x.id.clone());
            avoid.insert(r.id.clone());
            let p = fresh_name("p", Sort::Loc, &mut avoid);
            let q = fresh_name("q", Sort::Loc, &mut avoid);
            let run = || -> Result<Verdict, PiError> {
                let lhs = Process::res(
                    q.clone(),
                    Process::par(
                        loc_wire(f, &p, &q),
                        permeable(w, PermeableKind::InLoc, &q, &[x.clone(), r.clone()], proc.clone())?,
                    ),
                );
                let rhs = permeable(w, PermeableKind::InLoc, &p, &[x.clone(), r.clone()], proc.clone())?;
                Ok(expansion_bounded(&rhs, &lhs, env, b))
            };
            let v = run().unwrap_or_else(|e| Verdict::Inconclusive {
                reason: e.to_string(),
            });
            results.push((format!("instance {i}"), v));
        }
        laws.push(law47(
            4,
            "a location wire substitutes through a permeable input",
            results,
            inst.perm_in.is_empty(),
        ));
    }

    // Law 5: nu p.( p->q | [p^:(x,r)]P ) expands-to [q^:(x,r)]P.
    {
        let mut results = Vec::new();
        for (i, (x, r, proc)) in inst.perm_out.iter().enumerate() {
            let mut avoid = all_ids(proc);
            avoid.insert(x.id.clone());
            avoid.insert(r.id.clone());
            let p = fresh_name("p", Sort::Loc, &mut avoid);
            let q = fresh_name("q", Sort::Loc, &mut avoid);
            let run = || -> Result<Verdict, PiError> {
                let lhs = Process::res(
                    p.clone(),
                    Process::par(
                        loc_wire(f, &p, &q),
                        permeable(w, PermeableKind::OutLoc, &p, &[x.clone(), r.clone()], proc.clone())?,
                    ),
                );
                let rhs = permeable(w, PermeableKind::OutLoc, &q, &[x.clone(), r.clone()], proc.clone())?;
                Ok(expansion_bounded(&rhs, &lhs, env, b))
            };
            let v = run().unwrap_or_else(|e| Verdict::Inconclusive {
                reason: e.to_string(),
            });
            results.push((format!("instance {i}"), v));
        }
        laws.push(law47(
            5,
            "a location wire substitutes through a permeable output",
            results,
            inst.perm_out.is_empty(),
        ));
    }

    // Law 6: nu y.( x->y | !y(p).P ) expands-to !x(p).P, y not free in P.
    {
        let mut results = Vec::new();
        for (i, (p, proc)) in inst.repl.iter().enumerate() {
            let mut avoid = all_ids(proc);
            avoid.insert(p.id.clone());
            let x = fresh_name("x", Sort::Var, &mut avoid);
            let y = fresh_name("y", Sort::Var, &mut avoid);
            let lhs = Process::res(
                y.clone(),
                Process::par(
                    var_wire(f, &x, &y),
                    Process::repl(y.clone(), vec![p.clone()], proc.clone()),
                ),
            );
            let rhs = Process::repl(x.clone(), vec![p.clone()], proc.clone());
            let v = expansion_bounded(&rhs, &lhs, env, b);
            results.push((format!("instance {i}"), v));
        }
        laws.push(law47(
            6,
            "a variable wire substitutes through a replicated input",
            results,
            inst.repl.is_empty(),
        ));
    }

    // Law 7: nu x.( x->y | [x^:(p)]P ) expands-to [y^:(p)]P, x not free in P.
    {
        let mut results = Vec::new();
        for (i, (p, proc)) in inst.var_out.iter().enumerate() {
            let mut avoid = all_ids(proc);
            avoid.insert(p.id.clone());
            let x = fresh_name("x", Sort::Var, &mut avoid);
            let y = fresh_name("y", Sort::Var, &mut avoid);
            let run = || -> Result<Verdict, PiError> {
                let lhs = Process::res(
                    x.clone(),
                    Process::par(
                        var_wire(f, &x, &y),
                        permeable(w, PermeableKind::OutVar, &x, &[p.clone()], proc.clone())?,
                    ),
                );
                let rhs = permeable(w, PermeableKind::OutVar, &y, &[p.clone()], proc.clone())?;
                Ok(expansion_bounded(&rhs, &lhs, env, b))
            };
            let v = run().unwrap_or_else(|e| Verdict::Inconclusive {
                reason: e.to_string(),
            });
            results.push((format!("instance {i}"), v));
        }
        laws.push(law47(
            7,
            "a variable wire substitutes through a permeable output",
            results,
            inst.var_out.is_empty(),
        ));
    }

    // Law 8: the variable wire is a replicated input at its input end.
    {
        let def = env.lookup(f.var_const()).expect("variable wire registered");
        let ok = matches!(&def.body, Process::ReplInput { subject, .. } if *subject == def.params[0]);
        laws.push(LawResult {
            law: 8,
            description: "the variable wire is a replicated input at its input end".into(),
            verdict: if ok { LawVerdict::Pass } else { LawVerdict::Fail },
            details: vec![],
        });
    }

    AxiomReport { family: f, laws }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equiv::weak_bisim_bounded;
    use crate::pii::{parse_process, sort_check, struct_normalize};

    fn pp(s: &str) -> Process {
        parse_process(s).expect("test process parses")
    }

    fn key(p: &Process, env: &ConstEnv) -> String {
        canonical_key(p, env)
    }

    #[test]
    fn wire_definitions_sort_check() {
        for f in WireFamily::all() {
            let w = wire_env(f);
            let lw = make_loc_wire(&w, &Name::loc("p"), &Name::loc("q")).unwrap();
            let vw = make_var_wire(&w, &Name::var("x"), &Name::var("y")).unwrap();
            sort_check(&lw, &w.consts).unwrap();
            sort_check(&vw, &w.consts).unwrap();
            assert!(make_loc_wire(&w, &Name::loc("p"), &Name::loc("p")).is_err());
            assert!(make_loc_wire(&w, &Name::var("x"), &Name::loc("p")).is_err());
            assert!(make_var_wire(&w, &Name::var("x"), &Name::loc("p")).is_err());
        }
    }

    #[test]
    fn io_loc_body_matches_the_inlined_definition() {
        let w = wire_env(WireFamily::IO);
        let def = w.consts.lookup("LinkIO").unwrap();
        let reference = pp(
            "a(y,p1). nu x,q1.( b!(x',q1').(LinkIO<q1,q1'> | VLinkIO<x',x>) \
             | LinkIO<p1,q1> | VLinkIO<x,y> )",
        );
        assert_eq!(key(&def.body, &w.consts), key(&reference, &w.consts));
    }

    #[test]
    fn var_body_matches_the_inlined_definition() {
        for f in WireFamily::all() {
            let w = wire_env(f);
            let def = w.consts.lookup(f.var_const()).unwrap();
            let lc = f.loc_const();
            let reference = pp(&format!(
                "!u0(p). nu q.( v0!(q').{lc}<q,q'> | {lc}<p,q> )"
            ));
            assert_eq!(key(&def.body, &w.consts), key(&reference, &w.consts));
        }
    }

    #[test]
    fn p_loc_body_matches_the_inlined_definition() {
        let w = wire_env(WireFamily::P);
        let def = w.consts.lookup("LinkP").unwrap();
        let reference = pp(
            "nu p1,q1,x,y.( a(y',p1').(LinkP<p1',p1> | VLinkP<y,y'>) \
             | b!(x',q1').(LinkP<q1,q1'> | VLinkP<x',x>) \
             | LinkP<p1,q1> | VLinkP<x,y> )",
        );
        assert_eq!(key(&def.body, &w.consts), key(&reference, &w.consts));
    }

    #[test]
    fn oi_loc_body_is_the_dual_and_matches_the_direct_definition() {
        let w = wire_env(WireFamily::OI);
        let def = w.consts.lookup("LinkOI").unwrap();
        // Direct definition: b!(x,q1). [a:(y,p1)]( p1->q1 | x->y ),
        // desugared by hand.
        let reference = pp(
            "b!(x,q1). nu y,p1.( a(y',p1').(VLinkOI<y,y'> | LinkOI<p1',p1>) \
             | LinkOI<p1,q1> | VLinkOI<x,y> )",
        );
        assert_eq!(key(&def.body, &w.consts), key(&reference, &w.consts));
    }

    #[test]
    fn p_loc_wire_is_self_dual() {
        let w = wire_env(WireFamily::P);
        let def = w.consts.lookup("LinkP").unwrap();
        let dual = dualize(&def.body, "LinkP", "LinkP", "VLinkP", "VLinkP");
        let swap: BTreeMap<Name, Name> = [
            (Name::loc("a"), Name::loc("b")),
            (Name::loc("b"), Name::loc("a")),
        ]
        .into_iter()
        .collect();
        let swapped = rename(&dual, &swap);
        // Self-duality is already structural here, which implies the
        // behavioral claim.
        assert_eq!(key(&swapped, &w.consts), key(&def.body, &w.consts));
        let v = weak_bisim_bounded(
            &swapped,
            &def.body,
            &w.consts,
            Budget::default().with_depth(2).with_tau(2),
        );
        assert!(v.is_indistinguishable(), "{v:?}");
    }

    #[test]
    fn io_wire_starts_with_its_input_only() {
        let w = wire_env(WireFamily::IO);
        let lw = make_loc_wire(&w, &Name::loc("p"), &Name::loc("q")).unwrap();
        let steps = transitions_auto(&lw, &w.consts).unwrap();
        assert_eq!(steps.len(), 1);
        assert!(
            matches!(&steps[0].0, Action::In { subject, .. } if subject == &Name::loc("p"))
        );
    }

    #[test]
    fn oi_wire_starts_with_its_output_only() {
        let w = wire_env(WireFamily::OI);
        let lw = make_loc_wire(&w, &Name::loc("p"), &Name::loc("q")).unwrap();
        let steps = transitions_auto(&lw, &w.consts).unwrap();
        assert_eq!(steps.len(), 1);
        assert!(
            matches!(&steps[0].0, Action::BOut { subject, .. } if subject == &Name::loc("q"))
        );
    }

    #[test]
    fn p_wire_offers_both_ends_concurrently() {
        let w = wire_env(WireFamily::P);
        let lw = make_loc_wire(&w, &Name::loc("p"), &Name::loc("q")).unwrap();
        let steps = transitions_auto(&lw, &w.consts).unwrap();
        let subjects: BTreeSet<String> = steps
            .iter()
            .filter_map(|(act, _)| act.subject().map(|n| n.id.clone()))
            .collect();
        assert!(subjects.contains("p"), "missing input end: {steps:?}");
        assert!(subjects.contains("q"), "missing output end: {steps:?}");
        assert!(steps.iter().all(|(act, _)| *act != Action::Tau));
    }

    #[test]
    fn var_wires_are_replicated_inputs() {
        for f in WireFamily::all() {
            let w = wire_env(f);
            let vw = make_var_wire(&w, &Name::var("x"), &Name::var("y")).unwrap();
            let frees = free_names(&vw, &w.consts).unwrap();
            let expected: BTreeSet<Name> = [Name::var("x"), Name::var("y")].into_iter().collect();
            assert_eq!(frees, expected);
            let steps = transitions_auto(&vw, &w.consts).unwrap();
            assert_eq!(steps.len(), 1);
            assert!(
                matches!(&steps[0].0, Action::In { subject, .. } if subject == &Name::var("x"))
            );
        }
    }

    #[test]
    fn permeable_matches_the_desugaring_displays() {
        for f in WireFamily::all() {
            let w = wire_env(f);
            let lc = f.loc_const();
            let vc = f.var_const();
            let body = pp("k!(w,s).0");
            // [p:(x,q)] body
            let got = permeable(
                &w,
                PermeableKind::InLoc,
                &Name::loc("p"),
                &[Name::var("x"), Name::loc("q")],
                body.clone(),
            )
            .unwrap();
            let reference = pp(&format!(
                "nu x,q.( p(x',q').({vc}<x,x'> | {lc}<q',q>) | k!(w,s).0 )"
            ));
            assert_eq!(key(&got, &w.consts), key(&reference, &w.consts));
            // [x^:(p)] body
            let got = permeable(
                &w,
                PermeableKind::OutVar,
                &Name::var("x"),
                &[Name::loc("p")],
                body.clone(),
            )
            .unwrap();
            let reference = pp(&format!("nu p.( x!(p').{lc}<p,p'> | k!(w,s).0 )"));
            assert_eq!(key(&got, &w.consts), key(&reference, &w.consts));
        }
    }

    #[test]
    fn permeable_blocks_only_the_bound_names() {
        let w = wire_env(WireFamily::IO);
        let body = pp("k!(w,s).0");
        let got = permeable(
            &w,
            PermeableKind::InLoc,
            &Name::loc("p"),
            &[Name::var("x"), Name::loc("q")],
            body,
        )
        .unwrap();
        let steps = transitions_auto(&got, &w.consts).unwrap();
        let subjects: BTreeSet<String> = steps
            .iter()
            .filter_map(|(act, _)| act.subject().map(|n| n.id.clone()))
            .collect();
        assert!(subjects.contains("k"), "body action blocked: {steps:?}");
        assert!(subjects.contains("p"), "prefix action missing: {steps:?}");
    }

    #[test]
    fn permeable_prefixes_satisfy_the_structural_laws() {
        let w = wire_env(WireFamily::IO);
        let body = pp("a!(w,s).c(u,s1).0");
        let mk_in = |inner: Process| {
            permeable(
                &w,
                PermeableKind::InLoc,
                &Name::loc("b"),
                &[Name::var("x"), Name::loc("q")],
                inner,
            )
            .unwrap()
        };
        // nu a.[b:(x,q)]P == [b:(x,q)](nu a.P) when a differs from b,x,q.
        let lhs = Process::res(Name::loc("a"), mk_in(body.clone()));
        let rhs = mk_in(Process::res(Name::loc("a"), body.clone()));
        assert_eq!(key(&lhs, &w.consts), key(&rhs, &w.consts));
        // Q | [b:(x,q)]P == [b:(x,q)](Q | P) when x,q are not free in Q.
        let q = pp("d(z,r).0");
        let lhs = Process::par(q.clone(), mk_in(body.clone()));
        let rhs = mk_in(Process::par(q, body));
        assert_eq!(key(&lhs, &w.consts), key(&rhs, &w.consts));
    }

    #[test]
    #[ignore = "diagnostic probe for per-family game cost; run explicitly"]
    fn probe_game_cost() {
        use std::time::Instant;
        for f in WireFamily::all() {
            let w = wire_env(f);
            let p_res = pp("a!(w,s).0");
            let q_res = pp("c(u,s0).0");
            let lhs = Process::res(
                Name::loc("p"),
                Process::par(
                    permeable(
                        &w,
                        PermeableKind::InLoc,
                        &Name::loc("p"),
                        &[Name::var("x"), Name::loc("q")],
                        p_res.clone(),
                    )
                    .unwrap(),
                    permeable(
                        &w,
                        PermeableKind::OutLoc,
                        &Name::loc("p"),
                        &[Name::var("x"), Name::loc("q")],
                        q_res.clone(),
                    )
                    .unwrap(),
                ),
            );
            let rhs = Process::res_many(
                vec![Name::var("x"), Name::loc("q")],
                Process::par(p_res, q_res),
            );
            let t0 = Instant::now();
            let lhs_n = crate::pii::struct_normalize(&lhs, &w.consts);
            eprintln!("{f}: normalize lhs in {:?}", t0.elapsed());
            let t0 = Instant::now();
            let steps = crate::lts::transitions_auto(&lhs_n, &w.consts).unwrap();
            eprintln!("{f}: {} lhs steps in {:?}", steps.len(), t0.elapsed());
            let t0 = Instant::now();
            let mut cache = crate::lts::StepCache::new();
            let wt = crate::lts::weak_transitions(
                &lhs_n,
                &w.consts,
                &crate::lts::ActionPattern::Tau,
                4,
                &mut cache,
            )
            .unwrap();
            eprintln!("{f}: tau closure {} states in {:?}", wt.len(), t0.elapsed());
            for d in 1..=3 {
                let t0 = Instant::now();
                let v = expansion_bounded(
                    &rhs,
                    &lhs,
                    &w.consts,
                    Budget::default().with_depth(d).with_tau(2),
                );
                eprintln!(
                    "{f}: depth {d} -> {:?} in {:?}",
                    v.is_indistinguishable(),
                    t0.elapsed()
                );
            }
        }
    }

    #[test]
    #[ignore = "diagnostic probe for tau-graph growth; run explicitly"]
    fn probe_tau_growth() {
        use crate::lts::{transitions, NameSupply};
        use std::time::Instant;
        for f in WireFamily::all() {
            let w = wire_env(f);
            let lhs = Process::res(
                Name::loc("p"),
                Process::par(
                    permeable(
                        &w,
                        PermeableKind::InLoc,
                        &Name::loc("p"),
                        &[Name::var("x"), Name::loc("q")],
                        pp("a!(w,s).0"),
                    )
                    .unwrap(),
                    permeable(
                        &w,
                        PermeableKind::OutLoc,
                        &Name::loc("p"),
                        &[Name::var("x"), Name::loc("q")],
                        pp("c(u,s0).0"),
                    )
                    .unwrap(),
                ),
            );
            let start = crate::pii::struct_normalize(&lhs, &w.consts);
            let mut frontier = vec![start.clone()];
            let mut seen = std::collections::BTreeSet::new();
            seen.insert(format!("{start:?}"));
            let t0 = Instant::now();
            for level in 1..=8 {
                let mut next = Vec::new();
                let mut tcount = 0usize;
                for st in &frontier {
                    let mut sup = NameSupply::for_exploration(&[st], &w.consts);
                    let steps = transitions(st, &w.consts, &mut sup).unwrap();
                    tcount += steps.len();
                    for (act, d) in steps {
                        if act != crate::pii::Action::Tau {
                            continue;
                        }
                        let n = crate::pii::struct_normalize(&d, &w.consts);
                        let k = format!("{n:?}");
                        if seen.insert(k) {
                            next.push(n);
                        }
                    }
                }
                let maxsz = next.iter().map(|p| format!("{p:?}").len()).max().unwrap_or(0);
                eprintln!(
                    "{f} level {level}: frontier {} new states, steps seen {tcount}, max state size {maxsz}, elapsed {:?}",
                    next.len(),
                    t0.elapsed()
                );
                if next.is_empty() {
                    break;
                }
                frontier = next;
            }
        }
    }

    #[test]
    fn permeable_communication_collapses() {
        // nu p.( [p:(x,q)]P | [p^:(x,q)]Q ) expands-to nu x,q.(P | Q) for
        // residuals that do not touch the exchanged names.
        for f in WireFamily::all() {
            let w = wire_env(f);
            let p_res = pp("a!(w,s).0");
            let q_res = pp("c(u,s0).0");
            let lhs = Process::res(
                Name::loc("p"),
                Process::par(
                    permeable(
                        &w,
                        PermeableKind::InLoc,
                        &Name::loc("p"),
                        &[Name::var("x"), Name::loc("q")],
                        p_res.clone(),
                    )
                    .unwrap(),
                    permeable(
                        &w,
                        PermeableKind::OutLoc,
                        &Name::loc("p"),
                        &[Name::var("x"), Name::loc("q")],
                        q_res.clone(),
                    )
                    .unwrap(),
                ),
            );
            let rhs = Process::res_many(
                vec![Name::var("x"), Name::loc("q")],
                Process::par(p_res, q_res),
            );
            let v = expansion_bounded(
                &rhs,
                &lhs,
                &w.consts,
                Budget::default().with_depth(3).with_tau(2),
            );
            assert!(v.is_indistinguishable(), "{f}: {v:?}");
        }
    }

    #[test]
    fn axiom_battery_syntactic_laws_pass() {
        for f in WireFamily::all() {
            let w = wire_env(f);
            let report = check_wire_axioms(
                &w,
                Budget::default().with_depth(2).with_tau(2),
                &SubstInstances::default(),
            );
            for law in &report.laws {
                match law.law {
                    1 | 2 | 8 => assert_eq!(
                        law.verdict,
                        LawVerdict::Pass,
                        "{f} law {}: {:?}",
                        law.law,
                        law.details
                    ),
                    4..=7 => assert_eq!(law.verdict, LawVerdict::Skipped),
                    _ => {}
                }
            }
            let json = serde_json::to_string(&report).unwrap();
            assert!(json.contains("\"family\""));
        }
    }

    #[test]
    fn io_wires_are_transitive_at_depth_four() {
        let w = wire_env(WireFamily::IO);
        let report = check_wire_axioms(
            &w,
            Budget::default().with_depth(4).with_tau(2),
            &SubstInstances::default(),
        );
        let law3 = report.laws.iter().find(|l| l.law == 3).unwrap();
        assert_eq!(law3.verdict, LawVerdict::Pass, "{:?}", law3.details);
    }

    #[test]
    fn normalization_keeps_wire_bodies_stable() {
        for f in WireFamily::all() {
            let w = wire_env(f);
            let def = w.consts.lookup(f.loc_const()).unwrap();
            let once = struct_normalize(&def.body, &w.consts);
            let twice = struct_normalize(&once, &w.consts);
            assert_eq!(once, twice);
        }
    }
}
