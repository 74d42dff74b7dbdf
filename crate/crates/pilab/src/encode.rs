//! Encodings of the untyped lambda-calculus into the internal pi-calculus.
//!
//! Three encodings are provided. Milner's original call-by-name encoding
//! uses free output, which internal-mobility processes cannot express; it
//! is kept in the widened [`MilnerProcess`] AST for reference and diffing
//! only. The abstract encoding replaces free outputs with bound outputs
//! plus wires and translates abstraction with a permeable input, so
//! reduction continues underneath lambda (strong call-by-name). The
//! optimised encoding additionally flattens application spines into
//! argument chains, removing administrative steps so that every internal
//! step of an encoded term mirrors a strong call-by-name reduction.
//!
//! Both pi-calculus encodings are parametric on a [`WireFamily`]; the
//! permeable prefixes they use are desugared by the wires module, so the
//! produced processes are plain sorted terms running under the family's
//! constant environment.

use crate::equiv::{expansion_bounded, Budget};
use crate::lambda::{step_strong_cbn, Term};
use crate::lts::{transitions_auto, weak_transitions, ActionPattern, StepCache};
use crate::pii::{all_ids, rename, Action, Name, PiError, Process, Sort};
use crate::wires::{
    fresh_name, make_loc_wire, permeable, wire_env, PermeableKind, SubstInstances, WireEnv,
    WireFamily,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Which encoding produced an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingVariant {
    Milner,
    Abstract,
    Optimised,
}

impl fmt::Display for EncodingVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EncodingVariant::Milner => "milner",
            EncodingVariant::Abstract => "abstract",
            EncodingVariant::Optimised => "optimised",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for EncodingVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<EncodingVariant, String> {
        match s.to_ascii_lowercase().as_str() {
            "milner" => Ok(EncodingVariant::Milner),
            "abstract" => Ok(EncodingVariant::Abstract),
            "optimised" | "optimized" => Ok(EncodingVariant::Optimised),
            other => Err(format!(
                "unknown encoding variant {other:?}; expected milner, abstract or optimised"
            )),
        }
    }
}

/// A lambda-term encoded as an abstraction `(p)P` of one location name.
///
/// The free names of `body` are the free variables of `source` (as
/// variable names) plus `param`; the body sort-checks under the family's
/// constant environment. Both invariants hold by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodedAgent {
    /// The location parameter `p` at which the term is called.
    pub param: Name,
    /// The fully desugared process body.
    pub body: Process,
    pub family: WireFamily,
    pub variant: EncodingVariant,
    pub source: Term,
    /// Surface view of the body with permeable prefixes and wires kept as
    /// sugar.
    pub sugared: Sugared,
}

impl EncodedAgent {
    /// Instantiates the abstraction at `loc`, renaming the location
    /// parameter throughout the body.
    pub fn at(&self, loc: &Name) -> Process {
        assert_eq!(loc.sort, Sort::Loc, "agents are located at location names");
        if *loc == self.param {
            return self.body.clone();
        }
        let map: BTreeMap<Name, Name> = [(self.param.clone(), loc.clone())].into();
        rename(&self.body, &map)
    }
}

impl fmt::Display for EncodedAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.param, self.sugared)
    }
}

/// Surface form of an encoded process: the encoding clauses verbatim, with
/// permeable prefixes and wires left as sugar instead of being desugared
/// into their wire definitions. Produced alongside the desugared body by
/// the same pass, so the two views always use identical names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sugared {
    Nil,
    Permeable {
        kind: PermeableKind,
        subject: Name,
        bound: Vec<Name>,
        body: Box<Sugared>,
    },
    /// A location wire `from -> to`.
    Wire { from: Name, to: Name },
    Repl {
        subject: Name,
        param: Name,
        body: Box<Sugared>,
    },
    Res {
        bound: Name,
        body: Box<Sugared>,
    },
    Par { comps: Vec<Sugared> },
}

impl Sugared {
    fn perm(kind: PermeableKind, subject: Name, bound: Vec<Name>, body: Sugared) -> Sugared {
        Sugared::Permeable {
            kind,
            subject,
            bound,
            body: Box::new(body),
        }
    }

    fn wire(from: Name, to: Name) -> Sugared {
        Sugared::Wire { from, to }
    }

    fn repl(subject: Name, param: Name, body: Sugared) -> Sugared {
        Sugared::Repl {
            subject,
            param,
            body: Box::new(body),
        }
    }

    fn res(bound: Name, body: Sugared) -> Sugared {
        Sugared::Res {
            bound,
            body: Box::new(body),
        }
    }

    fn par(comps: Vec<Sugared>) -> Sugared {
        Sugared::Par { comps }
    }
}

/// Renames free occurrences of `from` to `to`. The encoders bind only
/// names they generated fresh, so no occurrence of an agent's location
/// parameter is ever shadowed and the plain walk is capture-free.
fn rename_sugared(s: &Sugared, from: &Name, to: &Name) -> Sugared {
    let n = |x: &Name| if x == from { to.clone() } else { x.clone() };
    match s {
        Sugared::Nil => Sugared::Nil,
        Sugared::Permeable {
            kind,
            subject,
            bound,
            body,
        } => Sugared::perm(
            *kind,
            n(subject),
            bound.iter().map(&n).collect(),
            rename_sugared(body, from, to),
        ),
        Sugared::Wire { from: a, to: b } => Sugared::wire(n(a), n(b)),
        Sugared::Repl {
            subject,
            param,
            body,
        } => Sugared::repl(n(subject), n(param), rename_sugared(body, from, to)),
        Sugared::Res { bound, body } => Sugared::res(n(bound), rename_sugared(body, from, to)),
        Sugared::Par { comps } => {
            Sugared::par(comps.iter().map(|c| rename_sugared(c, from, to)).collect())
        }
    }
}

impl fmt::Display for Sugared {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn body_after(body: &Sugared, sep: &str, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if matches!(body, Sugared::Par { .. }) {
                write!(f, "{sep}(")?;
                go(body, f)?;
                write!(f, ")")
            } else {
                write!(f, "{sep}")?;
                go(body, f)
            }
        }
        fn go(s: &Sugared, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match s {
                Sugared::Nil => write!(f, "0"),
                Sugared::Permeable {
                    kind,
                    subject,
                    bound,
                    body,
                } => {
                    let hat = match kind {
                        PermeableKind::InLoc | PermeableKind::InVar => "",
                        PermeableKind::OutLoc | PermeableKind::OutVar => "^",
                    };
                    let names: Vec<String> = bound.iter().map(|n| n.to_string()).collect();
                    write!(f, "[{}{hat}:({})]", subject, names.join(","))?;
                    body_after(body, " ", f)
                }
                Sugared::Wire { from, to } => write!(f, "{from} -> {to}"),
                Sugared::Repl {
                    subject,
                    param,
                    body,
                } => {
                    write!(f, "!{subject}({param})")?;
                    body_after(body, ".", f)
                }
                Sugared::Res { bound, body } => {
                    write!(f, "nu {bound}")?;
                    body_after(body, ".", f)
                }
                Sugared::Par { comps } => {
                    for (i, c) in comps.iter().enumerate() {
                        if i > 0 {
                            write!(f, " | ")?;
                        }
                        // Prefix forms swallow everything to their right, so
                        // every component but the last gets parentheses
                        // unless it is already atomic.
                        let atomic = matches!(c, Sugared::Nil | Sugared::Wire { .. });
                        if i + 1 < comps.len() && !atomic {
                            write!(f, "(")?;
                            go(c, f)?;
                            write!(f, ")")?;
                        } else {
                            go(c, f)?;
                        }
                    }
                    Ok(())
                }
            }
        }
        go(self, f)
    }
}

// ---------------------------------------------------------------------
// Fresh names for encodings
// ---------------------------------------------------------------------

/// Every variable occurring in `t`, bound or free.
fn term_ids(t: &Term, out: &mut BTreeSet<String>) {
    match t {
        Term::Var(x) => {
            out.insert(x.clone());
        }
        Term::Lam(x, body) => {
            out.insert(x.clone());
            term_ids(body, out);
        }
        Term::App(fun, arg) => {
            term_ids(fun, out);
            term_ids(arg, out);
        }
    }
}

/// The default location parameter: `p`, primed until it avoids every
/// variable of the source term.
fn default_param(m: &Term) -> Name {
    let mut ids = BTreeSet::new();
    term_ids(m, &mut ids);
    let mut id = String::from("p");
    while ids.contains(&id) {
        id.push('\'');
    }
    Name::loc(id)
}

/// Deterministic per-encoding name supply: one counter per base, skipping
/// identifiers already used by the source term or the location parameter.
/// Encoding the same term twice therefore yields syntactically identical
/// processes.
struct EncCx<'a> {
    w: &'a WireEnv,
    counters: BTreeMap<&'static str, usize>,
    avoid: BTreeSet<String>,
}

impl<'a> EncCx<'a> {
    fn new(w: &'a WireEnv, m: &Term, param: &Name) -> EncCx<'a> {
        let mut avoid = BTreeSet::new();
        term_ids(m, &mut avoid);
        avoid.insert(param.id.clone());
        EncCx {
            w,
            counters: BTreeMap::new(),
            avoid,
        }
    }

    fn fresh(&mut self, base: &'static str, sort: Sort) -> Name {
        loop {
            let k = self.counters.entry(base).or_insert(0);
            let id = format!("{base}{k}");
            *k += 1;
            if !self.avoid.contains(&id) {
                return Name { id, sort };
            }
        }
    }

    // ⟦x⟧p = [x^:(p')] (p -> p'), shared by the abstract and optimised
    // encodings.
    fn var_clause(&mut self, x: &str, p: &Name) -> Result<(Process, Sugared), PiError> {
        let xn = Name::var(x);
        let pp = self.fresh("p", Sort::Loc);
        let wire = make_loc_wire(self.w, p, &pp)?;
        let proc = permeable(
            self.w,
            PermeableKind::OutVar,
            &xn,
            std::slice::from_ref(&pp),
            wire,
        )?;
        let sug = Sugared::perm(
            PermeableKind::OutVar,
            xn,
            vec![pp.clone()],
            Sugared::wire(p.clone(), pp),
        );
        Ok((proc, sug))
    }

    // ⟦lambda x. M⟧p = [p:(x,q)] ⟦M⟧q, parametric in the recursive call so
    // both encodings share it.
    fn lam_clause(
        &mut self,
        x: &str,
        p: &Name,
        enc_body: impl FnOnce(&mut Self, &Name) -> Result<(Process, Sugared), PiError>,
    ) -> Result<(Process, Sugared), PiError> {
        let xn = Name::var(x);
        let q = self.fresh("q", Sort::Loc);
        let (pb, sb) = enc_body(self, &q)?;
        let proc = permeable(
            self.w,
            PermeableKind::InLoc,
            p,
            &[xn.clone(), q.clone()],
            pb,
        )?;
        Ok((proc, Sugared::perm(PermeableKind::InLoc, p.clone(), vec![xn, q], sb)))
    }

    fn abstract_clause(&mut self, m: &Term, p: &Name) -> Result<(Process, Sugared), PiError> {
        match m {
            Term::Var(x) => self.var_clause(x, p),
            Term::Lam(x, body) => self.lam_clause(x, p, |cx, q| cx.abstract_clause(body, q)),
            Term::App(fun, arg) => {
                // ⟦M N⟧p = nu q ( ⟦M⟧q | [q^:(x,p')] (!x(r).⟦N⟧r | p -> p') )
                let q = self.fresh("q", Sort::Loc);
                let (pf, sf) = self.abstract_clause(fun, &q)?;
                let x = self.fresh("x", Sort::Var);
                let pp = self.fresh("p", Sort::Loc);
                let r = self.fresh("r", Sort::Loc);
                let (pa, sa) = self.abstract_clause(arg, &r)?;
                let wire = make_loc_wire(self.w, p, &pp)?;
                let inner = Process::par(Process::repl(x.clone(), vec![r.clone()], pa), wire);
                let out = permeable(
                    self.w,
                    PermeableKind::OutLoc,
                    &q,
                    &[x.clone(), pp.clone()],
                    inner,
                )?;
                let proc = Process::res(q.clone(), Process::par(pf, out));
                let sug = Sugared::res(
                    q.clone(),
                    Sugared::par(vec![
                        sf,
                        Sugared::perm(
                            PermeableKind::OutLoc,
                            q,
                            vec![x.clone(), pp.clone()],
                            Sugared::par(vec![
                                Sugared::repl(x, r, sa),
                                Sugared::wire(p.clone(), pp),
                            ]),
                        ),
                    ]),
                );
                Ok((proc, sug))
            }
        }
    }

    fn optimised_clause(&mut self, m: &Term, p: &Name) -> Result<(Process, Sugared), PiError> {
        let (head, args) = spine(m);
        match (head, args.is_empty()) {
            (Term::Var(x), true) => self.var_clause(x, p),
            (Term::Lam(x, body), true) => {
                self.lam_clause(x, p, |cx, q| cx.optimised_clause(body, q))
            }
            (Term::Var(x), false) => {
                // O⟦x M1 ... Mn⟧p = [x^:(p0)] O^n<p0, p; O⟦M1⟧ ... O⟦Mn⟧>
                let xn = Name::var(x.clone());
                let p0 = self.fresh("p", Sort::Loc);
                let (chain, chain_sug) =
                    self.chain(&p0, p, args.len(), |cx, i, r| cx.optimised_clause(args[i], r))?;
                let proc = permeable(
                    self.w,
                    PermeableKind::OutVar,
                    &xn,
                    std::slice::from_ref(&p0),
                    chain,
                )?;
                Ok((
                    proc,
                    Sugared::perm(PermeableKind::OutVar, xn, vec![p0], chain_sug),
                ))
            }
            (Term::Lam(x, m0), false) => {
                // O⟦(lambda x. M0) M1 ... Mn⟧p =
                //   nu p0 ( [p0:(x,q)] O⟦M0⟧q | O^n<p0, p; O⟦M1⟧ ... O⟦Mn⟧> )
                let p0 = self.fresh("p", Sort::Loc);
                let (lam, lam_sug) =
                    self.lam_clause(x, &p0, |cx, q| cx.optimised_clause(m0, q))?;
                let (chain, chain_sug) =
                    self.chain(&p0, p, args.len(), |cx, i, r| cx.optimised_clause(args[i], r))?;
                Ok((
                    Process::res(p0.clone(), Process::par(lam, chain)),
                    Sugared::res(p0, Sugared::par(vec![lam_sug, chain_sug])),
                ))
            }
            (Term::App(..), _) => unreachable!("spine heads are never applications"),
        }
    }

    // O^n<p0, p; A1 ... An> =
    //   [p0^:(x1,p1)] ... [p_{n-1}^:(xn,pn)]
    //     ( !x1(r1).A1<r1> | ... | !xn(rn).An<rn> | p -> pn )
    //
    // `enc(cx, i, r)` supplies the body of the i-th argument server,
    // located at `r`.
    fn chain(
        &mut self,
        p0: &Name,
        p: &Name,
        n: usize,
        mut enc: impl FnMut(&mut Self, usize, &Name) -> Result<(Process, Sugared), PiError>,
    ) -> Result<(Process, Sugared), PiError> {
        assert!(n > 0, "argument chains are nonempty");
        let mut xs = Vec::with_capacity(n);
        let mut ps = Vec::with_capacity(n);
        let mut servers = Vec::with_capacity(n + 1);
        let mut servers_sug = Vec::with_capacity(n + 1);
        for i in 0..n {
            let x = self.fresh("x", Sort::Var);
            let pi = self.fresh("p", Sort::Loc);
            let r = self.fresh("r", Sort::Loc);
            let (bp, bs) = enc(self, i, &r)?;
            servers.push(Process::repl(x.clone(), vec![r.clone()], bp));
            servers_sug.push(Sugared::repl(x.clone(), r, bs));
            xs.push(x);
            ps.push(pi);
        }
        let pn = ps.last().expect("chain has at least one link").clone();
        servers.push(make_loc_wire(self.w, p, &pn)?);
        servers_sug.push(Sugared::wire(p.clone(), pn));
        let mut proc = Process::par_many(servers);
        let mut sug = Sugared::par(servers_sug);
        for i in (0..n).rev() {
            let subject = if i == 0 { p0.clone() } else { ps[i - 1].clone() };
            proc = permeable(
                self.w,
                PermeableKind::OutLoc,
                &subject,
                &[xs[i].clone(), ps[i].clone()],
                proc,
            )?;
            sug = Sugared::perm(
                PermeableKind::OutLoc,
                subject,
                vec![xs[i].clone(), ps[i].clone()],
                sug,
            );
        }
        Ok((proc, sug))
    }
}

/// The application spine of a term: the non-application head and the
/// arguments left to right.
fn spine(m: &Term) -> (&Term, Vec<&Term>) {
    let mut head = m;
    let mut args = Vec::new();
    while let Term::App(fun, arg) = head {
        args.push(arg.as_ref());
        head = fun.as_ref();
    }
    args.reverse();
    (head, args)
}

// ---------------------------------------------------------------------
// The two pi-internal encodings
// ---------------------------------------------------------------------

/// The abstract encoding: variables become permeable outputs wrapping a
/// location wire, abstraction a permeable input, application a restricted
/// composition of the function with an argument server and a wire.
pub fn encode_abstract(family: WireFamily, m: &Term) -> EncodedAgent {
    let w = wire_env(family);
    let param = default_param(m);
    let mut cx = EncCx::new(&w, m, &param);
    let (body, sugared) = cx
        .abstract_clause(m, &param)
        .expect("abstract encoding is well-sorted by construction");
    EncodedAgent {
        param,
        body,
        family,
        variant: EncodingVariant::Abstract,
        source: m.clone(),
        sugared,
    }
}

/// The optimised encoding: head normal applications and head redexes feed
/// their argument spines into one nested chain of permeable outputs, so
/// every internal step of the result mirrors a strong call-by-name
/// reduction of the source.
pub fn encode_optimised(family: WireFamily, m: &Term) -> EncodedAgent {
    let w = wire_env(family);
    let param = default_param(m);
    let mut cx = EncCx::new(&w, m, &param);
    let (body, sugared) = cx
        .optimised_clause(m, &param)
        .expect("optimised encoding is well-sorted by construction");
    EncodedAgent {
        param,
        body,
        family,
        variant: EncodingVariant::Optimised,
        source: m.clone(),
        sugared,
    }
}

/// Convenience dispatch over the two pi-internal variants.
pub fn encode(family: WireFamily, variant: EncodingVariant, m: &Term) -> Option<EncodedAgent> {
    match variant {
        EncodingVariant::Abstract => Some(encode_abstract(family, m)),
        EncodingVariant::Optimised => Some(encode_optimised(family, m)),
        EncodingVariant::Milner => None,
    }
}

/// Builds the standalone argument chain `O^n<p0, p; A1 ... An>`: nested
/// permeable outputs walking from `p0` to a trailing wire into `p`, over
/// replicated servers holding the argument agents.
pub fn encode_argchain(
    family: WireFamily,
    p0: &Name,
    p: &Name,
    args: &[EncodedAgent],
) -> Result<Process, PiError> {
    let ill = |msg: String| PiError::Sort {
        path: "encode_argchain".into(),
        msg,
    };
    if args.is_empty() {
        return Err(ill("argument chains require at least one argument".into()));
    }
    if p0.sort != Sort::Loc || p.sort != Sort::Loc {
        return Err(ill(format!(
            "chain endpoints must be location names, got {p0:?} and {p:?}"
        )));
    }
    for a in args {
        if a.family != family {
            return Err(ill(format!(
                "argument encoded with {} wires in a {} chain",
                a.family, family
            )));
        }
    }
    let w = wire_env(family);
    let mut avoid: BTreeSet<String> = [p0.id.clone(), p.id.clone()].into();
    for a in args {
        avoid.extend(all_ids(&a.body));
        avoid.insert(a.param.id.clone());
    }
    let mut cx = EncCx {
        w: &w,
        counters: BTreeMap::new(),
        avoid,
    };
    let (proc, _) = cx.chain(p0, p, args.len(), |_, i, r| {
        Ok((
            args[i].at(r),
            rename_sugared(&args[i].sugared, &args[i].param, r),
        ))
    })?;
    Ok(proc)
}

// ---------------------------------------------------------------------
// Milner's original encoding (widened AST)
// ---------------------------------------------------------------------

/// Processes of the full pi-calculus as far as Milner's encoding needs
/// them: ordinary prefixes plus free output. Free output leaves internal
/// mobility, so this type is deliberately separate from [`Process`] and
/// nothing but printing and diffing accepts it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilnerProcess {
    Nil,
    Input {
        subject: Name,
        params: Vec<Name>,
        body: Box<MilnerProcess>,
    },
    ReplInput {
        subject: Name,
        params: Vec<Name>,
        body: Box<MilnerProcess>,
    },
    /// `s!<a1,...,an>.P`: emits free names, the capability Milner's
    /// encoding uses for variables and application.
    FreeOutput {
        subject: Name,
        args: Vec<Name>,
        body: Box<MilnerProcess>,
    },
    Res {
        bound: Name,
        body: Box<MilnerProcess>,
    },
    Par {
        left: Box<MilnerProcess>,
        right: Box<MilnerProcess>,
    },
    ConstApp {
        name: String,
        args: Vec<Name>,
    },
}

impl MilnerProcess {
    fn input(subject: Name, params: Vec<Name>, body: MilnerProcess) -> MilnerProcess {
        MilnerProcess::Input {
            subject,
            params,
            body: Box::new(body),
        }
    }

    fn repl(subject: Name, params: Vec<Name>, body: MilnerProcess) -> MilnerProcess {
        MilnerProcess::ReplInput {
            subject,
            params,
            body: Box::new(body),
        }
    }

    fn fout(subject: Name, args: Vec<Name>) -> MilnerProcess {
        MilnerProcess::FreeOutput {
            subject,
            args,
            body: Box::new(MilnerProcess::Nil),
        }
    }

    fn res(bound: Name, body: MilnerProcess) -> MilnerProcess {
        MilnerProcess::Res {
            bound,
            body: Box::new(body),
        }
    }

    fn par_many<I: IntoIterator<Item = MilnerProcess>>(comps: I) -> MilnerProcess {
        let mut items: Vec<MilnerProcess> = comps.into_iter().collect();
        match items.len() {
            0 => MilnerProcess::Nil,
            1 => items.pop().expect("one component"),
            _ => {
                let mut acc = items.pop().expect("several components");
                while let Some(item) = items.pop() {
                    acc = MilnerProcess::Par {
                        left: Box::new(item),
                        right: Box::new(acc),
                    };
                }
                acc
            }
        }
    }

    /// Embeds an internal-mobility process, realizing each bound output
    /// `s!(b).P` as the free-output form `nu b . s!<b>.P` it abbreviates.
    /// Wire constants are carried over verbatim.
    pub fn from_pi(p: &Process) -> MilnerProcess {
        match p {
            Process::Nil => MilnerProcess::Nil,
            Process::Input {
                subject,
                params,
                body,
            } => MilnerProcess::input(subject.clone(), params.clone(), Self::from_pi(body)),
            Process::ReplInput {
                subject,
                params,
                body,
            } => MilnerProcess::repl(subject.clone(), params.clone(), Self::from_pi(body)),
            Process::BoundOutput {
                subject,
                params,
                body,
            } => {
                let out = MilnerProcess::FreeOutput {
                    subject: subject.clone(),
                    args: params.clone(),
                    body: Box::new(Self::from_pi(body)),
                };
                params
                    .iter()
                    .rev()
                    .fold(out, |acc, b| MilnerProcess::res(b.clone(), acc))
            }
            Process::Res { bound, body } => {
                MilnerProcess::res(bound.clone(), Self::from_pi(body))
            }
            Process::Par { left, right } => MilnerProcess::Par {
                left: Box::new(Self::from_pi(left)),
                right: Box::new(Self::from_pi(right)),
            },
            Process::ConstApp { name, args } => MilnerProcess::ConstApp {
                name: name.clone(),
                args: args.clone(),
            },
        }
    }
}

impl fmt::Display for MilnerProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn prefix_body(body: &MilnerProcess, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if matches!(body, MilnerProcess::Par { .. }) {
                write!(f, ".(")?;
                go(body, f)?;
                write!(f, ")")
            } else {
                write!(f, ".")?;
                go(body, f)
            }
        }
        fn term(p: &MilnerProcess, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match p {
                MilnerProcess::Par { .. } => {
                    write!(f, "(")?;
                    go(p, f)?;
                    write!(f, ")")
                }
                _ => go(p, f),
            }
        }
        fn go(p: &MilnerProcess, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match p {
                MilnerProcess::Nil => write!(f, "0"),
                MilnerProcess::Input {
                    subject,
                    params,
                    body,
                } => {
                    let names: Vec<String> = params.iter().map(|n| n.to_string()).collect();
                    write!(f, "{}({})", subject, names.join(","))?;
                    prefix_body(body, f)
                }
                MilnerProcess::ReplInput {
                    subject,
                    params,
                    body,
                } => {
                    let names: Vec<String> = params.iter().map(|n| n.to_string()).collect();
                    write!(f, "!{}({})", subject, names.join(","))?;
                    prefix_body(body, f)
                }
                MilnerProcess::FreeOutput {
                    subject,
                    args,
                    body,
                } => {
                    let names: Vec<String> = args.iter().map(|n| n.to_string()).collect();
                    write!(f, "{}!<{}>", subject, names.join(","))?;
                    prefix_body(body, f)
                }
                MilnerProcess::Res { bound, body } => {
                    write!(f, "nu {bound}")?;
                    prefix_body(body, f)
                }
                MilnerProcess::Par { left, right } => {
                    term(left, f)?;
                    write!(f, " | ")?;
                    go(right, f)
                }
                MilnerProcess::ConstApp { name, args } => {
                    let names: Vec<String> = args.iter().map(|n| n.to_string()).collect();
                    write!(f, "{}<{}>", name, names.join(","))
                }
            }
        }
        go(self, f)
    }
}

/// Milner's encoding of a term: an abstraction of one location over a
/// widened process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MilnerAgent {
    pub param: Name,
    pub body: MilnerProcess,
    pub source: Term,
}

impl fmt::Display for MilnerAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.param, self.body)
    }
}

/// Milner's original call-by-name encoding. Variables emit their location
/// as a free output, abstractions are ordinary inputs, applications
/// compose the function with a free output of the trigger-location pair
/// and a replicated argument server.
pub fn encode_milner(m: &Term) -> MilnerAgent {
    fn clause(cx: &mut MilnerCx, m: &Term, p: &Name) -> MilnerProcess {
        match m {
            Term::Var(x) => MilnerProcess::fout(Name::var(x.clone()), vec![p.clone()]),
            Term::Lam(x, body) => {
                let q = cx.fresh("q", Sort::Loc);
                let inner = clause(cx, body, &q);
                MilnerProcess::input(p.clone(), vec![Name::var(x.clone()), q], inner)
            }
            Term::App(fun, arg) => {
                let q = cx.fresh("q", Sort::Loc);
                let ef = clause(cx, fun, &q);
                let x = cx.fresh("x", Sort::Var);
                let r = cx.fresh("r", Sort::Loc);
                let ea = clause(cx, arg, &r);
                MilnerProcess::res(
                    q.clone(),
                    MilnerProcess::res(
                        x.clone(),
                        MilnerProcess::par_many([
                            ef,
                            MilnerProcess::fout(q, vec![x.clone(), p.clone()]),
                            MilnerProcess::repl(x, vec![r], ea),
                        ]),
                    ),
                )
            }
        }
    }

    struct MilnerCx {
        counters: BTreeMap<&'static str, usize>,
        avoid: BTreeSet<String>,
    }
    impl MilnerCx {
        fn fresh(&mut self, base: &'static str, sort: Sort) -> Name {
            loop {
                let k = self.counters.entry(base).or_insert(0);
                let id = format!("{base}{k}");
                *k += 1;
                if !self.avoid.contains(&id) {
                    return Name { id, sort };
                }
            }
        }
    }

    let param = default_param(m);
    let mut avoid = BTreeSet::new();
    term_ids(m, &mut avoid);
    avoid.insert(param.id.clone());
    let mut cx = MilnerCx {
        counters: BTreeMap::new(),
        avoid,
    };
    let body = clause(&mut cx, m, &param);
    MilnerAgent {
        param,
        body,
        source: m.clone(),
    }
}

/// First structural difference between two widened processes, as a path
/// annotated description, or `None` when they are structurally equal.
pub fn milner_diff(a: &MilnerProcess, b: &MilnerProcess) -> Option<String> {
    fn head(p: &MilnerProcess) -> String {
        match p {
            MilnerProcess::Nil => "0".into(),
            MilnerProcess::Input { subject, .. } => format!("input at {subject}"),
            MilnerProcess::ReplInput { subject, .. } => format!("replicated input at {subject}"),
            MilnerProcess::FreeOutput { subject, args, .. } => {
                let names: Vec<String> = args.iter().map(|n| n.to_string()).collect();
                format!("free output {}!<{}>", subject, names.join(","))
            }
            MilnerProcess::Res { bound, .. } => format!("nu {bound}"),
            MilnerProcess::Par { .. } => "parallel composition".into(),
            MilnerProcess::ConstApp { name, .. } => format!("constant {name}"),
        }
    }
    fn go(a: &MilnerProcess, b: &MilnerProcess, path: &mut Vec<String>) -> Option<String> {
        use MilnerProcess as M;
        let differ = || {
            Some(format!(
                "at {}: {} vs {}",
                if path.is_empty() {
                    "top".to_string()
                } else {
                    path.join(".")
                },
                head(a),
                head(b)
            ))
        };
        match (a, b) {
            (M::Nil, M::Nil) => None,
            (
                M::Input {
                    subject: s1,
                    params: p1,
                    body: b1,
                },
                M::Input {
                    subject: s2,
                    params: p2,
                    body: b2,
                },
            )
            | (
                M::ReplInput {
                    subject: s1,
                    params: p1,
                    body: b1,
                },
                M::ReplInput {
                    subject: s2,
                    params: p2,
                    body: b2,
                },
            ) => {
                if s1 != s2 || p1 != p2 {
                    return differ();
                }
                path.push(format!("{s1}(..)"));
                let r = go(b1, b2, path);
                path.pop();
                r
            }
            (
                M::FreeOutput {
                    subject: s1,
                    args: a1,
                    body: b1,
                },
                M::FreeOutput {
                    subject: s2,
                    args: a2,
                    body: b2,
                },
            ) => {
                if s1 != s2 || a1 != a2 {
                    return differ();
                }
                path.push(format!("{s1}!<..>"));
                let r = go(b1, b2, path);
                path.pop();
                r
            }
            (
                M::Res {
                    bound: n1,
                    body: b1,
                },
                M::Res {
                    bound: n2,
                    body: b2,
                },
            ) => {
                if n1 != n2 {
                    return differ();
                }
                path.push(format!("nu {n1}"));
                let r = go(b1, b2, path);
                path.pop();
                r
            }
            (
                M::Par {
                    left: l1,
                    right: r1,
                },
                M::Par {
                    left: l2,
                    right: r2,
                },
            ) => {
                path.push("par.left".into());
                if let Some(d) = go(l1, l2, path) {
                    path.pop();
                    return Some(d);
                }
                path.pop();
                path.push("par.right".into());
                let r = go(r1, r2, path);
                path.pop();
                r
            }
            (M::ConstApp { name: n1, args: a1 }, M::ConstApp { name: n2, args: a2 }) => {
                if n1 != n2 || a1 != a2 {
                    differ()
                } else {
                    None
                }
            }
            _ => differ(),
        }
    }
    go(a, b, &mut Vec::new())
}

// ---------------------------------------------------------------------
// Operational-correspondence checks
// ---------------------------------------------------------------------

/// States reachable from the optimised encoding of `m` by internal steps
/// only, within `tau_budget`; includes the starting state.
fn tau_reachable(
    agent: &EncodedAgent,
    w: &WireEnv,
    tau_budget: usize,
) -> Result<Vec<Process>, PiError> {
    weak_transitions(
        &agent.body,
        &w.consts,
        &ActionPattern::Tau,
        tau_budget,
        &mut StepCache::new(),
    )
}

/// Checks that every input action of every internally reachable state of
/// the optimised encoding has the agent's location as subject. Returns the
/// violations found (empty on success).
pub fn check_input_localization(
    family: WireFamily,
    m: &Term,
    tau_budget: usize,
) -> Result<Vec<String>, PiError> {
    let w = wire_env(family);
    let agent = encode_optimised(family, m);
    let mut violations = Vec::new();
    for state in tau_reachable(&agent, &w, tau_budget)? {
        for (act, _) in transitions_auto(&state, &w.consts)? {
            if let Action::In { subject, .. } = &act {
                if *subject != agent.param {
                    violations.push(format!(
                        "input at {subject} (expected only {}) from {state}",
                        agent.param
                    ));
                }
            }
        }
    }
    Ok(violations)
}

/// Output actions the optimised encoding of `m` can perform after at most
/// `tau_budget` internal steps, deduplicated by subject.
pub fn reachable_outputs(
    family: WireFamily,
    m: &Term,
    tau_budget: usize,
) -> Result<Vec<Action>, PiError> {
    let w = wire_env(family);
    let agent = encode_optimised(family, m);
    let mut seen = BTreeSet::new();
    let mut outs = Vec::new();
    for state in tau_reachable(&agent, &w, tau_budget)? {
        for (act, _) in transitions_auto(&state, &w.consts)? {
            if let Action::BOut { subject, .. } = &act {
                if seen.insert(subject.clone()) {
                    outs.push(act.clone());
                }
            }
        }
    }
    Ok(outs)
}

/// Checks the internal-step correspondence of the optimised encoding:
/// every internal step of `O⟦m⟧p` lands in a process that expands the
/// encoding of some strong call-by-name reduct of `m`. Returns the
/// violations found (empty on success).
pub fn check_tau_correspondence(
    family: WireFamily,
    m: &Term,
    b: Budget,
) -> Result<Vec<String>, PiError> {
    let w = wire_env(family);
    let agent = encode_optimised(family, m);
    let reducts = step_strong_cbn(m);
    let mut violations = Vec::new();
    for (act, deriv) in transitions_auto(&agent.body, &w.consts)? {
        if act != Action::Tau {
            continue;
        }
        let matched = reducts.iter().any(|n| {
            let en = encode_optimised(family, n).at(&agent.param);
            expansion_bounded(&en, &deriv, &w.consts, b).is_indistinguishable()
        });
        if !matched {
            violations.push(format!(
                "internal step of O[{m}] reaches {deriv}, which expands no strong call-by-name reduct"
            ));
        }
    }
    Ok(violations)
}

// ---------------------------------------------------------------------
// Residual instances for the wire substitution laws
// ---------------------------------------------------------------------

/// Residuals for the wire substitution laws, drawn from encodings of the
/// given terms. Each law receives bodies of exactly the shape in which the
/// encodings place them under the corresponding prefix, so the laws'
/// respectfulness premises hold for every instance:
///
/// * law 4 gets abstraction-clause bodies `⟦M⟧r` with a free variable;
/// * law 5 gets application-clause bodies `!x(r).⟦M⟧r | p -> p'`;
/// * law 6 gets argument-server bodies `⟦M⟧p`;
/// * law 7 gets variable-clause bodies `p -> p'` and whole argument
///   chains.
pub fn subst_instances(family: WireFamily, terms: &[Term]) -> SubstInstances {
    let w = wire_env(family);
    let mut inst = SubstInstances::default();
    for m in terms {
        let agent = encode_abstract(family, m);
        let mut avoid = all_ids(&agent.body);
        avoid.insert(agent.param.id.clone());

        // Law 4: the body of ⟦lambda x. M⟧q is ⟦M⟧r with x free.
        let r = fresh_name("r", Sort::Loc, &mut avoid);
        let x = match m.fv().into_iter().next() {
            Some(v) => Name::var(v),
            None => fresh_name("u", Sort::Var, &mut avoid),
        };
        inst.perm_in.push((x, r.clone(), agent.at(&r)));

        // Law 5: the body of the application clause's permeable output,
        // !x(r).⟦M⟧r | p -> p', bound pair (x, p').
        let x5 = fresh_name("u", Sort::Var, &mut avoid);
        let r5 = fresh_name("r", Sort::Loc, &mut avoid);
        let p = fresh_name("s", Sort::Loc, &mut avoid);
        let pp = fresh_name("s", Sort::Loc, &mut avoid);
        let server = Process::repl(x5.clone(), vec![r5.clone()], agent.at(&r5));
        let wire = make_loc_wire(&w, &p, &pp).expect("distinct fresh location endpoints");
        inst.perm_out.push((x5, pp, Process::par(server, wire)));

        // Law 6: an argument server's body is ⟦M⟧p with p the replication
        // parameter.
        inst.repl.push((agent.param.clone(), agent.body.clone()));

        // Law 7: a whole argument chain sits under the head variable's
        // permeable output, bound at its entry location.
        let p0 = fresh_name("s", Sort::Loc, &mut avoid);
        let pf = fresh_name("s", Sort::Loc, &mut avoid);
        let opt = encode_optimised(family, m);
        let chain = encode_argchain(family, &p0, &pf, std::slice::from_ref(&opt))
            .expect("single-argument chain over a well-formed agent");
        inst.var_out.push((p0, chain));
    }
    // The variable clause puts a plain wire under its permeable output;
    // include that residual shape once.
    let mut avoid = BTreeSet::new();
    let a = fresh_name("s", Sort::Loc, &mut avoid);
    let b = fresh_name("s", Sort::Loc, &mut avoid);
    inst.var_out
        .push((b.clone(), make_loc_wire(&w, &a, &b).expect("distinct fresh endpoints")));
    inst
}
