//! Untyped lambda-calculus: terms, capture-avoiding substitution, the
//! reduction relations (full beta, strong call-by-name, head reduction),
//! and fuel-bounded probes for head normal forms and order of unsolvability.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// A lambda-term. `==` is structural (name-sensitive); comparison modulo
/// alpha-conversion goes through [`Term::alpha_eq`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Lam(String, Box<Term>),
    App(Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn lam(binder: impl Into<String>, body: Term) -> Term {
        Term::Lam(binder.into(), Box::new(body))
    }

    pub fn lams<I: IntoIterator<Item = S>, S: Into<String>>(binders: I, body: Term) -> Term {
        let names: Vec<String> = binders.into_iter().map(Into::into).collect();
        names
            .into_iter()
            .rev()
            .fold(body, |acc, x| Term::lam(x, acc))
    }

    pub fn app(fun: Term, arg: Term) -> Term {
        Term::App(Box::new(fun), Box::new(arg))
    }

    pub fn apps<I: IntoIterator<Item = Term>>(head: Term, args: I) -> Term {
        args.into_iter().fold(head, Term::app)
    }

    /// Free variables, with binders removed under `Lam`.
    pub fn fv(&self) -> BTreeSet<String> {
        match self {
            Term::Var(x) => std::iter::once(x.clone()).collect(),
            Term::Lam(x, body) => {
                let mut s = body.fv();
                s.remove(x);
                s
            }
            Term::App(f, a) => {
                let mut s = f.fv();
                s.extend(a.fv());
                s
            }
        }
    }

    /// Canonical string key: bound variables are renamed to de-Bruijn-style
    /// levels, so two terms have equal keys iff they are alpha-equivalent.
    pub fn canonical_key(&self) -> String {
        fn go(
            t: &Term,
            env: &mut Vec<(String, usize)>,
            counter: &mut usize,
            out: &mut String,
        ) {
            match t {
                Term::Var(x) => {
                    match env.iter().rev().find(|(n, _)| n == x) {
                        Some((_, lvl)) => {
                            out.push('b');
                            out.push_str(&lvl.to_string());
                        }
                        None => {
                            out.push('f');
                            out.push(':');
                            out.push_str(x);
                        }
                    }
                }
                Term::Lam(x, body) => {
                    let lvl = *counter;
                    *counter += 1;
                    out.push('(');
                    out.push('L');
                    out.push_str(&lvl.to_string());
                    out.push('.');
                    env.push((x.clone(), lvl));
                    go(body, env, counter, out);
                    env.pop();
                    out.push(')');
                }
                Term::App(f, a) => {
                    out.push('(');
                    go(f, env, counter, out);
                    out.push(' ');
                    go(a, env, counter, out);
                    out.push(')');
                }
            }
        }
        let mut out = String::new();
        go(self, &mut Vec::new(), &mut 0, &mut out);
        out
    }

    /// Alpha-equivalence.
    pub fn alpha_eq(&self, other: &Term) -> bool {
        self.canonical_key() == other.canonical_key()
    }

    /// A canonical alpha-variant: every binder is renamed to `!k` where `k`
    /// numbers binding sites in preorder. Used for memoization and for the
    /// substitution-respects-alpha property; not meant for display.
    pub fn canonicalize(&self) -> Term {
        fn go(t: &Term, env: &BTreeMap<String, String>, counter: &mut usize) -> Term {
            match t {
                Term::Var(x) => Term::var(env.get(x).cloned().unwrap_or_else(|| x.clone())),
                Term::Lam(x, body) => {
                    let fresh = format!("!{}", *counter);
                    *counter += 1;
                    let mut env2 = env.clone();
                    env2.insert(x.clone(), fresh.clone());
                    Term::lam(fresh, go(body, &env2, counter))
                }
                Term::App(f, a) => Term::app(go(f, env, counter), go(a, env, counter)),
            }
        }
        go(self, &BTreeMap::new(), &mut 0)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        #[derive(Clone, Copy, PartialEq)]
        enum Ctx {
            Top,
            Fun,
            Arg,
        }
        fn go(t: &Term, ctx: Ctx, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match t {
                Term::Var(x) => write!(f, "{x}"),
                Term::Lam(..) => {
                    let mut binders = Vec::new();
                    let mut cur = t;
                    while let Term::Lam(x, body) = cur {
                        binders.push(x.as_str());
                        cur = body;
                    }
                    let parens = ctx != Ctx::Top;
                    if parens {
                        write!(f, "(")?;
                    }
                    write!(f, "\\{}.", binders.join(" "))?;
                    go(cur, Ctx::Top, f)?;
                    if parens {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
                Term::App(fun, arg) => {
                    let parens = ctx == Ctx::Arg;
                    if parens {
                        write!(f, "(")?;
                    }
                    go(fun, Ctx::Fun, f)?;
                    write!(f, " ")?;
                    go(arg, Ctx::Arg, f)?;
                    if parens {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
            }
        }
        go(self, Ctx::Top, f)
    }
}

/// Outcome of a fuel-bounded head-normal-form probe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HnfProbe {
    /// The term head-reduced to `\lams. head args` within fuel.
    Hnf {
        lams: Vec<String>,
        head: String,
        args: Vec<Term>,
    },
    /// Still head-reducible after `steps_used` head steps.
    FuelExhausted { steps_used: usize },
}

/// Outcome of a fuel-bounded order-of-unsolvability probe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderProbe {
    /// Certified (or fuel-limited) order `n`: head reduction exposed exactly
    /// `n` leading lambdas and the residual is order-0 unsolvable.
    /// `fuel_limited` is false when a head-reduction loop certifies the
    /// verdict, true when it rests on fuel exhaustion only.
    Order { n: usize, fuel_limited: bool },
    /// Fuel ran out while lambdas kept emerging: the order is at least `n`.
    AtLeast { n: usize },
    /// The term turned out to be solvable.
    SolvedInstead(HnfProbe),
}

/// Internal classification used where certified unsolvability matters
/// (tree construction and the tree-bisimulation game).
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum OrderClass {
    /// Head normal form reached within fuel; callers wanting the
    /// decomposition re-run `probe_hnf`.
    Solvable,
    /// Certified unsolvable of order exactly `n` (residual loop at fixed
    /// lambda depth).
    ExactOrder { n: usize },
    /// Certified unsolvable of infinite order (residual loop with strictly
    /// grown lambda depth).
    OmegaOrder { n_seen: usize },
    /// No certificate within fuel.
    Unknown { n_so_far: usize, lambda_late: bool },
}

/// Splits `t` into (leading binders, residual with no leading lambda).
fn strip_lams(mut t: Term) -> (Vec<String>, Term) {
    let mut lams = Vec::new();
    while let Term::Lam(x, body) = t {
        lams.push(x);
        t = *body;
    }
    (lams, t)
}

/// Splits an application spine: `t = head arg1 ... argn` with `head` not an
/// application.
fn strip_spine(mut t: Term) -> (Term, Vec<Term>) {
    let mut args = Vec::new();
    while let Term::App(f, a) = t {
        args.push(*a);
        t = *f;
    }
    args.reverse();
    (t, args)
}

fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let stem = base.split('#').next().unwrap_or(base).to_string();
    if !avoid.contains(&stem) {
        return stem;
    }
    let mut k = 1usize;
    loop {
        let cand = format!("{stem}#{k}");
        if !avoid.contains(&cand) {
            return cand;
        }
        k += 1;
    }
}

/// Capture-avoiding substitution `M[N/x]`. Binders that would capture a free
/// variable of `N` are renamed with the deterministic `base#k` scheme.
pub fn substitute(m: &Term, x: &str, n: &Term) -> Term {
    match m {
        Term::Var(y) => {
            if y == x {
                n.clone()
            } else {
                m.clone()
            }
        }
        Term::Lam(y, body) => {
            if y == x {
                m.clone()
            } else {
                let body_fv = body.fv();
                if !body_fv.contains(x) {
                    // x does not occur: nothing to do, keep the term intact.
                    m.clone()
                } else if n.fv().contains(y) {
                    let mut avoid = n.fv();
                    avoid.extend(body_fv);
                    avoid.insert(x.to_string());
                    avoid.insert(y.clone());
                    let y2 = fresh_name(y, &avoid);
                    let renamed = substitute(body, y, &Term::var(y2.clone()));
                    Term::lam(y2, substitute(&renamed, x, n))
                } else {
                    Term::lam(y.clone(), substitute(body, x, n))
                }
            }
        }
        Term::App(f, a) => Term::app(substitute(f, x, n), substitute(a, x, n)),
    }
}

fn dedup_alpha(terms: Vec<Term>) -> Vec<Term> {
    let mut seen = BTreeMap::new();
    for t in terms {
        seen.entry(t.canonical_key()).or_insert(t);
    }
    seen.into_values().collect()
}

/// All one-step reducts under full beta-reduction (rules beta, mu, nu, xi),
/// deduplicated modulo alpha and returned in a deterministic order.
pub fn step_full_beta(m: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    match m {
        Term::Var(_) => {}
        Term::Lam(x, body) => {
            for b in step_full_beta(body) {
                out.push(Term::lam(x.clone(), b));
            }
        }
        Term::App(f, a) => {
            if let Term::Lam(x, body) = f.as_ref() {
                out.push(substitute(body, x, a));
            }
            for f2 in step_full_beta(f) {
                out.push(Term::app(f2, (**a).clone()));
            }
            for a2 in step_full_beta(a) {
                out.push(Term::app((**f).clone(), a2));
            }
        }
    }
    dedup_alpha(out)
}

/// One-step reducts under strong call-by-name: rules beta, nu (function
/// position) and xi (under a binder); no reduction inside arguments.
pub fn step_strong_cbn(m: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    match m {
        Term::Var(_) => {}
        Term::Lam(x, body) => {
            for b in step_strong_cbn(body) {
                out.push(Term::lam(x.clone(), b));
            }
        }
        Term::App(f, a) => {
            if let Term::Lam(x, body) = f.as_ref() {
                out.push(substitute(body, x, a));
            }
            for f2 in step_strong_cbn(f) {
                out.push(Term::app(f2, (**a).clone()));
            }
        }
    }
    dedup_alpha(out)
}

/// Head reduction: contracts the head redex of `\xs.(\y.M0) M1 ... Mn`.
/// Returns `None` exactly when `m` is a head normal form.
pub fn step_head(m: &Term) -> Option<Term> {
    let (lams, residual) = strip_lams(m.clone());
    let (head, args) = strip_spine(residual);
    match head {
        Term::Var(_) => None,
        Term::Lam(x, body) => {
            // Lambda binders were stripped maximally, so args is non-empty.
            let mut it = args.into_iter();
            let first = it.next().expect("head lambda must be applied");
            let contracted = substitute(&body, &x, &first);
            Some(Term::lams(lams, Term::apps(contracted, it)))
        }
        Term::App(..) => unreachable!("strip_spine leaves no application head"),
    }
}

/// Iterates head reduction at most `fuel` times and reports either the head
/// normal form decomposition or fuel exhaustion.
pub fn probe_hnf(m: &Term, fuel: usize) -> HnfProbe {
    let mut cur = m.clone();
    let mut steps_used = 0usize;
    loop {
        match step_head(&cur) {
            None => {
                let (lams, residual) = strip_lams(cur);
                let (head, args) = strip_spine(residual);
                let head = match head {
                    Term::Var(x) => x,
                    _ => unreachable!("hnf head is a variable"),
                };
                return HnfProbe::Hnf { lams, head, args };
            }
            Some(next) => {
                if steps_used == fuel {
                    return HnfProbe::FuelExhausted { steps_used };
                }
                cur = next;
                steps_used += 1;
            }
        }
    }
}

/// Shared engine for `probe_order` and the internal certified classifier:
/// head-reduces, strips lambdas as they emerge, and watches the residual
/// (term under the stripped binders) for alpha-repeats.
pub(crate) fn classify_order(m: &Term, fuel: usize) -> OrderClass {
    let mut n = 0usize;
    let (lams0, mut cur) = strip_lams(m.clone());
    n += lams0.len();
    let mut steps = 0usize;
    let mut last_lambda_at = 0usize;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    loop {
        let (head, _args) = strip_spine(cur.clone());
        if matches!(head, Term::Var(_)) {
            return OrderClass::Solvable;
        }
        let key = cur.canonical_key();
        match seen.get(&key) {
            Some(&n_before) if n_before == n => return OrderClass::ExactOrder { n },
            Some(&n_before) if n_before < n => return OrderClass::OmegaOrder { n_seen: n },
            _ => {
                seen.insert(key, n);
            }
        }
        if steps == fuel {
            // No certificate: report how the run looked. `lambda_late` is
            // true when a lambda emerged within the second half of the run,
            // i.e. lambdas "kept appearing" up to exhaustion.
            let lambda_late = n > 0 && 2 * last_lambda_at >= steps;
            return OrderClass::Unknown {
                n_so_far: n,
                lambda_late,
            };
        }
        let next = step_head(&cur).expect("residual with lambda head is reducible");
        steps += 1;
        let (new_lams, residual) = strip_lams(next);
        if !new_lams.is_empty() {
            n += new_lams.len();
            last_lambda_at = steps;
        }
        cur = residual;
    }
}

/// Fuel-bounded probe for the order of unsolvability. `Order { n, .. }` is
/// certified by residual-loop detection (`fuel_limited: false`) or rests on
/// fuel exhaustion with no lambda in sight (`fuel_limited: true`);
/// `AtLeast { n }` is reported when fuel runs out while lambdas keep
/// emerging (this includes terms of infinite order, whose reported `n`
/// grows with fuel); `SolvedInstead` carries an hnf probe of the term.
pub fn probe_order(m: &Term, fuel: usize) -> OrderProbe {
    match classify_order(m, fuel) {
        OrderClass::Solvable => OrderProbe::SolvedInstead(probe_hnf(m, fuel)),
        OrderClass::ExactOrder { n } => OrderProbe::Order {
            n,
            fuel_limited: false,
        },
        OrderClass::OmegaOrder { n_seen } => {
            // The public probe has no infinite-order variant: keep consuming
            // fuel so the reported lower bound grows with the fuel given.
            let mut n = 0usize;
            let mut cur = {
                let (lams, residual) = strip_lams(m.clone());
                n += lams.len();
                residual
            };
            for _ in 0..fuel {
                match step_head(&cur) {
                    Some(next) => {
                        let (lams, residual) = strip_lams(next);
                        n += lams.len();
                        cur = residual;
                    }
                    None => break,
                }
            }
            OrderProbe::AtLeast { n: n.max(n_seen) }
        }
        OrderClass::Unknown {
            n_so_far,
            lambda_late,
        } => {
            if lambda_late {
                OrderProbe::AtLeast { n: n_so_far }
            } else {
                OrderProbe::Order {
                    n: n_so_far,
                    fuel_limited: true,
                }
            }
        }
    }
}

/// Syntax error with a character position into the input text.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("syntax error at position {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Lambda,
    Dot,
    LParen,
    RParen,
    Ident(String),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '\\' => {
                out.push((i, Tok::Lambda));
                i += 1;
            }
            '.' => {
                out.push((i, Tok::Dot));
                i += 1;
            }
            '(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                let mut s = String::new();
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '\'')
                {
                    s.push(chars[i]);
                    i += 1;
                }
                out.push((start, Tok::Ident(s)));
            }
            other => {
                return Err(ParseError {
                    pos: i,
                    msg: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// Predefined constant shorthands, expanded at parse time.
pub fn constant(name: &str) -> Option<Term> {
    let delta = Term::lam("x", Term::app(Term::var("x"), Term::var("x")));
    let ogre_half = Term::lams(["x", "y"], Term::app(Term::var("x"), Term::var("x")));
    let y_half = Term::lam(
        "x",
        Term::app(Term::var("f"), Term::app(Term::var("x"), Term::var("x"))),
    );
    let y = Term::lam("f", Term::app(y_half.clone(), y_half));
    match name {
        "Delta" => Some(delta),
        "Omega" => Some(Term::app(delta.clone(), delta)),
        "Ogre" => Some(Term::app(ogre_half.clone(), ogre_half)),
        "Y" => Some(y),
        "Einf" => Some(Term::app(
            y,
            Term::lams(
                ["f", "x", "y"],
                Term::app(
                    Term::var("x"),
                    Term::app(Term::var("f"), Term::var("y")),
                ),
            ),
        )),
        _ => None,
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.toks.get(self.pos)
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        let pos = self.peek().map(|(p, _)| *p).unwrap_or(self.end);
        ParseError {
            pos,
            msg: msg.into(),
        }
    }

    fn parse_expr(&mut self) -> Result<Term, ParseError> {
        let mut atoms: Vec<Term> = Vec::new();
        loop {
            match self.peek() {
                Some((_, Tok::Ident(_))) | Some((_, Tok::LParen)) => {
                    atoms.push(self.parse_atom()?);
                }
                Some((_, Tok::Lambda)) => {
                    // A lambda body extends maximally right, so it is always
                    // the last factor of an application.
                    atoms.push(self.parse_lambda()?);
                    break;
                }
                _ => break,
            }
        }
        let mut it = atoms.into_iter();
        match it.next() {
            None => Err(self.err_here("expected a term")),
            Some(first) => Ok(it.fold(first, Term::app)),
        }
    }

    fn parse_atom(&mut self) -> Result<Term, ParseError> {
        match self.peek().cloned() {
            Some((_, Tok::Ident(name))) => {
                self.pos += 1;
                Ok(constant(&name).unwrap_or(Term::Var(name)))
            }
            Some((_, Tok::LParen)) => {
                self.pos += 1;
                let t = self.parse_expr()?;
                match self.peek() {
                    Some((_, Tok::RParen)) => {
                        self.pos += 1;
                        Ok(t)
                    }
                    _ => Err(self.err_here("expected ')'")),
                }
            }
            _ => Err(self.err_here("expected a term")),
        }
    }

    fn parse_lambda(&mut self) -> Result<Term, ParseError> {
        // Consume the backslash.
        self.pos += 1;
        let mut binders = Vec::new();
        loop {
            match self.peek().cloned() {
                Some((p, Tok::Ident(name))) => {
                    if constant(&name).is_some() {
                        return Err(ParseError {
                            pos: p,
                            msg: format!("'{name}' is a reserved constant and cannot be bound"),
                        });
                    }
                    self.pos += 1;
                    binders.push(name);
                }
                _ => break,
            }
        }
        if binders.is_empty() {
            return Err(self.err_here("expected at least one binder after '\\'"));
        }
        match self.peek() {
            Some((_, Tok::Dot)) => {
                self.pos += 1;
            }
            _ => return Err(self.err_here("expected '.' after binders")),
        }
        let body = self.parse_expr()?;
        Ok(Term::lams(binders, body))
    }
}

/// Parses the text grammar `T ::= var | "\" var+ "." T | T T | "(" T ")"`;
/// application is left-associative and a lambda body extends maximally
/// right. The identifiers `Omega`, `Delta`, `Ogre`, `Y` and `Einf` denote
/// predefined constants.
pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.chars().count(),
    };
    let t = p.parse_expr()?;
    match p.peek() {
        None => Ok(t),
        Some((pos, tok)) => Err(ParseError {
            pos: *pos,
            msg: format!("unexpected trailing input: {tok:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: &str) -> Term {
        parse_term(s).expect("test term parses")
    }

    fn keys(ts: &[Term]) -> BTreeSet<String> {
        ts.iter().map(|t| t.canonical_key()).collect()
    }

    #[test]
    fn parse_basic_shapes() {
        assert!(p("\\x.x x").alpha_eq(&Term::lam(
            "x",
            Term::app(Term::var("x"), Term::var("x"))
        )));
        // Application groups to the left.
        assert!(p("m n l").alpha_eq(&Term::app(
            Term::app(Term::var("m"), Term::var("n")),
            Term::var("l")
        )));
        // Multi-binder sugar.
        assert!(p("\\x y.x").alpha_eq(&Term::lam("x", Term::lam("y", Term::var("x")))));
        // Lambda body extends maximally right.
        assert!(p("\\x.x y").alpha_eq(&Term::lam(
            "x",
            Term::app(Term::var("x"), Term::var("y"))
        )));
        assert!(p("a \\y.y z").alpha_eq(&Term::app(
            Term::var("a"),
            Term::lam("y", Term::app(Term::var("y"), Term::var("z")))
        )));
    }

    #[test]
    fn parse_errors_have_positions() {
        let e = parse_term("\\x.").unwrap_err();
        assert_eq!(e.pos, 3);
        assert!(parse_term("(x").is_err());
        assert!(parse_term("x)").is_err());
        assert!(parse_term("").is_err());
        assert!(parse_term("x $ y").is_err());
        assert!(parse_term("\\Omega.Omega").is_err());
    }

    #[test]
    fn constants_expand() {
        assert!(p("Delta").alpha_eq(&p("\\x.x x")));
        assert!(p("Omega").alpha_eq(&p("(\\x.x x) (\\x.x x)")));
        assert!(p("Ogre").alpha_eq(&p("(\\x y.x x) (\\x y.x x)")));
        assert!(p("Einf").alpha_eq(&Term::app(
            p("Y"),
            p("\\f x y.x (f y)")
        )));
    }

    #[test]
    fn substitution_examples() {
        // (\y.x)[z/x] = \y.z
        assert!(substitute(&p("\\y.x"), "x", &Term::var("z")).alpha_eq(&p("\\y.z")));
        // (\y.x y)[y/x] = \y'.y y' (capture avoided)
        let s = substitute(&p("\\y.x y"), "x", &Term::var("y"));
        assert!(s.alpha_eq(&p("\\w.y w")));
        if let Term::Lam(b, _) = &s {
            assert_ne!(b, "y");
        } else {
            panic!("expected a lambda");
        }
        // x[N/x] = N
        assert!(substitute(&Term::var("x"), "x", &p("\\y.y")).alpha_eq(&p("\\y.y")));
    }

    #[test]
    fn full_beta_examples() {
        assert_eq!(keys(&step_full_beta(&p("(\\x.x) y"))), keys(&[p("y")]));
        assert_eq!(keys(&step_full_beta(&p("Omega"))), keys(&[p("Omega")]));
        assert_eq!(
            keys(&step_full_beta(&p("(\\x.x) ((\\y.y) z)"))),
            keys(&[p("(\\y.y) z"), p("(\\x.x) z")])
        );
    }

    #[test]
    fn strong_cbn_examples() {
        assert!(step_strong_cbn(&p("x ((\\y.y) z)")).is_empty());
        assert_eq!(
            keys(&step_strong_cbn(&p("\\x.Omega"))),
            keys(&[p("\\x.Omega")])
        );
        // (\x.M) N: the beta-contraction plus nu/xi reducts of the function.
        let reducts = step_strong_cbn(&p("(\\x.(\\y.y) x w) N"));
        assert!(reducts
            .iter()
            .any(|t| t.alpha_eq(&p("(\\y.y) N w"))));
        assert!(reducts
            .iter()
            .any(|t| t.alpha_eq(&p("(\\x.x w) N"))));
        assert_eq!(reducts.len(), 2);
        // Argument positions are frozen even under a binder.
        assert!(step_strong_cbn(&p("\\x.x ((\\y.y) w)")).is_empty());
    }

    #[test]
    fn head_step_examples() {
        assert!(step_head(&p("Omega")).unwrap().alpha_eq(&p("Omega")));
        assert!(step_head(&p("Ogre")).unwrap().alpha_eq(&Term::lam("y", p("Ogre"))));
        assert!(step_head(&p("\\x.y m")).is_none());
    }

    #[test]
    fn probe_hnf_examples() {
        assert_eq!(
            probe_hnf(&p("Delta"), 1),
            HnfProbe::Hnf {
                lams: vec!["x".into()],
                head: "x".into(),
                args: vec![Term::var("x")],
            }
        );
        assert_eq!(
            probe_hnf(&p("Omega"), 100),
            HnfProbe::FuelExhausted { steps_used: 100 }
        );
        assert_eq!(
            probe_hnf(&p("(\\x.x) y"), 5),
            HnfProbe::Hnf {
                lams: vec![],
                head: "y".into(),
                args: vec![],
            }
        );
    }

    #[test]
    fn probe_order_examples() {
        assert_eq!(
            probe_order(&p("Omega"), 50),
            OrderProbe::Order {
                n: 0,
                fuel_limited: false
            }
        );
        assert_eq!(
            probe_order(&p("\\x.Omega"), 50),
            OrderProbe::Order {
                n: 1,
                fuel_limited: false
            }
        );
        let low = match probe_order(&p("Ogre"), 20) {
            OrderProbe::AtLeast { n } => n,
            other => panic!("expected AtLeast, got {other:?}"),
        };
        let high = match probe_order(&p("Ogre"), 40) {
            OrderProbe::AtLeast { n } => n,
            other => panic!("expected AtLeast, got {other:?}"),
        };
        assert!(low >= 1);
        assert!(high > low, "lower bound should grow with fuel");
    }

    #[test]
    fn probe_order_fuel_limited_without_loop() {
        // (\x.x x x)(\x.x x x) grows strictly, so no loop is ever detected;
        // the probe falls back to a fuel-limited order-0 verdict.
        let t = p("(\\x.x x x) (\\x.x x x)");
        assert_eq!(
            probe_order(&t, 30),
            OrderProbe::Order {
                n: 0,
                fuel_limited: true
            }
        );
    }

    #[test]
    fn solved_instead_after_enough_fuel() {
        let t = p("(\\x.x) (\\y.y w)");
        match probe_order(&t, 10) {
            OrderProbe::SolvedInstead(HnfProbe::Hnf { lams, head, .. }) => {
                assert_eq!(lams, vec!["y".to_string()]);
                assert_eq!(head, "y");
            }
            other => panic!("expected SolvedInstead, got {other:?}"),
        }
    }

    #[test]
    fn einf_unfolds_as_specified() {
        // Einf z head-reduces to \y.z (E y) where E behaves like Einf.
        let t = Term::app(p("Einf"), Term::var("z"));
        match probe_hnf(&t, 50) {
            HnfProbe::Hnf { lams, head, args } => {
                assert_eq!(lams.len(), 1);
                assert_eq!(head, "z");
                assert_eq!(args.len(), 1);
            }
            other => panic!("Einf z should reach an hnf, got {other:?}"),
        }
    }

    // Random term generator over a tiny variable pool, depth-bounded.
    fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            Just(Term::var("a")),
            Just(Term::var("b")),
            Just(Term::var("c")),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (prop_oneof![Just("a"), Just("b"), Just("c")], inner.clone())
                    .prop_map(|(x, t)| Term::lam(x, t)),
                (inner.clone(), inner).prop_map(|(f, a)| Term::app(f, a)),
            ]
        })
    }

    proptest! {
        #[test]
        fn head_step_is_a_strong_cbn_step(t in arb_term()) {
            if let Some(h) = step_head(&t) {
                let sn = step_strong_cbn(&t);
                prop_assert!(sn.iter().any(|s| s.alpha_eq(&h)),
                    "head reduct {h} not among strong-cbn reducts of {t}");
            }
        }

        #[test]
        fn strong_cbn_within_full_beta(t in arb_term()) {
            let full = keys(&step_full_beta(&t));
            for s in step_strong_cbn(&t) {
                prop_assert!(full.contains(&s.canonical_key()));
            }
        }

        #[test]
        fn substitute_respects_alpha(t in arb_term(), n in arb_term()) {
            let canon_first = substitute(&t.canonicalize(), "a", &n);
            let subst_first = substitute(&t, "a", &n);
            prop_assert!(canon_first.alpha_eq(&subst_first),
                "{canon_first} vs {subst_first}");
        }

        #[test]
        fn printer_parses_back(t in arb_term()) {
            let printed = t.to_string();
            let reparsed = parse_term(&printed).expect("printed term parses");
            prop_assert!(reparsed.alpha_eq(&t), "{printed}");
        }

        #[test]
        fn canonicalize_is_idempotent_key(t in arb_term()) {
            prop_assert_eq!(t.canonicalize().canonical_key(), t.canonical_key());
        }

        #[test]
        fn hnf_probe_implies_solved_instead(t in arb_term(), f in 0usize..16) {
            if matches!(probe_hnf(&t, f), HnfProbe::Hnf { .. }) {
                for extra in [0usize, 1, 7] {
                    let probe = probe_order(&t, f + extra);
                    prop_assert!(
                        matches!(probe, OrderProbe::SolvedInstead(HnfProbe::Hnf { .. })),
                        "expected SolvedInstead at fuel {}, got {:?}", f + extra, probe
                    );
                }
            }
        }
    }
}
