//! Internal pi-calculus: sorted names, process syntax, constant
//! environments, free names, sort checking, capture-avoiding renaming,
//! parsing/printing, and structural normalization to a canonical
//! representative.
//!
//! Only bound outputs exist: an output prefix `a!(b).P` extrudes fresh
//! names, never free ones. Names come in two sorts: a location name
//! carries a (variable, location) pair and a variable name carries a
//! single location.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

/// The two sorts of names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sort {
    Loc,
    Var,
}

/// A sorted name. Equality and ordering include the sort, so the same
/// identifier with different sorts denotes different names (the parser
/// assigns one sort per identifier, so this cannot arise from text).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Name {
    pub id: String,
    pub sort: Sort,
}

impl Name {
    pub fn loc(id: impl Into<String>) -> Name {
        Name {
            id: id.into(),
            sort: Sort::Loc,
        }
    }

    pub fn var(id: impl Into<String>) -> Name {
        Name {
            id: id.into(),
            sort: Sort::Var,
        }
    }
}

/// The sort an identifier gets by spelling convention: identifiers whose
/// first letter is in `t..z` are variable names, other letters are
/// location names, anything else has no conventional sort and must be
/// annotated.
pub fn convention_sort(id: &str) -> Option<Sort> {
    let first = id.chars().next()?;
    if first.is_ascii_alphabetic() {
        if ('t'..='z').contains(&first.to_ascii_lowercase()) {
            Some(Sort::Var)
        } else {
            Some(Sort::Loc)
        }
    } else {
        None
    }
}

fn display_name(n: &Name) -> String {
    if convention_sort(&n.id) == Some(n.sort) {
        n.id.clone()
    } else {
        format!(
            "{}:{}",
            n.id,
            match n.sort {
                Sort::Loc => "Loc",
                Sort::Var => "Var",
            }
        )
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", display_name(self))
    }
}

/// Internal pi-calculus processes. All outputs are bound outputs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Process {
    Nil,
    Input {
        subject: Name,
        params: Vec<Name>,
        body: Box<Process>,
    },
    BoundOutput {
        subject: Name,
        params: Vec<Name>,
        body: Box<Process>,
    },
    Res {
        bound: Name,
        body: Box<Process>,
    },
    Par {
        left: Box<Process>,
        right: Box<Process>,
    },
    ReplInput {
        subject: Name,
        params: Vec<Name>,
        body: Box<Process>,
    },
    ConstApp {
        name: String,
        args: Vec<Name>,
    },
}

impl Process {
    pub fn input(subject: Name, params: Vec<Name>, body: Process) -> Process {
        Process::Input {
            subject,
            params,
            body: Box::new(body),
        }
    }

    pub fn bout(subject: Name, params: Vec<Name>, body: Process) -> Process {
        Process::BoundOutput {
            subject,
            params,
            body: Box::new(body),
        }
    }

    pub fn res(bound: Name, body: Process) -> Process {
        Process::Res {
            bound,
            body: Box::new(body),
        }
    }

    pub fn res_many<I: IntoIterator<Item = Name>>(bound: I, body: Process) -> Process {
        let names: Vec<Name> = bound.into_iter().collect();
        names
            .into_iter()
            .rev()
            .fold(body, |acc, n| Process::res(n, acc))
    }

    pub fn par(left: Process, right: Process) -> Process {
        Process::Par {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn par_many<I: IntoIterator<Item = Process>>(comps: I) -> Process {
        let mut v: Vec<Process> = comps.into_iter().collect();
        match v.len() {
            0 => Process::Nil,
            _ => {
                let last = v.pop().expect("nonempty");
                v.into_iter().rev().fold(last, |acc, p| Process::par(p, acc))
            }
        }
    }

    pub fn repl(subject: Name, params: Vec<Name>, body: Process) -> Process {
        Process::ReplInput {
            subject,
            params,
            body: Box::new(body),
        }
    }

    pub fn constapp(name: impl Into<String>, args: Vec<Name>) -> Process {
        Process::ConstApp {
            name: name.into(),
            args,
        }
    }
}

/// A constant definition: a parameter list and a name-closed body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstDef {
    pub params: Vec<Name>,
    pub body: Process,
}

/// Table of constant definitions. Bodies must be name-closed; mutual
/// recursion is permitted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstEnv {
    table: BTreeMap<String, ConstDef>,
}

/// Errors for parsing, sorting, and constant-environment validation.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PiError {
    #[error("syntax error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("sort error at {path}: {msg}")]
    Sort { path: String, msg: String },
    #[error("unknown constant {0}")]
    UnknownConst(String),
    #[error("constant {name}: {msg}")]
    BadConst { name: String, msg: String },
}

impl ConstEnv {
    pub fn new() -> ConstEnv {
        ConstEnv::default()
    }

    pub fn define(&mut self, name: impl Into<String>, params: Vec<Name>, body: Process) {
        self.table.insert(name.into(), ConstDef { params, body });
    }

    pub fn lookup(&self, name: &str) -> Option<&ConstDef> {
        self.table.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.table.keys()
    }

    /// Checks every definition: the body is name-closed relative to the
    /// parameters, sort-checks, and references only known constants with
    /// matching interfaces.
    pub fn validate(&self) -> Result<(), PiError> {
        for (name, def) in &self.table {
            let free = fn_set(&def.body);
            let params: BTreeSet<Name> = def.params.iter().cloned().collect();
            if let Some(extra) = free.iter().find(|n| !params.contains(n)) {
                return Err(PiError::BadConst {
                    name: name.clone(),
                    msg: format!("body is not name-closed: {extra} is free"),
                });
            }
            sort_check(&def.body, self).map_err(|e| PiError::BadConst {
                name: name.clone(),
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }
}

/// Free names, computed without unfolding constants (their bodies are
/// closed, so an application contributes exactly its arguments).
pub(crate) fn fn_set(p: &Process) -> BTreeSet<Name> {
    match p {
        Process::Nil => BTreeSet::new(),
        Process::Input {
            subject,
            params,
            body,
        }
        | Process::BoundOutput {
            subject,
            params,
            body,
        }
        | Process::ReplInput {
            subject,
            params,
            body,
        } => {
            let mut s = fn_set(body);
            for q in params {
                s.remove(q);
            }
            s.insert(subject.clone());
            s
        }
        Process::Res { bound, body } => {
            let mut s = fn_set(body);
            s.remove(bound);
            s
        }
        Process::Par { left, right } => {
            let mut s = fn_set(left);
            s.extend(fn_set(right));
            s
        }
        Process::ConstApp { args, .. } => args.iter().cloned().collect(),
    }
}

/// Every identifier occurring anywhere in the process, free or bound.
/// Used to seed fresh-name supplies.
pub fn all_ids(p: &Process) -> BTreeSet<String> {
    fn go(p: &Process, out: &mut BTreeSet<String>) {
        match p {
            Process::Nil => {}
            Process::Input {
                subject,
                params,
                body,
            }
            | Process::BoundOutput {
                subject,
                params,
                body,
            }
            | Process::ReplInput {
                subject,
                params,
                body,
            } => {
                out.insert(subject.id.clone());
                out.extend(params.iter().map(|n| n.id.clone()));
                go(body, out);
            }
            Process::Res { bound, body } => {
                out.insert(bound.id.clone());
                go(body, out);
            }
            Process::Par { left, right } => {
                go(left, out);
                go(right, out);
            }
            Process::ConstApp { args, .. } => {
                out.extend(args.iter().map(|n| n.id.clone()));
            }
        }
    }
    let mut out = BTreeSet::new();
    go(p, &mut out);
    out
}

/// Public free-name computation; errors on unknown constants.
pub fn free_names(p: &Process, env: &ConstEnv) -> Result<BTreeSet<Name>, PiError> {
    check_constants_known(p, env)?;
    Ok(fn_set(p))
}

fn check_constants_known(p: &Process, env: &ConstEnv) -> Result<(), PiError> {
    match p {
        Process::Nil => Ok(()),
        Process::Input { body, .. }
        | Process::BoundOutput { body, .. }
        | Process::ReplInput { body, .. }
        | Process::Res { body, .. } => check_constants_known(body, env),
        Process::Par { left, right } => {
            check_constants_known(left, env)?;
            check_constants_known(right, env)
        }
        Process::ConstApp { name, .. } => {
            if env.lookup(name).is_some() {
                Ok(())
            } else {
                Err(PiError::UnknownConst(name.clone()))
            }
        }
    }
}

pub(crate) fn expected_params(subject: &Name) -> &'static [Sort] {
    match subject.sort {
        Sort::Loc => &[Sort::Var, Sort::Loc],
        Sort::Var => &[Sort::Loc],
    }
}

fn sorts_of(names: &[Name]) -> Vec<Sort> {
    names.iter().map(|n| n.sort).collect()
}

fn sort_check_at(p: &Process, env: &ConstEnv, path: &mut Vec<String>) -> Result<(), PiError> {
    let err = |path: &[String], msg: String| {
        Err(PiError::Sort {
            path: if path.is_empty() {
                "top".to_string()
            } else {
                path.join("/")
            },
            msg,
        })
    };
    match p {
        Process::Nil => Ok(()),
        Process::Input {
            subject,
            params,
            body,
        }
        | Process::BoundOutput {
            subject,
            params,
            body,
        }
        | Process::ReplInput {
            subject,
            params,
            body,
        } => {
            let want = expected_params(subject);
            if sorts_of(params) != want {
                return err(
                    path,
                    format!(
                        "prefix at {subject} carries {:?}, expected {:?} (a location name carries a variable-location pair, a variable name carries one location)",
                        sorts_of(params),
                        want
                    ),
                );
            }
            path.push(format!("prefix({subject}).body"));
            let r = sort_check_at(body, env, path);
            path.pop();
            r
        }
        Process::Res { bound, body } => {
            path.push(format!("nu({bound})"));
            let r = sort_check_at(body, env, path);
            path.pop();
            r
        }
        Process::Par { left, right } => {
            path.push("par.left".to_string());
            sort_check_at(left, env, path)?;
            path.pop();
            path.push("par.right".to_string());
            let r = sort_check_at(right, env, path);
            path.pop();
            r
        }
        Process::ConstApp { name, args } => match env.lookup(name) {
            None => err(path, format!("unknown constant {name}")),
            Some(def) => {
                if sorts_of(args) != sorts_of(&def.params) {
                    err(
                        path,
                        format!(
                            "constant {name} applied to sorts {:?}, defined with {:?}",
                            sorts_of(args),
                            sorts_of(&def.params)
                        ),
                    )
                } else {
                    Ok(())
                }
            }
        },
    }
}

/// Verifies every prefix matches one of the four sorted shapes and every
/// constant application matches its definition's interface.
pub fn sort_check(p: &Process, env: &ConstEnv) -> Result<(), PiError> {
    sort_check_at(p, env, &mut Vec::new())
}

pub(crate) fn fresh_like(base: &Name, avoid: &BTreeSet<String>) -> Name {
    // Strip a trailing "#k" counter so renamings of renamings stay tidy;
    // ids that merely contain '#' elsewhere are kept whole.
    let stem = match base.id.rfind('#') {
        Some(i) if i > 0 && base.id[i + 1..].chars().all(|c| c.is_ascii_digit()) => {
            base.id[..i].to_string()
        }
        _ => base.id.clone(),
    };
    if !avoid.contains(&stem) {
        return Name {
            id: stem,
            sort: base.sort,
        };
    }
    let mut k = 1usize;
    loop {
        let cand = format!("{stem}#{k}");
        if !avoid.contains(&cand) {
            return Name {
                id: cand,
                sort: base.sort,
            };
        }
        k += 1;
    }
}

/// Capture-avoiding simultaneous renaming of free names.
pub fn rename(p: &Process, map: &BTreeMap<Name, Name>) -> Process {
    if map.is_empty() {
        return p.clone();
    }
    match p {
        Process::Nil => Process::Nil,
        Process::Par { left, right } => Process::par(rename(left, map), rename(right, map)),
        Process::ConstApp { name, args } => Process::constapp(
            name.clone(),
            args.iter()
                .map(|a| map.get(a).cloned().unwrap_or_else(|| a.clone()))
                .collect(),
        ),
        Process::Res { bound, body } => {
            let (binders, body2) = rebind(std::slice::from_ref(bound), body, map);
            let b = binders.into_iter().next().expect("one binder");
            Process::res(b, body2)
        }
        Process::Input {
            subject,
            params,
            body,
        } => {
            let s = map.get(subject).cloned().unwrap_or_else(|| subject.clone());
            let (params2, body2) = rebind(params, body, map);
            Process::input(s, params2, body2)
        }
        Process::BoundOutput {
            subject,
            params,
            body,
        } => {
            let s = map.get(subject).cloned().unwrap_or_else(|| subject.clone());
            let (params2, body2) = rebind(params, body, map);
            Process::bout(s, params2, body2)
        }
        Process::ReplInput {
            subject,
            params,
            body,
        } => {
            let s = map.get(subject).cloned().unwrap_or_else(|| subject.clone());
            let (params2, body2) = rebind(params, body, map);
            Process::repl(s, params2, body2)
        }
    }
}

/// Renames under a binder list: entries whose source is shadowed are
/// dropped, and binders that would capture an incoming name are freshened
/// first.
fn rebind(binders: &[Name], body: &Process, map: &BTreeMap<Name, Name>) -> (Vec<Name>, Process) {
    let binder_set: BTreeSet<Name> = binders.iter().cloned().collect();
    let inner: BTreeMap<Name, Name> = map
        .iter()
        .filter(|(k, _)| !binder_set.contains(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let body_fn = fn_set(body);
    // A binder captures if some incoming target name equals it while its
    // source actually occurs in the body.
    let captures: Vec<&Name> = binders
        .iter()
        .filter(|b| {
            inner
                .iter()
                .any(|(k, v)| v == *b && body_fn.contains(k))
        })
        .collect();
    if captures.is_empty() {
        return (binders.to_vec(), rename(body, &inner));
    }
    let mut avoid: BTreeSet<String> = body_fn.iter().map(|n| n.id.clone()).collect();
    avoid.extend(inner.keys().map(|n| n.id.clone()));
    avoid.extend(inner.values().map(|n| n.id.clone()));
    avoid.extend(binders.iter().map(|n| n.id.clone()));
    let mut pre: BTreeMap<Name, Name> = BTreeMap::new();
    let mut new_binders = Vec::new();
    for b in binders {
        if captures.iter().any(|c| *c == b) {
            let nb = fresh_like(b, &avoid);
            avoid.insert(nb.id.clone());
            pre.insert(b.clone(), nb.clone());
            new_binders.push(nb);
        } else {
            new_binders.push(b.clone());
        }
    }
    let body2 = rename(body, &pre);
    (new_binders, rename(&body2, &inner))
}

/// Unfolds one constant application: the defining body with actual
/// arguments substituted for the parameters.
pub fn unfold_const(name: &str, args: &[Name], env: &ConstEnv) -> Result<Process, PiError> {
    let def = env
        .lookup(name)
        .ok_or_else(|| PiError::UnknownConst(name.to_string()))?;
    if def.params.len() != args.len() {
        return Err(PiError::BadConst {
            name: name.to_string(),
            msg: format!(
                "arity mismatch: applied to {} arguments, defined with {}",
                args.len(),
                def.params.len()
            ),
        });
    }
    let map: BTreeMap<Name, Name> = def
        .params
        .iter()
        .cloned()
        .zip(args.iter().cloned())
        .collect();
    Ok(rename(&def.body, &map))
}

// ---------------------------------------------------------------------
// Structural normalization
// ---------------------------------------------------------------------

fn flatten_into(p: Process, out: &mut Vec<Process>) {
    match p {
        Process::Nil => {}
        Process::Par { left, right } => {
            flatten_into(*left, out);
            flatten_into(*right, out);
        }
        other => out.push(other),
    }
}

/// True when every free occurrence of `x` in `p` is as the subject of an
/// output prefix (never input subject, never an argument).
pub(crate) fn only_output_subject(p: &Process, x: &Name) -> bool {
    match p {
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
        } => subject != x && (params.contains(x) || only_output_subject(body, x)),
        Process::BoundOutput { params, body, .. } => {
            // The subject may be x: that is the allowed position.
            params.contains(x) || only_output_subject(body, x)
        }
        Process::Res { bound, body } => bound == x || only_output_subject(body, x),
        Process::Par { left, right } => {
            only_output_subject(left, x) && only_output_subject(right, x)
        }
        Process::ConstApp { args, .. } => !args.contains(x),
    }
}

fn is_gc_server(p: &Process, x: &Name) -> bool {
    match p {
        Process::ReplInput { subject, body, .. } => subject == x && only_output_subject(body, x),
        _ => false,
    }
}

fn rewrite(p: &Process, enable_gc: bool) -> Process {
    match p {
        Process::Nil => Process::Nil,
        Process::Input {
            subject,
            params,
            body,
        } => Process::input(subject.clone(), params.clone(), rewrite(body, enable_gc)),
        Process::BoundOutput {
            subject,
            params,
            body,
        } => Process::bout(subject.clone(), params.clone(), rewrite(body, enable_gc)),
        Process::ReplInput {
            subject,
            params,
            body,
        } => Process::repl(subject.clone(), params.clone(), rewrite(body, enable_gc)),
        Process::ConstApp { .. } => p.clone(),
        Process::Par { .. } | Process::Res { .. } => rewrite_zone(p, enable_gc),
    }
}

/// Gathers a maximal region of nested restrictions and parallel
/// compositions into (binders, components), renaming each gathered binder
/// to a region-local placeholder so that hoisting cannot capture anything.
fn gather_zone(
    p: &Process,
    map: &BTreeMap<Name, Name>,
    binders: &mut Vec<Name>,
    comps: &mut Vec<Process>,
    enable_gc: bool,
) {
    match p {
        Process::Nil => {}
        Process::Par { left, right } => {
            gather_zone(left, map, binders, comps, enable_gc);
            gather_zone(right, map, binders, comps, enable_gc);
        }
        Process::Res { bound, body } => {
            let temp = Name {
                id: format!("#z{}", binders.len()),
                sort: bound.sort,
            };
            binders.push(temp.clone());
            let mut m2 = map.clone();
            m2.insert(bound.clone(), temp);
            gather_zone(body, &m2, binders, comps, enable_gc);
        }
        other => {
            let leaf = rewrite(&rename(other, map), enable_gc);
            if leaf != Process::Nil {
                comps.push(leaf);
            }
        }
    }
}

/// Normalizes a restriction/parallel region: drops nil units and unused
/// restrictions, garbage-collects inert replicated servers on restricted
/// names, narrows every restriction to the components that use it, and
/// groups entangled restrictions canonically.
fn rewrite_zone(p: &Process, enable_gc: bool) -> Process {
    let mut binders = Vec::new();
    let mut comps: Vec<Process> = Vec::new();
    gather_zone(p, &BTreeMap::new(), &mut binders, &mut comps, enable_gc);

    // Deterministic component order (final ordering happens in canonize,
    // which re-sorts; this order fixes binder usage indexes).
    let mut keyed: Vec<(String, Process)> = comps
        .into_iter()
        .map(|c| {
            let canon = canonize(&c, &BTreeMap::new(), &mut 0);
            (format!("{canon:?}"), c)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let mut comps: Vec<Process> = keyed.into_iter().map(|(_, c)| c).collect();

    // Garbage collection: a restricted name whose every using component is
    // a replicated input server on it (with the name occurring in the body
    // only as an output subject) can never be sent on, so the servers are
    // inert and vanish together with the restriction.
    if enable_gc {
        loop {
            let mut removed = false;
            for b in binders.clone() {
                let users: Vec<usize> = comps
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| fn_set(c).contains(&b))
                    .map(|(i, _)| i)
                    .collect();
                if !users.is_empty() && users.iter().all(|&i| is_gc_server(&comps[i], &b)) {
                    for &i in users.iter().rev() {
                        comps.remove(i);
                    }
                    binders.retain(|x| *x != b);
                    removed = true;
                }
            }
            if !removed {
                break;
            }
        }
    }

    // Drop restrictions nothing uses.
    binders.retain(|b| comps.iter().any(|c| fn_set(c).contains(b)));

    // Group components connected through shared binders; each group gets
    // its binders wrapped around it, components not using any binder float
    // free. Grouping plus the binder ordering below is invariant under
    // binder permutation of the input.
    let usage: Vec<(Name, Vec<usize>)> = binders
        .iter()
        .map(|b| {
            (
                b.clone(),
                comps
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| fn_set(c).contains(b))
                    .map(|(i, _)| i)
                    .collect(),
            )
        })
        .collect();
    let mut part: Vec<usize> = (0..comps.len()).collect();
    fn find(part: &mut Vec<usize>, i: usize) -> usize {
        if part[i] != i {
            let root = find(part, part[i]);
            part[i] = root;
        }
        part[i]
    }
    for (_, users) in &usage {
        for w in users.windows(2) {
            let (a, b) = (find(&mut part, w[0]), find(&mut part, w[1]));
            if a != b {
                part[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<Name>, Vec<Process>)> = BTreeMap::new();
    let roots: Vec<usize> = (0..comps.len()).map(|i| find(&mut part, i)).collect();
    for (i, c) in comps.into_iter().enumerate() {
        groups.entry(roots[i]).or_default().1.push(c);
    }
    for (b, users) in usage {
        let root = find(&mut part, users[0]);
        groups
            .get_mut(&root)
            .expect("binder's components are grouped")
            .0
            .push(b);
    }
    // Binder order within a group: by usage profile, then sort, keeping
    // gather order for exact ties.
    let usage_of = |b: &Name, comps: &[Process]| -> Vec<usize> {
        comps
            .iter()
            .enumerate()
            .filter(|(_, c)| fn_set(c).contains(b))
            .map(|(i, _)| i)
            .collect()
    };
    let mut out: Vec<Process> = Vec::new();
    for (_, (mut bs, cs)) in groups {
        bs.sort_by_key(|b| (usage_of(b, &cs), b.sort));
        out.push(Process::res_many(bs, Process::par_many(cs)));
    }
    Process::par_many(out)
}

fn canon_name(sort: Sort, counter: &mut usize) -> Name {
    let id = match sort {
        Sort::Loc => format!("#l{}", *counter),
        Sort::Var => format!("#v{}", *counter),
    };
    *counter += 1;
    Name { id, sort }
}

/// Bump every canonical placeholder index at or above `base` by `delta`.
/// Only applies to names already produced by [`canon_name`], so the rewrite
/// is injective and capture-free.
fn shift_canonical(p: Process, base: usize, delta: usize) -> Process {
    fn shift_name(n: Name, base: usize, delta: usize) -> Name {
        let tail = match n.id.strip_prefix("#l").or_else(|| n.id.strip_prefix("#v")) {
            Some(t) => t,
            None => return n,
        };
        match tail.parse::<usize>() {
            Ok(k) if k >= base => {
                let tag = match n.sort {
                    Sort::Loc => "#l",
                    Sort::Var => "#v",
                };
                Name {
                    id: format!("{tag}{}", k + delta),
                    sort: n.sort,
                }
            }
            _ => n,
        }
    }
    fn shift_names(ns: Vec<Name>, base: usize, delta: usize) -> Vec<Name> {
        ns.into_iter().map(|n| shift_name(n, base, delta)).collect()
    }
    match p {
        Process::Nil => Process::Nil,
        Process::Input {
            subject,
            params,
            body,
        } => Process::Input {
            subject: shift_name(subject, base, delta),
            params: shift_names(params, base, delta),
            body: Box::new(shift_canonical(*body, base, delta)),
        },
        Process::BoundOutput {
            subject,
            params,
            body,
        } => Process::BoundOutput {
            subject: shift_name(subject, base, delta),
            params: shift_names(params, base, delta),
            body: Box::new(shift_canonical(*body, base, delta)),
        },
        Process::ReplInput {
            subject,
            params,
            body,
        } => Process::ReplInput {
            subject: shift_name(subject, base, delta),
            params: shift_names(params, base, delta),
            body: Box::new(shift_canonical(*body, base, delta)),
        },
        Process::Res { bound, body } => Process::Res {
            bound: shift_name(bound, base, delta),
            body: Box::new(shift_canonical(*body, base, delta)),
        },
        Process::Par { left, right } => Process::Par {
            left: Box::new(shift_canonical(*left, base, delta)),
            right: Box::new(shift_canonical(*right, base, delta)),
        },
        Process::ConstApp { name, args } => Process::ConstApp {
            name,
            args: shift_names(args, base, delta),
        },
    }
}

fn canonize(p: &Process, map: &BTreeMap<Name, Name>, counter: &mut usize) -> Process {
    match p {
        Process::Nil => Process::Nil,
        Process::ConstApp { name, args } => Process::constapp(
            name.clone(),
            args.iter()
                .map(|a| map.get(a).cloned().unwrap_or_else(|| a.clone()))
                .collect(),
        ),
        Process::Par { .. } => {
            let mut comps = Vec::new();
            flatten_into(p.clone(), &mut comps);
            // Canonize each component once from the shared counter start, so
            // alpha-identical components get identical keys. After sorting,
            // shift each component's freshly introduced placeholder indices
            // into sequence instead of canonizing a second time; indices
            // below the shared start refer to enclosing binders and stay put.
            let base = *counter;
            let mut keyed: Vec<(String, Process, usize)> = comps
                .into_iter()
                .map(|c| {
                    let mut probe = base;
                    let canon = canonize(&c, map, &mut probe);
                    (format!("{canon:?}"), canon, probe - base)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Vec::with_capacity(keyed.len());
            for (_, canon, introduced) in keyed {
                let delta = *counter - base;
                out.push(if delta == 0 {
                    canon
                } else {
                    shift_canonical(canon, base, delta)
                });
                *counter += introduced;
            }
            Process::par_many(out)
        }
        Process::Res { bound, body } => {
            let nb = canon_name(bound.sort, counter);
            let mut m2 = map.clone();
            m2.insert(bound.clone(), nb.clone());
            Process::res(nb, canonize(body, &m2, counter))
        }
        Process::Input {
            subject,
            params,
            body,
        } => {
            let s = map.get(subject).cloned().unwrap_or_else(|| subject.clone());
            let mut m2 = map.clone();
            let params2: Vec<Name> = params
                .iter()
                .map(|q| {
                    let nq = canon_name(q.sort, counter);
                    m2.insert(q.clone(), nq.clone());
                    nq
                })
                .collect();
            Process::input(s, params2, canonize(body, &m2, counter))
        }
        Process::BoundOutput {
            subject,
            params,
            body,
        } => {
            let s = map.get(subject).cloned().unwrap_or_else(|| subject.clone());
            let mut m2 = map.clone();
            let params2: Vec<Name> = params
                .iter()
                .map(|q| {
                    let nq = canon_name(q.sort, counter);
                    m2.insert(q.clone(), nq.clone());
                    nq
                })
                .collect();
            Process::bout(s, params2, canonize(body, &m2, counter))
        }
        Process::ReplInput {
            subject,
            params,
            body,
        } => {
            let s = map.get(subject).cloned().unwrap_or_else(|| subject.clone());
            let mut m2 = map.clone();
            let params2: Vec<Name> = params
                .iter()
                .map(|q| {
                    let nq = canon_name(q.sort, counter);
                    m2.insert(q.clone(), nq.clone());
                    nq
                })
                .collect();
            Process::repl(s, params2, canonize(body, &m2, counter))
        }
    }
}

/// Structural normalization with the garbage-collection rewrite toggleable
/// (the equivalence module disables it when validating that the rewrite is
/// behavior-preserving).
pub fn struct_normalize_opts(p: &Process, _env: &ConstEnv, enable_gc: bool) -> Process {
    let mut cur = p.clone();
    for _ in 0..8 {
        let next = rewrite(&cur, enable_gc);
        if next == cur {
            break;
        }
        cur = next;
    }
    canonize(&cur, &BTreeMap::new(), &mut 0)
}

/// Canonical representative modulo structural congruence: parallel
/// components are flattened and sorted under canonical alpha-renaming, nil
/// units and unused restrictions are dropped, restriction scopes are
/// narrowed over components not mentioning the name, and inert replicated
/// servers on a restricted name are garbage-collected.
pub fn struct_normalize(p: &Process, env: &ConstEnv) -> Process {
    struct_normalize_opts(p, env, true)
}

/// Canonical key for memoization: the debug rendering of the canonical
/// representative.
pub fn canonical_key(p: &Process, env: &ConstEnv) -> String {
    format!("{:?}", struct_normalize(p, env))
}

// ---------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------

/// LTS labels. Bound names of visible actions are fresh: they do not occur
/// free in the source process.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Action {
    Tau,
    In { subject: Name, bound: Vec<Name> },
    BOut { subject: Name, bound: Vec<Name> },
}

impl Action {
    pub fn bound_names(&self) -> &[Name] {
        match self {
            Action::Tau => &[],
            Action::In { bound, .. } | Action::BOut { bound, .. } => bound,
        }
    }

    pub fn subject(&self) -> Option<&Name> {
        match self {
            Action::Tau => None,
            Action::In { subject, .. } | Action::BOut { subject, .. } => Some(subject),
        }
    }

    /// Rename the action's bound names; the subject stays as is.
    pub fn rename_bounds(&self, map: &BTreeMap<Name, Name>) -> Action {
        let remap = |ns: &[Name]| {
            ns.iter()
                .map(|n| map.get(n).cloned().unwrap_or_else(|| n.clone()))
                .collect()
        };
        match self {
            Action::Tau => Action::Tau,
            Action::In { subject, bound } => Action::In {
                subject: subject.clone(),
                bound: remap(bound),
            },
            Action::BOut { subject, bound } => Action::BOut {
                subject: subject.clone(),
                bound: remap(bound),
            },
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Tau => write!(f, "tau"),
            Action::In { subject, bound } => {
                let names: Vec<String> = bound.iter().map(display_name).collect();
                write!(f, "{}({})", display_name(subject), names.join(","))
            }
            Action::BOut { subject, bound } => {
                let names: Vec<String> = bound.iter().map(display_name).collect();
                write!(f, "{}!({})", display_name(subject), names.join(","))
            }
        }
    }
}

// ---------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn prefix_body(body: &Process, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if matches!(body, Process::Par { .. }) {
                write!(f, ".(")?;
                go(body, f)?;
                write!(f, ")")
            } else {
                write!(f, ".")?;
                term(body, f)
            }
        }
        fn term(p: &Process, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match p {
                Process::Par { .. } => {
                    write!(f, "(")?;
                    go(p, f)?;
                    write!(f, ")")
                }
                _ => go(p, f),
            }
        }
        fn go(p: &Process, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match p {
                Process::Nil => write!(f, "0"),
                Process::Input {
                    subject,
                    params,
                    body,
                } => {
                    let names: Vec<String> = params.iter().map(display_name).collect();
                    write!(f, "{}({})", display_name(subject), names.join(","))?;
                    prefix_body(body, f)
                }
                Process::BoundOutput {
                    subject,
                    params,
                    body,
                } => {
                    let names: Vec<String> = params.iter().map(display_name).collect();
                    write!(f, "{}!({})", display_name(subject), names.join(","))?;
                    prefix_body(body, f)
                }
                Process::ReplInput {
                    subject,
                    params,
                    body,
                } => {
                    let names: Vec<String> = params.iter().map(display_name).collect();
                    write!(f, "!{}({})", display_name(subject), names.join(","))?;
                    prefix_body(body, f)
                }
                Process::Res { bound, body } => {
                    write!(f, "nu {}", display_name(bound))?;
                    prefix_body(body, f)
                }
                Process::Par { left, right } => {
                    term(left, f)?;
                    write!(f, " | ")?;
                    go(right, f)
                }
                Process::ConstApp { name, args } => {
                    let names: Vec<String> = args.iter().map(display_name).collect();
                    write!(f, "{}<{}>", name, names.join(","))
                }
            }
        }
        go(self, f)
    }
}

// ---------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum PTok {
    Ident(String),
    Zero,
    Nu,
    Bang,
    BangLParen,
    LParen,
    RParen,
    LAngle,
    RAngle,
    Dot,
    Pipe,
    Comma,
    SortAnnot(Sort),
}

fn plex(text: &str) -> Result<Vec<(usize, PTok)>, PiError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '0' => {
                out.push((i, PTok::Zero));
                i += 1;
            }
            '!' => {
                if i + 1 < chars.len() && chars[i + 1] == '(' {
                    out.push((i, PTok::BangLParen));
                    i += 2;
                } else {
                    out.push((i, PTok::Bang));
                    i += 1;
                }
            }
            '(' => {
                out.push((i, PTok::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, PTok::RParen));
                i += 1;
            }
            '<' => {
                out.push((i, PTok::LAngle));
                i += 1;
            }
            '>' => {
                out.push((i, PTok::RAngle));
                i += 1;
            }
            '.' => {
                out.push((i, PTok::Dot));
                i += 1;
            }
            '|' => {
                out.push((i, PTok::Pipe));
                i += 1;
            }
            ',' => {
                out.push((i, PTok::Comma));
                i += 1;
            }
            ':' => {
                let start = i;
                i += 1;
                let mut s = String::new();
                while i < chars.len() && chars[i].is_ascii_alphabetic() {
                    s.push(chars[i]);
                    i += 1;
                }
                match s.as_str() {
                    "Loc" => out.push((start, PTok::SortAnnot(Sort::Loc))),
                    "Var" => out.push((start, PTok::SortAnnot(Sort::Var))),
                    other => {
                        return Err(PiError::Parse {
                            pos: start,
                            msg: format!("expected sort annotation Loc or Var, found {other:?}"),
                        })
                    }
                }
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
                if s == "nu" {
                    out.push((start, PTok::Nu));
                } else {
                    out.push((start, PTok::Ident(s)));
                }
            }
            other => {
                return Err(PiError::Parse {
                    pos: i,
                    msg: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(out)
}

struct PParser {
    toks: Vec<(usize, PTok)>,
    pos: usize,
    end: usize,
    sorts: BTreeMap<String, Sort>,
}

impl PParser {
    fn peek(&self) -> Option<&(usize, PTok)> {
        self.toks.get(self.pos)
    }

    fn peek2(&self) -> Option<&(usize, PTok)> {
        self.toks.get(self.pos + 1)
    }

    fn err_here(&self, msg: impl Into<String>) -> PiError {
        PiError::Parse {
            pos: self.peek().map(|(p, _)| *p).unwrap_or(self.end),
            msg: msg.into(),
        }
    }

    fn expect(&mut self, tok: PTok, what: &str) -> Result<(), PiError> {
        match self.peek() {
            Some((_, t)) if *t == tok => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn make_name(&self, id: String) -> Result<Name, PiError> {
        let sort = self
            .sorts
            .get(&id)
            .copied()
            .or_else(|| convention_sort(&id))
            .ok_or_else(|| {
                self.err_here(format!("cannot infer a sort for {id}; annotate with :Loc or :Var"))
            })?;
        Ok(Name { id, sort })
    }

    fn parse_name(&mut self) -> Result<Name, PiError> {
        match self.peek().cloned() {
            Some((_, PTok::Ident(id))) => {
                self.pos += 1;
                // A trailing annotation was already folded into the sort map
                // during the first pass; just skip it.
                if matches!(self.peek(), Some((_, PTok::SortAnnot(_)))) {
                    self.pos += 1;
                }
                self.make_name(id)
            }
            _ => Err(self.err_here("expected a name")),
        }
    }

    fn parse_name_list(&mut self, closing: PTok, what: &str) -> Result<Vec<Name>, PiError> {
        let mut names = Vec::new();
        if self.peek().map(|(_, t)| t) == Some(&closing) {
            self.pos += 1;
            return Ok(names);
        }
        loop {
            names.push(self.parse_name()?);
            match self.peek() {
                Some((_, PTok::Comma)) => {
                    self.pos += 1;
                }
                Some((_, t)) if *t == closing => {
                    self.pos += 1;
                    break;
                }
                _ => return Err(self.err_here(format!("expected ',' or {what}"))),
            }
        }
        Ok(names)
    }

    fn parse_parallel(&mut self) -> Result<Process, PiError> {
        let mut comps = vec![self.parse_term()?];
        while matches!(self.peek(), Some((_, PTok::Pipe))) {
            self.pos += 1;
            comps.push(self.parse_term()?);
        }
        if comps.len() == 1 {
            Ok(comps.pop().expect("nonempty"))
        } else {
            Ok(Process::par_many(comps))
        }
    }

    fn parse_term(&mut self) -> Result<Process, PiError> {
        match self.peek().cloned() {
            Some((_, PTok::Zero)) => {
                self.pos += 1;
                Ok(Process::Nil)
            }
            Some((_, PTok::LParen)) => {
                self.pos += 1;
                let p = self.parse_parallel()?;
                self.expect(PTok::RParen, "')'")?;
                Ok(p)
            }
            Some((_, PTok::Nu)) => {
                self.pos += 1;
                let mut binders = Vec::new();
                loop {
                    match self.peek() {
                        Some((_, PTok::Ident(_))) => binders.push(self.parse_name()?),
                        Some((_, PTok::Comma)) => {
                            self.pos += 1;
                        }
                        Some((_, PTok::Dot)) => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.err_here("expected a name or '.' after nu")),
                    }
                }
                if binders.is_empty() {
                    return Err(self.err_here("nu needs at least one name"));
                }
                let body = self.parse_term()?;
                Ok(Process::res_many(binders, body))
            }
            Some((_, PTok::Bang)) => {
                self.pos += 1;
                let subject = self.parse_name()?;
                self.expect(PTok::LParen, "'(' after replicated input subject")?;
                let params = self.parse_name_list(PTok::RParen, "')'")?;
                self.expect(PTok::Dot, "'.' after prefix")?;
                let body = self.parse_term()?;
                Ok(Process::repl(subject, params, body))
            }
            Some((_, PTok::Ident(id))) => {
                // Lookahead decides between input, bound output, constant.
                let after = if matches!(self.peek2(), Some((_, PTok::SortAnnot(_)))) {
                    self.toks.get(self.pos + 2)
                } else {
                    self.peek2()
                };
                match after {
                    Some((_, PTok::LParen)) => {
                        let subject = self.parse_name()?;
                        self.pos += 1; // consume '('
                        let params = self.parse_name_list(PTok::RParen, "')'")?;
                        self.expect(PTok::Dot, "'.' after prefix")?;
                        let body = self.parse_term()?;
                        Ok(Process::input(subject, params, body))
                    }
                    Some((_, PTok::BangLParen)) => {
                        let subject = self.parse_name()?;
                        self.pos += 1; // consume '!('
                        let params = self.parse_name_list(PTok::RParen, "')'")?;
                        self.expect(PTok::Dot, "'.' after prefix")?;
                        let body = self.parse_term()?;
                        Ok(Process::bout(subject, params, body))
                    }
                    Some((_, PTok::LAngle)) => {
                        self.pos += 1; // identifier
                        self.pos += 1; // '<'
                        let args = self.parse_name_list(PTok::RAngle, "'>'")?;
                        Ok(Process::constapp(id, args))
                    }
                    _ => Err(self.err_here(
                        "expected '(' (input), '!(' (bound output) or '<' (constant) after name",
                    )),
                }
            }
            _ => Err(self.err_here("expected a process")),
        }
    }
}

/// Collects `name:Sort` annotations (first pass); conflicting annotations
/// for the same identifier are an error.
fn collect_annotations(toks: &[(usize, PTok)]) -> Result<BTreeMap<String, Sort>, PiError> {
    let mut sorts = BTreeMap::new();
    for (i, (_, tok)) in toks.iter().enumerate() {
        if let PTok::SortAnnot(sort) = tok {
            match toks.get(i.wrapping_sub(1)) {
                Some((p, PTok::Ident(id))) => {
                    if let Some(prev) = sorts.insert(id.clone(), *sort) {
                        if prev != *sort {
                            return Err(PiError::Parse {
                                pos: *p,
                                msg: format!("conflicting sort annotations for {id}"),
                            });
                        }
                    }
                }
                other => {
                    return Err(PiError::Parse {
                        pos: other.map(|(p, _)| *p).unwrap_or(0),
                        msg: "sort annotation must follow a name".to_string(),
                    })
                }
            }
        }
    }
    Ok(sorts)
}

/// Parses the process grammar. Sorts are assigned by the spelling
/// convention (see [`convention_sort`]) unless overridden by a `:Loc` /
/// `:Var` annotation, which applies to every occurrence of that
/// identifier in the text.
pub fn parse_process(text: &str) -> Result<Process, PiError> {
    let toks = plex(text)?;
    let sorts = collect_annotations(&toks)?;
    let mut p = PParser {
        toks,
        pos: 0,
        end: text.chars().count(),
        sorts,
    };
    let proc = p.parse_parallel()?;
    match p.peek() {
        None => Ok(proc),
        Some((pos, tok)) => Err(PiError::Parse {
            pos: *pos,
            msg: format!("unexpected trailing input: {tok:?}"),
        }),
    }
}
