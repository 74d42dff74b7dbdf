//! Bounded Levy-Longo trees, Boehm trees, and the coinductive
//! tree-bisimulation game that refines Boehm-tree equality with infinite
//! eta-expansion.

use crate::lambda::{classify_order, probe_hnf, HnfProbe, OrderClass, Term};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// A tree unfolded to a finite depth. `Top` appears only in Levy-Longo mode
/// (unsolvables of infinite order); in Boehm mode every unsolvable maps to
/// `Bot`. `Bot` carries the number of leading lambdas (Levy-Longo maps an
/// order-n unsolvable to n abstractions over bottom) and a flag recording
/// whether the unsolvability evidence rests on fuel exhaustion rather than
/// a certified head-reduction loop. `DepthCut` marks the exploration bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BoundedTree {
    Top,
    Bot { lams: usize, fuel_limited: bool },
    Node {
        lams: Vec<String>,
        head: String,
        children: Vec<BoundedTree>,
    },
    DepthCut,
}

/// Verdict of a bounded tree comparison. `Different` carries the path of
/// child indices leading to the mismatch in both trees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum TreeVerdict {
    Equal { depth: usize },
    Different { path: Vec<usize>, reason: String },
    Inconclusive { reason: String },
}

/// Which tree semantics to build or compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeMode {
    LT,
    BT,
}

fn hnf_node(m: &Term, depth: usize, fuel: usize, mode: TreeMode) -> BoundedTree {
    match probe_hnf(m, fuel) {
        HnfProbe::Hnf { lams, head, args } => BoundedTree::Node {
            lams,
            head,
            children: args
                .iter()
                .map(|a| tree_of(mode, a, depth - 1, fuel))
                .collect(),
        },
        // classify_order said Solvable, so the probe cannot exhaust fuel.
        HnfProbe::FuelExhausted { .. } => unreachable!("solvable term must reach its hnf"),
    }
}

fn tree_of(mode: TreeMode, m: &Term, depth: usize, fuel: usize) -> BoundedTree {
    if depth == 0 {
        return BoundedTree::DepthCut;
    }
    match classify_order(m, fuel) {
        OrderClass::Solvable => hnf_node(m, depth, fuel, mode),
        OrderClass::ExactOrder { n } => BoundedTree::Bot {
            lams: if mode == TreeMode::LT { n } else { 0 },
            fuel_limited: false,
        },
        OrderClass::OmegaOrder { .. } => match mode {
            TreeMode::LT => BoundedTree::Top,
            TreeMode::BT => BoundedTree::Bot {
                lams: 0,
                fuel_limited: false,
            },
        },
        OrderClass::Unknown {
            n_so_far,
            lambda_late,
        } => {
            if lambda_late {
                // Lambdas kept emerging up to exhaustion: infinite-order
                // evidence in Levy-Longo mode, uncertified bottom otherwise.
                match mode {
                    TreeMode::LT => BoundedTree::Top,
                    TreeMode::BT => BoundedTree::Bot {
                        lams: 0,
                        fuel_limited: true,
                    },
                }
            } else {
                BoundedTree::Bot {
                    lams: if mode == TreeMode::LT { n_so_far } else { 0 },
                    fuel_limited: true,
                }
            }
        }
    }
}

/// The Levy-Longo tree of `m`, unfolded to `depth` hnf levels with `fuel`
/// head-reduction steps available at each level.
pub fn lt_tree(m: &Term, depth: usize, fuel: usize) -> BoundedTree {
    tree_of(TreeMode::LT, m, depth, fuel)
}

/// The Boehm tree of `m`: as [`lt_tree`] but every unsolvable maps to
/// plain bottom.
pub fn bt_tree(m: &Term, depth: usize, fuel: usize) -> BoundedTree {
    tree_of(TreeMode::BT, m, depth, fuel)
}

fn tree_label(t: &BoundedTree) -> String {
    match t {
        BoundedTree::Top => "top".to_string(),
        BoundedTree::Bot { lams, fuel_limited } => {
            let mut s = String::new();
            for i in 1..=*lams {
                s.push_str(&format!("\\b{i}."));
            }
            s.push_str("bot");
            if *fuel_limited {
                s.push('?');
            }
            s
        }
        BoundedTree::Node { lams, head, .. } => {
            if lams.is_empty() {
                head.clone()
            } else {
                format!("\\{}.{}", lams.join(" "), head)
            }
        }
        BoundedTree::DepthCut => "...".to_string(),
    }
}

/// ASCII rendering, one node per line, children indented beneath their
/// parent.
pub fn render_tree(t: &BoundedTree) -> String {
    fn go(t: &BoundedTree, prefix: &str, is_last: bool, is_root: bool, out: &mut String) {
        if is_root {
            out.push_str(&tree_label(t));
            out.push('\n');
        } else {
            out.push_str(prefix);
            out.push_str(if is_last { "`- " } else { "+- " });
            out.push_str(&tree_label(t));
            out.push('\n');
        }
        if let BoundedTree::Node { children, .. } = t {
            let child_prefix = if is_root {
                prefix.to_string()
            } else {
                format!("{prefix}{}", if is_last { "   " } else { "|  " })
            };
            for (i, c) in children.iter().enumerate() {
                go(c, &child_prefix, i + 1 == children.len(), false, out);
            }
        }
    }
    let mut out = String::new();
    go(t, "", true, true, &mut out);
    out
}

fn trees_eq(
    a: &BoundedTree,
    b: &BoundedTree,
    env: &mut Vec<(String, String)>,
    path: &mut Vec<usize>,
) -> Result<(), (Vec<usize>, String)> {
    match (a, b) {
        (BoundedTree::DepthCut, _) | (_, BoundedTree::DepthCut) => Ok(()),
        (BoundedTree::Top, BoundedTree::Top) => Ok(()),
        (
            BoundedTree::Bot { lams: la, .. },
            BoundedTree::Bot { lams: lb, .. },
        ) => {
            if la == lb {
                Ok(())
            } else {
                Err((
                    path.clone(),
                    format!("unsolvable orders differ: {la} vs {lb} leading lambdas"),
                ))
            }
        }
        (
            BoundedTree::Node {
                lams: lams_a,
                head: head_a,
                children: ch_a,
            },
            BoundedTree::Node {
                lams: lams_b,
                head: head_b,
                children: ch_b,
            },
        ) => {
            if lams_a.len() != lams_b.len() {
                return Err((
                    path.clone(),
                    format!(
                        "binder counts differ: {} vs {}",
                        lams_a.len(),
                        lams_b.len()
                    ),
                ));
            }
            if ch_a.len() != ch_b.len() {
                return Err((
                    path.clone(),
                    format!("argument counts differ: {} vs {}", ch_a.len(), ch_b.len()),
                ));
            }
            let frame = lams_a.len();
            for (x, y) in lams_a.iter().zip(lams_b.iter()) {
                env.push((x.clone(), y.clone()));
            }
            let heads_match = {
                // Respect shadowing: the innermost binding of either name wins.
                let bound_a = env.iter().rposition(|(x, _)| x == head_a);
                let bound_b = env.iter().rposition(|(_, y)| y == head_b);
                match (bound_a, bound_b) {
                    (Some(i), Some(j)) => i == j,
                    (None, None) => head_a == head_b,
                    _ => false,
                }
            };
            let result = if !heads_match {
                Err((path.clone(), "head variables differ".to_string()))
            } else {
                let mut res = Ok(());
                for (i, (ca, cb)) in ch_a.iter().zip(ch_b.iter()).enumerate() {
                    path.push(i);
                    res = trees_eq(ca, cb, env, path);
                    path.pop();
                    if res.is_err() {
                        break;
                    }
                }
                res
            };
            env.truncate(env.len() - frame);
            result
        }
        _ => Err((
            path.clone(),
            format!("node kinds differ: {} vs {}", tree_label(a), tree_label(b)),
        )),
    }
}

/// Compares the bounded trees of `m` and `n` (modulo alpha; `DepthCut`
/// matches anything, and fuel-limited tags are ignored).
pub fn tree_equal(
    mode: TreeMode,
    m: &Term,
    n: &Term,
    depth: usize,
    fuel: usize,
) -> TreeVerdict {
    let ta = tree_of(mode, m, depth, fuel);
    let tb = tree_of(mode, n, depth, fuel);
    match trees_eq(&ta, &tb, &mut Vec::new(), &mut Vec::new()) {
        Ok(()) => TreeVerdict::Equal { depth },
        Err((path, reason)) => TreeVerdict::Different { path, reason },
    }
}

/// One side of the tree-bisimulation game, after certification.
enum Side {
    Hnf {
        lams: Vec<String>,
        head: String,
        args: Vec<Term>,
    },
    Unsolvable,
    Unknown,
}

fn certify(m: &Term, fuel: usize) -> Side {
    match classify_order(m, fuel) {
        OrderClass::Solvable => match probe_hnf(m, fuel) {
            HnfProbe::Hnf { lams, head, args } => Side::Hnf { lams, head, args },
            HnfProbe::FuelExhausted { .. } => Side::Unknown,
        },
        OrderClass::ExactOrder { .. } | OrderClass::OmegaOrder { .. } => Side::Unsolvable,
        OrderClass::Unknown { .. } => Side::Unknown,
    }
}

/// Renames the `lams` binders of an hnf to the given fresh names inside the
/// body `head args`, returning the renamed head and arguments.
fn align_binders(
    lams: Vec<String>,
    head: String,
    args: Vec<Term>,
    fresh: &[String],
) -> (String, Vec<Term>) {
    let mut t = Term::lams(lams, Term::apps(Term::var(head), args));
    for name in fresh {
        match t {
            Term::Lam(x, body) => {
                t = crate::lambda::substitute(&body, &x, &Term::var(name.clone()));
            }
            _ => unreachable!("alignment peels exactly the known binders"),
        }
    }
    let mut spine_args = Vec::new();
    let mut cur = t;
    while let Term::App(f, a) = cur {
        spine_args.push(*a);
        cur = *f;
    }
    spine_args.reverse();
    match cur {
        Term::Var(h) => (h, spine_args),
        _ => unreachable!("hnf head is a variable"),
    }
}

fn fresh_pool(count: usize, avoid: &BTreeSet<String>, counter: &mut usize) -> Vec<String> {
    let mut out = Vec::new();
    while out.len() < count {
        let cand = format!("e{}", *counter);
        *counter += 1;
        if !avoid.contains(&cand) {
            out.push(cand);
        }
    }
    out
}

fn btinf_go(
    m: &Term,
    n: &Term,
    depth: usize,
    fuel: usize,
    counter: &mut usize,
    path: &mut Vec<usize>,
) -> Result<(), TreeVerdict> {
    if depth == 0 {
        return Ok(());
    }
    let (side_m, side_n) = (certify(m, fuel), certify(n, fuel));
    match (side_m, side_n) {
        (Side::Unknown, _) | (_, Side::Unknown) => Err(TreeVerdict::Inconclusive {
            reason: format!(
                "cannot certify solvability or unsolvability within fuel {fuel} at path {path:?}"
            ),
        }),
        (Side::Unsolvable, Side::Unsolvable) => Ok(()),
        (Side::Unsolvable, Side::Hnf { .. }) => Err(TreeVerdict::Different {
            path: path.clone(),
            reason: "unsolvable vs solvable".to_string(),
        }),
        (Side::Hnf { .. }, Side::Unsolvable) => Err(TreeVerdict::Different {
            path: path.clone(),
            reason: "solvable vs unsolvable".to_string(),
        }),
        (
            Side::Hnf {
                lams: lams_m,
                head: head_m,
                args: args_m,
            },
            Side::Hnf {
                lams: lams_n,
                head: head_n,
                args: args_n,
            },
        ) => {
            let mut avoid: BTreeSet<String> = BTreeSet::new();
            avoid.extend(m.fv());
            avoid.extend(n.fv());
            for a in args_m.iter().chain(args_n.iter()) {
                avoid.extend(a.fv());
            }
            let long = lams_m.len().max(lams_n.len());
            let fresh = fresh_pool(long, &avoid, counter);
            let (hm, am) = align_binders(lams_m.clone(), head_m, args_m, &fresh[..lams_m.len()]);
            let (hn, an) = align_binders(lams_n.clone(), head_n, args_n, &fresh[..lams_n.len()]);
            if hm != hn {
                return Err(TreeVerdict::Different {
                    path: path.clone(),
                    reason: "head variables differ".to_string(),
                });
            }
            // Let l+m and l be the binder counts (clause 3 mirrors clause 2
            // when the right term has the longer prefix). The side with m
            // extra binders must have exactly m extra arguments, matched
            // against those binders.
            let extra = lams_m.len().abs_diff(lams_n.len());
            let (short_args, long_args, long_is_left) = if lams_m.len() >= lams_n.len() {
                (an, am, true)
            } else {
                (am, an, false)
            };
            if long_args.len() != short_args.len() + extra {
                return Err(TreeVerdict::Different {
                    path: path.clone(),
                    reason: format!(
                        "argument counts incompatible with eta-matching: {} vs {} with {} extra binders",
                        long_args.len(),
                        short_args.len(),
                        extra
                    ),
                });
            }
            let shared = short_args.len();
            for i in 0..long_args.len() {
                let (left, right);
                if i < shared {
                    if long_is_left {
                        left = long_args[i].clone();
                        right = short_args[i].clone();
                    } else {
                        left = short_args[i].clone();
                        right = long_args[i].clone();
                    }
                } else {
                    // Extra argument j is matched against extra binder
                    // x_{l+j}, which was renamed to fresh[short_lams + j].
                    let j = i - shared;
                    let binder = Term::var(fresh[lams_m.len().min(lams_n.len()) + j].clone());
                    if long_is_left {
                        left = long_args[i].clone();
                        right = binder;
                    } else {
                        left = binder;
                        right = long_args[i].clone();
                    }
                }
                path.push(i);
                let res = btinf_go(&left, &right, depth - 1, fuel, counter, path);
                path.pop();
                res?;
            }
            Ok(())
        }
    }
}

/// Plays the tree-bisimulation game between `m` and `n` to the given depth.
/// Clause 1 relates certified unsolvables; clause 2 matches hnfs whose
/// binder prefixes may differ in length, pairing surplus arguments with the
/// surplus binders (the eta clause); clause 3 is the mirror image.
/// `Equal(depth)` states the explored bound.
pub fn btinf_bisim(m: &Term, n: &Term, depth: usize, fuel: usize) -> TreeVerdict {
    let mut counter = 0usize;
    match btinf_go(m, n, depth, fuel, &mut counter, &mut Vec::new()) {
        Ok(()) => TreeVerdict::Equal { depth },
        Err(v) => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambda::parse_term;

    fn p(s: &str) -> Term {
        parse_term(s).expect("test term parses")
    }

    #[test]
    fn lt_tree_examples() {
        assert_eq!(
            lt_tree(&p("Delta"), 3, 10),
            BoundedTree::Node {
                lams: vec!["x".into()],
                head: "x".into(),
                children: vec![BoundedTree::Node {
                    lams: vec![],
                    head: "x".into(),
                    children: vec![],
                }],
            }
        );
        assert_eq!(
            lt_tree(&p("\\x.Omega"), 3, 50),
            BoundedTree::Bot {
                lams: 1,
                fuel_limited: false
            }
        );
        assert_eq!(lt_tree(&p("Ogre"), 3, 50), BoundedTree::Top);
    }

    #[test]
    fn bt_tree_examples() {
        assert_eq!(
            bt_tree(&p("Omega"), 3, 50),
            BoundedTree::Bot {
                lams: 0,
                fuel_limited: false
            }
        );
        assert_eq!(
            bt_tree(&p("Ogre"), 3, 50),
            BoundedTree::Bot {
                lams: 0,
                fuel_limited: false
            }
        );
        assert_eq!(bt_tree(&p("Delta"), 3, 10), lt_tree(&p("Delta"), 3, 10));
    }

    #[test]
    fn depth_cut_at_zero() {
        assert_eq!(lt_tree(&p("Omega"), 0, 50), BoundedTree::DepthCut);
        assert_eq!(bt_tree(&p("x y"), 0, 50), BoundedTree::DepthCut);
    }

    #[test]
    fn btinf_examples() {
        let einf_z = Term::app(p("Einf"), Term::var("z"));
        assert_eq!(
            btinf_bisim(&Term::var("z"), &einf_z, 3, 200),
            TreeVerdict::Equal { depth: 3 }
        );
        assert_eq!(
            btinf_bisim(&Term::var("x"), &p("\\y.x y"), 2, 10),
            TreeVerdict::Equal { depth: 2 }
        );
        assert_eq!(
            btinf_bisim(&Term::var("x"), &Term::var("y"), 1, 10),
            TreeVerdict::Different {
                path: vec![],
                reason: "head variables differ".to_string()
            }
        );
    }

    #[test]
    fn btinf_clause_one_relates_unsolvables() {
        assert_eq!(
            btinf_bisim(&p("Omega"), &p("\\w.Omega w"), 3, 50),
            TreeVerdict::Equal { depth: 3 }
        );
        assert_eq!(
            btinf_bisim(&p("Omega"), &p("Ogre"), 3, 50),
            TreeVerdict::Equal { depth: 3 }
        );
    }

    #[test]
    fn btinf_eta_needs_matching_counts() {
        // \a b.z a has two extra binders but only one extra argument.
        let v = btinf_bisim(&p("\\a b.z a"), &Term::var("z"), 2, 20);
        assert!(matches!(v, TreeVerdict::Different { .. }), "{v:?}");
    }

    #[test]
    fn btinf_symmetry() {
        let pairs = [
            ("z", "Einf z"),
            ("x", "\\y.x y"),
            ("x", "y"),
            ("Omega", "\\x.Omega"),
            ("\\x.x", "\\x.x x"),
        ];
        for (a, b) in pairs {
            let (ta, tb) = (p(a), p(b));
            let v1 = btinf_bisim(&ta, &tb, 3, 100);
            let v2 = btinf_bisim(&tb, &ta, 3, 100);
            match (&v1, &v2) {
                (TreeVerdict::Equal { depth: d1 }, TreeVerdict::Equal { depth: d2 }) => {
                    assert_eq!(d1, d2)
                }
                (
                    TreeVerdict::Different { path: p1, .. },
                    TreeVerdict::Different { path: p2, .. },
                ) => assert_eq!(p1, p2, "mirrored witnesses for {a} vs {b}"),
                (TreeVerdict::Inconclusive { .. }, TreeVerdict::Inconclusive { .. }) => {}
                other => panic!("asymmetric verdicts for {a} vs {b}: {other:?}"),
            }
        }
    }

    #[test]
    fn tree_equal_examples() {
        assert_eq!(
            tree_equal(TreeMode::BT, &p("Omega"), &p("\\x.Omega"), 3, 50),
            TreeVerdict::Equal { depth: 3 }
        );
        match tree_equal(TreeMode::LT, &p("Omega"), &p("\\x.Omega"), 3, 50) {
            TreeVerdict::Different { path, reason } => {
                assert!(path.is_empty());
                assert!(reason.contains("0 vs 1"), "{reason}");
            }
            other => panic!("expected Different, got {other:?}"),
        }
        for t in ["Delta", "\\x y.x (y x)", "Einf z", "Omega", "Ogre"] {
            assert_eq!(
                tree_equal(TreeMode::LT, &p(t), &p(t), 3, 100),
                TreeVerdict::Equal { depth: 3 },
                "reflexivity for {t}"
            );
        }
    }

    #[test]
    fn tree_equal_is_alpha_insensitive() {
        assert_eq!(
            tree_equal(TreeMode::LT, &p("\\x.x z"), &p("\\y.y z"), 3, 20),
            TreeVerdict::Equal { depth: 3 }
        );
        assert!(matches!(
            tree_equal(TreeMode::LT, &p("\\x.x z"), &p("\\y.z y"), 3, 20),
            TreeVerdict::Different { .. }
        ));
    }

    #[test]
    fn depth_cut_matches_anything() {
        // At depth 1 the children of the root are not explored.
        assert_eq!(
            tree_equal(TreeMode::LT, &p("x Omega"), &p("x (\\y.y)"), 1, 20),
            TreeVerdict::Equal { depth: 1 }
        );
        assert!(matches!(
            tree_equal(TreeMode::LT, &p("x Omega"), &p("x (\\y.y)"), 2, 20),
            TreeVerdict::Different { .. }
        ));
    }

    #[test]
    fn rendering_is_stable() {
        let t = lt_tree(&p("\\x y.x (y Omega) Ogre"), 3, 60);
        let r = render_tree(&t);
        assert_eq!(r, "\\x y.x\n+- y\n|  `- bot\n`- top\n");
        let json = serde_json::to_string(&t).expect("tree serializes");
        let back: BoundedTree = serde_json::from_str(&json).expect("tree deserializes");
        assert_eq!(back, t);
    }

    #[test]
    fn lt_collapses_to_bt_on_solvables() {
        for t in ["Delta", "\\x y.y x x", "Einf z", "(\\x.x) (\\y.y w)"] {
            assert_eq!(
                lt_tree(&p(t), 3, 100),
                bt_tree(&p(t), 3, 100),
                "solvable term {t}"
            );
        }
    }
}
