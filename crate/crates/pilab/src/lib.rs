//! pilab: a workbench for the internal pi-calculus.
//!
//! The crate provides the untyped lambda-calculus with its reduction
//! strategies and tree semantics (Levy-Longo, Boehm, and the coinductive
//! infinite-eta refinement), the internal pi-calculus with a sorted ground
//! labelled transition system, bounded behavioural-equivalence games
//! (strong/weak bisimilarity and expansion), wire-parametric encodings of
//! lambda-terms, and a deterministic acceptance suite tying them together.

pub mod encode;
pub mod equiv;
pub mod lambda;
pub mod lts;
pub mod pii;
pub mod trees;
pub mod wires;

pub use lambda::{
    parse_term, probe_hnf, probe_order, step_full_beta, step_head, step_strong_cbn, substitute,
    HnfProbe, OrderProbe, ParseError, Term,
};
pub use equiv::{
    expansion_bounded, explain_witness, strong_bisim_bounded, strong_bisim_bounded_opts,
    weak_bisim_bounded, Budget, GameMode, ReplayError, Side, Verdict, Witness,
};
pub use encode::{
    check_input_localization, check_tau_correspondence, encode, encode_abstract, encode_argchain,
    encode_milner, encode_optimised, milner_diff, reachable_outputs, subst_instances,
    EncodedAgent, EncodingVariant, MilnerAgent, MilnerProcess, Sugared,
};
pub use lts::{
    transitions, transitions_auto, weak_transitions, ActionPattern, NameSupply, StepCache,
};
pub use pii::{
    all_ids, canonical_key, convention_sort, free_names, parse_process, rename, sort_check,
    struct_normalize, struct_normalize_opts, unfold_const, Action, ConstDef, ConstEnv, Name,
    PiError, Process, Sort,
};
pub use trees::{
    bt_tree, btinf_bisim, lt_tree, render_tree, tree_equal, BoundedTree, TreeMode, TreeVerdict,
};
pub use wires::{
    check_wire_axioms, make_loc_wire, make_var_wire, permeable, wire_env, AxiomReport, LawResult,
    LawVerdict, PermeableKind, SubstInstances, WireEnv, WireFamily,
};
