//! Phase-space cutoffs, composed operators on the grid, channel projectors
//! and numerical checks of the operator bounds built from them.

pub mod channels;
pub mod commutators;
pub mod lemmas;
pub mod operator;
pub mod profile;

pub use channels::{
    apply_cutoff, apply_j_free, channel_projectors, j_free_operator, split_in_out_low, ChannelProjectors, ChannelSplit,
    CutoffDomain,
};
pub use commutators::{verify_commutator_identities, CommutatorReport};
pub use lemmas::{verify_lemma_decay, LemmaReport, LemmaRequest};
pub use operator::{
    estimate_operator_norm, CompiledOperator, ComposedOperator, LinearCombination, LinearOperator, Primitive,
};
pub use profile::{CutoffProfile, Orientation};
