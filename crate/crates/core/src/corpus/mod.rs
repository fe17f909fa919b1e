//! CoNLL-09 reading and writing, predicate frames, label inventories and
//! the synthetic corpus generator.

pub mod conll;
pub mod frames;
pub mod synth;

pub use conll::{parse_conll09, write_conll09, ColumnMode, Sentence, Token};
pub use frames::{
    abbreviate_mwe, build_label_set, extract_frames, Frame, LabelSet, MweAbbreviator, RoleInventory,
    NONROLE,
};
pub use synth::{generate_synthetic, SuffixSpec, SynthSpec, SyntheticCorpus};
