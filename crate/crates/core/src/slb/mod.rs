//! Self-labeling: learn interaction times from a few manual labels, then
//! turn detected state changes into intention labels.

mod itm;
mod negatives;
mod selflabel;

pub use itm::{
    fit_itm, pair_labels_to_changes, ClassTiming, ItmFit, ItmModel, Pairing, RejectReason,
    RejectedPair,
};
pub use negatives::{extract_negative_windows, NegativeSampling, NegativeWindow};
pub use selflabel::{generate_self_labels, DropReason, DroppedChange, SelfLabels};
