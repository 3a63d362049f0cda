//! Window geometry and sampling masks for sparse window attention.
//!
//! An image whose sides are multiples of `p` is cut into `p x p` windows.
//! Each window is expanded to the `s x s` block of windows below and to the
//! right of it, wrapping around to the top and left edges, so every window
//! appears in exactly `s²` expanded windows. A [`Mask`] picks `p²` of the
//! `(sp)²` positions of an expanded window; it is *non-volatile* when the
//! positions picked across all windows still cover every pixel.

mod geometry;
mod mask;
mod plan;

pub use geometry::{window_expand, window_merge, window_partition, WindowGrid};
pub use mask::{beta, coverage_map, AssignmentMap, CoverageGrid, Mask};
pub use plan::{selection_indices, IndexPlan};
