//! Window-local token merging with representative destinations.
//!
//! Tokens on a 2-D grid are split into square windows. Inside each window the
//! token with the highest average cosine similarity to its neighbours becomes
//! the destination, and the next most similar tokens are merged into it with
//! a weighted mean. Selections can be cached and reused for several
//! timesteps of an iterative process. A toy attention pipeline measures the
//! token and FLOP savings against an unmerged baseline.
//!
//! ```
//! use tokmerge::{merger, selector, window, numerics::TokenMatrix};
//!
//! let grid = window::GridSpec::new(2, 2)?;
//! let tokens = TokenMatrix::from_rows(&[
//!     vec![1.0, 0.0], vec![0.9, 0.1], vec![0.8, 0.3], vec![0.0, 1.0],
//! ])?;
//! let part = window::partition(grid, 2)?;
//! let sel = selector::select_representative(&tokens, 0, &part.windows()[0])?.unwrap();
//! let plan = merger::build_merge_plan(&part, &[sel], 0.5)?;
//! let reduced = merger::merge_tokens(&tokens, &plan, 0.5)?;
//! assert_eq!(reduced.n_tokens(), 2);
//! # Ok::<(), tokmerge::Error>(())
//! ```

pub mod bench;
pub mod cache;
pub mod error;
pub mod merger;
pub mod numerics;
pub mod oracle;
pub mod pipeline;
pub mod selector;
pub mod window;

pub use error::{Error, Result};
