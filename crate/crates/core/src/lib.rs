//! Least-squares (K-means) clustering of panel data with latent group
//! structure.
//!
//! Units share slope vectors within latent groups, optionally together with
//! group-specific time paths (grouped fixed effects). The crate covers
//! estimation by multi-start alternating minimisation, selection of the
//! number of groups by information criteria, post-clustering standard
//! errors and a Monte Carlo harness for the three reference designs.

pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
mod linalg;
pub mod panel;
pub mod rng;
pub mod selection;
pub mod simulate;

pub use error::{Error, Result};
pub use estimator::{
    assign, fit, group_ols, kmeans_once, match_labels, misclassified, FitConfig, FitResult,
    GroupParams,
};
pub use io::{load_panel_csv, read_panel_csv, save_panel_csv, write_panel_csv, ColumnSchema};
pub use panel::{simulated_group_sizes, GroupSizeSpec, Grouping, PanelData};
