//! Least-squares clustering of panel units: group-wise OLS, the assignment
//! step and the multi-start iterative procedure, with or without grouped
//! fixed effects (group-specific time paths `mu_kt`).

mod assign;
mod kmeans;
mod matching;
mod ols;
mod stats;

pub use assign::assign;
pub use kmeans::{fit, initial_grouping, kmeans_once};
pub use matching::{match_labels, misclassified};
pub use ols::group_ols;
pub use stats::ssr;

pub(crate) use stats::UnitStats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Grouping;

/// Per-group slopes (`K x p`, row-major) and, with grouped fixed effects,
/// per-group time paths (`K x T`, row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    k: usize,
    p: usize,
    t: usize,
    thetas: Vec<f64>,
    mus: Option<Vec<f64>>,
}

impl GroupParams {
    pub fn new(k: usize, p: usize, t: usize, thetas: Vec<f64>, mus: Option<Vec<f64>>) -> Result<Self> {
        if thetas.len() != k * p {
            return Err(Error::Dimension(format!(
                "{} slope values for K={k}, p={p}",
                thetas.len()
            )));
        }
        if let Some(m) = &mus {
            if m.len() != k * t {
                return Err(Error::Dimension(format!(
                    "{} time-effect values for K={k}, T={t}",
                    m.len()
                )));
            }
        }
        if thetas.iter().chain(mus.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Dimension("non-finite group parameter".into()));
        }
        Ok(Self { k, p, t, thetas, mus })
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn t(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn gfe(&self) -> bool {
        self.mus.is_some()
    }

    #[inline]
    pub fn theta(&self, k: usize) -> &[f64] {
        &self.thetas[k * self.p..(k + 1) * self.p]
    }

    #[inline]
    pub fn mu(&self, k: usize) -> Option<&[f64]> {
        self.mus.as_ref().map(|m| &m[k * self.t..(k + 1) * self.t])
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn mus(&self) -> Option<&[f64]> {
        self.mus.as_deref()
    }

    /// Reorders groups so that new group `perm[old]` holds old group `old`.
    pub fn relabel(&self, perm: &[usize]) -> Result<GroupParams> {
        if perm.len() != self.k {
            return Err(Error::Dimension("permutation length differs from K".into()));
        }
        let mut thetas = vec![0.0; self.thetas.len()];
        let mut mus = self.mus.as_ref().map(|m| vec![0.0; m.len()]);
        for (old, &new) in perm.iter().enumerate() {
            thetas[new * self.p..(new + 1) * self.p].copy_from_slice(self.theta(old));
            if let (Some(dst), Some(src)) = (mus.as_mut(), self.mu(old)) {
                dst[new * self.t..(new + 1) * self.t].copy_from_slice(src);
            }
        }
        GroupParams::new(self.k, self.p, self.t, thetas, mus)
    }
}

/// Settings of one multi-start estimation at a fixed group count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub gfe: bool,
    pub n_starts: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub ssr_tol: f64,
}

impl FitConfig {
    pub const DEFAULT_STARTS: usize = 1000;
    pub const DEFAULT_MAX_ITER: usize = 1000;
    pub const DEFAULT_SSR_TOL: f64 = 1e-12;

    pub fn new(k: usize) -> Self {
        Self {
            k,
            gfe: false,
            n_starts: Self::DEFAULT_STARTS,
            max_iter: Self::DEFAULT_MAX_ITER,
            seed: 0,
            ssr_tol: Self::DEFAULT_SSR_TOL,
        }
    }

    pub fn with_gfe(mut self, gfe: bool) -> Self {
        self.gfe = gfe;
        self
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.n_starts = n_starts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if self.n_starts == 0 {
            return Err(Error::InvalidConfig("at least one start is required".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.ssr_tol >= 0.0) {
            return Err(Error::InvalidConfig("ssr_tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// Outcome of an estimation: the best start's parameters and memberships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: GroupParams,
    pub grouping: Grouping,
    /// Total sum of squared residuals, evaluated directly on the data.
    pub ssr: f64,
    /// `ssr / (N * T)`.
    pub sigma2_hat: f64,
    pub converged: bool,
    pub iterations_used: usize,
    pub start_index_of_best: usize,
    /// SSR after each parameter update of the winning start.
    pub ssr_trace: Vec<f64>,
    /// Starts discarded because a group became empty beyond repair or singular.
    pub degenerate_starts: usize,
}

impl FitResult {
    /// Relabels groups so that group 1 is the largest (ties keep label order).
    pub fn ordered_by_size(&self) -> Result<FitResult> {
        let sizes = self.grouping.sizes();
        let mut order: Vec<usize> = (0..self.grouping.k()).collect();
        order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
        let mut perm = vec![0; order.len()];
        for (rank, &old) in order.iter().enumerate() {
            perm[old] = rank;
        }
        let mut out = self.clone();
        out.grouping = self.grouping.relabel(&perm)?;
        out.params = self.params.relabel(&perm)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_by_size_moves_parameters_with_labels() {
        let params = GroupParams::new(3, 1, 2, vec![10.0, 20.0, 30.0], Some(vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0])).unwrap();
        let fit = FitResult {
            params,
            grouping: Grouping::new(vec![0, 1, 1, 2, 2, 2, 1, 2], 3).unwrap(),
            ssr: 1.5,
            sigma2_hat: 0.1,
            converged: true,
            iterations_used: 3,
            start_index_of_best: 0,
            ssr_trace: vec![1.5],
            degenerate_starts: 0,
        };
        let out = fit.ordered_by_size().unwrap();
        assert_eq!(out.grouping.sizes(), vec![4, 3, 1]);
        assert_eq!(out.grouping.labels(), &[2, 1, 1, 0, 0, 0, 1, 0]);
        assert_eq!(out.params.thetas(), &[30.0, 20.0, 10.0]);
        assert_eq!(out.params.mu(0).unwrap(), &[3.0, 3.0]);
        assert_eq!(out.params.mu(2).unwrap(), &[1.0, 1.0]);
        assert_eq!(out.ssr, fit.ssr);
    }

    #[test]
    fn equal_sizes_keep_label_order() {
        let fit = FitResult {
            params: GroupParams::new(2, 1, 1, vec![1.0, 2.0], None).unwrap(),
            grouping: Grouping::new(vec![1, 0, 1, 0], 2).unwrap(),
            ssr: 0.0,
            sigma2_hat: 0.0,
            converged: true,
            iterations_used: 1,
            start_index_of_best: 0,
            ssr_trace: vec![],
            degenerate_starts: 0,
        };
        assert_eq!(fit.ordered_by_size().unwrap(), fit);
    }
}
