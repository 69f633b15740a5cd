//! Balanced panel container, group memberships and the within transformation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A balanced `N x T` panel with `p` regressors per observation.
///
/// Storage is unit-major: `y[i * T + t]` and `x[(i * T + t) * p + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelData {
    n_units: usize,
    n_periods: usize,
    n_regressors: usize,
    y: Vec<f64>,
    x: Vec<f64>,
    unit_ids: Option<Vec<String>>,
    period_ids: Option<Vec<String>>,
    regressor_names: Option<Vec<String>>,
}

impl PanelData {
    pub fn new(
        n_units: usize,
        n_periods: usize,
        n_regressors: usize,
        y: Vec<f64>,
        x: Vec<f64>,
    ) -> Result<Self> {
        if n_units == 0 || n_periods == 0 || n_regressors == 0 {
            return Err(Error::Dimension(format!(
                "N, T and p must be positive (got N={n_units}, T={n_periods}, p={n_regressors})"
            )));
        }
        let nt = n_units * n_periods;
        if y.len() != nt {
            return Err(Error::Dimension(format!(
                "outcome has {} values, expected N*T = {nt}",
                y.len()
            )));
        }
        if x.len() != nt * n_regressors {
            return Err(Error::Dimension(format!(
                "regressors have {} values, expected N*T*p = {}",
                x.len(),
                nt * n_regressors
            )));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Dimension("panel contains NaN or infinite values".into()));
        }
        Ok(Self {
            n_units,
            n_periods,
            n_regressors,
            y,
            x,
            unit_ids: None,
            period_ids: None,
            regressor_names: None,
        })
    }

    pub fn with_unit_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_units {
            return Err(Error::Dimension(format!(
                "{} unit ids for {} units",
                ids.len(),
                self.n_units
            )));
        }
        self.unit_ids = Some(ids);
        Ok(self)
    }

    pub fn with_period_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n_periods {
            return Err(Error::Dimension(format!(
                "{} period ids for {} periods",
                ids.len(),
                self.n_periods
            )));
        }
        self.period_ids = Some(ids);
        Ok(self)
    }

    pub fn with_regressor_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_regressors {
            return Err(Error::Dimension(format!(
                "{} regressor names for {} regressors",
                names.len(),
                self.n_regressors
            )));
        }
        self.regressor_names = Some(names);
        Ok(self)
    }

    #[inline]
    pub fn n_units(&self) -> usize {
        self.n_units
    }

    #[inline]
    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    #[inline]
    pub fn n_regressors(&self) -> usize {
        self.n_regressors
    }

    /// Total number of observations, `N * T`.
    #[inline]
    pub fn n_obs(&self) -> usize {
        self.n_units * self.n_periods
    }

    #[inline]
    pub fn y(&self, i: usize, t: usize) -> f64 {
        self.y[i * self.n_periods + t]
    }

    #[inline]
    pub fn x(&self, i: usize, t: usize, j: usize) -> f64 {
        self.x[(i * self.n_periods + t) * self.n_regressors + j]
    }

    /// Regressor vector of observation `(i, t)`.
    #[inline]
    pub fn x_row(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.n_periods + t) * self.n_regressors;
        &self.x[start..start + self.n_regressors]
    }

    /// Outcome series of unit `i`.
    #[inline]
    pub fn y_unit(&self, i: usize) -> &[f64] {
        &self.y[i * self.n_periods..(i + 1) * self.n_periods]
    }

    /// Regressor block of unit `i`, `T * p` values, period-major.
    #[inline]
    pub fn x_unit(&self, i: usize) -> &[f64] {
        let w = self.n_periods * self.n_regressors;
        &self.x[i * w..(i + 1) * w]
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn x_values(&self) -> &[f64] {
        &self.x
    }

    pub fn unit_ids(&self) -> Option<&[String]> {
        self.unit_ids.as_deref()
    }

    pub fn period_ids(&self) -> Option<&[String]> {
        self.period_ids.as_deref()
    }

    pub fn regressor_names(&self) -> Option<&[String]> {
        self.regressor_names.as_deref()
    }

    /// Unit label, falling back to the 1-based index zero-padded to a common
    /// width so that lexicographic order equals index order.
    pub fn unit_label(&self, i: usize) -> String {
        match &self.unit_ids {
            Some(ids) => ids[i].clone(),
            None => {
                let width = self.n_units.to_string().len();
                format!("{:0width$}", i + 1)
            }
        }
    }

    pub fn period_label(&self, t: usize) -> String {
        match &self.period_ids {
            Some(ids) => ids[t].clone(),
            None => (t + 1).to_string(),
        }
    }

    pub fn regressor_label(&self, j: usize) -> String {
        match &self.regressor_names {
            Some(names) => names[j].clone(),
            None => format!("x{}", j + 1),
        }
    }

    /// Subtracts each unit's time mean from `y` and from every regressor.
    pub fn within_transform(&self) -> Result<PanelData> {
        if self.n_periods < 2 {
            return Err(Error::DegenerateWithin);
        }
        let (t_len, p) = (self.n_periods, self.n_regressors);
        let mut out = self.clone();
        let mut x_mean = vec![0.0; p];
        for i in 0..self.n_units {
            let y_unit = &mut out.y[i * t_len..(i + 1) * t_len];
            let y_mean = y_unit.iter().sum::<f64>() / t_len as f64;
            y_unit.iter_mut().for_each(|v| *v -= y_mean);

            let x_unit = &mut out.x[i * t_len * p..(i + 1) * t_len * p];
            x_mean.iter_mut().for_each(|m| *m = 0.0);
            for row in x_unit.chunks_exact(p) {
                for (m, v) in x_mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            x_mean.iter_mut().for_each(|m| *m /= t_len as f64);
            for row in x_unit.chunks_exact_mut(p) {
                for (v, m) in row.iter_mut().zip(&x_mean) {
                    *v -= m;
                }
            }
        }
        Ok(out)
    }
}

/// Membership vector assigning each of `N` units to one of `K` groups.
///
/// Labels are stored 0-based (`0..K`); file formats and reports use `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grouping {
    labels: Vec<usize>,
    k: usize,
}

impl Grouping {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig("group count K must be at least 1".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Dimension(format!(
                "label {} outside 1..={k}",
                bad + 1
            )));
        }
        Ok(Self { labels, k })
    }

    /// Builds a grouping from 1-based labels as they appear in files.
    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::Dimension("label 0 in a 1-based grouping".into()));
        }
        Self::new(labels.iter().map(|l| l - 1).collect(), k)
    }

    pub(crate) fn from_raw(labels: Vec<usize>, k: usize) -> Self {
        debug_assert!(labels.iter().all(|&l| l < k));
        Self { labels, k }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn n_units(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == k)
            .map(|(i, _)| i)
    }

    pub fn all_nonempty(&self) -> bool {
        self.sizes().iter().all(|&s| s > 0)
    }

    /// Applies `perm[old] = new` to every label.
    pub fn relabel(&self, perm: &[usize]) -> Result<Grouping> {
        if perm.len() != self.k {
            return Err(Error::Dimension(format!(
                "permutation of length {} for K={}",
                perm.len(),
                self.k
            )));
        }
        Grouping::new(self.labels.iter().map(|&l| perm[l]).collect(), self.k)
    }

    /// The partition as a canonical set of sets (each sorted, ordered by first member).
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let mut blocks: Vec<Vec<usize>> = (0..self.k).map(|k| self.members(k).collect()).collect();
        blocks.retain(|b| !b.is_empty());
        blocks.sort();
        blocks
    }
}

/// Group sizes for the three-group simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSizeSpec {
    pub n_total: usize,
    pub k0: usize,
    pub alpha: f64,
    pub c_alpha: f64,
}

impl GroupSizeSpec {
    /// Uses the standard scaling constant for `alpha`.
    pub fn standard(n_total: usize, alpha: f64) -> Self {
        Self {
            n_total,
            k0: 3,
            alpha,
            c_alpha: scaling_constant(alpha),
        }
    }
}

/// Scaling constant of the small-group size: 0.4, 0.6 and 0.8 at
/// `alpha` = 1.0, 0.9 and 0.8 respectively, 1 otherwise.
pub fn scaling_constant(alpha: f64) -> f64 {
    const EPS: f64 = 1e-9;
    if (alpha - 1.0).abs() < EPS {
        0.4
    } else if (alpha - 0.9).abs() < EPS {
        0.6
    } else if (alpha - 0.8).abs() < EPS {
        0.8
    } else {
        1.0
    }
}

/// Sizes `[N1, N2, N3]` with `N1 = N/K0`, `N3 = floor(c * N^alpha)` and `N2` the remainder.
pub fn simulated_group_sizes(spec: &GroupSizeSpec) -> Result<[usize; 3]> {
    let GroupSizeSpec {
        n_total,
        k0,
        alpha,
        c_alpha,
    } = *spec;
    if k0 != 3 {
        return Err(Error::InvalidSizes(format!("designs have three groups, got K0={k0}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidSizes(format!("alpha={alpha} outside [0, 1]")));
    }
    if !(c_alpha.is_finite() && c_alpha > 0.0) {
        return Err(Error::InvalidSizes(format!("scaling constant {c_alpha} must be positive")));
    }
    if n_total == 0 || n_total % k0 != 0 {
        return Err(Error::InvalidSizes(format!("N={n_total} is not divisible by K0={k0}")));
    }
    let n1 = n_total / k0;
    let n3 = (c_alpha * (n_total as f64).powf(alpha)).floor();
    if n3 < 1.0 || n3 >= (n_total - n1) as f64 {
        return Err(Error::InvalidSizes(format!(
            "small-group size {n3} leaves no room for the other groups (N={n_total})"
        )));
    }
    let n3 = n3 as usize;
    let n2 = n_total - n1 - n3;
    Ok([n1, n2, n3])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_panel() -> PanelData {
        // 2 units, 2 periods, 1 regressor
        PanelData::new(2, 2, 1, vec![1.0, 3.0, 5.0, 5.0], vec![2.0, 2.0, 0.5, 1.5]).unwrap()
    }

    #[test]
    fn demeaning_arithmetic() {
        let w = small_panel().within_transform().unwrap();
        assert_eq!(w.y_unit(0), &[-1.0, 1.0]);
        assert_eq!(w.y_unit(1), &[0.0, 0.0]);
        // constant regressor per unit becomes zero
        assert_eq!(w.x_unit(0), &[0.0, 0.0]);
        assert_eq!(w.x_unit(1), &[-0.5, 0.5]);
    }

    #[test]
    fn single_period_within_is_rejected() {
        let p = PanelData::new(3, 1, 1, vec![1.0; 3], vec![1.0; 3]).unwrap();
        assert!(matches!(p.within_transform(), Err(Error::DegenerateWithin)));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(PanelData::new(1, 2, 1, vec![1.0, f64::NAN], vec![0.0, 1.0]).is_err());
        assert!(PanelData::new(1, 2, 1, vec![1.0, 2.0], vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn sizes_alpha_one() {
        let s = simulated_group_sizes(&GroupSizeSpec::standard(60, 1.0)).unwrap();
        assert_eq!(s, [20, 16, 24]);
    }

    #[test]
    fn sizes_alpha_small() {
        // 60^0.3 = 3.415...
        assert!((60f64.powf(0.3) - 3.4154).abs() < 1e-3);
        let s = simulated_group_sizes(&GroupSizeSpec::standard(60, 0.3)).unwrap();
        assert_eq!(s, [20, 37, 3]);
    }

    #[test]
    fn sizes_n120_alpha_08() {
        // 0.8 * 120^0.8 = 0.8 * 45.944... = 36.755...
        let expected_n3 = (0.8 * 120f64.powf(0.8)).floor() as usize;
        assert_eq!(expected_n3, 36);
        let s = simulated_group_sizes(&GroupSizeSpec::standard(120, 0.8)).unwrap();
        assert_eq!(s, [40, 44, 36]);
    }

    #[test]
    fn sizes_reject_indivisible_n() {
        assert!(matches!(
            simulated_group_sizes(&GroupSizeSpec::standard(61, 0.5)),
            Err(Error::InvalidSizes(_))
        ));
    }

    #[test]
    fn sizes_reject_zero_small_group() {
        let spec = GroupSizeSpec {
            n_total: 60,
            k0: 3,
            alpha: 0.0,
            c_alpha: 0.5,
        };
        assert!(simulated_group_sizes(&spec).is_err());
    }

    #[test]
    fn small_group_grows_with_alpha() {
        for n in [60, 90, 120] {
            let mut prev = 0;
            for step in 2..=10 {
                let alpha = step as f64 / 10.0;
                let [n1, n2, n3] = simulated_group_sizes(&GroupSizeSpec::standard(n, alpha)).unwrap();
                assert_eq!(n1 + n2 + n3, n);
                assert!(n3 > prev, "N={n} alpha={alpha}");
                prev = n3;
            }
        }
    }

    #[test]
    fn grouping_label_bounds() {
        assert!(Grouping::new(vec![0, 1, 2], 2).is_err());
        assert!(Grouping::from_one_based(&[0, 1], 2).is_err());
        let g = Grouping::from_one_based(&[1, 2, 2], 2).unwrap();
        assert_eq!(g.labels(), &[0, 1, 1]);
        assert_eq!(g.sizes(), vec![1, 2]);
        assert_eq!(g.one_based(), vec![1, 2, 2]);
    }
}
