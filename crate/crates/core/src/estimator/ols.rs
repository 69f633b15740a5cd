use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{add_outer, solve_spd};
use crate::panel::{Grouping, PanelData};

use super::{GroupParams, UnitStats};

/// Group-wise least squares given memberships.
///
/// Without grouped fixed effects each `theta_k` is the pooled OLS slope of
/// the group's observations. With them, `theta_k` comes from OLS on
/// group-period demeaned data and `mu_kt = ybar_kt - xbar_kt' theta_k`.
pub fn group_ols(panel: &PanelData, grouping: &Grouping, gfe: bool) -> Result<GroupParams> {
    if grouping.n_units() != panel.n_units() {
        return Err(Error::Dimension(format!(
            "grouping has {} units, panel has {}",
            grouping.n_units(),
            panel.n_units()
        )));
    }
    let stats = UnitStats::new(panel);
    group_ols_with(panel, &stats, grouping, gfe)
}

pub(crate) fn group_ols_with(
    panel: &PanelData,
    stats: &UnitStats,
    grouping: &Grouping,
    gfe: bool,
) -> Result<GroupParams> {
    let (k_count, p, t_len) = (grouping.k(), panel.n_regressors(), panel.n_periods());
    let sizes = grouping.sizes();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyGroup(empty + 1));
    }

    let mut sxx = vec![0.0; k_count * p * p];
    let mut sxy = vec![0.0; k_count * p];
    for i in 0..panel.n_units() {
        let k = grouping.label(i);
        for (a, v) in sxx[k * p * p..(k + 1) * p * p].iter_mut().zip(stats.xx(i)) {
            *a += v;
        }
        for (a, v) in sxy[k * p..(k + 1) * p].iter_mut().zip(stats.xy(i)) {
            *a += v;
        }
    }

    // group-period means of x and y
    let mut means: Option<(Vec<f64>, Vec<f64>)> = None;
    if gfe {
        let mut sum_x = vec![0.0; k_count * t_len * p];
        let mut sum_y = vec![0.0; k_count * t_len];
        for i in 0..panel.n_units() {
            let k = grouping.label(i);
            let gx = &mut sum_x[k * t_len * p..(k + 1) * t_len * p];
            for (a, v) in gx.iter_mut().zip(panel.x_unit(i)) {
                *a += v;
            }
            for (a, v) in sum_y[k * t_len..(k + 1) * t_len].iter_mut().zip(panel.y_unit(i)) {
                *a += v;
            }
        }
        for k in 0..k_count {
            let nk = sizes[k] as f64;
            sum_x[k * t_len * p..(k + 1) * t_len * p].iter_mut().for_each(|v| *v /= nk);
            sum_y[k * t_len..(k + 1) * t_len].iter_mut().for_each(|v| *v /= nk);
            let sxx_k = &mut sxx[k * p * p..(k + 1) * p * p];
            let sxy_k = &mut sxy[k * p..(k + 1) * p];
            for t in 0..t_len {
                let xbar = &sum_x[(k * t_len + t) * p..(k * t_len + t + 1) * p];
                let ybar = sum_y[k * t_len + t];
                add_outer(sxx_k, xbar, -nk);
                for (a, v) in sxy_k.iter_mut().zip(xbar) {
                    *a -= nk * v * ybar;
                }
            }
        }
        means = Some((sum_x, sum_y));
    }

    let mut thetas = Vec::with_capacity(k_count * p);
    for k in 0..k_count {
        let a = DMatrix::from_row_slice(p, p, &sxx[k * p * p..(k + 1) * p * p]);
        let b = DVector::from_column_slice(&sxy[k * p..(k + 1) * p]);
        let theta = solve_spd(&a, &b).ok_or(Error::SingularDesign(k + 1))?;
        thetas.extend(theta.iter());
    }

    let mus = means.map(|(xbar, ybar)| {
        let mut mus = Vec::with_capacity(k_count * t_len);
        for k in 0..k_count {
            let theta = &thetas[k * p..(k + 1) * p];
            for t in 0..t_len {
                let xb = &xbar[(k * t_len + t) * p..(k * t_len + t + 1) * p];
                mus.push(ybar[k * t_len + t] - crate::linalg::dot(xb, theta));
            }
        }
        mus
    });
    GroupParams::new(k_count, p, t_len, thetas, mus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_panel(n: usize, t: usize, p: usize, seed: u64) -> PanelData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = (0..n * t).map(|_| rng.sample(StandardNormal)).collect();
        let x = (0..n * t * p).map(|_| rng.sample(StandardNormal)).collect();
        PanelData::new(n, t, p, y, x).unwrap()
    }

    /// Textbook pooled OLS on the stacked data via Gaussian elimination of
    /// the normal equations, independent of the cross-product path.
    fn stacked_ols(panel: &PanelData) -> Vec<f64> {
        let p = panel.n_regressors();
        let mut a = vec![vec![0.0; p + 1]; p];
        for i in 0..panel.n_units() {
            for t in 0..panel.n_periods() {
                for r in 0..p {
                    for c in 0..p {
                        a[r][c] += panel.x(i, t, r) * panel.x(i, t, c);
                    }
                    a[r][p] += panel.x(i, t, r) * panel.y(i, t);
                }
            }
        }
        for col in 0..p {
            let piv = (col..p).max_by(|&u, &v| a[u][col].abs().total_cmp(&a[v][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        (0..p).map(|r| a[r][p] / a[r][r]).collect()
    }

    #[test]
    fn single_group_noiseless_recovers_theta() {
        let base = random_panel(5, 8, 3, 1);
        let theta0 = [1.5, -0.25, 3.0];
        let y: Vec<f64> = (0..5)
            .flat_map(|i| (0..8).map(move |t| (i, t)))
            .map(|(i, t)| crate::linalg::dot(base.x_row(i, t), &theta0))
            .collect();
        let panel = PanelData::new(5, 8, 3, y, base.x_values().to_vec()).unwrap();
        let g = Grouping::new(vec![0; 5], 1).unwrap();
        let params = group_ols(&panel, &g, false).unwrap();
        for (a, b) in params.theta(0).iter().zip(theta0) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn single_group_matches_stacked_ols() {
        let panel = random_panel(7, 11, 3, 2);
        let g = Grouping::new(vec![0; 7], 1).unwrap();
        let params = group_ols(&panel, &g, false).unwrap();
        let oracle = stacked_ols(&panel);
        for (a, b) in params.theta(0).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn gfe_time_effects_are_group_means() {
        // x has zero mean within every (k, t), so mu_kt must equal ybar_kt
        let (n, t_len) = (4, 5);
        let labels = vec![0, 0, 1, 1];
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..n {
            for t in 0..t_len {
                y.push(rng.random_range(-1.0..1.0) + labels[i] as f64 * t as f64);
                // +-1 alternating within each pair so group-period means are 0
                x.push(if i % 2 == 0 { 1.0 + t as f64 } else { -1.0 - t as f64 });
            }
        }
        let panel = PanelData::new(n, t_len, 1, y, x).unwrap();
        let g = Grouping::new(labels.clone(), 2).unwrap();
        let params = group_ols(&panel, &g, true).unwrap();
        for k in 0..2 {
            let mu = params.mu(k).unwrap();
            for t in 0..t_len {
                let mean: f64 = g.members(k).map(|i| panel.y(i, t)).sum::<f64>() / 2.0;
                assert!((mu[t] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gfe_residual_means_vanish() {
        let panel = random_panel(12, 6, 2, 4);
        let g = Grouping::new((0..12).map(|i| i % 3).collect(), 3).unwrap();
        let params = group_ols(&panel, &g, true).unwrap();
        for k in 0..3 {
            for t in 0..6 {
                let mut s = 0.0;
                let mut c = 0.0;
                for i in g.members(k) {
                    s += panel.y(i, t)
                        - crate::linalg::dot(panel.x_row(i, t), params.theta(k))
                        - params.mu(k).unwrap()[t];
                    c += 1.0;
                }
                assert!((s / c).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn empty_group_is_an_error() {
        let panel = random_panel(4, 5, 1, 5);
        let g = Grouping::new(vec![0, 0, 2, 2], 3).unwrap();
        assert!(matches!(group_ols(&panel, &g, false), Err(Error::EmptyGroup(2))));
    }

    #[test]
    fn rank_deficient_group_names_the_group() {
        // unit 2 alone in group 2 with two collinear regressors
        let mut x = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..3 {
            for _ in 0..4 {
                let a: f64 = rng.sample(StandardNormal);
                if i == 2 {
                    x.extend([a, 2.0 * a]);
                } else {
                    x.extend([a, rng.sample::<f64, _>(StandardNormal)]);
                }
            }
        }
        let y = (0..12).map(|v| v as f64).collect();
        let panel = PanelData::new(3, 4, 2, y, x).unwrap();
        let g = Grouping::new(vec![0, 0, 1], 2).unwrap();
        assert!(matches!(group_ols(&panel, &g, false), Err(Error::SingularDesign(2))));
    }

    #[test]
    fn gfe_singleton_group_is_singular() {
        let panel = random_panel(3, 5, 1, 7);
        let g = Grouping::new(vec![0, 0, 1], 2).unwrap();
        assert!(matches!(group_ols(&panel, &g, true), Err(Error::SingularDesign(2))));
    }
}
