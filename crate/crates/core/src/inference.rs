//! Post-clustering standard errors.
//!
//! Memberships are treated as known. Slopes use a sandwich covariance with
//! unit-clustered scores; grouped time effects use the cross-sectional
//! variance of the residuals at each period.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::io::fmt_f64;
use crate::linalg::{add_outer, factor_spd};
use crate::panel::PanelData;

/// Sandwich covariance of one group's slope vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeCovariance {
    pub p: usize,
    /// Row-major `p x p`.
    pub matrix: Vec<f64>,
    pub n_k: usize,
    /// Set when the group has a single unit; the clustered score variance is
    /// then estimated from one cluster.
    pub small_group: bool,
}

impl SlopeCovariance {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.matrix[a * self.p + b]
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.p).map(|j| self.get(j, j).max(0.0).sqrt()).collect()
    }
}

/// Slope covariance plus per-period variances of the grouped time effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfeCovariance {
    pub slopes: SlopeCovariance,
    /// `omega_kt`: mean squared residual over the group's units at each period.
    pub omega: Vec<f64>,
}

/// Estimated time path of one group with standard errors `sqrt(omega_kt / N_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GfeBands {
    pub mu_hat: Vec<f64>,
    pub se: Vec<f64>,
}

fn check_group(fit: &FitResult, panel: &PanelData, k: usize) -> Result<Vec<usize>> {
    if fit.grouping.n_units() != panel.n_units() {
        return Err(Error::Dimension("fit and panel disagree on N".into()));
    }
    if k >= fit.grouping.k() {
        return Err(Error::Dimension(format!("group {} outside 1..={}", k + 1, fit.grouping.k())));
    }
    let members: Vec<usize> = fit.grouping.members(k).collect();
    if members.is_empty() {
        return Err(Error::EmptyGroup(k + 1));
    }
    Ok(members)
}

/// `(sum x x')^-1 (sum_i s_i s_i') (sum x x')^-1` with `s_i = sum_t x_it e_it`,
/// which equals `Sigma^-1 Omega Sigma^-1 / (N_k T)` for the normalised moments.
fn sandwich(p: usize, sxx: &[f64], scores: &[Vec<f64>], group: usize) -> Result<Vec<f64>> {
    let a = DMatrix::from_row_slice(p, p, sxx);
    let inv = factor_spd(&a).ok_or(Error::SingularDesign(group + 1))?.inverse();
    let mut meat = vec![0.0; p * p];
    for s in scores {
        add_outer(&mut meat, s, 1.0);
    }
    let meat = DMatrix::from_row_slice(p, p, &meat);
    let v = &inv * meat * &inv;
    let v = (&v + v.transpose()) * 0.5;
    Ok((0..p).flat_map(|r| (0..p).map(move |c| (r, c))).map(|(r, c)| v[(r, c)]).collect())
}

/// Sandwich covariance of `theta_k` for a slope-only fit (`k` is 0-based).
pub fn slope_covariance(panel: &PanelData, fit: &FitResult, k: usize) -> Result<SlopeCovariance> {
    if fit.params.gfe() {
        return Err(Error::InvalidUse(
            "fit has grouped fixed effects; use gfe_covariance".into(),
        ));
    }
    let members = check_group(fit, panel, k)?;
    let p = panel.n_regressors();
    let theta = fit.params.theta(k);
    let mut sxx = vec![0.0; p * p];
    let mut scores = Vec::with_capacity(members.len());
    for &i in &members {
        let mut s = vec![0.0; p];
        for t in 0..panel.n_periods() {
            let x = panel.x_row(i, t);
            let e = panel.y(i, t) - crate::linalg::dot(x, theta);
            add_outer(&mut sxx, x, 1.0);
            for (a, v) in s.iter_mut().zip(x) {
                *a += v * e;
            }
        }
        scores.push(s);
    }
    Ok(SlopeCovariance {
        p,
        matrix: sandwich(p, &sxx, &scores, k)?,
        n_k: members.len(),
        small_group: members.len() == 1,
    })
}

/// Group-period means of the regressors, `T x p` row-major.
pub fn group_period_means(panel: &PanelData, members: &[usize]) -> Vec<f64> {
    let (t_len, p) = (panel.n_periods(), panel.n_regressors());
    let mut means = vec![0.0; t_len * p];
    for &i in members {
        for (a, v) in means.iter_mut().zip(panel.x_unit(i)) {
            *a += v;
        }
    }
    let nk = members.len() as f64;
    means.iter_mut().for_each(|v| *v /= nk);
    means
}

/// Slope covariance on group-period demeaned regressors and `omega_kt`
/// for a fit with grouped fixed effects (`k` is 0-based).
pub fn gfe_covariance(panel: &PanelData, fit: &FitResult, k: usize) -> Result<GfeCovariance> {
    let Some(mu) = fit.params.mu(k) else {
        return Err(Error::InvalidUse("fit has no grouped fixed effects; use slope_covariance".into()));
    };
    let members = check_group(fit, panel, k)?;
    let (t_len, p) = (panel.n_periods(), panel.n_regressors());
    let theta = fit.params.theta(k);
    let xbar = group_period_means(panel, &members);

    let mut sxx = vec![0.0; p * p];
    let mut scores = Vec::with_capacity(members.len());
    let mut omega = vec![0.0; t_len];
    let mut xd = vec![0.0; p];
    for &i in &members {
        let mut s = vec![0.0; p];
        for t in 0..t_len {
            let x = panel.x_row(i, t);
            for ((d, a), b) in xd.iter_mut().zip(x).zip(&xbar[t * p..(t + 1) * p]) {
                *d = a - b;
            }
            let e = panel.y(i, t) - crate::linalg::dot(x, theta) - mu[t];
            add_outer(&mut sxx, &xd, 1.0);
            for (a, v) in s.iter_mut().zip(&xd) {
                *a += v * e;
            }
            omega[t] += e * e;
        }
        scores.push(s);
    }
    let nk = members.len();
    omega.iter_mut().for_each(|w| *w /= nk as f64);
    Ok(GfeCovariance {
        slopes: SlopeCovariance {
            p,
            matrix: sandwich(p, &sxx, &scores, k)?,
            n_k: nk,
            small_group: nk == 1,
        },
        omega,
    })
}

/// Two-sided normal significance marker: `*` 10%, `**` 5%, `***` 1%.
pub fn stars(t_stat: f64) -> &'static str {
    let a = t_stat.abs();
    if a > 2.576 {
        "***"
    } else if a > 1.960 {
        "**"
    } else if a > 1.645 {
        "*"
    } else {
        ""
    }
}

/// `estimate / se`; a zero standard error gives a signed infinity for a
/// non-zero estimate and 0 otherwise.
pub fn t_statistic(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        estimate / se
    } else if estimate == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(estimate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCoefs {
    /// 1-based label in the fit's grouping.
    pub label: usize,
    pub n_k: usize,
    pub theta_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub t_stat: Vec<f64>,
    pub star: Vec<String>,
    pub small_group: bool,
    pub gfe: Option<GfeBands>,
}

/// Per-group estimates ordered from the largest group to the smallest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefTable {
    pub regressors: Vec<String>,
    pub periods: Vec<String>,
    pub groups: Vec<GroupCoefs>,
}

pub fn coef_table(panel: &PanelData, fit: &FitResult) -> Result<CoefTable> {
    let sizes = fit.grouping.sizes();
    let mut order: Vec<usize> = (0..fit.grouping.k()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));

    let mut groups = Vec::with_capacity(order.len());
    for k in order {
        let (cov, bands) = if fit.params.gfe() {
            let g = gfe_covariance(panel, fit, k)?;
            let nk = g.slopes.n_k as f64;
            let bands = GfeBands {
                mu_hat: fit.params.mu(k).expect("gfe fit").to_vec(),
                se: g.omega.iter().map(|w| (w / nk).sqrt()).collect(),
            };
            (g.slopes, Some(bands))
        } else {
            (slope_covariance(panel, fit, k)?, None)
        };
        let theta_hat = fit.params.theta(k).to_vec();
        let se = cov.std_errors();
        let t_stat: Vec<f64> = theta_hat.iter().zip(&se).map(|(&b, &s)| t_statistic(b, s)).collect();
        groups.push(GroupCoefs {
            label: k + 1,
            n_k: cov.n_k,
            star: t_stat.iter().map(|&t| stars(t).to_string()).collect(),
            theta_hat,
            se,
            t_stat,
            small_group: cov.small_group,
            gfe: bands,
        });
    }
    Ok(CoefTable {
        regressors: (0..panel.n_regressors()).map(|j| panel.regressor_label(j)).collect(),
        periods: (0..panel.n_periods()).map(|t| panel.period_label(t)).collect(),
        groups,
    })
}

impl CoefTable {
    /// Long CSV: one row per (group, term). Grouped time effects appear as
    /// terms `mu[<period>]`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["group", "label", "n_k", "term", "estimate", "se", "t_stat", "stars"])?;
        for (rank, g) in self.groups.iter().enumerate() {
            let head = [(rank + 1).to_string(), g.label.to_string(), g.n_k.to_string()];
            for (j, name) in self.regressors.iter().enumerate() {
                let mut rec = head.to_vec();
                rec.extend([
                    name.clone(),
                    fmt_f64(g.theta_hat[j]),
                    fmt_f64(g.se[j]),
                    fmt_f64(g.t_stat[j]),
                    g.star[j].clone(),
                ]);
                wtr.write_record(&rec)?;
            }
            if let Some(b) = &g.gfe {
                for (t, period) in self.periods.iter().enumerate() {
                    let tt = t_statistic(b.mu_hat[t], b.se[t]);
                    let mut rec = head.to_vec();
                    rec.extend([
                        format!("mu[{period}]"),
                        fmt_f64(b.mu_hat[t]),
                        fmt_f64(b.se[t]),
                        fmt_f64(tt),
                        stars(tt).to_string(),
                    ]);
                    wtr.write_record(&rec)?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Aligned text with stars and parenthesised standard errors.
    pub fn to_text(&self) -> String {
        const W: usize = 14;
        let mut out = String::new();
        let _ = write!(out, "{:<12}", "");
        for rank in 0..self.groups.len() {
            let _ = write!(out, "{:>W$}", format!("Group {}", rank + 1));
        }
        out.push('\n');
        for (j, name) in self.regressors.iter().enumerate() {
            let _ = write!(out, "{name:<12}");
            for g in &self.groups {
                let _ = write!(out, "{:>W$}", format!("{:.3}{:<3}", g.theta_hat[j], g.star[j]));
            }
            out.push('\n');
            let _ = write!(out, "{:<12}", "");
            for g in &self.groups {
                let _ = write!(out, "{:>W$}", format!("({:.3})   ", g.se[j]));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:<12}", "N_k");
        for g in &self.groups {
            let _ = write!(out, "{:>W$}", format!("{}   ", g.n_k));
        }
        out.push('\n');
        out.push_str("Note: * p<0.10, ** p<0.05, *** p<0.01 (two-sided normal).\n");
        out
    }
}
