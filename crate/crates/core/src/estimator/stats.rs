use crate::linalg::add_outer;
use crate::panel::{Grouping, PanelData};

use super::GroupParams;

/// Per-unit cross products `X_i'X_i`, `X_i'y_i` and `y_i'y_i`.
///
/// With these, slope-only group OLS and the assignment costs no longer
/// touch the `T` dimension.
#[derive(Debug, Clone)]
pub(crate) struct UnitStats {
    pub p: usize,
    pub xx: Vec<f64>,
    pub xy: Vec<f64>,
    pub yy: Vec<f64>,
}

impl UnitStats {
    pub fn new(panel: &PanelData) -> Self {
        let (n, t_len, p) = (panel.n_units(), panel.n_periods(), panel.n_regressors());
        let mut xx = vec![0.0; n * p * p];
        let mut xy = vec![0.0; n * p];
        let mut yy = vec![0.0; n];
        for i in 0..n {
            let xx_i = &mut xx[i * p * p..(i + 1) * p * p];
            let xy_i = &mut xy[i * p..(i + 1) * p];
            for t in 0..t_len {
                let row = panel.x_row(i, t);
                let y = panel.y(i, t);
                add_outer(xx_i, row, 1.0);
                for (a, v) in xy_i.iter_mut().zip(row) {
                    *a += v * y;
                }
                yy[i] += y * y;
            }
        }
        Self { p, xx, xy, yy }
    }

    #[inline]
    pub fn xx(&self, i: usize) -> &[f64] {
        &self.xx[i * self.p * self.p..(i + 1) * self.p * self.p]
    }

    #[inline]
    pub fn xy(&self, i: usize) -> &[f64] {
        &self.xy[i * self.p..(i + 1) * self.p]
    }
}

/// Sum of squared residuals `sum_i sum_t (y_it - x_it' theta_{k_i} - mu_{k_i t})^2`,
/// evaluated observation by observation.
pub fn ssr(panel: &PanelData, grouping: &Grouping, params: &GroupParams) -> f64 {
    let mut total = 0.0;
    for i in 0..panel.n_units() {
        let k = grouping.label(i);
        total += unit_ssr_direct(panel, params, i, k);
    }
    total
}

#[inline]
pub(crate) fn unit_ssr_direct(panel: &PanelData, params: &GroupParams, i: usize, k: usize) -> f64 {
    let theta = params.theta(k);
    let mu = params.mu(k);
    let mut s = 0.0;
    for t in 0..panel.n_periods() {
        let mut e = panel.y(i, t) - crate::linalg::dot(panel.x_row(i, t), theta);
        if let Some(mu) = mu {
            e -= mu[t];
        }
        s += e * e;
    }
    s
}
