use crate::linalg::{dot, quad_form};
use crate::panel::{Grouping, PanelData};

use super::stats::unit_ssr_direct;
use super::{GroupParams, UnitStats};

/// Assigns every unit to the group whose parameters minimise its
/// time-summed squared residual. Ties go to the smallest label.
pub fn assign(panel: &PanelData, params: &GroupParams) -> Grouping {
    let stats = (!params.gfe()).then(|| UnitStats::new(panel));
    let labels = assign_with(panel, stats.as_ref(), params, None).labels;
    Grouping::from_raw(labels, params.k())
}

/// Labels and chosen-group costs from one assignment pass.
pub(crate) struct Assignment {
    pub labels: Vec<usize>,
    pub costs: Vec<f64>,
    /// Total cost under the labels passed in as `current`, if any.
    pub current_ssr: f64,
}

/// Assignment pass that also prices the `current` labels under `params`,
/// so the iterative procedure needs a single sweep per step.
pub(crate) fn assign_with(
    panel: &PanelData,
    stats: Option<&UnitStats>,
    params: &GroupParams,
    current: Option<&[usize]>,
) -> Assignment {
    let n = panel.n_units();
    let k_count = params.k();
    let mut labels = Vec::with_capacity(n);
    let mut costs = Vec::with_capacity(n);
    let mut current_ssr = 0.0;
    let mut row = vec![0.0; k_count];
    // theta_k theta_k' flattened, so the quadratic form is a plain dot product
    // with the unit's X'X
    let p = params.p();
    let outer: Vec<f64> = (0..k_count)
        .flat_map(|k| {
            let theta = params.theta(k);
            theta.iter().flat_map(move |a| theta.iter().map(move |b| a * b))
        })
        .collect();
    for i in 0..n {
        match stats {
            Some(s) if !params.gfe() => {
                let (xx, xy, yy) = (s.xx(i), s.xy(i), s.yy[i]);
                for (k, c) in row.iter_mut().enumerate() {
                    let q = &outer[k * p * p..(k + 1) * p * p];
                    *c = (yy - 2.0 * dot(params.theta(k), xy) + dot(xx, q)).max(0.0);
                }
            }
            _ => {
                for (k, c) in row.iter_mut().enumerate() {
                    *c = unit_ssr_direct(panel, params, i, k);
                }
            }
        }
        let mut best = (0, f64::INFINITY);
        for (k, &c) in row.iter().enumerate() {
            if c < best.1 {
                best = (k, c);
            }
        }
        labels.push(best.0);
        costs.push(best.1);
        if let Some(cur) = current {
            current_ssr += row[cur[i]];
        }
    }
    Assignment { labels, costs, current_ssr }
}

/// Squared-residual cost of unit `i` under group `k`.
///
/// Slope-only models use the cross products (`y'y - 2 theta'X'y + theta'X'X theta`),
/// clamped at zero against rounding.
#[inline]
pub(crate) fn unit_cost(
    panel: &PanelData,
    stats: Option<&UnitStats>,
    params: &GroupParams,
    i: usize,
    k: usize,
) -> f64 {
    match stats {
        Some(s) if !params.gfe() => {
            let theta = params.theta(k);
            let c = s.yy[i] - 2.0 * dot(theta, s.xy(i)) + quad_form(s.xx(i), theta);
            c.max(0.0)
        }
        _ => unit_ssr_direct(panel, params, i, k),
    }
}
