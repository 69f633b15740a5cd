//! Information-criterion selection of the number of groups.
//!
//! `IC(K) = sigma2_hat(K) + n(K) * sigma_tilde2 * h`, minimised over a
//! contiguous range of K. `sigma_tilde2` is the degrees-of-freedom corrected
//! residual variance of the `K_max` fit.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit, FitConfig, FitResult};
use crate::io::fmt_f64;
use crate::panel::PanelData;

/// Penalty sequence `h_NT`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    /// `ln(min(N, T)) / min(N, T)`
    Bn,
    /// `ln(NT) / (NT)`
    Bic,
    /// `ln(N) / N` if `N <= T`, else `0.5 ln(NT) / N`
    Mic1,
    /// `2 ln(N) / (NT)` if `N <= T`, else `ln(NT) / (NT)`
    Mic2,
    /// A fixed positive value.
    Custom(f64),
}

impl PenaltyKind {
    pub const STANDARD: [PenaltyKind; 4] = [Self::Bn, Self::Bic, Self::Mic1, Self::Mic2];

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bn => f.write_str("bn"),
            Self::Bic => f.write_str("bic"),
            Self::Mic1 => f.write_str("mic1"),
            Self::Mic2 => f.write_str("mic2"),
            Self::Custom(h) => write!(f, "custom:{h:?}"),
        }
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "bn" => Ok(Self::Bn),
            "bic" => Ok(Self::Bic),
            "mic1" => Ok(Self::Mic1),
            "mic2" => Ok(Self::Mic2),
            other => {
                let value = other
                    .strip_prefix("custom:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "unknown penalty `{s}` (expected bn, bic, mic1, mic2 or custom:<h>)"
                        ))
                    })?;
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::InvalidConfig(format!("custom penalty must be positive, got {value}")));
                }
                Ok(Self::Custom(value))
            }
        }
    }
}

/// Evaluates `h_NT` for a panel with `n` units and `t` periods.
pub fn penalty_value(kind: PenaltyKind, n: usize, t: usize) -> Result<f64> {
    if n < 2 || t < 2 {
        return Err(Error::PenaltyDomain { n, t });
    }
    let (nf, tf) = (n as f64, t as f64);
    let nt = nf * tf;
    let h = match kind {
        PenaltyKind::Bn => {
            let m = nf.min(tf);
            m.ln() / m
        }
        PenaltyKind::Bic => nt.ln() / nt,
        PenaltyKind::Mic1 => {
            if n <= t {
                nf.ln() / nf
            } else {
                0.5 * nt.ln() / nf
            }
        }
        PenaltyKind::Mic2 => {
            if n <= t {
                2.0 * nf.ln() / nt
            } else {
                nt.ln() / nt
            }
        }
        PenaltyKind::Custom(h) => {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidConfig(format!("custom penalty must be positive, got {h}")));
            }
            h
        }
    };
    Ok(h)
}

/// Number of parameters: `N + pK`, or `N + (p + T)K` with grouped fixed effects.
pub fn n_params(k: usize, n: usize, p: usize, t: usize, gfe: bool) -> usize {
    n_params_with(k, n, p, t, gfe, true)
}

/// As [`n_params`], optionally dropping the `N` term (constant in K).
pub fn n_params_with(k: usize, n: usize, p: usize, t: usize, gfe: bool, include_unit_term: bool) -> usize {
    debug_assert!(k >= 1, "K must be positive");
    let per_group = if gfe { p + t } else { p };
    let base = if include_unit_term { n } else { 0 };
    base + per_group * k
}

/// `sigma_tilde2 = NT * sigma2_hat(K_max) / (NT - n(K_max))`.
pub fn sigma_tilde2(
    fit_at_kmax: &FitResult,
    n: usize,
    t: usize,
    p: usize,
    k_max: usize,
    gfe: bool,
) -> Result<f64> {
    sigma_tilde2_from(fit_at_kmax.sigma2_hat, n, t, p, k_max, gfe)
}

fn sigma_tilde2_from(sigma2_kmax: f64, n: usize, t: usize, p: usize, k_max: usize, gfe: bool) -> Result<f64> {
    let nt = n * t;
    let n_params = n_params(k_max, n, p, t, gfe);
    if nt <= n_params {
        return Err(Error::InfeasibleKmax { nt, n_params });
    }
    Ok(nt as f64 * sigma2_kmax / (nt - n_params) as f64)
}

/// Criterion values within this multiple of the mean squared outcome are
/// treated as equal when picking K.
pub const TIE_RTOL: f64 = 1e-12;

/// One row of an information-criterion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcRow {
    pub k: usize,
    /// `None` when every start at this K was degenerate.
    pub sigma2_hat: Option<f64>,
    pub n_params: usize,
    pub h: f64,
    /// `+inf` (serialised as `null`) for failed K.
    pub ic: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcTable {
    pub penalty: PenaltyKind,
    pub gfe: bool,
    pub k_min: usize,
    pub k_max: usize,
    pub sigma_tilde2: f64,
    pub rows: Vec<IcRow>,
    /// Smallest K whose criterion is within `tie_tol` of the minimum.
    pub selected_k: usize,
    pub tie_tol: f64,
}

impl IcTable {
    pub fn row(&self, k: usize) -> Option<&IcRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["k", "sigma2_hat", "n_params", "h", "ic", "selected", "status"])?;
        for r in &self.rows {
            wtr.write_record([
                r.k.to_string(),
                r.sigma2_hat.map(fmt_f64).unwrap_or_default(),
                r.n_params.to_string(),
                fmt_f64(r.h),
                fmt_f64(r.ic),
                u8::from(r.k == self.selected_k).to_string(),
                r.failure.clone().unwrap_or_else(|| "ok".into()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Options for [`select_k`] beyond the estimation config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOptions {
    /// Keep the `N` term of `n(K)`; it never changes the argmin.
    pub include_unit_term: bool,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            include_unit_term: true,
        }
    }
}

/// Fits for every K in `k_min..=k_max`, shared by all penalties.
#[derive(Debug, Clone)]
pub struct RangeFits {
    pub k_min: usize,
    pub k_max: usize,
    pub gfe: bool,
    pub n: usize,
    pub t: usize,
    pub p: usize,
    /// Mean of `y^2` over the panel; sets the scale of the tie tolerance.
    pub y_scale: f64,
    pub fits: Vec<std::result::Result<FitResult, String>>,
}

impl RangeFits {
    pub fn get(&self, k: usize) -> Option<&FitResult> {
        if k < self.k_min || k > self.k_max {
            return None;
        }
        self.fits[k - self.k_min].as_ref().ok()
    }
}

/// Runs the multi-start estimator at every K in the range with `config.seed`.
pub fn fit_range(panel: &PanelData, k_min: usize, k_max: usize, config: &FitConfig) -> Result<RangeFits> {
    if k_min == 0 || k_min > k_max || k_max > panel.n_units() {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= k_min <= k_max <= N, got k_min={k_min}, k_max={k_max}, N={}",
            panel.n_units()
        )));
    }
    let (n, t, p) = (panel.n_units(), panel.n_periods(), panel.n_regressors());
    // fail early on an infeasible K_max before spending time on fits
    let nk = n_params(k_max, n, p, t, config.gfe);
    if n * t <= nk {
        return Err(Error::InfeasibleKmax {
            nt: n * t,
            n_params: nk,
        });
    }
    let mut fits = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let cfg = config.clone().with_k(k);
        match fit(panel, &cfg) {
            Ok(f) => fits.push(Ok(f)),
            Err(e @ (Error::EstimationFailed(_) | Error::DegenerateStart(_))) => fits.push(Err(e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(RangeFits {
        k_min,
        k_max,
        gfe: config.gfe,
        n,
        t,
        p,
        y_scale: panel.y_values().iter().map(|v| v * v).sum::<f64>() / panel.n_obs() as f64,
        fits,
    })
}

/// Evaluates the criterion for one penalty on precomputed fits.
pub fn ic_table(fits: &RangeFits, kind: PenaltyKind, options: SelectionOptions) -> Result<IcTable> {
    let (n, t, p) = (fits.n, fits.t, fits.p);
    let h = penalty_value(kind, n, t)?;
    let kmax_fit = fits.get(fits.k_max).ok_or(Error::KmaxFitFailed(fits.k_max))?;
    // the degrees-of-freedom correction always counts the full n(K_max);
    // the option only drops the K-invariant N term from the criterion
    let s_tilde = sigma_tilde2_from(kmax_fit.sigma2_hat, n, t, p, fits.k_max, fits.gfe)?;

    let mut rows = Vec::with_capacity(fits.fits.len());
    for (offset, res) in fits.fits.iter().enumerate() {
        let k = fits.k_min + offset;
        let np = n_params_with(k, n, p, t, fits.gfe, options.include_unit_term);
        let row = match res {
            Ok(f) => IcRow {
                k,
                sigma2_hat: Some(f.sigma2_hat),
                n_params: np,
                h,
                ic: f.sigma2_hat + np as f64 * s_tilde * h,
                failure: None,
            },
            Err(msg) => IcRow {
                k,
                sigma2_hat: None,
                n_params: np,
                h,
                ic: f64::INFINITY,
                failure: Some(msg.clone()),
            },
        };
        rows.push(row);
    }
    // criteria closer than rounding noise of a zero-residual fit count as tied
    let tie_tol = TIE_RTOL * fits.y_scale;
    let min_ic = rows
        .iter()
        .filter(|r| r.failure.is_none())
        .map(|r| r.ic)
        .fold(f64::INFINITY, f64::min);
    let selected_k = rows
        .iter()
        .find(|r| r.failure.is_none() && r.ic <= min_ic + tie_tol)
        .map(|r| r.k)
        .expect("the K_max fit succeeded");
    Ok(IcTable {
        penalty: kind,
        gfe: fits.gfe,
        k_min: fits.k_min,
        k_max: fits.k_max,
        sigma_tilde2: s_tilde,
        rows,
        selected_k,
        tie_tol,
    })
}

/// Fits every K in `k_min..=k_max` and returns the criterion table with the
/// selected K (ties to the smallest K).
pub fn select_k(
    panel: &PanelData,
    k_min: usize,
    k_max: usize,
    kind: PenaltyKind,
    config: &FitConfig,
) -> Result<IcTable> {
    let fits = fit_range(panel, k_min, k_max, config)?;
    ic_table(&fits, kind, SelectionOptions::default())
}
