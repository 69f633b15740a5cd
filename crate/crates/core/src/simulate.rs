//! The three reference data-generating processes, the replication runner
//! and its evaluation metrics (mean selected K, Group-3 RMSE, proportion of
//! perfect classification).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{misclassified, FitConfig, FitResult};
use crate::io::fmt_f64;
use crate::panel::{simulated_group_sizes, GroupSizeSpec, Grouping, PanelData};
use crate::rng::derive_seed;
use crate::selection::{fit_range, ic_table, PenaltyKind, SelectionOptions};

/// Number of latent groups in every design.
pub const TRUE_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dgp {
    /// `y = theta_1 x_1 + theta_2 x_2 + eps`
    #[serde(alias = "dgp1")]
    Static1,
    /// `y_t = theta_1 x_1 + theta_2 y_{t-1} + eps`
    #[serde(alias = "dgp2")]
    Dynamic2,
    /// Static design plus grouped time effects.
    #[serde(alias = "dgp3")]
    Gfe3,
}

impl Dgp {
    pub fn thetas(self) -> [[f64; 2]; 3] {
        match self {
            Dgp::Static1 | Dgp::Gfe3 => [[3.0, -3.0], [1.0, -2.0], [4.0, -1.0]],
            Dgp::Dynamic2 => [[3.0, 0.2], [1.0, 0.5], [4.0, 0.8]],
        }
    }

    pub fn has_gfe(self) -> bool {
        matches!(self, Dgp::Gfe3)
    }

    /// Penalties studied for this design in the short-panel experiments.
    pub fn default_penalties(self) -> Vec<PenaltyKind> {
        match self {
            Dgp::Static1 | Dgp::Dynamic2 => vec![PenaltyKind::Bn, PenaltyKind::Bic, PenaltyKind::Mic1],
            Dgp::Gfe3 => vec![PenaltyKind::Bn, PenaltyKind::Bic, PenaltyKind::Mic2],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dgp::Static1 => "static1",
            Dgp::Dynamic2 => "dynamic2",
            Dgp::Gfe3 => "gfe3",
        }
    }
}

impl std::str::FromStr for Dgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "static1" | "dgp1" | "1" => Ok(Dgp::Static1),
            "dynamic2" | "dgp2" | "2" => Ok(Dgp::Dynamic2),
            "gfe3" | "dgp3" | "3" => Ok(Dgp::Gfe3),
            other => Err(Error::InvalidConfig(format!("unknown DGP `{other}`"))),
        }
    }
}

/// Grouped time effect of group `k` (0-based) at period `t` (0-based) in a
/// panel of length `t_len`: `4t/T`, `2t/T` and `4` with 1-based `t`.
pub fn gfe_path(k: usize, t: usize, t_len: usize) -> f64 {
    let s = (t + 1) as f64 / t_len as f64;
    match k {
        0 => 4.0 * s,
        1 => 2.0 * s,
        _ => 4.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub dgp: Dgp,
    pub n: usize,
    pub t: usize,
    pub alpha: f64,
    /// Discarded start-up periods of the dynamic design.
    pub burn_in: usize,
    /// Apply the within transformation after generation.
    pub within: bool,
    /// Standard deviation of the idiosyncratic error; 0 gives noiseless data.
    pub noise_sd: f64,
}

impl DgpSpec {
    pub const DEFAULT_BURN_IN: usize = 100;

    /// Standard settings: within transformation for the static and GFE
    /// designs only, 100 burn-in periods, unit-variance errors.
    pub fn new(dgp: Dgp, n: usize, t: usize, alpha: f64) -> Self {
        Self {
            dgp,
            n,
            t,
            alpha,
            burn_in: Self::DEFAULT_BURN_IN,
            within: dgp != Dgp::Dynamic2,
            noise_sd: 1.0,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_sd = 0.0;
        self
    }

    pub fn sizes(&self) -> Result<[usize; 3]> {
        simulated_group_sizes(&GroupSizeSpec::standard(self.n, self.alpha))
    }

    pub fn thetas(&self) -> [[f64; 2]; 3] {
        self.dgp.thetas()
    }

    /// The time effect the estimator targets: the raw path, or the path
    /// net of its time mean when the within transformation is applied.
    pub fn target_mu(&self, k: usize, t: usize) -> f64 {
        let raw = gfe_path(k, t, self.t);
        if self.within {
            let mean = (0..self.t).map(|s| gfe_path(k, s, self.t)).sum::<f64>() / self.t as f64;
            raw - mean
        } else {
            raw
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::InvalidConfig("simulated panels need T >= 2".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidConfig("noise_sd must be finite and non-negative".into()));
        }
        if self.dgp == Dgp::Dynamic2 && self.thetas().iter().any(|th| th[1].abs() >= 1.0) {
            return Err(Error::InvalidConfig("autoregressive coefficient must be below 1 in modulus".into()));
        }
        Ok(())
    }
}

/// Simulates one panel and its true grouping (groups in contiguous blocks).
pub fn generate(spec: &DgpSpec, rep_seed: u64) -> Result<(PanelData, Grouping)> {
    spec.validate()?;
    let sizes = spec.sizes()?;
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
        .collect();
    let thetas = spec.thetas();
    let (n, t_len) = (spec.n, spec.t);
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
    let mut draw = || -> f64 { rng.sample(StandardNormal) };
    let mut y = Vec::with_capacity(n * t_len);
    let mut x = Vec::with_capacity(n * t_len * 2);

    for &k in &labels {
        let th = thetas[k];
        match spec.dgp {
            Dgp::Static1 | Dgp::Gfe3 => {
                for t in 0..t_len {
                    let x1 = draw();
                    let x2 = draw();
                    let e = spec.noise_sd * draw();
                    let mu = if spec.dgp == Dgp::Gfe3 { gfe_path(k, t, t_len) } else { 0.0 };
                    x.extend([x1, x2]);
                    y.push(th[0] * x1 + th[1] * x2 + mu + e);
                }
            }
            Dgp::Dynamic2 => {
                let mut y_prev = 0.0;
                for s in 0..spec.burn_in + t_len {
                    let x1 = draw();
                    let e = spec.noise_sd * draw();
                    let y_now = th[0] * x1 + th[1] * y_prev + e;
                    if s >= spec.burn_in {
                        x.extend([x1, y_prev]);
                        y.push(y_now);
                    }
                    y_prev = y_now;
                }
            }
        }
    }

    let names = match spec.dgp {
        Dgp::Dynamic2 => vec!["x1".to_string(), "y_lag".to_string()],
        _ => vec!["x1".to_string(), "x2".to_string()],
    };
    let mut panel = PanelData::new(n, t_len, 2, y, x)?.with_regressor_names(names)?;
    if spec.within {
        panel = panel.within_transform()?;
    }
    Ok((panel, Grouping::new(labels, TRUE_K)?))
}

/// Root mean squared error of the parameters assigned to the true Group 3
/// members, each unit evaluated at its estimated group's parameters.
pub fn rmse_group3(fit: &FitResult, truth: &Grouping, spec: &DgpSpec) -> Result<f64> {
    if fit.grouping.k() != TRUE_K || truth.k() != TRUE_K {
        return Err(Error::InvalidUse(format!(
            "Group-3 RMSE needs K=3 fits, got K={}",
            fit.grouping.k()
        )));
    }
    let (perm, _) = misclassified(&fit.grouping, truth)?;
    let params = fit.params.relabel(&perm)?;
    let grouping = fit.grouping.relabel(&perm)?;
    let target = spec.thetas()[2];
    let members: Vec<usize> = truth.members(2).collect();
    let n3 = members.len() as f64;
    let t_len = params.t();

    let mut theta_part = 0.0;
    let mut mu_part = 0.0;
    for &i in &members {
        let k_hat = grouping.label(i);
        theta_part += params
            .theta(k_hat)
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
        if let Some(mu) = params.mu(k_hat) {
            mu_part += (0..t_len).map(|t| (mu[t] - spec.target_mu(2, t)).powi(2)).sum::<f64>();
        }
    }
    Ok((theta_part / n3 + mu_part / (n3 * t_len as f64)).sqrt())
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    /// Selected K per penalty, `None` where selection failed.
    pub k_hat: Vec<Option<usize>>,
    pub rmse: Option<f64>,
    pub misclassified: Option<usize>,
    pub sigma2_hat_true_k: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub spec: DgpSpec,
    pub penalties: Vec<PenaltyKind>,
    /// Mean selected K per penalty over replications where selection succeeded.
    pub mean_k_hat: Vec<f64>,
    pub rmse_mean: f64,
    /// Share of replications with every unit correctly classified.
    pub ppc: f64,
    pub n_reps: usize,
    pub n_failed: usize,
    pub per_rep: Vec<RepRecord>,
}

/// K range searched by the replication runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KRange {
    pub k_min: usize,
    pub k_max: usize,
}

impl Default for KRange {
    fn default() -> Self {
        Self { k_min: 2, k_max: 5 }
    }
}

pub fn run_scenario(
    spec: &DgpSpec,
    penalties: &[PenaltyKind],
    n_reps: usize,
    config: &FitConfig,
    base_seed: u64,
) -> Result<ScenarioResult> {
    run_scenario_with(spec, penalties, n_reps, config, base_seed, KRange::default())
}

/// Replicates `spec` `n_reps` times. Replication `r` simulates with seed
/// `derive_seed(base_seed, r)` and estimates with start streams seeded by
/// `derive_seed(config.seed, r)`, so results do not depend on scheduling.
pub fn run_scenario_with(
    spec: &DgpSpec,
    penalties: &[PenaltyKind],
    n_reps: usize,
    config: &FitConfig,
    base_seed: u64,
    range: KRange,
) -> Result<ScenarioResult> {
    if n_reps == 0 {
        return Err(Error::InvalidConfig("at least one replication is required".into()));
    }
    if !(range.k_min..=range.k_max).contains(&TRUE_K) {
        return Err(Error::InvalidConfig("K range must contain the true K=3".into()));
    }
    spec.validate()?;
    spec.sizes()?;
    config.validate()?;
    let gfe = spec.dgp.has_gfe();
    let one = |r: usize| replicate(spec, penalties, config, base_seed, range, gfe, r);
    let per_rep = map_reps(n_reps, one);

    let mut mean_k_hat = Vec::with_capacity(penalties.len());
    for j in 0..penalties.len() {
        let vals: Vec<f64> = per_rep.iter().filter_map(|r| r.k_hat[j]).map(|k| k as f64).collect();
        mean_k_hat.push(mean(&vals));
    }
    let rmses: Vec<f64> = per_rep.iter().filter_map(|r| r.rmse).collect();
    let perfect = per_rep.iter().filter(|r| r.misclassified == Some(0)).count();
    Ok(ScenarioResult {
        spec: spec.clone(),
        penalties: penalties.to_vec(),
        mean_k_hat,
        rmse_mean: mean(&rmses),
        ppc: perfect as f64 / n_reps as f64,
        n_reps,
        n_failed: per_rep.iter().filter(|r| r.failure.is_some()).count(),
        per_rep,
    })
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn replicate(
    spec: &DgpSpec,
    penalties: &[PenaltyKind],
    config: &FitConfig,
    base_seed: u64,
    range: KRange,
    gfe: bool,
    rep: usize,
) -> RepRecord {
    let seed = derive_seed(base_seed, rep as u64);
    let mut record = RepRecord {
        rep,
        seed,
        k_hat: vec![None; penalties.len()],
        rmse: None,
        misclassified: None,
        sigma2_hat_true_k: None,
        failure: None,
    };
    let (panel, truth) = match generate(spec, seed) {
        Ok(v) => v,
        Err(e) => {
            record.failure = Some(e.to_string());
            return record;
        }
    };
    let cfg = config
        .clone()
        .with_gfe(gfe)
        .with_seed(derive_seed(config.seed, rep as u64));
    let fits = match fit_range(&panel, range.k_min, range.k_max, &cfg) {
        Ok(f) => f,
        Err(e) => {
            record.failure = Some(e.to_string());
            return record;
        }
    };
    let mut failures = Vec::new();
    for (j, &kind) in penalties.iter().enumerate() {
        match ic_table(&fits, kind, SelectionOptions::default()) {
            Ok(table) => record.k_hat[j] = Some(table.selected_k),
            Err(e) => failures.push(format!("{kind}: {e}")),
        }
    }
    match fits.get(TRUE_K) {
        Some(fit3) => {
            record.sigma2_hat_true_k = Some(fit3.sigma2_hat);
            match (rmse_group3(fit3, &truth, spec), misclassified(&fit3.grouping, &truth)) {
                (Ok(rmse), Ok((_, miss))) => {
                    record.rmse = Some(rmse);
                    record.misclassified = Some(miss);
                }
                (Err(e), _) | (_, Err(e)) => failures.push(e.to_string()),
            }
        }
        None => failures.push("K=3 fit failed".into()),
    }
    if !failures.is_empty() {
        record.failure = Some(failures.join("; "));
    }
    record
}

#[cfg(feature = "parallel")]
fn map_reps<F>(n: usize, f: F) -> Vec<RepRecord>
where
    F: Fn(usize) -> RepRecord + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_reps<F>(n: usize, f: F) -> Vec<RepRecord>
where
    F: Fn(usize) -> RepRecord,
{
    (0..n).map(f).collect()
}

/// A grid of scenarios sharing a design and estimation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    pub name: String,
    pub dgp: Dgp,
    pub n: Vec<usize>,
    /// Absolute panel lengths; combined with every N.
    #[serde(default)]
    pub t: Vec<usize>,
    /// Panel lengths as multiples of N; combined with every N.
    #[serde(default)]
    pub t_over_n: Vec<f64>,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub penalties: Option<Vec<PenaltyKind>>,
    #[serde(default)]
    pub within: Option<bool>,
    #[serde(default)]
    pub burn_in: Option<usize>,
}

impl ScenarioGrid {
    /// Expands the grid in (N, T, alpha) order, absolute T before ratios.
    pub fn cells(&self) -> Result<Vec<DgpSpec>> {
        if self.t.is_empty() && self.t_over_n.is_empty() {
            return Err(Error::InvalidConfig(format!("scenario `{}` gives neither t nor t_over_n", self.name)));
        }
        let mut out = Vec::new();
        for &n in &self.n {
            let mut ts: Vec<usize> = self.t.clone();
            for &r in &self.t_over_n {
                let t = (r * n as f64).round();
                if !(t >= 2.0) {
                    return Err(Error::InvalidConfig(format!("T/N={r} gives T<2 at N={n}")));
                }
                ts.push(t as usize);
            }
            for t in ts {
                for &alpha in &self.alpha {
                    let mut spec = DgpSpec::new(self.dgp, n, t, alpha);
                    if let Some(w) = self.within {
                        spec.within = w;
                    }
                    if let Some(b) = self.burn_in {
                        spec.burn_in = b;
                    }
                    out.push(spec);
                }
            }
        }
        Ok(out)
    }

    pub fn penalties(&self) -> Vec<PenaltyKind> {
        self.penalties.clone().unwrap_or_else(|| self.dgp.default_penalties())
    }
}

/// Writes one row per (scenario cell, penalty).
pub fn write_summary_csv<W: Write>(writer: W, results: &[(String, ScenarioResult)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "scenario", "dgp", "n", "t", "alpha", "penalty", "mean_k_hat", "rmse_mean", "ppc", "n_reps", "n_failed",
    ])?;
    for (name, res) in results {
        for (j, kind) in res.penalties.iter().enumerate() {
            wtr.write_record([
                name.clone(),
                res.spec.dgp.name().to_string(),
                res.spec.n.to_string(),
                res.spec.t.to_string(),
                fmt_f64(res.spec.alpha),
                kind.to_string(),
                fmt_f64(res.mean_k_hat[j]),
                fmt_f64(res.rmse_mean),
                fmt_f64(res.ppc),
                res.n_reps.to_string(),
                res.n_failed.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Writes one row per (scenario cell, replication, penalty).
pub fn write_replications_csv<W: Write>(writer: W, results: &[(String, ScenarioResult)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "scenario", "dgp", "n", "t", "alpha", "rep", "seed", "penalty", "k_hat", "rmse", "misclassified",
        "sigma2_hat_k3", "failure",
    ])?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for (name, res) in results {
        for rec in &res.per_rep {
            for (j, kind) in res.penalties.iter().enumerate() {
                wtr.write_record([
                    name.clone(),
                    res.spec.dgp.name().to_string(),
                    res.spec.n.to_string(),
                    res.spec.t.to_string(),
                    fmt_f64(res.spec.alpha),
                    rec.rep.to_string(),
                    rec.seed.to_string(),
                    kind.to_string(),
                    rec.k_hat[j].map(|k| k.to_string()).unwrap_or_default(),
                    opt(rec.rmse),
                    rec.misclassified.map(|m| m.to_string()).unwrap_or_default(),
                    opt(rec.sigma2_hat_true_k),
                    rec.failure.clone().unwrap_or_default(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}
