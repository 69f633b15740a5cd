//! Browser demo: simulate a grouped panel, fit it, and compare the
//! information criteria. Every export returns a JSON string.

use grouppanel::estimator::{group_ols, misclassified};
use grouppanel::selection::{fit_range, ic_table, penalty_value, PenaltyKind, SelectionOptions};
use grouppanel::simulate::{generate, Dgp, DgpSpec};
use grouppanel::{FitConfig, Grouping, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const PENALTIES: [PenaltyKind; 4] = [PenaltyKind::Bn, PenaltyKind::Bic, PenaltyKind::Mic1, PenaltyKind::Mic2];

#[derive(Debug, Serialize)]
pub struct UnitPoint {
    /// Unit-by-unit OLS slopes, the cloud the groups are cut from.
    pub theta: [f64; 2],
    pub truth: usize,
    pub estimate: usize,
}

#[derive(Debug, Serialize)]
pub struct FitDemo {
    pub k: usize,
    pub sizes: Vec<usize>,
    pub true_sizes: Vec<usize>,
    /// Estimated slopes per group, labels matched to the truth when K = 3.
    pub thetas: Vec<[f64; 2]>,
    pub true_thetas: [[f64; 2]; 3],
    pub sigma2_hat: f64,
    pub misclassified: Option<usize>,
    pub units: Vec<UnitPoint>,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub penalty: String,
    /// `null` where the fit at that K failed.
    pub ic: Vec<Option<f64>>,
    pub selected_k: usize,
}

#[derive(Debug, Serialize)]
pub struct IcDemo {
    pub ks: Vec<usize>,
    pub sigma2_hat: Vec<Option<f64>>,
    pub curves: Vec<Curve>,
}

#[derive(Debug, Serialize)]
pub struct PenaltyDemo {
    pub t: usize,
    pub ns: Vec<usize>,
    /// `(name, h(N, T))` for each penalty, aligned with `ns`.
    pub curves: Vec<(String, Vec<f64>)>,
}

fn spec(dgp: &str, n: usize, t: usize, alpha: f64) -> Result<DgpSpec> {
    Ok(DgpSpec::new(dgp.parse::<Dgp>()?, n, t, alpha))
}

/// Simulates one panel and fits it with `k` groups.
pub fn fit_demo(dgp: &str, n: usize, t: usize, alpha: f64, k: usize, seed: u64, starts: usize) -> Result<FitDemo> {
    let spec = spec(dgp, n, t, alpha)?;
    let (panel, truth) = generate(&spec, seed)?;
    let cfg = FitConfig::new(k).with_gfe(spec.dgp.has_gfe()).with_starts(starts).with_seed(seed);
    let mut est = grouppanel::fit(&panel, &cfg)?.ordered_by_size()?;
    let mut miss = None;
    if k == truth.k() {
        let (perm, m) = misclassified(&est.grouping, &truth)?;
        est.grouping = est.grouping.relabel(&perm)?;
        est.params = est.params.relabel(&perm)?;
        miss = Some(m);
    }
    let singletons = Grouping::new((0..n).collect(), n)?;
    let per_unit = group_ols(&panel, &singletons, false)?;
    let units = (0..n)
        .map(|i| UnitPoint {
            theta: [per_unit.theta(i)[0], per_unit.theta(i)[1]],
            truth: truth.label(i),
            estimate: est.grouping.label(i),
        })
        .collect();
    Ok(FitDemo {
        k,
        sizes: est.grouping.sizes(),
        true_sizes: truth.sizes(),
        thetas: (0..k).map(|g| [est.params.theta(g)[0], est.params.theta(g)[1]]).collect(),
        true_thetas: spec.thetas(),
        sigma2_hat: est.sigma2_hat,
        misclassified: miss,
        units,
    })
}

/// Criterion values over `1..=k_max` for every penalty on one simulated panel.
pub fn ic_demo(dgp: &str, n: usize, t: usize, alpha: f64, k_max: usize, seed: u64, starts: usize) -> Result<IcDemo> {
    let spec = spec(dgp, n, t, alpha)?;
    let (panel, _) = generate(&spec, seed)?;
    let cfg = FitConfig::new(1).with_gfe(spec.dgp.has_gfe()).with_starts(starts).with_seed(seed);
    let fits = fit_range(&panel, 1, k_max, &cfg)?;
    let ks: Vec<usize> = (1..=k_max).collect();
    let mut curves = Vec::new();
    for kind in PENALTIES {
        let table = ic_table(&fits, kind, SelectionOptions::default())?;
        curves.push(Curve {
            penalty: kind.name(),
            ic: table.rows.iter().map(|r| r.ic.is_finite().then_some(r.ic)).collect(),
            selected_k: table.selected_k,
        });
    }
    Ok(IcDemo {
        sigma2_hat: ks.iter().map(|&k| fits.get(k).map(|f| f.sigma2_hat)).collect(),
        ks,
        curves,
    })
}

/// Penalty sequences against N at fixed T.
pub fn penalty_demo(t: usize, n_min: usize, n_max: usize) -> Result<PenaltyDemo> {
    let ns: Vec<usize> = (n_min.max(2)..=n_max).collect();
    let mut curves = Vec::new();
    for kind in PENALTIES {
        let h = ns.iter().map(|&n| penalty_value(kind, n, t)).collect::<Result<Vec<f64>>>()?;
        curves.push((kind.name(), h));
    }
    Ok(PenaltyDemo { t, ns, curves })
}

fn to_js<T: Serialize>(value: Result<T>) -> std::result::Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = fitDemo)]
pub fn fit_demo_js(dgp: &str, n: usize, t: usize, alpha: f64, k: usize, seed: u32, starts: usize) -> std::result::Result<String, JsError> {
    to_js(fit_demo(dgp, n, t, alpha, k, seed.into(), starts))
}

#[wasm_bindgen(js_name = icDemo)]
pub fn ic_demo_js(dgp: &str, n: usize, t: usize, alpha: f64, k_max: usize, seed: u32, starts: usize) -> std::result::Result<String, JsError> {
    to_js(ic_demo(dgp, n, t, alpha, k_max, seed.into(), starts))
}

#[wasm_bindgen(js_name = penaltyDemo)]
pub fn penalty_demo_js(t: usize, n_min: usize, n_max: usize) -> std::result::Result<String, JsError> {
    to_js(penalty_demo(t, n_min, n_max))
}
