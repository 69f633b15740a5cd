use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::panel::{Grouping, PanelData};

use super::assign::assign_with;
use super::ols::group_ols_with;
use super::stats::ssr;
use super::{FitConfig, FitResult, GroupParams, UnitStats};

const MAX_REDRAWS: usize = 10_000;

/// Uniform random memberships for start `start`, redrawn until every group
/// is present. The stream depends only on `(seed, start)`.
pub fn initial_grouping(n: usize, k: usize, seed: u64, start: u64) -> Result<Grouping> {
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("K={k} must lie in 1..=N (N={n})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start);
    let mut labels = vec![0; n];
    let mut seen = vec![false; k];
    for _ in 0..MAX_REDRAWS {
        seen.iter_mut().for_each(|s| *s = false);
        for l in labels.iter_mut() {
            *l = rng.random_range(0..k);
            seen[*l] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok(Grouping::from_raw(labels, k));
        }
    }
    // K close to N: seed each group with one unit at random positions.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for (g, &i) in order.iter().take(k).enumerate() {
        labels[i] = g;
    }
    Ok(Grouping::from_raw(labels, k))
}

/// Runs the alternating procedure from one initial grouping.
pub fn kmeans_once(panel: &PanelData, config: &FitConfig, init: &Grouping) -> Result<FitResult> {
    config.validate()?;
    if init.n_units() != panel.n_units() || init.k() != config.k {
        return Err(Error::Dimension(format!(
            "initial grouping has N={}, K={}; expected N={}, K={}",
            init.n_units(),
            init.k(),
            panel.n_units(),
            config.k
        )));
    }
    let stats = UnitStats::new(panel);
    kmeans_run(panel, &stats, config, init.clone(), 0)
}

pub(crate) fn kmeans_run(
    panel: &PanelData,
    stats: &UnitStats,
    config: &FitConfig,
    init: Grouping,
    start_index: usize,
) -> Result<FitResult> {
    let k_count = config.k;
    let slope_stats = (!config.gfe).then_some(stats);
    let mut labels = init.labels().to_vec();
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut params: Option<GroupParams> = None;
    let mut iterations = 0;

    for iter in 1..=config.max_iter {
        iterations = iter;
        // params from the previous iteration are still current for `labels`
        // when repair is needed
        if let Some(prev) = params.as_ref() {
            repair_empty(panel, slope_stats, prev, &mut labels)?;
        }
        let grouping = Grouping::from_raw(labels.clone(), k_count);
        let fitted = group_ols_with(panel, stats, &grouping, config.gfe)
            .map_err(|e| Error::DegenerateStart(e.to_string()))?;
        let pass = assign_with(panel, slope_stats, &fitted, Some(&labels));
        let (new_labels, step_ssr) = (pass.labels, pass.current_ssr);
        debug_assert!(pass.costs.iter().sum::<f64>() <= step_ssr * (1.0 + 1e-9) + 1e-9);

        let stalled = trace
            .last()
            .is_some_and(|&prev| prev - step_ssr <= config.ssr_tol * prev.max(f64::MIN_POSITIVE));
        trace.push(step_ssr);
        params = Some(fitted);
        if new_labels == labels || stalled {
            converged = true;
            break;
        }
        if iter == config.max_iter {
            break;
        }
        labels = new_labels;
    }

    let params = params.expect("at least one iteration runs");
    let grouping = Grouping::from_raw(labels, k_count);
    if !grouping.all_nonempty() {
        return Err(Error::DegenerateStart("empty group at termination".into()));
    }
    let total = ssr(panel, &grouping, &params);
    Ok(FitResult {
        sigma2_hat: total / panel.n_obs() as f64,
        ssr: total,
        params,
        grouping,
        converged,
        iterations_used: iterations,
        start_index_of_best: start_index,
        ssr_trace: trace,
        degenerate_starts: 0,
    })
}

/// Refills empty groups: each takes the worst-fitting unit of the currently
/// largest group (ties: lowest label, then lowest unit index).
fn repair_empty(
    panel: &PanelData,
    stats: Option<&UnitStats>,
    params: &GroupParams,
    labels: &mut [usize],
) -> Result<()> {
    let k_count = params.k();
    let mut sizes = vec![0usize; k_count];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    while let Some(empty) = sizes.iter().position(|&s| s == 0) {
        let (largest, &size) = sizes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("K >= 1");
        if size < 2 {
            return Err(Error::DegenerateStart("cannot refill an empty group".into()));
        }
        let mut worst = (usize::MAX, f64::NEG_INFINITY);
        for (i, &l) in labels.iter().enumerate() {
            if l == largest {
                let c = super::assign::unit_cost(panel, stats, params, i, l);
                if c > worst.1 {
                    worst = (i, c);
                }
            }
        }
        labels[worst.0] = empty;
        sizes[largest] -= 1;
        sizes[empty] += 1;
    }
    Ok(())
}

/// Best of `config.n_starts` runs from independent uniform initial groupings.
///
/// Start `s` draws its initial grouping from the stream `(config.seed, s)`;
/// the winner has the smallest SSR, ties going to the lowest start index,
/// so the result does not depend on how starts are scheduled.
pub fn fit(panel: &PanelData, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    if config.k > panel.n_units() {
        return Err(Error::InvalidConfig(format!(
            "K={} exceeds the number of units N={}",
            config.k,
            panel.n_units()
        )));
    }
    let stats = UnitStats::new(panel);
    let run = |s: usize| -> Option<FitResult> {
        let init = initial_grouping(panel.n_units(), config.k, config.seed, s as u64).ok()?;
        kmeans_run(panel, &stats, config, init, s).ok()
    };
    let better = |a: Option<FitResult>, b: Option<FitResult>| match (a, b) {
        (Some(a), Some(b)) => {
            let a_wins = match a.ssr.total_cmp(&b.ssr) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => a.start_index_of_best < b.start_index_of_best,
            };
            Some(if a_wins { a } else { b })
        }
        (a, None) => a,
        (None, b) => b,
    };

    let (best, ok) = run_starts(config.n_starts, run, better);
    let mut best = best.ok_or(Error::EstimationFailed(config.n_starts))?;
    best.degenerate_starts = config.n_starts - ok;
    Ok(best)
}

#[cfg(feature = "parallel")]
fn run_starts<R, B>(n: usize, run: R, better: B) -> (Option<FitResult>, usize)
where
    R: Fn(usize) -> Option<FitResult> + Sync,
    B: Fn(Option<FitResult>, Option<FitResult>) -> Option<FitResult> + Sync,
{
    use rayon::prelude::*;
    (0..n)
        .into_par_iter()
        .map(|s| {
            let r = run(s);
            let ok = usize::from(r.is_some());
            (r, ok)
        })
        .reduce(|| (None, 0), |a, b| (better(a.0, b.0), a.1 + b.1))
}

#[cfg(not(feature = "parallel"))]
fn run_starts<R, B>(n: usize, run: R, better: B) -> (Option<FitResult>, usize)
where
    R: Fn(usize) -> Option<FitResult>,
    B: Fn(Option<FitResult>, Option<FitResult>) -> Option<FitResult>,
{
    (0..n).fold((None, 0), |(best, ok), s| {
        let r = run(s);
        let ok = ok + usize::from(r.is_some());
        (better(best, r), ok)
    })
}
