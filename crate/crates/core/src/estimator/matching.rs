use crate::error::{Error, Result};
use crate::panel::Grouping;

/// Largest K for which all K! relabelings are enumerated.
pub const MAX_EXACT_K: usize = 8;

/// Relabeling `perm[estimated_label] = truth_label` that minimises the number
/// of units whose relabeled estimate differs from the truth.
///
/// Permutations are enumerated in lexicographic order and the first optimum
/// is kept, so the identity wins whenever it is optimal.
pub fn match_labels(estimated: &Grouping, truth: &Grouping) -> Result<Vec<usize>> {
    misclassified(estimated, truth).map(|(perm, _)| perm)
}

/// Optimal relabeling together with the resulting misclassification count.
pub fn misclassified(estimated: &Grouping, truth: &Grouping) -> Result<(Vec<usize>, usize)> {
    let k = estimated.k();
    if k != truth.k() || estimated.n_units() != truth.n_units() {
        return Err(Error::Dimension(format!(
            "cannot match K={} N={} against K={} N={}",
            k,
            estimated.n_units(),
            truth.k(),
            truth.n_units()
        )));
    }
    if k > MAX_EXACT_K {
        return Err(Error::InvalidUse(format!(
            "exact label matching supports K <= {MAX_EXACT_K}, got {k}"
        )));
    }
    // agreement[e][g]: units with estimated label e and true label g
    let mut agreement = vec![vec![0usize; k]; k];
    for (&e, &g) in estimated.labels().iter().zip(truth.labels()) {
        agreement[e][g] += 1;
    }

    let mut perm: Vec<usize> = (0..k).collect();
    let mut best_perm = perm.clone();
    let mut best = score(&agreement, &perm);
    while next_permutation(&mut perm) {
        let s = score(&agreement, &perm);
        if s > best {
            best = s;
            best_perm.copy_from_slice(&perm);
        }
    }
    Ok((best_perm, estimated.n_units() - best))
}

fn score(agreement: &[Vec<usize>], perm: &[usize]) -> usize {
    perm.iter().enumerate().map(|(e, &g)| agreement[e][g]).sum()
}

fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_when_equal() {
        let g = Grouping::new(vec![0, 1, 2, 1, 0], 3).unwrap();
        assert_eq!(misclassified(&g, &g).unwrap(), (vec![0, 1, 2], 0));
    }

    #[test]
    fn swapped_labels_give_transposition() {
        let truth = Grouping::new(vec![0, 1, 2, 1, 0], 3).unwrap();
        let est = Grouping::new(vec![1, 0, 2, 0, 1], 3).unwrap();
        assert_eq!(misclassified(&est, &truth).unwrap(), (vec![1, 0, 2], 0));
    }

    #[test]
    fn enumerates_all_permutations() {
        let mut v = vec![0, 1, 2, 3];
        let mut count = 1;
        while next_permutation(&mut v) {
            count += 1;
        }
        assert_eq!(count, 24);
    }

    #[test]
    fn random_k3_matches_exhaustive_search() {
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(3..15);
            let truth = Grouping::new((0..n).map(|_| rng.random_range(0..3)).collect(), 3).unwrap();
            let est = Grouping::new((0..n).map(|_| rng.random_range(0..3)).collect(), 3).unwrap();
            let brute = PERMS
                .iter()
                .map(|perm| {
                    (0..n)
                        .filter(|&i| perm[est.label(i)] != truth.label(i))
                        .count()
                })
                .min()
                .unwrap();
            let (perm, miss) = misclassified(&est, &truth).unwrap();
            assert_eq!(miss, brute);
            let recount = (0..n).filter(|&i| perm[est.label(i)] != truth.label(i)).count();
            assert_eq!(recount, miss);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = Grouping::new(vec![0, 1], 2).unwrap();
        let b = Grouping::new(vec![0, 1, 2], 3).unwrap();
        let c = Grouping::new(vec![0, 1, 1], 2).unwrap();
        assert!(matches!(match_labels(&a, &b), Err(Error::Dimension(_))));
        assert!(matches!(match_labels(&a, &c), Err(Error::Dimension(_))));
    }
}
