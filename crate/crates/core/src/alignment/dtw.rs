use crate::error::{Error, Result};

/// A monotone alignment from (0, 0) to (n-1, m-1) and its summed cost.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentPath {
    pub path: Vec<(usize, usize)>,
    pub cost: f64,
}

impl AlignmentPath {
    pub fn is_diagonal(&self) -> bool {
        self.path.iter().all(|&(i, j)| i == j)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Whether cell (i, j) lies inside a Sakoe-Chiba band of half-width `w`,
/// measured along the rescaled diagonal so unequal lengths still connect.
fn in_band(i: usize, j: usize, n: usize, m: usize, band: Option<usize>) -> bool {
    match band {
        None => true,
        Some(w) => {
            let centre = if n > 1 {
                i as f64 * (m - 1) as f64 / (n - 1) as f64
            } else {
                0.0
            };
            (j as f64 - centre).abs() <= w as f64 + 1e-9
        }
    }
}

/// Dynamic time warping under Euclidean distance.
///
/// Steps are (1,1), (1,0) and (0,1). When predecessors tie, the diagonal wins,
/// then the step that advances only the first sequence.
pub fn dtw(a: &[Vec<f64>], b: &[Vec<f64>], band: Option<usize>) -> Result<AlignmentPath> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(Error::arg("dtw needs non-empty sequences"));
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|x| x.len() != dim) {
        return Err(Error::arg("dtw sequences must share one dimension"));
    }
    let idx = |i: usize, j: usize| i * m + j;
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            if !in_band(i, j, n, m, band) {
                continue;
            }
            let d = euclidean(&a[i], &b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 {
                    acc[idx(i - 1, j - 1)]
                } else {
                    f64::INFINITY
                };
                let up = if i > 0 {
                    acc[idx(i - 1, j)]
                } else {
                    f64::INFINITY
                };
                let left = if j > 0 {
                    acc[idx(i, j - 1)]
                } else {
                    f64::INFINITY
                };
                diag.min(up).min(left)
            };
            acc[idx(i, j)] = d + best;
        }
    }
    let cost = acc[idx(n - 1, m - 1)];
    if !cost.is_finite() {
        return Err(Error::arg("band excludes every path between the endpoints"));
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let diag = if i > 0 && j > 0 {
            acc[idx(i - 1, j - 1)]
        } else {
            f64::INFINITY
        };
        let up = if i > 0 {
            acc[idx(i - 1, j)]
        } else {
            f64::INFINITY
        };
        let left = if j > 0 {
            acc[idx(i, j - 1)]
        } else {
            f64::INFINITY
        };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(AlignmentPath { path, cost })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Minimum over every monotone path, by exhaustive recursion.
    pub(crate) fn brute_force(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        fn go(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize) -> f64 {
            let here = euclidean(&a[i], &b[j]);
            if i + 1 == a.len() && j + 1 == b.len() {
                return here;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(go(a, b, i + 1, j + 1));
            }
            if i + 1 < a.len() {
                best = best.min(go(a, b, i + 1, j));
            }
            if j + 1 < b.len() {
                best = best.min(go(a, b, i, j + 1));
            }
            here + best
        }
        go(a, b, 0, 0)
    }

    pub(crate) fn random_seq(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    fn path_cost(a: &[Vec<f64>], b: &[Vec<f64>], p: &[(usize, usize)]) -> f64 {
        p.iter().map(|&(i, j)| euclidean(&a[i], &b[j])).sum()
    }

    fn assert_valid(p: &AlignmentPath, n: usize, m: usize) {
        assert_eq!(p.path[0], (0, 0));
        assert_eq!(*p.path.last().unwrap(), (n - 1, m - 1));
        for w in p.path.windows(2) {
            let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            assert!(
                matches!((di, dj), (1, 1) | (1, 0) | (0, 1)),
                "bad step {w:?}"
            );
        }
    }

    #[test]
    fn identical_sequences_align_on_the_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_seq(&mut rng, 12, 3);
        let p = dtw(&a, &a, None).unwrap();
        assert!(p.is_diagonal());
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let (n, m) = (rng.random_range(1..7), rng.random_range(1..7));
            let a = random_seq(&mut rng, n, 2);
            let b = random_seq(&mut rng, m, 2);
            let p = dtw(&a, &b, None).unwrap();
            assert!((p.cost - brute_force(&a, &b)).abs() < 1e-9);
            assert!((p.cost - path_cost(&a, &b, &p.path)).abs() < 1e-9);
            assert_valid(&p, n, m);
        }
    }

    #[test]
    fn constant_sequences_prefer_the_diagonal_then_first_axis() {
        let a = vec![vec![0.0]; 4];
        let b = vec![vec![0.0]; 3];
        let p = dtw(&a, &b, None).unwrap();
        assert_eq!(p.path, vec![(0, 0), (1, 0), (2, 1), (3, 2)]);
    }

    #[test]
    fn shifted_copy_is_recovered() {
        let a: Vec<Vec<f64>> = (0..10).map(|t| vec![(t as f64 * 0.7).sin()]).collect();
        let mut b = vec![a[0].clone(), a[0].clone()];
        b.extend(a.iter().cloned());
        let p = dtw(&a, &b, None).unwrap();
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn half_speed_copy_warps_exactly() {
        let a: Vec<Vec<f64>> = (0..8)
            .map(|t| vec![t as f64, (t * t) as f64 * 0.1])
            .collect();
        let b: Vec<Vec<f64>> = a.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
        let p = dtw(&a, &b, None).unwrap();
        assert_eq!(p.cost, 0.0);
        let visited: std::collections::BTreeSet<usize> = p.path.iter().map(|&(_, j)| j).collect();
        assert_eq!(visited.len(), b.len());
    }

    #[test]
    fn band_constrains_the_path_and_never_lowers_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_seq(&mut rng, 15, 2);
        let b = random_seq(&mut rng, 15, 2);
        let free = dtw(&a, &b, None).unwrap();
        let banded = dtw(&a, &b, Some(1)).unwrap();
        assert!(banded.cost >= free.cost - 1e-12);
        assert!(banded.path.iter().all(|&(i, j)| i.abs_diff(j) <= 1));
        let tight = dtw(&a, &b, Some(0)).unwrap();
        assert!(tight.is_diagonal());
    }

    #[test]
    fn rejects_empty_and_ragged_input() {
        assert!(dtw(&[], &[vec![1.0]], None).is_err());
        assert!(dtw(&[vec![1.0]], &[vec![1.0, 2.0]], None).is_err());
    }

    fn seqs() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        (1usize..9, 1usize..9, 1usize..4).prop_flat_map(|(n, m, d)| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n),
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), m),
            )
        })
    }

    proptest! {
        #[test]
        fn path_is_monotone_and_spans_both_sequences((a, b) in seqs()) {
            let p = dtw(&a, &b, None).unwrap();
            assert_valid(&p, a.len(), b.len());
            prop_assert!(p.path.len() >= a.len().max(b.len()));
            prop_assert!(p.path.len() < a.len() + b.len());
        }

        #[test]
        fn cost_is_symmetric((a, b) in seqs()) {
            let ab = dtw(&a, &b, None).unwrap().cost;
            let ba = dtw(&b, &a, None).unwrap().cost;
            prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
        }

        #[test]
        fn cost_is_at_most_any_staircase((a, b) in seqs()) {
            let p = dtw(&a, &b, None).unwrap();
            let mut stair: Vec<(usize, usize)> = (0..a.len()).map(|i| (i, 0)).collect();
            stair.extend((1..b.len()).map(|j| (a.len() - 1, j)));
            prop_assert!(p.cost <= path_cost(&a, &b, &stair) + 1e-9);
            let first = euclidean(&a[0], &b[0]);
            let last = euclidean(a.last().unwrap(), b.last().unwrap());
            prop_assert!(p.cost >= first.max(last) - 1e-12);
        }
    }
}
