//! String-similarity and experiment metrics: Levenshtein distance, relative
//! Levenshtein distance (RLD), Pareto fronts over (success rate, mean RLD),
//! and empirical CDFs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("rld: original string is empty")]
    EmptyOriginal,
}

/// One attack method's operating point: higher success rate is better,
/// lower mean RLD is better.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodPoint {
    pub method_id: String,
    pub success_rate: f64,
    pub mean_rld: f64,
    /// (rate std, rld std) across replicate classifiers, when available.
    pub uncertainty: Option<(f64, f64)>,
}

/// Minimal insert/delete/substitute edit count between byte strings,
/// two-row dynamic programming, unit costs.
pub fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance divided by the original string's length.
pub fn rld(original: &[u8], adversarial: &[u8]) -> Result<f64, MetricsError> {
    if original.is_empty() {
        return Err(MetricsError::EmptyOriginal);
    }
    Ok(levenshtein(original, adversarial) as f64 / original.len() as f64)
}

/// Bag-level RLD: instances pair by position (decode preserves bag order).
/// An empty adversarial instance scores as full deletion (distance = original
/// length); the flag in the result reports whether any instance vanished.
pub fn bag_rld(originals: &[Vec<u8>], adversarials: &[Vec<u8>]) -> Result<BagRld, MetricsError> {
    assert_eq!(
        originals.len(),
        adversarials.len(),
        "bag_rld: {} originals vs {} adversarials",
        originals.len(),
        adversarials.len()
    );
    let mut sum = 0.0;
    let mut vanished = false;
    for (o, a) in originals.iter().zip(adversarials) {
        if a.is_empty() {
            vanished = true;
        }
        sum += rld(o, a)?;
    }
    Ok(BagRld { mean: sum / originals.len() as f64, vanished_instance: vanished })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BagRld {
    pub mean: f64,
    /// True when some adversarial instance decoded to the empty string.
    pub vanished_instance: bool,
}

/// `p` dominates `q` when p is at least as good on both axes and strictly
/// better on at least one.
fn dominates(p: &MethodPoint, q: &MethodPoint) -> bool {
    p.success_rate >= q.success_rate
        && p.mean_rld <= q.mean_rld
        && (p.success_rate > q.success_rate || p.mean_rld < q.mean_rld)
}

/// Non-dominated subset under (maximize success rate, minimize mean RLD),
/// preserving input order. Identical points are all kept.
pub fn pareto_front(points: &[MethodPoint]) -> Vec<MethodPoint> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(q, p)))
        .cloned()
        .collect()
}

/// Empirical CDF as step points: sorted unique x with F(x) = fraction of
/// values <= x. Final F is exactly 1.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    assert!(!values.is_empty(), "ecdf: empty input");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("ecdf: NaN value"));
    let n = sorted.len();
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut seen = 0usize;
    let mut i = 0usize;
    while i < n {
        let x = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == x {
            j += 1;
        }
        seen += j - i;
        out.push((x, seen as f64 / n as f64));
        i = j;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(rate: f64, rld: f64) -> MethodPoint {
        MethodPoint { method_id: format!("p({rate},{rld})"), success_rate: rate, mean_rld: rld, uncertainty: None }
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein(b"", b"abc"), 3);
        assert_eq!(levenshtein(b"kitten", b"kitten"), 0);
        assert_eq!(levenshtein(b"kitten", b"sitting"), 3);
        assert_eq!(levenshtein(b"abc", b""), 3);
    }

    #[test]
    fn levenshtein_is_a_metric_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let mut make = |max_len: usize| -> Vec<u8> {
                let len = rng.random_range(0..=max_len);
                (0..len).map(|_| rng.random_range(b'a'..=b'd')).collect()
            };
            let (a, b, c) = (make(10), make(10), make(10));
            let dab = levenshtein(&a, &b);
            let dba = levenshtein(&b, &a);
            assert_eq!(dab, dba);
            assert_eq!(levenshtein(&a, &a), 0);
            if a != b {
                assert!(dab > 0);
            }
            let dac = levenshtein(&a, &c);
            let dcb = levenshtein(&c, &b);
            assert!(dab <= dac + dcb, "triangle violated: {dab} > {dac} + {dcb}");
        }
    }

    #[test]
    fn rld_values() {
        assert_eq!(rld(b"abcdef", b"abcxyz").unwrap(), 0.5);
        assert_eq!(rld(b"same", b"same").unwrap(), 0.0);
        assert_eq!(rld(b"abcd", b"wxyz").unwrap(), 1.0);
        assert!(rld(b"", b"x").is_err());
    }

    #[test]
    fn bag_rld_scores_vanished_instance_as_full_deletion() {
        let orig = vec![b"abcd".to_vec(), b"wx".to_vec()];
        let adv = vec![b"abcd".to_vec(), b"".to_vec()];
        let r = bag_rld(&orig, &adv).unwrap();
        assert!(r.vanished_instance);
        assert_eq!(r.mean, 0.5); // (0 + 2/2) / 2
    }

    #[test]
    fn pareto_front_spec_example() {
        let pts = vec![pt(0.9, 0.3), pt(0.8, 0.1), pt(0.85, 0.4)];
        let front = pareto_front(&pts);
        let ids: Vec<_> = front.iter().map(|p| (p.success_rate, p.mean_rld)).collect();
        assert_eq!(ids, vec![(0.9, 0.3), (0.8, 0.1)]);
    }

    #[test]
    fn pareto_front_keeps_identical_points_and_single_point() {
        let one = pareto_front(&[pt(0.5, 0.5)]);
        assert_eq!(one.len(), 1);
        let same = pareto_front(&[pt(0.5, 0.5), pt(0.5, 0.5), pt(0.5, 0.5)]);
        assert_eq!(same.len(), 3);
    }

    #[test]
    fn ecdf_counting() {
        assert_eq!(ecdf(&[2.0]), vec![(2.0, 1.0)]);
        let e = ecdf(&[1.0, 1.0, 3.0]);
        assert_eq!(e, vec![(1.0, 2.0 / 3.0), (3.0, 1.0)]);
    }

    #[test]
    fn ecdf_is_monotone_and_ends_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..1000).map(|_| rng.random_range(-5.0..5.0)).collect();
        let e = ecdf(&vals);
        for w in e.windows(2) {
            assert!(w[0].0 < w[1].0);
            assert!(w[0].1 <= w[1].1);
        }
        assert_eq!(e.last().unwrap().1, 1.0);
        assert!(e.iter().all(|&(_, f)| (0.0..=1.0).contains(&f)));
    }
}
