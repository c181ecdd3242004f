//! Subsampling plans and piecewise-polynomial reconstruction of discarded
//! samples.
//!
//! For a retention fraction `s` a plan holds `round(1/s)` phase-shifted sets
//! of retained indices. Each discarded index is rebuilt from its nearest
//! retained neighbours by local polynomial interpolation of every degree in
//! the method family, and the smallest resulting error is kept.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::Record;

/// Errors below this are treated as exact recovery.
pub const EPS_FLOOR: f64 = 1e-12;

/// Highest interpolation degree the reconstruction engine supports.
pub const MAX_SUPPORTED_DEGREE: usize = 8;

/// Ordered retention fractions `S_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionGrid {
    fractions: Vec<f64>,
}

impl RetentionGrid {
    pub const DEFAULT: [f64; 6] = [0.50, 0.33, 0.29, 0.25, 0.225, 0.20];

    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.len() < 2 {
            return Err(Error::BadParams(
                "retention grid needs at least 2 fractions".into(),
            ));
        }
        if let Some(s) = fractions.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
            return Err(Error::BadParams(format!("retention fraction {s} not in (0, 1)")));
        }
        if fractions.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::BadParams(
                "retention fractions must be strictly decreasing".into(),
            ));
        }
        Ok(RetentionGrid { fractions })
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    /// Copy with entry `k` removed.
    pub fn without(&self, k: usize) -> Result<Self> {
        let mut f = self.fractions.clone();
        f.remove(k);
        RetentionGrid::new(f)
    }
}

impl Default for RetentionGrid {
    fn default() -> Self {
        RetentionGrid {
            fractions: Self::DEFAULT.to_vec(),
        }
    }
}

/// How reconstruction errors at discarded points are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    #[default]
    Sup,
    MeanAbs,
}

impl ErrorNorm {
    pub fn name(self) -> &'static str {
        match self {
            ErrorNorm::Sup => "sup",
            ErrorNorm::MeanAbs => "mean-abs",
        }
    }
}

impl std::str::FromStr for ErrorNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sup" => Ok(ErrorNorm::Sup),
            "mean-abs" | "mean_abs" => Ok(ErrorNorm::MeanAbs),
            other => Err(Error::BadParams(format!("unknown error norm {other:?}"))),
        }
    }
}

/// Piecewise polynomials of degree `0..=max_degree`.
///
/// A degree-`p` reconstruction at a discarded index interpolates the `p + 1`
/// retained points nearest to it. `window` bounds the neighbourhood size and
/// must hold at least `max_degree + 1` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodFamily {
    pub max_degree: usize,
    pub window: usize,
    pub norm: ErrorNorm,
}

impl MethodFamily {
    pub fn new(max_degree: usize, norm: ErrorNorm) -> Result<Self> {
        Self::with_window(max_degree, max_degree + 1, norm)
    }

    pub fn with_window(max_degree: usize, window: usize, norm: ErrorNorm) -> Result<Self> {
        if max_degree > MAX_SUPPORTED_DEGREE {
            return Err(Error::BadParams(format!(
                "max degree {max_degree} exceeds {MAX_SUPPORTED_DEGREE}"
            )));
        }
        if window < max_degree + 1 {
            return Err(Error::BadParams(format!(
                "window {window} smaller than max_degree + 1 = {}",
                max_degree + 1
            )));
        }
        Ok(MethodFamily {
            max_degree,
            window,
            norm,
        })
    }
}

impl Default for MethodFamily {
    fn default() -> Self {
        MethodFamily {
            max_degree: 4,
            window: 5,
            norm: ErrorNorm::Sup,
        }
    }
}

/// Retained-index sets for one retention fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsamplePlan {
    pub s: f64,
    pub n: usize,
    pub placements: Vec<Vec<usize>>,
}

impl SubsamplePlan {
    /// Indices not in placement `p`.
    pub fn discarded(&self, p: usize) -> Vec<usize> {
        complement(&self.placements[p], self.n)
    }
}

fn complement(kept: &[usize], n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n.saturating_sub(kept.len()));
    let mut it = kept.iter().peekable();
    for t in 0..n {
        if it.peek() == Some(&&t) {
            it.next();
        } else {
            out.push(t);
        }
    }
    out
}

/// Enumerates the phase-shifted placements for retention fraction `s`.
///
/// The base placement retains `round(j / s)` for `j = 0, 1, ...`; phase `p`
/// shifts it by `p`, for `p < round(1 / s)`. Indices past `n - 1` are
/// dropped. With integral `1 / s` this is plain striding.
pub fn build_plan(s: f64, n: usize) -> Result<SubsamplePlan> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::BadParams(format!("retention fraction {s} not in (0, 1)")));
    }
    let phases = ((1.0 / s).round() as usize).max(1);
    let base: Vec<usize> = (0..)
        .map(|j: usize| (j as f64 / s).round() as usize)
        .take_while(|&i| i < n)
        .collect();
    let placements: Vec<Vec<usize>> = (0..phases)
        .map(|p| base.iter().map(|i| i + p).filter(|&i| i < n).collect())
        .collect();
    if placements.iter().any(|pl: &Vec<usize>| pl.is_empty()) {
        return Err(Error::TooFewPoints { s, n, needed: 1 });
    }
    Ok(SubsamplePlan { s, n, placements })
}

fn check_placement(n: usize, kept: &[usize]) -> Result<()> {
    if kept.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("placement indices must be strictly increasing".into()));
    }
    if kept.last().is_some_and(|&i| i >= n) {
        return Err(Error::Invalid(format!("placement index out of range for length {n}")));
    }
    Ok(())
}

/// Walks every discarded index of `values` and calls
/// `visit(t, estimates, available)`, where `estimates[p]` is the degree-`p`
/// interpolant at `t` for `p < available`.
///
/// Nodes are taken nearest-first (ties to the lower index), so the node set
/// for degree `p` extends the one for `p - 1` and all degrees come out of one
/// incremental Newton pass. Abscissae are recentred on `t`.
fn sweep_discarded<F>(values: &[f64], kept: &[usize], max_degree: usize, mut visit: F)
where
    F: FnMut(usize, &[f64], usize),
{
    let want = max_degree + 1;
    let available = want.min(kept.len());
    let mut xs = [0.0_f64; MAX_SUPPORTED_DEGREE + 1];
    let mut diag = [0.0_f64; MAX_SUPPORTED_DEGREE + 1];
    let mut est = [0.0_f64; MAX_SUPPORTED_DEGREE + 1];
    // First retained position strictly greater than t.
    let mut right = 0usize;
    let mut next_kept = kept.iter().peekable();
    for t in 0..values.len() {
        if next_kept.peek() == Some(&&t) {
            next_kept.next();
            continue;
        }
        while right < kept.len() && kept[right] < t {
            right += 1;
        }
        let (mut l, mut r) = (right, right);
        let mut value = 0.0;
        let mut weight = 1.0;
        for m in 0..available {
            let take_left = match (l > 0, r < kept.len()) {
                (true, true) => t - kept[l - 1] <= kept[r] - t,
                (true, false) => true,
                (false, true) => false,
                (false, false) => unreachable!("fewer nodes than available"),
            };
            let idx = if take_left {
                l -= 1;
                kept[l]
            } else {
                r += 1;
                kept[r - 1]
            };
            let x = idx as f64 - t as f64;
            xs[m] = x;
            // diag[j] becomes f[x_{m-j}, ..., x_m].
            let mut prev = diag[0];
            diag[0] = values[idx];
            for j in 1..=m {
                let cur = diag[j];
                diag[j] = (diag[j - 1] - prev) / (x - xs[m - j]);
                prev = cur;
            }
            if m > 0 {
                weight *= -xs[m - 1];
            }
            value += diag[m] * weight;
            est[m] = value;
        }
        visit(t, &est[..available], available);
    }
}

/// Degree-`degree` reconstruction at every index not in `kept`, in index order.
pub fn reconstruct_channel(values: &[f64], kept: &[usize], degree: usize) -> Result<Vec<f64>> {
    check_placement(values.len(), kept)?;
    if degree > MAX_SUPPORTED_DEGREE || kept.len() < degree + 1 {
        return Err(Error::InsufficientSupport {
            retained: kept.len(),
            degree,
        });
    }
    let mut out = Vec::with_capacity(values.len() - kept.len());
    sweep_discarded(values, kept, degree, |_, est, _| out.push(est[degree]));
    Ok(out)
}

struct ErrorAccumulator {
    norm: ErrorNorm,
    per_degree: Vec<f64>,
    count: usize,
}

impl ErrorAccumulator {
    fn new(norm: ErrorNorm, degrees: usize) -> Self {
        ErrorAccumulator {
            norm,
            per_degree: vec![0.0; degrees],
            count: 0,
        }
    }

    fn add(&mut self, actual: f64, est: &[f64]) {
        for (acc, e) in self.per_degree.iter_mut().zip(est) {
            let err = (actual - e).abs();
            match self.norm {
                ErrorNorm::Sup => *acc = acc.max(err),
                ErrorNorm::MeanAbs => *acc += err,
            }
        }
        self.count += 1;
    }

    fn finish(mut self) -> Vec<f64> {
        if self.norm == ErrorNorm::MeanAbs && self.count > 0 {
            let c = self.count as f64;
            self.per_degree.iter_mut().for_each(|v| *v /= c);
        }
        self.per_degree
    }
}

/// Reconstruction error of each supported degree `0..=max_degree`.
pub fn errors_by_degree(
    values: &[f64],
    kept: &[usize],
    max_degree: usize,
    norm: ErrorNorm,
) -> Result<Vec<f64>> {
    check_placement(values.len(), kept)?;
    if kept.is_empty() {
        return Err(Error::InsufficientSupport {
            retained: 0,
            degree: 0,
        });
    }
    let max_degree = max_degree.min(MAX_SUPPORTED_DEGREE);
    let degrees = (max_degree + 1).min(kept.len());
    let mut acc = ErrorAccumulator::new(norm, degrees);
    sweep_discarded(values, kept, max_degree, |t, est, _| acc.add(values[t], est));
    Ok(acc.finish())
}

/// Sup-norm error of the degree-`degree` reconstruction over discarded indices.
pub fn channel_error(values: &[f64], kept: &[usize], degree: usize) -> Result<f64> {
    channel_error_in(values, kept, degree, ErrorNorm::Sup)
}

pub fn channel_error_in(
    values: &[f64],
    kept: &[usize],
    degree: usize,
    norm: ErrorNorm,
) -> Result<f64> {
    if degree > MAX_SUPPORTED_DEGREE || kept.len() < degree + 1 {
        return Err(Error::InsufficientSupport {
            retained: kept.len(),
            degree,
        });
    }
    let errs = errors_by_degree(values, kept, degree, norm)?;
    Ok(errs[degree])
}

/// Smallest reconstruction error over the family's degrees. Degrees without
/// enough retained points are skipped.
pub fn min_error_over_family(values: &[f64], kept: &[usize], family: &MethodFamily) -> Result<f64> {
    let errs = errors_by_degree(values, kept, family.max_degree, family.norm)?;
    Ok(errs.into_iter().fold(f64::INFINITY, f64::min))
}

/// `ε(S)` of a normalized record and its per-channel parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPoint {
    pub s: f64,
    pub eps: f64,
    pub per_channel_eps: Vec<f64>,
}

/// Mean over placements of the family-minimal error, per channel, summed over
/// channels. `record` must already be normalized.
pub fn spectrum_point(record: &Record, s: f64, family: &MethodFamily) -> Result<SpectrumPoint> {
    let plan = build_plan(s, record.len())?;
    let per_channel_eps = record
        .channels()
        .par_iter()
        .map(|ch| channel_eps(ch, &plan, family))
        .collect::<Result<Vec<f64>>>()?;
    let eps = per_channel_eps.iter().sum();
    Ok(SpectrumPoint {
        s,
        eps,
        per_channel_eps,
    })
}

fn channel_eps(values: &[f64], plan: &SubsamplePlan, family: &MethodFamily) -> Result<f64> {
    let mut total = 0.0;
    for kept in &plan.placements {
        total += min_error_over_family(values, kept, family)?;
    }
    Ok(total / plan.placements.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: pick the `degree + 1` nearest retained points by
    /// sorting on (distance, index) and evaluate the Lagrange form directly.
    fn lagrange_oracle(values: &[f64], kept: &[usize], degree: usize) -> Vec<f64> {
        let kept_set: std::collections::HashSet<usize> = kept.iter().copied().collect();
        (0..values.len())
            .filter(|t| !kept_set.contains(t))
            .map(|t| {
                let mut nodes: Vec<usize> = kept.to_vec();
                nodes.sort_by_key(|&i| (i.abs_diff(t), i));
                nodes.truncate(degree + 1);
                let mut sum = 0.0;
                for &i in &nodes {
                    let mut basis = 1.0;
                    for &j in &nodes {
                        if j != i {
                            basis *= (t as f64 - j as f64) / (i as f64 - j as f64);
                        }
                    }
                    sum += values[i] * basis;
                }
                sum
            })
            .collect()
    }

    #[test]
    fn plan_half() {
        let plan = build_plan(0.5, 8).unwrap();
        assert_eq!(plan.placements, vec![vec![0, 2, 4, 6], vec![1, 3, 5, 7]]);
    }

    #[test]
    fn plan_third() {
        let plan = build_plan(0.33, 9).unwrap();
        assert_eq!(
            plan.placements,
            vec![vec![0, 3, 6], vec![1, 4, 7], vec![2, 5, 8]]
        );
    }

    #[test]
    fn plan_fifth() {
        // Brute-force enumeration: each phase p keeps {p, p + 5}.
        let plan = build_plan(0.2, 10).unwrap();
        let expected: Vec<Vec<usize>> = (0..5).map(|p| vec![p, p + 5]).collect();
        assert_eq!(plan.placements, expected);
    }

    #[test]
    fn plan_phase_counts_on_default_grid() {
        let counts: Vec<usize> = RetentionGrid::default()
            .fractions()
            .iter()
            .map(|&s| build_plan(s, 7680).unwrap().placements.len())
            .collect();
        assert_eq!(counts, vec![2, 3, 3, 4, 4, 5]);
    }

    #[test]
    fn plan_rejects_bad_fraction() {
        assert!(build_plan(0.0, 10).is_err());
        assert!(build_plan(1.0, 10).is_err());
    }

    #[test]
    fn degree_zero_ties_go_left() {
        let values = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let rec = reconstruct_channel(&values, &[0, 2, 4], 0).unwrap();
        assert_eq!(rec, vec![0.0, 0.0, 0.0]);
        assert_eq!(rec, lagrange_oracle(&values, &[0, 2, 4], 0));
    }

    #[test]
    fn linear_and_constant_are_exact() {
        let ramp: Vec<f64> = (0..40).map(|k| 0.25 * k as f64).collect();
        let kept = [0, 3, 7, 10, 20, 33];
        let rec = reconstruct_channel(&ramp, &kept, 1).unwrap();
        let discarded = complement(&kept, 40);
        for (t, v) in discarded.iter().zip(&rec) {
            assert!((ramp[*t] - v).abs() < 1e-12);
        }
        let flat = vec![0.7; 20];
        assert_eq!(channel_error(&flat, &[0, 5, 10, 15], 0).unwrap(), 0.0);
    }

    #[test]
    fn channel_error_alternating() {
        assert_eq!(channel_error(&[0.0, 1.0, 0.0, 1.0], &[0, 2], 0).unwrap(), 1.0);
    }

    #[test]
    fn channel_error_sign_symmetric() {
        let v: Vec<f64> = (0..50).map(|k| ((k * 37 % 11) as f64).sin()).collect();
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let kept: Vec<usize> = (0..50).step_by(3).collect();
        for d in 0..=4 {
            assert_eq!(
                channel_error(&v, &kept, d).unwrap(),
                channel_error(&neg, &kept, d).unwrap()
            );
        }
    }

    #[test]
    fn insufficient_support() {
        assert!(matches!(
            reconstruct_channel(&[1.0, 2.0, 3.0], &[0, 2], 2),
            Err(Error::InsufficientSupport { retained: 2, degree: 2 })
        ));
        assert!(matches!(
            min_error_over_family(&[1.0, 2.0], &[], &MethodFamily::default()),
            Err(Error::InsufficientSupport { .. })
        ));
    }

    #[test]
    fn quadratic_recovered_by_family() {
        let q: Vec<f64> = (0..200)
            .map(|k| {
                let t = k as f64 / 199.0;
                0.3 - 0.8 * t + 0.5 * t * t
            })
            .collect();
        for &s in RetentionGrid::DEFAULT.iter() {
            let plan = build_plan(s, q.len()).unwrap();
            for kept in &plan.placements {
                let e = min_error_over_family(&q, kept, &MethodFamily::default()).unwrap();
                assert!(e < 1e-9, "s={s}: {e}");
            }
        }
    }

    #[test]
    fn white_noise_error_is_positive() {
        let noise = crate::signal::white_noise(500, 9, 0);
        let plan = build_plan(0.25, 500).unwrap();
        for kept in &plan.placements {
            let e = min_error_over_family(&noise, kept, &MethodFamily::default()).unwrap();
            let e0 = channel_error(&noise, kept, 0).unwrap();
            assert!(e > 0.0 && e <= e0);
        }
    }

    #[test]
    fn mean_abs_norm() {
        // Discarded 1 and 3, both with degree-0 error 1.
        let e = channel_error_in(&[0.0, 1.0, 0.0, 1.0], &[0, 2], 0, ErrorNorm::MeanAbs).unwrap();
        assert_eq!(e, 1.0);
        let e = channel_error_in(&[0.0, 1.0, 0.0, 0.0], &[0, 2], 0, ErrorNorm::MeanAbs).unwrap();
        assert_eq!(e, 0.5);
    }

    #[test]
    fn spectrum_point_sums_channels() {
        let ramp: Vec<f64> = (0..100).map(|k| k as f64 / 99.0).collect();
        let rec = Record::single(ramp, "r").unwrap();
        for &s in RetentionGrid::DEFAULT.iter() {
            assert!(spectrum_point(&rec, s, &MethodFamily::default()).unwrap().eps < EPS_FLOOR);
        }
        let x = crate::signal::gen_fbm_like(600, 0.5, 2, 1).unwrap();
        let (x, _) = crate::signal::normalize(&x).unwrap();
        let twice = x.stack(&x).unwrap();
        let one = spectrum_point(&x, 0.25, &MethodFamily::default()).unwrap();
        let two = spectrum_point(&twice, 0.25, &MethodFamily::default()).unwrap();
        assert_eq!(two.eps, 2.0 * one.eps);
    }

    #[test]
    fn grid_validation() {
        assert!(RetentionGrid::new(vec![0.5, 0.5]).is_err());
        assert!(RetentionGrid::new(vec![0.2, 0.5]).is_err());
        assert!(RetentionGrid::new(vec![1.0, 0.5]).is_err());
        assert!(RetentionGrid::new(vec![0.5]).is_err());
        assert!(MethodFamily::with_window(4, 4, ErrorNorm::Sup).is_err());
    }

    proptest! {
        #[test]
        fn plan_invariants(s in 0.05f64..0.95, n in 20usize..400) {
            let plan = build_plan(s, n).unwrap();
            let target = (s * n as f64).round() as i64;
            let stride = (1.0 / s).ceil() as usize;
            for (a, pl) in plan.placements.iter().enumerate() {
                prop_assert!((pl.len() as i64 - target).abs() <= 1,
                    "size {} target {}", pl.len(), target);
                prop_assert!(pl.windows(2).all(|w| w[1] - w[0] <= stride));
                for other in &plan.placements[a + 1..] {
                    prop_assert_ne!(pl, other);
                }
            }
        }

        #[test]
        fn discarded_union_covers_interior(s in 0.15f64..=0.5, n in 50usize..500) {
            let plan = build_plan(s, n).unwrap();
            let mut hit = vec![false; n];
            for p in 0..plan.placements.len() {
                for t in plan.discarded(p) {
                    hit[t] = true;
                }
            }
            let interior = n - 2;
            let covered = hit[1..n - 1].iter().filter(|h| **h).count();
            prop_assert!(covered as f64 >= 0.95 * interior as f64);
        }

        #[test]
        fn newton_matches_lagrange_oracle(
            values in prop::collection::vec(-1.0f64..1.0, 8..64),
            stride in 2usize..6,
            phase in 0usize..5,
        ) {
            let n = values.len();
            let kept: Vec<usize> = (phase % stride..n).step_by(stride).collect();
            prop_assume!(kept.len() >= 5);
            for d in 0..=4 {
                let fast = reconstruct_channel(&values, &kept, d).unwrap();
                let slow = lagrange_oracle(&values, &kept, d);
                for (a, b) in fast.iter().zip(&slow) {
                    prop_assert!((a - b).abs() < 1e-10, "deg {d}: {a} vs {b}");
                }
            }
        }

        #[test]
        fn degree_four_dominates_degree_two(
            values in prop::collection::vec(-1.0f64..1.0, 10..80),
            s in 0.2f64..0.5,
        ) {
            let plan = build_plan(s, values.len()).unwrap();
            let f4 = MethodFamily::new(4, ErrorNorm::Sup).unwrap();
            let f2 = MethodFamily::new(2, ErrorNorm::Sup).unwrap();
            for kept in &plan.placements {
                let a = min_error_over_family(&values, kept, &f4).unwrap();
                let b = min_error_over_family(&values, kept, &f2).unwrap();
                prop_assert!(a <= b);
            }
        }
    }
}
