//! Nested conformal prediction sets for classification.
//!
//! For a probability vector ranked as `p(π(0)) >= p(π(1)) >= ...`, the
//! conformity score of the top-ranked class is 1 and the score of the class at
//! rank `j >= 1` is the tail mass `p(π(j)) + ... + p(π(K-1))`. A score is the
//! largest level `γ` at which the class survives in the nested family of naive
//! sets `{y : s(x, y) >= γ}`.
//!
//! Split calibration then picks one member of that family: with `n` held-out
//! scores and `k = ⌈(n + 1)(1 − α)⌉`, the threshold `γ̂(α)` is the `k`-th
//! largest calibration score (equivalently, one minus the `k`-th smallest
//! non-conformity `1 − s`). When `k > n` the threshold is 0 and every set is
//! the full label space.

use std::fmt;
use std::str::FromStr;

use crate::distribution::{rank_order, ClassDistribution};
use crate::error::{Error, Result};

/// Slack used when rounding `(n + 1)(1 − α)` up to an integer, so that
/// products that are integral in exact arithmetic are not bumped by one ulp.
const INDEX_SLACK: f64 = 1e-9;

/// Per-class conformity scores for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformityScores {
    scores: Vec<f64>,
    order: Vec<usize>,
}

impl ConformityScores {
    pub fn from_distribution(dist: &ClassDistribution) -> Self {
        Self::from_ranked(dist.probs())
    }

    /// Scores from a vector of non-negative class masses that need not sum to
    /// one, e.g. probabilities that were rounded for display. The tail-sum
    /// formula is applied to the masses as given, without renormalizing.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::TooFewClasses(masses.len()));
        }
        for (index, &value) in masses.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        Ok(Self::from_ranked(masses))
    }

    fn from_ranked(masses: &[f64]) -> Self {
        let order = rank_order(masses);
        let mut scores = vec![0.0; masses.len()];
        let mut tail = 0.0;
        for &class in order.iter().skip(1).rev() {
            tail += masses[class];
            scores[class] = tail;
        }
        scores[order[0]] = 1.0;
        Self { scores, order }
    }

    pub fn num_classes(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score(&self, class: usize) -> Result<f64> {
        self.scores
            .get(class)
            .copied()
            .ok_or(Error::LabelOutOfRange {
                label: class,
                classes: self.scores.len(),
            })
    }

    /// Classes in descending-probability order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The rank-0 class, i.e. the classifier's forecast.
    pub fn forecast(&self) -> usize {
        self.order[0]
    }

    /// `{y : s(x, y) >= threshold}` in ascending class order.
    pub fn members_at(&self, threshold: f64) -> Vec<usize> {
        (0..self.scores.len())
            .filter(|&y| self.scores[y] >= threshold)
            .collect()
    }
}

pub fn conformity_scores(dist: &ClassDistribution) -> ConformityScores {
    ConformityScores::from_distribution(dist)
}

/// Conformity score of the observed outcome, `s(x, y_obs)`.
pub fn score_labeled(dist: &ClassDistribution, outcome: usize) -> Result<f64> {
    conformity_scores(dist).score(outcome)
}

/// How a prediction set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Nested,
    Localized,
    Oracle,
    Naive,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nested => "nested",
            Method::Localized => "localized",
            Method::Oracle => "oracle",
            Method::Naive => "naive",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nested" => Ok(Method::Nested),
            "localized" | "localised" => Ok(Method::Localized),
            "oracle" => Ok(Method::Oracle),
            "naive" => Ok(Method::Naive),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

/// A set of class labels reported for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    members: Vec<usize>,
    /// Miscoverage level the set was built for; `None` for naive sets.
    pub alpha: Option<f64>,
    pub method: Method,
    /// Threshold applied: a conformity-score level for nested, localized and
    /// naive sets, a probability level for oracle sets.
    pub threshold: f64,
    /// Argmax class of the distribution the set was built from.
    pub forecast: usize,
    num_classes: usize,
}

impl PredictionSet {
    pub fn new(
        members: Vec<usize>,
        alpha: Option<f64>,
        method: Method,
        threshold: f64,
        forecast: usize,
        num_classes: usize,
    ) -> Self {
        let mut members = members;
        members.sort_unstable();
        members.dedup();
        Self {
            members,
            alpha,
            method,
            threshold,
            forecast,
            num_classes,
        }
    }

    /// Members in ascending class order.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, class: usize) -> bool {
        self.members.binary_search(&class).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_subset_of(&self, other: &PredictionSet) -> bool {
        self.members.iter().all(|&c| other.contains(c))
    }

    /// Semicolon-joined ascending member list, e.g. `0;2`.
    pub fn to_label_list(&self) -> String {
        let parts: Vec<String> = self.members.iter().map(|c| c.to_string()).collect();
        parts.join(";")
    }
}

/// Fitted split-conformal threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    gamma_hat: f64,
    alpha: f64,
    n_cal: usize,
    k: usize,
}

impl CalibrationModel {
    /// Rebuilds a model from stored fields, checking that `k` is the order
    /// statistic index implied by `n_cal` and `alpha`.
    pub fn from_parts(gamma_hat: f64, alpha: f64, n_cal: usize, k: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if !(0.0..=1.0).contains(&gamma_hat) {
            return Err(Error::InvalidParameter(format!(
                "gamma_hat {gamma_hat} outside [0, 1]"
            )));
        }
        let expected = order_statistic_index(n_cal, alpha);
        if k != expected {
            return Err(Error::InvalidParameter(format!(
                "order statistic index {k} does not match n={n_cal}, alpha={alpha} (expected {expected})"
            )));
        }
        if k > n_cal && gamma_hat != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "k={k} exceeds n={n_cal} but gamma_hat is {gamma_hat}, expected 0"
            )));
        }
        Ok(Self {
            gamma_hat,
            alpha,
            n_cal,
            k,
        })
    }

    pub fn gamma_hat(&self) -> f64 {
        self.gamma_hat
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n_cal(&self) -> usize {
        self.n_cal
    }

    /// Order statistic index `k = ⌈(n + 1)(1 − α)⌉`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// The calibrated non-conformity quantile `1 − γ̂(α)`.
    pub fn nonconformity_threshold(&self) -> f64 {
        1.0 - self.gamma_hat
    }

    /// True when the calibration set is too small for the requested level and
    /// every prediction set is the full label space.
    pub fn is_full_set_regime(&self) -> bool {
        self.k > self.n_cal
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `⌈(n + 1)(1 − α)⌉`, never below 1.
pub fn order_statistic_index(n: usize, alpha: f64) -> usize {
    let target = (n as f64 + 1.0) * (1.0 - alpha);
    ((target - INDEX_SLACK).ceil().max(1.0)) as usize
}

/// Calibrates `γ̂(α)` from the conformity scores of labeled held-out cases.
pub fn calibrate(scores: &[f64], alpha: f64) -> Result<CalibrationModel> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(Error::EmptyInput("calibration"));
    }
    for (index, &value) in scores.iter().enumerate() {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidScore { index, value });
        }
    }
    Ok(calibrate_unchecked(scores, alpha))
}

/// Calibration without input checks; also accepts an empty slice, which
/// yields the full-set model.
pub(crate) fn calibrate_unchecked(scores: &[f64], alpha: f64) -> CalibrationModel {
    let n = scores.len();
    let k = order_statistic_index(n, alpha);
    let gamma_hat = if k > n {
        0.0
    } else {
        // k-th largest score == 1 - (k-th smallest non-conformity); taking the
        // score directly keeps γ̂ bit-identical to a calibration score.
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        sorted[k - 1]
    };
    CalibrationModel {
        gamma_hat,
        alpha,
        n_cal: n,
        k,
    }
}

/// Conformity scores of observed outcomes for a collection of labeled cases.
pub fn labeled_scores<'a>(
    cases: impl IntoIterator<Item = (&'a ConformityScores, usize)>,
) -> Result<Vec<f64>> {
    cases
        .into_iter()
        .map(|(scores, outcome)| scores.score(outcome))
        .collect()
}

/// `{y : s(x, y) >= γ}` for already-scored input, tagged as a nested set.
pub fn nested_set(scores: &ConformityScores, gamma_hat: f64, alpha: f64) -> PredictionSet {
    PredictionSet::new(
        scores.members_at(gamma_hat),
        Some(alpha),
        Method::Nested,
        gamma_hat,
        scores.forecast(),
        scores.num_classes(),
    )
}

pub fn predict_set(dist: &ClassDistribution, cal: &CalibrationModel) -> PredictionSet {
    nested_set(&conformity_scores(dist), cal.gamma_hat, cal.alpha)
}

/// Uncalibrated member of the nested family at level `gamma`.
pub fn naive_set(dist: &ClassDistribution, gamma: f64) -> Result<PredictionSet> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("gamma {gamma} outside [0, 1]")));
    }
    let scores = conformity_scores(dist);
    Ok(PredictionSet::new(
        scores.members_at(gamma),
        None,
        Method::Naive,
        gamma,
        scores.forecast(),
        scores.num_classes(),
    ))
}

/// Oracle set for a known conditional distribution.
///
/// Walks the descending-probability prefixes and stops at the first one whose
/// mass reaches `1 − α`; the threshold is the smallest probability in that
/// prefix and the set is `{y : p(y|x) >= threshold}`.
pub fn oracle_threshold(dist: &ClassDistribution, alpha: f64) -> Result<(f64, PredictionSet)> {
    check_alpha(alpha)?;
    let probs = dist.probs();
    let order = rank_order(probs);
    let target = 1.0 - alpha;
    let mut mass = 0.0;
    let mut threshold = probs[order[order.len() - 1]];
    for &class in &order {
        mass += probs[class];
        if mass >= target - 1e-12 {
            threshold = probs[class];
            break;
        }
    }
    let members = (0..probs.len()).filter(|&y| probs[y] >= threshold).collect();
    let set = PredictionSet::new(
        members,
        Some(alpha),
        Method::Oracle,
        threshold,
        order[0],
        probs.len(),
    );
    Ok((threshold, set))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> ClassDistribution {
        ClassDistribution::new(p.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
    }

    #[test]
    fn scores_for_worked_examples() {
        let s = conformity_scores(&dist(&[0.43, 0.35, 0.22]));
        assert!(close(s.scores(), &[1.0, 0.57, 0.22]));
        let s = conformity_scores(&dist(&[0.27, 0.54, 0.19]));
        assert!(close(s.scores(), &[0.46, 1.0, 0.19]));
        assert_eq!(s.forecast(), 1);
        let s = ConformityScores::from_masses(&[0.34, 0.27, 0.38]).unwrap();
        assert!(close(s.scores(), &[0.61, 0.27, 1.0]));
    }

    #[test]
    fn point_mass_scores() {
        let s = conformity_scores(&dist(&[1.0, 0.0, 0.0]));
        assert_eq!(s.scores(), &[1.0, 0.0, 0.0]);
        assert_eq!(s.order(), &[0, 1, 2]);
    }

    #[test]
    fn labeled_scores_from_table_rows() {
        assert_eq!(score_labeled(&dist(&[0.58, 0.25, 0.17]), 0).unwrap(), 1.0);
        assert!((score_labeled(&dist(&[0.27, 0.54, 0.19]), 0).unwrap() - 0.46).abs() < 1e-12);
        let row2 = ConformityScores::from_masses(&[0.49, 0.32, 0.18]).unwrap();
        assert!((row2.score(1).unwrap() - 0.50).abs() < 1e-12);
        assert!(score_labeled(&dist(&[0.58, 0.25, 0.17]), 3).is_err());
    }

    #[test]
    fn masses_reject_negative() {
        assert!(ConformityScores::from_masses(&[0.5, -0.01]).is_err());
        assert!(ConformityScores::from_masses(&[1.0]).is_err());
    }

    #[test]
    fn calibrate_hand_enumerated() {
        let cal = calibrate(&[1.0, 1.0, 0.6, 0.5], 0.3).unwrap();
        assert_eq!(cal.k(), 4);
        assert_eq!(cal.gamma_hat(), 0.5);
        assert!(!cal.is_full_set_regime());

        let cal = calibrate(&[0.7], 0.6).unwrap();
        assert_eq!(cal.k(), 1);
        assert_eq!(cal.gamma_hat(), 0.7);
    }

    #[test]
    fn calibrate_full_set_regime() {
        // n = 5 < 1/α − 1 = 9
        let cal = calibrate(&[1.0, 0.9, 0.8, 0.7, 0.6], 0.1).unwrap();
        assert_eq!(cal.k(), 6);
        assert_eq!(cal.gamma_hat(), 0.0);
        assert!(cal.is_full_set_regime());
        let set = predict_set(&dist(&[0.7, 0.2, 0.1]), &cal);
        assert_eq!(set.members(), &[0, 1, 2]);
    }

    #[test]
    fn calibrate_errors() {
        assert!(matches!(calibrate(&[], 0.1), Err(Error::EmptyInput(_))));
        assert!(matches!(calibrate(&[0.5], 0.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(calibrate(&[0.5], 1.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(
            calibrate(&[0.5, 1.2], 0.1),
            Err(Error::InvalidScore { index: 1, .. })
        ));
    }

    #[test]
    fn order_statistic_index_rounding() {
        assert_eq!(order_statistic_index(100, 0.3), 71);
        assert_eq!(order_statistic_index(9, 0.3), 7);
        assert_eq!(order_statistic_index(19, 0.05), 19);
        assert_eq!(order_statistic_index(1, 0.6), 1);
        assert_eq!(order_statistic_index(3, 0.999), 1);
    }

    #[test]
    fn from_parts_validates() {
        assert!(CalibrationModel::from_parts(0.5, 0.3, 4, 4).is_ok());
        assert!(CalibrationModel::from_parts(0.5, 0.3, 4, 3).is_err());
        assert!(CalibrationModel::from_parts(0.5, 0.1, 5, 6).is_err());
        assert!(CalibrationModel::from_parts(1.5, 0.3, 4, 4).is_err());
    }

    #[test]
    fn nested_sets_for_table_row() {
        let s = ConformityScores::from_masses(&[0.34, 0.27, 0.38]).unwrap();
        assert_eq!(nested_set(&s, 0.6, 0.3).members(), &[0, 2]);
        assert_eq!(nested_set(&s, 0.26, 0.05).members(), &[0, 1, 2]);
        assert_eq!(nested_set(&s, 0.0, 0.05).members(), &[0, 1, 2]);
    }

    #[test]
    fn naive_sets() {
        let d = dist(&[0.43, 0.35, 0.22]);
        assert_eq!(naive_set(&d, 0.30).unwrap().members(), &[0, 1]);
        assert_eq!(naive_set(&d, 0.7).unwrap().members(), &[0]);
        assert_eq!(naive_set(&d, 0.0).unwrap().members(), &[0, 1, 2]);
        assert!(naive_set(&d, 1.1).is_err());
    }

    #[test]
    fn oracle_examples() {
        let d = dist(&[0.43, 0.35, 0.22]);
        let (t, set) = oracle_threshold(&d, 0.30).unwrap();
        assert_eq!(t, 0.35);
        assert_eq!(set.members(), &[0, 1]);
        assert_eq!(set.method, Method::Oracle);

        let (t, set) = oracle_threshold(&d, 0.58).unwrap();
        assert_eq!(t, 0.43);
        assert_eq!(set.members(), &[0]);

        let (t, set) = oracle_threshold(&d, 1e-9).unwrap();
        assert_eq!(t, 0.22);
        assert_eq!(set.members(), &[0, 1, 2]);
    }

    #[test]
    fn oracle_matches_prefix_enumeration() {
        // independent check: smallest prefix size m with mass >= 1 - α
        let d = dist(&[0.1, 0.4, 0.2, 0.3]);
        for &alpha in &[0.05, 0.2, 0.35, 0.5, 0.65, 0.9] {
            let sorted = [0.4, 0.3, 0.2, 0.1];
            let m = (1..=4)
                .find(|&m| sorted[..m].iter().sum::<f64>() >= 1.0 - alpha - 1e-12)
                .unwrap();
            let (t, set) = oracle_threshold(&d, alpha).unwrap();
            assert_eq!(set.len(), m, "alpha {alpha}");
            assert_eq!(t, sorted[m - 1]);
        }
    }

    #[test]
    fn label_list_and_method_parsing() {
        let s = PredictionSet::new(vec![2, 0], Some(0.3), Method::Nested, 0.6, 2, 3);
        assert_eq!(s.to_label_list(), "0;2");
        assert!(s.contains(2) && !s.contains(1));
        assert_eq!("Localized".parse::<Method>().unwrap(), Method::Localized);
        assert!("bogus".parse::<Method>().is_err());
    }
}
