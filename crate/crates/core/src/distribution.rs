//! Class labels, probability vectors and their deterministic ranking.
//!
//! Every other module works in terms of class indices `0..K`. Ranking orders
//! classes by descending probability and breaks exact ties by ascending class
//! index, so the order is a total order and identical inputs always produce
//! identical permutations.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Absolute tolerance on the probability sum for a distribution to be accepted as is.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Largest sum deviation that is silently repaired by renormalization.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

/// A class index together with an optional human-readable name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassLabel {
    pub index: usize,
    pub name: Option<String>,
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(name) => f.write_str(name),
            None => write!(f, "{}", self.index),
        }
    }
}

/// The set of outcome classes `0..K`, optionally named.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    names: Vec<Option<String>>,
}

impl LabelSpace {
    /// Unnamed label space with `classes` classes.
    pub fn new(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        Ok(Self {
            names: vec![None; classes],
        })
    }

    pub fn with_names<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<Option<String>> = names.into_iter().map(|n| Some(n.into())).collect();
        if names.len() < 2 {
            return Err(Error::TooFewClasses(names.len()));
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn label(&self, index: usize) -> Result<ClassLabel> {
        self.check(index)?;
        Ok(ClassLabel {
            index,
            name: self.names[index].clone(),
        })
    }

    pub fn labels(&self) -> impl Iterator<Item = ClassLabel> + '_ {
        self.names.iter().enumerate().map(|(index, name)| ClassLabel {
            index,
            name: name.clone(),
        })
    }

    /// Errors unless `index` names a class of this space.
    pub fn check(&self, index: usize) -> Result<()> {
        if index < self.names.len() {
            Ok(())
        } else {
            Err(Error::LabelOutOfRange {
                label: index,
                classes: self.names.len(),
            })
        }
    }
}

/// A probability vector over `K >= 2` classes.
///
/// Entries lie in `[0, 1]` and sum to one within [`SUM_TOLERANCE`]. Inputs whose
/// sum is off by at most [`RENORMALIZE_TOLERANCE`] are renormalized on
/// construction; anything further off is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::TooFewClasses(probs.len()));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidProbability { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        let deviation = (sum - 1.0).abs();
        if deviation <= SUM_TOLERANCE {
            Ok(Self { probs })
        } else if deviation <= RENORMALIZE_TOLERANCE {
            Ok(Self {
                probs: probs.into_iter().map(|p| p / sum).collect(),
            })
        } else {
            Err(Error::BadProbabilitySum { sum })
        }
    }

    /// Uniform distribution over `classes` classes.
    pub fn uniform(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::TooFewClasses(classes));
        }
        Ok(Self {
            probs: vec![1.0 / classes as f64; classes],
        })
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, class: usize) -> Result<f64> {
        self.probs
            .get(class)
            .copied()
            .ok_or(Error::LabelOutOfRange {
                label: class,
                classes: self.probs.len(),
            })
    }

    /// The forecast class: largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        rank_order(&self.probs)[0]
    }
}

/// A distribution together with its descending-probability ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedDistribution {
    order: Vec<usize>,
    dist: ClassDistribution,
}

impl RankedDistribution {
    /// `order()[r]` is the class at rank `r` (rank 0 is most probable).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn distribution(&self) -> &ClassDistribution {
        &self.dist
    }

    /// Probabilities listed in rank order; non-increasing.
    pub fn sorted_probs(&self) -> Vec<f64> {
        self.order.iter().map(|&c| self.dist.probs[c]).collect()
    }

    /// Rank of each class, the inverse of [`RankedDistribution::order`].
    pub fn ranks(&self) -> Vec<usize> {
        invert(&self.order)
    }
}

/// Orders the classes of `dist` by descending probability.
pub fn rank_distribution(dist: &ClassDistribution) -> RankedDistribution {
    RankedDistribution {
        order: rank_order(&dist.probs),
        dist: dist.clone(),
    }
}

/// Descending-mass permutation of `masses`, ties by ascending index.
///
/// Works on any slice of comparable reals; callers are responsible for
/// rejecting NaN beforehand.
pub fn rank_order(masses: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..masses.len()).collect();
    order.sort_by(|&a, &b| {
        masses[b]
            .partial_cmp(&masses[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

pub(crate) fn invert(order: &[usize]) -> Vec<usize> {
    let mut ranks = vec![0; order.len()];
    for (rank, &class) in order.iter().enumerate() {
        ranks[class] = rank;
    }
    ranks
}

/// One labeled observation: a feature vector and its observed class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCase {
    pub features: Vec<f64>,
    pub outcome: usize,
}
