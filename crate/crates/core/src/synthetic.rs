//! Seeded synthetic data with known class conditionals.
//!
//! Each case `i` draws from its own ChaCha20 stream (`seed`, stream `i`): the
//! features first, then one uniform that selects the outcome by inverting the
//! cumulative true conditional. Cases are i.i.d. and the dataset is the same
//! whether generated sequentially or in parallel.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, ProbabilityTable, TableSource};
use crate::distribution::{ClassDistribution, LabeledCase};
use crate::error::{Error, Result};
use crate::models::{predict_proba, SoftmaxModel};

/// Identifier recorded in run metadata for reproducibility across implementations.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9), seed_from_u64, stream=case index";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureDistribution {
    Uniform { low: f64, high: f64 },
    StandardNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    /// True softmax coefficients, one `[intercept, x_1, ..., x_d]` row per class.
    pub coefficients: Vec<Vec<f64>>,
    pub features: FeatureDistribution,
    pub seed: u64,
    pub n: usize,
}

impl GeneratorSpec {
    /// Three classes, four standard-normal features, class 0 the most common.
    pub fn default_with(n: usize, seed: u64) -> Self {
        Self {
            coefficients: vec![
                vec![0.8, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.5, -1.0, 0.5, 0.0],
                vec![-0.6, -1.0, 1.6, 0.0, 0.9],
            ],
            features: FeatureDistribution::StandardNormal,
            seed,
            n,
        }
    }

    /// One uniform feature on `[-2, 2]`, three classes.
    pub fn single_feature(n: usize, seed: u64) -> Self {
        Self {
            coefficients: vec![vec![0.0, 0.0], vec![-0.3, 1.5], vec![-0.6, -1.8]],
            features: FeatureDistribution::Uniform { low: -2.0, high: 2.0 },
            seed,
            n,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.coefficients.len()
    }

    pub fn dim(&self) -> usize {
        self.coefficients.first().map_or(0, |r| r.len().saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.len() < 2 {
            return Err(Error::TooFewClasses(self.coefficients.len()));
        }
        let width = self.coefficients[0].len();
        if width == 0 {
            return Err(Error::InvalidParameter("coefficient rows need an intercept".into()));
        }
        if let Some(r) = self.coefficients.iter().find(|r| r.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width - 1,
                actual: r.len().saturating_sub(1),
            });
        }
        if let FeatureDistribution::Uniform { low, high } = self.features {
            if !(low.is_finite() && high.is_finite() && low < high) {
                return Err(Error::InvalidParameter(format!("bad uniform range [{low}, {high}]")));
            }
        }
        Ok(())
    }

    /// The generating model, for computing true conditionals at arbitrary points.
    pub fn true_model(&self) -> Result<SoftmaxModel> {
        self.validate()?;
        SoftmaxModel::from_coefficients(self.coefficients.clone())
    }
}

fn case_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws an outcome by inverse CDF for a uniform `u` in `[0, 1)`.
pub fn inverse_cdf(dist: &ClassDistribution, u: f64) -> usize {
    let mut acc = 0.0;
    let probs = dist.probs();
    for (class, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return class;
        }
    }
    // u landed in the rounding gap above the accumulated sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Generates `spec.n` cases and the true conditional of each.
pub fn generate(spec: &GeneratorSpec) -> Result<(Dataset, ProbabilityTable)> {
    let model = spec.true_model()?;
    let dim = spec.dim();
    let mut cases = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = case_rng(spec.seed, i as u64);
        let features: Vec<f64> = (0..dim)
            .map(|_| match spec.features {
                FeatureDistribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
                FeatureDistribution::StandardNormal => rng.sample(StandardNormal),
            })
            .collect();
        let dist = predict_proba(&model, &features)?;
        let outcome = inverse_cdf(&dist, rng.random::<f64>());
        cases.push(LabeledCase { features, outcome });
        truth.push(dist);
    }
    let data = Dataset::from_cases(cases)?;
    let table = ProbabilityTable::new(spec.num_classes(), data.ids.clone(), truth, TableSource::Internal)?;
    Ok((data, table))
}

/// Sizes implied by `fractions`: cumulative boundaries are rounded up, so on
/// an odd count the first part takes the ceiling.
pub fn split_sizes(n: usize, fractions: &[f64]) -> Result<[usize; 3]> {
    if fractions.len() < 2 || fractions.len() > 3 {
        return Err(Error::InvalidParameter("split needs two or three fractions".into()));
    }
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidParameter("split fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!("split fractions sum to {total} > 1")));
    }
    let boundary = |cum: f64| (((cum * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n);
    let b1 = boundary(fractions[0]);
    let b2 = boundary(fractions[0] + fractions[1]).max(b1);
    let b3 = if fractions.len() == 3 {
        boundary(total).max(b2)
    } else {
        n
    };
    Ok([b1, b2 - b1, b3 - b2])
}

/// Random disjoint split into training, calibration and test parts.
///
/// With two fractions the test part receives every remaining case; with three,
/// cases beyond the third fraction are left out.
pub fn split(dataset: &Dataset, fractions: &[f64], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let sizes = split_sizes(dataset.len(), fractions)?;
    split_counts(dataset, sizes, seed)
}

/// Random disjoint split with explicit part sizes.
pub fn split_counts(dataset: &Dataset, sizes: [usize; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let [a, b, c] = sizes;
    if a + b + c > dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "split sizes {a}+{b}+{c} exceed {} cases",
            dataset.len()
        )));
    }
    let mut perm: Vec<usize> = (0..dataset.len()).collect();
    perm.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    Ok((
        dataset.subset(&perm[..a]),
        dataset.subset(&perm[a..a + b]),
        dataset.subset(&perm[a + b..a + b + c]),
    ))
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
