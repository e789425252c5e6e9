//! Categorical forward noising and reverse posterior sampling with a uniform
//! transition kernel.
//!
//! The forward marginal is `q(x_t | x_0) = abar_t * onehot(x_0) + (1 - abar_t) / K`.
//! A single step keeps its input with probability `alpha_t = abar_t / abar_{t-1}`
//! and otherwise resamples uniformly. Denoisers predict clean categories
//! (x0-parameterization) and are trained with cross-entropy against them.

use rand::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffusionError {
    #[error("step {t} outside 1..={total}")]
    StepOutOfRange { t: usize, total: usize },
    #[error("non-finite logits")]
    NonFiniteLogits,
    #[error("logit vector has {found} entries, vocabulary has {expected}")]
    VocabMismatch { expected: usize, found: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
}

pub const DEFAULT_STEPS: usize = 32;
/// Terminal keep probability bound: the marginal at `T` is within this
/// total-variation distance of uniform.
pub const TERMINAL_KEEP_MAX: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    /// `abar_0 ..= abar_T`
    keep: Vec<f64>,
}

impl NoiseSchedule {
    /// Cosine-shaped cumulative keep probabilities, `abar_0 = 1`.
    pub fn cosine(total_steps: usize) -> Self {
        assert!(total_steps >= 1);
        let s = 0.008;
        let f = |t: usize| {
            let x = (t as f64 / total_steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
            x.cos().powi(2)
        };
        let f0 = f(0);
        let keep = (0..=total_steps)
            .map(|t| if t == 0 { 1.0 } else { (f(t) / f0).max(1e-12) })
            .collect();
        NoiseSchedule { keep }
    }

    /// Custom schedule from `abar_0 ..= abar_T`. Requires `abar_0 = 1`, values
    /// in `(0, 1]`, non-increasing, and `abar_T <= 0.02`.
    pub fn from_keep_probabilities(keep: Vec<f64>) -> Result<Self, DiffusionError> {
        if keep.len() < 2 {
            return Err(DiffusionError::Schedule("need at least one step".into()));
        }
        if keep[0] != 1.0 {
            return Err(DiffusionError::Schedule("abar_0 must be 1".into()));
        }
        if keep.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(DiffusionError::Schedule(
                "keep probabilities must lie in (0, 1]".into(),
            ));
        }
        if keep.windows(2).any(|w| w[1] > w[0]) {
            return Err(DiffusionError::Schedule(
                "keep probabilities must not increase".into(),
            ));
        }
        if *keep.last().unwrap() > TERMINAL_KEEP_MAX {
            return Err(DiffusionError::Schedule(format!(
                "abar_T must be <= {TERMINAL_KEEP_MAX}"
            )));
        }
        Ok(NoiseSchedule { keep })
    }

    pub fn total_steps(&self) -> usize {
        self.keep.len() - 1
    }

    /// `abar_t` for `0 <= t <= T`.
    pub fn keep(&self, t: usize) -> f64 {
        self.keep[t]
    }

    pub fn keep_probabilities(&self) -> &[f64] {
        &self.keep
    }

    /// Per-step keep probability `alpha_t = abar_t / abar_{t-1}`.
    pub fn step_keep(&self, t: usize) -> f64 {
        self.keep[t] / self.keep[t - 1]
    }

    fn check(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.total_steps() {
            return Err(DiffusionError::StepOutOfRange {
                t,
                total: self.total_steps(),
            });
        }
        Ok(())
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::cosine(DEFAULT_STEPS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CategoricalVar {
    vocab_size: usize,
    value: usize,
}

impl CategoricalVar {
    pub fn new(vocab_size: usize, value: usize) -> Self {
        assert!(
            value < vocab_size,
            "category {value} outside vocabulary of {vocab_size}"
        );
        CategoricalVar { vocab_size, value }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn value(&self) -> usize {
        self.value
    }
}

/// Draws `x_t ~ q(x_t | x_0)`.
pub fn q_sample<R: Rng + ?Sized>(
    x0: CategoricalVar,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<CategoricalVar, DiffusionError> {
    schedule.check(t)?;
    if rng.random::<f64>() < schedule.keep(t) {
        Ok(x0)
    } else {
        Ok(CategoricalVar::new(
            x0.vocab_size,
            rng.random_range(0..x0.vocab_size),
        ))
    }
}

/// Distribution of `x_{t-1}` given `x_t` under a denoiser that predicts
/// `softmax(x0_logits)` for the clean value. Entries with logit `-inf` are
/// excluded from the clean prediction.
pub fn posterior_probs(
    x0_logits: &[f64],
    xt: CategoricalVar,
    t: usize,
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>, DiffusionError> {
    schedule.check(t)?;
    let k = xt.vocab_size;
    if x0_logits.len() != k {
        return Err(DiffusionError::VocabMismatch {
            expected: k,
            found: x0_logits.len(),
        });
    }
    let p0 = softmax_checked(x0_logits)?;
    if t == 1 {
        return Ok(p0);
    }
    let kf = k as f64;
    let alpha = schedule.step_keep(t);
    let abar_prev = schedule.keep(t - 1);
    let abar = schedule.keep(t);
    let j = xt.value;
    // q(x_t = j | x_{t-1} = i), as a function of i
    let step = |i: usize| alpha * f64::from(u8::from(i == j)) + (1.0 - alpha) / kf;
    let mut out = vec![0.0; k];
    for (x0, &w) in p0.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let marg_t = abar * f64::from(u8::from(x0 == j)) + (1.0 - abar) / kf;
        for (i, o) in out.iter_mut().enumerate() {
            let prev = abar_prev * f64::from(u8::from(i == x0)) + (1.0 - abar_prev) / kf;
            *o += w * step(i) * prev / marg_t;
        }
    }
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|o| *o /= z);
    Ok(out)
}

/// Samples `x_{t-1}`; at `t = 1` this is a draw of the predicted clean value.
pub fn posterior_step<R: Rng + ?Sized>(
    x0_logits: &[f64],
    xt: CategoricalVar,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<CategoricalVar, DiffusionError> {
    let probs = posterior_probs(x0_logits, xt, t, schedule)?;
    Ok(CategoricalVar::new(
        xt.vocab_size,
        sample_categorical(&probs, rng),
    ))
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
            if u < p {
                return i;
            }
            u -= p;
        }
    }
    last
}

/// Softmax tolerant of `-inf` entries (masked classes); rejects NaN and `+inf`.
pub fn softmax_checked(logits: &[f64]) -> Result<Vec<f64>, DiffusionError> {
    if logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(DiffusionError::NonFiniteLogits);
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(DiffusionError::NonFiniteLogits);
    }
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / z).collect())
}

/// `-log softmax(logits)[target]`.
pub fn ce_loss(x0_logits: &[f64], target: CategoricalVar) -> f64 {
    let m = x0_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x0_logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    lse - x0_logits[target.value]
}

/// Gradient of [`ce_loss`] with respect to the logits: `softmax - onehot`.
pub fn ce_loss_grad(x0_logits: &[f64], target: CategoricalVar) -> Vec<f64> {
    let mut g = softmax_checked(x0_logits).expect("finite logits");
    g[target.value] -= 1.0;
    g
}
