//! Weighted log-sum-exp energy over class logits, the suppression loss on the
//! lowest-scoring proposals, and their gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{total_cmp, Scalar};

/// Per-class weights `w_c` of the energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel<T> {
    class_weights: Vec<T>,
}

impl<T: Scalar> EnergyModel<T> {
    pub fn new(class_weights: Vec<T>) -> Result<Self> {
        if class_weights.is_empty() {
            return Err(Error::EmptyInput("energy model needs at least one class"));
        }
        if let Some(w) = class_weights.iter().find(|w| **w <= T::zero() || !w.is_finite()) {
            return Err(Error::InvalidConfig(format!("class weight must be positive, got {w}")));
        }
        Ok(Self { class_weights })
    }

    /// All weights equal to one.
    pub fn uniform(num_classes: usize) -> Result<Self> {
        Self::new(vec![T::one(); num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.class_weights.len()
    }

    pub fn class_weights(&self) -> &[T] {
        &self.class_weights
    }

    fn check(&self, logits: &[T]) -> Result<()> {
        if logits.len() != self.class_weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.class_weights.len(),
                actual: logits.len(),
            });
        }
        Ok(())
    }

    /// `log sum_c w_c exp(f_c)`, shifted by the maximum term so large logits
    /// do not overflow.
    pub fn negative_energy(&self, logits: &[T]) -> Result<T> {
        self.check(logits)?;
        let shifted: Vec<T> = logits
            .iter()
            .zip(&self.class_weights)
            .map(|(&f, &w)| f + w.ln())
            .collect();
        let m = shifted.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = shifted.iter().map(|&v| (v - m).exp()).sum();
        Ok(m + sum.ln())
    }

    /// Energy `E = -log sum_c w_c exp(f_c)`.
    pub fn energy(&self, logits: &[T]) -> Result<T> {
        Ok(-self.negative_energy(logits)?)
    }

    /// Gradient of the negative energy with respect to the logits: the
    /// weighted softmax `w_c exp(f_c) / sum`.
    pub fn negative_energy_logit_grad(&self, logits: &[T]) -> Result<Vec<T>> {
        let ne = self.negative_energy(logits)?;
        Ok(logits
            .iter()
            .zip(&self.class_weights)
            .map(|(&f, &w)| (f + w.ln() - ne).exp())
            .collect())
    }

    /// Gradient of the negative energy with respect to the class weights:
    /// `exp(f_c) / sum`.
    pub fn negative_energy_weight_grad(&self, logits: &[T]) -> Result<Vec<T>> {
        let ne = self.negative_energy(logits)?;
        Ok(logits.iter().map(|&f| (f - ne).exp()).collect())
    }
}

/// `(energy, negative_energy)` of one proposal.
pub fn energy_score<T: Scalar>(logits: &[T], model: &EnergyModel<T>) -> Result<(T, T)> {
    let ne = model.negative_energy(logits)?;
    Ok((-ne, ne))
}

/// Indices of the `min(t, n)` proposals with the smallest negative energy,
/// ordered by (negative energy, index).
pub fn select_lowest<T: Scalar>(negative_energies: &[T], t: usize) -> Result<Vec<usize>> {
    if negative_energies.is_empty() {
        return Err(Error::EmptyInput("no proposals to select from"));
    }
    if t == 0 {
        return Err(Error::InvalidConfig("suppression count T must be at least 1".into()));
    }
    let mut idx: Vec<usize> = (0..negative_energies.len()).collect();
    idx.sort_by(|&a, &b| total_cmp(negative_energies[a], negative_energies[b]).then(a.cmp(&b)));
    idx.truncate(t);
    Ok(idx)
}

/// `(1/T) sum max(0, -E)` over the selected energies; `T` is the number of
/// selected values. Also returns `d loss / d E` per value.
pub fn suppression_loss<T: Scalar>(selected_energies: &[T]) -> (T, Vec<T>) {
    if selected_energies.is_empty() {
        return (T::zero(), Vec::new());
    }
    let n = T::count(selected_energies.len());
    let mut sum = T::zero();
    let grad = selected_energies
        .iter()
        .map(|&e| {
            if -e > T::zero() {
                sum = sum - e;
                -T::one() / n
            } else {
                T::zero()
            }
        })
        .collect();
    (sum / n, grad)
}

/// Suppression loss of one image with gradients that flow back to the logits
/// and to the class weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionReport<T> {
    pub value: T,
    pub selected: Vec<usize>,
    /// `d loss / d f` for every proposal (zero rows for unselected ones).
    pub logit_grads: Vec<Vec<T>>,
    pub weight_grad: Vec<T>,
}

/// Selects the `t` lowest-negative-energy proposals and evaluates the
/// suppression loss on them.
pub fn image_suppression_loss<T: Scalar>(
    logits: &[Vec<T>],
    model: &EnergyModel<T>,
    t: usize,
) -> Result<SuppressionReport<T>> {
    let ne: Vec<T> = logits
        .iter()
        .map(|f| model.negative_energy(f))
        .collect::<Result<_>>()?;
    let selected = select_lowest(&ne, t)?;
    let energies: Vec<T> = selected.iter().map(|&i| -ne[i]).collect();
    let (value, de) = suppression_loss(&energies);

    let c = model.num_classes();
    let mut logit_grads = vec![vec![T::zero(); c]; logits.len()];
    let mut weight_grad = vec![T::zero(); c];
    for (&i, &g) in selected.iter().zip(&de) {
        if g == T::zero() {
            continue;
        }
        // dE = -dNE
        let scale = -g;
        for (dst, v) in logit_grads[i].iter_mut().zip(model.negative_energy_logit_grad(&logits[i])?) {
            *dst = scale * v;
        }
        for (dst, v) in weight_grad.iter_mut().zip(model.negative_energy_weight_grad(&logits[i])?) {
            *dst = *dst + scale * v;
        }
    }
    Ok(SuppressionReport {
        value,
        selected,
        logit_grads,
        weight_grad,
    })
}

/// Total energy loss; the uncertainty term is computed elsewhere.
pub fn energy_loss<T: Scalar>(suppression: T, uncertainty: T) -> T {
    suppression + uncertainty
}
