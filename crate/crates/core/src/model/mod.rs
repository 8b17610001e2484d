//! Parameter vectors, learners and the two aggregation primitives.

mod learner;
mod sgd;

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use learner::{evaluate, init_model, loss_and_gradient, Evaluation, LearnerKind, LearnerSpec};
pub use sgd::{local_sgd_step, train_local, EpochSeed, SgdConfig};

/// Tolerance on the coefficient sum accepted by [`weighted_sum`].
pub const COEFFICIENT_SUM_TOLERANCE: f64 = 1e-12;

/// Flat parameter vector of a learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    pub fn new(values: Vec<f64>) -> Self {
        ModelVector(values)
    }

    pub fn zeros(dim: usize) -> Self {
        ModelVector(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Fails with [`Error::Numeric`] on the first NaN or infinite entry.
    pub fn check_finite(&self) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::Numeric {
                index,
                value: self.0[index],
            }),
            None => Ok(()),
        }
    }
}

impl From<Vec<f64>> for ModelVector {
    fn from(values: Vec<f64>) -> Self {
        ModelVector(values)
    }
}

/// Elementwise `sum_m coefficients[m] * models[m]`, accumulated in index
/// order so the result does not depend on how the inputs were produced.
pub fn weighted_sum<M: Borrow<ModelVector>>(
    models: &[M],
    coefficients: &[f64],
) -> Result<ModelVector> {
    if models.is_empty() {
        return Err(Error::Aggregation("no models to aggregate".into()));
    }
    if models.len() != coefficients.len() {
        return Err(Error::Aggregation(format!(
            "{} models but {} coefficients",
            models.len(),
            coefficients.len()
        )));
    }
    if let Some((m, c)) = coefficients
        .iter()
        .enumerate()
        .find(|(_, c)| !(c.is_finite() && **c >= 0.0))
    {
        return Err(Error::Aggregation(format!(
            "coefficient {m} is {c}, expected a nonnegative finite value"
        )));
    }
    let sum: f64 = coefficients.iter().sum();
    if (sum - 1.0).abs() > COEFFICIENT_SUM_TOLERANCE {
        return Err(Error::Aggregation(format!(
            "coefficients sum to {sum:e}, expected 1"
        )));
    }
    let dim = models[0].borrow().len();
    if let Some(m) = models.iter().position(|w| w.borrow().len() != dim) {
        return Err(Error::Aggregation(format!(
            "model {m} has dimension {}, expected {dim}",
            models[m].borrow().len()
        )));
    }

    let mut out = vec![0.0; dim];
    for (w, &c) in models.iter().zip(coefficients) {
        for (o, v) in out.iter_mut().zip(w.borrow().as_slice()) {
            *o += c * v;
        }
    }
    let out = ModelVector(out);
    out.check_finite()?;
    Ok(out)
}

/// `beta * global + (1 - beta) * local`.
pub fn convex_blend(global: &ModelVector, local: &ModelVector, beta: f64) -> Result<ModelVector> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Aggregation(format!(
            "blend coefficient {beta} outside [0, 1]"
        )));
    }
    if global.len() != local.len() {
        return Err(Error::Aggregation(format!(
            "global model has dimension {}, local model {}",
            global.len(),
            local.len()
        )));
    }
    let keep = 1.0 - beta;
    let out = ModelVector(
        global
            .0
            .iter()
            .zip(&local.0)
            .map(|(g, l)| beta * g + keep * l)
            .collect(),
    );
    out.check_finite()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mv(v: &[f64]) -> ModelVector {
        ModelVector::new(v.to_vec())
    }

    #[test]
    fn weighted_sum_hand_values() {
        let out = weighted_sum(&[mv(&[1.0, 2.0]), mv(&[3.0, 6.0])], &[0.25, 0.75]).unwrap();
        assert_eq!(out.as_slice(), &[2.5, 5.0]);
    }

    #[test]
    fn weighted_sum_unit_coefficient_selects_model() {
        let a = mv(&[0.1, -7.3, 4.0]);
        let b = mv(&[9.0, 9.0, 9.0]);
        assert_eq!(weighted_sum(&[a.clone(), b], &[1.0, 0.0]).unwrap(), a);
    }

    #[test]
    fn weighted_sum_identical_models_fixed_point() {
        let a = mv(&[0.5, -1.5, 2.0]);
        let out = weighted_sum(&[&a, &a, &a, &a], &[0.5, 0.25, 0.125, 0.125]).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn weighted_sum_reports_actual_sum() {
        let err = weighted_sum(&[mv(&[1.0]), mv(&[2.0])], &[0.5, 0.6]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1.1"), "{msg}");
    }

    #[test]
    fn weighted_sum_rejects_negative_and_mismatch() {
        assert!(weighted_sum(&[mv(&[1.0]), mv(&[2.0])], &[1.5, -0.5]).is_err());
        assert!(weighted_sum(&[mv(&[1.0]), mv(&[2.0, 3.0])], &[0.5, 0.5]).is_err());
        assert!(weighted_sum(&[mv(&[1.0])], &[0.5, 0.5]).is_err());
        assert!(weighted_sum::<ModelVector>(&[], &[]).is_err());
    }

    #[test]
    fn blend_boundaries_and_midpoint() {
        let g = mv(&[0.0, 0.0]);
        let l = mv(&[2.0, 4.0]);
        assert_eq!(convex_blend(&g, &l, 1.0).unwrap(), g);
        assert_eq!(convex_blend(&g, &l, 0.0).unwrap(), l);
        assert_eq!(convex_blend(&g, &l, 0.5).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn blend_rejects_out_of_range() {
        let g = mv(&[0.0]);
        assert!(convex_blend(&g, &g, -0.1).is_err());
        assert!(convex_blend(&g, &g, 1.0 + 1e-9).is_err());
        assert!(convex_blend(&g, &g, f64::NAN).is_err());
    }

    #[test]
    fn non_finite_entries_are_named() {
        let err = weighted_sum(&[mv(&[1.0, f64::MAX]), mv(&[1.0, f64::MAX])], &[0.5, 0.5]);
        assert!(err.is_ok());
        let err = convex_blend(&mv(&[0.0, f64::INFINITY]), &mv(&[0.0, 0.0]), 0.5).unwrap_err();
        assert!(matches!(err, Error::Numeric { index: 1, .. }));
    }

    fn vectors(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), n)
    }

    proptest! {
        #[test]
        fn blend_matches_two_term_weighted_sum(
            pair in vectors(2, 8),
            beta in 0.0f64..=1.0,
        ) {
            let g = ModelVector::new(pair[0].clone());
            let l = ModelVector::new(pair[1].clone());
            let a = convex_blend(&g, &l, beta).unwrap();
            let b = weighted_sum(&[&g, &l], &[beta, 1.0 - beta]).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-15 * x.abs().max(y.abs()).max(f64::MIN_POSITIVE));
            }
        }

        #[test]
        fn weighted_sum_is_permutation_invariant(
            models in vectors(5, 6),
            raw in prop::collection::vec(0.01f64..1.0, 5),
            perm in Just((0..5usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let total: f64 = raw.iter().sum();
            let mut coef: Vec<f64> = raw.iter().map(|c| c / total).collect();
            let fix = 1.0 - coef.iter().sum::<f64>();
            coef[0] += fix;
            let ms: Vec<ModelVector> = models.into_iter().map(ModelVector::new).collect();
            let a = weighted_sum(&ms, &coef).unwrap();
            let pm: Vec<&ModelVector> = perm.iter().map(|&p| &ms[p]).collect();
            let pc: Vec<f64> = perm.iter().map(|&p| coef[p]).collect();
            let b = weighted_sum(&pm, &pc).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-13 * (1.0 + x.abs()));
            }
        }
    }
}
