//! Feature standardization and the closed-form ridge-regression classifier.
//!
//! Weights solve `(XᵀX + λI) W = XᵀY` for one-hot targets `Y`, with a
//! constant bias feature appended to `X` (and regularized like the rest).
//! When the feature dimension exceeds the sample count the equivalent dual
//! form `W = Xᵀ(XXᵀ + λI)⁻¹Y` is used instead.

use crate::error::{Error, Result};
use crate::numerics::{solve_spd, DenseMatrix};

pub const DEFAULT_EPSILON_S: f64 = 1e-8;
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Per-feature z-scoring with training-set statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
    epsilon_s: f64,
}

impl Standardizer {
    /// Column means and population standard deviations of `x` (`n x D`, `n >= 2`).
    pub fn fit(x: &DenseMatrix) -> Result<Self> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                actual: n,
            });
        }
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n as f64).sqrt()).collect();
        Ok(Self {
            mean,
            std,
            epsilon_s: DEFAULT_EPSILON_S,
        })
    }

    /// Mean 0 and standard deviation 1 everywhere.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            epsilon_s: DEFAULT_EPSILON_S,
        }
    }

    pub fn from_parts(mean: Vec<f64>, std: Vec<f64>, epsilon_s: f64) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch {
                context: "standardizer statistics",
                expected: mean.len(),
                actual: std.len(),
            });
        }
        if std.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::ConfigInvalid("negative standard deviation".into()));
        }
        Ok(Self {
            mean,
            std,
            epsilon_s,
        })
    }

    pub fn with_epsilon(mut self, epsilon_s: f64) -> Self {
        self.epsilon_s = epsilon_s;
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn epsilon_s(&self) -> f64 {
        self.epsilon_s
    }

    /// `(x - mean) / (std + epsilon_s)`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "standardizer input",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / (s + self.epsilon_s);
        }
        Ok(())
    }
}

/// `n x K` indicator matrix.
pub fn one_hot(labels: &[usize], classes: usize) -> DenseMatrix {
    let mut y = DenseMatrix::zeros(labels.len(), classes);
    for (i, &c) in labels.iter().enumerate() {
        y[(i, c)] = 1.0;
    }
    y
}

/// Appends a trailing column of ones.
pub fn append_bias(x: &DenseMatrix) -> DenseMatrix {
    let (n, d) = (x.rows(), x.cols());
    let mut values = Vec::with_capacity(n * (d + 1));
    for i in 0..n {
        values.extend_from_slice(x.row(i));
        values.push(1.0);
    }
    DenseMatrix::from_row_major(n, d + 1, values).expect("sized above")
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(format!("lambda must be positive, got {lambda}")))
    }
}

/// `(XᵀX + λI)⁻¹ XᵀY`.
pub fn ridge_weights_primal(x: &DenseMatrix, y: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    check_lambda(lambda)?;
    let mut gram = x.gram_cols();
    gram.add_diagonal(lambda);
    solve_spd(&gram, &x.transpose_matmul(y)?)
}

/// `Xᵀ (XXᵀ + λI)⁻¹ Y`.
pub fn ridge_weights_dual(x: &DenseMatrix, y: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    check_lambda(lambda)?;
    if y.rows() != x.rows() {
        return Err(Error::DimensionMismatch {
            context: "ridge targets",
            expected: x.rows(),
            actual: y.rows(),
        });
    }
    let mut gram = x.gram_rows();
    gram.add_diagonal(lambda);
    let alpha = solve_spd(&gram, y)?;
    x.transpose_matmul(&alpha)
}

/// Ridge weights by whichever normal-equation system is smaller.
pub fn ridge_weights(x: &DenseMatrix, y: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    if x.cols() > x.rows() {
        ridge_weights_dual(x, y, lambda)
    } else {
        ridge_weights_primal(x, y, lambda)
    }
}

/// Linear multi-class classifier with a bias row as the last weight row.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeClassifier {
    /// `(D + 1) x K`.
    weights: DenseMatrix,
    classes: Vec<String>,
    lambda: f64,
}

impl RidgeClassifier {
    /// Fits on `features` (`n x D`, no bias column) with class indices `labels`.
    pub fn fit(
        features: &DenseMatrix,
        labels: &[usize],
        classes: Vec<String>,
        lambda: f64,
    ) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InsufficientSamples(format!(
                "need at least 2 classes, got {}",
                classes.len()
            )));
        }
        if features.rows() == 0 {
            return Err(Error::TooFewSamples {
                needed: 1,
                actual: 0,
            });
        }
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                context: "label count",
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= classes.len()) {
            return Err(Error::ConfigInvalid(format!("label index {bad} out of range")));
        }
        let xb = append_bias(features);
        let y = one_hot(labels, classes.len());
        let weights = ridge_weights(&xb, &y, lambda)?;
        Ok(Self {
            weights,
            classes,
            lambda,
        })
    }

    pub fn from_parts(weights: DenseMatrix, classes: Vec<String>, lambda: f64) -> Result<Self> {
        if weights.cols() != classes.len() || weights.rows() < 1 {
            return Err(Error::DimensionMismatch {
                context: "classifier weight columns",
                expected: classes.len(),
                actual: weights.cols(),
            });
        }
        Ok(Self {
            weights,
            classes,
            lambda,
        })
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Feature dimension `D`, excluding the bias.
    pub fn feature_dim(&self) -> usize {
        self.weights.rows() - 1
    }

    /// `Wᵀ[x; 1]`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.feature_dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                context: "classifier input",
                expected: d,
                actual: x.len(),
            });
        }
        let mut scores = self.weights.row(d).to_vec();
        for (i, &v) in x.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for (s, w) in scores.iter_mut().zip(self.weights.row(i)) {
                *s += v * w;
            }
        }
        Ok(scores)
    }

    /// Index of the highest score (lowest index on ties) and all scores.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let scores = self.scores(x)?;
        Ok((argmax(&scores), scores))
    }
}

/// First index of the maximum.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_row_major(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    fn explicit_inverse_weights(x: &DenseMatrix, y: &DenseMatrix, lambda: f64) -> DenseMatrix {
        let mut a = x.transpose().matmul(x).unwrap();
        a.add_diagonal(lambda);
        oracle::inverse(&a)
            .matmul(&x.transpose())
            .unwrap()
            .matmul(y)
            .unwrap()
    }

    #[test]
    fn standardizer_hand_values() {
        let x = DenseMatrix::from_rows(&[vec![0.0, 5.0], vec![2.0, 5.0]]).unwrap();
        let st = Standardizer::fit(&x).unwrap();
        assert_eq!(st.mean(), &[1.0, 5.0]);
        assert_eq!(st.std(), &[1.0, 0.0]);
        assert_eq!(st.apply(&[1.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn standardizer_needs_two_rows() {
        let x = DenseMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(Standardizer::fit(&x), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn standardized_training_columns_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 30, 6);
        let st = Standardizer::fit(&x).unwrap();
        let z: Vec<Vec<f64>> = (0..30).map(|i| st.apply(x.row(i)).unwrap()).collect();
        for j in 0..6 {
            let m = z.iter().map(|r| r[j]).sum::<f64>() / 30.0;
            let s = (z.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / 30.0).sqrt();
            let sigma = st.std()[j];
            assert!(m.abs() < 1e-10);
            assert!((s - sigma / (sigma + DEFAULT_EPSILON_S)).abs() < 1e-12);
        }
    }

    #[test]
    fn standardizer_identity_and_inverse() {
        let st = Standardizer::identity(3);
        let x = [0.5, -2.0, 3.0];
        let y = st.apply(&x).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a / (1.0 + DEFAULT_EPSILON_S) - b).abs() < 1e-15);
        }
        let st = Standardizer::from_parts(vec![1.0, 2.0, 3.0], vec![0.5, 0.0, 2.0], 1e-8).unwrap();
        let y = st.apply(&x).unwrap();
        for i in 0..3 {
            let back = y[i] * (st.std()[i] + st.epsilon_s()) + st.mean()[i];
            assert!((back - x[i]).abs() < 1e-10);
        }
        assert!(matches!(st.apply(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn separable_one_dimensional() {
        let x = DenseMatrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let clf = RidgeClassifier::fit(&x, &[0, 1], names(2), 1e-6).unwrap();
        assert_eq!(clf.predict(&[-1.0]).unwrap().0, 0);
        assert_eq!(clf.predict(&[1.0]).unwrap().0, 1);
    }

    #[test]
    fn huge_lambda_collapses_to_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 12, 4);
        let x = DenseMatrix::from_row_major(12, 4, x.values().iter().map(|v| 0.1 * v).collect())
            .unwrap();
        let labels: Vec<usize> = (0..12).map(|i| usize::from(i < 8)).collect();
        let clf = RidgeClassifier::fit(&x, &labels, names(2), 1e9).unwrap();
        let w = clf.weights();
        let feature_norm: f64 = (0..4)
            .flat_map(|i| w.row(i).to_vec())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(feature_norm < 1e-7);
        // class 1 holds 8 of 12 samples, so it wins on the bias alone
        for i in 0..12 {
            assert_eq!(clf.predict(x.row(i)).unwrap().0, 1);
        }
    }

    #[test]
    fn matches_explicit_inverse_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = append_bias(&random(&mut rng, 20, 5));
        let labels: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let y = one_hot(&labels, 3);
        let w = ridge_weights(&x, &y, 0.5).unwrap();
        let w_ref = explicit_inverse_weights(&x, &y, 0.5);
        assert!(w.sub(&w_ref).frobenius_norm() <= 1e-7 * w_ref.frobenius_norm());
    }

    #[test]
    fn normal_equations_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, d) in [(15, 6), (6, 15)] {
            let x = append_bias(&random(&mut rng, n, d));
            let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let y = one_hot(&labels, 3);
            let w = ridge_weights(&x, &y, 0.3).unwrap();
            let mut a = x.gram_cols();
            a.add_diagonal(0.3);
            let rhs = x.transpose_matmul(&y).unwrap();
            let resid = a.matmul(&w).unwrap().sub(&rhs).frobenius_norm();
            assert!(resid <= 1e-8 * rhs.frobenius_norm());
        }
    }

    #[test]
    fn primal_and_dual_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = append_bias(&random(&mut rng, 8, 25));
        let y = one_hot(&[0, 1, 2, 0, 1, 2, 0, 1], 3);
        for lambda in [1e-3, 1.0, 10.0] {
            let p = ridge_weights_primal(&x, &y, lambda).unwrap();
            let d = ridge_weights_dual(&x, &y, lambda).unwrap();
            assert!(p.sub(&d).frobenius_norm() <= 1e-6 * p.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn weight_norm_shrinks_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = append_bias(&random(&mut rng, 25, 8));
        let y = one_hot(&(0..25).map(|i| i % 4).collect::<Vec<_>>(), 4);
        let norms: Vec<f64> = [1e-4, 1e-2, 0.1, 1.0, 10.0, 100.0, 1e4]
            .iter()
            .map(|&l| ridge_weights(&x, &y, l).unwrap().frobenius_norm())
            .collect();
        for w in norms.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.9, 0.1]), 0);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
        let w = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let clf = RidgeClassifier::from_parts(w, names(2), 1.0).unwrap();
        assert_eq!(clf.predict(&[0.5]).unwrap(), (0, vec![0.5, 0.5]));
    }

    #[test]
    fn fitting_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, 10, 30);
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let a = RidgeClassifier::fit(&x, &labels, names(2), 0.7).unwrap();
        let b = RidgeClassifier::fit(&x, &labels, names(2), 0.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shift_is_absorbed_by_standardization() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let train = random(&mut rng, 20, 6);
        let test = random(&mut rng, 10, 6);
        let labels: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let run = |shift: f64| -> Vec<usize> {
            let shifted = |m: &DenseMatrix| {
                DenseMatrix::from_row_major(
                    m.rows(),
                    m.cols(),
                    m.values().iter().map(|v| v + shift).collect(),
                )
                .unwrap()
            };
            let (tr, te) = (shifted(&train), shifted(&test));
            let st = Standardizer::fit(&tr).unwrap();
            let z: Vec<Vec<f64>> = (0..tr.rows()).map(|i| st.apply(tr.row(i)).unwrap()).collect();
            let clf = RidgeClassifier::fit(&DenseMatrix::from_rows(&z).unwrap(), &labels, names(3), 1.0)
                .unwrap();
            (0..te.rows())
                .map(|i| clf.predict(&st.apply(te.row(i)).unwrap()).unwrap().0)
                .collect()
        };
        assert_eq!(run(0.0), run(3.5));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(RidgeClassifier::fit(&x, &[0, 0], names(1), 1.0).is_err());
        assert!(RidgeClassifier::fit(&x, &[0, 1], names(2), 0.0).is_err());
        assert!(RidgeClassifier::fit(&x, &[0], names(2), 1.0).is_err());
        let clf = RidgeClassifier::fit(&x, &[0, 1], names(2), 1.0).unwrap();
        assert!(matches!(clf.predict(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }
}
