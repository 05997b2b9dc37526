//! Per-recording binary SVM: a polynomial-kernel soft-margin classifier
//! trained with sequential minimal optimization on the auto-labeled
//! feature rows, then applied to every frame.
//!
//! The model is deliberately ephemeral; nothing here persists. Training
//! data arrives as rows (one per labeled frame), inputs are standardized
//! by a scaler fitted on those rows, and the kernel acts on the
//! standardized values.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::FrameLabel;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training rows contain only one class")]
    SingleClassInput,
    #[error("feature dimension mismatch: expected {expect}, got {got}")]
    DimensionMismatch { expect: usize, got: usize },
    #[error("{rows} feature rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },
}

/// Polynomial kernel (gamma <x, y> + coef0)^degree. A `gamma` of `None`
/// resolves to 1/feature_dim at training time.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelSpec {
    pub degree: u32,
    pub gamma: Option<f64>,
    pub coef0: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            degree: 3,
            gamma: None,
            coef0: 1.0,
        }
    }
}

/// Training knobs. `max_passes` bounds the number of successful pair
/// updates; `None` means 10 times the number of training rows.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: KernelSpec,
    pub tol: f64,
    pub max_passes: Option<usize>,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            kernel: KernelSpec::default(),
            tol: 1e-3,
            max_passes: None,
            seed: crate::DEFAULT_SEED,
        }
    }
}

/// Per-dimension standardization fitted on the training rows. Dimensions
/// with zero variance keep standard deviation 1 so they pass through
/// centered and unscaled.
#[derive(Debug, Clone)]
pub struct FeatureScaler {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl FeatureScaler {
    pub fn fit(rows: ArrayView2<f64>) -> FeatureScaler {
        let n = rows.nrows() as f64;
        let mean = rows.mean_axis(Axis(0)).expect("at least one row");
        let mut var = Array1::<f64>::zeros(rows.ncols());
        for row in rows.rows() {
            for (v, (&x, &m)) in var.iter_mut().zip(row.iter().zip(mean.iter())) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.mapv(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        });
        FeatureScaler { mean, std }
    }

    pub fn transform_row(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(x.len());
        for (o, ((&v, &m), &s)) in out
            .iter_mut()
            .zip(x.iter().zip(self.mean.iter()).zip(self.std.iter()))
        {
            *o = (v - m) / s;
        }
        out
    }

    pub fn transform_rows(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for ((v, &m), &s) in row.iter_mut().zip(self.mean.iter()).zip(self.std.iter()) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Trained model: standardized support-vector rows with signed dual
/// coefficients alpha_i * y_i.
#[derive(Debug, Clone)]
pub struct SvmModel {
    pub support_vectors: Array2<f64>,
    pub alpha_signed: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub gamma: f64,
    pub scaler: FeatureScaler,
    pub c: f64,
    /// False when the update budget ran out before every row met the KKT
    /// conditions within tol; the model is still usable.
    pub converged: bool,
}

fn kernel_value(spec: &KernelSpec, gamma: f64, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    (gamma * a.dot(&b) + spec.coef0).powi(spec.degree as i32)
}

/// Dual coefficients below this are treated as zero when extracting
/// support vectors.
const SV_ALPHA_FLOOR: f64 = 1e-12;

/// Minimum relative movement of an alpha for a pair step to count.
const STEP_PROGRESS_FLOOR: f64 = 1e-8;

/// Alphas this close to a box face are set onto it, so dust-level values
/// never flip a row's KKT branch.
const BOX_SNAP: f64 = 1e-8;

fn snap_to_box(a: f64, c: f64) -> f64 {
    if a < BOX_SNAP * c.max(1.0) {
        0.0
    } else if a > c - BOX_SNAP * c.max(1.0) {
        c
    } else {
        a
    }
}

struct SmoState<'a> {
    x: &'a Array2<f64>,
    y: &'a [f64],
    alpha: Vec<f64>,
    errors: Vec<f64>,
    bias: f64,
    c: f64,
    spec: KernelSpec,
    gamma: f64,
}

impl SmoState<'_> {
    fn k(&self, i: usize, j: usize) -> f64 {
        kernel_value(&self.spec, self.gamma, self.x.row(i), self.x.row(j))
    }

    /// KKT violation magnitude of row i; zero when the row satisfies the
    /// conditions within tol.
    fn violation(&self, i: usize, tol: f64) -> f64 {
        let r = self.errors[i] * self.y[i];
        if r < -tol && self.alpha[i] < self.c {
            -r
        } else if r > tol && self.alpha[i] > 0.0 {
            r
        } else {
            0.0
        }
    }

    /// One SMO pair update. Returns false when the pair cannot move the
    /// objective (bounds clamp the step or the pair is degenerate).
    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (y1, y2) = (self.y[i], self.y[j]);
        let (a1_old, a2_old) = (self.alpha[i], self.alpha[j]);
        let (e1, e2) = (self.errors[i], self.errors[j]);
        let s = y1 * y2;

        let (lo, hi) = if (y1 - y2).abs() > 0.5 {
            ((a2_old - a1_old).max(0.0), (self.c + a2_old - a1_old).min(self.c))
        } else {
            ((a1_old + a2_old - self.c).max(0.0), (a1_old + a2_old).min(self.c))
        };
        if lo >= hi {
            return false;
        }

        let k11 = self.k(i, i);
        let k12 = self.k(i, j);
        let k22 = self.k(j, j);
        let eta = k11 + k22 - 2.0 * k12;
        if eta <= 0.0 {
            // The kernel is positive semidefinite, so eta = 0 means the two
            // points coincide in feature space; nothing to optimize along.
            return false;
        }
        let a2 = (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi);
        if (a2 - a2_old).abs() < STEP_PROGRESS_FLOOR * (a2 + a2_old + STEP_PROGRESS_FLOOR) {
            return false;
        }
        let a2 = snap_to_box(a2, self.c);
        let a1 = snap_to_box((a1_old + s * (a2_old - a2)).clamp(0.0, self.c), self.c);

        let d1 = a1 - a1_old;
        let d2 = a2 - a2_old;
        let b1 = self.bias - e1 - y1 * d1 * k11 - y2 * d2 * k12;
        let b2 = self.bias - e2 - y1 * d1 * k12 - y2 * d2 * k22;
        let new_bias = if a1 > 0.0 && a1 < self.c {
            b1
        } else if a2 > 0.0 && a2 < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = new_bias - self.bias;

        for m in 0..self.errors.len() {
            self.errors[m] += y1 * d1 * self.k(i, m) + y2 * d2 * self.k(j, m) + db;
        }
        self.alpha[i] = a1;
        self.alpha[j] = a2;
        self.bias = new_bias;
        true
    }
}

/// Trains the soft-margin dual with sequential minimal optimization.
///
/// Each round picks the row with the largest KKT violation as the first
/// pair member and tries seeded-random partners (then a deterministic
/// sweep) until a pair moves. The run is deterministic for a given seed.
/// When no violating row can move, or the update budget runs out, training
/// stops; `converged` records which way it ended.
pub fn train_svm(
    features: ArrayView2<f64>,
    labels: &[FrameLabel],
    cfg: &SvmConfig,
) -> Result<SvmModel, ClassifierError> {
    let n = features.nrows();
    if n != labels.len() {
        return Err(ClassifierError::LabelCountMismatch {
            rows: n,
            labels: labels.len(),
        });
    }
    let n_bird = labels.iter().filter(|l| l.is_bird()).count();
    if n_bird == 0 || n_bird == n {
        return Err(ClassifierError::SingleClassInput);
    }
    assert!(cfg.c > 0.0 && cfg.tol > 0.0, "need C > 0 and tol > 0");
    assert!(cfg.kernel.degree >= 1, "kernel degree must be >= 1");

    let scaler = FeatureScaler::fit(features);
    let x = scaler.transform_rows(features);
    let y: Vec<f64> = labels.iter().map(|l| l.sign() as f64).collect();
    let gamma = cfg
        .kernel
        .gamma
        .unwrap_or(1.0 / features.ncols().max(1) as f64);
    assert!(gamma > 0.0, "gamma must be positive");

    let mut state = SmoState {
        x: &x,
        y: &y,
        alpha: vec![0.0; n],
        // With all alphas zero, f(x) = 0 and E_i = -y_i.
        errors: y.iter().map(|&v| -v).collect(),
        bias: 0.0,
        c: cfg.c,
        spec: cfg.kernel,
        gamma,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = cfg.max_passes.unwrap_or(10 * n);
    let mut updates = 0;
    let mut converged = false;

    'outer: while updates < budget {
        // Rows ordered by violation, worst first; rows already within tol
        // are excluded.
        let mut violators: Vec<(f64, usize)> = (0..n)
            .filter_map(|i| {
                let v = state.violation(i, cfg.tol);
                (v > 0.0).then_some((v, i))
            })
            .collect();
        if violators.is_empty() {
            converged = true;
            break;
        }
        violators.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        for &(_, i) in &violators {
            for _ in 0..n {
                let j = rng.gen_range(0..n);
                if state.take_step(i, j) {
                    updates += 1;
                    continue 'outer;
                }
            }
            for j in 0..n {
                if state.take_step(i, j) {
                    updates += 1;
                    continue 'outer;
                }
            }
        }
        // Violations remain but no pair can move: numerical stalemate.
        break;
    }
    if updates >= budget {
        log::warn!("pair-update budget {budget} exhausted before convergence");
    }

    let mut sv_rows = Vec::new();
    let mut alpha_signed = Vec::new();
    for i in 0..n {
        if state.alpha[i] > SV_ALPHA_FLOOR {
            sv_rows.push(i);
            alpha_signed.push(state.alpha[i] * y[i]);
        }
    }
    let mut support_vectors = Array2::zeros((sv_rows.len(), x.ncols()));
    for (r, &i) in sv_rows.iter().enumerate() {
        support_vectors.row_mut(r).assign(&x.row(i));
    }

    Ok(SvmModel {
        support_vectors,
        alpha_signed,
        bias: state.bias,
        kernel: cfg.kernel,
        gamma,
        scaler,
        c: cfg.c,
        converged,
    })
}

/// Decision function f(x) = sum_i alpha_signed_i K(sv_i, scale(x)) + bias.
pub fn decision_value(model: &SvmModel, x: ArrayView1<f64>) -> Result<f64, ClassifierError> {
    if x.len() != model.scaler.dim() {
        return Err(ClassifierError::DimensionMismatch {
            expect: model.scaler.dim(),
            got: x.len(),
        });
    }
    let scaled = model.scaler.transform_row(x);
    let mut f = model.bias;
    for (row, &a) in model.support_vectors.rows().into_iter().zip(&model.alpha_signed) {
        f += a * kernel_value(&model.kernel, model.gamma, row, scaled.view());
    }
    Ok(f)
}

/// Classifies one row per input row: bird iff the decision value is
/// strictly positive.
pub fn predict(
    model: &SvmModel,
    features: ArrayView2<f64>,
) -> Result<Vec<FrameLabel>, ClassifierError> {
    features
        .rows()
        .into_iter()
        .map(|row| {
            decision_value(model, row).map(|f| {
                if f > 0.0 {
                    FrameLabel::Bird
                } else {
                    FrameLabel::Background
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_distr::Distribution;

    /// Two Gaussian blobs around (2, 2) labeled bird and (-2, -2) labeled
    /// background; jitter sigma 0.3 leaves a wide margin.
    fn blobs(per_class: usize, seed: u64) -> (Array2<f64>, Vec<FrameLabel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, 0.3).unwrap();
        let mut rows = Array2::zeros((2 * per_class, 2));
        let mut labels = Vec::new();
        for i in 0..2 * per_class {
            let (cx, cy, lab) = if i < per_class {
                (2.0, 2.0, FrameLabel::Bird)
            } else {
                (-2.0, -2.0, FrameLabel::Background)
            };
            rows[(i, 0)] = cx + normal.sample(&mut rng);
            rows[(i, 1)] = cy + normal.sample(&mut rng);
            labels.push(lab);
        }
        (rows, labels)
    }

    /// Asserts the KKT conditions within tol on the training set.
    fn assert_kkt(model: &SvmModel, rows: &Array2<f64>, labels: &[FrameLabel], tol: f64) {
        // Recover each row's alpha from the model by matching scaled rows
        // against stored support vectors.
        let scaled = model.scaler.transform_rows(rows.view());
        for (i, row) in rows.rows().into_iter().enumerate() {
            let y = labels[i].sign() as f64;
            let f = decision_value(model, row).unwrap();
            let margin = y * f;
            let alpha = model
                .support_vectors
                .rows()
                .into_iter()
                .zip(&model.alpha_signed)
                .find(|(sv, _)| {
                    sv.iter()
                        .zip(scaled.row(i).iter())
                        .all(|(a, b)| (a - b).abs() < 1e-12)
                })
                .map(|(_, &a)| a.abs())
                .unwrap_or(0.0);
            if alpha < 1e-9 {
                assert!(margin >= 1.0 - tol, "row {i}: free row margin {margin}");
            } else if alpha > model.c - 1e-9 {
                assert!(margin <= 1.0 + tol, "row {i}: bound row margin {margin}");
            } else {
                assert!(
                    (margin - 1.0).abs() <= tol,
                    "row {i}: on-margin row margin {margin}"
                );
            }
        }
    }

    #[test]
    fn separable_blobs_train_to_full_accuracy() {
        let (rows, labels) = blobs(20, 1);
        let cfg = SvmConfig::default();
        let model = train_svm(rows.view(), &labels, &cfg).unwrap();
        assert!(model.converged);
        let pred = predict(&model, rows.view()).unwrap();
        assert_eq!(pred, labels);
        assert_kkt(&model, &rows, &labels, cfg.tol);

        // Dual feasibility: sum of signed alphas vanishes and every
        // magnitude respects the box.
        let total: f64 = model.alpha_signed.iter().sum();
        assert!(total.abs() < 1e-9, "sum alpha y = {total}");
        assert!(model.alpha_signed.iter().all(|a| a.abs() <= model.c + 1e-9));
        assert!(model.alpha_signed.iter().any(|&a| a > 0.0));
        assert!(model.alpha_signed.iter().any(|&a| a < 0.0));
    }

    #[test]
    fn cubic_kernel_separates_xor() {
        let rows = array![[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]];
        let labels = vec![
            FrameLabel::Background,
            FrameLabel::Background,
            FrameLabel::Bird,
            FrameLabel::Bird,
        ];
        let cfg = SvmConfig {
            c: 10.0,
            ..SvmConfig::default()
        };
        let model = train_svm(rows.view(), &labels, &cfg).unwrap();
        assert!(model.converged);
        assert_eq!(predict(&model, rows.view()).unwrap(), labels);
    }

    #[test]
    fn decision_is_storage_order_invariant() {
        let (rows, labels) = blobs(10, 2);
        let model = train_svm(rows.view(), &labels, &SvmConfig::default()).unwrap();
        let mut reversed = model.clone();
        let k = reversed.support_vectors.nrows();
        let mut swapped = reversed.support_vectors.clone();
        for r in 0..k {
            swapped.row_mut(r).assign(&model.support_vectors.row(k - 1 - r));
        }
        reversed.support_vectors = swapped;
        reversed.alpha_signed.reverse();

        let probes = array![[0.1, -0.3], [2.0, 2.0], [-1.5, 0.5], [3.0, -3.0]];
        for p in probes.rows() {
            let a = decision_value(&model, p).unwrap();
            let b = decision_value(&reversed, p).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicating_training_rows_keeps_predictions() {
        let (rows, labels) = blobs(12, 3);
        let cfg = SvmConfig::default();
        let base = train_svm(rows.view(), &labels, &cfg).unwrap();

        let mut doubled = Array2::zeros((rows.nrows() * 2, 2));
        let mut doubled_labels = Vec::new();
        for (i, row) in rows.rows().into_iter().enumerate() {
            doubled.row_mut(2 * i).assign(&row);
            doubled.row_mut(2 * i + 1).assign(&row);
            doubled_labels.push(labels[i]);
            doubled_labels.push(labels[i]);
        }
        let dup = train_svm(doubled.view(), &doubled_labels, &cfg).unwrap();

        let probes = array![[2.0, 2.0], [-2.0, -2.0], [1.5, 2.5], [-2.5, -1.0]];
        assert_eq!(
            predict(&base, probes.view()).unwrap(),
            predict(&dup, probes.view()).unwrap()
        );
        assert_eq!(
            predict(&base, rows.view()).unwrap(),
            predict(&dup, rows.view()).unwrap()
        );
    }

    #[test]
    fn scaler_standardizes_and_is_idempotent() {
        let rows = array![
            [1.0, 5.0, 7.0],
            [3.0, 5.0, 11.0],
            [5.0, 5.0, 3.0],
            [7.0, 5.0, 9.0],
        ];
        let scaler = FeatureScaler::fit(rows.view());
        // Constant column: centered, stddev forced to 1.
        assert_eq!(scaler.std[1], 1.0);
        let once = scaler.transform_rows(rows.view());
        let again = FeatureScaler::fit(once.view());
        assert!(again.mean.iter().all(|m| m.abs() < 1e-12));
        // Re-fitted stddevs are 1 except the degenerate column.
        assert!((again.std[0] - 1.0).abs() < 1e-12);
        assert_eq!(again.std[1], 1.0);
        let twice = again.transform_rows(once.view());
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn single_class_input_is_rejected() {
        let rows = array![[1.0, 2.0], [3.0, 4.0]];
        let labels = vec![FrameLabel::Bird, FrameLabel::Bird];
        assert!(matches!(
            train_svm(rows.view(), &labels, &SvmConfig::default()),
            Err(ClassifierError::SingleClassInput)
        ));
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let (rows, labels) = blobs(5, 4);
        let model = train_svm(rows.view(), &labels, &SvmConfig::default()).unwrap();
        assert!(matches!(
            decision_value(&model, array![1.0, 2.0, 3.0].view()),
            Err(ClassifierError::DimensionMismatch { expect: 2, got: 3 })
        ));
        assert!(matches!(
            train_svm(rows.view(), &labels[..5], &SvmConfig::default()),
            Err(ClassifierError::LabelCountMismatch { rows: 10, labels: 5 })
        ));
    }

    #[test]
    fn zero_decision_value_maps_to_background() {
        let model = SvmModel {
            support_vectors: Array2::zeros((0, 2)),
            alpha_signed: vec![],
            bias: 0.0,
            kernel: KernelSpec::default(),
            gamma: 0.5,
            scaler: FeatureScaler {
                mean: Array1::zeros(2),
                std: Array1::from_elem(2, 1.0),
            },
            c: 1.0,
            converged: true,
        };
        let pred = predict(&model, array![[1.0, -1.0]].view()).unwrap();
        assert_eq!(pred, vec![FrameLabel::Background]);

        let biased = SvmModel {
            bias: 0.25,
            ..model
        };
        let pred = predict(&biased, array![[1.0, -1.0]].view()).unwrap();
        assert_eq!(pred, vec![FrameLabel::Bird]);
    }

    #[test]
    fn empty_feature_set_predicts_nothing() {
        let (rows, labels) = blobs(5, 5);
        let model = train_svm(rows.view(), &labels, &SvmConfig::default()).unwrap();
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(predict(&model, empty.view()).unwrap().is_empty());
    }

    #[test]
    fn exhausted_budget_reports_nonconvergence() {
        let (rows, labels) = blobs(20, 6);
        let cfg = SvmConfig {
            max_passes: Some(1),
            ..SvmConfig::default()
        };
        let model = train_svm(rows.view(), &labels, &cfg).unwrap();
        assert!(!model.converged);
        // Still a usable (if poor) model.
        assert_eq!(
            predict(&model, rows.view()).unwrap().len(),
            rows.nrows()
        );
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (rows, labels) = blobs(15, 7);
        let cfg = SvmConfig::default();
        let a = train_svm(rows.view(), &labels, &cfg).unwrap();
        let b = train_svm(rows.view(), &labels, &cfg).unwrap();
        assert_eq!(a.alpha_signed, b.alpha_signed);
        assert_eq!(a.bias, b.bias);
    }
}
