//! Per-node sensing: noisy linear measurements and their information form.
//!
//! The information form `z = C^T R^-1 y` with information matrix
//! `Z = C^T R^-1 C` makes multi-sensor fusion additive, which is what the
//! consensus layer averages over the network.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::linalg;
use crate::rng::NoiseStream;

#[derive(Debug, Error)]
pub enum SensingError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("R must be symmetric positive-definite (Cholesky failed)")]
    NoiseCovarianceNotSpd,
    #[error("cannot average an empty sensor list")]
    EmptySensorList,
}

/// One node's sensor: `y = C x + v` with `v ~ Normal(0, R)`.
#[derive(Debug, Clone)]
pub struct SensorModel {
    c: DMatrix<f64>,
    r: DMatrix<f64>,
    /// Cached `C^T R^-1`.
    gain: DMatrix<f64>,
    /// Cached information matrix `C^T R^-1 C`.
    info: DMatrix<f64>,
    /// Cholesky factor of `R`, for sampling measurement noise.
    noise_chol: DMatrix<f64>,
}

impl SensorModel {
    pub fn new(c: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self, SensingError> {
        let ny = c.nrows();
        if r.nrows() != ny || r.ncols() != ny {
            return Err(SensingError::Dimension(format!(
                "R must be {}x{} to match C with {} rows, got {}x{}",
                ny,
                ny,
                ny,
                r.nrows(),
                r.ncols()
            )));
        }
        let chol: Cholesky<f64, Dyn> =
            Cholesky::new(r.clone()).ok_or(SensingError::NoiseCovarianceNotSpd)?;
        let r_inv = chol.inverse();
        let gain = c.transpose() * r_inv;
        let mut info = &gain * &c;
        // Exact symmetry; the product carries ~1 ulp of asymmetry.
        linalg::symmetrize(&mut info);
        let noise_chol = chol.l();
        Ok(Self { c, r, gain, info, noise_chol })
    }

    pub fn state_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// `C^T R^-1`, cached.
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// Information matrix `C^T R^-1 C`, cached. Symmetric PSD.
    pub fn info_matrix(&self) -> &DMatrix<f64> {
        &self.info
    }

    /// Noisy measurement `y = C x + v`, `v ~ Normal(0, R)` from `stream`.
    pub fn measure(&self, x: &DVector<f64>, stream: &mut NoiseStream) -> DVector<f64> {
        let xi = stream.standard_normal_vector(self.output_dim());
        &self.c * x + &self.noise_chol * xi
    }

    /// Noise-free measurement `y = C x`. Does not consume random draws.
    pub fn measure_noise_free(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    /// Information vector `z = C^T R^-1 y`.
    pub fn info_vector(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.gain * y
    }

    /// Draw from the stationary noise law `Normal(0, R)`.
    pub fn sample_noise(&self, stream: &mut NoiseStream, v: &mut DVector<f64>) {
        v.fill(0.0);
        self.add_noise_innovation(1.0, stream, v);
    }

    /// Advance a stationary Ornstein-Uhlenbeck noise state:
    /// `v <- alpha v + sqrt(1 - alpha^2) L xi` with `L L^T = R`.
    ///
    /// The marginal of `v` stays `Normal(0, R)` for any `alpha` in [0, 1);
    /// `alpha = 0` resamples independently every call. Always consumes one
    /// standard-normal draw per output, so stream positions do not depend
    /// on the correlation time.
    pub fn noise_step(&self, alpha: f64, stream: &mut NoiseStream, v: &mut DVector<f64>) {
        debug_assert!((0.0..1.0).contains(&alpha));
        let beta = (1.0 - alpha * alpha).sqrt();
        if alpha == 0.0 {
            v.fill(0.0);
        } else {
            *v *= alpha;
        }
        self.add_noise_innovation(beta, stream, v);
    }

    fn add_noise_innovation(&self, scale: f64, stream: &mut NoiseStream, v: &mut DVector<f64>) {
        for col in 0..self.output_dim() {
            let xi = scale * stream.standard_normal();
            for out in 0..self.output_dim() {
                v[out] += self.noise_chol[(out, col)] * xi;
            }
        }
    }

    /// Allocation-free [`SensorModel::measure_noise_free`].
    pub fn measure_noise_free_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        y.gemv(1.0, &self.c, x, 0.0);
    }

    /// Allocation-free [`SensorModel::info_vector`].
    pub fn info_vector_into(&self, y: &DVector<f64>, z: &mut DVector<f64>) {
        z.gemv(1.0, &self.gain, y, 0.0);
    }
}

/// Centralized averages `(z_bar, Z_bar)` over all sensors: the quantities the
/// distributed consensus estimates, used as oracle in tests.
pub fn average_information(
    sensors: &[SensorModel],
    samples: &[DVector<f64>],
) -> Result<(DVector<f64>, DMatrix<f64>), SensingError> {
    if sensors.is_empty() || sensors.len() != samples.len() {
        return Err(SensingError::EmptySensorList);
    }
    let n = sensors[0].state_dim();
    let count = sensors.len() as f64;
    let mut z_bar = DVector::zeros(n);
    let mut big_z_bar = DMatrix::zeros(n, n);
    for (s, z) in sensors.iter().zip(samples) {
        if z.len() != n {
            return Err(SensingError::Dimension(format!(
                "information sample has length {}, expected {}",
                z.len(),
                n
            )));
        }
        z_bar += z;
        big_z_bar += s.info_matrix();
    }
    Ok((z_bar / count, big_z_bar / count))
}

/// Smallest singular value of the observability matrix of `(A, C_stacked)`
/// where `C_stacked` vertically stacks every sensor's `C`. Full observability
/// means this is bounded away from zero.
pub fn observability_min_singular_value(a: &DMatrix<f64>, sensors: &[SensorModel]) -> f64 {
    let n = a.nrows();
    let total_rows: usize = sensors.iter().map(|s| s.output_dim()).sum();
    let mut c_stacked = DMatrix::zeros(total_rows, n);
    let mut row = 0;
    for s in sensors {
        c_stacked.view_mut((row, 0), (s.output_dim(), n)).copy_from(s.c());
        row += s.output_dim();
    }
    let mut obs = DMatrix::zeros(total_rows * n, n);
    let mut block = c_stacked.clone();
    for k in 0..n {
        obs.view_mut((k * total_rows, 0), (total_rows, n)).copy_from(&block);
        block = &block * a;
    }
    linalg::singular_values(&obs).last().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamPurpose;
    use approx::assert_abs_diff_eq;

    fn position_sensor(r: f64) -> SensorModel {
        // Measures the first of four state components.
        let c = DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 0.0]);
        SensorModel::new(c, DMatrix::from_element(1, 1, r)).unwrap()
    }

    fn xy_sensor(r: f64) -> SensorModel {
        let c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        SensorModel::new(c, DMatrix::from_diagonal(&DVector::from_element(2, r))).unwrap()
    }

    #[test]
    fn noise_free_projection() {
        let s = position_sensor(0.02);
        let x = DVector::from_vec(vec![2.0, 5.0, -1.0, 0.3]);
        let y = s.measure_noise_free(&x);
        assert_eq!(y.len(), 1);
        assert_eq!(y[0], 2.0);
    }

    #[test]
    fn info_vector_scales_by_inverse_noise() {
        // C = [1 0 0 0], R = 0.02: z = 50 * y on the first component.
        let s = position_sensor(0.02);
        let z = s.info_vector(&DVector::from_element(1, 1.0));
        assert_abs_diff_eq!(z[0], 50.0, epsilon = 1e-12);
        assert_eq!(&z.as_slice()[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn info_vector_of_zero_is_zero() {
        let s = xy_sensor(0.01);
        let z = s.info_vector(&DVector::zeros(2));
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_sensor_passes_measurements_through() {
        let s = SensorModel::new(DMatrix::identity(3, 3), DMatrix::identity(3, 3)).unwrap();
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let z = s.info_vector(&y);
        assert!((z - y).norm() < 1e-14);
    }

    #[test]
    fn info_matrix_of_position_sensor() {
        let s = position_sensor(0.02);
        let z = s.info_matrix();
        assert_abs_diff_eq!(z[(0, 0)], 50.0, epsilon = 1e-12);
        assert!(z.iter().enumerate().all(|(k, &v)| k == 0 || v == 0.0));
    }

    #[test]
    fn info_matrix_of_xy_sensor() {
        let s = xy_sensor(0.01);
        let z = s.info_matrix();
        assert_abs_diff_eq!(z[(0, 0)], 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z[(1, 1)], 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z[(2, 2)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn info_matrix_of_zero_c_is_zero() {
        let s = SensorModel::new(DMatrix::zeros(1, 3), DMatrix::identity(1, 1)).unwrap();
        assert!(s.info_matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn info_matrix_equals_gain_times_c_and_is_symmetric() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.2, 1.0, 0.7]);
        let r = DMatrix::from_row_slice(2, 2, &[0.05, 0.01, 0.01, 0.04]);
        let s = SensorModel::new(c.clone(), r).unwrap();
        let product = s.gain() * &c;
        assert!((s.info_matrix() - product).norm() < 1e-12);
        assert!(linalg::asymmetry(s.info_matrix()) < 1e-12);
    }

    #[test]
    fn construction_rejects_singular_r() {
        let c = DMatrix::identity(2, 2);
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            SensorModel::new(c, r),
            Err(SensingError::NoiseCovarianceNotSpd)
        ));
    }

    #[test]
    fn measurement_noise_covariance_matches_r() {
        let s = xy_sensor(0.01);
        let x = DVector::zeros(4);
        let mut stream = NoiseStream::new(7, StreamPurpose::Measurement(0));
        let draws = 100_000;
        let mut sum = DVector::zeros(2);
        let mut sum_sq = DMatrix::zeros(2, 2);
        for _ in 0..draws {
            let y = s.measure(&x, &mut stream);
            sum += &y;
            sum_sq += &y * y.transpose();
        }
        let mean = sum / draws as f64;
        let cov = sum_sq / draws as f64;
        // Mean within 4 sigma / sqrt(draws); diagonal within 5% of R.
        let mean_tol = 4.0 * 0.1 / (draws as f64).sqrt();
        assert!(mean.norm() < 2.0 * mean_tol, "mean {mean} too large");
        assert!((cov[(0, 0)] - 0.01).abs() / 0.01 < 0.05);
        assert!((cov[(1, 1)] - 0.01).abs() / 0.01 < 0.05);
        assert!(cov[(0, 1)].abs() < 0.05 * 0.01);
    }

    #[test]
    fn ou_noise_keeps_stationary_marginal_and_correlates() {
        let s = xy_sensor(0.01);
        let mut stream = NoiseStream::new(3, StreamPurpose::Measurement(1));
        let alpha = 0.95f64;
        let mut v = DVector::zeros(2);
        s.sample_noise(&mut stream, &mut v);
        let draws = 200_000;
        let mut sum_sq = 0.0;
        let mut lag_prod = 0.0;
        for _ in 0..draws {
            let prev = v[0];
            s.noise_step(alpha, &mut stream, &mut v);
            sum_sq += v[0] * v[0];
            lag_prod += v[0] * prev;
        }
        let var = sum_sq / draws as f64;
        let corr = lag_prod / sum_sq;
        assert!((var - 0.01).abs() / 0.01 < 0.05, "stationary variance {var}");
        assert!((corr - alpha).abs() < 0.02, "lag-1 correlation {corr}");
    }

    #[test]
    fn noise_step_with_zero_alpha_is_an_independent_draw() {
        let s = position_sensor(0.02);
        let mut stream_a = NoiseStream::new(9, StreamPurpose::Measurement(0));
        let mut stream_b = NoiseStream::new(9, StreamPurpose::Measurement(0));
        let mut v = DVector::from_element(1, 123.0);
        s.noise_step(0.0, &mut stream_a, &mut v);
        let mut fresh = DVector::zeros(1);
        s.sample_noise(&mut stream_b, &mut fresh);
        assert_eq!(v[0].to_bits(), fresh[0].to_bits());
    }

    #[test]
    fn averaging_a_single_sensor_returns_it() {
        let s = position_sensor(0.02);
        let z = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let (z_bar, big_z) = average_information(std::slice::from_ref(&s), std::slice::from_ref(&z)).unwrap();
        assert_eq!(z_bar, z);
        assert_eq!(&big_z, s.info_matrix());
    }

    #[test]
    fn averaging_identical_samples_is_identity() {
        let sensors = vec![position_sensor(0.02), position_sensor(0.02)];
        let z = DVector::from_vec(vec![1.0, 0.0, -1.0, 2.0]);
        let (z_bar, _) = average_information(&sensors, &[z.clone(), z.clone()]).unwrap();
        assert!((z_bar - z).norm() < 1e-15);
    }

    #[test]
    fn averaging_rejects_empty_input() {
        assert!(matches!(
            average_information(&[], &[]),
            Err(SensingError::EmptySensorList)
        ));
    }

    /// The five-sensor fixture used by the bundled tracking scenario.
    pub(crate) fn tracking_sensors() -> Vec<SensorModel> {
        let px = |r| position_sensor(r);
        let py = |r: f64| {
            let c = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0]);
            SensorModel::new(c, DMatrix::from_element(1, 1, r)).unwrap()
        };
        vec![px(0.02), xy_sensor(0.01), py(0.01), xy_sensor(0.01), px(0.015)]
    }

    #[test]
    fn average_information_of_tracking_sensor_set() {
        // Entrywise hand sum of the five information matrices:
        // (50 + 100 + 0 + 100 + 1/0.015) / 5 and (0 + 100 + 100 + 100 + 0) / 5.
        let sensors = tracking_sensors();
        let zeros: Vec<DVector<f64>> = (0..5).map(|_| DVector::zeros(4)).collect();
        let (_, big_z) = average_information(&sensors, &zeros).unwrap();
        assert_abs_diff_eq!(big_z[(0, 0)], 63.333_333_333_333_336, epsilon = 1e-10);
        assert_abs_diff_eq!(big_z[(1, 1)], 60.0, epsilon = 1e-10);
        assert_abs_diff_eq!(big_z[(2, 2)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(big_z[(3, 3)], 0.0, epsilon = 1e-15);
    }

    proptest::proptest! {
        /// The information map is linear in the measurement.
        #[test]
        fn info_vector_is_linear(
            y1 in proptest::collection::vec(-100.0f64..100.0, 2),
            y2 in proptest::collection::vec(-100.0f64..100.0, 2),
        ) {
            let s = xy_sensor(0.01);
            let a = DVector::from_vec(y1);
            let b = DVector::from_vec(y2);
            let combined = s.info_vector(&(&a + &b));
            let separate = s.info_vector(&a) + s.info_vector(&b);
            let scale = combined.norm().max(1.0);
            proptest::prop_assert!((combined - separate).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn tracking_sensor_set_is_jointly_observable() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0,
            ],
        );
        let sensors = tracking_sensors();
        let sigma_min = observability_min_singular_value(&a, &sensors);
        assert!(sigma_min > 1e-9, "observability sigma_min = {sigma_min}");
        // A single x-position sensor alone cannot observe the y axis.
        let lone = vec![position_sensor(0.02)];
        assert!(observability_min_singular_value(&a, &lone) < 1e-9);
    }
}
