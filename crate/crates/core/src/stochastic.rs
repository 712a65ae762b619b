//! Q-Wiener increments, reproducible random streams and exponential filters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::spectral::{BasisSpec, SpectralField};

/// Eigenvalues `q_i >= 0` of the trace-class noise covariance `Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct QSpec<T> {
    q: Vec<T>,
}

impl<T: Scalar> QSpec<T> {
    pub fn new(q: Vec<T>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::invalid("Q spectrum is empty"));
        }
        if let Some((i, v)) = q.iter().enumerate().find(|(_, v)| !(**v >= T::zero()) || !v.is_finite()) {
            return Err(Error::invalid(format!("q_{} = {v} must be finite and nonnegative", i + 1)));
        }
        Ok(Self { q })
    }

    /// `q_i = i^{-2}`.
    pub fn decaying(n_modes: usize) -> Self {
        Self { q: (1..=n_modes).map(|i| T::one() / T::from_usize_lossy(i * i)).collect() }
    }

    /// `q_i = value` for `i <= active`, zero beyond.
    pub fn leading(n_modes: usize, active: usize, value: T) -> Self {
        Self { q: (1..=n_modes).map(|i| if i <= active { value } else { T::zero() }).collect() }
    }

    pub fn values(&self) -> &[T] {
        &self.q
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn trace(&self) -> T {
        self.q.iter().copied().sum()
    }

    /// Indices (0-based) of modes that carry noise.
    pub fn active_modes(&self) -> Vec<usize> {
        self.q.iter().enumerate().filter(|(_, &v)| v > T::zero()).map(|(i, _)| i).collect()
    }
}

/// Counter-based random stream keyed by `(seed, stream_id)`.
///
/// Identical keys reproduce identical draws regardless of which worker thread
/// consumes the stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream for a labelled sub-task (replica, purpose, ...).
    pub fn derive(&self, tag: u64) -> Self {
        Self::new(self.seed, splitmix(self.stream_id ^ splitmix(tag.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    pub fn normal<T: Scalar>(&mut self) -> T {
        let z: f64 = self.rng.sample(StandardNormal);
        T::lit(z)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// `coeffs_i = sqrt(q_i dt) xi_i`, one standard normal per retained mode.
pub fn wiener_increment<T: Scalar>(
    q: &QSpec<T>,
    basis: BasisSpec<T>,
    dt: T,
    rng: &mut RngStream,
) -> Result<SpectralField<T>> {
    if !(dt > T::zero()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    if q.len() != basis.n_modes() {
        return Err(Error::invalid("Q spectrum length differs from the basis truncation"));
    }
    let coeffs = q.values().iter().map(|&qi| (qi * dt).sqrt() * rng.normal::<T>()).collect();
    SpectralField::from_coeffs(basis, coeffs)
}

/// State of the exponential memory `Z^{-alpha} phi = int_0^inf e^{-alpha s} phi(t - s) ds`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpFilterState<T> {
    rate: T,
    value: T,
}

impl<T: Scalar> ExpFilterState<T> {
    pub fn new(rate: T) -> Result<Self> {
        Self::with_value(rate, T::zero())
    }

    pub fn with_value(rate: T, value: T) -> Result<Self> {
        if !(rate > T::zero()) || !rate.is_finite() {
            return Err(Error::invalid(format!("filter rate must be positive, got {rate}")));
        }
        Ok(Self { rate, value })
    }

    pub fn rate(&self) -> T {
        self.rate
    }

    pub fn value(&self) -> T {
        self.value
    }

    /// Exact update for input held constant over the step.
    pub fn step_smooth(&mut self, input: T, dt: T) {
        let decay = (-self.rate * dt).exp();
        self.value = decay * self.value + (T::one() - decay) / self.rate * input;
    }

    /// OU update given the exact stochastic-convolution increment over the step.
    pub fn step_noise(&mut self, noise_increment: T, dt: T) {
        self.value = (-self.rate * dt).exp() * self.value + noise_increment;
    }
}

/// One step of an exponential filter; see [`ExpFilterState`].
pub fn filter_step<T: Scalar>(
    state: ExpFilterState<T>,
    input: T,
    dt: T,
    is_white_noise: bool,
    noise_increment: T,
) -> Result<ExpFilterState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let mut next = ExpFilterState::with_value(state.rate, state.value)?;
    if is_white_noise {
        next.step_noise(noise_increment, dt);
    } else {
        next.step_smooth(input, dt);
    }
    Ok(next)
}

/// Standard deviation of `int_0^dt e^{-alpha (dt - s)} dW(s)` for unit white noise.
pub fn ou_increment_std<T: Scalar>(rate: T, dt: T) -> T {
    (-(-T::lit(2.0) * rate * dt).exp_m1() / (T::lit(2.0) * rate)).sqrt()
}

/// `int_0^dt s^p e^{-c s} ds`, by its Taylor series for small `c dt`.
fn moment<T: Scalar>(p: i32, c: T, dt: T) -> T {
    let x = c * dt;
    if x.abs() < T::one() {
        let mut term = T::one();
        let mut sum = T::zero();
        for k in 0..40 {
            sum += term / T::from_usize_lossy(k + p as usize + 1);
            term = term * (-x) / T::from_usize_lossy(k + 1);
        }
        return dt.powi(p + 1) * sum;
    }
    let e = (-x).exp();
    match p {
        0 => (T::one() - e) / c,
        1 => (T::one() - e * (T::one() + x)) / (c * c),
        _ => (T::lit(2.0) - e * (x * x + T::lit(2.0) * x + T::lit(2.0))) / (c * c * c),
    }
}

/// Kernel `s^power e^{-rate s}` of a stochastic integral over one step,
/// with `s` the time remaining to the end of the step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuKernel<T> {
    pub rate: T,
    /// 0 for a filter increment, 1 for the increment of a filter fed by a filter.
    pub power: u8,
}

/// Joint exact sampler for one Wiener channel and several exponential filters
/// it drives: `(dW, I_1, .., I_m)` with `I_k = int e^{-a_k (dt - s)} dW(s)`,
/// or more generally `I_k = int k_k(dt - s) dW(s)` for [`OuKernel`]s.
#[derive(Clone, Debug)]
pub struct OuChannel<T> {
    rates: Vec<T>,
    /// Lower-triangular Cholesky factor of the joint covariance, order `m + 1`.
    chol: Matrix<T>,
}

impl<T: Scalar> OuChannel<T> {
    pub fn new(rates: &[T], dt: T) -> Result<Self> {
        let kernels: Vec<OuKernel<T>> = rates.iter().map(|&rate| OuKernel { rate, power: 0 }).collect();
        Self::with_kernels(&kernels, dt)
    }

    pub fn with_kernels(kernels: &[OuKernel<T>], dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if let Some(k) = kernels.iter().find(|k| !(k.rate > T::zero()) || k.power > 1) {
            return Err(Error::invalid(format!("unsupported filter kernel: rate {}, power {}", k.rate, k.power)));
        }
        let m = kernels.len() + 1;
        let all: Vec<(T, i32)> = std::iter::once((T::zero(), 0))
            .chain(kernels.iter().map(|k| (k.rate, k.power as i32)))
            .collect();
        let mut cov = Matrix::zeros(m);
        for (i, &(a, p)) in all.iter().enumerate() {
            for (j, &(b, q)) in all.iter().enumerate() {
                cov[(i, j)] = moment(p + q, a + b, dt);
            }
        }
        let mut chol = Matrix::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                let mut s = cov[(i, j)];
                for k in 0..j {
                    s -= chol[(i, k)] * chol[(j, k)];
                }
                if i == j {
                    chol[(i, i)] = if s > T::zero() { s.sqrt() } else { T::zero() };
                } else if chol[(j, j)] > T::zero() {
                    chol[(i, j)] = s / chol[(j, j)];
                }
            }
        }
        Ok(Self { rates: kernels.iter().map(|k| k.rate).collect(), chol })
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    /// Draws `dW` and writes the filter increments into `increments`.
    pub fn sample(&self, rng: &mut RngStream, increments: &mut [T]) -> T {
        let m = self.rates.len() + 1;
        let mut xi = [T::zero(); 8];
        let mut xi_vec;
        let xi: &mut [T] = if m <= xi.len() {
            &mut xi[..m]
        } else {
            xi_vec = vec![T::zero(); m];
            &mut xi_vec
        };
        for x in xi.iter_mut() {
            *x = rng.normal();
        }
        let mut dw = T::zero();
        for i in 0..m {
            let mut s = T::zero();
            for j in 0..=i {
                s += self.chol[(i, j)] * xi[j];
            }
            if i == 0 {
                dw = s;
            } else {
                increments[i - 1] = s;
            }
        }
        dw
    }
}
