//! Simulation-based estimates of the reduction error.
//!
//! Both are independent of the Lyapunov route in [`crate::model`]:
//! [`impulse_response_error`] integrates the squared output error of the
//! impulse responses, [`white_noise_error`] averages it along a trajectory
//! driven by sampled white noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, Matrix};
use crate::model::{build_error_system, ErrorSystem, ReducedModel, StateSpaceModel};

/// Slowest mode must have decayed below this fraction at the horizon.
pub const HORIZON_DECAY: f64 = 1e-6;

/// Time-grid choice for the two simulation routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationGrid {
    pub horizon: f64,
    pub dt: f64,
}

impl SimulationGrid {
    /// Impulse grid: decay to 1e-8 at the horizon, `dt = 0.1 / spectral radius`.
    pub fn impulse(err: &ErrorSystem) -> Result<Self> {
        let spec = eigenvalues(&err.a)?;
        let slow = -spec.max_real_part();
        if slow <= 0.0 {
            return Err(Error::UnstableErrorSystem { max_real_part: -slow });
        }
        Ok(Self { horizon: (1e8f64).ln() / slow, dt: 0.1 / spec.spectral_radius() })
    }

    /// White-noise grid: `4000` slowest time constants sampled every
    /// `max(0.2 / spectral radius, 0.05 / slowest rate)`.
    ///
    /// The discretization is exact for any `dt`; the step only sets how
    /// densely the trajectory is sampled.
    pub fn white_noise(err: &ErrorSystem) -> Result<Self> {
        let spec = eigenvalues(&err.a)?;
        let slow = -spec.max_real_part();
        if slow <= 0.0 {
            return Err(Error::UnstableErrorSystem { max_real_part: -slow });
        }
        Ok(Self { horizon: 4000.0 / slow, dt: (0.2 / spec.spectral_radius()).max(0.05 / slow) })
    }
}

fn check_grid(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidConfig(format!("need 0 < dt and 0 < horizon, got dt={dt}, horizon={horizon}")));
    }
    let steps = (horizon / dt).ceil();
    if steps > 1e9 {
        return Err(Error::InvalidConfig(format!("{steps} time steps requested")));
    }
    Ok(steps as usize)
}

/// `Σᵢ ∫₀^T ‖δⁱ(t)‖² dt` for unit impulses on each input channel.
///
/// Samples are propagated exactly with `exp(Ā dt)` and integrated with
/// composite Simpson's rule, so the only error is quadrature and truncation.
pub fn impulse_response_error(full: &StateSpaceModel, reduced: &ReducedModel, horizon: f64, dt: f64) -> Result<f64> {
    let err = build_error_system(full, reduced)?;
    impulse_response_error_system(&err, horizon, dt)
}

pub fn impulse_response_error_system(err: &ErrorSystem, horizon: f64, dt: f64) -> Result<f64> {
    let mut steps = check_grid(horizon, dt)?;
    let spec = eigenvalues(&err.a)?;
    let max_re = spec.max_real_part();
    if max_re >= 0.0 {
        return Err(Error::UnstableErrorSystem { max_real_part: max_re });
    }
    if steps % 2 == 1 {
        steps += 1;
    }
    let remaining = (max_re * steps as f64 * dt).exp();
    if remaining > HORIZON_DECAY {
        return Err(Error::HorizonTooShort { remaining });
    }
    let step = (&err.a * dt).exp();
    let mut x = err.b.clone();
    let mut next = x.clone();
    let mut y = Matrix::zeros(err.c.nrows(), x.ncols());
    let mut sum = 0.0;
    for k in 0..=steps {
        y.gemm(1.0, &err.c, &x, 0.0);
        let f = y.norm_squared();
        let w = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * f;
        next.gemm(1.0, &step, &x, 0.0);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(sum * dt / 3.0)
}

/// Time-averaged `‖δ(t)‖²` over the second half of a trajectory driven by
/// unit-intensity white noise.
///
/// The state is sampled every `dt` with the exact discrete noise covariance
/// `Q_d = ∫₀^dt e^{Āτ} B̄B̄ᵀ e^{Āᵀτ} dτ`, so the samples have the stationary
/// statistics of the continuous process and only sampling error remains.
pub fn white_noise_error(
    full: &StateSpaceModel,
    reduced: &ReducedModel,
    seed: u64,
    duration: f64,
    dt: f64,
) -> Result<f64> {
    let err = build_error_system(full, reduced)?;
    white_noise_error_system(&err, seed, duration, dt)
}

/// `(e^{Ā dt}, L)` with `L Lᵀ = Q_d`.
///
/// `Q_d` comes from `exp([[-Ā, B̄B̄ᵀ], [0, Āᵀ]] h) = [[·, F₁₂], [0, F₂₂]]`,
/// `Q_d(h) = F₂₂ᵀ F₁₂`, on a substep `h = dt / 2^k` with `‖Ā‖ h ≤ 1/2`, then
/// doubled back up with `Q_d(2h) = Q_d(h) + e^{Āh} Q_d(h) e^{Āᵀh}`.
fn noise_discretization(err: &ErrorSystem, dt: f64) -> (Matrix, Matrix) {
    let nx = err.a.nrows();
    let norm = err.a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut doublings = 0;
    let mut h = dt;
    while norm * h > 0.5 && doublings < 60 {
        h *= 0.5;
        doublings += 1;
    }
    let mut aug = Matrix::zeros(2 * nx, 2 * nx);
    aug.view_mut((0, 0), (nx, nx)).copy_from(&(-&err.a));
    aug.view_mut((0, nx), (nx, nx)).copy_from(&(&err.b * err.b.transpose()));
    aug.view_mut((nx, nx), (nx, nx)).copy_from(&err.a.transpose());
    let f = (aug * h).exp();
    let f12 = f.view((0, nx), (nx, nx)).clone_owned();
    let mut ad = f.view((nx, nx), (nx, nx)).transpose();
    let mut qd = &ad * f12;
    for _ in 0..doublings {
        qd = &qd + &ad * &qd * ad.transpose();
        ad = &ad * &ad;
    }
    let qd = (&qd + qd.transpose()) * 0.5;
    // Q_d is only semidefinite; a symmetric square root tolerates that.
    let eig = qd.symmetric_eigen();
    let mut factor = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    (ad, factor)
}

pub fn white_noise_error_system(err: &ErrorSystem, seed: u64, duration: f64, dt: f64) -> Result<f64> {
    let steps = check_grid(duration, dt)?;
    if steps < 2 {
        return Err(Error::InvalidConfig("white-noise run needs at least two steps".into()));
    }
    let nx = err.a.nrows();
    let (ad, noise) = noise_discretization(err, dt);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = nalgebra::DVector::<f64>::zeros(nx);
    let mut next = x.clone();
    let mut z = nalgebra::DVector::<f64>::zeros(nx);
    let mut y = nalgebra::DVector::<f64>::zeros(err.c.nrows());
    let start = steps / 2;
    let mut acc = 0.0;
    for k in 0..steps {
        if k >= start {
            y.gemv(1.0, &err.c, &x, 0.0);
            acc += y.norm_squared();
        }
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        next.gemv(1.0, &ad, &x, 0.0);
        next.gemv(1.0, &noise, &z, 1.0);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(acc / (steps - start) as f64)
}
