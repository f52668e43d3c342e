//! Fixed-step explicit integration.

use nalgebra::SVector;

use crate::error::Result;

/// One classical fourth-order Runge-Kutta step of `dx/dt = f(x)`.
///
/// The right-hand side is autonomous over the step; time-varying inputs are
/// expected to be captured by the closure (zero-order hold).
pub fn rk4_step<const N: usize, F>(f: F, x: &SVector<f64, N>, h: f64) -> Result<SVector<f64, N>>
where
    F: Fn(&SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (h / 2.0)))?;
    let k3 = f(&(x + k2 * (h / 2.0)))?;
    let k4 = f(&(x + k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn exponential_decay_matches_taylor_polynomial() {
        // For dx/dt = -x one RK4 step is exactly the 4th-order Taylor polynomial of e^{-h}.
        let h = 0.1;
        let x = SVector::<f64, 1>::new(1.0);
        let next = rk4_step(|x| Ok(-x), &x, h).unwrap();
        let taylor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((next[0] - taylor).abs() < 1e-15);
    }

    #[test]
    fn harmonic_oscillator_conserves_energy_approximately() {
        let mut x = Vector2::new(1.0, 0.0);
        let h = 1e-3;
        for _ in 0..6283 {
            x = rk4_step(|s| Ok(Vector2::new(s[1], -s[0])), &x, h).unwrap();
        }
        assert!((x.norm() - 1.0).abs() < 1e-10);
    }
}
