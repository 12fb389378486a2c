//! Couplings, self-energy and dressed propagator of the giant atom.
//!
//! Momenta are measured from the carrier `k₀` with `v = 1`, so `ω(k) = k`.
//! Every function of a momentum or energy accepts complex arguments and
//! returns the analytic continuation of the real-axis expression.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use wqed_numerics::{
    quad::{adaptive_gk, gauss_laguerre},
    C64,
};

use crate::error::ModelError;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Default floor on `|G⁻¹|` below which the propagator is refused.
pub const POLE_FLOOR: f64 = 1e-14;

/// The two propagation directions of the waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    One,
    Two,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::One, Channel::Two];

    /// Chirality sign `c_μ`.
    pub fn chirality(self) -> f64 {
        match self {
            Channel::One => 1.0,
            Channel::Two => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Channel::One => 0,
            Channel::Two => 1,
        }
    }

    /// 1-based label used in file formats.
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            1 => Some(Channel::One),
            2 => Some(Channel::Two),
            _ => None,
        }
    }
}

/// Physical parameters of the giant atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    gamma: f64,
    gamma1: f64,
    leg_separation: f64,
    carrier_phase: f64,
    detuning: f64,
}

impl ModelParams {
    /// Symmetric legs, `Γ₁ = Γ₂ = γ/2`. The phase is `k₀R` in radians and is
    /// reduced to `[0, 2π)`. `gamma = 0` describes the decoupled emitter.
    pub fn new(gamma: f64, leg_separation: f64, carrier_phase: f64, detuning: f64) -> Result<Self, ModelError> {
        Self::asymmetric(gamma, 0.5, leg_separation, carrier_phase, detuning)
    }

    /// `gamma1_fraction = Γ₁/γ`.
    pub fn asymmetric(
        gamma: f64,
        gamma1_fraction: f64,
        leg_separation: f64,
        carrier_phase: f64,
        detuning: f64,
    ) -> Result<Self, ModelError> {
        let check = |field: &'static str, ok: bool, value: f64| {
            if ok {
                Ok(())
            } else {
                Err(ModelError::InvalidParameter { field, value })
            }
        };
        check("gamma", gamma.is_finite() && gamma >= 0.0, gamma)?;
        check(
            "gamma1_fraction",
            (0.0..=1.0).contains(&gamma1_fraction),
            gamma1_fraction,
        )?;
        check(
            "leg_separation",
            leg_separation.is_finite() && leg_separation >= 0.0,
            leg_separation,
        )?;
        check("carrier_phase", carrier_phase.is_finite(), carrier_phase)?;
        check("detuning", detuning.is_finite(), detuning)?;
        Ok(Self {
            gamma,
            gamma1: gamma * gamma1_fraction,
            leg_separation,
            carrier_phase: reduce_phase(carrier_phase),
            detuning,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma - self.gamma1
    }

    pub fn leg_separation(&self) -> f64 {
        self.leg_separation
    }

    /// `k₀R mod 2π`.
    pub fn carrier_phase(&self) -> f64 {
        self.carrier_phase
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    pub fn num_channels(&self) -> usize {
        2
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self, ModelError> {
        let frac = if self.gamma > 0.0 {
            self.gamma1 / self.gamma
        } else {
            0.5
        };
        Self::asymmetric(gamma, frac, self.leg_separation, self.carrier_phase, self.detuning)
    }

    /// `2√(Γ₁Γ₂)`, the strength of the delayed self-interaction.
    pub fn feedback_strength(&self) -> f64 {
        2.0 * (self.gamma1 * self.gamma2()).sqrt()
    }

    /// `e^{i(z + k₀)R}` built from the stored phase.
    pub fn feedback_phase(&self, z: C64) -> C64 {
        C64::from_polar(1.0, self.carrier_phase) * (I * z * self.leg_separation).exp()
    }
}

fn reduce_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(2.0 * PI);
    if r >= 2.0 * PI {
        0.0
    } else {
        r
    }
}

/// A complex energy with an explicit retarded regulator `η ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEnergy {
    pub value: C64,
    pub eta: f64,
}

impl ComplexEnergy {
    pub fn new(value: C64, eta: f64) -> Result<Self, ModelError> {
        if !(eta >= 0.0) {
            return Err(ModelError::InvalidParameter {
                field: "eta",
                value: eta,
            });
        }
        Ok(Self { value, eta })
    }

    pub fn real(value: f64) -> Self {
        Self {
            value: C64::new(value, 0.0),
            eta: 0.0,
        }
    }

    /// `value + iη`.
    pub fn regulated(&self) -> C64 {
        self.value + I * self.eta
    }
}

impl From<f64> for ComplexEnergy {
    fn from(value: f64) -> Self {
        Self::real(value)
    }
}

impl From<C64> for ComplexEnergy {
    fn from(value: C64) -> Self {
        Self { value, eta: 0.0 }
    }
}

/// `g_μ(k) = √(Γ₁/2π) e^{−ic(k+k₀)R/2} + √(Γ₂/2π) e^{+ic(k+k₀)R/2}`.
pub fn coupling(p: &ModelParams, mu: Channel, k: C64) -> C64 {
    let half = half_phase(p, mu, k);
    let a = (p.gamma1 / (2.0 * PI)).sqrt();
    let b = (p.gamma2() / (2.0 * PI)).sqrt();
    a * (-half).exp() + b * half.exp()
}

/// Analytic continuation of `conj(g_μ(k̄))`; equals `g_μ(k)*` for real `k`.
pub fn coupling_dual(p: &ModelParams, mu: Channel, k: C64) -> C64 {
    let half = half_phase(p, mu, k);
    let a = (p.gamma1 / (2.0 * PI)).sqrt();
    let b = (p.gamma2() / (2.0 * PI)).sqrt();
    a * half.exp() + b * (-half).exp()
}

/// `i c_μ (k + k₀) R / 2`, with `k₀R` taken from the stored phase.
fn half_phase(p: &ModelParams, mu: Channel, k: C64) -> C64 {
    I * mu.chirality() * 0.5 * (k * p.leg_separation + p.carrier_phase)
}

/// Kernel density `ρ(q) = Σ_μ g_μ(q) g_μ#(q) = [γ + 2√(Γ₁Γ₂) cos((q+k₀)R)]/π`.
pub fn spectral_weight(p: &ModelParams, q: C64) -> C64 {
    let phase = q * p.leg_separation + p.carrier_phase;
    (p.gamma + p.feedback_strength() * phase.cos()) / PI
}

/// `Σ(z) = −iγ − 2i√(Γ₁Γ₂) e^{i(z+k₀)R}`, analytic in `z`.
pub fn self_energy_closed(p: &ModelParams, z: C64) -> C64 {
    -I * (p.gamma + p.feedback_strength() * p.feedback_phase(z))
}

/// `G⁻¹(z) = z + Δ − Σ(z)`.
pub fn inverse_propagator(p: &ModelParams, z: C64) -> C64 {
    z + p.detuning + I * (p.gamma + p.feedback_strength() * p.feedback_phase(z))
}

/// `d G⁻¹/dz`.
pub fn inverse_propagator_derivative(p: &ModelParams, z: C64) -> C64 {
    C64::new(1.0, 0.0) - p.feedback_strength() * p.leg_separation * p.feedback_phase(z)
}

/// `G(z)` without the proximity check; used inside kernels where the
/// argument is known to stay off the resonances.
pub fn propagator(p: &ModelParams, z: C64) -> C64 {
    inverse_propagator(p, z).inv()
}

/// `dG/dz = −G² dG⁻¹/dz`.
pub fn propagator_derivative(p: &ModelParams, z: C64) -> C64 {
    let g = propagator(p, z);
    -g * g * inverse_propagator_derivative(p, z)
}

/// How the self-energy is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelfEnergyMethod {
    Closed,
    /// Channel-sum integral `Σ_μ ∫dq |g_μ(q)|²/(ε − q + iη)` to the given
    /// absolute tolerance.
    Numeric {
        tolerance: f64,
    },
}

/// Self-energy at `eps`.
///
/// The closed form is evaluated at `eps.value` (η is the retarded limit of
/// the analytic function). The numeric mode integrates at `value + iη` and,
/// for `η > 0`, extrapolates `η → 0`.
pub fn self_energy(p: &ModelParams, eps: ComplexEnergy, method: SelfEnergyMethod) -> Result<C64, ModelError> {
    match method {
        SelfEnergyMethod::Closed => {
            if eps.value.im < 0.0 {
                return Err(ModelError::NotRetarded { im: eps.value.im });
            }
            Ok(self_energy_closed(p, eps.value))
        }
        SelfEnergyMethod::Numeric { tolerance } => numeric_self_energy(p, eps, tolerance),
    }
}

/// `G(ε) = 1/(ε + Δ − Σ(ε))`, refusing arguments at a resonance.
pub fn dressed_green(p: &ModelParams, eps: ComplexEnergy) -> Result<C64, ModelError> {
    dressed_green_with_floor(p, eps, POLE_FLOOR)
}

pub fn dressed_green_with_floor(p: &ModelParams, eps: ComplexEnergy, floor: f64) -> Result<C64, ModelError> {
    let z = eps.regulated();
    let gi = inverse_propagator(p, z);
    if gi.norm() < floor {
        return Err(ModelError::PoleProximity {
            re: z.re,
            im: z.im,
            magnitude: gi.norm(),
        });
    }
    Ok(gi.inv())
}

fn numeric_self_energy(p: &ModelParams, eps: ComplexEnergy, tol: f64) -> Result<C64, ModelError> {
    if eps.value.im < 0.0 {
        return Err(ModelError::NotRetarded { im: eps.value.im });
    }
    let coarse = regulated_integral(p, eps, tol)?;
    let fine = regulated_integral(p, eps, tol * 1e-2)?;
    let gap = (coarse - fine).norm();
    if gap > 10.0 * tol.max(1e-13) {
        return Err(ModelError::NonConvergence {
            what: "numeric self-energy",
            gap,
        });
    }
    Ok(fine)
}

/// Richardson extrapolation in η of the channel-sum integral.
fn regulated_integral(p: &ModelParams, eps: ComplexEnergy, tol: f64) -> Result<C64, ModelError> {
    if eps.eta == 0.0 {
        return channel_sum_integral(p, eps.value, tol);
    }
    // Halving η four times; Richardson steps remove η, η² and η³.
    let mut row = (0..4)
        .map(|j| channel_sum_integral(p, eps.value + I * (eps.eta / f64::from(1 << j)), tol))
        .collect::<Result<Vec<_>, _>>()?;
    for order in 1..4 {
        let f = f64::from(1 << order);
        row = row.windows(2).map(|w| (w[1] * f - w[0]) / (f - 1.0)).collect();
    }
    Ok(row[0])
}

/// `∫ dq ρ(q)/(z − q)` for `Im z ≥ 0`, with `ρ` summed from the channel
/// couplings. The central window uses pole subtraction at `Re z`; the
/// oscillating tails are rotated off the real axis.
fn channel_sum_integral(p: &ModelParams, z: C64, tol: f64) -> Result<C64, ModelError> {
    let rho = |q: f64| -> f64 {
        Channel::ALL
            .iter()
            .map(|&mu| coupling(p, mu, C64::new(q, 0.0)).norm_sqr())
            .sum()
    };
    let x0 = z.re;
    let l = 50.0f64.max(4.0 * x0.abs() + 20.0);
    let r0 = rho(x0);
    let subtracted = |q: f64| (rho(q) - r0) / (z - q);
    let mut central = C64::new(0.0, 0.0);
    // Split at the subtraction point so the removable point is an endpoint.
    for (a, b) in [(-l, x0), (x0, l)] {
        central += adaptive_gk(subtracted, a, b, tol * 0.1, 0.0, 20_000).map_err(|e| ModelError::NonConvergence {
            what: "self-energy window quadrature",
            gap: match e {
                wqed_numerics::NumericsError::NoConvergence { last_change, .. } => last_change,
                _ => f64::NAN,
            },
        })?;
    }
    let zp = C64::new(z.re, if z.im > 0.0 { z.im } else { 0.0 });
    let log_window = (zp + l).ln() - (zp - l).ln();
    central += r0 * log_window;

    // Beyond the window ρ(q) = ρ̄ + (B/2)(e^{i(qR+φ)} + e^{−i(qR+φ)}).
    let rho_bar = p.gamma / PI;
    let b = p.feedback_strength() / PI;
    let r = p.leg_separation;
    let phi = p.carrier_phase;
    // Constant part over |q| > L: total −iπ minus the window.
    let mut tails = rho_bar * (C64::new(0.0, -PI) - log_window);
    if r == 0.0 {
        // Coincident legs are the limit R → 0⁺ at fixed k₀R: the oscillation
        // escapes to |q| → ∞ and leaves the shift π B sin(k₀R) behind.
        tails += b * phi.cos() * (C64::new(0.0, -PI) - log_window) + b * PI * phi.sin();
    } else {
        let (xs, ws) = gauss_laguerre(48);
        for sign in [1.0f64, -1.0] {
            // e^{sign·i(qR+φ)} decays along q = ±L + sign·i t.
            for end in [1.0f64, -1.0] {
                let start = end * l;
                let dir = C64::new(0.0, sign);
                let mut acc = C64::new(0.0, 0.0);
                for (&x, &w) in xs.iter().zip(&ws) {
                    let t = x / r;
                    let q = start + dir * t;
                    // e^{sign i (qR + φ)} = e^{sign i(LR+φ)} e^{-t R}
                    let osc = C64::from_polar(1.0, sign * (start * r + phi));
                    acc += osc * w / (z - q) * dir / r;
                }
                // ∫_{L}^{∞}: ray from +L outward; ∫_{-∞}^{-L}: minus the ray from −L.
                tails += 0.5 * b * acc * end;
            }
        }
    }
    Ok(central + tails)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_coupling_value() {
        let p = ModelParams::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let g = coupling(&p, Channel::One, C64::new(0.7, 0.0));
        assert!((g - C64::new((1.0 / PI).sqrt(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn destructive_interference_node() {
        let p = ModelParams::new(1.0, 2.0, 0.0, 0.0).unwrap();
        let g = coupling(&p, Channel::One, C64::new(PI / 2.0, 0.0));
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn phase_is_reduced() {
        let p = ModelParams::new(1.0, 5.0, 2.25 * PI, 0.0).unwrap();
        assert!((p.carrier_phase() - 0.25 * PI).abs() < 1e-14);
    }

    #[test]
    fn invalid_parameters_are_named() {
        let e = ModelParams::new(-1.0, 1.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(e, ModelError::InvalidParameter { field: "gamma", .. }));
    }

    #[test]
    fn self_energy_special_values() {
        let p = ModelParams::new(1.0, 5.0, 0.0, 0.0).unwrap();
        let s = self_energy(&p, 0.0.into(), SelfEnergyMethod::Closed).unwrap();
        assert!((s - C64::new(0.0, -2.0)).norm() < 1e-15);
        let off = ModelParams::new(0.0, 5.0, 1.0, 0.0).unwrap();
        assert_eq!(self_energy_closed(&off, C64::new(0.4, 0.1)), C64::new(0.0, 0.0));
        let g = dressed_green(&p, 0.0.into()).unwrap();
        assert!((g - C64::new(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn spectral_weight_is_channel_sum() {
        let p = ModelParams::asymmetric(1.3, 0.3, 2.0, 0.7, 0.1).unwrap();
        for q in [C64::new(0.2, 0.0), C64::new(-1.1, -0.4), C64::new(3.0, 0.2)] {
            let sum: C64 = Channel::ALL
                .iter()
                .map(|&mu| coupling(&p, mu, q) * coupling_dual(&p, mu, q))
                .sum();
            assert!((sum - spectral_weight(&p, q)).norm() < 1e-14);
        }
    }

    #[test]
    fn numeric_self_energy_matches_closed_form() {
        let p = ModelParams::new(1.0, 5.0, PI / 4.0, 0.0).unwrap();
        let closed = self_energy(&p, 0.0.into(), SelfEnergyMethod::Closed).unwrap();
        assert!((closed - C64::new(0.5f64.sqrt(), -1.0 - 0.5f64.sqrt())).norm() < 1e-14);
        let numeric = self_energy(&p, 0.0.into(), SelfEnergyMethod::Numeric { tolerance: 1e-9 }).unwrap();
        assert!((closed - numeric).norm() < 1e-6 * closed.norm(), "{numeric}");
    }
}
