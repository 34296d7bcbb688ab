//! Laboratory units versus the dimensionless pendulum.
//!
//! Everything outside this module works with [`ModelParams`]; SI quantities
//! only appear here. The lattice of spacing `d` defines the velocity
//! `v_L = h/(M d)` and energy `E_L = M v_L^2 / 2`, the modulation defines the
//! time unit `1/omega`, and the two combine into
//!
//! * `hbar_eff = 4 pi^2 hbar / (M omega d^2) = 2 E_L / (hbar omega)`
//! * `gamma = (E_L / hbar omega)^2 * s` with `s = U_0 / E_L`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant.
pub const HBAR: f64 = PLANCK / (2.0 * PI);

/// Mass of a rubidium-87 atom as used throughout the examples.
pub const RB87_MASS_KG: f64 = 1.45e-25;
/// Lattice spacing produced by counter-propagating 1064 nm beams.
pub const LATTICE_SPACING_532NM: f64 = 532e-9;

/// Depth coefficient of `s = C * P[W] / (w0[um])^2` for Rb-87 in a 532 nm lattice.
pub const DEPTH_COEFFICIENT: f64 = 1.03e6;

/// Laboratory description of the atoms, the lattice and the modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalSetup {
    /// kg
    pub atom_mass: f64,
    /// m
    pub lattice_spacing: f64,
    /// rad/s
    pub modulation_angular_frequency: f64,
    /// J
    pub lattice_depth: f64,
    /// W
    pub laser_power: f64,
    /// m
    pub beam_waist: f64,
    /// m/s
    pub velocity_width: f64,
}

/// JSON form of a [`PhysicalSetup`]; the lattice depth is derived from the
/// laser power and waist.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SetupDescriptor {
    pub mass_kg: f64,
    pub lattice_spacing_m: f64,
    pub omega_rad_s: f64,
    pub power_w: f64,
    pub waist_m: f64,
    pub velocity_width_m_s: f64,
}

impl PhysicalSetup {
    /// Builds a validated setup. Mass, spacing, frequency and waist must be
    /// strictly positive; depth, power and velocity width may be zero.
    pub fn new(
        atom_mass: f64,
        lattice_spacing: f64,
        modulation_angular_frequency: f64,
        lattice_depth: f64,
        laser_power: f64,
        beam_waist: f64,
        velocity_width: f64,
    ) -> Result<Self> {
        let setup = Self {
            atom_mass,
            lattice_spacing,
            modulation_angular_frequency,
            lattice_depth,
            laser_power,
            beam_waist,
            velocity_width,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("atom_mass", self.atom_mass),
            ("lattice_spacing", self.lattice_spacing),
            ("modulation_angular_frequency", self.modulation_angular_frequency),
            ("beam_waist", self.beam_waist),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ParameterDomain(format!("{name} must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("lattice_depth", self.lattice_depth),
            ("laser_power", self.laser_power),
            ("velocity_width", self.velocity_width),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::ParameterDomain(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Builds a setup from its JSON descriptor, deriving `U_0` from the laser.
    pub fn from_descriptor(d: &SetupDescriptor) -> Result<Self> {
        let s = lattice_depth_from_laser(d.power_w, d.waist_m)?;
        let e_l = lattice_energy(d.mass_kg, d.lattice_spacing_m);
        Self::new(d.mass_kg, d.lattice_spacing_m, d.omega_rad_s, s * e_l, d.power_w, d.waist_m, d.velocity_width_m_s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: SetupDescriptor = serde_json::from_str(text)?;
        Self::from_descriptor(&d)
    }

    pub fn descriptor(&self) -> SetupDescriptor {
        SetupDescriptor {
            mass_kg: self.atom_mass,
            lattice_spacing_m: self.lattice_spacing,
            omega_rad_s: self.modulation_angular_frequency,
            power_w: self.laser_power,
            waist_m: self.beam_waist,
            velocity_width_m_s: self.velocity_width,
        }
    }

    /// `v_L = h / (M d)`.
    pub fn lattice_velocity(&self) -> f64 {
        lattice_velocity(self.atom_mass, self.lattice_spacing)
    }

    /// `E_L = M v_L^2 / 2`.
    pub fn lattice_energy(&self) -> f64 {
        lattice_energy(self.atom_mass, self.lattice_spacing)
    }

    /// `s = U_0 / E_L`.
    pub fn depth_ratio(&self) -> f64 {
        self.lattice_depth / self.lattice_energy()
    }
}

pub fn lattice_velocity(mass: f64, spacing: f64) -> f64 {
    PLANCK / (mass * spacing)
}

pub fn lattice_energy(mass: f64, spacing: f64) -> f64 {
    let v = lattice_velocity(mass, spacing);
    0.5 * mass * v * v
}

/// Dimensionless point of the modulated pendulum
/// `H = p^2/2 - gamma (1 + epsilon cos t) cos x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: f64,
    pub epsilon: f64,
    pub hbar_eff: f64,
    pub beta: f64,
}

impl ModelParams {
    pub fn new(gamma: f64, epsilon: f64, hbar_eff: f64, beta: f64) -> Result<Self> {
        let p = Self { gamma, epsilon, hbar_eff, beta: reduce_quasimomentum(beta) };
        p.validate()?;
        Ok(p)
    }

    /// Classical point only; `hbar_eff` is set to a placeholder of 1.
    pub fn classical(gamma: f64, epsilon: f64) -> Result<Self> {
        Self::new(gamma, epsilon, 1.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::ParameterDomain(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::ParameterDomain(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(self.hbar_eff.is_finite() && self.hbar_eff > 0.0) {
            return Err(Error::ParameterDomain(format!("hbar_eff must be > 0, got {}", self.hbar_eff)));
        }
        if !self.beta.is_finite() {
            return Err(Error::ParameterDomain("beta must be finite".into()));
        }
        Ok(())
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = reduce_quasimomentum(beta);
        self
    }

    pub fn with_hbar(mut self, hbar_eff: f64) -> Self {
        self.hbar_eff = hbar_eff;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    /// Modulated depth `gamma (1 + epsilon cos t)`.
    #[inline]
    pub fn depth_at(&self, t: f64) -> f64 {
        self.gamma * (1.0 + self.epsilon * t.cos())
    }
}

/// Reduces a quasimomentum into the first Brillouin zone `[-1/2, 1/2)`.
pub fn reduce_quasimomentum(beta: f64) -> f64 {
    let r = beta - (beta + 0.5).floor();
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// Dimensionless parameters of a setup, with `beta = 0`.
pub fn derive_dimensionless(setup: &PhysicalSetup) -> Result<ModelParams> {
    setup.validate()?;
    let hbar_omega = HBAR * setup.modulation_angular_frequency;
    let e_l = setup.lattice_energy();
    let hbar_eff = 2.0 * e_l / hbar_omega;
    let ratio = e_l / hbar_omega;
    let gamma = ratio * ratio * setup.depth_ratio();
    if !(hbar_eff.is_finite() && gamma.is_finite()) {
        return Err(Error::ParameterDomain("derived parameters are not finite".into()));
    }
    // epsilon is a property of the modulation, not of the setup
    ModelParams::new(gamma, 0.0, hbar_eff, 0.0)
}

/// `hbar_eff = 4 pi^2 hbar / (M omega d^2)`.
pub fn hbar_eff_for_omega(mass: f64, spacing: f64, omega: f64) -> Result<f64> {
    if !(mass > 0.0 && spacing > 0.0 && omega > 0.0) {
        return Err(Error::ParameterDomain("mass, spacing and omega must be > 0".into()));
    }
    Ok(4.0 * PI * PI * HBAR / (mass * omega * spacing * spacing))
}

/// Modulation angular frequency that produces the requested `hbar_eff`.
pub fn omega_for_hbar_eff(mass: f64, spacing: f64, hbar_eff: f64) -> Result<f64> {
    if !(mass > 0.0 && spacing > 0.0 && hbar_eff > 0.0) {
        return Err(Error::ParameterDomain("mass, spacing and hbar_eff must be > 0".into()));
    }
    Ok(4.0 * PI * PI * HBAR / (mass * hbar_eff * spacing * spacing))
}

/// Lattice depth `s = U_0/E_L` reached with a Gaussian beam of the given
/// power (W) and waist (m).
pub fn lattice_depth_from_laser(power: f64, waist: f64) -> Result<f64> {
    if !(power.is_finite() && power >= 0.0) {
        return Err(Error::ParameterDomain(format!("power must be >= 0, got {power}")));
    }
    if !(waist.is_finite() && waist > 0.0) {
        return Err(Error::ParameterDomain(format!("waist must be > 0, got {waist}")));
    }
    let waist_um = waist * 1e6;
    Ok(DEPTH_COEFFICIENT * power / (waist_um * waist_um))
}

/// Width of the quasimomentum distribution, `M d Delta v / h`.
pub fn quasimomentum_width(setup: &PhysicalSetup) -> f64 {
    setup.atom_mass * setup.lattice_spacing * setup.velocity_width / PLANCK
}

/// Harmonic approximation of a deep lattice well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadingEstimate {
    /// `a_0 / d`
    pub ground_width_ratio: f64,
    /// `omega_h` in rad/s
    pub trap_frequency: f64,
    /// `Delta beta`
    pub quasimomentum_width: f64,
}

/// `a_0/d = s^(-1/4) / sqrt(2 pi^2)`.
pub fn ground_width_ratio(s: f64) -> Result<f64> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::ParameterDomain(format!("lattice depth s must be > 0, got {s}")));
    }
    Ok(s.powf(-0.25) / (2.0 * PI * PI).sqrt())
}

pub fn harmonic_loading_estimate(setup: &PhysicalSetup) -> Result<LoadingEstimate> {
    setup.validate()?;
    let s = setup.depth_ratio();
    let ground_width_ratio = ground_width_ratio(s)?;
    let d = setup.lattice_spacing;
    let trap_frequency = (2.0 * PI * PI * setup.lattice_depth / (setup.atom_mass * d * d)).sqrt();
    Ok(LoadingEstimate { ground_width_ratio, trap_frequency, quasimomentum_width: quasimomentum_width(setup) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rb_setup(omega: f64, power: f64, dv: f64) -> PhysicalSetup {
        PhysicalSetup::from_descriptor(&SetupDescriptor {
            mass_kg: RB87_MASS_KG,
            lattice_spacing_m: LATTICE_SPACING_532NM,
            omega_rad_s: omega,
            power_w: power,
            waist_m: 100e-6,
            velocity_width_m_s: dv,
        })
        .unwrap()
    }

    #[test]
    fn inverse_solve_for_omega() {
        let omega = omega_for_hbar_eff(RB87_MASS_KG, LATTICE_SPACING_532NM, 0.1).unwrap();
        assert!((omega / 1.015e6 - 1.0).abs() < 1e-3, "omega = {omega}");
        let setup = rb_setup(omega, 0.1, 0.0);
        let p = derive_dimensionless(&setup).unwrap();
        assert!((p.hbar_eff - 0.1).abs() < 1e-12);
        let back = omega_for_hbar_eff(RB87_MASS_KG, LATTICE_SPACING_532NM, p.hbar_eff).unwrap();
        assert!((back / omega - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_omega_halves_hbar() {
        let a = derive_dimensionless(&rb_setup(1e6, 0.2, 0.0)).unwrap();
        let b = derive_dimensionless(&rb_setup(2e6, 0.2, 0.0)).unwrap();
        assert!((a.hbar_eff / b.hbar_eff - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_depth_gives_zero_gamma() {
        let p = derive_dimensionless(&rb_setup(1e6, 0.0, 0.0)).unwrap();
        assert_eq!(p.gamma, 0.0);
    }

    #[test]
    fn gamma_matches_hbar_relation() {
        let setup = rb_setup(1.3e6, 0.3, 0.0);
        let p = derive_dimensionless(&setup).unwrap();
        let expected = (p.hbar_eff / 2.0).powi(2) * setup.depth_ratio();
        assert!((p.gamma / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laser_depth() {
        assert!((lattice_depth_from_laser(1.0, 100e-6).unwrap() - 103.0).abs() < 1e-9);
        assert_eq!(lattice_depth_from_laser(0.0, 100e-6).unwrap(), 0.0);
        assert!(lattice_depth_from_laser(1.0, 0.0).is_err());
        // 10 <= s <= 50 is reachable with ordinary fibered lasers
        let s_lo = lattice_depth_from_laser(0.1, 100e-6).unwrap();
        let s_hi = lattice_depth_from_laser(0.5, 100e-6).unwrap();
        assert!((10.0..=11.0).contains(&s_lo) && (50.0..=52.0).contains(&s_hi));
    }

    #[test]
    fn quasimomentum_width_from_velocity() {
        let setup = rb_setup(1e6, 0.1, 170e-6);
        let db = quasimomentum_width(&setup);
        assert!((db - 0.02).abs() < 0.001, "{db}");
        let wide = rb_setup(1e6, 0.1, 2.5 * 170e-6);
        assert!((quasimomentum_width(&wide) - 0.05).abs() < 0.002);
        assert_eq!(quasimomentum_width(&rb_setup(1e6, 0.1, 0.0)), 0.0);
    }

    #[test]
    fn loading_ratio() {
        assert!((ground_width_ratio(100.0).unwrap() - 0.0712).abs() < 1e-4);
        assert!((ground_width_ratio(1.0).unwrap() - 1.0 / (2.0 * PI * PI).sqrt()).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for s in [1.0, 10.0, 100.0, 1e4, 1e8] {
            let r = ground_width_ratio(s).unwrap();
            assert!(r < last);
            last = r;
        }
        assert!(last < 1e-2);
        assert!(ground_width_ratio(0.0).is_err());
        let est = harmonic_loading_estimate(&rb_setup(1e6, 1.0, 170e-6)).unwrap();
        let s: f64 = 103.0;
        assert!((est.ground_width_ratio - s.powf(-0.25) / (2.0 * PI * PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn trap_frequency_matches_ground_width() {
        // a_0 = sqrt(hbar / (M omega_h)) must agree with the closed form ratio
        let setup = rb_setup(1e6, 0.4, 0.0);
        let est = harmonic_loading_estimate(&setup).unwrap();
        let a0 = (HBAR / (setup.atom_mass * est.trap_frequency)).sqrt();
        assert!((a0 / setup.lattice_spacing / est.ground_width_ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scales_are_consistent() {
        let setup = rb_setup(1e6, 0.1, 0.0);
        let v = setup.lattice_velocity();
        assert!((setup.lattice_energy() - 0.5 * setup.atom_mass * v * v).abs() < 1e-12 * setup.lattice_energy());
        assert!((v - PLANCK / (setup.atom_mass * setup.lattice_spacing)).abs() < 1e-15 * v);
    }

    #[test]
    fn invalid_setup_rejected() {
        assert!(PhysicalSetup::new(0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(PhysicalSetup::new(1.0, 1.0, -1.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(PhysicalSetup::new(1.0, 1.0, 1.0, -1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn json_descriptor() {
        let text = r#"{"mass_kg":1.45e-25,"lattice_spacing_m":5.32e-7,"omega_rad_s":1.0e6,
            "power_w":0.2,"waist_m":1e-4,"velocity_width_m_s":1.7e-4}"#;
        let setup = PhysicalSetup::from_json(text).unwrap();
        assert!((setup.depth_ratio() - 20.6).abs() < 1e-9);
        assert!(PhysicalSetup::from_json(r#"{"mass_kg":1.0}"#).is_err());
    }

    #[test]
    fn beta_reduction() {
        for (b, r) in [(0.5, -0.5), (-0.5, -0.5), (0.75, -0.25), (1.2, 0.2), (-0.7, 0.3), (0.0, 0.0)] {
            assert!((reduce_quasimomentum(b) - r).abs() < 1e-12, "{b} -> {}", reduce_quasimomentum(b));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_omega(omega in 1e5f64..1e7) {
                let h = hbar_eff_for_omega(RB87_MASS_KG, LATTICE_SPACING_532NM, omega).unwrap();
                let back = omega_for_hbar_eff(RB87_MASS_KG, LATTICE_SPACING_532NM, h).unwrap();
                prop_assert!((back / omega - 1.0).abs() < 1e-12);
            }

            #[test]
            fn gamma_linear_in_depth(omega in 3e5f64..3e6, depth in 1e-32f64..1e-28, k in 0.1f64..10.0) {
                let a = PhysicalSetup::new(RB87_MASS_KG, LATTICE_SPACING_532NM, omega, depth, 0.0, 1e-4, 0.0).unwrap();
                let b = PhysicalSetup { lattice_depth: k * depth, ..a };
                let pa = derive_dimensionless(&a).unwrap();
                let pb = derive_dimensionless(&b).unwrap();
                prop_assert!((pb.gamma / pa.gamma / k - 1.0).abs() < 1e-12);
                prop_assert_eq!(pa.hbar_eff, pb.hbar_eff);
            }

            #[test]
            fn width_linear_in_velocity(dv in 0.0f64..1e-2, k in 0.0f64..5.0) {
                let a = PhysicalSetup::new(RB87_MASS_KG, LATTICE_SPACING_532NM, 1e6, 0.0, 0.0, 1e-4, dv).unwrap();
                let b = PhysicalSetup { velocity_width: k * dv, ..a };
                let wa = quasimomentum_width(&a);
                prop_assert!((quasimomentum_width(&b) - k * wa).abs() <= 1e-12 * (1.0 + wa * k));
            }
        }
    }
}
