//! Robot parameters and their on-disk representation.
//!
//! Config files are TOML with one table per physical group. Every key carries
//! its SI unit as a suffix (`tail_length_m`, `mu0_pa_s`, ...). The `[numerics]`
//! table is optional; everything else is required.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Newton solver settings used by the implicit integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Residual tolerance relative to the characteristic force `EI / l^2`.
    pub newton_tol: f64,
    pub max_newton_iter: usize,
    /// How many times a failing step may be retried with half the step size.
    pub max_step_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-6,
            max_newton_iter: 50,
            max_step_halvings: 4,
        }
    }
}

/// Geometric, material, fluid and drag parameters of one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfig {
    pub n_tails: usize,
    /// Tail length `l` [m].
    pub tail_length: f64,
    /// Tail cross-section radius `r0` [m].
    pub tail_radius: f64,
    /// Head radius `R` [m].
    pub head_radius: f64,
    /// Head length `L` [m].
    pub head_length: f64,
    /// Distance from the motor shaft to each tail root [m].
    pub spoke_length: f64,
    pub youngs_modulus: f64,
    pub shear_modulus: f64,
    /// Bulk viscosity `mu0` [Pa s].
    pub mu0: f64,
    pub c_t: f64,
    pub c_r: f64,
    pub c_yr: f64,
    pub nodes_per_tail: usize,
    /// Time step [s]; `None` selects `1e-3` of the elasto-viscous time scale.
    pub dt: Option<f64>,
    pub rigid_multiplier: f64,
    /// Tail mass per unit length [kg/m].
    pub rho_line: f64,
    pub head_mass: f64,
    /// Interface offset `h` [m] of the viscosity profile.
    pub interface_h: f64,
    /// Interface sharpness `k` (dimensionless).
    pub interface_k: f64,
    /// Vertical spring [N/m] holding each head node at its initial height,
    /// standing in for the balancing that keeps the head at the interface.
    /// Zero leaves vertical motion free.
    pub surface_stiffness: f64,
    pub solver: SolverOptions,
}

/// Named parameter sets shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Drag triple `(4.0, 2.06, 6.0)` fitted against the tail-count/length
    /// experiments, four 11 cm tails.
    FittedSec2,
    /// Drag triple `(3.0, 2.8, 2.0)` used for the path-following demos, two
    /// tails.
    ControlSec4,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::FittedSec2, Preset::ControlSec4];

    pub fn name(self) -> &'static str {
        match self {
            Preset::FittedSec2 => "fitted_sec2",
            Preset::ControlSec4 => "control_sec4",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn config(self) -> RobotConfig {
        match self {
            Preset::FittedSec2 => RobotConfig::fitted_sec2(),
            Preset::ControlSec4 => RobotConfig::control_sec4(),
        }
    }
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self::fitted_sec2()
    }
}

impl RobotConfig {
    /// Glycerin bath, silicone tails and the cylindrical head of the
    /// prototype, with `G = E / 3` (near-incompressible tails).
    pub fn prototype(n_tails: usize, tail_length: f64, c_t: f64, c_r: f64, c_yr: f64) -> Self {
        let head_radius = 0.016;
        let tail_radius = 3.2e-3;
        let youngs_modulus = 1.2e6;
        Self {
            n_tails,
            tail_length,
            tail_radius,
            head_radius,
            head_length: 0.06,
            spoke_length: head_radius,
            youngs_modulus,
            shear_modulus: youngs_modulus / 3.0,
            mu0: 1.49,
            c_t,
            c_r,
            c_yr,
            nodes_per_tail: 11,
            dt: None,
            rigid_multiplier: 1e4,
            rho_line: 1200.0 * PI * tail_radius * tail_radius,
            head_mass: 0.04,
            interface_h: 0.7 * head_radius,
            interface_k: 20.0,
            surface_stiffness: 0.0,
            solver: SolverOptions::default(),
        }
    }

    pub fn fitted_sec2() -> Self {
        Self::prototype(4, 0.11, 4.0, 2.06, 6.0)
    }

    pub fn control_sec4() -> Self {
        Self::prototype(2, 0.11, 3.0, 2.8, 2.0)
    }

    pub fn with_drag(mut self, c_t: f64, c_r: f64, c_yr: f64) -> Self {
        self.c_t = c_t;
        self.c_r = c_r;
        self.c_yr = c_yr;
        self
    }

    /// Bending stiffness of a tail, `pi E r0^4 / 4`.
    pub fn tail_ei(&self) -> f64 {
        PI * self.youngs_modulus * self.tail_radius.powi(4) / 4.0
    }

    pub fn tail_ea(&self) -> f64 {
        self.youngs_modulus * PI * self.tail_radius.powi(2)
    }

    pub fn tail_gj(&self) -> f64 {
        PI * self.shear_modulus * self.tail_radius.powi(4) / 2.0
    }

    /// Elasto-viscous time scale `mu0 l^4 / EI` [s].
    pub fn time_scale(&self) -> f64 {
        self.mu0 * self.tail_length.powi(4) / self.tail_ei()
    }

    pub fn time_step(&self) -> f64 {
        self.dt.unwrap_or(1e-3 * self.time_scale())
    }

    /// Characteristic elastic force `EI / l^2` used to scale solver tolerances.
    pub fn characteristic_force(&self) -> f64 {
        self.tail_ei() / self.tail_length.powi(2)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(field, format!("must be positive, got {v}")))
            }
        }
        if self.n_tails < 2 {
            return Err(ConfigError::invalid("n_tails", "need at least 2 tails"));
        }
        if self.nodes_per_tail < 3 {
            return Err(ConfigError::invalid(
                "nodes_per_tail",
                "need at least 3 nodes per tail",
            ));
        }
        positive("tail_length_m", self.tail_length)?;
        positive("tail_radius_m", self.tail_radius)?;
        positive("head_radius_m", self.head_radius)?;
        positive("head_length_m", self.head_length)?;
        positive("spoke_length_m", self.spoke_length)?;
        positive("youngs_modulus_pa", self.youngs_modulus)?;
        positive("shear_modulus_pa", self.shear_modulus)?;
        positive("mu0_pa_s", self.mu0)?;
        positive("c_t", self.c_t)?;
        positive("c_r", self.c_r)?;
        if !(self.c_yr.is_finite() && self.c_yr >= 0.0) {
            return Err(ConfigError::invalid("c_yr", "must be non-negative"));
        }
        positive("rho_line_kg_m", self.rho_line)?;
        positive("head_mass_kg", self.head_mass)?;
        positive("interface_k", self.interface_k)?;
        if !(self.surface_stiffness.is_finite() && self.surface_stiffness >= 0.0) {
            return Err(ConfigError::invalid(
                "surface_stiffness_n_m",
                "must be non-negative",
            ));
        }
        if !self.interface_h.is_finite() {
            return Err(ConfigError::invalid("interface_h_m", "must be finite"));
        }
        if let Some(dt) = self.dt {
            positive("dt_s", dt)?;
        }
        if self.tail_length / self.tail_radius <= 1.0 {
            return Err(ConfigError::invalid(
                "tail_radius_m",
                "tail slenderness l/r0 must exceed 1",
            ));
        }
        // mu_par = 2 pi mu0 / (ln(l/r0) - 1/2) must stay positive
        if (self.tail_length / self.tail_radius).ln() <= 0.5 {
            return Err(ConfigError::invalid(
                "tail_radius_m",
                "ln(l/r0) must exceed 1/2 for positive tangential drag",
            ));
        }
        if self.rigid_multiplier < 1e3 {
            return Err(ConfigError::invalid("rigid_multiplier", "must be at least 1e3"));
        }
        positive("newton_tol", self.solver.newton_tol)?;
        if self.solver.max_newton_iter == 0 {
            return Err(ConfigError::invalid("max_newton_iter", "must be at least 1"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let cfg = Self::from(file);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ConfigFile::from(self)).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    geometry: GeometrySection,
    material: MaterialSection,
    fluid: FluidSection,
    drag: DragSection,
    mass: MassSection,
    #[serde(default)]
    numerics: NumericsSection,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometrySection {
    n_tails: usize,
    tail_length_m: f64,
    tail_radius_m: f64,
    head_radius_m: f64,
    head_length_m: f64,
    spoke_length_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialSection {
    youngs_modulus_pa: f64,
    shear_modulus_pa: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FluidSection {
    mu0_pa_s: f64,
    interface_h_m: f64,
    interface_k: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    surface_stiffness_n_m: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DragSection {
    c_t: f64,
    c_r: f64,
    c_yr: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MassSection {
    rho_line_kg_m: f64,
    head_mass_kg: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NumericsSection {
    nodes_per_tail: usize,
    rigid_multiplier: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt_s: Option<f64>,
    newton_tol: f64,
    max_newton_iter: usize,
    max_step_halvings: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Self {
            nodes_per_tail: 11,
            rigid_multiplier: 1e4,
            dt_s: None,
            newton_tol: solver.newton_tol,
            max_newton_iter: solver.max_newton_iter,
            max_step_halvings: solver.max_step_halvings,
        }
    }
}

impl From<ConfigFile> for RobotConfig {
    fn from(f: ConfigFile) -> Self {
        Self {
            n_tails: f.geometry.n_tails,
            tail_length: f.geometry.tail_length_m,
            tail_radius: f.geometry.tail_radius_m,
            head_radius: f.geometry.head_radius_m,
            head_length: f.geometry.head_length_m,
            spoke_length: f.geometry.spoke_length_m,
            youngs_modulus: f.material.youngs_modulus_pa,
            shear_modulus: f.material.shear_modulus_pa,
            mu0: f.fluid.mu0_pa_s,
            c_t: f.drag.c_t,
            c_r: f.drag.c_r,
            c_yr: f.drag.c_yr,
            nodes_per_tail: f.numerics.nodes_per_tail,
            dt: f.numerics.dt_s,
            rigid_multiplier: f.numerics.rigid_multiplier,
            rho_line: f.mass.rho_line_kg_m,
            head_mass: f.mass.head_mass_kg,
            interface_h: f.fluid.interface_h_m,
            interface_k: f.fluid.interface_k,
            surface_stiffness: f.fluid.surface_stiffness_n_m,
            solver: SolverOptions {
                newton_tol: f.numerics.newton_tol,
                max_newton_iter: f.numerics.max_newton_iter,
                max_step_halvings: f.numerics.max_step_halvings,
            },
        }
    }
}

impl From<&RobotConfig> for ConfigFile {
    fn from(c: &RobotConfig) -> Self {
        Self {
            geometry: GeometrySection {
                n_tails: c.n_tails,
                tail_length_m: c.tail_length,
                tail_radius_m: c.tail_radius,
                head_radius_m: c.head_radius,
                head_length_m: c.head_length,
                spoke_length_m: c.spoke_length,
            },
            material: MaterialSection {
                youngs_modulus_pa: c.youngs_modulus,
                shear_modulus_pa: c.shear_modulus,
            },
            fluid: FluidSection {
                mu0_pa_s: c.mu0,
                interface_h_m: c.interface_h,
                interface_k: c.interface_k,
                surface_stiffness_n_m: c.surface_stiffness,
            },
            drag: DragSection {
                c_t: c.c_t,
                c_r: c.c_r,
                c_yr: c.c_yr,
            },
            mass: MassSection {
                rho_line_kg_m: c.rho_line,
                head_mass_kg: c.head_mass,
            },
            numerics: NumericsSection {
                nodes_per_tail: c.nodes_per_tail,
                rigid_multiplier: c.rigid_multiplier,
                dt_s: c.dt,
                newton_tol: c.solver.newton_tol,
                max_newton_iter: c.solver.max_newton_iter,
                max_step_halvings: c.solver.max_step_halvings,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_through_toml() {
        for p in Preset::ALL {
            let cfg = p.config();
            let text = cfg.to_toml_string();
            let back = RobotConfig::from_toml_str(&text).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn default_shear_modulus_is_a_third() {
        let c = RobotConfig::default();
        assert!((c.shear_modulus - c.youngs_modulus / 3.0).abs() < 1e-9);
    }

    #[test]
    fn missing_field_is_named() {
        let text = RobotConfig::control_sec4()
            .to_toml_string()
            .replace("tail_length_m = 0.11\n", "");
        let err = RobotConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("tail_length_m"), "{err}");
    }

    #[test]
    fn rejects_bad_counts() {
        let mut c = RobotConfig::control_sec4();
        c.n_tails = 1;
        assert!(matches!(
            c.validate(),
            Err(ConfigError::Invalid { field: "n_tails", .. })
        ));
        let mut c = RobotConfig::control_sec4();
        c.nodes_per_tail = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn surface_stiffness_round_trips() {
        let mut c = RobotConfig::control_sec4();
        assert!(!c.to_toml_string().contains("surface_stiffness"));
        c.surface_stiffness = 50.0;
        let back = RobotConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back.surface_stiffness, 50.0);
        c.surface_stiffness = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn time_scale_of_prototype() {
        let ts = RobotConfig::control_sec4().time_scale();
        assert!((ts - 2.207).abs() / 2.207 < 5e-3, "{ts}");
    }
}
