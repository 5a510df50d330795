//! Parameter sweeps over the dimensionless groups that describe the robot.

use std::collections::BTreeMap;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use flagsim::analysis::{nondimensionalize, summarize_steady};
use flagsim::dynamics::{simulate, ActuationSchedule, SimOptions};
use flagsim::RobotConfig;

use crate::Usage;

/// Names accepted in a sweep grid.
pub const PARAMETERS: [&str; 8] = ["C_t", "C_r", "C_yr", "l/R", "L/R", "l/r0", "omega_bar", "N"];

/// Sweep file contents. Every grid point runs at constant motor speed for
/// `duration_scales` intrinsic time scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Motor speed used when `omega_bar` is not swept.
    #[serde(default = "default_omega_bar")]
    pub omega_bar: f64,
    #[serde(default = "default_duration")]
    pub duration_scales: f64,
    /// Samples per run.
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub grid: BTreeMap<String, Vec<f64>>,
}

fn default_omega_bar() -> f64 {
    10.0
}

fn default_duration() -> f64 {
    50.0
}

fn default_samples() -> usize {
    2000
}

/// One grid point: parameter values in grid-name order.
pub type Point = Vec<(String, f64)>;

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Usage(format!("sweep file: {e}")))?;
        spec.check()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("sweep spec serializes")
    }

    fn check(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Usage("sweep grid is empty".into()).into());
        }
        for (name, values) in &self.grid {
            if !PARAMETERS.contains(&name.as_str()) {
                return Err(Usage(format!(
                    "unknown sweep parameter `{name}` (expected one of {})",
                    PARAMETERS.join(", ")
                ))
                .into());
            }
            if values.is_empty() {
                return Err(Usage(format!("sweep parameter `{name}` has no values")).into());
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Usage(format!("sweep parameter `{name}` has a non-finite value")).into());
            }
            if name == "N" && values.iter().any(|v| v.fract() != 0.0 || *v < 2.0) {
                return Err(Usage("`N` values must be integers of at least 2".into()).into());
            }
        }
        if !(self.duration_scales > 0.0) || self.samples < 10 {
            return Err(Usage("duration_scales must be positive and samples at least 10".into()).into());
        }
        Ok(())
    }

    /// Cartesian product of the grid, last name varying fastest.
    pub fn points(&self) -> Vec<Point> {
        let mut points: Vec<Point> = vec![Vec::new()];
        for (name, values) in &self.grid {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((name.clone(), v));
                        q
                    })
                })
                .collect();
        }
        points
    }
}

/// Applies a grid point to `base`. Head radius `R`, tail length `l` and
/// the drag triple are taken from `base` unless swept; tail length is set
/// before tail radius so `l/r0` holds at the swept `l/R`.
pub fn apply(base: &RobotConfig, point: &[(String, f64)]) -> Result<(RobotConfig, f64)> {
    let get = |name: &str| point.iter().find(|(n, _)| n == name).map(|p| p.1);
    let mut cfg = base.clone();
    if let Some(n) = get("N") {
        cfg.n_tails = n as usize;
    }
    if let Some(v) = get("l/R") {
        cfg.tail_length = v * cfg.head_radius;
    }
    if let Some(v) = get("L/R") {
        cfg.head_length = v * cfg.head_radius;
    }
    if let Some(v) = get("l/r0") {
        cfg.tail_radius = cfg.tail_length / v;
    }
    cfg.c_t = get("C_t").unwrap_or(cfg.c_t);
    cfg.c_r = get("C_r").unwrap_or(cfg.c_r);
    cfg.c_yr = get("C_yr").unwrap_or(cfg.c_yr);
    cfg.validate()?;
    let omega_bar = get("omega_bar").unwrap_or(f64::NAN);
    Ok((cfg, omega_bar))
}

/// Dimensionless steady-state outcome of one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub omega_bar: f64,
    pub omega_bar_h: f64,
    pub omega_bar_yr: f64,
    pub r_yr_over_l: f64,
    pub theta_heading: f64,
    pub simulated_s: f64,
}

pub fn run_point(spec: &SweepSpec, base: &RobotConfig, point: &[(String, f64)]) -> Result<SweepRow> {
    let (cfg, swept) = apply(base, point)?;
    let omega_bar = if swept.is_nan() { spec.omega_bar } else { swept };
    if omega_bar == 0.0 {
        return Err(Usage("omega_bar must be non-zero".into()).into());
    }
    let scale = nondimensionalize(&cfg);
    let duration = scale.time(spec.duration_scales);
    let schedule = ActuationSchedule::constant(scale.omega(omega_bar), duration)?;
    let opts = SimOptions {
        output_stride: duration / spec.samples as f64,
        ..SimOptions::default()
    };
    let traj = simulate(&cfg, &schedule, &opts)?;
    let s = summarize_steady(&traj, None)?;
    Ok(SweepRow {
        omega_bar,
        omega_bar_h: scale.omega_bar(s.omega_h),
        omega_bar_yr: scale.omega_bar(s.omega_yr),
        r_yr_over_l: s.r_yr / cfg.tail_length,
        theta_heading: s.theta_heading,
        simulated_s: traj.duration(),
    })
}

/// Summary CSV: one column per swept name, then the outcome columns and an
/// `error` column that is empty for successful points.
pub fn summary_csv(spec: &SweepSpec, rows: &[(Point, Result<SweepRow, String>)]) -> String {
    let names: Vec<&str> = spec.grid.keys().map(String::as_str).collect();
    let mut s = names.join(",");
    if !names.contains(&"omega_bar") {
        s.push_str(",omega_bar");
    }
    s.push_str(",omega_bar_yr,r_yr_over_l,theta_heading_rad,omega_bar_h,error\n");
    for (point, row) in rows {
        let mut cells: Vec<String> = point.iter().map(|(_, v)| format!("{v}")).collect();
        if !names.contains(&"omega_bar") {
            cells.push(format!("{}", spec.omega_bar));
        }
        match row {
            Ok(r) => {
                for v in [r.omega_bar_yr, r.r_yr_over_l, r.theta_heading, r.omega_bar_h] {
                    cells.push(format!("{v:.9e}"));
                }
                cells.push(String::new());
            }
            Err(e) => {
                cells.extend(std::iter::repeat_n(String::new(), 4));
                cells.push(format!("\"{}\"", e.replace('"', "'").replace('\n', " ")));
            }
        }
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_in_name_order() {
        let spec = SweepSpec::from_toml_str("[grid]\nomega_bar = [5, 10, 20]\nN = [2, 3]\n").unwrap();
        let points = spec.points();
        assert_eq!(points.len(), 6);
        assert_eq!(
            points[0],
            vec![("N".to_string(), 2.0), ("omega_bar".to_string(), 5.0)]
        );
        assert_eq!(
            points[5],
            vec![("N".to_string(), 3.0), ("omega_bar".to_string(), 20.0)]
        );
    }

    #[test]
    fn bad_grids_are_usage_errors() {
        for text in [
            "[grid]\n",
            "[grid]\nomega = [1]\n",
            "[grid]\nN = []\n",
            "[grid]\nN = [2.5]\n",
            "grid = 3\n",
        ] {
            let e = SweepSpec::from_toml_str(text).unwrap_err();
            assert!(e.is::<Usage>(), "{text}: {e}");
        }
    }

    #[test]
    fn ratios_are_applied_to_geometry() {
        let base = RobotConfig::control_sec4();
        let point = vec![
            ("l/R".to_string(), 8.0),
            ("l/r0".to_string(), 40.0),
            ("L/R".to_string(), 3.0),
            ("N".to_string(), 3.0),
            ("C_yr".to_string(), 1.5),
        ];
        let (cfg, w) = apply(&base, &point).unwrap();
        assert!(w.is_nan());
        assert_eq!(cfg.n_tails, 3);
        assert!((cfg.tail_length / cfg.head_radius - 8.0).abs() < 1e-12);
        assert!((cfg.tail_length / cfg.tail_radius - 40.0).abs() < 1e-12);
        assert!((cfg.head_length / cfg.head_radius - 3.0).abs() < 1e-12);
        assert_eq!((cfg.c_t, cfg.c_r, cfg.c_yr), (base.c_t, base.c_r, 1.5));
    }

    #[test]
    fn failed_points_keep_their_row() {
        let spec = SweepSpec::from_toml_str("[grid]\nC_t = [1, 2]\n").unwrap();
        let row = SweepRow {
            omega_bar: 10.0,
            omega_bar_h: -2.5,
            omega_bar_yr: -0.05,
            r_yr_over_l: 0.9,
            theta_heading: 1.1,
            simulated_s: 1.0,
        };
        let points = spec.points();
        let rows = vec![
            (points[0].clone(), Ok(row)),
            (points[1].clone(), Err("newton \"x\"".into())),
        ];
        let csv = summary_csv(&spec, &rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "C_t,omega_bar,omega_bar_yr,r_yr_over_l,theta_heading_rad,omega_bar_h,error"
        );
        assert!(lines[1].starts_with("1,10,-5.000000000e-2,"));
        assert_eq!(lines[2], "2,10,,,,,\"newton 'x'\"");
    }
}
