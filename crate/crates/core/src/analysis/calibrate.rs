use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optimize::{nelder_mead, NelderMeadOptions};
use super::summary::{summarize_steady, SteadyStateSummary};
use crate::config::RobotConfig;
use crate::dynamics::{simulate, ActuationSchedule, SimOptions};
use crate::error::AnalysisError;

/// One steady-state observation of a robot build [SI units].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    #[serde(rename = "N")]
    pub n_tails: usize,
    #[serde(rename = "l_m")]
    pub tail_length: f64,
    #[serde(rename = "omega_motor_rad_s")]
    pub omega_motor: f64,
    #[serde(rename = "omega_h_rad_s")]
    pub omega_h: f64,
    #[serde(rename = "omega_yr_rad_s")]
    pub omega_yr: f64,
}

impl Measurement {
    pub fn read_csv(r: impl Read) -> Result<Vec<Self>, AnalysisError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        reader
            .deserialize()
            .collect::<Result<Vec<Self>, _>>()
            .map_err(|e| AnalysisError::Invalid(format!("measurement csv: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<Self>, AnalysisError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| AnalysisError::Invalid(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }

    pub fn write_csv(items: &[Self], w: impl Write) -> Result<(), AnalysisError> {
        let mut writer = csv::Writer::from_writer(w);
        for m in items {
            writer
                .serialize(m)
                .map_err(|e| AnalysisError::Invalid(format!("measurement csv: {e}")))?;
        }
        writer
            .flush()
            .map_err(|e| AnalysisError::Invalid(format!("measurement csv: {e}")))
    }

    /// Configuration of this build with drag coefficients `triple`.
    pub fn config(&self, base: &RobotConfig, triple: [f64; 3], fidelity: &Fidelity) -> RobotConfig {
        let mut cfg = base.clone().with_drag(triple[0], triple[1], triple[2]);
        cfg.n_tails = self.n_tails;
        cfg.tail_length = self.tail_length;
        if let Some(n) = fidelity.nodes_per_tail {
            cfg.nodes_per_tail = n;
        }
        if let Some(dt) = fidelity.time_step {
            cfg.dt = Some(dt);
        }
        cfg
    }
}

/// Resolution and run length of the simulations behind a prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fidelity {
    /// Overrides the configuration's tail resolution.
    pub nodes_per_tail: Option<usize>,
    /// Overrides the configuration's time step [s].
    pub time_step: Option<f64>,
    /// Simulated time per run [s]; the first quarter is discarded.
    pub duration: f64,
    pub output_stride: f64,
}

impl Default for Fidelity {
    fn default() -> Self {
        Self {
            nodes_per_tail: None,
            time_step: None,
            duration: 40.0,
            output_stride: 0.05,
        }
    }
}

impl Fidelity {
    /// Coarse settings used inside the calibration loop.
    pub fn reduced() -> Self {
        Self {
            nodes_per_tail: Some(5),
            time_step: Some(1e-2),
            duration: 12.0,
            output_stride: 0.1,
        }
    }
}

/// Steady-state prediction for one measurement's build and motor speed.
pub fn predict(
    base: &RobotConfig,
    m: &Measurement,
    triple: [f64; 3],
    fidelity: &Fidelity,
) -> Result<SteadyStateSummary, AnalysisError> {
    let cfg = m.config(base, triple, fidelity);
    let schedule = ActuationSchedule::constant(m.omega_motor, fidelity.duration)?;
    let opts = SimOptions {
        output_stride: fidelity.output_stride,
        ..SimOptions::default()
    };
    let traj = simulate(&cfg, &schedule, &opts)?;
    summarize_steady(&traj, None)
}

/// Generates measurements by simulation at a known drag triple.
pub fn synthesize(
    base: &RobotConfig,
    settings: &[(usize, f64, f64)],
    triple: [f64; 3],
    fidelity: &Fidelity,
) -> Result<Vec<Measurement>, AnalysisError> {
    settings
        .par_iter()
        .map(|&(n_tails, tail_length, omega_motor)| {
            let mut m = Measurement {
                n_tails,
                tail_length,
                omega_motor,
                omega_h: 0.0,
                omega_yr: 0.0,
            };
            let s = predict(base, &m, triple, fidelity)?;
            m.omega_h = s.omega_h;
            m.omega_yr = s.omega_yr;
            Ok(m)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementResidual {
    pub measurement: Measurement,
    pub predicted_h: f64,
    pub predicted_yr: f64,
    pub rel_err_h: f64,
    pub rel_err_yr: f64,
}

impl MeasurementResidual {
    pub fn error(&self) -> f64 {
        0.5 * (self.rel_err_h + self.rel_err_yr)
    }
}

fn rel_err(pred: f64, meas: f64) -> f64 {
    (pred - meas).abs() / meas.abs()
}

fn residual(m: &Measurement, s: &SteadyStateSummary) -> MeasurementResidual {
    MeasurementResidual {
        measurement: *m,
        predicted_h: s.omega_h,
        predicted_yr: s.omega_yr,
        rel_err_h: rel_err(s.omega_h, m.omega_h),
        rel_err_yr: rel_err(s.omega_yr, m.omega_yr),
    }
}

/// Mean relative error of `(omega_h, omega_yr)` over `measurements` at one
/// drag triple, with the per-measurement breakdown.
pub fn evaluate(
    measurements: &[Measurement],
    base: &RobotConfig,
    triple: [f64; 3],
    fidelity: &Fidelity,
) -> Result<(f64, Vec<MeasurementResidual>), AnalysisError> {
    let rows = measurements
        .par_iter()
        .map(|m| predict(base, m, triple, fidelity).map(|s| residual(m, &s)))
        .collect::<Result<Vec<_>, _>>()?;
    let err = rows.iter().map(MeasurementResidual::error).sum::<f64>() / rows.len() as f64;
    Ok((err, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    /// Points per axis of the log-spaced seed grid.
    pub grid_points: usize,
    pub lower: f64,
    pub upper: f64,
    /// Explicit seed candidates, replacing the grid.
    pub seed_grid: Option<Vec<[f64; 3]>>,
    pub max_evaluations: usize,
    /// Simplex size at convergence, relative to the coefficients.
    pub x_tol: f64,
    pub f_tol: f64,
    pub fidelity: Fidelity,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            grid_points: 5,
            lower: 0.5,
            upper: 10.0,
            seed_grid: None,
            max_evaluations: 200,
            x_tol: 1e-3,
            f_tol: 1e-6,
            fidelity: Fidelity::reduced(),
            jobs: None,
        }
    }
}

impl CalibrationOptions {
    pub fn seeds(&self) -> Vec<[f64; 3]> {
        if let Some(seeds) = &self.seed_grid {
            return seeds.clone();
        }
        let n = self.grid_points.max(1);
        let axis: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    (self.lower * self.upper).sqrt()
                } else {
                    self.lower * (self.upper / self.lower).powf(i as f64 / (n - 1) as f64)
                }
            })
            .collect();
        let mut out = Vec::with_capacity(n * n * n);
        for &a in &axis {
            for &b in &axis {
                for &c in &axis {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub c_t: f64,
    pub c_r: f64,
    pub c_yr: f64,
    /// Objective at the returned triple.
    pub fit_error: f64,
    pub grid_best: [f64; 3],
    pub grid_error: f64,
    /// Distinct triples simulated.
    pub evaluations: usize,
    pub converged: bool,
    pub residuals: Vec<MeasurementResidual>,
    /// Candidates whose runs failed, with the reason.
    pub failures: Vec<String>,
}

impl CalibrationResult {
    pub fn triple(&self) -> [f64; 3] {
        [self.c_t, self.c_r, self.c_yr]
    }

    /// `key: value` report followed by the per-measurement residual table.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "C_t: {:.6}", self.c_t);
        let _ = writeln!(s, "C_r: {:.6}", self.c_r);
        let _ = writeln!(s, "C_yr: {:.6}", self.c_yr);
        let _ = writeln!(s, "fit_error: {:.6e}", self.fit_error);
        let _ = writeln!(
            s,
            "grid_best: {:.6} {:.6} {:.6}",
            self.grid_best[0], self.grid_best[1], self.grid_best[2]
        );
        let _ = writeln!(s, "grid_error: {:.6e}", self.grid_error);
        let _ = writeln!(s, "evaluations: {}", self.evaluations);
        let _ = writeln!(s, "converged: {}", self.converged);
        let _ = writeln!(s, "failed_candidates: {}", self.failures.len());
        s.push_str(&residual_table(&self.residuals));
        s
    }
}

pub fn residual_table(rows: &[MeasurementResidual]) -> String {
    let mut s = String::from(
        "\nN,l_m,omega_motor_rad_s,omega_h_rad_s,omega_yr_rad_s,pred_omega_h_rad_s,pred_omega_yr_rad_s,rel_err_h,rel_err_yr\n",
    );
    for r in rows {
        let m = &r.measurement;
        let _ = writeln!(
            s,
            "{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.4e},{:.4e}",
            m.n_tails,
            m.tail_length,
            m.omega_motor,
            m.omega_h,
            m.omega_yr,
            r.predicted_h,
            r.predicted_yr,
            r.rel_err_h,
            r.rel_err_yr
        );
    }
    s
}

/// Fits `(C_t, C_r, C_yr)` to `measurements`: every seed candidate is
/// simulated, and the best one starts a bounded Nelder-Mead search in
/// log-coordinates.
pub fn calibrate(
    measurements: &[Measurement],
    base: &RobotConfig,
    options: &CalibrationOptions,
) -> Result<CalibrationResult, AnalysisError> {
    if measurements.len() < 4 {
        return Err(AnalysisError::TooFewPoints {
            needed: 4,
            got: measurements.len(),
        });
    }
    let mut settings: Vec<(usize, u64)> = measurements
        .iter()
        .map(|m| (m.n_tails, m.tail_length.to_bits()))
        .collect();
    settings.sort_unstable();
    settings.dedup();
    if settings.len() < 2 {
        return Err(AnalysisError::Invalid(
            "measurements must span at least two (N, l) settings".into(),
        ));
    }
    if measurements.iter().any(|m| m.omega_h == 0.0 || m.omega_yr == 0.0) {
        return Err(AnalysisError::Invalid("measured rates must be non-zero".into()));
    }
    if !(options.lower > 0.0 && options.upper > options.lower) {
        return Err(AnalysisError::Invalid(
            "coefficient bounds must satisfy 0 < lower < upper".into(),
        ));
    }
    match options.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| AnalysisError::Invalid(format!("thread pool: {e}")))?
            .install(|| calibrate_inner(measurements, base, options)),
        None => calibrate_inner(measurements, base, options),
    }
}

type Outcome = Result<(f64, Vec<MeasurementResidual>), String>;

fn key(t: &[f64; 3]) -> [u64; 3] {
    [t[0].to_bits(), t[1].to_bits(), t[2].to_bits()]
}

fn calibrate_inner(
    measurements: &[Measurement],
    base: &RobotConfig,
    options: &CalibrationOptions,
) -> Result<CalibrationResult, AnalysisError> {
    let fidelity = options.fidelity;
    let run = |t: [f64; 3]| -> Outcome {
        evaluate(measurements, base, t, &fidelity)
            .map_err(|e| format!("C = ({:.4}, {:.4}, {:.4}): {e}", t[0], t[1], t[2]))
    };

    let seeds = options.seeds();
    let outcomes: Vec<Outcome> = seeds.par_iter().map(|&t| run(t)).collect();
    let mut cache: HashMap<[u64; 3], Outcome> = HashMap::new();
    let mut failures = Vec::new();
    let mut best: Option<([f64; 3], f64)> = None;
    for (t, o) in seeds.iter().zip(outcomes) {
        match &o {
            Ok((err, _)) => {
                if best.is_none_or(|(_, e)| *err < e) {
                    best = Some((*t, *err));
                }
            }
            Err(msg) => failures.push(msg.clone()),
        }
        cache.insert(key(t), o);
    }
    let Some((grid_best, grid_error)) = best else {
        return Err(AnalysisError::Calibration(format!(
            "no seed candidate reached steady state:\n{}",
            failures.join("\n")
        )));
    };
    log::info!(
        "calibration seed ({:.3}, {:.3}, {:.3}) error {grid_error:.4e}",
        grid_best[0],
        grid_best[1],
        grid_best[2]
    );

    let (lo, hi) = (options.lower.ln(), options.upper.ln());
    let spacing = (hi - lo) / (options.grid_points.max(2) - 1) as f64;
    let nm = NelderMeadOptions {
        step: vec![0.5 * spacing; 3],
        lower: vec![lo; 3],
        upper: vec![hi; 3],
        max_evaluations: options.max_evaluations,
        f_tol: options.f_tol,
        x_tol: options.x_tol,
    };
    let x0 = [grid_best[0].ln(), grid_best[1].ln(), grid_best[2].ln()];
    let result = nelder_mead(
        |x| {
            let t = [x[0].exp(), x[1].exp(), x[2].exp()];
            let o = cache.entry(key(&t)).or_insert_with(|| {
                let o = run(t);
                match &o {
                    Ok((e, _)) => log::debug!("C = {t:?}: {e:.4e}"),
                    Err(msg) => failures.push(msg.clone()),
                }
                o
            });
            o.as_ref().map_or(f64::INFINITY, |(e, _)| *e)
        },
        &x0,
        &nm,
    );
    let triple = [result.x[0].exp(), result.x[1].exp(), result.x[2].exp()];
    let (triple, fit_error, residuals) = match cache.get(&key(&triple)) {
        Some(Ok((e, rows))) if *e <= grid_error => (triple, *e, rows.clone()),
        _ => match &cache[&key(&grid_best)] {
            Ok((e, rows)) => (grid_best, *e, rows.clone()),
            Err(_) => unreachable!("grid best was evaluated successfully"),
        },
    };
    Ok(CalibrationResult {
        c_t: triple[0],
        c_r: triple[1],
        c_yr: triple[2],
        fit_error,
        grid_best,
        grid_error,
        evaluations: cache.len(),
        converged: result.converged,
        residuals,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measurement_csv_round_trip() {
        let ms = vec![
            Measurement {
                n_tails: 3,
                tail_length: 0.09,
                omega_motor: 15.0,
                omega_h: -6.1,
                omega_yr: 0.21,
            },
            Measurement {
                n_tails: 4,
                tail_length: 0.11,
                omega_motor: -15.0,
                omega_h: 6.3,
                omega_yr: -0.3,
            },
        ];
        let mut buf = Vec::new();
        Measurement::write_csv(&ms, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,l_m,omega_motor_rad_s,omega_h_rad_s,omega_yr_rad_s\n"));
        assert_eq!(Measurement::read_csv(text.as_bytes()).unwrap(), ms);
        assert!(Measurement::read_csv("N,l_m\n3,0.1\n".as_bytes()).is_err());
    }

    #[test]
    fn seed_grid_is_log_spaced() {
        let opts = CalibrationOptions::default();
        let seeds = opts.seeds();
        assert_eq!(seeds.len(), 125);
        assert_eq!(seeds[0], [0.5, 0.5, 0.5]);
        assert!((seeds[124][2] - 10.0).abs() < 1e-12);
        let mid = seeds[62];
        assert!((mid[0] - 5.0f64.sqrt()).abs() < 1e-12, "{mid:?}");
    }

    #[test]
    fn input_validation() {
        let m = Measurement {
            n_tails: 3,
            tail_length: 0.1,
            omega_motor: 15.0,
            omega_h: -6.0,
            omega_yr: 0.2,
        };
        let base = RobotConfig::fitted_sec2();
        let opts = CalibrationOptions::default();
        assert!(matches!(
            calibrate(&[m; 3], &base, &opts),
            Err(AnalysisError::TooFewPoints { .. })
        ));
        assert!(matches!(
            calibrate(&[m; 4], &base, &opts),
            Err(AnalysisError::Invalid(_))
        ));
    }

    #[test]
    fn all_failing_candidates_reported() {
        let mut ms = Vec::new();
        for (n, l) in [(3, 0.09), (4, 0.11)] {
            for w in [10.0, 15.0] {
                ms.push(Measurement {
                    n_tails: n,
                    tail_length: l,
                    omega_motor: w,
                    omega_h: -5.0,
                    omega_yr: 0.2,
                });
            }
        }
        let opts = CalibrationOptions {
            seed_grid: Some(vec![[4.0, 2.0, 6.0]]),
            // far too short for a circle fit
            fidelity: Fidelity {
                duration: 0.02,
                ..Fidelity::reduced()
            },
            ..CalibrationOptions::default()
        };
        let err = calibrate(&ms, &RobotConfig::fitted_sec2(), &opts).unwrap_err();
        assert!(
            matches!(err, AnalysisError::Calibration(ref msg) if msg.contains("C = (4.0000")),
            "{err}"
        );
    }
}
