//! Dormand-Prince 5(4) integrator with PI step-size control and
//! fourth-order dense output.

use crate::error::{Error, Result};

use super::{Trajectory, VectorField};

/// Signal from a right-hand side that cannot be evaluated at the given state.
#[derive(Debug)]
pub enum Halt {
    /// The trial state is inadmissible; the step is retried with a smaller size.
    Reject,
    /// Integration ends, returning everything computed so far.
    Stop(Error),
}

/// Which instants end up in the trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Output {
    /// Every accepted step (plus the initial state).
    #[default]
    Steps,
    /// Dense output at these increasing instants inside the span.
    At(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; estimated from the problem when absent.
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: usize,
    pub output: Output,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            initial_step: None,
            max_step: None,
            max_steps: 200_000,
            output: Output::Steps,
        }
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Default::default() }
    }
}

/// Trajectory plus the reason integration ended early, if it did.
#[derive(Debug)]
pub struct Integration {
    pub trajectory: Trajectory,
    pub stopped: Option<Error>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// difference between the fifth- and fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// dense-output weights (Hairer's dopri5)
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

struct Stepper<'a, F> {
    rhs: &'a mut F,
    n: usize,
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
}

impl<F> Stepper<'_, F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), Halt>,
{
    /// Stages 2..7 from `k[0] = f(t, y)`; returns the fifth-order solution.
    /// On success `k[6]` holds `f(t + h, y1)`.
    fn step(&mut self, t: f64, y: &[f64], h: f64) -> std::result::Result<Vec<f64>, Halt> {
        for s in 1..7 {
            for i in 0..self.n {
                let mut acc = y[i];
                for (j, a) in A[s].iter().enumerate().take(s) {
                    acc += h * a * self.k[j][i];
                }
                self.stage[i] = acc;
            }
            (self.rhs)(t + C[s] * h, &self.stage, &mut self.k[s])?;
            if self.k[s].iter().any(|v| !v.is_finite()) {
                return Err(Halt::Reject);
            }
        }
        // the seventh stage is evaluated at the fifth-order solution
        Ok(self.stage.clone())
    }

    fn error_norm(&self, y0: &[f64], y1: &[f64], h: f64, rtol: f64, atol: f64) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.n {
            let e: f64 = h * (0..7).map(|s| E[s] * self.k[s][i]).sum::<f64>();
            let sk = atol + rtol * y0[i].abs().max(y1[i].abs());
            sum += (e / sk).powi(2);
        }
        (sum / self.n as f64).sqrt()
    }

    fn dense(&self, y0: &[f64], y1: &[f64], h: f64) -> [Vec<f64>; 5] {
        let n = self.n;
        let mut r = [y0.to_vec(), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let ydiff = y1[i] - y0[i];
            let bspl = h * self.k[0][i] - ydiff;
            r[1][i] = ydiff;
            r[2][i] = bspl;
            r[3][i] = ydiff - h * self.k[6][i] - bspl;
            r[4][i] = h * (0..7).map(|s| D[s] * self.k[s][i]).sum::<f64>();
        }
        r
    }
}

fn interpolate(r: &[Vec<f64>; 5], theta: f64) -> Vec<f64> {
    let t1 = 1.0 - theta;
    (0..r[0].len())
        .map(|i| r[0][i] + theta * (r[1][i] + t1 * (r[2][i] + theta * (r[3][i] + t1 * r[4][i]))))
        .collect()
}

fn rms(v: &[f64], scale: &[f64]) -> f64 {
    (v.iter().zip(scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn validate(y0: &[f64], t_span: (f64, f64), opts: &IntegratorOptions) -> Result<()> {
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(Error::param("integrator tolerances must be positive"));
    }
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::param(format!("time span [{t0}, {t1}] must be finite and increasing")));
    }
    if let Some(k) = y0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: k });
    }
    if let Output::At(ts) = &opts.output {
        if ts.windows(2).any(|w| w[1] <= w[0]) || ts.iter().any(|&t| t < t0 || t > t1) {
            return Err(Error::param("output instants must increase strictly within the span"));
        }
    }
    Ok(())
}

/// Adaptive integration of `y' = rhs(t, y)` over `t_span`.
///
/// A [`Halt::Stop`] from the right-hand side ends the run with the partial
/// trajectory and the error in [`Integration::stopped`]. Step-size underflow
/// and exhaustion of the step budget are hard errors.
pub fn integrate_with<F>(
    mut rhs: F,
    y0: &[f64],
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Integration>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), Halt>,
{
    validate(y0, t_span, opts)?;
    let n = y0.len();
    let (t0, t_end) = t_span;
    let (rtol, atol) = (opts.rel_tol, opts.abs_tol);
    let span = t_end - t0;
    let h_max = opts.max_step.unwrap_or(span).min(span);

    let mut traj = Trajectory::empty(n, rtol, atol);
    let mut out_times: &[f64] = match &opts.output {
        Output::Steps => {
            traj.push(t0, y0);
            &[]
        }
        Output::At(ts) => ts,
    };
    while let Some((&t, rest)) = out_times.split_first() {
        if t > t0 {
            break;
        }
        traj.push(t, y0);
        out_times = rest;
    }

    let mut f0 = vec![0.0; n];
    if let Err(halt) = rhs(t0, y0, &mut f0) {
        let err = match halt {
            Halt::Stop(e) => e,
            Halt::Reject => Error::param("initial state is inadmissible for the right-hand side"),
        };
        return Ok(Integration { trajectory: traj, stopped: Some(err), accepted_steps: 0, rejected_steps: 0 });
    }

    let mut stepper = Stepper {
        rhs: &mut rhs,
        n,
        k: std::array::from_fn(|_| vec![0.0; n]),
        stage: vec![0.0; n],
    };
    stepper.k[0].copy_from_slice(&f0);

    let mut h = match opts.initial_step {
        Some(h) if h > 0.0 => h.min(h_max),
        Some(h) => return Err(Error::param(format!("initial step must be positive, got {h}"))),
        None => initial_step(&mut stepper, t0, y0, h_max, rtol, atol),
    };

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut stopped = None;

    while t < t_end {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::TooManySteps { t, max_steps: opts.max_steps });
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }
        let y1 = match stepper.step(t, &y, h) {
            Ok(y1) => y1,
            Err(Halt::Reject) => {
                rejected += 1;
                h *= 0.5;
                last_rejected = true;
                continue;
            }
            Err(Halt::Stop(e)) => {
                stopped = Some(e);
                break;
            }
        };
        let err = stepper.error_norm(&y, &y1, h, rtol, atol);
        let fac11 = err.powf(0.2 - 0.75 * BETA);
        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
            let mut h_new = (h / fac).min(h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            let t_new = if last { t_end } else { t + h };
            match &opts.output {
                Output::Steps => traj.push(t_new, &y1),
                Output::At(_) => {
                    let r = stepper.dense(&y, &y1, h);
                    while let Some((&to, rest)) = out_times.split_first() {
                        if to > t_new {
                            break;
                        }
                        let s = if to == t_new { y1.clone() } else { interpolate(&r, (to - t) / h) };
                        traj.push(to, &s);
                        out_times = rest;
                    }
                }
            }
            let k7 = std::mem::take(&mut stepper.k[6]);
            stepper.k[0].copy_from_slice(&k7);
            stepper.k[6] = k7;
            t = t_new;
            y = y1;
            h = h_new;
            accepted += 1;
            last_rejected = false;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / MIN_FACTOR);
            rejected += 1;
            last_rejected = true;
        }
    }
    Ok(Integration { trajectory: traj, stopped, accepted_steps: accepted, rejected_steps: rejected })
}

fn initial_step<F>(st: &mut Stepper<'_, F>, t0: f64, y0: &[f64], h_max: f64, rtol: f64, atol: f64) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), Halt>,
{
    let sk: Vec<f64> = y0.iter().map(|v| atol + rtol * v.abs()).collect();
    let d0 = rms(y0, &sk);
    let d1 = rms(&st.k[0], &sk);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(h_max);
    let y1: Vec<f64> = y0.iter().zip(&st.k[0]).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; st.n];
    if (st.rhs)(t0 + h0, &y1, &mut f1).is_err() {
        return h0;
    }
    let diff: Vec<f64> = f1.iter().zip(&st.k[0]).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff, &sk) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
    (100.0 * h0).min(h1).min(h_max)
}

/// Maps field errors onto integrator signals: inadmissible (negative)
/// concentrations shrink the step, anything else stops the run.
pub(crate) fn field_rhs(field: &dyn VectorField) -> impl FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), Halt> + '_ {
    move |_, y, dy| match field.eval(y, dy) {
        Ok(()) => Ok(()),
        Err(Error::NegativeConcentration { .. }) => Err(Halt::Reject),
        Err(e) => Err(Halt::Stop(e)),
    }
}

/// Integrates an autonomous field, recording every accepted step.
pub fn integrate(
    field: &dyn VectorField,
    y0: &[f64],
    t_span: (f64, f64),
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Trajectory> {
    integrate_field(field, y0, t_span, &IntegratorOptions::with_tolerances(rel_tol, abs_tol))
}

/// Like [`integrate`] with full options; an early stop is an error.
pub fn integrate_field(
    field: &dyn VectorField,
    y0: &[f64],
    t_span: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if y0.len() != field.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, field has dimension {}",
            y0.len(),
            field.dim()
        )));
    }
    let run = integrate_with(field_rhs(field), y0, t_span, opts)?;
    match run.stopped {
        Some(e) => Err(e),
        None => Ok(run.trajectory),
    }
}

/// Fixed-step Dormand-Prince (fifth-order solution, no error control).
pub fn integrate_fixed<F>(mut rhs: F, y0: &[f64], t_span: (f64, f64), steps: usize) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> std::result::Result<(), Halt>,
{
    if steps == 0 {
        return Err(Error::param("fixed-step integration needs at least one step"));
    }
    validate(y0, t_span, &IntegratorOptions::default())?;
    let n = y0.len();
    let h = (t_span.1 - t_span.0) / steps as f64;
    let mut st = Stepper { rhs: &mut rhs, n, k: std::array::from_fn(|_| vec![0.0; n]), stage: vec![0.0; n] };
    let mut y = y0.to_vec();
    let stop = |halt: Halt, t: f64| match halt {
        Halt::Stop(e) => e,
        Halt::Reject => Error::StepUnderflow { t, h },
    };
    (st.rhs)(t_span.0, &y, &mut st.k[0]).map_err(|e| stop(e, t_span.0))?;
    for s in 0..steps {
        let t = t_span.0 + s as f64 * h;
        y = st.step(t, &y, h).map_err(|e| stop(e, t))?;
        let k7 = std::mem::take(&mut st.k[6]);
        st.k[0].copy_from_slice(&k7);
        st.k[6] = k7;
    }
    Ok(y)
}
