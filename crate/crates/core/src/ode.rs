//! Dormand–Prince 5(4) with PI step-size control and continuous output.
//!
//! Used for every second-order field in the crate (Euler-Lagrange flows,
//! reduced flows and geodesic sprays). Right-hand sides may fail (domain
//! guards); a failed stage rejects the step and shrinks it, and the
//! integration aborts with [`Error::StepFailure`] once the step underflows.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: Option<f64>,
    /// Relative step floor: steps below `h_min_rel · max(1, |t|)` fail.
    pub h_min_rel: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            ..Default::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-10,
            h_init: None,
            h_max: None,
            h_min_rel: 1e-13,
            max_steps: 2_000_000,
        }
    }
}

/// Where the solution is recorded.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampling {
    /// Every accepted step.
    Steps,
    /// `n ≥ 2` equally spaced points on `[t0, t_end]`, from the dense output.
    Uniform(usize),
    /// Given increasing times inside `[t0, t_end]`, from the dense output.
    Times(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub stats: IntegratorStats,
}

struct Dense {
    t: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl Dense {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t) / self.h;
        let th1 = 1.0 - th;
        for i in 0..out.len() {
            out[i] = self.r[0][i]
                + th * (self.r[1][i]
                    + th1 * (self.r[2][i] + th * (self.r[3][i] + th1 * self.r[4][i])));
        }
    }
}

fn err_norm(y: &[f64], ynew: &[f64], e: &[f64], opts: &OdeOptions) -> f64 {
    let n = y.len().max(1);
    let mut acc = 0.0;
    for i in 0..y.len() {
        let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
        let r = e[i] / sc;
        acc += r * r;
    }
    (acc / n as f64).sqrt()
}

fn initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], dir: f64, opts: &OdeOptions) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.abs()).collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter().zip(&sc).map(|(a, s)| (a / s) * (a / s)).sum::<f64>() / n.max(1) as f64).sqrt()
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    if let Some(hmax) = opts.h_max {
        h0 = h0.min(hmax);
    }
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + dir * h0 * d).collect();
    let mut f1 = vec![0.0; n];
    if f(t0 + dir * h0, &y1, &mut f1).is_err() {
        return Ok(h0 * 0.01);
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let mut h = (100.0 * h0).min(h1);
    if let Some(hmax) = opts.h_max {
        h = h.min(hmax);
    }
    Ok(h)
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end`.
///
/// Errors from `f` at the initial point are returned as-is; errors during
/// trial stages reject the step.
pub fn dopri5<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    sampling: &Sampling,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    if !(t_end.is_finite() && t0.is_finite()) {
        return Err(Error::Precondition("non-finite time span".into()));
    }
    let sample_times: Option<Vec<f64>> = match sampling {
        Sampling::Steps => None,
        Sampling::Uniform(m) => {
            if *m < 2 {
                return Err(Error::Precondition("uniform sampling needs at least 2 points".into()));
            }
            let m = *m;
            Some(
                (0..m)
                    .map(|k| {
                        if k == m - 1 {
                            t_end
                        } else {
                            t0 + (t_end - t0) * (k as f64) / ((m - 1) as f64)
                        }
                    })
                    .collect(),
            )
        }
        Sampling::Times(ts) => {
            let ok = ts.windows(2).all(|w| (w[1] - w[0]) * (t_end - t0) > 0.0)
                && ts.iter().all(|t| (t - t0) * (t_end - t0) >= 0.0 && (t_end - t) * (t_end - t0) >= 0.0);
            if !ok {
                return Err(Error::Precondition(
                    "sample times must be monotone and inside the integration span".into(),
                ));
            }
            Some(ts.clone())
        }
    };

    let mut stats = IntegratorStats {
        tolerance: opts.rtol,
        ..Default::default()
    };
    let mut out_t = Vec::new();
    let mut out_y = Vec::new();
    let mut next_sample = 0usize;

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    f(t, &y, &mut k1)?;
    stats.evaluations += 1;

    let record_initial = |out_t: &mut Vec<f64>, out_y: &mut Vec<Vec<f64>>, next: &mut usize| {
        if let Some(ts) = &sample_times {
            while *next < ts.len() && ts[*next] == t0 {
                out_t.push(t0);
                out_y.push(y0.to_vec());
                *next += 1;
            }
        } else {
            out_t.push(t0);
            out_y.push(y0.to_vec());
        }
    };
    record_initial(&mut out_t, &mut out_y, &mut next_sample);

    if t_end == t0 {
        return Ok(OdeSolution { t: out_t, y: out_y, stats });
    }
    let dir = (t_end - t0).signum();
    let span = (t_end - t0).abs();
    let mut h = match opts.h_init {
        Some(h) => h.abs(),
        None => initial_step(&mut f, t0, &y, &k1, dir, opts)?,
    };
    if let Some(hmax) = opts.h_max {
        h = h.min(hmax);
    }
    h = h.min(span);

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut errv = vec![0.0; n];
    let mut fac_old: f64 = 1e-4;
    let mut last_reject = false;
    let expo1 = 0.2 - PI_BETA * 0.75;
    let mut last_failure = String::from("step size underflow");
    let mut dense = Dense {
        t: 0.0,
        h: 0.0,
        r: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
    };

    loop {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::StepFailure {
                t,
                reason: format!("maximum number of steps ({}) exceeded", opts.max_steps),
            });
        }
        let h_min = opts.h_min_rel * t.abs().max(1.0);
        if h < h_min {
            return Err(Error::StepFailure { t, reason: last_failure });
        }
        let remaining = (t_end - t).abs();
        let mut finishing = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            finishing = true;
        }
        let hs = dir * h;

        let stages = (|| -> Result<()> {
            for i in 0..n {
                ytmp[i] = y[i] + hs * A21 * k1[i];
            }
            f(t + C2 * hs, &ytmp, &mut k2)?;
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * hs, &ytmp, &mut k3)?;
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * hs, &ytmp, &mut k4)?;
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * hs, &ytmp, &mut k5)?;
            for i in 0..n {
                ytmp[i] = y[i]
                    + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(t + hs, &ytmp, &mut k6)?;
            for i in 0..n {
                ynew[i] = y[i]
                    + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t + hs, &ynew, &mut k7)?;
            Ok(())
        })();
        stats.evaluations += 6;

        let err = match stages {
            Ok(()) => {
                for i in 0..n {
                    errv[i] = hs
                        * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                }
                let e = err_norm(&y, &ynew, &errv, opts);
                if e.is_finite() {
                    e
                } else {
                    last_failure = "non-finite error estimate".into();
                    f64::INFINITY
                }
            }
            Err(e) => {
                last_failure = e.to_string();
                f64::INFINITY
            }
        };

        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.25;
            last_reject = true;
            continue;
        }

        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            // Accept.
            let mut fac = fac11 / fac_old.powf(PI_BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            fac_old = err.max(1e-4);
            stats.steps += 1;

            let t_new = if finishing { t_end } else { t + hs };
            if let Some(ts) = &sample_times {
                if next_sample < ts.len() && (ts[next_sample] - t_new) * dir <= 0.0 {
                    dense.t = t;
                    dense.h = hs;
                    for i in 0..n {
                        let dy = ynew[i] - y[i];
                        let bspl = hs * k1[i] - dy;
                        dense.r[0][i] = y[i];
                        dense.r[1][i] = dy;
                        dense.r[2][i] = bspl;
                        dense.r[3][i] = dy - hs * k7[i] - bspl;
                        dense.r[4][i] = hs
                            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                                + D7 * k7[i]);
                    }
                    while next_sample < ts.len() && (ts[next_sample] - t_new) * dir <= 0.0 {
                        let ts_k = ts[next_sample];
                        let mut yk = vec![0.0; n];
                        if ts_k == t_new {
                            yk.copy_from_slice(&ynew);
                        } else {
                            dense.eval(ts_k, &mut yk);
                        }
                        out_t.push(ts_k);
                        out_y.push(yk);
                        next_sample += 1;
                    }
                }
            } else {
                out_t.push(t_new);
                out_y.push(ynew.clone());
            }

            std::mem::swap(&mut k1, &mut k7);
            std::mem::swap(&mut y, &mut ynew);
            t = t_new;
            if finishing {
                break;
            }
            if let Some(hmax) = opts.h_max {
                h_new = h_new.min(hmax);
            }
            if last_reject {
                h_new = h_new.min(h);
            }
            last_reject = false;
            h = h_new;
        } else {
            stats.rejected += 1;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_reject = true;
            last_failure = format!("error estimate {err:e} could not be reduced");
        }
    }

    Ok(OdeSolution {
        t: out_t,
        y: out_y,
        stats,
    })
}
