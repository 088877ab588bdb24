// SPDX-License-Identifier: Apache-2.0

//! Damped-oscillation fits, `S(t) = A·exp(−(t/T₂)^p)·cos(2πft + φ₀) + B`.
//!
//! Levenberg–Marquardt on `(A, B, f, φ₀, ln T₂, p)` with `p` projected onto
//! its bounds. Starts come from a periodogram evaluated directly on the
//! sample times (so uneven grids work), and for each trial `(f, T₂, p)` the
//! linear parameters are solved exactly before iterating.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    DampedCosine,
    /// `A·exp(−(t/T₂)^p) + B`.
    DecayOnly,
    /// Constant trace; only `B` is meaningful.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// `None` picks a model from the data.
    pub model: Option<FitModel>,
    pub fixed_p: Option<f64>,
    pub fixed_offset: Option<f64>,
    pub p_bounds: (f64, f64),
    pub max_iterations: usize,
    /// Oscillation periods the window must span for a damped-cosine fit.
    pub min_periods: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            model: None,
            fixed_p: None,
            fixed_offset: None,
            p_bounds: (0.5, 3.0),
            max_iterations: 400,
            min_periods: 1.5,
        }
    }
}

/// One-sigma uncertainties; zero for parameters that were held fixed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitErrors {
    pub amplitude: f64,
    pub offset: f64,
    pub frequency: f64,
    pub phase: f64,
    pub t2: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiFit {
    pub model: FitModel,
    pub amplitude: f64,
    pub offset: f64,
    /// Cycles per time unit.
    pub frequency: f64,
    pub phase: f64,
    pub t2: f64,
    pub p: f64,
    pub errors: FitErrors,
    /// Row-major 6×6 in the order `A, B, f, φ₀, T₂, p`.
    pub covariance: Vec<f64>,
    /// `√Σ(y − S)²`, unweighted.
    pub residual_norm: f64,
    /// `χ²/(n − k)` with the supplied standard errors, when there were any.
    pub reduced_chi2: Option<f64>,
    pub n_samples: usize,
    pub iterations: usize,
}

impl RabiFit {
    pub fn evaluate(&self, t: f64) -> f64 {
        let envelope = if self.t2.is_finite() {
            (-(t / self.t2).powf(self.p)).exp()
        } else {
            1.0
        };
        self.amplitude
            * envelope
            * (2.0 * std::f64::consts::PI * self.frequency * t + self.phase).cos()
            + self.offset
    }

    pub fn angular_frequency(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency
    }
}

const N_PARAMS: usize = 6;
const IA: usize = 0;
const IB: usize = 1;
const IF: usize = 2;
const IPHI: usize = 3;
const ILT: usize = 4;
const IP: usize = 5;

struct Problem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
    free: [bool; N_PARAMS],
    p_bounds: (f64, f64),
    /// Bounds on `ln T₂`.
    lt_bounds: (f64, f64),
}

impl Problem<'_> {
    fn model(&self, th: &[f64; N_PARAMS], t: f64) -> f64 {
        let env = envelope(t, th[ILT].exp(), th[IP]);
        th[IA] * env * (2.0 * std::f64::consts::PI * th[IF] * t + th[IPHI]).cos() + th[IB]
    }

    fn residuals(&self, th: &[f64; N_PARAMS]) -> Vec<f64> {
        self.t
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((&t, &y), &w)| w * (y - self.model(th, t)))
            .collect()
    }

    fn cost(&self, th: &[f64; N_PARAMS]) -> f64 {
        self.residuals(th).iter().map(|r| r * r).sum()
    }

    /// Weighted Jacobian of the model (not the residual), free columns only.
    fn jacobian(&self, th: &[f64; N_PARAMS], cols: &[usize]) -> DMatrix<f64> {
        let t2 = th[ILT].exp();
        let mut jac = DMatrix::zeros(self.t.len(), cols.len());
        for (i, (&t, &w)) in self.t.iter().zip(&self.w).enumerate() {
            let arg = 2.0 * std::f64::consts::PI * th[IF] * t + th[IPHI];
            let (s, c) = arg.sin_cos();
            let x = t / t2;
            let u = if x > 0.0 { x.powf(th[IP]) } else { 0.0 };
            let env = (-u).exp();
            for (j, &k) in cols.iter().enumerate() {
                let d = match k {
                    IA => env * c,
                    IB => 1.0,
                    IF => -th[IA] * env * s * 2.0 * std::f64::consts::PI * t,
                    IPHI => -th[IA] * env * s,
                    ILT => th[IA] * c * env * th[IP] * u,
                    IP => {
                        if x > 0.0 {
                            -th[IA] * c * env * u * x.ln()
                        } else {
                            0.0
                        }
                    }
                    _ => unreachable!(),
                };
                jac[(i, j)] = w * d;
            }
        }
        jac
    }

    fn project(&self, th: &mut [f64; N_PARAMS]) {
        th[IP] = th[IP].clamp(self.p_bounds.0, self.p_bounds.1);
        // beyond a thousand windows either way the decay is unresolved
        th[ILT] = th[ILT].clamp(self.lt_bounds.0, self.lt_bounds.1);
    }
}

fn envelope(t: f64, t2: f64, p: f64) -> f64 {
    let x = t / t2;
    if x > 0.0 {
        (-x.powf(p)).exp()
    } else {
        1.0
    }
}

struct LmOutcome {
    theta: [f64; N_PARAMS],
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(pb: &Problem, start: [f64; N_PARAMS], max_iter: usize) -> LmOutcome {
    let all: Vec<usize> = (0..N_PARAMS).filter(|&k| pb.free[k]).collect();
    let mut th = start;
    pb.project(&mut th);
    let mut cost = pb.cost(&th);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let r = DVector::from_vec(pb.residuals(&th));
        let full = pb.jacobian(&th, &all);
        let full_grad = full.transpose() * &r;
        // a parameter pinned at a bound with the gradient pushing outward drops out
        let cols: Vec<usize> = all
            .iter()
            .enumerate()
            .filter(|&(j, &k)| {
                let (lo, hi) = match k {
                    IP => pb.p_bounds,
                    ILT => pb.lt_bounds,
                    _ => return true,
                };
                !((th[k] >= hi && full_grad[j] > 0.0) || (th[k] <= lo && full_grad[j] < 0.0))
            })
            .map(|(_, &k)| k)
            .collect();
        let jac = if cols.len() == all.len() { full } else { pb.jacobian(&th, &cols) };
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..cols.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&grad)) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial = th;
            for (j, &k) in cols.iter().enumerate() {
                trial[k] += step[j];
            }
            pb.project(&mut trial);
            let trial_cost = pb.cost(&trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let drop = cost - trial_cost;
                th = trial;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                let step_small = step.norm() <= 1e-13 * (1.0 + th.iter().map(|x| x * x).sum::<f64>().sqrt());
                if drop <= 1e-12 * cost + 1e-300 || step_small {
                    return LmOutcome {
                        theta: th,
                        cost,
                        iterations,
                        converged: true,
                    };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no descent direction left: stationary point
            return LmOutcome {
                theta: th,
                cost,
                iterations,
                converged: true,
            };
        }
    }
    LmOutcome {
        theta: th,
        cost,
        iterations,
        converged: false,
    }
}

/// Periodogram `|Σ (y − ȳ) e^{−2πift}|²` on a 4× zero-padded grid up to the
/// Nyquist frequency of the smallest spacing.
pub fn periodogram(t: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let n = t.len();
    if n < 2 {
        return Vec::new();
    }
    let span = t[n - 1] - t[0];
    let mean = y.iter().sum::<f64>() / n as f64;
    let dt_min = t
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let df = 1.0 / (4.0 * span);
    let k_max = ((0.5 / dt_min) / df).floor().min(20_000.0) as usize;
    (0..=k_max)
        .map(|k| {
            let f = k as f64 * df;
            let (mut re, mut im) = (0.0, 0.0);
            for (&ti, &yi) in t.iter().zip(y) {
                let (s, c) = (2.0 * std::f64::consts::PI * f * ti).sin_cos();
                re += (yi - mean) * c;
                im -= (yi - mean) * s;
            }
            (f, re * re + im * im)
        })
        .collect()
}

/// Local maxima of the periodogram, strongest first; equal powers keep the
/// lower frequency first.
fn spectral_peaks(spec: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut peaks: Vec<(f64, f64)> = (0..spec.len())
        .filter(|&k| {
            let left = k == 0 || spec[k].1 > spec[k - 1].1;
            let right = k + 1 == spec.len() || spec[k].1 >= spec[k + 1].1;
            left && right
        })
        .map(|k| spec[k])
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    peaks
}

/// Solves the parameters that enter linearly (`A cos φ₀`, `A sin φ₀`, `B`)
/// for a trial `(f, T₂, p)`.
fn linear_start(pb: &Problem, f: f64, t2: f64, p: f64, oscillating: bool, offset: Option<f64>) -> Option<[f64; N_PARAMS]> {
    let n_lin = if oscillating { 2 } else { 1 } + usize::from(offset.is_none());
    let mut a = DMatrix::zeros(pb.t.len(), n_lin);
    let mut b = DVector::zeros(pb.t.len());
    for (i, ((&t, &y), &w)) in pb.t.iter().zip(pb.y).zip(&pb.w).enumerate() {
        let env = envelope(t, t2, p);
        let (s, c) = (2.0 * std::f64::consts::PI * f * t).sin_cos();
        let mut col = 0;
        if oscillating {
            a[(i, 0)] = w * env * c;
            a[(i, 1)] = -w * env * s;
            col = 2;
        } else {
            a[(i, 0)] = w * env;
            col += 1;
        }
        if offset.is_none() {
            a[(i, col)] = w;
        }
        b[i] = w * (y - offset.unwrap_or(0.0));
    }
    let sol = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let (amp, phase) = if oscillating {
        (sol[0].hypot(sol[1]), sol[1].atan2(sol[0]))
    } else {
        (sol[0], 0.0)
    };
    let off = offset.unwrap_or_else(|| sol[n_lin - 1]);
    Some([amp, off, f, phase, t2.ln(), p])
}

/// Fits `values(times)`, weighting by `stderr` when given.
pub fn fit_signal(
    times: &[f64],
    values: &[f64],
    stderr: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<RabiFit> {
    let n = times.len();
    if values.len() != n || stderr.is_some_and(|s| s.len() != n) {
        return Err(Error::invalid("times, values and stderr must have equal lengths"));
    }
    if n < 4 {
        return Err(Error::invalid("at least 4 samples are needed for a fit"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("sample times must be strictly increasing"));
    }
    if values.iter().chain(times).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    let (lo, hi) = opts.p_bounds;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::invalid("p bounds must satisfy 0 < low <= high"));
    }

    let weights = weights_from(stderr, n);
    let span = times[n - 1] - times[0];
    let mean = values.iter().sum::<f64>() / n as f64;
    let spread = values.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Ok(flat_fit(values, mean, n, opts));
    }

    let spec = periodogram(times, values);
    let peaks = spectral_peaks(&spec);
    let model = match opts.model {
        Some(m) => m,
        None => {
            let oscillates = n >= 8
                && peaks
                    .first()
                    .is_some_and(|&(f, _)| f > 0.0 && f * span >= opts.min_periods);
            if oscillates {
                FitModel::DampedCosine
            } else {
                FitModel::DecayOnly
            }
        }
    };
    let oscillating = match model {
        FitModel::DampedCosine => true,
        FitModel::DecayOnly => false,
        FitModel::Flat => return Ok(flat_fit(values, mean, n, opts)),
    };

    let mut free = [true; N_PARAMS];
    if !oscillating {
        free[IF] = false;
        free[IPHI] = false;
    }
    if opts.fixed_offset.is_some() {
        free[IB] = false;
    }
    if opts.fixed_p.is_some() {
        free[IP] = false;
    }
    let pb = Problem {
        t: times,
        y: values,
        w: weights.clone().unwrap_or_else(|| vec![1.0; n]),
        free,
        p_bounds: opts
            .fixed_p
            .map_or(opts.p_bounds, |p| (p, p)),
        lt_bounds: {
            let reach = times[n - 1].abs().max(span);
            ((1e-3 * reach).ln(), (1e3 * reach).ln())
        },
    };

    let freqs: Vec<f64> = if oscillating {
        let mut f: Vec<f64> = peaks.iter().filter(|p| p.0 > 0.0).take(3).map(|p| p.0).collect();
        if f.is_empty() {
            f.push(1.0 / span);
        }
        f
    } else {
        vec![0.0]
    };
    let t2s = [span / 3.0, span, 3.0 * span, 10.0 * span];
    let ps: Vec<f64> = match opts.fixed_p {
        Some(p) => vec![p],
        None => [1.0f64, 2.0].iter().map(|p| p.clamp(lo, hi)).collect(),
    };

    let mut best: Option<LmOutcome> = None;
    for &f in &freqs {
        for &t2 in &t2s {
            for &p in &ps {
                let Some(start) = linear_start(&pb, f, t2, p, oscillating, opts.fixed_offset) else {
                    continue;
                };
                let out = levenberg_marquardt(&pb, start, opts.max_iterations);
                if best.as_ref().map_or(true, |b| out.cost < b.cost) {
                    best = Some(out);
                }
            }
        }
    }
    let best = best.ok_or_else(|| Error::invalid("no usable starting point for the fit"))?;
    let fit = finish(&pb, &best, model, weights.is_some());
    if !best.converged {
        return Err(Error::FitNonConvergence {
            iterations: best.iterations,
            residual: fit.residual_norm,
            best: Box::new(fit),
        });
    }
    Ok(fit)
}

/// `1/max(se, se_median/10)`; `None` when no usable errors were given.
fn weights_from(stderr: Option<&[f64]>, n: usize) -> Option<Vec<f64>> {
    let se = stderr?;
    if se.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return None;
    }
    let mut sorted = se.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    if !(median > 0.0) {
        return None;
    }
    let floor = 0.1 * median;
    Some(se.iter().map(|s| 1.0 / s.max(floor)).collect())
}

fn flat_fit(values: &[f64], mean: f64, n: usize, opts: &FitOptions) -> RabiFit {
    let offset = opts.fixed_offset.unwrap_or(mean);
    let residual_norm = values.iter().map(|v| (v - offset).powi(2)).sum::<f64>().sqrt();
    RabiFit {
        model: FitModel::Flat,
        amplitude: 0.0,
        offset,
        frequency: 0.0,
        phase: 0.0,
        t2: f64::INFINITY,
        p: opts.fixed_p.unwrap_or(1.0),
        errors: FitErrors::default(),
        covariance: vec![0.0; N_PARAMS * N_PARAMS],
        residual_norm,
        reduced_chi2: None,
        n_samples: n,
        iterations: 0,
    }
}

fn finish(pb: &Problem, out: &LmOutcome, model: FitModel, weighted: bool) -> RabiFit {
    let th = out.theta;
    let cols: Vec<usize> = (0..N_PARAMS).filter(|&k| pb.free[k]).collect();
    let n = pb.t.len();
    let dof = n.saturating_sub(cols.len()).max(1) as f64;
    let jac = pb.jacobian(&th, &cols);
    let jtj = jac.transpose() * &jac;
    let inv = jtj
        .clone()
        .try_inverse()
        .unwrap_or_else(|| jtj.pseudo_inverse(1e-14).unwrap_or_else(|_| DMatrix::zeros(cols.len(), cols.len())));
    let chi2 = out.cost / dof;
    let scale = if weighted { 1.0 } else { chi2 };

    let t2 = th[ILT].exp();
    // chain rule from ln T₂ to T₂
    let jac_scale = |k: usize| if k == ILT { t2 } else { 1.0 };
    let mut cov = vec![0.0; N_PARAMS * N_PARAMS];
    for (a, &ka) in cols.iter().enumerate() {
        for (b, &kb) in cols.iter().enumerate() {
            cov[ka * N_PARAMS + kb] = inv[(a, b)] * scale * jac_scale(ka) * jac_scale(kb);
        }
    }
    let sd = |k: usize| cov[k * N_PARAMS + k].max(0.0).sqrt();

    let (mut amp, mut freq, mut phase) = (th[IA], th[IF], th[IPHI]);
    if model == FitModel::DampedCosine {
        if freq < 0.0 {
            freq = -freq;
            phase = -phase;
        }
        if amp < 0.0 {
            amp = -amp;
            phase += std::f64::consts::PI;
        }
        phase = wrap_phase(phase);
    }
    let residual_norm = pb
        .t
        .iter()
        .zip(pb.y)
        .map(|(&t, &y)| (y - pb.model(&th, t)).powi(2))
        .sum::<f64>()
        .sqrt();
    RabiFit {
        model,
        amplitude: amp,
        offset: th[IB],
        frequency: freq,
        phase,
        t2,
        p: th[IP],
        errors: FitErrors {
            amplitude: sd(IA),
            offset: sd(IB),
            frequency: sd(IF),
            phase: sd(IPHI),
            t2: sd(ILT),
            p: sd(IP),
        },
        covariance: cov,
        residual_norm,
        reduced_chi2: weighted.then_some(chi2),
        n_samples: n,
        iterations: out.iterations,
    }
}

fn wrap_phase(phase: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    let mut p = phase.rem_euclid(tau);
    if p > std::f64::consts::PI {
        p -= tau;
    }
    p
}
