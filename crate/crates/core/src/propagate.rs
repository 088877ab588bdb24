// SPDX-License-Identifier: Apache-2.0

//! Fixed-step propagation of pure and mixed two-level states.
//!
//! The default integrator is the fourth-order commutator-free Magnus scheme
//! with two exponentials per step (Gauss–Legendre nodes). Each exponential is
//! closed-form for a traceless 2×2 generator, so pure states stay normalized
//! to rounding error. Classical RK4 on the state vector (or on the Lindblad
//! equation for mixed states) is available as an independent route.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, DriveConfig, Frame, Hamiltonian};
use crate::noise::Relaxation;
use crate::pauli::{self, Field, Ket, Mat2, C64};

/// Steps per period of the fastest term.
pub const STEPS_PER_PERIOD: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub enum StateRepr {
    Pure(Ket),
    Mixed(Mat2),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinState {
    pub repr: StateRepr,
    pub frame: Frame,
    pub t: f64,
}

impl SpinState {
    pub fn pure(psi: Ket, frame: Frame, t: f64) -> Self {
        Self {
            repr: StateRepr::Pure(psi),
            frame,
            t,
        }
    }

    pub fn mixed(rho: Mat2, frame: Frame, t: f64) -> Self {
        Self {
            repr: StateRepr::Mixed(rho),
            frame,
            t,
        }
    }

    /// Spin-up along `σ_z` at `t = 0`, where all frames coincide.
    pub fn ground() -> Self {
        Self::pure(pauli::ket0(), Frame::Lab, 0.0)
    }

    pub fn along(n: &Field, frame: Frame, t: f64) -> Self {
        Self::pure(pauli::ket_along(n), frame, t)
    }

    pub fn to_mixed(&self) -> Self {
        match &self.repr {
            StateRepr::Pure(psi) => Self::mixed(pauli::density(psi), self.frame, self.t),
            StateRepr::Mixed(_) => self.clone(),
        }
    }

    pub fn bloch(&self) -> Field {
        match &self.repr {
            StateRepr::Pure(psi) => pauli::ket_bloch(psi),
            StateRepr::Mixed(rho) => pauli::rho_bloch(rho),
        }
    }

    /// Populations of `|0⟩` and `|1⟩` in the state's own frame.
    pub fn populations(&self) -> [f64; 2] {
        match &self.repr {
            StateRepr::Pure(psi) => [psi[0].norm_sqr(), psi[1].norm_sqr()],
            StateRepr::Mixed(rho) => [rho[(0, 0)].re, rho[(1, 1)].re],
        }
    }

    pub fn norm(&self) -> f64 {
        match &self.repr {
            StateRepr::Pure(psi) => psi.norm(),
            StateRepr::Mixed(rho) => rho.trace().re,
        }
    }

    fn is_finite(&self) -> bool {
        match &self.repr {
            StateRepr::Pure(psi) => psi.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            StateRepr::Mixed(rho) => rho.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
        }
    }

    fn check_valid(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::NonFinite { t: self.t });
        }
        match &self.repr {
            StateRepr::Pure(psi) => {
                if (psi.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "pure state must be normalized, |psi| = {}",
                        psi.norm()
                    )));
                }
            }
            StateRepr::Mixed(rho) => {
                if (rho.trace().re - 1.0).abs() > 1e-9 || pauli::hermiticity_defect(rho) > 1e-9 {
                    return Err(Error::invalid("density matrix must be Hermitian with unit trace"));
                }
                if pauli::hermitian_eigenvalues(rho)[0] < -1e-10 {
                    return Err(Error::invalid("density matrix must be positive semidefinite"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Magnus4,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationSpec {
    pub step: f64,
    pub t_final: f64,
    /// Record a sample every this many steps.
    pub sample_every: usize,
    pub integrator: Integrator,
    pub relaxation: Option<Relaxation>,
}

impl PropagationSpec {
    pub fn new(step: f64, t_final: f64, sample_every: usize) -> Self {
        Self {
            step,
            t_final,
            sample_every: sample_every.max(1),
            integrator: Integrator::Magnus4,
            relaxation: None,
        }
    }

    /// Largest step the rule `step <= 1/(40 f_max)` admits for `h`.
    pub fn max_step(h: &(impl Hamiltonian + ?Sized)) -> f64 {
        let f_max = h.max_angular_frequency() / (2.0 * std::f64::consts::PI);
        if f_max > 0.0 {
            1.0 / (STEPS_PER_PERIOD * f_max)
        } else {
            f64::INFINITY
        }
    }

    /// A spec whose step divides `sample_dt` evenly and obeys `max_step`.
    pub fn for_sampling(sample_dt: f64, t_final: f64, max_step: f64) -> Self {
        let sub = if max_step.is_finite() {
            (sample_dt / max_step).ceil().max(1.0) as usize
        } else {
            1
        };
        Self::new(sample_dt / sub as f64, t_final, sub)
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn with_relaxation(mut self, relaxation: Option<Relaxation>) -> Self {
        self.relaxation = relaxation;
        self
    }

    pub fn steps(&self) -> usize {
        let n = self.t_final / self.step;
        // tolerate representation error in t_final / step
        if (n - n.round()).abs() < 1e-6 {
            n.round() as usize
        } else {
            n.ceil() as usize
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub label: String,
    pub seed: Option<u64>,
    pub trajectories: usize,
    /// Set when the samples sit on a stroboscopic grid of this period.
    pub strobe_period: Option<f64>,
}

/// A sampled trajectory: Bloch vectors and `σ_z` populations in `frame`.
/// Derived readout signals leave `bloch` empty and may carry a per-sample
/// standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub frame: Frame,
    pub times: Vec<f64>,
    pub p0: Vec<f64>,
    pub p1: Vec<f64>,
    pub bloch: Vec<[f64; 3]>,
    pub amplitudes: Option<Vec<[C64; 2]>>,
    pub stderr: Option<Vec<f64>>,
    pub meta: TraceMeta,
}

impl TraceRecord {
    pub fn empty(frame: Frame) -> Self {
        Self {
            frame,
            times: Vec::new(),
            p0: Vec::new(),
            p1: Vec::new(),
            bloch: Vec::new(),
            amplitudes: None,
            stderr: None,
            meta: TraceMeta::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push_state(&mut self, state: &SpinState) {
        let [p0, p1] = state.populations();
        let b = state.bloch();
        self.times.push(state.t);
        self.p0.push(p0);
        self.p1.push(p1);
        self.bloch.push([b.x, b.y, b.z]);
        if let (Some(amps), StateRepr::Pure(psi)) = (self.amplitudes.as_mut(), &state.repr) {
            amps.push([psi[0], psi[1]]);
        }
    }

    /// Builds a population-only signal trace (no Bloch data).
    pub fn from_signal(frame: Frame, times: Vec<f64>, p1: Vec<f64>) -> Self {
        let p0 = p1.iter().map(|p| 1.0 - p).collect();
        Self {
            frame,
            times,
            p0,
            p1,
            bloch: Vec::new(),
            amplitudes: None,
            stderr: None,
            meta: TraceMeta::default(),
        }
    }
}

/// Gauss–Legendre nodes and weights of the two-exponential CF4 scheme.
struct Cf4;

impl Cf4 {
    const SQRT3: f64 = 1.732_050_807_568_877_2;
    const C1: f64 = 0.5 - Self::SQRT3 / 6.0;
    const C2: f64 = 0.5 + Self::SQRT3 / 6.0;
    const A1: f64 = (3.0 - 2.0 * Self::SQRT3) / 12.0;
    const A2: f64 = (3.0 + 2.0 * Self::SQRT3) / 12.0;

    fn step_unitary(h: &(impl Hamiltonian + ?Sized), t: f64, dt: f64) -> Mat2 {
        let h1 = h.field(t + Self::C1 * dt);
        let h2 = h.field(t + Self::C2 * dt);
        let first = pauli::propagator(&(h1 * Self::A2 + h2 * Self::A1), dt);
        let second = pauli::propagator(&(h1 * Self::A1 + h2 * Self::A2), dt);
        second * first
    }
}

const MINUS_I: C64 = C64::new(0.0, -1.0);

fn rk4_pure(h: &(impl Hamiltonian + ?Sized), psi: &Ket, t: f64, dt: f64) -> Ket {
    let f = |t: f64, y: &Ket| -> Ket { (h.matrix(t) * y) * MINUS_I };
    let k1 = f(t, psi);
    let k2 = f(t + 0.5 * dt, &(psi + k1 * C64::from(0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(psi + k2 * C64::from(0.5 * dt)));
    let k4 = f(t + dt, &(psi + k3 * C64::from(dt)));
    psi + (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(dt / 6.0)
}

fn rk4_mixed(
    h: &(impl Hamiltonian + ?Sized),
    relax: Option<&Relaxation>,
    rho: &Mat2,
    t: f64,
    dt: f64,
) -> Mat2 {
    let f = |t: f64, r: &Mat2| -> Mat2 {
        let hm = h.matrix(t);
        let mut d = (hm * r - r * hm) * MINUS_I;
        if let Some(relax) = relax {
            d += relax.dissipator(r);
        }
        d
    };
    let k1 = f(t, rho);
    let k2 = f(t + 0.5 * dt, &(rho + k1 * C64::from(0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(rho + k2 * C64::from(0.5 * dt)));
    let k4 = f(t + dt, &(rho + k3 * C64::from(dt)));
    rho + (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(dt / 6.0)
}

/// Advances `state` by one step of length `dt`.
pub fn step(
    h: &(impl Hamiltonian + ?Sized),
    spec: &PropagationSpec,
    state: &mut SpinState,
    dt: f64,
) {
    let t = state.t;
    match (&mut state.repr, spec.integrator) {
        (StateRepr::Pure(psi), Integrator::Magnus4) => {
            *psi = Cf4::step_unitary(h, t, dt) * *psi;
        }
        (StateRepr::Pure(psi), Integrator::Rk4) => {
            *psi = rk4_pure(h, psi, t, dt);
        }
        (StateRepr::Mixed(rho), Integrator::Magnus4) => {
            // Strang splitting: half relaxation, unitary, half relaxation
            let u = Cf4::step_unitary(h, t, dt);
            let mut r = *rho;
            if let Some(relax) = &spec.relaxation {
                r = relax.apply(&r, 0.5 * dt);
            }
            r = u * r * u.adjoint();
            if let Some(relax) = &spec.relaxation {
                r = relax.apply(&r, 0.5 * dt);
            }
            *rho = r;
        }
        (StateRepr::Mixed(rho), Integrator::Rk4) => {
            *rho = rk4_mixed(h, spec.relaxation.as_ref(), rho, t, dt);
        }
    }
    state.t = t + dt;
}

/// Integrates `state` under `h`, sampling every `spec.sample_every` steps
/// (the initial state is always sampled).
pub fn evolve(
    state: &SpinState,
    h: &(impl Hamiltonian + ?Sized),
    spec: &PropagationSpec,
) -> Result<TraceRecord> {
    let mut trace = TraceRecord::empty(h.frame());
    if matches!(state.repr, StateRepr::Pure(_)) {
        trace.amplitudes = Some(Vec::new());
    }
    evolve_with(state, h, spec, |s| trace.push_state(s))?;
    trace.meta.trajectories = 1;
    Ok(trace)
}

/// Like [`evolve`], handing every sampled state to `on_sample` instead of
/// recording it. Returns the final state.
pub fn evolve_with(
    state: &SpinState,
    h: &(impl Hamiltonian + ?Sized),
    spec: &PropagationSpec,
    mut on_sample: impl FnMut(&SpinState),
) -> Result<SpinState> {
    if state.frame != h.frame() {
        return Err(Error::invalid(format!(
            "state is in frame {:?} but the Hamiltonian is in {:?}",
            state.frame,
            h.frame()
        )));
    }
    if !(spec.step > 0.0) || !(spec.t_final >= 0.0) {
        return Err(Error::invalid("step must be > 0 and t_final >= 0"));
    }
    let max_step = PropagationSpec::max_step(h);
    if spec.step > max_step * (1.0 + 1e-9) {
        return Err(Error::StepTooLarge {
            step: spec.step,
            f_max: h.max_angular_frequency() / (2.0 * std::f64::consts::PI),
            required: max_step,
        });
    }
    if spec.relaxation.is_some() {
        if matches!(state.repr, StateRepr::Pure(_)) {
            return Err(Error::invalid(
                "relaxation needs a density-matrix state; promote with SpinState::to_mixed",
            ));
        }
        if !matches!(h.frame(), Frame::Lab | Frame::Ip1) {
            return Err(Error::invalid("relaxation is only defined in the lab and IP1 frames"));
        }
    }
    state.check_valid()?;

    let t0 = state.t;
    let n = spec.steps();
    let mut s = state.clone();
    on_sample(&s);
    for k in 0..n {
        let dt = if k + 1 == n {
            t0 + spec.t_final - s.t
        } else {
            spec.step
        };
        step(h, spec, &mut s, dt);
        // pin the clock to the grid rather than accumulating rounding
        s.t = if k + 1 == n {
            t0 + spec.t_final
        } else {
            t0 + (k + 1) as f64 * spec.step
        };
        if (k + 1) % spec.sample_every == 0 || k + 1 == n {
            if !s.is_finite() {
                return Err(Error::NonFinite { t: s.t });
            }
            on_sample(&s);
        }
    }
    Ok(s)
}

/// Re-expresses `state` in frame `to` at the state's own time.
pub fn transform(state: &SpinState, cfg: &DriveConfig, to: Frame) -> SpinState {
    if state.frame == to {
        return state.clone();
    }
    let u_from = model::frame_unitary(cfg, state.frame, state.t);
    let u_to = model::frame_unitary(cfg, to, state.t);
    let w = u_to.adjoint() * u_from;
    let repr = match &state.repr {
        StateRepr::Pure(psi) => StateRepr::Pure(w * psi),
        StateRepr::Mixed(rho) => StateRepr::Mixed(w * rho * w.adjoint()),
    };
    SpinState {
        repr,
        frame: to,
        t: state.t,
    }
}

/// Rotates a Bloch vector sampled at time `t` from frame `from` into `to`.
pub fn transform_bloch(cfg: &DriveConfig, b: &Field, t: f64, from: Frame, to: Frame) -> Field {
    if from == to {
        return *b;
    }
    let w = model::frame_unitary(cfg, to, t).adjoint() * model::frame_unitary(cfg, from, t);
    let rho = pauli::rho_from_bloch(b);
    pauli::rho_bloch(&(w * rho * w.adjoint()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame: Frame,
    /// Max over the sample grid of the trace distance between exact and RWA evolution.
    pub max_trace_distance: f64,
    /// The small parameter this frame's approximation is expanded in.
    pub expansion_parameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwaErrorReport {
    pub t_final: f64,
    pub n_samples: usize,
    /// One entry per frame whose analytic form is available.
    pub frames: Vec<FrameError>,
}

impl RwaErrorReport {
    pub fn get(&self, frame: Frame) -> Option<&FrameError> {
        self.frames.iter().find(|f| f.frame == frame)
    }
}

/// Compares exact lab-frame evolution, viewed in each dressed frame, with
/// evolution under that frame's rotating-wave Hamiltonian. Starts from `|0⟩`.
pub fn rwa_error(cfg: &DriveConfig, t_final: f64, n_samples: usize) -> Result<RwaErrorReport> {
    rwa_error_from(cfg, &pauli::ket0(), t_final, n_samples)
}

pub fn rwa_error_from(
    cfg: &DriveConfig,
    initial: &Ket,
    t_final: f64,
    n_samples: usize,
) -> Result<RwaErrorReport> {
    if n_samples == 0 || !(t_final > 0.0) {
        return Err(Error::invalid("rwa_error needs t_final > 0 and at least one sample"));
    }
    let lab = model::lab_hamiltonian(cfg);
    let sample_dt = t_final / n_samples as f64;
    let spec = PropagationSpec::for_sampling(sample_dt, t_final, PropagationSpec::max_step(&lab));
    let start = SpinState::pure(*initial, Frame::Lab, 0.0);
    let exact = evolve(&start, &lab, &spec)?;
    let exact_states: Vec<SpinState> = exact
        .amplitudes
        .as_ref()
        .expect("pure evolution records amplitudes")
        .iter()
        .zip(&exact.times)
        .map(|(a, &t)| SpinState::pure(Ket::new(a[0], a[1]), Frame::Lab, t))
        .collect();

    let mut frames = Vec::new();
    for frame in [Frame::Ip1, Frame::Ip2, Frame::Ip3] {
        let Ok(rwa) = model::ip_hamiltonian(cfg, frame) else {
            continue;
        };
        let approx = evolve(&SpinState::pure(*initial, frame, 0.0), &rwa, &spec)?;
        let approx_amps = approx.amplitudes.as_ref().expect("pure evolution");
        let mut worst: f64 = 0.0;
        for (exact_state, a) in exact_states.iter().zip(approx_amps) {
            let viewed = transform(exact_state, cfg, frame);
            let StateRepr::Pure(psi) = viewed.repr else {
                unreachable!()
            };
            worst = worst.max(pauli::pure_trace_distance(&psi, &Ket::new(a[0], a[1])));
        }
        let expansion_parameter = match frame {
            Frame::Ip1 => cfg.omega1 / cfg.omega0,
            Frame::Ip2 => cfg.omega2 / cfg.omega1,
            _ => cfg.g / cfg.omega2,
        };
        frames.push(FrameError {
            frame,
            max_trace_distance: worst,
            expansion_parameter,
        });
    }
    Ok(RwaErrorReport {
        t_final,
        n_samples,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn scaled(phi: f64) -> DriveConfig {
        DriveConfig::on_resonance(TAU * 500.0, TAU * 10.0, TAU * 1.5, TAU * 0.2, phi)
    }

    #[test]
    fn free_evolution_phase() {
        let cfg = DriveConfig {
            omega1: 0.0,
            omega2: 0.0,
            g: 0.0,
            ..scaled(0.0)
        };
        let h = model::lab_hamiltonian(&cfg);
        let spec = PropagationSpec::for_sampling(0.01, 0.5, PropagationSpec::max_step(&h));
        let trace = evolve(&SpinState::ground(), &h, &spec).unwrap();
        let amps = trace.amplitudes.as_ref().unwrap();
        for ((t, a), p0) in trace.times.iter().zip(amps).zip(&trace.p0) {
            assert_relative_eq!(*p0, 1.0, epsilon = 1e-12);
            let expected = C64::from_polar(1.0, -0.5 * cfg.omega0 * t);
            assert!((a[0] - expected).norm() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn step_rule_is_enforced() {
        let h = model::lab_hamiltonian(&scaled(0.0));
        let max = PropagationSpec::max_step(&h);
        let spec = PropagationSpec::new(max * 1.5, 1.0, 1);
        match evolve(&SpinState::ground(), &h, &spec) {
            Err(Error::StepTooLarge { f_max, required, .. }) => {
                assert_relative_eq!(required, max, max_relative = 1e-12);
                assert!(f_max > 500.0);
            }
            other => panic!("expected StepTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn frame_mismatch_and_bad_norm_rejected() {
        let h = model::ip_hamiltonian(&scaled(0.0), Frame::Ip1).unwrap();
        let spec = PropagationSpec::new(1e-3, 0.01, 1);
        assert!(evolve(&SpinState::ground(), &h, &spec).is_err());
        let bad = SpinState::pure(Ket::new(C64::from(1.0), C64::from(1.0)), Frame::Ip1, 0.0);
        assert!(evolve(&bad, &h, &spec).is_err());
    }

    #[test]
    fn unitarity_over_a_million_steps() {
        let h = model::lab_hamiltonian(&scaled(0.4));
        let max = PropagationSpec::max_step(&h);
        let spec = PropagationSpec::new(max, max * 1e6, 1_000_000);
        let start = SpinState::along(&Field::new(0.3, 0.4, 0.5), Frame::Lab, 0.0);
        let trace = evolve(&start, &h, &spec).unwrap();
        let last = trace.amplitudes.unwrap().last().copied().unwrap();
        let norm = (last[0].norm_sqr() + last[1].norm_sqr()).sqrt();
        assert!((norm - 1.0).abs() < 1e-9, "norm drift {}", norm - 1.0);
    }

    #[test]
    fn halving_the_step_converges() {
        let cfg = scaled(0.7);
        let h = model::lab_hamiltonian(&cfg);
        let t_final = 2.0;
        let max = PropagationSpec::max_step(&h);
        let n = (t_final / max).ceil();
        let coarse = PropagationSpec::new(t_final / n, t_final, usize::MAX);
        let fine = PropagationSpec::new(t_final / (2.0 * n), t_final, usize::MAX);
        let a = evolve(&SpinState::ground(), &h, &coarse).unwrap();
        let b = evolve(&SpinState::ground(), &h, &fine).unwrap();
        let last = |t: &TraceRecord| {
            let a = *t.amplitudes.as_ref().unwrap().last().unwrap();
            Ket::new(a[0], a[1])
        };
        let fidelity = last(&a).dotc(&last(&b)).norm_sqr();
        assert!(1.0 - fidelity < 1e-8, "infidelity {}", 1.0 - fidelity);
    }

    #[test]
    fn rk4_and_magnus_agree() {
        let cfg = scaled(0.2);
        let h = model::ip_hamiltonian(&cfg, Frame::Ip1).unwrap();
        let max = PropagationSpec::max_step(&h);
        let spec = PropagationSpec::new(max / 4.0, 5.0, usize::MAX);
        let start = SpinState::pure(pauli::ket0(), Frame::Ip1, 0.0);
        let a = evolve(&start, &h, &spec).unwrap();
        let b = evolve(&start, &h, &spec.with_integrator(Integrator::Rk4)).unwrap();
        let ba = a.bloch.last().unwrap();
        let bb = b.bloch.last().unwrap();
        for k in 0..3 {
            assert_relative_eq!(ba[k], bb[k], epsilon = 1e-7);
        }
    }

    #[test]
    fn mixed_and_pure_agree_without_relaxation() {
        let cfg = scaled(1.1);
        let h = model::ip_hamiltonian(&cfg, Frame::Ip1).unwrap();
        let spec = PropagationSpec::for_sampling(0.1, 3.0, PropagationSpec::max_step(&h));
        let start = SpinState::pure(pauli::ket0(), Frame::Ip1, 0.0);
        let a = evolve(&start, &h, &spec).unwrap();
        let b = evolve(&start.to_mixed(), &h, &spec).unwrap();
        for (x, y) in a.bloch.iter().zip(&b.bloch) {
            for k in 0..3 {
                assert_relative_eq!(x[k], y[k], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn transform_identities() {
        let cfg = scaled(0.5);
        let s = SpinState::along(&Field::new(0.2, -0.7, 0.4), Frame::Lab, 1.2345);
        assert_eq!(transform(&s, &cfg, Frame::Lab), s);

        let g = SpinState::ground();
        let moved = transform(&g, &cfg, Frame::Ip3);
        let StateRepr::Pure(psi) = moved.repr else { panic!() };
        assert!((psi - pauli::ket0()).norm() < 1e-15);

        let there = transform(&s, &cfg, Frame::Ip2);
        let back = transform(&there, &cfg, Frame::Lab);
        let (StateRepr::Pure(a), StateRepr::Pure(b)) = (&s.repr, &back.repr) else { panic!() };
        assert!((a - b).norm() < 1e-12);
        assert_relative_eq!(there.norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn transform_bloch_matches_state_transform() {
        let cfg = scaled(0.5);
        let s = SpinState::along(&Field::new(0.6, 0.0, 0.8), Frame::Lab, 0.731);
        let viewed = transform(&s, &cfg, Frame::Ip3).bloch();
        let rotated = transform_bloch(&cfg, &s.bloch(), s.t, Frame::Lab, Frame::Ip3);
        assert_relative_eq!((viewed - rotated).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rwa_error_vanishes_for_free_evolution() {
        let cfg = DriveConfig {
            omega1: 0.0,
            omega2: 0.0,
            g: 0.0,
            ..scaled(0.0)
        };
        let report = rwa_error(&cfg, 1.0, 20).unwrap();
        assert_eq!(report.frames.len(), 1);
        assert!(report.get(Frame::Ip1).unwrap().max_trace_distance < 1e-9);
    }
}
