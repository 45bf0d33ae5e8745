//! Hodgkin-Huxley membrane dynamics for a single-compartment neuron.
//!
//! ```text
//! C_m dV/dt = I_ext + I_syn - g_Na m^3 h (V - E_Na) - g_K n^4 (V - E_K) - g_L (V - E_L)
//! dx/dt     = alpha_x(V) (1 - x) - beta_x(V) x        for x in {m, h, n}
//! ```
//!
//! Units: mV, ms, uF/cm^2, mS/cm^2, uA/cm^2. Integration is classic fixed-step
//! RK4. Spikes are upward crossings of `v_thresh`; the long refractory period
//! is enforced when spikes are registered, not inside the channel kinetics.

use crate::error::{Error, Result};
use crate::kernel::{self, Rates, StepConstants};

/// Membrane, channel and spike-detection parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct HhParams {
    /// Membrane capacitance (uF/cm^2).
    pub c_m: f64,
    pub g_na: f64,
    pub g_k: f64,
    pub g_l: f64,
    pub e_na: f64,
    pub e_k: f64,
    pub e_l: f64,
    /// Spike detection threshold (mV), upward crossing.
    pub v_thresh: f64,
    /// Minimum interval between two registered spikes (ms).
    pub t_refrac: f64,
}

impl Default for HhParams {
    /// Squid giant axon set, rest near -65 mV.
    fn default() -> Self {
        Self {
            c_m: 1.0,
            g_na: 120.0,
            g_k: 36.0,
            g_l: 0.3,
            e_na: 50.0,
            e_k: -77.0,
            e_l: -54.4,
            v_thresh: 0.0,
            t_refrac: 25.0,
        }
    }
}

impl HhParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c_m,
            self.g_na,
            self.g_k,
            self.g_l,
            self.e_na,
            self.e_k,
            self.e_l,
            self.v_thresh,
            self.t_refrac,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("HH parameters"));
        }
        if self.c_m <= 0.0 {
            return Err(Error::InvalidParameter(format!("c_m must be > 0, got {}", self.c_m)));
        }
        if self.g_na < 0.0 || self.g_k < 0.0 || self.g_l < 0.0 {
            return Err(Error::InvalidParameter("conductances must be >= 0".into()));
        }
        if !(self.e_k < self.e_l && self.e_l < self.e_na) {
            return Err(Error::InvalidParameter(
                "reversal potentials must satisfy e_k < e_l < e_na".into(),
            ));
        }
        if self.t_refrac < 0.0 {
            return Err(Error::InvalidParameter("t_refrac must be >= 0".into()));
        }
        Ok(())
    }

    /// Resting state reached by integrating with zero input from -65 mV.
    ///
    /// The returned state is a fixed point of the RK4 map at `dt` to within
    /// floating-point noise, so a quiescent neuron started from it stays put.
    pub fn resting_state(&self, dt: f64) -> MembraneState {
        let mut state = MembraneState::steady_at(-65.0);
        let steps = (400.0 / dt).ceil() as usize;
        for _ in 0..steps {
            let next = rk4_const(&state, self, dt, 0.0);
            let settled = (next.v - state.v).abs() < 1e-13;
            state = next;
            if settled {
                break;
            }
        }
        state
    }
}

/// Membrane potential, gating variables and the last registered spike.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembraneState {
    pub v: f64,
    pub m: f64,
    pub h: f64,
    pub n: f64,
    pub t_last_spike: Option<f64>,
}

impl MembraneState {
    /// Gates at their steady-state values for a clamped potential `v`.
    pub fn steady_at(v: f64) -> Self {
        let r = Rates::at(v);
        Self {
            v,
            m: r.alpha_m / (r.alpha_m + r.beta_m),
            h: r.alpha_h / (r.alpha_h + r.beta_h),
            n: r.alpha_n / (r.alpha_n + r.beta_n),
            t_last_spike: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.m.is_finite() && self.h.is_finite() && self.n.is_finite()
    }

    pub fn gates_in_range(&self) -> bool {
        [self.m, self.h, self.n].iter().all(|x| (0.0..=1.0).contains(x))
    }
}

/// Rectangular current injection used for artificial stimulation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StimulusPulse {
    pub onset: f64,
    pub duration: f64,
    /// Current density (uA/cm^2).
    pub amplitude: f64,
}

impl StimulusPulse {
    pub const DEFAULT_DURATION: f64 = 1.0;
    pub const DEFAULT_AMPLITUDE: f64 = 40.0;

    pub fn at(onset: f64) -> Self {
        Self {
            onset,
            duration: Self::DEFAULT_DURATION,
            amplitude: Self::DEFAULT_AMPLITUDE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.amplitude.is_finite() || !self.onset.is_finite() {
            return Err(Error::InvalidParameter(format!("bad stimulus pulse {self:?}")));
        }
        Ok(())
    }

    pub fn current_at(&self, t: f64) -> f64 {
        if t >= self.onset && t < self.onset + self.duration {
            self.amplitude
        } else {
            0.0
        }
    }
}

/// One RK4 step with a constant injected current density.
pub(crate) fn rk4_const(s: &MembraneState, p: &HhParams, dt: f64, i_in: f64) -> MembraneState {
    let c = StepConstants::new(p, dt, 0.0, f64::INFINITY);
    let [v, m, h, n] = kernel::rk4_one([s.v, s.m, s.h, s.n], 0.0, i_in, &c);
    MembraneState {
        v,
        m,
        h,
        n,
        t_last_spike: s.t_last_spike,
    }
}

/// Advances `state` by `dt` with constant external and synaptic currents.
pub fn step(state: &MembraneState, params: &HhParams, i_ext: f64, i_syn: f64, dt: f64) -> Result<MembraneState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidTimeStep(dt));
    }
    if !state.is_finite() || !i_ext.is_finite() || !i_syn.is_finite() {
        return Err(Error::NonFinite("membrane step input"));
    }
    Ok(rk4_const(state, params, dt, i_ext + i_syn))
}

/// Interpolated time at which `v` crossed `thresh` upward during a step
/// starting at `t0`, or `None` if it did not.
#[inline]
pub fn upward_crossing(v_prev: f64, v_next: f64, thresh: f64, t0: f64, dt: f64) -> Option<f64> {
    if v_prev < thresh && v_next >= thresh {
        Some(t0 + dt * (thresh - v_prev) / (v_next - v_prev))
    } else {
        None
    }
}

#[inline]
pub fn refractory_elapsed(state: &MembraneState, params: &HhParams, t: f64) -> bool {
    state.t_last_spike.map_or(true, |last| t - last >= params.t_refrac)
}

/// Registers a spike at `t` if the potential crossed threshold upward between
/// `prev` and `next` and the refractory period since the last registered spike
/// has elapsed.
pub fn detect_spike(prev: &MembraneState, next: &mut MembraneState, params: &HhParams, t: f64) -> bool {
    let crossed = prev.v < params.v_thresh && next.v >= params.v_thresh;
    if crossed && refractory_elapsed(prev, params, t) {
        next.t_last_spike = Some(t);
        true
    } else {
        false
    }
}
