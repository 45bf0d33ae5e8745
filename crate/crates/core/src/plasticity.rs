//! Trace-based STDP.
//!
//! Every pre-synaptic spike bumps the pre trace `P` and depresses the weight in
//! proportion to the decayed post trace `Q`; every post-synaptic spike bumps `Q`
//! and potentiates in proportion to the decayed `P`:
//!
//! ```text
//! P  <- P exp((t'_pre  - t_pre)  / tau_ltp) + A_ltp
//! Q  <- Q exp((t'_post - t_post) / tau_ltd) + A_ltd
//! dw_q = a_ltd Q exp((t_post - t_pre) / tau_ltd)      on a pre spike after a post spike
//! dw_p = a_ltp P exp((t_pre - t_post) / tau_ltp)      on a post spike after a pre spike
//! ```
//!
//! With `A_ltd < 0` the depression term is negative. Traces accumulate over all
//! spikes. A trace with no previous spike has decay factor 0 and triggers no
//! pairing. Simultaneous pre and post spikes are processed pre first.
//!
//! All pre-synaptic traces of one input neuron are identical, as are all
//! post-synaptic traces of one output neuron, so the network stores one
//! [`Trace`] per neuron and shares the same update functions used here.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StdpParams {
    pub tau_ltp: f64,
    pub tau_ltd: f64,
    /// Pre trace increment `A_ltp`.
    pub amp_ltp: f64,
    /// Post trace increment `A_ltd` (negative).
    pub amp_ltd: f64,
    /// Potentiation learning rate `a_ltp`.
    pub rate_ltp: f64,
    /// Depression learning rate `a_ltd`.
    pub rate_ltd: f64,
    /// Weight bounds (uS).
    pub w_min: f64,
    pub w_max: f64,
}

impl Default for StdpParams {
    fn default() -> Self {
        Self {
            tau_ltp: 20.0,
            tau_ltd: 20.0,
            amp_ltp: 1.0,
            amp_ltd: -1.0,
            rate_ltp: 6e-5,
            rate_ltd: 6.3e-5,
            w_min: 0.0,
            w_max: 0.02,
        }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.tau_ltp,
            self.tau_ltd,
            self.amp_ltp,
            self.amp_ltd,
            self.rate_ltp,
            self.rate_ltd,
            self.w_min,
            self.w_max,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("STDP parameters"));
        }
        if self.tau_ltp <= 0.0 || self.tau_ltd <= 0.0 {
            return Err(Error::InvalidParameter("STDP time constants must be > 0".into()));
        }
        if self.w_min > self.w_max {
            return Err(Error::InvalidParameter(format!(
                "w_min {} exceeds w_max {}",
                self.w_min, self.w_max
            )));
        }
        if self.rate_ltp < 0.0 || self.rate_ltd < 0.0 {
            return Err(Error::InvalidParameter("learning rates must be >= 0".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn clamp(&self, w: f64) -> f64 {
        w.clamp(self.w_min, self.w_max)
    }
}

/// Exponentially decaying spike trace, stored as its value right after the
/// most recent spike.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Trace {
    pub value: f64,
    pub last: Option<f64>,
}

impl Trace {
    /// Trace value decayed to time `t`, if any spike has been seen.
    #[inline]
    pub fn decayed(&self, t: f64, tau: f64) -> Option<f64> {
        self.last.map(|last| self.value * ((last - t) / tau).exp())
    }

    /// Adds a spike at `t`. Caller guarantees `t >= last`.
    #[inline]
    pub(crate) fn bump_unchecked(&mut self, t: f64, tau: f64, amp: f64) {
        self.value = self.decayed(t, tau).unwrap_or(0.0) + amp;
        self.last = Some(t);
    }

    pub fn bump(&mut self, t: f64, tau: f64, amp: f64) -> Result<()> {
        check_monotone(self.last, t)?;
        self.bump_unchecked(t, tau, amp);
        Ok(())
    }
}

#[inline]
fn check_monotone(last: Option<f64>, t: f64) -> Result<()> {
    if !t.is_finite() {
        return Err(Error::NonFinite("spike time"));
    }
    match last {
        Some(last) if t < last => Err(Error::TimeRegression { t, last }),
        _ => Ok(()),
    }
}

/// Depression caused by a pre spike at `t_pre`, given the post trace.
#[inline]
pub fn depression_delta(post: &Trace, t_pre: f64, params: &StdpParams) -> f64 {
    post.decayed(t_pre, params.tau_ltd)
        .map_or(0.0, |q| params.rate_ltd * q)
}

/// Potentiation caused by a post spike at `t_post`, given the pre trace.
#[inline]
pub fn potentiation_delta(pre: &Trace, t_post: f64, params: &StdpParams) -> f64 {
    pre.decayed(t_post, params.tau_ltp)
        .map_or(0.0, |p| params.rate_ltp * p)
}

/// One synapse: weight plus both traces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynapseState {
    pub w: f64,
    pub pre: Trace,
    pub post: Trace,
}

impl SynapseState {
    pub fn new(w: f64) -> Self {
        Self {
            w,
            pre: Trace::default(),
            post: Trace::default(),
        }
    }

    pub fn p(&self) -> f64 {
        self.pre.value
    }

    pub fn q(&self) -> f64 {
        self.post.value
    }

    pub fn t_last_pre(&self) -> Option<f64> {
        self.pre.last
    }

    pub fn t_last_post(&self) -> Option<f64> {
        self.post.last
    }

    fn latest(&self) -> Option<f64> {
        match (self.pre.last, self.post.last) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }
}

pub fn on_pre_spike(s: &SynapseState, params: &StdpParams, t_pre: f64) -> Result<SynapseState> {
    check_monotone(s.latest(), t_pre)?;
    let mut next = *s;
    next.pre.bump_unchecked(t_pre, params.tau_ltp, params.amp_ltp);
    next.w = params.clamp(s.w + depression_delta(&s.post, t_pre, params));
    Ok(next)
}

pub fn on_post_spike(s: &SynapseState, params: &StdpParams, t_post: f64) -> Result<SynapseState> {
    check_monotone(s.latest(), t_post)?;
    let mut next = *s;
    next.post.bump_unchecked(t_post, params.tau_ltd, params.amp_ltd);
    next.w = params.clamp(s.w + potentiation_delta(&s.pre, t_post, params));
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> StdpParams {
        StdpParams::default()
    }

    #[test]
    fn first_pre_spike_sets_unit_trace() {
        let s = on_pre_spike(&SynapseState::new(0.01), &params(), 3.0).unwrap();
        assert_eq!(s.p(), 1.0);
        assert_eq!(s.w, 0.01);
        assert_eq!(s.t_last_pre(), Some(3.0));
    }

    #[test]
    fn first_post_spike_sets_negative_unit_trace() {
        let s = on_post_spike(&SynapseState::new(0.01), &params(), 3.0).unwrap();
        assert_eq!(s.q(), -1.0);
        assert_eq!(s.w, 0.01);
    }

    #[test]
    fn pre_trace_accumulates_with_decay() {
        let s = on_pre_spike(&SynapseState::new(0.01), &params(), 0.0).unwrap();
        let s = on_pre_spike(&s, &params(), 20.0).unwrap();
        assert_relative_eq!(s.p(), 1.367_879_441_171_442_4, max_relative = 1e-15);
        assert_relative_eq!(s.p(), 1.36788, max_relative = 1e-5);
    }

    #[test]
    fn depression_five_ms_after_post() {
        let s = on_post_spike(&SynapseState::new(0.01), &params(), 0.0).unwrap();
        let s = on_pre_spike(&s, &params(), 5.0).unwrap();
        assert_relative_eq!(s.w - 0.01, -4.9064e-5, max_relative = 1e-4);
        assert_relative_eq!(s.w, 0.009_950_94, max_relative = 1e-6);
    }

    #[test]
    fn potentiation_five_ms_after_pre() {
        let s = on_pre_spike(&SynapseState::new(0.01), &params(), 0.0).unwrap();
        let s = on_post_spike(&s, &params(), 5.0).unwrap();
        assert_relative_eq!(s.w - 0.01, 4.6728e-5, max_relative = 1e-4);
        assert_relative_eq!(s.w, 0.010_046_73, max_relative = 1e-6);
    }

    #[test]
    fn natural_increase_magnitude_at_ten_ms() {
        let s = on_pre_spike(&SynapseState::new(0.01), &params(), 0.0).unwrap();
        let s = on_post_spike(&s, &params(), 10.0).unwrap();
        assert_relative_eq!(s.w - 0.01, 3.6392e-5, max_relative = 1e-4);
    }

    #[test]
    fn time_regression_is_rejected() {
        let s = on_pre_spike(&SynapseState::new(0.01), &params(), 10.0).unwrap();
        assert!(matches!(
            on_pre_spike(&s, &params(), 9.0),
            Err(Error::TimeRegression { .. })
        ));
        assert!(on_post_spike(&s, &params(), 9.0).is_err());
        let s = on_post_spike(&s, &params(), 12.0).unwrap();
        assert!(on_pre_spike(&s, &params(), 11.0).is_err());
    }

    #[test]
    fn equal_timestamps_pair_with_unit_factor() {
        // pre then post at the same instant: potentiation with exp(0)
        let s = on_pre_spike(&SynapseState::new(0.01), &params(), 5.0).unwrap();
        let s = on_post_spike(&s, &params(), 5.0).unwrap();
        assert_relative_eq!(s.w, 0.01 + 6e-5, max_relative = 1e-14);
    }

    #[test]
    fn weights_clamp_to_bounds() {
        let p = params();
        let mut s = SynapseState::new(p.w_max);
        s = on_pre_spike(&s, &p, 0.0).unwrap();
        s = on_post_spike(&s, &p, 1.0).unwrap();
        assert_eq!(s.w, p.w_max);
        let mut s = SynapseState::new(0.0);
        s = on_post_spike(&s, &p, 0.0).unwrap();
        s = on_pre_spike(&s, &p, 1.0).unwrap();
        assert_eq!(s.w, 0.0);
    }

    #[test]
    fn validation() {
        assert!(params().validate().is_ok());
        assert!(StdpParams { tau_ltp: 0.0, ..params() }.validate().is_err());
        assert!(StdpParams { w_min: 0.1, ..params() }.validate().is_err());
        assert!(StdpParams { rate_ltd: -1.0, ..params() }.validate().is_err());
    }
}
