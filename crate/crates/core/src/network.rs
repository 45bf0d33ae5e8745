//! Fully connected input -> output network.
//!
//! Input neurons are spike sources: a stimulated input fires at its stimulus
//! onset. Each input spike adds `scale * w` to a single-exponential synaptic
//! conductance on every output neuron, which drives the output's
//! Hodgkin-Huxley membrane through `g (E_syn - V)`. Output neurons can also be
//! driven directly with a suprathreshold current pulse.
//!
//! Weights are a dense row-major `n_in x n_out` matrix (row = input neuron).
//! Because every synapse leaving input `i` sees the same pre-synaptic spikes,
//! the pre trace is stored once per input and the post trace once per output.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hh::{self, HhParams, MembraneState, StimulusPulse};
use crate::kernel::{self, Isa, Lanes, StepConstants, LANES};
use crate::plasticity::{self, StdpParams, SynapseState, Trace};
use crate::seed::{self, Stream};

/// Spike detected within this long after a pulse ends still counts as evoked.
pub const EVOKED_LATENCY: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Topology {
    pub n_in: usize,
    pub n_out: usize,
    pub group_size: usize,
    pub n_groups: usize,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            n_in: 196,
            n_out: 300,
            group_size: 30,
            n_groups: 10,
        }
    }
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.group_size == 0 || self.n_groups == 0 {
            return Err(Error::InvalidParameter("topology dimensions must be non-zero".into()));
        }
        if self.n_out != self.group_size * self.n_groups {
            return Err(Error::InvalidParameter(format!(
                "n_out {} != group_size {} x n_groups {}",
                self.n_out, self.group_size, self.n_groups
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn group_of(&self, neuron: usize) -> usize {
        neuron / self.group_size
    }

    pub fn group_members(&self, group: usize) -> std::ops::Range<usize> {
        group * self.group_size..(group + 1) * self.group_size
    }
}

/// Synaptic conductance kinetics and the weight-to-conductance scale.
#[derive(Clone, Debug, PartialEq)]
pub struct SynapseParams {
    /// Conductance decay time constant (ms).
    pub tau_syn: f64,
    /// Synaptic reversal potential (mV).
    pub e_syn: f64,
    /// Membrane conductance density (mS/cm^2) contributed per uS of weight.
    pub scale: f64,
}

impl Default for SynapseParams {
    fn default() -> Self {
        Self {
            tau_syn: 2.0,
            e_syn: 0.0,
            // output of `calibrate` at the default parameters
            scale: DEFAULT_SYN_SCALE,
        }
    }
}

/// Conductance scale that puts the default calibration pattern at 10 ms latency.
pub const DEFAULT_SYN_SCALE: f64 = 0.343_644_618_988_037_1;

impl SynapseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_syn > 0.0) || !self.e_syn.is_finite() || !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidParameter(format!("bad synapse parameters {self:?}")));
        }
        Ok(())
    }
}

/// Everything needed to simulate a network besides its topology and state.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub hh: HhParams,
    pub stdp: StdpParams,
    pub synapse: SynapseParams,
    pub pulse_duration: f64,
    pub pulse_amplitude: f64,
    /// Register stimulus-evoked spikes even inside the refractory period.
    /// Spontaneous spikes always respect it.
    pub evoked_bypass_refractory: bool,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            hh: HhParams::default(),
            stdp: StdpParams::default(),
            synapse: SynapseParams::default(),
            pulse_duration: StimulusPulse::DEFAULT_DURATION,
            pulse_amplitude: StimulusPulse::DEFAULT_AMPLITUDE,
            evoked_bypass_refractory: true,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        self.hh.validate()?;
        self.stdp.validate()?;
        self.synapse.validate()?;
        StimulusPulse {
            onset: 0.0,
            duration: self.pulse_duration,
            amplitude: self.pulse_amplitude,
        }
        .validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Input(usize),
    Output(usize),
}

/// External suprathreshold stimulus, onset relative to the window start.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StimulusEvent {
    pub target: Target,
    pub onset: f64,
}

impl StimulusEvent {
    pub fn input(id: usize, onset: f64) -> Self {
        Self {
            target: Target::Input(id),
            onset,
        }
    }

    pub fn output(id: usize, onset: f64) -> Self {
        Self {
            target: Target::Output(id),
            onset,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spike {
    pub neuron: usize,
    /// Time relative to the window start (ms).
    pub time: f64,
    /// Detected while an artificial pulse was driving the neuron.
    pub evoked: bool,
}

/// Output spikes of one window, in detection order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpikeRecord {
    pub spikes: Vec<Spike>,
}

impl SpikeRecord {
    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn times_of(&self, neuron: usize) -> impl Iterator<Item = f64> + '_ {
        self.spikes
            .iter()
            .filter(move |s| s.neuron == neuron)
            .map(|s| s.time)
    }

    /// Per-neuron flag: fired at least once.
    pub fn fired(&self, n_out: usize) -> Vec<bool> {
        let mut fired = vec![false; n_out];
        for s in &self.spikes {
            fired[s.neuron] = true;
        }
        fired
    }

    pub fn spike_counts(&self, n_out: usize) -> Vec<usize> {
        let mut counts = vec![0; n_out];
        for s in &self.spikes {
            counts[s.neuron] += 1;
        }
        counts
    }

    /// Smallest interval between consecutive spikes of the same neuron.
    pub fn min_isi(&self) -> Option<f64> {
        let mut last: std::collections::HashMap<usize, f64> = Default::default();
        let mut min: Option<f64> = None;
        for s in &self.spikes {
            if let Some(prev) = last.insert(s.neuron, s.time) {
                let isi = s.time - prev;
                min = Some(min.map_or(isi, |m: f64| m.min(isi)));
            }
        }
        min
    }
}

/// Distinct spiking neurons per group.
pub fn group_counts(rec: &SpikeRecord, topo: &Topology) -> Vec<usize> {
    let mut counts = vec![0; topo.n_groups];
    for (j, fired) in rec.fired(topo.n_out).into_iter().enumerate() {
        if fired {
            counts[topo.group_of(j)] += 1;
        }
    }
    counts
}

/// Index of the largest count; ties go to the smaller index.
pub fn predict(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct NetworkState {
    pub topology: Topology,
    pub params: NetworkParams,
    /// Row-major `n_in x n_out` weights (uS).
    pub weights: Vec<f64>,
    pub pre_traces: Vec<Trace>,
    pub post_traces: Vec<Trace>,
    /// Absolute simulation time at the start of the next window (ms).
    pub clock: f64,
    pub seed: u64,
    /// Generator for training list selection.
    pub rng: ChaCha8Rng,
    // Output membranes as padded structure-of-arrays for the kernel.
    v: Vec<f64>,
    m: Vec<f64>,
    h: Vec<f64>,
    n: Vec<f64>,
    g_syn: Vec<f64>,
    last_spike: Vec<Option<f64>>,
    /// Absolute end of the current stimulus pulse per output.
    pulse_end: Vec<f64>,
    /// Absolute time until which a detected spike counts as evoked.
    evoked_until: Vec<f64>,
    rest: (f64, MembraneState),
    isa: Isa,
}

fn padded(n: usize) -> usize {
    n.div_ceil(LANES) * LANES
}

impl NetworkState {
    /// Fresh network: weights i.i.d. uniform on `[0, w_max]`, neurons at rest.
    pub fn build(topology: Topology, params: NetworkParams, seed: u64) -> Result<Self> {
        topology.validate()?;
        params.validate()?;
        let mut init = seed::substream(seed, Stream::WeightInit);
        let w_max = params.stdp.w_max;
        let weights = (0..topology.n_in * topology.n_out)
            .map(|_| if w_max > 0.0 { init.gen_range(0.0..=w_max) } else { 0.0 })
            .collect();
        Ok(Self::with_weights(
            topology,
            params,
            weights,
            seed,
            seed::substream(seed, Stream::ListSelection),
        ))
    }

    pub(crate) fn with_weights(
        topology: Topology,
        params: NetworkParams,
        weights: Vec<f64>,
        seed: u64,
        rng: ChaCha8Rng,
    ) -> Self {
        let rest = params.hh.resting_state(DEFAULT_DT);
        let width = padded(topology.n_out);
        let mut net = Self {
            weights,
            pre_traces: vec![Trace::default(); topology.n_in],
            post_traces: vec![Trace::default(); topology.n_out],
            clock: 0.0,
            seed,
            rng,
            v: vec![0.0; width],
            m: vec![0.0; width],
            h: vec![0.0; width],
            n: vec![0.0; width],
            g_syn: vec![0.0; width],
            last_spike: vec![None; topology.n_out],
            pulse_end: vec![f64::NEG_INFINITY; topology.n_out],
            evoked_until: vec![f64::NEG_INFINITY; topology.n_out],
            rest: (DEFAULT_DT, rest),
            isa: kernel::best_isa(),
            topology,
            params,
        };
        net.reset_neurons(DEFAULT_DT);
        net
    }

    #[inline]
    pub fn weight(&self, input: usize, output: usize) -> f64 {
        self.weights[input * self.topology.n_out + output]
    }

    pub fn set_all_weights(&mut self, w: f64) {
        self.weights.iter_mut().for_each(|x| *x = w);
    }

    /// Full per-synapse view of the factorized state.
    pub fn synapse(&self, input: usize, output: usize) -> SynapseState {
        SynapseState {
            w: self.weight(input, output),
            pre: self.pre_traces[input],
            post: self.post_traces[output],
        }
    }

    pub fn neuron(&self, j: usize) -> MembraneState {
        MembraneState {
            v: self.v[j],
            m: self.m[j],
            h: self.h[j],
            n: self.n[j],
            t_last_spike: self.last_spike[j],
        }
    }

    /// Synaptic conductance currently driving output `j` (mS/cm^2).
    pub fn conductance(&self, j: usize) -> f64 {
        self.g_syn[j]
    }

    pub fn mean_weight(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }

    fn rest_state(&mut self, dt: f64) -> MembraneState {
        if self.rest.0 != dt {
            self.rest = (dt, self.params.hh.resting_state(dt));
        }
        self.rest.1
    }

    /// Returns every output neuron to rest, clears synaptic conductance,
    /// pending stimulus pulses and refractory history. Weights and traces are untouched.
    pub fn reset_neurons(&mut self, dt: f64) {
        let rest = self.rest_state(dt);
        self.v.fill(rest.v);
        self.m.fill(rest.m);
        self.h.fill(rest.h);
        self.n.fill(rest.n);
        self.g_syn.fill(0.0);
        self.last_spike.fill(None);
        self.pulse_end.fill(f64::NEG_INFINITY);
        self.evoked_until.fill(f64::NEG_INFINITY);
    }

    /// Advances the clock without simulating (quiescent interval).
    pub fn advance_clock(&mut self, gap: f64) {
        if gap > 0.0 {
            self.clock += gap;
        }
    }

    /// Simulates one window of length `window` starting at the current clock.
    ///
    /// Stimulus onsets are relative to the window start and snap to the
    /// nearest step; plasticity uses the exact onset times. With `plastic`
    /// set, every input spike and every registered output spike updates the
    /// synapses it touches.
    pub fn run_window(
        &mut self,
        stimuli: &[StimulusEvent],
        window: f64,
        dt: f64,
        plastic: bool,
    ) -> Result<SpikeRecord> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidTimeStep(dt));
        }
        if !(window > 0.0) || !window.is_finite() {
            return Err(Error::InvalidParameter(format!("window must be > 0, got {window}")));
        }
        let n_in = self.topology.n_in;
        let n_out = self.topology.n_out;
        for ev in stimuli {
            if !(ev.onset >= 0.0 && ev.onset < window) {
                return Err(Error::StimulusOutsideWindow { onset: ev.onset, window });
            }
            match ev.target {
                Target::Input(i) if i >= n_in => {
                    return Err(Error::NeuronOutOfRange { index: i, limit: n_in })
                }
                Target::Output(j) if j >= n_out => {
                    return Err(Error::NeuronOutOfRange { index: j, limit: n_out })
                }
                _ => {}
            }
        }
        if self.rest.0 != dt {
            self.rest_state(dt);
        }

        let n_steps = ((window / dt) - 1e-9).ceil().max(1.0) as usize;
        let mut events: Vec<(usize, StimulusEvent)> = stimuli
            .iter()
            .map(|ev| (((ev.onset / dt).round() as usize).min(n_steps - 1), *ev))
            .collect();
        events.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.onset.total_cmp(&b.1.onset)));

        let hh = self.params.hh.clone();
        let stdp = self.params.stdp.clone();
        let syn = self.params.synapse.clone();
        let bypass = self.params.evoked_bypass_refractory;
        let pulse_len = ((self.params.pulse_duration / dt).round()).max(1.0) * dt;
        let pulse_amp = self.params.pulse_amplitude;
        let consts = StepConstants::new(&hh, dt, syn.e_syn, syn.tau_syn);
        let t0 = self.clock;
        let width = self.v.len();

        let mut i_ext = vec![0.0; width];
        let mut v_prev = vec![0.0; width];
        let mut drive = vec![0.0; n_out];
        let mut dep = vec![0.0; n_out];
        let mut record = SpikeRecord::default();
        let mut next_event = 0;

        for k in 0..n_steps {
            let t_rel = k as f64 * dt;

            while next_event < events.len() && events[next_event].0 == k {
                // input spikes sharing an exact onset are delivered together
                let onset = events[next_event].1.onset;
                let mut group_end = next_event;
                while group_end < events.len()
                    && events[group_end].0 == k
                    && events[group_end].1.onset == onset
                {
                    group_end += 1;
                }
                let t_abs = t0 + onset;
                let has_input = events[next_event..group_end]
                    .iter()
                    .any(|(_, ev)| matches!(ev.target, Target::Input(_)));
                if plastic && has_input {
                    for (j, d) in dep.iter_mut().enumerate() {
                        *d = plasticity::depression_delta(&self.post_traces[j], t_abs, &stdp);
                    }
                }
                drive.fill(0.0);
                for &(_, ev) in &events[next_event..group_end] {
                    match ev.target {
                        Target::Input(i) => {
                            let row = &mut self.weights[i * n_out..(i + 1) * n_out];
                            if plastic {
                                self.pre_traces[i].bump_unchecked(t_abs, stdp.tau_ltp, stdp.amp_ltp);
                                for (w, d) in row.iter_mut().zip(&dep) {
                                    *w = stdp.clamp(*w + d);
                                }
                            }
                            for (acc, w) in drive.iter_mut().zip(row.iter()) {
                                *acc += w;
                            }
                        }
                        Target::Output(j) => {
                            // pulses may run past the window end and carry on
                            // into the next one
                            let end = t0 + t_rel + pulse_len;
                            self.pulse_end[j] = self.pulse_end[j].max(end);
                            self.evoked_until[j] = self.evoked_until[j].max(end + EVOKED_LATENCY);
                        }
                    }
                }
                if has_input {
                    for (g, d) in self.g_syn.iter_mut().zip(&drive) {
                        *g += syn.scale * d;
                    }
                }
                next_event = group_end;
            }

            let t_step = t0 + t_rel;
            for j in 0..n_out {
                i_ext[j] = if t_step < self.pulse_end[j] - 0.5 * dt { pulse_amp } else { 0.0 };
            }
            v_prev.copy_from_slice(&self.v);
            kernel::advance(
                self.isa,
                Lanes {
                    v: &mut self.v,
                    m: &mut self.m,
                    h: &mut self.h,
                    n: &mut self.n,
                    g: &mut self.g_syn,
                    i_ext: &i_ext,
                },
                &consts,
            );

            for j in 0..n_out {
                let Some(t_cross) = hh::upward_crossing(v_prev[j], self.v[j], hh.v_thresh, t_rel, dt) else {
                    continue;
                };
                let t_abs = t0 + t_cross;
                let evoked = t_abs <= self.evoked_until[j];
                let elapsed = self.last_spike[j].map_or(true, |last| t_abs - last >= hh.t_refrac);
                if !(elapsed || (bypass && evoked)) {
                    continue;
                }
                self.last_spike[j] = Some(t_abs);
                record.spikes.push(Spike {
                    neuron: j,
                    time: t_cross,
                    evoked,
                });
                if plastic {
                    self.post_traces[j].bump_unchecked(t_abs, stdp.tau_ltd, stdp.amp_ltd);
                    for i in 0..n_in {
                        let d = plasticity::potentiation_delta(&self.pre_traces[i], t_abs, &stdp);
                        let w = &mut self.weights[i * n_out + j];
                        *w = stdp.clamp(*w + d);
                    }
                }
            }
            debug_assert!((0..n_out).all(|j| self.neuron(j).gates_in_range() && self.v[j].is_finite()));
        }

        self.clock = t0 + window;
        Ok(record)
    }
}

/// Default integration step (ms).
pub const DEFAULT_DT: f64 = 0.025;

/// Reference pattern for the conductance-scale calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationTarget {
    /// Number of simultaneously active inputs in a typical image.
    pub active_inputs: usize,
    /// Weight on every synapse (uS).
    pub weight: f64,
    /// Desired natural spike latency after the inputs (ms).
    pub latency: f64,
    /// Accepted band around `latency` for the median (ms).
    pub band: f64,
    pub window: f64,
    pub dt: f64,
}

impl Default for CalibrationTarget {
    fn default() -> Self {
        Self {
            active_inputs: 25,
            weight: StdpParams::default().w_max / 2.0,
            latency: 10.0,
            band: 1.0,
            window: 30.0,
            dt: DEFAULT_DT,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub scale: f64,
    pub median_latency: f64,
    pub iterations: usize,
}

/// Median first-spike latency of a uniform-weight probe network, or `None`
/// when fewer than half of the outputs fire.
pub fn probe_latency(params: &NetworkParams, target: &CalibrationTarget) -> Result<Option<f64>> {
    let topo = Topology {
        n_in: target.active_inputs.max(1),
        n_out: 3,
        group_size: 1,
        n_groups: 3,
    };
    let mut net = NetworkState::build(topo, params.clone(), 0)?;
    net.set_all_weights(target.weight);
    net.reset_neurons(target.dt);
    let stimuli: Vec<_> = (0..target.active_inputs).map(|i| StimulusEvent::input(i, 0.0)).collect();
    let rec = net.run_window(&stimuli, target.window, target.dt, false)?;
    let mut firsts: Vec<f64> = (0..topo.n_out)
        .filter_map(|j| rec.times_of(j).next())
        .collect();
    if firsts.len() * 2 < topo.n_out + 1 {
        return Ok(None);
    }
    firsts.sort_by(f64::total_cmp);
    Ok(Some(firsts[firsts.len() / 2]))
}

/// Bisects the weight-to-conductance scale until the median latency of the
/// reference pattern sits at `target.latency` (to 0.01 ms), and checks that
/// it lands inside the accepted band.
pub fn calibrate(params: &NetworkParams, target: &CalibrationTarget) -> Result<Calibration> {
    if target.active_inputs == 0 || !(target.weight > 0.0) {
        return Err(Error::Calibration("reference pattern carries no drive".into()));
    }
    let mut p = params.clone();
    let latency_at = |p: &mut NetworkParams, scale: f64| -> Result<Option<f64>> {
        p.synapse.scale = scale;
        probe_latency(p, target)
    };

    let mut lo = 0.0;
    let mut hi = 1.0;
    while latency_at(&mut p, hi)?.map_or(true, |l| l > target.latency) {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Calibration("no scale produces the target latency".into()));
        }
    }
    let mut best = (hi, latency_at(&mut p, hi)?.unwrap_or(f64::INFINITY));
    let mut iterations = 0;
    while iterations < 200 && (best.1 - target.latency).abs() > 0.01 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        match latency_at(&mut p, mid)? {
            Some(l) if l <= target.latency => {
                hi = mid;
                best = (mid, l);
            }
            _ => lo = mid,
        }
    }
    if (best.1 - target.latency).abs() > target.band {
        return Err(Error::Calibration(format!(
            "median latency {:.3} ms outside {} +/- {} ms",
            best.1, target.latency, target.band
        )));
    }
    Ok(Calibration {
        scale: best.0,
        median_latency: best.1,
        iterations,
    })
}
