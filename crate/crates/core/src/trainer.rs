//! Supervised STDP training by timed external stimulation.
//!
//! Per image: observe the natural response (plasticity off), pick which output
//! neurons to stimulate, then replay a two-phase stimulus schedule `train_step`
//! times with plasticity on.
//!
//! Each 60 ms training step runs as two 30 ms phase windows (default times):
//!
//! ```text
//! phase 1:  T1=10 deList   T2=15 inputs   T3=20 inList
//! phase 2:  Tn+T0=35 holdList   Tn+T1=40 deList   Tn+T2=45 inputs   Tn+T3=50 inList
//! ```
//!
//! A deList spike 5 ms before the inputs depresses the active synapses, an
//! inList spike 5 ms after potentiates them, and a holdList spike 10 ms before
//! the phase-2 inputs offsets the natural potentiation those neurons received
//! in phase 1.

use rand::seq::index;
use rand::Rng;

use crate::data::EncodedImage;
use crate::error::{Error, Result};
use crate::network::{group_counts, predict, NetworkState, SpikeRecord, StimulusEvent, Topology, DEFAULT_DT};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Repetitions of the stimulus schedule per image.
    pub train_step: usize,
    /// Desired number of firing neurons in the correct group.
    pub in_target: usize,
    /// Allowed number of firing neurons in each incorrect group.
    pub de_target: usize,
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// Offset of the second phase.
    pub tn: f64,
    pub step_duration: f64,
    /// Length of the prediction window after the input spikes.
    pub observe_window: f64,
    /// Quiescent time inserted before every window sequence.
    pub settle_gap: f64,
    pub dt: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            train_step: 2,
            in_target: 20,
            de_target: 0,
            t0: 5.0,
            t1: 10.0,
            t2: 15.0,
            t3: 20.0,
            tn: 30.0,
            step_duration: 60.0,
            observe_window: 30.0,
            settle_gap: 1000.0,
            dt: DEFAULT_DT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, topo: &Topology) -> Result<()> {
        let times = [
            self.t0,
            self.t1,
            self.t2,
            self.t3,
            self.tn,
            self.step_duration,
            self.observe_window,
            self.settle_gap,
            self.dt,
        ];
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("training times"));
        }
        if !(self.t0 >= 0.0 && self.t0 < self.t1 && self.t1 < self.t2 && self.t2 < self.t3) {
            return Err(Error::InvalidParameter("need 0 <= T0 < T1 < T2 < T3".into()));
        }
        if !(self.t3 < self.tn) {
            return Err(Error::InvalidParameter("phase 1 must end after T3 (need T3 < Tn)".into()));
        }
        if !(self.tn + self.t3 < self.step_duration) {
            return Err(Error::ScheduleOverrun {
                end: self.tn + self.t3,
                duration: self.step_duration,
            });
        }
        if self.tn < 0.0 || self.settle_gap < 0.0 || !(self.observe_window > 0.0) {
            return Err(Error::InvalidParameter("Tn, settle gap and window must be non-negative".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidTimeStep(self.dt));
        }
        if self.in_target > topo.group_size || self.de_target > topo.group_size {
            return Err(Error::InvalidParameter(format!(
                "in_target/de_target must be <= group size {}",
                topo.group_size
            )));
        }
        Ok(())
    }
}

/// Output neurons to stimulate during training, each sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lists {
    pub in_list: Vec<usize>,
    pub de_list: Vec<usize>,
    pub hold_list: Vec<usize>,
}

/// One training step's stimuli, sorted by onset.
#[derive(Clone, Debug, PartialEq)]
pub struct StimulusPlan {
    pub events: Vec<StimulusEvent>,
}

impl StimulusPlan {
    /// Events before `tn`, and the rest with onsets relative to `tn`.
    pub fn split_phases(&self, tn: f64) -> (Vec<StimulusEvent>, Vec<StimulusEvent>) {
        let (first, second): (Vec<StimulusEvent>, Vec<StimulusEvent>) = self.events.iter().partition(|e| e.onset < tn);
        let second = second
            .into_iter()
            .map(|e| StimulusEvent {
                onset: e.onset - tn,
                ..e
            })
            .collect();
        (first, second)
    }
}

/// Natural response to an image: plasticity off, neurons reset, inputs at t = 0.
pub fn classify(net: &mut NetworkState, active: &[usize], cfg: &TrainConfig) -> Result<(usize, SpikeRecord)> {
    net.advance_clock(cfg.settle_gap);
    net.reset_neurons(cfg.dt);
    let stimuli: Vec<_> = active.iter().map(|&i| StimulusEvent::input(i, 0.0)).collect();
    let rec = net.run_window(&stimuli, cfg.observe_window, cfg.dt, false)?;
    Ok((predict(&group_counts(&rec, &net.topology)), rec))
}

fn draw<R: Rng>(rng: &mut R, pool: &[usize], amount: usize) -> Vec<usize> {
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), amount.min(pool.len()))
        .into_iter()
        .map(|k| pool[k])
        .collect();
    picked.sort_unstable();
    picked
}

/// Chooses the stimulated neurons from the observed response. Groups are
/// visited in ascending order so draws from `rng` are reproducible.
pub fn select_lists<R: Rng>(
    rec: &SpikeRecord,
    label: u8,
    cfg: &TrainConfig,
    topo: &Topology,
    rng: &mut R,
) -> Result<Lists> {
    if label as usize >= topo.n_groups {
        return Err(Error::InvalidLabel(label));
    }
    let fired = rec.fired(topo.n_out);
    let mut lists = Lists::default();
    for group in 0..topo.n_groups {
        let (spiking, silent): (Vec<usize>, Vec<usize>) =
            topo.group_members(group).partition(|&j| fired[j]);
        if group == label as usize {
            if spiking.len() < cfg.in_target {
                lists.in_list = draw(rng, &silent, cfg.in_target - spiking.len());
            }
            lists.hold_list = spiking;
        } else if spiking.len() > cfg.de_target {
            lists.de_list.extend(draw(rng, &spiking, spiking.len() - cfg.de_target));
        }
    }
    Ok(lists)
}

pub fn build_stimulus_plan(lists: &Lists, active: &[usize], cfg: &TrainConfig) -> Result<StimulusPlan> {
    let mut events = Vec::new();
    let outputs = |list: &[usize], at: f64, events: &mut Vec<StimulusEvent>| {
        events.extend(list.iter().map(|&j| StimulusEvent::output(j, at)));
    };
    let inputs = |at: f64, events: &mut Vec<StimulusEvent>| {
        events.extend(active.iter().map(|&i| StimulusEvent::input(i, at)));
    };
    outputs(&lists.de_list, cfg.t1, &mut events);
    inputs(cfg.t2, &mut events);
    outputs(&lists.in_list, cfg.t3, &mut events);
    outputs(&lists.hold_list, cfg.tn + cfg.t0, &mut events);
    outputs(&lists.de_list, cfg.tn + cfg.t1, &mut events);
    inputs(cfg.tn + cfg.t2, &mut events);
    outputs(&lists.in_list, cfg.tn + cfg.t3, &mut events);
    if let Some(bad) = events.iter().find(|e| !(e.onset >= 0.0 && e.onset < cfg.step_duration)) {
        return Err(Error::ScheduleOverrun {
            end: bad.onset,
            duration: cfg.step_duration,
        });
    }
    events.sort_by(|a, b| a.onset.total_cmp(&b.onset));
    Ok(StimulusPlan { events })
}

/// What happened while training on one image.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub prediction: usize,
    pub observed: SpikeRecord,
    pub lists: Lists,
    /// One record per phase: `[step 1 phase 1, step 1 phase 2, step 2 phase 1, ...]`,
    /// spike times relative to the phase start.
    pub phases: Vec<SpikeRecord>,
}

pub fn train_image(net: &mut NetworkState, image: &EncodedImage, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let (prediction, observed) = classify(net, &image.active, cfg)?;
    let topo = net.topology;
    let lists = select_lists(&observed, image.label, cfg, &topo, &mut net.rng)?;
    let plan = build_stimulus_plan(&lists, &image.active, cfg)?;
    let (first, second) = plan.split_phases(cfg.tn);
    net.advance_clock(cfg.settle_gap);
    net.reset_neurons(cfg.dt);
    let mut phases = Vec::with_capacity(2 * cfg.train_step);
    for _ in 0..cfg.train_step {
        phases.push(net.run_window(&first, cfg.tn, cfg.dt, true)?);
        phases.push(net.run_window(&second, cfg.step_duration - cfg.tn, cfg.dt, true)?);
    }
    Ok(TrainOutcome {
        prediction,
        observed,
        lists,
        phases,
    })
}

/// Per-image training telemetry.
#[derive(Clone, Debug, PartialEq)]
pub struct TelemetryRow {
    pub index: usize,
    pub label: u8,
    pub prediction: usize,
    pub in_list: usize,
    pub de_list: usize,
    pub hold_list: usize,
    pub mean_weight: f64,
}

/// Trains over `images` in order, reporting each image to `observe`.
pub fn train_all<F>(net: &mut NetworkState, images: &[EncodedImage], cfg: &TrainConfig, mut observe: F) -> Result<()>
where
    F: FnMut(&TelemetryRow, &TrainOutcome) -> Result<()>,
{
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate(&net.topology)?;
    for (index, image) in images.iter().enumerate() {
        let outcome = train_image(net, image, cfg)?;
        let row = TelemetryRow {
            index,
            label: image.label,
            prediction: outcome.prediction,
            in_list: outcome.lists.in_list.len(),
            de_list: outcome.lists.de_list.len(),
            hold_list: outcome.lists.hold_list.len(),
            mean_weight: net.mean_weight(),
        };
        observe(&row, &outcome)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[label][prediction]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
}

pub fn evaluate(net: &mut NetworkState, images: &[EncodedImage], cfg: &TrainConfig) -> Result<Evaluation> {
    evaluate_with(net, images, cfg, |_, _| {})
}

/// Like [`evaluate`], also handing every observation record to `observe`.
pub fn evaluate_with<F>(
    net: &mut NetworkState,
    images: &[EncodedImage],
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<Evaluation>
where
    F: FnMut(usize, &SpikeRecord),
{
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_groups = net.topology.n_groups;
    let mut confusion = vec![vec![0; n_groups]; n_groups];
    let mut predictions = Vec::with_capacity(images.len());
    let mut correct = 0;
    for (k, image) in images.iter().enumerate() {
        if image.label as usize >= n_groups {
            return Err(Error::InvalidLabel(image.label));
        }
        let (pred, rec) = classify(net, &image.active, cfg)?;
        observe(k, &rec);
        confusion[image.label as usize][pred] += 1;
        if pred == image.label as usize {
            correct += 1;
        }
        predictions.push(pred);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / images.len() as f64,
        confusion,
        predictions,
    })
}
