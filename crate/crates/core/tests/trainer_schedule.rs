//! Training schedule, list selection and the supervised update mechanisms.

use hhstdp_core::data::EncodedImage;
use hhstdp_core::network::group_counts;
use hhstdp_core::trainer::{
    build_stimulus_plan, classify, evaluate, select_lists, train_all, train_image, Lists, TrainConfig,
};
use hhstdp_core::{NetworkParams, NetworkState, Spike, SpikeRecord, StdpParams, Target, Topology};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn net(seed: u64) -> NetworkState {
    NetworkState::build(Topology::default(), NetworkParams::default(), seed).unwrap()
}

fn image(active: impl IntoIterator<Item = usize>, label: u8) -> EncodedImage {
    EncodedImage { active: active.into_iter().collect(), label }
}

/// A record in which the listed neurons each fired once.
fn record(neurons: &[usize]) -> SpikeRecord {
    SpikeRecord { spikes: neurons.iter().map(|&j| Spike { neuron: j, time: 10.0, evoked: false }).collect() }
}

#[test]
fn default_plan_places_every_mechanism_at_its_time() {
    let lists = Lists { in_list: vec![90], de_list: vec![7], hold_list: vec![95] };
    let plan = build_stimulus_plan(&lists, &[3], &TrainConfig::default()).unwrap();
    let got: Vec<(f64, Target)> = plan.events.iter().map(|e| (e.onset, e.target)).collect();
    assert_eq!(
        got,
        vec![
            (10.0, Target::Output(7)),
            (15.0, Target::Input(3)),
            (20.0, Target::Output(90)),
            (35.0, Target::Output(95)),
            (40.0, Target::Output(7)),
            (45.0, Target::Input(3)),
            (50.0, Target::Output(90)),
        ]
    );
    let hold = plan.events.iter().find(|e| e.target == Target::Output(95)).unwrap().onset;
    assert_eq!(45.0 - hold, 10.0);
}

#[test]
fn empty_lists_leave_only_the_input_volleys() {
    let plan = build_stimulus_plan(&Lists::default(), &[4, 9], &TrainConfig::default()).unwrap();
    assert!(plan.events.iter().all(|e| matches!(e.target, Target::Input(_))));
    let onsets: Vec<f64> = plan.events.iter().map(|e| e.onset).collect();
    assert_eq!(onsets, vec![15.0, 15.0, 45.0, 45.0]);
}

#[test]
fn overlong_schedules_are_rejected() {
    let cfg = TrainConfig { step_duration: 45.0, ..TrainConfig::default() };
    assert!(build_stimulus_plan(&Lists::default(), &[0], &cfg).is_err());
    assert!(cfg.validate(&Topology::default()).is_err());
}

#[test]
fn silent_label_group_gets_a_full_in_list() {
    let topo = Topology::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lists = select_lists(&SpikeRecord::default(), 3, &TrainConfig::default(), &topo, &mut rng).unwrap();
    assert!(lists.hold_list.is_empty() && lists.de_list.is_empty());
    assert_eq!(lists.in_list.len(), 20);
    assert!(lists.in_list.iter().all(|&j| topo.group_of(j) == 3));
}

#[test]
fn wrong_group_spikes_enter_the_de_list_above_the_target() {
    let topo = Topology::default();
    let rec = record(&[210, 211, 212, 213, 214]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lists = select_lists(&rec, 3, &TrainConfig::default(), &topo, &mut rng).unwrap();
    assert_eq!(lists.de_list, vec![210, 211, 212, 213, 214]);
    let cfg = TrainConfig { de_target: 5, ..TrainConfig::default() };
    let lists = select_lists(&rec, 3, &cfg, &topo, &mut rng).unwrap();
    assert!(lists.de_list.is_empty());
}

#[test]
fn invalid_labels_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(select_lists(&SpikeRecord::default(), 10, &TrainConfig::default(), &Topology::default(), &mut rng).is_err());
}

proptest! {
    #[test]
    fn list_sizes_follow_the_targets(
        fired in prop::collection::btree_set(0usize..300, 0..300),
        label in 0u8..10,
        in_target in 0usize..=30,
        de_target in 0usize..=30,
        seed in any::<u64>(),
    ) {
        let topo = Topology::default();
        let neurons: Vec<usize> = fired.iter().copied().collect();
        let rec = record(&neurons);
        let cfg = TrainConfig { in_target, de_target, ..TrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lists = select_lists(&rec, label, &cfg, &topo, &mut rng).unwrap();
        let counts = group_counts(&rec, &topo);
        let l = label as usize;
        prop_assert_eq!(lists.in_list.len(), in_target.saturating_sub(counts[l]));
        let de: usize = (0..10).filter(|&g| g != l).map(|g| counts[g].saturating_sub(de_target)).sum();
        prop_assert_eq!(lists.de_list.len(), de);
        prop_assert_eq!(lists.hold_list.len(), counts[l]);
        prop_assert!(lists.in_list.iter().all(|j| topo.group_of(*j) == l && !fired.contains(j)));
        prop_assert!(lists.hold_list.iter().all(|j| topo.group_of(*j) == l && fired.contains(j)));
        prop_assert!(lists.de_list.iter().all(|j| topo.group_of(*j) != l && fired.contains(j)));
    }
}

/// From-scratch trace sum for one synapse: every pre spike before a post
/// spike potentiates by `a_ltp * sum(A_ltp e^(-dt/tau))`, and vice versa.
fn pairwise_weight(w0: f64, pre: &[f64], post: &[f64], p: &StdpParams) -> f64 {
    let mut events: Vec<(f64, bool)> = pre.iter().map(|&t| (t, true)).chain(post.iter().map(|&t| (t, false))).collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut w = w0;
    for (k, &(t, is_pre)) in events.iter().enumerate() {
        let earlier = &events[..k];
        if is_pre {
            let q: f64 = earlier.iter().filter(|e| !e.1).map(|e| p.amp_ltd * (-(t - e.0) / p.tau_ltd).exp()).sum();
            w = (w + p.rate_ltd * q).clamp(p.w_min, p.w_max);
        } else {
            let s: f64 = earlier.iter().filter(|e| e.1).map(|e| p.amp_ltp * (-(t - e.0) / p.tau_ltp).exp()).sum();
            w = (w + p.rate_ltp * s).clamp(p.w_min, p.w_max);
        }
    }
    w
}

#[test]
fn single_pixel_in_list_update_matches_the_closed_form() {
    let mut net = net(11);
    let pixel = 77;
    let cfg = TrainConfig { in_target: 1, ..TrainConfig::default() };
    let before = net.weights.clone();
    let out = train_image(&mut net, &image([pixel], 6), &cfg).unwrap();
    assert!(out.observed.is_empty());
    assert_eq!(out.lists.in_list.len(), 1);
    assert!(out.lists.de_list.is_empty() && out.lists.hold_list.is_empty());
    let j = out.lists.in_list[0];

    // the stimulated neuron is the only one that fires, once in every phase
    let mut post = Vec::new();
    for (k, phase) in out.phases.iter().enumerate() {
        let offset = 30.0 * k as f64;
        assert!(phase.spikes.iter().all(|s| s.neuron == j && s.evoked));
        post.extend(phase.times_of(j).map(|t| t + offset));
    }
    assert_eq!(post.len(), 4);
    let pre = [15.0, 45.0, 75.0, 105.0];
    let stdp = &net.params.stdp;
    let n_out = net.topology.n_out;

    let w0 = before[pixel * n_out + j];
    let expected = pairwise_weight(w0, &pre, &post, stdp);
    let got = net.weights[pixel * n_out + j];
    assert!((got - expected).abs() <= 1e-12 * expected, "{got} vs {expected}");
    assert!(got > w0);

    // with the evoked latency folded in, each phase-1 pairing adds a_LTP e^(-(5 + latency)/20)
    let latency = post[0] - 20.0;
    assert!((0.5..1.5).contains(&latency), "{latency}");
    let first_gain = stdp.rate_ltp * (-(5.0 + latency) / stdp.tau_ltp).exp();
    assert!((pairwise_weight(w0, &pre[..1], &post[..1], stdp) - w0 - first_gain).abs() < 1e-15);

    // every other synapse from the pixel sees no post spike and no depression
    for other in (0..n_out).filter(|&o| o != j) {
        assert_eq!(net.weights[pixel * n_out + other], before[pixel * n_out + other]);
    }
    // synapses from silent pixels never change
    for i in (0..196).filter(|&i| i != pixel) {
        assert_eq!(net.weights[i * n_out..(i + 1) * n_out], before[i * n_out..(i + 1) * n_out]);
    }
}

#[test]
fn blank_image_leaves_weights_unchanged() {
    let mut net = net(12);
    let before = net.weights.clone();
    let out = train_image(&mut net, &image([], 4), &TrainConfig::default()).unwrap();
    assert_eq!(out.prediction, 0);
    assert_eq!(out.lists.in_list.len(), 20);
    assert_eq!(net.weights, before);
}

#[test]
fn zero_weight_network_predicts_zero_everywhere() {
    let mut net = net(13);
    net.set_all_weights(0.0);
    let images: Vec<_> = (0..10u8).map(|l| image((0..40).map(|k| (k * 5 + l as usize) % 196), l)).collect();
    let eval = evaluate(&mut net, &images, &TrainConfig::default()).unwrap();
    assert!(eval.predictions.iter().all(|&p| p == 0));
    assert_eq!(eval.accuracy, 0.1);
}

#[test]
fn saturated_network_ties_at_zero() {
    // at maximal weights 13 simultaneous inputs push every output over
    // threshold and 12 leave them all silent; either way all groups tie
    let mut net = net(14);
    net.set_all_weights(net.params.stdp.w_max);
    let cfg = TrainConfig::default();
    let (pred, rec) = classify(&mut net, &(50..63).collect::<Vec<_>>(), &cfg).unwrap();
    assert_eq!(group_counts(&rec, &net.topology), vec![30; 10]);
    assert_eq!(pred, 0);
    let (pred, rec) = classify(&mut net, &(50..62).collect::<Vec<_>>(), &cfg).unwrap();
    assert!(rec.is_empty());
    assert_eq!(pred, 0);
}

#[test]
fn classification_is_repeatable() {
    let mut net = net(15);
    let img: Vec<usize> = (20..60).collect();
    let a = classify(&mut net, &img, &TrainConfig::default()).unwrap();
    let b = classify(&mut net, &img, &TrainConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_datasets_are_errors() {
    let mut net = net(16);
    assert!(evaluate(&mut net, &[], &TrainConfig::default()).is_err());
    assert!(train_all(&mut net, &[], &TrainConfig::default(), |_, _| Ok(())).is_err());
}

#[test]
fn hold_neurons_do_not_fire_naturally_in_phase_two() {
    let mut net = net(17);
    let active: Vec<usize> = (100..125).collect();
    // group 2 fires strongly for this image, every other group stays silent
    for &i in &active {
        for j in 0..300 {
            net.weights[i * 300 + j] = if net.topology.group_of(j) == 2 { 0.02 } else { 0.0 };
        }
    }
    let out = train_image(&mut net, &image(active, 2), &TrainConfig::default()).unwrap();
    assert_eq!(out.lists.hold_list.len(), 30);
    assert!(out.lists.in_list.is_empty());
    for (k, phase) in out.phases.iter().enumerate() {
        for &j in &out.lists.hold_list {
            let spikes: Vec<&Spike> = phase.spikes.iter().filter(|s| s.neuron == j).collect();
            if k % 2 == 1 {
                // only the artificial hold spike right after Tn + T0
                assert_eq!(spikes.len(), 1, "phase {k} neuron {j}: {spikes:?}");
                assert!(spikes[0].evoked && spikes[0].time < 10.0);
            } else {
                assert_eq!(spikes.len(), 1);
                assert!(!spikes[0].evoked);
            }
        }
        if let Some(isi) = phase.min_isi() {
            assert!(isi >= net.params.hh.t_refrac);
        }
    }
}

#[test]
fn repeated_presentation_moves_counts_toward_the_label() {
    for seed in [21, 22, 23] {
        let mut net = net(seed);
        let cfg = TrainConfig::default();
        let img = image((0..196).step_by(6), 5);
        let (_, rec) = classify(&mut net, &img.active, &cfg).unwrap();
        let mut prev = group_counts(&rec, &net.topology);
        for rep in 0..20 {
            train_image(&mut net, &img, &cfg).unwrap();
            let (_, rec) = classify(&mut net, &img.active, &cfg).unwrap();
            let counts = group_counts(&rec, &net.topology);
            assert!(counts[5] >= prev[5], "seed {seed} rep {rep}: {prev:?} -> {counts:?}");
            for g in (0..10).filter(|&g| g != 5 && prev[g] > cfg.de_target) {
                assert!(counts[g] <= prev[g], "seed {seed} rep {rep} group {g}: {prev:?} -> {counts:?}");
            }
            assert!(net.weights.iter().all(|&w| (0.0..=0.02).contains(&w)));
            prev = counts;
        }
    }
}

#[test]
fn a_single_image_can_be_learned() {
    let mut net = net(31);
    let cfg = TrainConfig::default();
    let img = image((40..160).step_by(4), 7);
    let mut learned_after = None;
    for rep in 0..100 {
        let out = train_image(&mut net, &img, &cfg).unwrap();
        if out.prediction == 7 {
            learned_after = Some(rep);
            break;
        }
    }
    assert!(learned_after.is_some(), "never predicted the label");
    let eval = evaluate(&mut net, std::slice::from_ref(&img), &cfg).unwrap();
    assert_eq!(eval.accuracy, 1.0);
}
