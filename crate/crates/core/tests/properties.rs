use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vitalrl::agents::{ExplorationSchedule, QTable, ReplayMemory};
use vitalrl::data::{
    normalize, read_csv, synthesize, write_csv, DwellProfile, SynthSpec, TempUnit,
};
use vitalrl::env::{EpisodeConfig, MonitoringEnv, Observation, Transition};
use vitalrl::mews::{canonical_table, classify, MewsScore, SedationLevel, VitalKind};
use vitalrl::neural::{load, save, ModelMeta, QNetwork, Sample};
use vitalrl::reward::{reward, ActionId, RewardMatrix};

const NUMERIC: [VitalKind; 4] = [
    VitalKind::HeartRate,
    VitalKind::RespiratoryRate,
    VitalKind::OxygenSaturation,
    VitalKind::Temperature,
];

#[test]
fn classify_is_total_on_a_fine_grid() {
    for vital in NUMERIC {
        for i in 0..=2600 {
            let x = -10.0 + f64::from(i) * 0.1;
            let s = classify(vital, x).unwrap();
            let hits = canonical_table()
                .bands(vital)
                .iter()
                .filter(|b| b.contains(x))
                .count();
            assert_eq!(hits, 1, "{vital} at {x}");
            assert!(s.value() <= 4);
        }
    }
    for level in SedationLevel::ALL {
        classify(VitalKind::SedationScore, level.code()).unwrap();
    }
}

#[test]
fn bands_are_contiguous_and_unbounded() {
    for vital in NUMERIC {
        let bands = canonical_table().bands(vital);
        assert_eq!(bands.first().unwrap().lo, f64::NEG_INFINITY);
        assert_eq!(bands.last().unwrap().hi, f64::INFINITY);
        for w in bands.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
            assert!(w[0].lo < w[0].hi);
        }
    }
}

fn obs(t: usize, v: f64) -> Observation {
    Observation {
        time_index: t,
        vital: VitalKind::HeartRate,
        raw_value: v,
        norm_value: normalize(VitalKind::HeartRate, v),
        features: vec![normalize(VitalKind::HeartRate, v)],
    }
}

fn arb_vital() -> impl Strategy<Value = VitalKind> {
    prop::sample::select(NUMERIC.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalized_values_stay_in_unit_interval(vital in arb_vital(), x in -1e6f64..1e6) {
        let n = normalize(vital, x);
        prop_assert!((0.0..=1.0).contains(&n));
    }

    #[test]
    fn step_reward_matches_table(
        values in prop::collection::vec(20.0f64..240.0, 2..40),
        actions in prop::collection::vec(0u8..5, 40),
    ) {
        let n = values.len() - 1;
        let config = EpisodeConfig { monitor_length: n, episodes: 1, gamma: 0.9, seed: 0, window: 1 };
        let env = MonitoringEnv::new(&[(VitalKind::HeartRate, &values[..])], &config, canonical_table(), RewardMatrix::default()).unwrap();
        let mut sub = env.into_agents().pop().unwrap();
        sub.reset();
        let mut total = 0i64;
        for t in 0..n {
            let a = ActionId::new(actions[t]).unwrap();
            let out = sub.step(a).unwrap();
            let expected = reward(classify(VitalKind::HeartRate, values[t]).unwrap(), a);
            prop_assert_eq!(out.reward, expected);
            prop_assert_eq!(out.done, t + 1 == n);
            prop_assert_eq!(out.next.raw_value, values[t + 1]);
            total += i64::from(expected);
        }
        prop_assert_eq!(sub.episode_score(), total);
        prop_assert!(total >= -4 * n as i64 && total <= 10 * n as i64);
        prop_assert!(sub.step(ActionId::new(0).unwrap()).is_err());
    }

    #[test]
    fn epsilon_never_rises_or_undershoots(
        eps in 0.0f64..=1.0,
        decay in 0.5f64..=1.0,
        min_frac in 0.0f64..=1.0,
        steps in 1usize..500,
    ) {
        let mut sched = ExplorationSchedule { epsilon: eps, epsilon_decay: decay, epsilon_min: eps * min_frac };
        sched.validate().unwrap();
        let mut last = sched.epsilon;
        for _ in 0..steps {
            sched.decay();
            prop_assert!(sched.epsilon <= last);
            prop_assert!(sched.epsilon >= sched.epsilon_min);
            last = sched.epsilon;
        }
    }

    #[test]
    fn replay_samples_are_distinct_and_reproducible(len in 1usize..100, batch in 1usize..40, seed: u64) {
        let mut mem = ReplayMemory::new(64).unwrap();
        for t in 0..len {
            mem.push(Transition {
                state: obs(t, 70.0),
                action: ActionId::new(0).unwrap(),
                reward: 10,
                next_state: obs(t + 1, 70.0),
                done: false,
            });
        }
        prop_assert_eq!(mem.len(), len.min(64));
        let first = mem.sample_indices(&mut ChaCha8Rng::seed_from_u64(seed), batch);
        let second = mem.sample_indices(&mut ChaCha8Rng::seed_from_u64(seed), batch);
        prop_assert_eq!(&first, &second);
        match first {
            None => prop_assert!(mem.len() < batch),
            Some(idx) => {
                prop_assert_eq!(idx.len(), batch);
                let mut sorted = idx.clone();
                sorted.sort_unstable();
                sorted.dedup();
                prop_assert_eq!(sorted.len(), batch);
                prop_assert!(idx.iter().all(|i| *i < mem.len()));
            }
        }
    }

    #[test]
    fn dwell_counts_sum_to_length(raw in prop::array::uniform5(0.0f64..1.0), len in 1usize..2000) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let fr = raw.map(|x| x / total);
        let profile = DwellProfile::new(fr).unwrap();
        let counts = profile.counts(len);
        prop_assert_eq!(counts.iter().sum::<usize>(), len);
        for (c, f) in counts.iter().zip(fr) {
            prop_assert!((*c as f64 - f * len as f64).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn synthesized_streams_follow_their_schedule(
        len in 1usize..400,
        seed: u64,
        noise in 0.0f64..0.6,
        vital in arb_vital(),
    ) {
        let profile = DwellProfile::uniform_for(vital, canonical_table());
        let stream = synthesize(&SynthSpec {
            subject_id: "p".into(),
            length: len,
            profiles: vec![(vital, profile)],
            noise_std: noise,
            seed,
        }).unwrap();
        let values = stream.series(vital).unwrap();
        let mut hist = [0usize; 5];
        for v in values {
            hist[classify(vital, *v).unwrap().index()] += 1;
        }
        prop_assert_eq!(hist, profile.counts(len));
        let again = synthesize(&SynthSpec {
            subject_id: "p".into(),
            length: len,
            profiles: vec![(vital, profile)],
            noise_std: noise,
            seed,
        }).unwrap();
        prop_assert_eq!(stream, again);
    }

    #[test]
    fn csv_write_read_round_trip(len in 1usize..60, seed: u64) {
        let vitals = [VitalKind::HeartRate, VitalKind::RespiratoryRate, VitalKind::Temperature, VitalKind::SedationScore];
        let stream = synthesize(&SynthSpec {
            subject_id: "rt".into(),
            length: len,
            profiles: vitals.iter().map(|v| (*v, DwellProfile::uniform_for(*v, canonical_table()))).collect(),
            noise_std: 0.3,
            seed,
        }).unwrap();
        let mut bytes = Vec::new();
        write_csv(std::slice::from_ref(&stream), &mut bytes).unwrap();
        let back = read_csv(&bytes[..], "rt", TempUnit::Celsius).unwrap();
        prop_assert_eq!(back.subjects.len(), 1);
        prop_assert_eq!(&back.subjects[0], &stream);
    }

    #[test]
    fn greedy_act_matches_greedy_policy(values in prop::array::uniform5(prop::array::uniform5(-50.0f64..50.0)), seed: u64) {
        let table = QTable::from_values(values, 0.1, 0.9).unwrap();
        let policy = table.greedy_policy();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in MewsScore::all() {
            prop_assert_eq!(table.act(s, 0.0, &mut rng), policy[s.index()]);
        }
    }

    #[test]
    fn model_documents_round_trip_bitwise(d_in in 1usize..4, d_h in 1usize..12, seed: u64, steps in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = QNetwork::new(d_in, d_h, 1e-3, &mut rng).unwrap();
        let state = vec![0.3; d_in];
        for k in 0..steps {
            net.train_step(&[Sample { state: &state, action: ActionId::new(k as u8).unwrap(), target: 7.5 }]).unwrap();
        }
        let meta = ModelMeta { vital: VitalKind::RespiratoryRate, subject: "x".into(), seed, training: None };
        let text = save(&net, &meta).unwrap();
        let (back, meta_back) = load(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(meta_back, meta);
        prop_assert_eq!(save(&back, &ModelMeta { vital: VitalKind::RespiratoryRate, subject: "x".into(), seed, training: None }).unwrap(), text);
    }

    #[test]
    fn failed_train_step_leaves_parameters(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = QNetwork::new(1, 4, 1e-3, &mut rng).unwrap();
        let before = net.clone();
        let state = [0.5];
        let err = net.train_step(&[Sample { state: &state, action: ActionId::new(2).unwrap(), target: f64::NAN }]);
        prop_assert!(err.unwrap_err().is_numerical());
        prop_assert_eq!(net, before);
    }
}
