//! Checks against independently computed answers: naive re-implementations,
//! finite differences, brute force, and closed forms.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vitalrl::agents::{q_update, ExplorationSchedule, QTable, ReplayCadence};
use vitalrl::data::{synthesize, DwellProfile, SynthSpec};
use vitalrl::env::{discounted_return, EpisodeConfig, MonitoringEnv};
use vitalrl::harness::{evaluate_policy, train_agent_from, RunConfig};
use vitalrl::mews::{canonical_table, classify, MewsScore, VitalKind};
use vitalrl::neural::{td_target, QNetwork, Sample, TargetSpec};
use vitalrl::reward::{reward, ActionId, RewardMatrix};

fn a(i: u8) -> ActionId {
    ActionId::new(i).unwrap()
}

fn s(i: u8) -> MewsScore {
    MewsScore::new(i).unwrap()
}

/// Plain nested-loop forward pass written straight from the layer definitions.
fn naive_forward(net: &QNetwork, x: &[f64]) -> Vec<f64> {
    let (d_in, d_h) = (net.input_dim(), net.hidden_dim());
    let mut h = vec![0.0; d_h];
    for j in 0..d_h {
        let mut z = net.b1()[j];
        for i in 0..d_in {
            z += net.w1()[j * d_in + i] * x[i];
        }
        h[j] = if z > 0.0 { z } else { 0.0 };
    }
    (0..5)
        .map(|k| net.b2()[k] + (0..d_h).map(|j| net.w2()[k * d_h + j] * h[j]).sum::<f64>())
        .collect()
}

fn batch_loss(net: &QNetwork, batch: &[Sample<'_>]) -> f64 {
    batch
        .iter()
        .map(|smp| {
            let q = naive_forward(net, smp.state);
            (q[smp.action.index()] - smp.target).powi(2)
        })
        .sum::<f64>()
        / batch.len() as f64
}

#[test]
fn forward_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let d_in = rng.gen_range(1..=4);
        let d_h = rng.gen_range(1..=10);
        let net = QNetwork::new(d_in, d_h, 1e-3, &mut rng).unwrap();
        let x: Vec<f64> = (0..d_in).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let fast = net.forward(&x).unwrap();
        let slow = naive_forward(&net, &x);
        for k in 0..5 {
            assert!((fast[k] - slow[k]).abs() <= 1e-12 * (1.0 + slow[k].abs()));
        }
    }
}

#[test]
fn hand_computed_one_one_five_net() {
    let mut net = QNetwork::zeros(1, 1, 1e-3).unwrap();
    // w1 = 2, b1 = -0.5, w2 = [1, -1, 0.5, 0, 3], b2 = [0, 1, 0, 0, -1]
    net.set_params(&[
        2.0, -0.5, 1.0, -1.0, 0.5, 0.0, 3.0, 0.0, 1.0, 0.0, 0.0, -1.0,
    ])
    .unwrap();
    // h = relu(2 * 0.75 - 0.5) = 1
    assert_eq!(net.forward(&[0.75]).unwrap(), [1.0, 0.0, 0.5, 0.0, 2.0]);
    // h = relu(2 * 0.1 - 0.5) = 0, only biases remain
    assert_eq!(net.forward(&[0.1]).unwrap(), [0.0, 1.0, 0.0, 0.0, -1.0]);

    let state = [0.75];
    let batch = [Sample {
        state: &state,
        action: a(4),
        target: 0.0,
    }];
    // loss = (2 - 0)^2, dL/dq4 = 4, dq4/dw2[4][0] = h = 1, dq4/dw1 = w2[4][0] * x = 2.25
    let (loss, grad) = net.gradient(&batch).unwrap();
    assert_eq!(loss, 4.0);
    assert_eq!(grad[0], 4.0 * 3.0 * 0.75);
    assert_eq!(grad[1], 4.0 * 3.0);
    assert_eq!(grad[6], 4.0);
    assert_eq!(grad[11], 4.0);
    assert_eq!(grad.iter().filter(|g| **g != 0.0).count(), 4);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    for _ in 0..100 {
        let d_in = rng.gen_range(1..=3);
        let d_h = rng.gen_range(1..=8);
        let net = QNetwork::new(d_in, d_h, 1e-3, &mut rng).unwrap();
        let states: Vec<Vec<f64>> = (0..rng.gen_range(1..=6))
            .map(|_| (0..d_in).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let batch: Vec<Sample<'_>> = states
            .iter()
            .map(|st| Sample {
                state: st,
                action: a(rng.gen_range(0..5)),
                target: rng.gen_range(-5.0..5.0),
            })
            .collect();
        let (_, grad) = net.gradient(&batch).unwrap();
        for p in 0..grad.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let mut params = net.params().to_vec();
            params[p] += h;
            plus.set_params(&params).unwrap();
            params[p] -= 2.0 * h;
            minus.set_params(&params).unwrap();
            let numeric = (batch_loss(&plus, &batch) - batch_loss(&minus, &batch)) / (2.0 * h);
            let err = (grad[p] - numeric).abs();
            assert!(
                err <= 1e-7 || err <= 1e-4 * numeric.abs().max(grad[p].abs()),
                "param {p}: analytic {} numeric {numeric}",
                grad[p]
            );
        }
    }
}

#[test]
fn first_adam_step_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut net = QNetwork::new(2, 5, 0.01, &mut rng).unwrap();
    let states = [[0.2, 0.9], [0.7, 0.1]];
    let batch = [
        Sample {
            state: &states[0],
            action: a(1),
            target: 3.0,
        },
        Sample {
            state: &states[1],
            action: a(4),
            target: -2.0,
        },
    ];
    let before = net.params().to_vec();
    let (_, grad) = net.gradient(&batch).unwrap();
    net.train_step(&batch).unwrap();
    // with bias correction the first step is lr * g / (|g| + eps)
    for ((p0, p1), g) in before.iter().zip(net.params()).zip(&grad) {
        let expected = p0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((p1 - expected).abs() < 1e-12);
    }
    assert_eq!(net.adam_step(), 1);
}

#[test]
fn td_target_cases() {
    let next_q = [1.0, 4.0, -2.0, 0.5, 3.0];
    let live = td_target(&TargetSpec {
        reward: -1.0,
        gamma: 0.9,
        next_q,
        done: false,
    });
    assert!((live - (-1.0 + 0.9 * 4.0)).abs() < 1e-15);
    let terminal = td_target(&TargetSpec {
        reward: -1.0,
        gamma: 0.9,
        next_q,
        done: true,
    });
    assert_eq!(terminal, -1.0);
}

#[test]
fn discounted_return_closed_form() {
    for &gamma in &[0.0, 0.5, 0.9, 0.95] {
        for n in [1usize, 7, 40] {
            let rewards = vec![10.0; n];
            let expected = 10.0 * (1.0 - f64::powi(gamma, n as i32)) / (1.0 - gamma);
            let got = discounted_return(&rewards, gamma).unwrap();
            assert!((got - expected).abs() < 1e-9, "gamma {gamma} n {n}");
        }
    }
}

/// Every action sequence over short streams: the best total is 10 per step
/// and it is reached only by echoing the score.
#[test]
fn brute_force_episode_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=5usize {
        let values: Vec<f64> = (0..=n).map(|_| rng.gen_range(30.0..160.0)).collect();
        let scores: Vec<MewsScore> = values
            .iter()
            .map(|v| classify(VitalKind::HeartRate, *v).unwrap())
            .collect();
        let mut best = i64::MIN;
        let mut best_count = 0;
        let mut best_actions = Vec::new();
        for code in 0..5usize.pow(n as u32) {
            let mut c = code;
            let mut total = 0i64;
            let mut actions = Vec::new();
            for t in 0..n {
                let act = a((c % 5) as u8);
                c /= 5;
                total += i64::from(reward(scores[t], act));
                actions.push(act);
            }
            if total > best {
                best = total;
                best_count = 1;
                best_actions = actions;
            } else if total == best {
                best_count += 1;
            }
        }
        assert_eq!(best, 10 * n as i64);
        assert_eq!(best_count, 1);
        assert!(best_actions
            .iter()
            .zip(&scores)
            .all(|(x, sc)| x.value() == sc.value()));

        let via_env = evaluate_policy(
            VitalKind::HeartRate,
            &values,
            n,
            1,
            RewardMatrix::default(),
            |obs| Ok(a(classify(obs.vital, obs.raw_value)?.value())),
        )
        .unwrap();
        assert_eq!(via_env, best);
    }
}

#[test]
fn tabular_converges_to_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut table = QTable::new(0.1, 0.9).unwrap();
    let states: Vec<MewsScore> = (0..1000).map(|i| s((i % 5) as u8)).collect();
    for _ in 0..5 {
        for w in states.windows(2) {
            let act = table.act(w[0], 0.3, &mut rng);
            table = q_update(table, w[0], act, f64::from(reward(w[0], act)), w[1]);
        }
    }
    let policy = table.greedy_policy();
    for sc in MewsScore::all() {
        let brute = ActionId::all()
            .max_by_key(|x| (reward(sc, *x), -(x.value() as i32)))
            .unwrap();
        assert_eq!(policy[sc.index()], brute);
        assert_eq!(brute.value(), sc.value());
    }
}

fn band_stream(score: u8, len: usize) -> Vec<f64> {
    synthesize(&SynthSpec {
        subject_id: "s".into(),
        length: len,
        profiles: vec![(VitalKind::HeartRate, DwellProfile::single(s(score)))],
        noise_std: 0.5,
        seed: 1,
    })
    .unwrap()
    .vitals[&VitalKind::HeartRate]
        .clone()
}

#[test]
fn single_step_with_identity_policy_scores_ten() {
    let cfg = RunConfig {
        episodes: 1,
        monitor_length: 1,
        vitals: vec![VitalKind::HeartRate],
        exploration: ExplorationSchedule {
            epsilon: 0.0,
            epsilon_decay: 0.995,
            epsilon_min: 0.0,
        },
        replay_cadence: ReplayCadence::PerStep,
        ..RunConfig::default()
    };
    // band 3 stream, network biased toward action 3 only
    let values = band_stream(3, 2);
    let mut net = QNetwork::zeros(1, 4, cfg.alpha).unwrap();
    let mut params = net.params().to_vec();
    let n = params.len();
    params[n - 2] = 1.0;
    net.set_params(&params).unwrap();

    let env = MonitoringEnv::new(
        &[(VitalKind::HeartRate, &values[..])],
        &EpisodeConfig {
            monitor_length: 1,
            episodes: 1,
            gamma: cfg.gamma,
            seed: 0,
            window: 1,
        },
        canonical_table(),
        RewardMatrix::default(),
    )
    .unwrap();
    let mut sub = env.into_agents().pop().unwrap();
    let (scores, _) = train_agent_from(&mut sub, "s", &cfg, net).unwrap();
    assert_eq!(scores, vec![10]);
}

#[test]
fn constant_action_zero_in_band_three() {
    let values = band_stream(3, 50);
    let score = evaluate_policy(
        VitalKind::HeartRate,
        &values,
        50,
        1,
        RewardMatrix::default(),
        |_| Ok(a(0)),
    )
    .unwrap();
    assert_eq!(score, -3 * 50);
}
