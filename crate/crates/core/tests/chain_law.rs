mod common;

use common::{ks_passes, mean_se};
use proptest::prelude::*;
use sdewms::chain::{simulate_chain, ChainPath, GeneratorMatrix, Switch};
use sdewms::rng::PathStream;

fn ex1_generator() -> GeneratorMatrix {
    GeneratorMatrix::symmetric_two_state(0.5).unwrap()
}

#[test]
fn probability_of_at_least_one_switch() {
    let q = ex1_generator();
    let n = 100_000;
    let hits = (0..n)
        .filter(|&p| {
            let path = simulate_chain(&q, 1, 1.0, &mut PathStream::new(11, p)).unwrap();
            path.count_switches(0.0, 1.0).unwrap() >= 1
        })
        .count();
    let p = hits as f64 / n as f64;
    let exact = 1.0 - (-0.5f64).exp();
    assert!((p - exact).abs() < 0.01, "P(N>=1) = {p}, expected {exact}");
}

#[test]
fn two_or_more_switches_are_rare() {
    let q = ex1_generator();
    let n = 100_000;
    let hits = (0..n)
        .filter(|&p| {
            let path = simulate_chain(&q, 1, 1.0, &mut PathStream::new(12, p)).unwrap();
            path.count_switches(0.0, 1.0).unwrap() >= 2
        })
        .count();
    // exact value is 1 - e^{-1/2}(1 + 1/2) ≈ 0.0902
    let p = hits as f64 / n as f64;
    assert!(p <= 0.25);
    assert!((p - 0.090_204).abs() < 0.005, "P(N>=2) = {p}");
}

#[test]
fn switch_counts_respect_power_bound() {
    let q = ex1_generator();
    let n = 10_000;
    let windows = [(0.0, 0.25), (0.25, 0.75), (0.0, 1.0)];
    let paths: Vec<ChainPath> = (0..n)
        .map(|p| simulate_chain(&q, 1, 1.0, &mut PathStream::new(13, p)).unwrap())
        .collect();
    for (s, t) in windows {
        for k in 1..=3usize {
            let hits = paths
                .iter()
                .filter(|c| c.count_switches(s, t).unwrap() >= k)
                .count();
            let p = hits as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let bound = (q.max_exit_rate() * (t - s)).powi(k as i32);
            assert!(p <= bound + 3.0 * se, "window ({s},{t}] k={k}: {p} > {bound}");
        }
    }
}

#[test]
fn holding_times_are_exponential() {
    let q = ex1_generator();
    let holds: Vec<f64> = (0..10_000)
        .map(|p| {
            // horizon long enough that censoring has probability e^{-20}
            let path = simulate_chain(&q, 0, 40.0, &mut PathStream::new(14, p)).unwrap();
            path.events()[0].time
        })
        .collect();
    let (ok, d, crit) = ks_passes(&holds, |x| 1.0 - (-0.5 * x).exp());
    assert!(ok, "KS statistic {d} above {crit}");
    let (mean, se) = mean_se(&holds);
    assert!((mean - 2.0).abs() < 4.0 * se);
}

#[test]
fn jump_targets_follow_rate_ratios() {
    let q = GeneratorMatrix::new(vec![
        vec![-3.0, 1.0, 2.0],
        vec![0.5, -0.5, 0.0],
        vec![1.0, 1.0, -2.0],
    ])
    .unwrap();
    let n = 20_000;
    let mut to_one = 0;
    for p in 0..n {
        let path = simulate_chain(&q, 0, 10.0, &mut PathStream::new(15, p)).unwrap();
        if path.events()[0].state == 1 {
            to_one += 1;
        }
    }
    let p = to_one as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((p - 1.0 / 3.0).abs() < 4.0 * se, "P(0 -> 1) = {p}");
}

#[test]
fn absorbing_state_never_leaves() {
    let q = GeneratorMatrix::new(vec![vec![-1.0, 1.0], vec![0.0, 0.0]]).unwrap();
    for p in 0..200 {
        let path = simulate_chain(&q, 1, 5.0, &mut PathStream::new(16, p)).unwrap();
        assert!(path.events().is_empty());
    }
}

fn event_strategy() -> impl Strategy<Value = (usize, Vec<Switch>)> {
    (0usize..3, prop::collection::vec((0.001f64..1.0, 1usize..3), 0..8)).prop_map(|(start, raw)| {
        let mut times: Vec<f64> = raw.iter().map(|r| r.0).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut state = start;
        let events = times
            .into_iter()
            .zip(raw.iter().map(|r| r.1))
            .map(|(time, shift)| {
                state = (state + shift) % 3;
                Switch { time, state }
            })
            .collect();
        (start, events)
    })
}

proptest! {
    #[test]
    fn state_is_right_continuous((start, events) in event_strategy()) {
        let path = ChainPath::new(start, events.clone(), 1.0).unwrap();
        let mut before = start;
        for e in &events {
            prop_assert_eq!(path.state_at(e.time).unwrap(), e.state);
            let just_before = e.time - e.time * f64::EPSILON;
            if just_before > 0.0 {
                prop_assert_eq!(path.state_at(just_before).unwrap(), before);
            }
            before = e.state;
        }
        prop_assert_eq!(path.state_at(0.0).unwrap(), start);
    }

    #[test]
    fn switch_counts_are_additive(
        (start, events) in event_strategy(),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
        c in 0.0f64..1.0,
    ) {
        let mut cut = [a, b, c];
        cut.sort_by(f64::total_cmp);
        let path = ChainPath::new(start, events, 1.0).unwrap();
        let whole = path.count_switches(cut[0], cut[2]).unwrap();
        let parts = path.count_switches(cut[0], cut[1]).unwrap() + path.count_switches(cut[1], cut[2]).unwrap();
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn first_switch_lies_in_window(
        (start, events) in event_strategy(),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        let path = ChainPath::new(start, events, 1.0).unwrap();
        match path.first_switch_in(s, t).unwrap() {
            Some(tau) => {
                prop_assert!(s < tau && tau <= t);
                prop_assert_eq!(path.count_switches(s, tau).unwrap(), 1);
            }
            None => prop_assert_eq!(path.count_switches(s, t).unwrap(), 0),
        }
    }

    #[test]
    fn simulated_paths_are_well_formed(seed in any::<u64>(), i0 in 0usize..3, horizon in 0.1f64..5.0) {
        let q = GeneratorMatrix::new(vec![
            vec![-2.0, 1.5, 0.5],
            vec![0.0, -1.0, 1.0],
            vec![3.0, 0.0, -3.0],
        ]).unwrap();
        let path = simulate_chain(&q, i0, horizon, &mut PathStream::new(seed, 0)).unwrap();
        let mut prev_state = i0;
        let mut prev_time = 0.0;
        for e in path.events() {
            prop_assert!(e.time > prev_time && e.time <= horizon);
            prop_assert!(e.state != prev_state);
            prop_assert!(q.rate(prev_state, e.state) > 0.0);
            prev_state = e.state;
            prev_time = e.time;
        }
    }
}
