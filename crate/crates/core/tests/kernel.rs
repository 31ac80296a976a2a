//! The transition kernel against a brute-force model of the physical system,
//! plus structural properties of the truncated mdp.

use std::collections::BTreeMap;

use aoii::mdp::{transitions, Action, Channel, State, TruncatedMdp, TruncationConfig};
use aoii::model::{DelayModel, PenaltyFunction, SourceModel};
use proptest::prelude::*;

/// Concrete bits behind an abstract state: receiver estimate 0, source equal
/// to it iff Δ = 0, and an in-flight update equal to the estimate iff i = 0.
fn concrete(s: State) -> (u8, u8, Option<(u8, u32)>) {
    let xhat = 0;
    let x = u8::from(s.delta > 0);
    let flight = match s.channel {
        Channel::Idle => None,
        Channel::Redundant => Some((xhat, s.t)),
        Channel::Informative => Some((1 - xhat, s.t)),
    };
    (x, xhat, flight)
}

/// Enumerate delivery and flip outcomes slot by slot.
fn brute_force(p: f64, delay: &DelayModel, s: State, a: Action) -> BTreeMap<State, f64> {
    let (x, xhat, mut flight) = concrete(s);
    if a == Action::Transmit {
        flight = Some((x, 0));
    }
    let mut deliveries: Vec<(f64, u8, Option<(u8, u32)>)> = Vec::new();
    match flight {
        None => deliveries.push((1.0, xhat, None)),
        Some((u, age)) => {
            let q = delay.hazard(age + 1).unwrap();
            deliveries.push((q, u, None));
            deliveries.push((1.0 - q, xhat, Some((u, age + 1))));
        }
    }
    let mut out = BTreeMap::new();
    for (pd, new_hat, fl) in deliveries {
        for (pf, flip) in [(1.0 - p, 0u8), (p, 1u8)] {
            let prob = pd * pf;
            if prob == 0.0 {
                continue;
            }
            let new_x = x ^ flip;
            let delta = if new_x == new_hat { 0 } else { s.delta + 1 };
            let next = match fl {
                None => State::idle(delta),
                Some((u, t)) => {
                    let ch = if u == new_hat { Channel::Redundant } else { Channel::Informative };
                    State::busy(delta, t, ch)
                }
            };
            *out.entry(next).or_insert(0.0) += prob;
        }
    }
    out
}

fn as_map(v: Vec<(State, f64)>) -> BTreeMap<State, f64> {
    let mut m = BTreeMap::new();
    for (s, p) in v {
        *m.entry(s).or_insert(0.0) += p;
    }
    m
}

fn delays() -> Vec<DelayModel> {
    vec![
        DelayModel::geometric(0.7).unwrap(),
        DelayModel::geometric(0.15).unwrap(),
        DelayModel::zipf(0.0, 4).unwrap(),
        DelayModel::zipf(3.0, 5).unwrap(),
        DelayModel::deterministic(1).unwrap(),
        DelayModel::deterministic(3).unwrap(),
        DelayModel::explicit(vec![0.2, 0.0, 0.5, 0.3]).unwrap(),
    ]
}

fn states_for(delay: &DelayModel) -> Vec<State> {
    let t_hi = delay.t_max().map_or(6, |t| t.saturating_sub(1).max(1));
    let mut out = Vec::new();
    for delta in 0..5 {
        out.push(State::idle(delta));
        for t in 1..=t_hi {
            out.push(State::busy(delta, t, Channel::Redundant));
            if delta > 0 {
                out.push(State::busy(delta, t, Channel::Informative));
            }
        }
    }
    out
}

#[test]
fn kernel_matches_physical_model() {
    for p in [0.05, 0.3, 0.45] {
        let src = SourceModel::new(p).unwrap();
        for delay in delays() {
            for s in states_for(&delay) {
                for a in Action::ALL {
                    let got = as_map(transitions(&src, &delay, s, a).unwrap());
                    let want = brute_force(p, &delay, s, a);
                    assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>(), "{} {s} {a:?}", delay.kind());
                    for (k, v) in &want {
                        assert!((got[k] - v).abs() < 1e-15, "{} {s} {a:?} -> {k}", delay.kind());
                    }
                }
            }
        }
    }
}

#[test]
fn rows_are_stochastic_and_step_delta() {
    let src = SourceModel::new(0.27).unwrap();
    for delay in delays() {
        for s in states_for(&delay) {
            for a in Action::ALL {
                let row = transitions(&src, &delay, s, a).unwrap();
                let total: f64 = row.iter().map(|(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-14);
                assert!(row.iter().all(|(n, p)| *p > 0.0 && (n.delta == 0 || n.delta == s.delta + 1)));
            }
        }
    }
}

#[test]
fn rows_shift_with_delta() {
    let src = SourceModel::new(0.2).unwrap();
    let delay = DelayModel::zipf(1.0, 6).unwrap();
    for ch in [Channel::Redundant, Channel::Informative] {
        for t in 1..5 {
            for a in Action::ALL {
                let base = as_map(transitions(&src, &delay, State::busy(1, t, ch), a).unwrap());
                for delta in 2..20 {
                    let row = as_map(transitions(&src, &delay, State::busy(delta, t, ch), a).unwrap());
                    let shifted: BTreeMap<State, f64> = base
                        .iter()
                        .map(|(n, p)| {
                            let mut n = *n;
                            if n.delta > 0 {
                                n.delta += delta - 1;
                            }
                            (n, *p)
                        })
                        .collect();
                    assert_eq!(row, shifted);
                }
            }
        }
    }
}

#[test]
fn truncation_preserves_interior_rows() {
    let src = SourceModel::new(0.35).unwrap();
    let f = PenaltyFunction::linear(1.0, 0.0).unwrap();
    for delay in delays() {
        let cfg = TruncationConfig::for_delay(&delay, 12);
        let m = TruncatedMdp::build(&src, &delay, &f, cfg).unwrap();
        for s in 0..m.n_states() {
            let st = m.state(s);
            assert_eq!(m.costs()[s], st.delta as f64);
            for a in Action::ALL {
                let (cols, probs) = m.row(s, a);
                let total: f64 = probs.iter().sum();
                assert!((total - 1.0).abs() < 1e-14);
                if st.delta < cfg.delta_max && st.t < cfg.t_max_trunc {
                    let got: BTreeMap<State, f64> = cols.iter().zip(probs).map(|(&c, &p)| (m.state(c as usize), p)).collect();
                    assert_eq!(got, as_map(transitions(&src, &delay, st, a).unwrap()), "{} {st}", delay.kind());
                }
            }
        }
    }
}

#[test]
fn state_count() {
    for (dm, t) in [(100u32, 30u32), (10, 1), (3, 7)] {
        let cfg = TruncationConfig::new(dm, t);
        assert_eq!(cfg.raw_grid_size(), (dm as usize + 1) * 3 * (t as usize + 1));
        assert_eq!(cfg.n_states(), (dm as usize + 1) * (1 + 2 * t as usize));
    }
}

proptest! {
    #[test]
    fn pmf_round_trips_through_hazards(raw in prop::collection::vec(0.0f64..1.0, 1..12), last in 0.01f64..1.0) {
        let mut pmf = raw;
        pmf.push(last);
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|x| *x /= total);
        let delay = DelayModel::explicit(pmf.clone()).unwrap();
        let mut survive = 1.0;
        for (k, want) in pmf.iter().enumerate() {
            let q = delay.hazard(k as u32 + 1).unwrap();
            prop_assert!((survive * q - want).abs() < 1e-12);
            survive *= 1.0 - q;
        }
        prop_assert_eq!(delay.hazard(pmf.len() as u32).unwrap(), 1.0);
    }

    #[test]
    fn geometric_pmf_from_hazards(ps in 0.01f64..0.99) {
        let delay = DelayModel::geometric(ps).unwrap();
        let mut survive = 1.0;
        let mut t = 1;
        while survive > 1e-9 {
            let q = delay.hazard(t).unwrap();
            prop_assert!((survive * q - delay.pmf(t).unwrap()).abs() < 1e-12);
            survive *= 1.0 - q;
            t += 1;
        }
    }

    #[test]
    fn penalties_non_decreasing(alpha in 0.0f64..5.0, beta in 0.0f64..5.0, kappa in 0.0f64..5.0, base in 1.1f64..10.0) {
        let fs = [
            PenaltyFunction::linear(alpha, beta).unwrap(),
            PenaltyFunction::quadratic(kappa).unwrap(),
            PenaltyFunction::logarithmic(base).unwrap(),
        ];
        for f in &fs {
            for d in 0..200 {
                prop_assert!(f.eval(d + 1) >= f.eval(d));
            }
        }
    }
}
