mod common;

use std::io::Cursor;

use common::{params, PROTOCOLS};
use mac_renewal::estimators::reconstruct_counts;
use mac_renewal::event_sim::{busy_channels, read_scripted_arrivals, simulate, ArrivalStream, Outcome};
use mac_renewal::{Error, ProtocolKind, RandomSource};
use proptest::prelude::*;

fn scripted(proto: ProtocolKind, kappa: u32, times: &[f64], horizon: f64) -> mac_renewal::event_sim::Trace {
    simulate(params(1.0, kappa), proto, ArrivalStream::scripted(times.to_vec()), horizon).unwrap()
}

#[test]
fn csma_scripted_example() {
    // 0.5 admitted, 0.9 blocked, 1.6 admitted (first frees at 1.5).
    let tr = scripted(ProtocolKind::Csma, 1, &[0.5, 0.9, 1.6], 3.0);
    assert_eq!(tr.admissions, vec![0.5, 1.6]);
    assert_eq!(tr.counts.attempts_total, 3);
    assert_eq!(tr.counts.successes_total, 2);
    assert_eq!(tr.steps[1].attempts, 2);
    assert!((tr.steps[1].gap - 1.1).abs() < 1e-12);
}

#[test]
fn completion_precedes_arrival_at_same_instant() {
    let tr = scripted(ProtocolKind::Csma, 1, &[0.5, 1.5], 3.0);
    assert_eq!(tr.admissions, vec![0.5, 1.5]);
}

#[test]
fn aloha_collision_destroys_resident() {
    let tr = scripted(ProtocolKind::Aloha, 1, &[0.2, 0.7, 2.0], 3.0);
    assert_eq!(tr.admissions, vec![0.2, 2.0]);
    assert_eq!(tr.outcomes, vec![Outcome::Destroyed, Outcome::Delivered]);
    assert_eq!(tr.counts.successes_total, 1);
    assert_eq!(tr.counts.potential_successes, 2);
}

#[test]
fn aloha_fate_is_settled_after_horizon() {
    // Admitted at 2.5; the collision at 3.2 lies beyond the horizon.
    let tr = scripted(ProtocolKind::Aloha, 1, &[2.5, 3.2], 3.0);
    assert_eq!(tr.outcomes, vec![Outcome::Destroyed]);
    assert_eq!(tr.counts.attempts_total, 1);
}

#[test]
fn unsorted_arrivals_are_rejected() {
    let err = simulate(params(1.0, 1), ProtocolKind::Csma, ArrivalStream::scripted(vec![0.5, 0.4]), 1.0).unwrap_err();
    assert_eq!(err, Error::UnsortedArrivals { index: 1, value: 0.4 });
}

#[test]
fn busy_channels_guards() {
    let tr = scripted(ProtocolKind::Csma, 2, &[0.5, 0.6, 0.7], 2.0);
    assert_eq!(busy_channels(&tr, 0.65).unwrap(), 2);
    assert_eq!(busy_channels(&tr, 1.55).unwrap(), 1);
    assert!(matches!(busy_channels(&tr, 2.5), Err(Error::BeyondHorizon { .. })));
}

#[test]
fn scripted_arrivals_parse() {
    let text = "# times\n0.5\n\n1.25\n";
    assert_eq!(read_scripted_arrivals(Cursor::new(text)).unwrap(), vec![0.5, 1.25]);
    assert!(read_scripted_arrivals(Cursor::new("abc\n")).is_err());
}

#[test]
fn same_seed_same_trace() {
    for proto in PROTOCOLS {
        let run = || simulate(params(1.3, 2), proto, ArrivalStream::poisson(RandomSource::new(5, 0), 1.3), 300.0).unwrap();
        assert_eq!(run(), run());
    }
}

/// Chain reconstruction from a CSMA trace's own steps recovers its counts,
/// with the attempt count at the top of the reported bracket.
#[test]
fn reconstruction_matches_trace() {
    for kappa in 1..=3u32 {
        for lambda in [0.5, 1.0, 2.0] {
            let p = params(lambda, kappa);
            let t = 500.0;
            let tr = simulate(p, ProtocolKind::Csma, ArrivalStream::poisson(RandomSource::new(21, 0), lambda), t).unwrap();
            let mut steps = tr.steps.clone();
            // A final step past the horizon so the records cover t; it holds
            // the arrivals after the last admission plus its own.
            let trailing = tr.counts.attempts_total - steps.iter().map(|r| r.attempts).sum::<u64>();
            steps.push(mac_renewal::StepRecord::new(trailing + 1, t).unwrap());
            let rec = reconstruct_counts(&steps, ProtocolKind::Csma, t).unwrap();
            assert_eq!(rec.counts.successes_total, tr.counts.successes_total);
            assert_eq!(rec.counts.potential_successes, tr.counts.potential_successes);
            assert!(rec.counts.attempts_total <= tr.counts.attempts_total);
            assert_eq!(rec.attempts_upper, tr.counts.attempts_total);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_invariants(seed in 0u64..10_000, lambda in 0.1f64..4.0, kappa in 1u32..5, aloha in any::<bool>()) {
        let proto = if aloha { ProtocolKind::Aloha } else { ProtocolKind::Csma };
        let horizon = 60.0;
        let tr = simulate(params(lambda, kappa), proto, ArrivalStream::poisson(RandomSource::new(seed, 0), lambda), horizon).unwrap();
        let c = tr.counts;
        prop_assert!(c.successes_total <= c.potential_successes);
        prop_assert!(c.potential_successes <= c.attempts_total);
        prop_assert_eq!(tr.steps.len(), tr.admissions.len());
        prop_assert_eq!(tr.steps.iter().map(|r| r.attempts).sum::<u64>() <= c.attempts_total, true);
        // Admissions are arrivals.
        prop_assert!(tr.admissions.iter().all(|a| tr.arrivals.binary_search_by(|x| x.total_cmp(a)).is_ok()));
        // Never more than kappa in service.
        for &a in &tr.admissions {
            prop_assert!(busy_channels(&tr, a).unwrap() <= kappa);
        }
        if proto == ProtocolKind::Csma {
            prop_assert_eq!(c.successes_total, c.potential_successes);
            for w in tr.admissions.windows(kappa as usize + 1) {
                prop_assert!(w[kappa as usize] - w[0] >= 1.0);
            }
        } else {
            // Collision bookkeeping: every destroyed message costs at most
            // one extra attempt, up to kappa undecided residents at the end.
            let delivered = c.successes_total as i64;
            let bound = 2 * c.potential_successes as i64 - c.attempts_total as i64 - kappa as i64;
            prop_assert!(delivered >= bound);
        }
    }
}
