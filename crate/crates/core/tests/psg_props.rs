mod common;

use common::Micro;
use proptest::prelude::*;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slotmax_core::psg::{divergence, prune, psg_random_k, DenseGraph, PsgParams};
use slotmax_core::selection::greedy;
use slotmax_core::{ExposureModel, ResidualState};

/// Distinct continuous probabilities, so divergence ties do not happen by
/// accident.
fn continuous(max_slots: usize, max_users: usize) -> impl Strategy<Value = Micro> {
    (1..=max_slots, 1..=max_users).prop_flat_map(|(n_slots, n_users)| {
        let list = proptest::collection::btree_map(0..n_users as u32, 0.01f64..0.99, 0..=n_users.min(5));
        proptest::collection::vec(list, n_slots).prop_map(move |lists| Micro {
            n_users,
            lists: lists.into_iter().map(|m| m.into_iter().collect()).collect(),
        })
    })
}

/// The pruning loop written out from the definitions, one influence
/// evaluation at a time.
fn reference_prune(m: &Micro, params: &PsgParams) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut remaining: Vec<usize> = (0..m.n_slots()).filter(|&b| m.influence(&[b]) > 0.0).collect();
    let n = remaining.len();
    let threshold = if n <= 1 { 0.0 } else { params.h * (n as f64).log2() };
    let per_round = (threshold.ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut kept = Vec::new();
    let mut rounds = Vec::new();
    while n > 1 && remaining.len() as f64 > threshold {
        let mut picked = index::sample(&mut rng, remaining.len(), per_round.min(remaining.len())).into_vec();
        picked.sort_unstable();
        let probes: Vec<usize> = picked.iter().map(|&i| remaining[i]).collect();
        let rest: Vec<usize> = remaining.iter().copied().filter(|b| !probes.contains(b)).collect();
        let total = m.influence(&remaining);
        let mut scored: Vec<(f64, usize)> = rest
            .iter()
            .map(|&d| {
                let w = probes
                    .iter()
                    .map(|&u| {
                        let without: Vec<usize> = remaining.iter().copied().filter(|&b| b != u).collect();
                        (m.influence(&[d, u]) - m.influence(&[u])) - (total - m.influence(&without))
                    })
                    .fold(f64::INFINITY, f64::min);
                (w, d)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let drop = if rest.is_empty() {
            0
        } else {
            ((1.0 - 1.0 / params.ell.sqrt()) * rest.len() as f64).floor().max(1.0) as usize
        };
        let dropped: Vec<usize> = scored[..drop.min(scored.len())].iter().map(|s| s.1).collect();
        remaining = rest.into_iter().filter(|b| !dropped.contains(b)).collect();
        kept.extend_from_slice(&probes);
        rounds.push(probes);
    }
    remaining.extend(kept);
    remaining.sort_unstable();
    (remaining, rounds)
}

fn params() -> impl Strategy<Value = PsgParams> {
    (prop_oneof![Just(0.5), Just(1.0), Just(2.0)], prop_oneof![Just(2.0), Just(4.0), Just(8.0)], any::<u64>())
        .prop_map(|(h, ell, seed)| PsgParams { h, ell, seed })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn prune_matches_reference(m in continuous(40, 12), p in params()) {
        let model = m.model();
        let got = prune(&model, &model.all_slots(), &p).unwrap();
        let (want, rounds) = reference_prune(&m, &p);
        prop_assert_eq!(&got.probes, &rounds);
        prop_assert_eq!(&got.reduced, &want);
    }

    #[test]
    fn prune_invariants(m in common::micro(60, 10), p in params()) {
        let model = m.model();
        let ground: Vec<usize> = (0..m.n_slots()).filter(|b| b % 5 != 4).collect();
        prop_assume!(!ground.is_empty());
        let red = prune(&model, &ground, &p).unwrap();
        let zero = ground.iter().filter(|&&b| m.lists[b].is_empty()).count();
        prop_assert_eq!(red.zero_influence_removed, zero);
        prop_assert_eq!(red.n, ground.len() - zero);
        prop_assert!(red.reduced.iter().all(|b| ground.contains(b) && !m.lists[*b].is_empty()));
        for probes in &red.probes {
            prop_assert!(probes.iter().all(|b| red.reduced.binary_search(b).is_ok()));
        }
        prop_assert!(red.rounds <= p.round_bound(red.n), "{} rounds for n = {}", red.rounds, red.n);
        prop_assert_eq!(red.rounds, red.removed_per_round.len());
        // Only a round whose probes used up every remaining slot removes nothing.
        if let Some((_, init)) = red.removed_per_round.split_last() {
            prop_assert!(init.iter().all(|&r| r >= 1));
        }
        let threshold = p.threshold(red.n);
        let survivors = red.reduced.len() - red.probes.iter().map(Vec::len).sum::<usize>();
        prop_assert!(survivors as f64 <= threshold || red.n <= 1);
    }

    #[test]
    fn divergence_matches_definition(m in continuous(10, 8), d in 0usize..10, mask in proptest::collection::vec(any::<bool>(), 10)) {
        let n = m.n_slots();
        let d = d % n;
        let probes: Vec<usize> = (0..n).filter(|&b| b != d && mask[b]).collect();
        prop_assume!(!probes.is_empty());
        let model = m.model();
        let all = model.all_slots();
        let state = ResidualState::over(&model, &all).unwrap();
        let total = m.influence(&all);
        let want = probes
            .iter()
            .map(|&u| {
                let without: Vec<usize> = all.iter().copied().filter(|&b| b != u).collect();
                m.influence(&[d, u]) - m.influence(&[u]) - (total - m.influence(&without))
            })
            .fold(f64::INFINITY, f64::min);
        prop_assert!((divergence(&model, &state, d, &probes).unwrap() - want).abs() < 1e-9);
    }
}

#[test]
fn dense_graph_weights() {
    let m = Micro { n_users: 3, lists: vec![vec![(0, 0.5)], vec![(0, 0.5), (1, 0.4)], vec![(2, 0.3)]] };
    let model = m.model();
    let g = DenseGraph::build(&model, &[0, 1, 2]).unwrap();
    let all = [0, 1, 2];
    for x in 0..3 {
        let without: Vec<usize> = all.iter().copied().filter(|&b| b != x).collect();
        let del = m.influence(&all) - m.influence(&without);
        for y in (0..3).filter(|&y| y != x) {
            let want = m.influence(&[x, y]) - m.influence(&[x]) - del;
            assert!((g.weight(x, y).unwrap() - want).abs() < 1e-12);
        }
        assert!(g.weight(x, x).is_none());
    }
    assert!((g.weight(0, 1).unwrap() - 0.40).abs() < 1e-9);
    let big = ExposureModel::from_lists(1, vec![vec![(0, 0.1)]; 201]).unwrap();
    assert!(DenseGraph::build(&big, &big.all_slots()).is_err());
}

#[test]
fn round_count_for_two_thousand_slots() {
    let lists = (0..2000u32).map(|s| vec![(s % 97, 0.05 + f64::from(s % 13) * 0.01), (97 + s % 31, 0.2)]).collect();
    let model = ExposureModel::from_lists(128, lists).unwrap();
    let p = PsgParams::default();
    let red = prune(&model, &model.all_slots(), &p).unwrap();

    // |remaining| after each round from the recurrence alone.
    let threshold = 8.0 * 2000f64.log2();
    let probes = threshold.ceil() as usize;
    let (mut remaining, mut expected) = (2000usize, Vec::new());
    while remaining as f64 > threshold {
        let rest = remaining - probes;
        let drop = ((1.0 - 1.0 / 8f64.sqrt()) * rest as f64).floor() as usize;
        expected.push(drop);
        remaining = rest - drop;
    }
    assert_eq!(red.removed_per_round, expected);
    assert_eq!(red.rounds, 3);
    assert!(red.rounds <= p.round_bound(2000));
    assert_eq!(red.reduced.len(), 2000 - expected.iter().sum::<usize>());
}

#[test]
fn psg_random_stays_inside_reduction() {
    let lists = (0..300u32).map(|s| vec![(s % 40, 0.3), (40 + (s * 11) % 40, 0.6)]).collect();
    let model = ExposureModel::from_lists(80, lists).unwrap();
    let p = PsgParams { h: 2.0, ..PsgParams::default() };
    let (red, sel) = psg_random_k(&model, &model.all_slots(), &p, 10, 3).unwrap();
    let (red2, sel2) = psg_random_k(&model, &model.all_slots(), &p, 10, 3).unwrap();
    assert_eq!((red.reduced.clone(), sel.chosen.clone()), (red2.reduced, sel2.chosen));
    assert!(sel.chosen.iter().all(|b| red.reduced.contains(b)));
    let g = greedy(&model, &red.reduced, 10).unwrap();
    assert!(sel.influence <= g.influence + 1e-9);
    let (red3, sel3) = psg_random_k(&model, &model.all_slots(), &p, red.reduced.len(), 9).unwrap();
    let mut all = sel3.chosen.clone();
    all.sort_unstable();
    assert_eq!(all, red3.reduced);
}
