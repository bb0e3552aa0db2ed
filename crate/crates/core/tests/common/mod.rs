#![allow(dead_code)]

use proptest::prelude::*;
use slotmax_core::ExposureModel;

/// Raw exposure lists: `lists[slot] = [(user, p)]`, users unique per slot.
#[derive(Clone, Debug)]
pub struct Micro {
    pub n_users: usize,
    pub lists: Vec<Vec<(u32, f64)>>,
}

impl Micro {
    pub fn model(&self) -> ExposureModel {
        ExposureModel::from_lists(self.n_users, self.lists.clone()).unwrap()
    }

    pub fn n_slots(&self) -> usize {
        self.lists.len()
    }

    fn p(&self, slot: usize, user: u32) -> f64 {
        self.lists[slot].iter().find(|e| e.0 == user).map_or(0.0, |e| e.1)
    }

    /// Influence straight from the definition, user by user.
    pub fn influence(&self, set: &[usize]) -> f64 {
        (0..self.n_users as u32).map(|u| 1.0 - set.iter().map(|&b| 1.0 - self.p(b, u)).product::<f64>()).sum()
    }

    pub fn gain(&self, set: &[usize], b: usize) -> f64 {
        let mut with = set.to_vec();
        with.push(b);
        self.influence(&with) - self.influence(set)
    }

    /// Best value over all k-subsets by plain recursion.
    pub fn optimum(&self, k: usize) -> f64 {
        fn go(m: &Micro, start: usize, k: usize, cur: &mut Vec<usize>, best: &mut f64) {
            if cur.len() == k {
                *best = best.max(m.influence(cur));
                return;
            }
            for b in start..m.n_slots() {
                cur.push(b);
                go(m, b + 1, k, cur, best);
                cur.pop();
            }
        }
        let mut best = 0.0;
        go(self, 0, k.min(self.n_slots()), &mut Vec::new(), &mut best);
        best
    }
}

/// Up to `max_slots` slots over up to `max_users` users. Probabilities are
/// drawn from a few panel ratios so ties and shared values occur.
pub fn micro(max_slots: usize, max_users: usize) -> impl Strategy<Value = Micro> {
    (1..=max_slots, 1..=max_users).prop_flat_map(|(n_slots, n_users)| {
        let list = proptest::collection::btree_map(
            0..n_users as u32,
            prop_oneof![Just(0.25), Just(0.5), Just(0.8), 0.01f64..0.99],
            0..=n_users,
        );
        proptest::collection::vec(list, n_slots).prop_map(move |lists| Micro {
            n_users,
            lists: lists.into_iter().map(|m| m.into_iter().collect()).collect(),
        })
    })
}

/// A micro instance plus a mask selecting a subset of its slots.
pub fn micro_with_subset(max_slots: usize, max_users: usize) -> impl Strategy<Value = (Micro, Vec<usize>)> {
    micro(max_slots, max_users).prop_flat_map(|m| {
        let n = m.n_slots();
        (Just(m), proptest::collection::vec(any::<bool>(), n))
            .prop_map(|(m, mask)| (m, mask.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i).collect()))
    })
}
