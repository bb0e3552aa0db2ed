use std::collections::BTreeMap;

use proptest::prelude::*;
use slotmax_core::corpus::{self, build_exposure_model, enumerate_slots, horizon_for, MAX_PROBABILITY};
use slotmax_core::pipelines::{generate_synthetic, SyntheticConfig};
use slotmax_core::{Billboard, Error, TrajectoryRecord};

fn billboard() -> impl Strategy<Value = Billboard> {
    ("[a-z][a-z0-9_ ,\"]{0,5}[a-z0-9]", -90.0f64..=90.0, -180.0f64..=180.0, 0.001f64..1e4, 0.0f64..1e6)
        .prop_map(|(id, lat, lon, panel_size, cost)| Billboard { id, lat, lon, panel_size, cost })
}

fn record() -> impl Strategy<Value = TrajectoryRecord> {
    ("[a-z0-9]{1,4}", -90.0f64..=90.0, -180.0f64..=180.0, -10_000i64..10_000, 0i64..500).prop_map(
        |(user_id, lat, lon, t_start, len)| TrajectoryRecord { user_id, lat, lon, t_start, t_end: t_start + len },
    )
}

fn unique_ids(v: Vec<Billboard>) -> Vec<Billboard> {
    let mut seen = std::collections::HashSet::new();
    v.into_iter().filter(|b| seen.insert(b.id.clone())).collect()
}

fn parse_error_line(e: Error) -> u64 {
    match e {
        Error::Parse { line, .. } | Error::Validation { line, .. } => line,
        other => panic!("expected a line-numbered error, got {other}"),
    }
}

/// Great-circle distance through the spherical law of cosines.
fn distance_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (a, b) = (lat1.to_radians(), lat2.to_radians());
    let c = a.sin() * b.sin() + a.cos() * b.cos() * (lon2 - lon1).to_radians().cos();
    6_371_000.0 * c.clamp(-1.0, 1.0).acos()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn billboards_round_trip(v in proptest::collection::vec(billboard(), 0..20)) {
        let v = unique_ids(v);
        let mut buf = Vec::new();
        corpus::write_billboards(&mut buf, &v).unwrap();
        prop_assert_eq!(corpus::read_billboards(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn trajectories_round_trip(v in proptest::collection::vec(record(), 0..40)) {
        let mut buf = Vec::new();
        corpus::write_trajectories(&mut buf, &v).unwrap();
        prop_assert_eq!(corpus::read_trajectories(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn derived_horizon_covers_every_record(v in proptest::collection::vec(record(), 1..30), delta in 1i64..90) {
        let (t1, t2) = horizon_for(&v, delta).unwrap();
        prop_assert_eq!(t1.rem_euclid(delta), 0);
        prop_assert_eq!(t2.rem_euclid(delta), 0);
        prop_assert!(v.iter().all(|r| t1 <= r.t_start && r.t_end <= t2));
        prop_assert!(t1 + delta > v.iter().map(|r| r.t_start).min().unwrap());
    }
}

#[test]
fn parse_errors_carry_line_numbers() {
    let cases: [(&str, u64); 6] = [
        ("billboard_id,lat,lon,panel_size,cost\nb1,1,2,3,4\nb2,1,x,3,4\n", 3),
        ("billboard_id,lat,lon,panel_size,cost\nb1,1,2,3,4\nb1,1,2,3,4\n", 3),
        ("billboard_id,lat,lon,panel_size,cost\nb1,1,2,0,4\n", 2),
        ("billboard_id,lat,lon,panel_size,cost\nb1,91,2,3,4\n", 2),
        ("billboard_id,lat,lon,panel_size\nb1,1,2,3\n", 1),
        ("billboard_id,lat,lon,panel_size,cost\nb1,1,2,3,4\n\nb2,1,2,3\n", 4),
    ];
    for (text, line) in cases {
        let e = corpus::read_billboards(text.as_bytes()).unwrap_err();
        assert_eq!(parse_error_line(e), line, "{text:?}");
    }
    let traj: [(&str, u64); 3] = [
        ("user_id,lat,lon,t_start,t_end\nu,1,2,10,5\n", 2),
        ("user_id,lat,lon,t_start,t_end\nu,1,2,0,5\nu,1,2,1.5,5\n", 3),
        ("user_id,lat,lon,t_start,t_end\n,1,2,0,5\n", 2),
    ];
    for (text, line) in traj {
        let e = corpus::read_trajectories(text.as_bytes()).unwrap_err();
        assert_eq!(parse_error_line(e), line, "{text:?}");
    }
    assert!(corpus::read_trajectories("".as_bytes()).is_err());
    assert!(matches!(corpus::parse_billboards("/nonexistent/b.csv"), Err(Error::Io { .. })));
}

#[test]
fn slot_grid_shape() {
    let boards: Vec<Billboard> =
        (0..3).map(|i| Billboard { id: format!("b{i}"), lat: 0.0, lon: 0.0, panel_size: 1.0, cost: 0.0 }).collect();
    let slots = enumerate_slots(&boards, 0, 60, 15).unwrap();
    assert_eq!(slots.len(), 12);
    assert!(slots.iter().enumerate().all(|(i, s)| s.index == i && s.window_end - s.window_start == 15));
    assert_eq!((slots[5].billboard, slots[5].window_start), (1, 15));
    assert!(enumerate_slots(&boards, 0, 61, 15).is_err());
    assert!(enumerate_slots(&boards, 0, 60, 0).is_err());
}

/// Every `(slot, user)` pair checked against the tables directly.
#[test]
fn exposure_audit() {
    let cfg = SyntheticConfig {
        n_billboards: 8,
        n_users: 120,
        horizon: 240,
        delta: 15,
        seed: 3,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic(&cfg).unwrap();
    let slots = enumerate_slots(&data.billboards, 0, 240, 15).unwrap();
    let max_panel = data.billboards.iter().map(|b| b.panel_size).fold(0.0, f64::max);
    for lambda in [0.0, 50.0, 100.0, 250.0] {
        let model = build_exposure_model(&data.billboards, &data.trajectories, &slots, lambda).unwrap();
        let mut want: BTreeMap<(usize, String), f64> = BTreeMap::new();
        for s in &slots {
            let b = &data.billboards[s.billboard];
            for r in &data.trajectories {
                let near = distance_m(b.lat, b.lon, r.lat, r.lon) <= lambda;
                let meets = r.t_start <= s.window_end && s.window_start <= r.t_end;
                if near && meets {
                    want.insert((s.index, r.user_id.clone()), (b.panel_size / max_panel).min(MAX_PROBABILITY));
                }
            }
        }
        let mut got = BTreeMap::new();
        for s in 0..model.n_slots() {
            let list = model.exposures(s);
            assert!(list.windows(2).all(|w| w[0].user < w[1].user));
            for e in list {
                assert!(e.p > 0.0 && e.p <= MAX_PROBABILITY);
                got.insert((s, model.user_ids()[e.user as usize].clone()), e.p);
            }
        }
        assert_eq!(got, want, "lambda {lambda}");
        if lambda == 100.0 {
            assert!(!got.is_empty());
        }
    }
}

#[test]
fn closed_intervals_touch() {
    let boards = vec![Billboard { id: "b".into(), lat: 10.0, lon: 10.0, panel_size: 2.0, cost: 0.0 }];
    let rec = |t0, t1| TrajectoryRecord { user_id: format!("u{t0}"), lat: 10.0, lon: 10.0, t_start: t0, t_end: t1 };
    let recs = vec![rec(10, 10), rec(-5, 0), rec(20, 25), rec(21, 30)];
    let slots = enumerate_slots(&boards, 0, 20, 10).unwrap();
    let model = build_exposure_model(&boards, &recs, &slots, 0.0).unwrap();
    let users = |s: usize| -> Vec<String> {
        model.exposures(s).iter().map(|e| model.user_ids()[e.user as usize].clone()).collect()
    };
    assert_eq!(users(0), vec!["u10", "u-5"]);
    assert_eq!(users(1), vec!["u10", "u20"]);
    assert!(model.exposures(0).iter().all(|e| e.p == MAX_PROBABILITY));
}

#[test]
fn smaller_radius_gives_a_sub_model() {
    let cfg = SyntheticConfig {
        n_billboards: 10,
        n_users: 200,
        horizon: 300,
        delta: 10,
        seed: 11,
        ..SyntheticConfig::default()
    };
    let data = generate_synthetic(&cfg).unwrap();
    let slots = enumerate_slots(&data.billboards, 0, 300, 10).unwrap();
    let radii = [25.0, 50.0, 75.0, 100.0, 150.0];
    let models: Vec<_> =
        radii.iter().map(|&l| build_exposure_model(&data.billboards, &data.trajectories, &slots, l).unwrap()).collect();
    for w in models.windows(2) {
        let (small, big) = (&w[0], &w[1]);
        for s in 0..small.n_slots() {
            for e in small.exposures(s) {
                let id = &small.user_ids()[e.user as usize];
                let u = big.user_ids().iter().position(|x| x == id).unwrap() as u32;
                assert_eq!(big.probability(s, u), e.p);
            }
        }
        assert!(small.n_pairs() <= big.n_pairs());
    }
}

#[test]
fn files_load_into_an_instance() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_synthetic(&SyntheticConfig {
        n_billboards: 4,
        n_users: 30,
        horizon: 120,
        delta: 10,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let (b, t) = data.to_csv().unwrap();
    let (bp, tp) = (dir.path().join("b.csv"), dir.path().join("t.csv"));
    std::fs::write(&bp, b).unwrap();
    std::fs::write(&tp, t).unwrap();
    assert_eq!(corpus::parse_billboards(&bp).unwrap(), data.billboards);
    assert_eq!(corpus::parse_trajectories(&tp).unwrap(), data.trajectories);
    let cfg = slotmax_core::RunConfig { billboards: bp, trajectories: tp, delta_minutes: 10, ..Default::default() };
    let inst = slotmax_core::Instance::load(&cfg).unwrap();
    let (t1, t2) = inst.horizon;
    assert_eq!(inst.slots.len(), 4 * ((t2 - t1) / 10) as usize);
    assert!(data.trajectories.iter().all(|r| t1 <= r.t_start && r.t_end <= t2));
}
