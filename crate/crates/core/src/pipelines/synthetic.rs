//! Seeded synthetic billboard and trajectory tables.
//!
//! Billboards are placed uniformly in a lat/lon box. Each user visits a
//! sequence of random waypoints; a share of the waypoints is drawn around a
//! random billboard (a "hotspot") so that slots actually reach users at
//! 100 m radii.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{self, Billboard, TrajectoryRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub n_billboards: usize,
    pub n_users: usize,
    pub records_per_user: usize,
    /// Records fall in `[0, horizon]` minutes.
    pub horizon: i64,
    /// Slot length the data is meant for; `horizon` must be a multiple.
    pub delta: i64,
    pub geo_box: GeoBox,
    pub panel_size_range: (f64, f64),
    pub seed: u64,
    /// Fraction of waypoints placed near a billboard.
    pub hotspot_share: f64,
    pub hotspot_radius_m: f64,
    /// Inclusive range of minutes spent at a waypoint.
    pub dwell_range: (i64, i64),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_billboards: 20,
            n_users: 500,
            records_per_user: 5,
            horizon: 1440,
            delta: 5,
            geo_box: GeoBox { lat_min: 40.70, lat_max: 40.73, lon_min: -74.02, lon_max: -73.98 },
            panel_size_range: (100.0, 600.0),
            seed: 0,
            hotspot_share: 0.7,
            hotspot_radius_m: 150.0,
            dwell_range: (5, 60),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.geo_box;
        if self.n_billboards == 0 || self.records_per_user == 0 {
            return Err(Error::arg("billboard and per-user record counts must be positive"));
        }
        if self.delta <= 0 || self.horizon <= 0 || self.horizon % self.delta != 0 {
            return Err(Error::arg("horizon must be a positive multiple of delta"));
        }
        if !(g.lat_min <= g.lat_max
            && g.lon_min <= g.lon_max
            && g.lat_min >= -90.0
            && g.lat_max <= 90.0
            && g.lon_min >= -180.0
            && g.lon_max <= 180.0)
        {
            return Err(Error::arg("invalid geo box"));
        }
        let (lo, hi) = self.panel_size_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::arg("panel sizes must satisfy 0 < min <= max"));
        }
        if !(0.0..=1.0).contains(&self.hotspot_share) || self.hotspot_radius_m < 0.0 {
            return Err(Error::arg("invalid hotspot settings"));
        }
        if !(0 <= self.dwell_range.0 && self.dwell_range.0 <= self.dwell_range.1) {
            return Err(Error::arg("invalid dwell range"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub billboards: Vec<Billboard>,
    pub trajectories: Vec<TrajectoryRecord>,
}

impl SyntheticData {
    /// The two tables in their CSV formats.
    pub fn to_csv(&self) -> Result<(String, String)> {
        let mut b = Vec::new();
        corpus::write_billboards(&mut b, &self.billboards)?;
        let mut t = Vec::new();
        corpus::write_trajectories(&mut t, &self.trajectories)?;
        Ok((String::from_utf8(b).expect("utf-8"), String::from_utf8(t).expect("utf-8")))
    }
}

fn micro(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Generates both tables; identical configs give identical data.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let g = cfg.geo_box;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let billboards: Vec<Billboard> = (0..cfg.n_billboards)
        .map(|i| Billboard {
            id: format!("b{i}"),
            lat: micro(uniform(&mut rng, g.lat_min, g.lat_max)),
            lon: micro(uniform(&mut rng, g.lon_min, g.lon_max)),
            panel_size: uniform(&mut rng, cfg.panel_size_range.0, cfg.panel_size_range.1).round().max(1.0),
            cost: rng.gen_range(10..=50) as f64,
        })
        .collect();

    let meters_per_deg = corpus::EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let mut trajectories = Vec::with_capacity(cfg.n_users * cfg.records_per_user);
    for u in 0..cfg.n_users {
        let mut starts: Vec<i64> = (0..cfg.records_per_user).map(|_| rng.gen_range(0..cfg.horizon)).collect();
        starts.sort_unstable();
        for t_start in starts {
            let (lat, lon) = if rng.gen_bool(cfg.hotspot_share) {
                let b = &billboards[rng.gen_range(0..billboards.len())];
                let r = cfg.hotspot_radius_m * rng.gen::<f64>().sqrt();
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let dlat = r * angle.sin() / meters_per_deg;
                let dlon = r * angle.cos() / (meters_per_deg * b.lat.to_radians().cos().max(1e-6));
                ((b.lat + dlat).clamp(-90.0, 90.0), (b.lon + dlon).clamp(-180.0, 180.0))
            } else {
                (uniform(&mut rng, g.lat_min, g.lat_max), uniform(&mut rng, g.lon_min, g.lon_max))
            };
            let dwell = rng.gen_range(cfg.dwell_range.0..=cfg.dwell_range.1);
            trajectories.push(TrajectoryRecord {
                user_id: format!("u{u}"),
                lat: micro(lat),
                lon: micro(lon),
                t_start,
                t_end: (t_start + dwell).min(cfg.horizon),
            });
        }
    }
    Ok(SyntheticData { billboards, trajectories })
}
