//! Billboard and trajectory databases, slot enumeration and the sparse
//! exposure model `slot -> [(user, probability)]`.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::exec;

pub const BILLBOARD_HEADER: [&str; 5] = ["billboard_id", "lat", "lon", "panel_size", "cost"];
pub const TRAJECTORY_HEADER: [&str; 5] = ["user_id", "lat", "lon", "t_start", "t_end"];

/// Largest probability stored in a model. Keeps every `1 - p` strictly positive.
pub const MAX_PROBABILITY: f64 = 1.0 - 1e-12;

/// Mean Earth radius used by [`haversine_m`].
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Billboard {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub panel_size: f64,
    /// Rental cost per slot. Carried through but never used by the selectors.
    pub cost: f64,
}

/// A user observed at a location over the closed interval `[t_start, t_end]`
/// (integer minutes).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub user_id: String,
    pub lat: f64,
    pub lon: f64,
    pub t_start: i64,
    pub t_end: i64,
}

/// One billboard during one time window `[window_start, window_end]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub index: usize,
    /// Position of the billboard in the billboard list the slot was built from.
    pub billboard: usize,
    pub billboard_id: String,
    pub window_start: i64,
    pub window_end: i64,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(r)
}

/// Physical 1-based line of a byte offset. The csv reader skips blank lines
/// without counting them, so its own line numbers drift.
struct Lines<'a> {
    text: &'a [u8],
    breaks: Vec<usize>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a [u8]) -> Self {
        let breaks = text.iter().enumerate().filter(|(_, &c)| c == b'\n').map(|(i, _)| i).collect();
        Lines { text, breaks }
    }

    fn of(&self, pos: Option<&csv::Position>) -> u64 {
        let Some(p) = pos else { return 0 };
        // Positions may point at the blank lines skipped before the record.
        let mut at = p.byte() as usize;
        while at < self.text.len() && matches!(self.text[at], b'\n' | b'\r') {
            at += 1;
        }
        self.breaks.partition_point(|&nl| nl < at) as u64 + 1
    }
}

/// Iterates data rows after checking the header, yielding `(line, fields)`.
fn rows<R: Read>(mut r: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut text = Vec::new();
    r.read_to_end(&mut text).map_err(|e| io_err(Path::new("<input>"), e))?;
    let lines = Lines::new(&text);
    let mut rdr = reader(text.as_slice());
    let mut out = Vec::new();
    let mut seen_header = false;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse { line: lines.of(e.position()), msg: e.to_string() })?;
        let line = lines.of(rec.position());
        if !seen_header {
            if rec.iter().ne(header.iter().copied()) {
                return Err(Error::Parse { line, msg: format!("expected header `{}`", header.join(",")) });
            }
            seen_header = true;
            continue;
        }
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != header.len() {
            return Err(Error::Parse { line, msg: format!("expected {} columns, found {}", header.len(), rec.len()) });
        }
        out.push((line, rec));
    }
    if !seen_header {
        return Err(Error::Parse { line: 1, msg: format!("missing header `{}`", header.join(",")) });
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T> {
    rec[i].parse().map_err(|_| Error::Parse { line, msg: format!("column `{name}`: cannot parse `{}`", &rec[i]) })
}

fn check_coords(lat: f64, lon: f64, line: u64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::Validation { line, msg: format!("coordinates ({lat}, {lon}) out of range") });
    }
    Ok(())
}

/// Reads a billboard table from any reader.
pub fn read_billboards<R: Read>(r: R) -> Result<Vec<Billboard>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, rec) in rows(r, &BILLBOARD_HEADER)? {
        let b = Billboard {
            id: rec[0].to_string(),
            lat: field(&rec, 1, "lat", line)?,
            lon: field(&rec, 2, "lon", line)?,
            panel_size: field(&rec, 3, "panel_size", line)?,
            cost: field(&rec, 4, "cost", line)?,
        };
        if b.id.is_empty() {
            return Err(Error::Validation { line, msg: "empty billboard id".into() });
        }
        check_coords(b.lat, b.lon, line)?;
        if !(b.panel_size.is_finite() && b.panel_size > 0.0) {
            return Err(Error::Validation { line, msg: format!("panel_size must be positive, got {}", b.panel_size) });
        }
        if !(b.cost.is_finite() && b.cost >= 0.0) {
            return Err(Error::Validation { line, msg: format!("cost must be non-negative, got {}", b.cost) });
        }
        if !seen.insert(b.id.clone()) {
            return Err(Error::Validation { line, msg: format!("duplicate billboard id `{}`", b.id) });
        }
        out.push(b);
    }
    Ok(out)
}

pub fn parse_billboards(path: impl AsRef<Path>) -> Result<Vec<Billboard>> {
    let path = path.as_ref();
    read_billboards(File::open(path).map_err(|e| io_err(path, e))?)
}

/// Reads a trajectory table from any reader.
pub fn read_trajectories<R: Read>(r: R) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for (line, rec) in rows(r, &TRAJECTORY_HEADER)? {
        let t = TrajectoryRecord {
            user_id: rec[0].to_string(),
            lat: field(&rec, 1, "lat", line)?,
            lon: field(&rec, 2, "lon", line)?,
            t_start: field(&rec, 3, "t_start", line)?,
            t_end: field(&rec, 4, "t_end", line)?,
        };
        if t.user_id.is_empty() {
            return Err(Error::Validation { line, msg: "empty user id".into() });
        }
        check_coords(t.lat, t.lon, line)?;
        if t.t_start > t.t_end {
            return Err(Error::Validation { line, msg: "t_start exceeds t_end".into() });
        }
        out.push(t);
    }
    Ok(out)
}

pub fn parse_trajectories(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>> {
    let path = path.as_ref();
    read_trajectories(File::open(path).map_err(|e| io_err(path, e))?)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn write_err(e: csv::Error) -> Error {
    Error::Io { path: "<output>".into(), source: e.into() }
}

pub fn write_billboards<W: Write>(w: W, billboards: &[Billboard]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(BILLBOARD_HEADER).map_err(write_err)?;
    for b in billboards {
        wtr.write_record([
            b.id.clone(),
            b.lat.to_string(),
            b.lon.to_string(),
            b.panel_size.to_string(),
            b.cost.to_string(),
        ])
        .map_err(write_err)?;
    }
    wtr.flush().map_err(|e| io_err(Path::new("<output>"), e))
}

pub fn write_trajectories<W: Write>(w: W, records: &[TrajectoryRecord]) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(TRAJECTORY_HEADER).map_err(write_err)?;
    for t in records {
        wtr.write_record([
            t.user_id.clone(),
            t.lat.to_string(),
            t.lon.to_string(),
            t.t_start.to_string(),
            t.t_end.to_string(),
        ])
        .map_err(write_err)?;
    }
    wtr.flush().map_err(|e| io_err(Path::new("<output>"), e))
}

/// Splits `[t1, t2]` into windows of length `delta` for every billboard.
///
/// Slots are ordered by billboard, then window start; indices are dense from 0.
pub fn enumerate_slots(billboards: &[Billboard], t1: i64, t2: i64, delta: i64) -> Result<Vec<Slot>> {
    if delta <= 0 {
        return Err(Error::arg(format!("slot length must be positive, got {delta}")));
    }
    if t2 < t1 {
        return Err(Error::arg(format!("horizon end {t2} precedes start {t1}")));
    }
    if (t2 - t1) % delta != 0 {
        return Err(Error::arg(format!("horizon length {} is not a multiple of the slot length {delta}", t2 - t1)));
    }
    let windows = ((t2 - t1) / delta) as usize;
    let mut slots = Vec::with_capacity(billboards.len() * windows);
    for (bi, b) in billboards.iter().enumerate() {
        for w in 0..windows {
            let start = t1 + w as i64 * delta;
            slots.push(Slot {
                index: slots.len(),
                billboard: bi,
                billboard_id: b.id.clone(),
                window_start: start,
                window_end: start + delta,
            });
        }
    }
    Ok(slots)
}

/// Smallest `delta`-aligned horizon containing every record.
///
/// Returns `(0, delta)` for an empty trajectory list.
pub fn horizon_for(records: &[TrajectoryRecord], delta: i64) -> Result<(i64, i64)> {
    if delta <= 0 {
        return Err(Error::arg(format!("slot length must be positive, got {delta}")));
    }
    let lo = records.iter().map(|r| r.t_start).min().unwrap_or(0);
    let hi = records.iter().map(|r| r.t_end).max().unwrap_or(delta);
    let t1 = lo.div_euclid(delta) * delta;
    let t2 = (hi.div_euclid(delta) + i64::from(hi.rem_euclid(delta) != 0)) * delta;
    Ok((t1, t2.max(t1 + delta)))
}

/// Great-circle distance in meters between two points given in degrees.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

fn intervals_meet(a0: i64, a1: i64, b0: i64, b1: i64) -> bool {
    a0 <= b1 && b0 <= a1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Exposure {
    pub user: u32,
    pub p: f64,
}

/// Geometry behind a model built from raw tables.
#[derive(Clone, Debug)]
pub struct SlotLayout {
    pub billboards: Vec<Billboard>,
    pub slots: Vec<Slot>,
    pub lambda_m: f64,
}

impl SlotLayout {
    /// Whether `slot` covers `record`: within `lambda_m` of the billboard and
    /// overlapping the window (closed intervals).
    pub fn covers(&self, slot: usize, record: &TrajectoryRecord) -> bool {
        let s = &self.slots[slot];
        let b = &self.billboards[s.billboard];
        intervals_meet(s.window_start, s.window_end, record.t_start, record.t_end)
            && haversine_m(b.lat, b.lon, record.lat, record.lon) <= self.lambda_m
    }
}

/// Sparse slot-to-user exposure probabilities.
///
/// Each slot's list is strictly increasing in user index and holds only
/// positive probabilities, all at most [`MAX_PROBABILITY`]. Immutable once
/// built.
#[derive(Clone, Debug)]
pub struct ExposureModel {
    n_users: usize,
    lists: Vec<Vec<Exposure>>,
    user_ids: Vec<String>,
    layout: Option<SlotLayout>,
}

impl ExposureModel {
    /// Builds a model from explicit per-slot `(user, probability)` lists.
    ///
    /// Zero probabilities are dropped and the rest are clamped to
    /// [`MAX_PROBABILITY`]. Lists need not be sorted but must not repeat a user.
    pub fn from_lists(n_users: usize, lists: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let mut out = Vec::with_capacity(lists.len());
        for (s, list) in lists.into_iter().enumerate() {
            let mut v: Vec<Exposure> = Vec::with_capacity(list.len());
            for (user, p) in list {
                if user as usize >= n_users {
                    return Err(Error::arg(format!("slot {s}: user {user} out of range")));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::arg(format!("slot {s}: probability {p} outside [0, 1]")));
                }
                if p > 0.0 {
                    v.push(Exposure { user, p: p.min(MAX_PROBABILITY) });
                }
            }
            v.sort_by_key(|e| e.user);
            if v.windows(2).any(|w| w[0].user == w[1].user) {
                return Err(Error::arg(format!("slot {s}: repeated user")));
            }
            out.push(v);
        }
        Ok(Self { n_users, lists: out, user_ids: (0..n_users).map(|u| format!("u{u}")).collect(), layout: None })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_slots(&self) -> usize {
        self.lists.len()
    }

    pub fn exposures(&self, slot: usize) -> &[Exposure] {
        &self.lists[slot]
    }

    /// Probability that `user` is exposed to `slot` (0 when absent).
    pub fn probability(&self, slot: usize, user: u32) -> f64 {
        let list = &self.lists[slot];
        list.binary_search_by_key(&user, |e| e.user).map(|i| list[i].p).unwrap_or(0.0)
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn layout(&self) -> Option<&SlotLayout> {
        self.layout.as_ref()
    }

    /// Number of exposure pairs across all slots.
    pub fn n_pairs(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub(crate) fn check_slot(&self, slot: usize) -> Result<()> {
        if slot >= self.lists.len() {
            return Err(Error::arg(format!("slot index {slot} out of range (model has {})", self.lists.len())));
        }
        Ok(())
    }

    /// Sorts, de-duplicates and bounds-checks a slot set.
    pub fn normalize(&self, slots: &[usize]) -> Result<Vec<usize>> {
        let mut v = slots.to_vec();
        v.sort_unstable();
        v.dedup();
        if let Some(&last) = v.last() {
            self.check_slot(last)?;
        }
        Ok(v)
    }

    /// All slot indices, ascending.
    pub fn all_slots(&self) -> Vec<usize> {
        (0..self.n_slots()).collect()
    }
}

/// Builds the exposure model for `slots` under radius `lambda_m`.
///
/// A user is exposed to a slot when any of their records lies within
/// `lambda_m` meters of the billboard and overlaps the slot window; the
/// probability is the billboard's panel size over the largest panel size,
/// clamped to [`MAX_PROBABILITY`]. Repeated qualifying records count once.
pub fn build_exposure_model(
    billboards: &[Billboard],
    trajectories: &[TrajectoryRecord],
    slots: &[Slot],
    lambda_m: f64,
) -> Result<ExposureModel> {
    if !(lambda_m.is_finite() && lambda_m >= 0.0) {
        return Err(Error::arg(format!("radius must be non-negative, got {lambda_m}")));
    }
    let max_panel = billboards.iter().map(|b| b.panel_size).fold(0.0, f64::max);
    if !billboards.is_empty() && max_panel <= 0.0 {
        return Err(Error::arg("largest panel size must be positive"));
    }
    for (i, s) in slots.iter().enumerate() {
        if s.index != i || s.billboard >= billboards.len() || s.window_end < s.window_start {
            return Err(Error::arg(format!("slot {i} is inconsistent with the billboard list")));
        }
    }

    let mut user_index: HashMap<&str, u32> = HashMap::new();
    let mut user_ids = Vec::new();
    let record_user: Vec<u32> = trajectories
        .iter()
        .map(|t| {
            *user_index.entry(t.user_id.as_str()).or_insert_with(|| {
                user_ids.push(t.user_id.clone());
                (user_ids.len() - 1) as u32
            })
        })
        .collect();

    // Per billboard, its slots sorted by window start.
    let mut by_board: Vec<Vec<usize>> = vec![Vec::new(); billboards.len()];
    for s in slots {
        by_board[s.billboard].push(s.index);
    }
    for v in &mut by_board {
        v.sort_by_key(|&i| (slots[i].window_start, i));
    }

    // Binary search on window ends is valid only when they are sorted too.
    let ends_sorted: Vec<bool> =
        by_board.iter().map(|v| v.windows(2).all(|w| slots[w[0]].window_end <= slots[w[1]].window_end)).collect();

    let lat_slack = lambda_m / (EARTH_RADIUS_M * std::f64::consts::PI / 180.0);
    let hits: Vec<Vec<(usize, u32)>> = exec::map_range(billboards.len(), |bi| {
        let b = &billboards[bi];
        let board_slots = &by_board[bi];
        let mut out = Vec::new();
        if board_slots.is_empty() {
            return out;
        }
        for (ri, t) in trajectories.iter().enumerate() {
            if (t.lat - b.lat).abs() > lat_slack * 1.000_001 {
                continue;
            }
            if haversine_m(b.lat, b.lon, t.lat, t.lon) > lambda_m {
                continue;
            }
            let first =
                if ends_sorted[bi] { board_slots.partition_point(|&s| slots[s].window_end < t.t_start) } else { 0 };
            for &s in &board_slots[first..] {
                let w = &slots[s];
                if w.window_start > t.t_end {
                    break;
                }
                if intervals_meet(w.window_start, w.window_end, t.t_start, t.t_end) {
                    out.push((s, record_user[ri]));
                }
            }
        }
        out
    });

    let mut lists: Vec<Vec<Exposure>> = vec![Vec::new(); slots.len()];
    for (s, u) in hits.into_iter().flatten() {
        let p = (billboards[slots[s].billboard].panel_size / max_panel).min(MAX_PROBABILITY);
        lists[s].push(Exposure { user: u, p });
    }
    for list in &mut lists {
        list.sort_by_key(|e| e.user);
        list.dedup_by_key(|e| e.user);
    }

    Ok(ExposureModel {
        n_users: user_ids.len(),
        lists,
        user_ids,
        layout: Some(SlotLayout { billboards: billboards.to_vec(), slots: slots.to_vec(), lambda_m }),
    })
}
