//! Multi-modal UE mobility traces and kinematic descriptors.

use crate::geom::{wrap_angle, Arena, Point};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

/// Positions generated before the first exported sample so that kinematics at
/// tick 0 already have a full difference stencil.
pub const WARMUP_TICKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MobilityMode {
    Ped,
    Cyclist,
    Car,
    Bus,
    Train,
    Drone,
    Uav,
}

impl MobilityMode {
    pub const COUNT: usize = 7;
    pub const ALL: [MobilityMode; 7] = [
        MobilityMode::Ped,
        MobilityMode::Cyclist,
        MobilityMode::Car,
        MobilityMode::Bus,
        MobilityMode::Train,
        MobilityMode::Drone,
        MobilityMode::Uav,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            MobilityMode::Ped => "PED",
            MobilityMode::Cyclist => "CYCLIST",
            MobilityMode::Car => "CAR",
            MobilityMode::Bus => "BUS",
            MobilityMode::Train => "TRAIN",
            MobilityMode::Drone => "DRONE",
            MobilityMode::Uav => "UAV",
        }
    }

    pub fn one_hot(self) -> [f64; 7] {
        let mut e = [0.0; 7];
        e[self.index()] = 1.0;
        e
    }

    /// Inverse of [`one_hot`](Self::one_hot); `None` unless exactly one entry is 1.
    pub fn from_one_hot(e: &[f64]) -> Option<Self> {
        if e.len() != Self::COUNT {
            return None;
        }
        let ones: Vec<usize> = e.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i).collect();
        let zeros = e.iter().filter(|&&v| v == 0.0).count();
        match (ones.as_slice(), zeros) {
            ([i], 6) => Self::from_index(*i),
            _ => None,
        }
    }
}

impl fmt::Display for MobilityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MobilityMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown mobility mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Kinematics {
    pub speed: f64,
    pub accel: f64,
    pub jerk: f64,
    pub bearing_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub tick: usize,
    pub position: Point,
    pub kinematics: Kinematics,
    pub mode: MobilityMode,
}

/// One UE's trace.
#[derive(Debug, Clone, PartialEq)]
pub struct UeTrace {
    pub ue_id: usize,
    pub samples: Vec<TraceSample>,
}

impl UeTrace {
    pub fn mode(&self) -> Option<MobilityMode> {
        self.samples.first().map(|s| s.mode)
    }

    pub fn positions(&self) -> Vec<Point> {
        self.samples.iter().map(|s| s.position).collect()
    }
}

/// Generator parameters for one mobility mode.
///
/// Speeds follow a mean-reverting process around a per-trace cruise speed
/// drawn from `[speed_min, speed_max]`; headings integrate an i.i.d. Gaussian
/// bearing rate; vehicles with `stop_prob > 0` occasionally brake to a halt
/// and dwell for `dwell_ticks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProfile {
    pub mode: MobilityMode,
    pub speed_min: f64,
    pub speed_max: f64,
    pub accel_std: f64,
    pub bearing_rate_std: f64,
    pub stop_prob: f64,
    pub dwell_ticks: usize,
    /// Rate (1/s) at which speed is pulled back to the cruise speed.
    pub speed_reversion: f64,
}

impl ModeProfile {
    pub fn default_for(mode: MobilityMode) -> Self {
        let (speed_min, speed_max, accel_std, bearing_rate_std, stop_prob, dwell_ticks) = match mode {
            MobilityMode::Ped => (0.5, 2.0, 0.3, 0.6, 0.0, 0),
            MobilityMode::Cyclist => (3.0, 8.0, 0.6, 0.2, 0.0, 0),
            MobilityMode::Car => (8.0, 25.0, 2.0, 0.08, 0.0, 0),
            MobilityMode::Bus => (5.0, 15.0, 0.8, 0.03, 0.01, 20),
            MobilityMode::Train => (20.0, 40.0, 0.1, 0.0, 0.0, 0),
            MobilityMode::Drone => (5.0, 15.0, 1.0, 1.0, 0.0, 0),
            MobilityMode::Uav => (15.0, 30.0, 0.3, 0.25, 0.0, 0),
        };
        Self {
            mode,
            speed_min,
            speed_max,
            accel_std,
            bearing_rate_std,
            stop_prob,
            dwell_ticks,
            speed_reversion: 0.5,
        }
    }

    pub fn defaults() -> Vec<ModeProfile> {
        MobilityMode::ALL.iter().map(|&m| Self::default_for(m)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.speed_min >= 0.0
            && self.speed_max >= self.speed_min
            && self.accel_std >= 0.0
            && self.bearing_rate_std >= 0.0
            && (0.0..=1.0).contains(&self.stop_prob)
            && self.speed_reversion >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid profile for {}", self.mode)))
        }
    }
}

/// Looks up the profile for `mode`, falling back to the built-in default.
pub fn profile_for(profiles: &[ModeProfile], mode: MobilityMode) -> ModeProfile {
    profiles
        .iter()
        .find(|p| p.mode == mode)
        .cloned()
        .unwrap_or_else(|| ModeProfile::default_for(mode))
}

fn reflect(pos: &mut Point, heading: &mut f64, arena: &Arena) {
    use std::f64::consts::PI;
    // A single reflection suffices while per-tick displacement < arena size.
    if pos.x < arena.min.x {
        pos.x = 2.0 * arena.min.x - pos.x;
        *heading = PI - *heading;
    } else if pos.x > arena.max.x {
        pos.x = 2.0 * arena.max.x - pos.x;
        *heading = PI - *heading;
    }
    if pos.y < arena.min.y {
        pos.y = 2.0 * arena.min.y - pos.y;
        *heading = -*heading;
    } else if pos.y > arena.max.y {
        pos.y = 2.0 * arena.max.y - pos.y;
        *heading = -*heading;
    }
    *heading = wrap_angle(*heading);
}

/// Generates a correlated random-walk trace of `n_ticks` samples.
///
/// Kinematics are recomputed from the emitted positions.
pub fn generate_trace<R: Rng + ?Sized>(
    rng: &mut R,
    profile: &ModeProfile,
    n_ticks: usize,
    tick_s: f64,
    arena: &Arena,
) -> Vec<TraceSample> {
    assert!(n_ticks >= 2, "trace needs at least two ticks");
    let start = Point::new(
        rng.random_range(arena.min.x..=arena.max.x),
        rng.random_range(arena.min.y..=arena.max.y),
    );
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    generate_trace_from(rng, profile, n_ticks, tick_s, arena, start, heading)
}

/// As [`generate_trace`] with an explicit start position and heading.
pub fn generate_trace_from<R: Rng + ?Sized>(
    rng: &mut R,
    profile: &ModeProfile,
    n_ticks: usize,
    tick_s: f64,
    arena: &Arena,
    start: Point,
    start_heading: f64,
) -> Vec<TraceSample> {
    let cruise_draw = |rng: &mut R| {
        if profile.speed_max > profile.speed_min {
            rng.random_range(profile.speed_min..=profile.speed_max)
        } else {
            profile.speed_min
        }
    };
    let mut cruise = cruise_draw(rng);
    let mut speed = cruise;
    let mut heading = start_heading;
    let mut pos = start;
    let mut dwell = 0usize;

    let total = n_ticks + WARMUP_TICKS;
    let mut positions = Vec::with_capacity(total);
    positions.push(pos);
    for _ in 1..total {
        if dwell == 0 && profile.stop_prob > 0.0 && rng.random::<f64>() < profile.stop_prob {
            dwell = profile.dwell_ticks;
        }
        let target = if dwell > 0 {
            dwell -= 1;
            if dwell == 0 {
                cruise = cruise_draw(rng);
            }
            0.0
        } else {
            cruise
        };
        let z_a: f64 = rng.sample(StandardNormal);
        let z_b: f64 = rng.sample(StandardNormal);
        let reverting = if target == 0.0 {
            // Brake hard enough to actually stop within the dwell.
            (4.0 * profile.speed_reversion).max(1.0) * (target - speed)
        } else {
            profile.speed_reversion * (target - speed)
        };
        let accel = reverting + profile.accel_std * z_a;
        speed = (speed + accel * tick_s).clamp(0.0, profile.speed_max);
        heading = wrap_angle(heading + profile.bearing_rate_std * z_b * tick_s);
        pos = pos + Point::new(heading.cos(), heading.sin()) * (speed * tick_s);
        reflect(&mut pos, &mut heading, arena);
        positions.push(pos);
    }

    let kin = derive_kinematics(&positions, tick_s).expect("total >= 4 positions");
    positions
        .into_iter()
        .zip(kin)
        .skip(WARMUP_TICKS)
        .enumerate()
        .map(|(tick, (position, kinematics))| TraceSample {
            tick,
            position,
            kinematics,
            mode: profile.mode,
        })
        .collect()
}

/// Finite-difference kinematics from observed positions.
///
/// Speed is available from index 1, acceleration and bearing rate from 2,
/// jerk from 3; earlier entries are zero. When a UE does not move its
/// heading is carried forward.
pub fn derive_kinematics(positions: &[Point], tick_s: f64) -> Result<Vec<Kinematics>> {
    if positions.len() < 4 {
        return Err(Error::InsufficientHistory {
            needed: 4,
            got: positions.len(),
        });
    }
    let n = positions.len();
    let mut out = vec![Kinematics::default(); n];
    let mut heading = vec![0.0; n];
    for i in 1..n {
        let d = positions[i] - positions[i - 1];
        out[i].speed = d.norm() / tick_s;
        heading[i] = if d.norm() > 1e-9 {
            d.heading()
        } else if i > 1 {
            heading[i - 1]
        } else {
            0.0
        };
    }
    // Heading of the first displacement is undefined when it is zero; use the
    // first defined one so the bearing rate does not spike.
    if positions[1].distance(positions[0]) <= 1e-9 {
        if let Some(k) = (2..n).find(|&k| positions[k].distance(positions[k - 1]) > 1e-9) {
            for h in heading.iter_mut().take(k).skip(1) {
                *h = (positions[k] - positions[k - 1]).heading();
            }
        }
    }
    for i in 2..n {
        out[i].accel = (out[i].speed - out[i - 1].speed) / tick_s;
        out[i].bearing_rate = wrap_angle(heading[i] - heading[i - 1]) / tick_s;
    }
    for i in 3..n {
        out[i].jerk = (out[i].accel - out[i - 1].accel) / tick_s;
    }
    Ok(out)
}

/// Largest-remainder apportionment of `n_ues` over modes in mode order.
/// `mix[i]` is the fraction for `MobilityMode::ALL[i]`. UEs are assigned in
/// contiguous blocks.
pub fn mode_population(n_ues: usize, mix: &[f64]) -> Result<Vec<MobilityMode>> {
    if mix.len() != MobilityMode::COUNT {
        return Err(Error::LengthMismatch {
            expected: MobilityMode::COUNT,
            got: mix.len(),
        });
    }
    if let Some(f) = mix.iter().find(|f| !(**f >= 0.0)) {
        return Err(Error::InvalidInput(format!("negative or NaN mode fraction {f}")));
    }
    let total: f64 = mix.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("mode fractions sum to {total}, expected 1")));
    }
    let quotas: Vec<f64> = mix.iter().map(|f| f * n_ues as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..mix.len()).collect();
    // Stable sort keeps lower mode index first among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().take(n_ues.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    Ok(counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(MobilityMode::ALL[i], c))
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    tick: usize,
    ue_id: usize,
    x: f64,
    y: f64,
    v: f64,
    a: f64,
    j: f64,
    bearing_rate: f64,
    mode_label: MobilityMode,
}

/// Writes traces as CSV with a mandatory header row.
pub fn write_traces_csv<W: Write>(writer: W, traces: &[UeTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in traces {
        for s in &t.samples {
            w.serialize(TraceRow {
                tick: s.tick,
                ue_id: t.ue_id,
                x: s.position.x,
                y: s.position.y,
                v: s.kinematics.speed,
                a: s.kinematics.accel,
                j: s.kinematics.jerk,
                bearing_rate: s.kinematics.bearing_rate,
                mode_label: s.mode,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads traces written by [`write_traces_csv`], grouped by UE in id order.
pub fn read_traces_csv<R: Read>(reader: R) -> Result<Vec<UeTrace>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut by_ue: std::collections::BTreeMap<usize, Vec<TraceSample>> = Default::default();
    for row in r.deserialize::<TraceRow>() {
        let row = row?;
        by_ue.entry(row.ue_id).or_default().push(TraceSample {
            tick: row.tick,
            position: Point::new(row.x, row.y),
            kinematics: Kinematics {
                speed: row.v,
                accel: row.a,
                jerk: row.j,
                bearing_rate: row.bearing_rate,
            },
            mode: row.mode_label,
        });
    }
    Ok(by_ue
        .into_iter()
        .map(|(ue_id, mut samples)| {
            samples.sort_by_key(|s| s.tick);
            UeTrace { ue_id, samples }
        })
        .collect())
}
