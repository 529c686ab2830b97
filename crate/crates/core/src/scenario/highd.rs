//! Ingestion of highD-style track CSVs.
//!
//! Tracks file: one row per vehicle and frame, comma separated, with at least
//! the columns `frame,id,x,y,width,height,xVelocity,yVelocity,xAcceleration,
//! yAcceleration,laneId`. As in highD, `x,y` is the bounding box corner with
//! the smallest coordinates, `width` is the extent along x (vehicle length)
//! and `height` the extent along y (vehicle width).
//!
//! Meta file: `key,value` lines (`frameRate`, `yAxis`, `egoDirection`)
//! followed by a lane table introduced by the header
//! `laneId,center,width,xMin,xMax,direction`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{
    Direction, EgoConfig, Lane, LaneNetwork, Scenario, ScenarioError, Track, Vec2, VehicleId,
    VehicleState, YAxis,
};

const REQUIRED: [&str; 11] = [
    "frame",
    "id",
    "x",
    "y",
    "width",
    "height",
    "xVelocity",
    "yVelocity",
    "xAcceleration",
    "yAcceleration",
    "laneId",
];

const LANE_HEADER: [&str; 6] = ["laneId", "center", "width", "xMin", "xMax", "direction"];

/// Ego settings applied to ingested recordings.
#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    /// Overrides `egoDirection` from the meta file.
    pub direction: Option<Direction>,
    pub start_window: (f64, f64),
    pub start_speed: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { direction: None, start_window: (150.0, 350.0), start_speed: 15.0 }
    }
}

struct Meta {
    frame_rate: f64,
    y_axis: YAxis,
    direction: Direction,
    lanes: Vec<Lane>,
}

fn num(field: &str, what: &str) -> Result<f64, ScenarioError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| ScenarioError::Format(format!("cannot parse {what} value `{field}`")))
}

fn parse_meta(meta: impl Read) -> Result<Meta, ScenarioError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(meta);
    let mut frame_rate = 25.0;
    let mut y_axis = YAxis::Down;
    let mut direction = Direction::Forward;
    let mut lanes = Vec::new();
    let mut in_lanes = false;
    for record in reader.records() {
        let record = record.map_err(|e| ScenarioError::Format(e.to_string()))?;
        let first = record.get(0).unwrap_or("").trim();
        if first.is_empty() {
            continue;
        }
        if !in_lanes {
            if first == LANE_HEADER[0] {
                for (i, name) in LANE_HEADER.iter().enumerate() {
                    if record.get(i).map(str::trim) != Some(*name) {
                        return Err(ScenarioError::MissingColumn((*name).to_string()));
                    }
                }
                in_lanes = true;
                continue;
            }
            let value = record.get(1).unwrap_or("").trim();
            match first {
                "frameRate" => frame_rate = num(value, "frameRate")?,
                "yAxis" => {
                    y_axis = YAxis::parse(value)
                        .ok_or_else(|| ScenarioError::Format(format!("bad yAxis `{value}`")))?
                }
                "egoDirection" => {
                    direction = Direction::parse(value).ok_or_else(|| {
                        ScenarioError::Format(format!("bad egoDirection `{value}`"))
                    })?
                }
                _ => {}
            }
            continue;
        }
        if record.len() < LANE_HEADER.len() {
            return Err(ScenarioError::Format(format!("short lane row: {record:?}")));
        }
        let id = first
            .parse::<i32>()
            .map_err(|_| ScenarioError::Format(format!("bad lane id `{first}`")))?;
        let dir_text = record.get(5).unwrap_or("");
        lanes.push(Lane {
            id,
            center: num(&record[1], "center")?,
            width: num(&record[2], "width")?,
            x_min: num(&record[3], "xMin")?,
            x_max: num(&record[4], "xMax")?,
            direction: Direction::parse(dir_text)
                .ok_or_else(|| ScenarioError::Format(format!("bad lane direction `{dir_text}`")))?,
        });
    }
    if !in_lanes {
        return Err(ScenarioError::MissingColumn(LANE_HEADER[0].to_string()));
    }
    if !(frame_rate > 0.0) {
        return Err(ScenarioError::Format("frameRate must be positive".into()));
    }
    Ok(Meta { frame_rate, y_axis, direction, lanes })
}

/// Parses a meta file and a tracks file into a scenario on the native frame grid.
pub fn parse_tracks_csv(
    meta: impl Read,
    tracks: impl Read,
    options: &IngestOptions,
) -> Result<Scenario, ScenarioError> {
    let meta = parse_meta(meta)?;
    let lanes = LaneNetwork { lanes: meta.lanes, y_axis: meta.y_axis };
    lanes.validate()?;

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(tracks);
    let headers = reader.headers().map_err(|e| ScenarioError::Format(e.to_string()))?.clone();
    let mut cols = [0usize; REQUIRED.len()];
    for (slot, name) in cols.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ScenarioError::MissingColumn(name.to_string()))?;
    }
    let [c_frame, c_id, c_x, c_y, c_w, c_h, c_vx, c_vy, c_ax, c_ay, c_lane] = cols;

    let mut rows: BTreeMap<u32, Vec<(i64, VehicleState)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| ScenarioError::Format(e.to_string()))?;
        let field = |c: usize, name: &str| num(record.get(c).unwrap_or(""), name);
        let frame = field(c_frame, "frame")? as i64;
        let id = field(c_id, "id")? as u32;
        if VehicleId(id) == VehicleId::EGO {
            return Err(ScenarioError::Data { id, frame, reason: "reserved vehicle id".into() });
        }
        let lane_id = field(c_lane, "laneId")? as i32;
        if lanes.lane(lane_id).is_none() {
            return Err(ScenarioError::Data {
                id,
                frame,
                reason: format!("laneId {lane_id} is not listed in the meta file"),
            });
        }
        let (x, y, w, h) = (field(c_x, "x")?, field(c_y, "y")?, field(c_w, "width")?, field(c_h, "height")?);
        if !(w > 0.0 && h > 0.0) {
            return Err(ScenarioError::Data { id, frame, reason: "non-positive dimensions".into() });
        }
        let velocity = Vec2::new(field(c_vx, "xVelocity")?, field(c_vy, "yVelocity")?);
        let heading = if velocity.norm() > 1e-6 { velocity.y.atan2(velocity.x) } else {
            let dir = lanes.lane(lane_id).map(|l| l.direction).unwrap_or(Direction::Forward);
            if dir == Direction::Forward { 0.0 } else { std::f64::consts::PI }
        };
        let state = VehicleState {
            id: VehicleId(id),
            position: Vec2::new(x + 0.5 * w, y + 0.5 * h),
            velocity,
            acceleration: Vec2::new(field(c_ax, "xAcceleration")?, field(c_ay, "yAcceleration")?),
            heading,
            length: w,
            width: h,
            lane_id,
        };
        rows.entry(id).or_default().push((frame, state));
    }

    let first_frame = rows.values().flat_map(|r| r.iter().map(|(f, _)| *f)).min().unwrap_or(0);
    let mut tracks = BTreeMap::new();
    let mut num_steps = 0;
    for (id, samples) in rows {
        for pair in samples.windows(2) {
            let (prev, next) = (pair[0].0, pair[1].0);
            if next <= prev {
                return Err(ScenarioError::Data { id, frame: next, reason: "non-monotonic frames".into() });
            }
            if next != prev + 1 {
                return Err(ScenarioError::Data { id, frame: next, reason: "gap in frames".into() });
            }
        }
        let start_step = (samples[0].0 - first_frame) as usize;
        let states: Vec<_> = samples.into_iter().map(|(_, s)| s).collect();
        num_steps = num_steps.max(start_step + states.len());
        tracks.insert(VehicleId(id), Track { id: VehicleId(id), start_step, states });
    }

    let direction = options.direction.unwrap_or(meta.direction);
    let road = super::Road::new(&lanes, direction)?;
    let scenario = Scenario {
        timestep: 1.0 / meta.frame_rate,
        num_steps,
        tracks,
        lanes,
        signs: Vec::new(),
        ego: EgoConfig {
            direction,
            start_window: options.start_window,
            start_speed: options.start_speed,
            goal_s: road.s_max,
        },
    };
    Ok(scenario)
}

/// Writes a scenario back out as meta and tracks CSVs; `first_frame` is the
/// frame number of step 0.
pub fn write_tracks_csv(
    scenario: &Scenario,
    first_frame: i64,
    mut meta: impl Write,
    tracks: impl Write,
) -> std::io::Result<()> {
    writeln!(meta, "frameRate,{}", 1.0 / scenario.timestep)?;
    writeln!(meta, "yAxis,{}", scenario.lanes.y_axis.as_str())?;
    writeln!(meta, "egoDirection,{}", scenario.ego.direction.as_str())?;
    writeln!(meta, "{}", LANE_HEADER.join(","))?;
    for l in &scenario.lanes.lanes {
        writeln!(
            meta,
            "{},{},{},{},{},{}",
            l.id,
            l.center,
            l.width,
            l.x_min,
            l.x_max,
            l.direction.as_str()
        )?;
    }
    let mut writer = csv::Writer::from_writer(tracks);
    writer.write_record(REQUIRED)?;
    let mut rows = Vec::new();
    for track in scenario.tracks.values() {
        for (k, st) in track.states.iter().enumerate() {
            rows.push((track.start_step + k, st));
        }
    }
    rows.sort_by_key(|(step, st)| (*step, st.id));
    for (step, st) in rows {
        writer.write_record([
            (first_frame + step as i64).to_string(),
            st.id.0.to_string(),
            (st.position.x - 0.5 * st.length).to_string(),
            (st.position.y - 0.5 * st.width).to_string(),
            st.length.to_string(),
            st.width.to_string(),
            st.velocity.x.to_string(),
            st.velocity.y.to_string(),
            st.acceleration.x.to_string(),
            st.acceleration.y.to_string(),
            st.lane_id.to_string(),
        ])?;
    }
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    const META: &str = "frameRate,25\nyAxis,down\negoDirection,forward\n\
laneId,center,width,xMin,xMax,direction\n\
2,14.0,3.5,0,420,forward\n3,17.5,3.5,0,420,forward\n";

    fn tracks(rows: &[&str]) -> String {
        let mut text = REQUIRED.join(",");
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        text
    }

    #[test]
    fn two_vehicles_ten_frames() {
        let mut rows = Vec::new();
        for id in 1..=2 {
            for f in 1..=10 {
                rows.push(format!("{f},{id},{},15.0,4.5,1.8,30.0,0.0,0.0,0.0,{}", f as f64 * 1.2, id + 1));
            }
        }
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        let sc = parse_tracks_csv(META.as_bytes(), tracks(&refs).as_bytes(), &IngestOptions::default())
            .unwrap();
        assert_eq!(sc.tracks.len(), 2);
        assert!((sc.timestep - 0.04).abs() < 1e-15);
        assert_eq!(sc.num_steps, 10);
        let st = sc.vehicle_at(VehicleId(1), 0).unwrap();
        assert!((st.position.x - (1.2 + 2.25)).abs() < 1e-12);
        assert!((st.position.y - 15.9).abs() < 1e-12);
        assert_eq!(st.length, 4.5);
    }

    #[test]
    fn empty_tracks_file() {
        let sc = parse_tracks_csv(META.as_bytes(), tracks(&[]).as_bytes(), &IngestOptions::default())
            .unwrap();
        assert!(sc.tracks.is_empty());
        assert_eq!(sc.num_steps, 0);
    }

    #[test]
    fn missing_column_named() {
        let text = "frame,id,x,y,width,height,xVelocity,yVelocity,xAcceleration,yAcceleration\n";
        let err = parse_tracks_csv(META.as_bytes(), text.as_bytes(), &IngestOptions::default())
            .unwrap_err();
        assert!(matches!(err, ScenarioError::MissingColumn(ref c) if c == "laneId"), "{err}");
    }

    #[test]
    fn unknown_lane_is_data_error() {
        let text = tracks(&["1,4,10,15,4,1.8,30,0,0,0,9"]);
        let err = parse_tracks_csv(META.as_bytes(), text.as_bytes(), &IngestOptions::default())
            .unwrap_err();
        assert!(matches!(err, ScenarioError::Data { id: 4, frame: 1, .. }), "{err}");
    }

    #[test]
    fn non_monotonic_frames_rejected() {
        let text = tracks(&["2,4,10,15,4,1.8,30,0,0,0,2", "1,4,11,15,4,1.8,30,0,0,0,2"]);
        let err = parse_tracks_csv(META.as_bytes(), text.as_bytes(), &IngestOptions::default())
            .unwrap_err();
        assert!(matches!(err, ScenarioError::Data { id: 4, frame: 1, .. }), "{err}");
    }

    #[test]
    fn reemission_reproduces_kinematics() {
        let input = tracks(&[
            "1,7,10.25,15.5,4.5,1.75,30.5,-0.25,0.5,0.125,2",
            "2,7,11.5,15.5,4.5,1.75,30.5,-0.25,0.5,0.125,2",
            "2,8,40,12,12.5,2.5,22,0,-1.5,0,3",
        ]);
        let sc = parse_tracks_csv(META.as_bytes(), input.as_bytes(), &IngestOptions::default()).unwrap();
        let mut meta_out = Vec::new();
        let mut tracks_out = Vec::new();
        write_tracks_csv(&sc, 1, &mut meta_out, &mut tracks_out).unwrap();
        let again = parse_tracks_csv(meta_out.as_slice(), tracks_out.as_slice(), &IngestOptions::default())
            .unwrap();
        assert_eq!(again.tracks.len(), sc.tracks.len());
        for (a, b) in sc.tracks.values().zip(again.tracks.values()) {
            assert_eq!(a.start_step, b.start_step);
            for (x, y) in a.states.iter().zip(&b.states) {
                assert!((x.position.x - y.position.x).abs() < 1e-9);
                assert!((x.position.y - y.position.y).abs() < 1e-9);
                assert_eq!(x.velocity, y.velocity);
                assert_eq!(x.acceleration, y.acceleration);
                assert_eq!(x.lane_id, y.lane_id);
            }
        }
    }
}
