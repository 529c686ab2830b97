//! Self-describing scenario archive.
//!
//! ```text
//! RHSCN 1
//! timestep <seconds>
//! steps <count>
//! y_axis <up|down>
//! ego <direction> <start_min> <start_max> <start_speed> <goal_s>
//! lanes <count>
//! <id> <center> <width> <x_min> <x_max> <direction>
//! signs <count>
//! <kind> <s> <direction>
//! tracks <count>
//! track <id> <start_step> <samples>
//! <x> <y> <vx> <vy> <ax> <ay> <heading> <length> <width> <lane_id>
//! end
//! ```
//!
//! Fields are separated by single spaces. Numbers use Rust's shortest
//! round-trip formatting, so archives reload bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{
    Direction, EgoConfig, Lane, LaneNetwork, Scenario, ScenarioError, SignKind, Track,
    TrafficSign, Vec2, VehicleId, VehicleState, YAxis,
};

pub const ARCHIVE_MAGIC: &str = "RHSCN 1";

pub fn write_archive(scenario: &Scenario) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{ARCHIVE_MAGIC}");
    let _ = writeln!(out, "timestep {}", scenario.timestep);
    let _ = writeln!(out, "steps {}", scenario.num_steps);
    let _ = writeln!(out, "y_axis {}", scenario.lanes.y_axis.as_str());
    let e = &scenario.ego;
    let _ = writeln!(
        out,
        "ego {} {} {} {} {}",
        e.direction.as_str(),
        e.start_window.0,
        e.start_window.1,
        e.start_speed,
        e.goal_s
    );
    let _ = writeln!(out, "lanes {}", scenario.lanes.lanes.len());
    for l in &scenario.lanes.lanes {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            l.id,
            l.center,
            l.width,
            l.x_min,
            l.x_max,
            l.direction.as_str()
        );
    }
    let _ = writeln!(out, "signs {}", scenario.signs.len());
    for s in &scenario.signs {
        let _ = writeln!(out, "{} {} {}", s.kind.as_str(), s.s, s.direction.as_str());
    }
    let _ = writeln!(out, "tracks {}", scenario.tracks.len());
    for t in scenario.tracks.values() {
        let _ = writeln!(out, "track {} {} {}", t.id.0, t.start_step, t.states.len());
        for s in &t.states {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {} {}",
                s.position.x,
                s.position.y,
                s.velocity.x,
                s.velocity.y,
                s.acceleration.x,
                s.acceleration.y,
                s.heading,
                s.length,
                s.width,
                s.lane_id
            );
        }
    }
    out.push_str("end\n");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, Vec<&'a str>), ScenarioError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
            .ok_or_else(|| ScenarioError::Format("unexpected end of archive".into()))
    }

    fn keyed(&mut self, key: &str, arity: usize) -> Result<(usize, Vec<&'a str>), ScenarioError> {
        let (n, f) = self.next()?;
        if f.first() != Some(&key) || f.len() != arity + 1 {
            return Err(ScenarioError::Format(format!("line {n}: expected `{key}` with {arity} fields")));
        }
        Ok((n, f[1..].to_vec()))
    }
}

fn p<T: std::str::FromStr>(line: usize, text: &str) -> Result<T, ScenarioError> {
    text.parse().map_err(|_| ScenarioError::Format(format!("line {line}: cannot parse `{text}`")))
}

fn dir(line: usize, text: &str) -> Result<Direction, ScenarioError> {
    Direction::parse(text)
        .ok_or_else(|| ScenarioError::Format(format!("line {line}: bad direction `{text}`")))
}

pub fn read_archive(text: &str) -> Result<Scenario, ScenarioError> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let (_, magic) = lines.next()?;
    if magic.join(" ") != ARCHIVE_MAGIC {
        return Err(ScenarioError::Format(format!("missing `{ARCHIVE_MAGIC}` header")));
    }
    let (n, f) = lines.keyed("timestep", 1)?;
    let timestep: f64 = p(n, f[0])?;
    let (n, f) = lines.keyed("steps", 1)?;
    let num_steps: usize = p(n, f[0])?;
    let (n, f) = lines.keyed("y_axis", 1)?;
    let y_axis = YAxis::parse(f[0])
        .ok_or_else(|| ScenarioError::Format(format!("line {n}: bad y axis")))?;
    let (n, f) = lines.keyed("ego", 5)?;
    let ego = EgoConfig {
        direction: dir(n, f[0])?,
        start_window: (p(n, f[1])?, p(n, f[2])?),
        start_speed: p(n, f[3])?,
        goal_s: p(n, f[4])?,
    };
    let (n, f) = lines.keyed("lanes", 1)?;
    let lane_count: usize = p(n, f[0])?;
    let mut lanes = Vec::with_capacity(lane_count);
    for _ in 0..lane_count {
        let (n, f) = lines.next()?;
        if f.len() != 6 {
            return Err(ScenarioError::Format(format!("line {n}: lane needs 6 fields")));
        }
        lanes.push(Lane {
            id: p(n, f[0])?,
            center: p(n, f[1])?,
            width: p(n, f[2])?,
            x_min: p(n, f[3])?,
            x_max: p(n, f[4])?,
            direction: dir(n, f[5])?,
        });
    }
    let (n, f) = lines.keyed("signs", 1)?;
    let sign_count: usize = p(n, f[0])?;
    let mut signs = Vec::with_capacity(sign_count);
    for _ in 0..sign_count {
        let (n, f) = lines.next()?;
        if f.len() != 3 {
            return Err(ScenarioError::Format(format!("line {n}: sign needs 3 fields")));
        }
        let kind = SignKind::parse(f[0])
            .ok_or_else(|| ScenarioError::Format(format!("line {n}: bad sign kind")))?;
        signs.push(TrafficSign { kind, s: p(n, f[1])?, direction: dir(n, f[2])? });
    }
    let (n, f) = lines.keyed("tracks", 1)?;
    let track_count: usize = p(n, f[0])?;
    let mut tracks = BTreeMap::new();
    for _ in 0..track_count {
        let (n, f) = lines.keyed("track", 3)?;
        let id = VehicleId(p(n, f[0])?);
        let start_step: usize = p(n, f[1])?;
        let len: usize = p(n, f[2])?;
        let mut states = Vec::with_capacity(len);
        for _ in 0..len {
            let (n, f) = lines.next()?;
            if f.len() != 10 {
                return Err(ScenarioError::Format(format!("line {n}: state needs 10 fields")));
            }
            states.push(VehicleState {
                id,
                position: Vec2::new(p(n, f[0])?, p(n, f[1])?),
                velocity: Vec2::new(p(n, f[2])?, p(n, f[3])?),
                acceleration: Vec2::new(p(n, f[4])?, p(n, f[5])?),
                heading: p(n, f[6])?,
                length: p(n, f[7])?,
                width: p(n, f[8])?,
                lane_id: p(n, f[9])?,
            });
        }
        if tracks.insert(id, Track { id, start_step, states }).is_some() {
            return Err(ScenarioError::Format(format!("line {n}: duplicate track {id}")));
        }
    }
    let (n, f) = lines.next()?;
    if f != ["end"] {
        return Err(ScenarioError::Format(format!("line {n}: expected `end`")));
    }
    let scenario = Scenario { timestep, num_steps, tracks, lanes: LaneNetwork { lanes, y_axis }, signs, ego };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_synthetic_scenario, SynthSpec};
    use super::*;

    #[test]
    fn archive_roundtrip_is_exact() {
        let spec = SynthSpec { vehicles: 5, ..SynthSpec::default() };
        let sc = generate_synthetic_scenario(&spec, 11).unwrap();
        let text = write_archive(&sc);
        let back = read_archive(&text).unwrap();
        assert_eq!(back, sc);
        assert_eq!(write_archive(&back), text);
    }

    #[test]
    fn header_required() {
        assert!(read_archive("RHSCN 2\n").is_err());
    }
}
