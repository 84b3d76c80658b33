use super::{Command, Plan, PlannerConfig, Target};
use crate::error::{Error, Result};
use crate::motion::SkillClass;
use crate::sim::{Obstacle, Scenario, SimParams};

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn blocked(a: [f64; 2], b: [f64; 2], obstacles: &[Obstacle], margin: f64) -> bool {
    obstacles.iter().any(|o| o.inflated(margin).segment_hits(a, b))
}

/// Detour candidates beside `o`: the midpoint of each side pushed out by
/// the half-extent plus `clearance`, ordered +y, −y, +x, −x.
fn side_points(o: &Obstacle, clearance: f64) -> [[f64; 2]; 4] {
    let [cx, cy] = o.center;
    let [hx, hy] = o.half_extents;
    [
        [cx, cy + hy + clearance],
        [cx, cy - hy - clearance],
        [cx + hx + clearance, cy],
        [cx - hx - clearance, cy],
    ]
}

/// Rule-based plan for the strike task: run to a point short of the target,
/// detouring around the first blocking obstacle when the direct route is
/// obstructed, then slash.
pub fn scripted_plan(scenario: &Scenario, cfg: &PlannerConfig, sim: &SimParams) -> Result<Plan> {
    cfg.validate()?;
    scenario.validate(sim.robot_radius)?;
    let (start, target) = (scenario.start, scenario.target);
    let strike = Command::new(cfg.strike_caption.clone(), Target::Waypoint(target), SkillClass::Slash);
    let run = |p: [f64; 2]| Command::new(cfg.locomotion_caption.clone(), Target::Waypoint(p), SkillClass::Run);
    let span = dist(start, target);
    if span <= cfg.vicinity {
        return Ok(Plan { commands: vec![strike] });
    }
    let u = [(target[0] - start[0]) / span, (target[1] - start[1]) / span];
    let vicinity = [target[0] - cfg.vicinity * u[0], target[1] - cfg.vicinity * u[1]];
    let obstacles = &scenario.obstacles;
    if obstacles.iter().any(|o| o.inflated(cfg.planning_inflation).contains(vicinity)) {
        return Err(Error::Planner("approach point lies inside an obstacle".into()));
    }
    if !blocked(start, target, obstacles, cfg.planning_inflation) {
        return Ok(Plan {
            commands: vec![run(vicinity), strike],
        });
    }

    let first = obstacles
        .iter()
        .filter_map(|o| {
            o.inflated(cfg.planning_inflation)
                .segment_entry(start, target)
                .filter(|_| o.inflated(cfg.planning_inflation).segment_hits(start, target))
                .map(|(t, _)| (t, o))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, o)| *o)
        .expect("blocked route has a first obstacle");

    let mut best: Option<([f64; 2], f64)> = None;
    for wp in side_points(&first, cfg.detour_clearance) {
        if obstacles.iter().any(|o| o.inflated(cfg.planning_inflation).contains(wp)) {
            continue;
        }
        if blocked(start, wp, obstacles, sim.robot_radius) || blocked(wp, vicinity, obstacles, sim.robot_radius) {
            continue;
        }
        let len = dist(start, wp) + dist(wp, vicinity);
        // Candidates arrive +y first, so a strict comparison keeps +y on ties.
        if best.is_none_or(|(_, l)| len < l - 1e-9) {
            best = Some((wp, len));
        }
    }
    let (wp, _) = best.ok_or_else(|| Error::Planner("no collision-free detour around the blocking obstacle".into()))?;
    Ok(Plan {
        commands: vec![run(wp), run(vicinity), strike],
    })
}
