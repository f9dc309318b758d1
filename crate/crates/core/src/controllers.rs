//! Signal assignments, the fixed-time baseline, and the interlock that turns
//! any serving request into a legal green → yellow → red sequence.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::netmodel::{Axis, Junction};
use crate::simcore::Simulation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Green,
    Yellow,
    Red,
}

impl Color {
    pub fn is_red(self) -> bool {
        self == Color::Red
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Color::Green => "green",
            Color::Yellow => "yellow",
            Color::Red => "red",
        })
    }
}

/// Colors shown by one signalized junction, plus how many steps the current
/// phase has been displayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalState {
    pub a: Color,
    pub b: Color,
    pub elapsed: u32,
}

/// Which phase a signal state is in; `None` from [`SignalState::phase`] means
/// the colors are illegal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Serving(Axis),
    Yellow(Axis),
    AllRed,
}

impl SignalState {
    pub fn serving(axis: Axis) -> Self {
        let mut s = SignalState {
            a: Color::Red,
            b: Color::Red,
            elapsed: 0,
        };
        *s.color_mut(axis) = Color::Green;
        s
    }

    pub fn all_red() -> Self {
        SignalState {
            a: Color::Red,
            b: Color::Red,
            elapsed: 0,
        }
    }

    fn yellow(axis: Axis) -> Self {
        let mut s = SignalState::all_red();
        *s.color_mut(axis) = Color::Yellow;
        s
    }

    pub fn color(&self, axis: Axis) -> Color {
        match axis {
            Axis::A => self.a,
            Axis::B => self.b,
        }
    }

    fn color_mut(&mut self, axis: Axis) -> &mut Color {
        match axis {
            Axis::A => &mut self.a,
            Axis::B => &mut self.b,
        }
    }

    /// Safety interlock: at most one axis may be non-red.
    pub fn is_safe(&self) -> bool {
        self.a.is_red() || self.b.is_red()
    }

    pub fn phase(&self) -> Option<Phase> {
        use Color::*;
        match (self.a, self.b) {
            (Green, Red) => Some(Phase::Serving(Axis::A)),
            (Red, Green) => Some(Phase::Serving(Axis::B)),
            (Yellow, Red) => Some(Phase::Yellow(Axis::A)),
            (Red, Yellow) => Some(Phase::Yellow(Axis::B)),
            (Red, Red) => Some(Phase::AllRed),
            _ => None,
        }
    }

    fn same_colors(&self, other: &SignalState) -> bool {
        self.a == other.a && self.b == other.b
    }

    fn advanced(mut self) -> Self {
        self.elapsed = self.elapsed.saturating_add(1);
        self
    }

    fn started(mut self) -> Self {
        self.elapsed = 1;
        self
    }
}

/// Signal states of every signalized junction, in network order.
pub type SignalAssignment = Vec<SignalState>;

/// What a controller asks a junction to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisRequest {
    Serve(Axis),
    AllRed,
}

impl AxisRequest {
    /// Agent action index: 0 → serve A, 1 → serve B, 2 → all red.
    pub fn from_action(action: usize) -> AxisRequest {
        match action {
            0 => AxisRequest::Serve(Axis::A),
            1 => AxisRequest::Serve(Axis::B),
            _ => AxisRequest::AllRed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedTimePlan {
    pub green_a: f64,
    pub yellow: f64,
    pub green_b: f64,
}

impl Default for FixedTimePlan {
    fn default() -> Self {
        FixedTimePlan {
            green_a: 30.0,
            yellow: 3.0,
            green_b: 30.0,
        }
    }
}

impl FixedTimePlan {
    pub fn cycle(&self) -> f64 {
        self.green_a + self.yellow + self.green_b + self.yellow
    }

    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("green_a", self.green_a),
            ("yellow", self.yellow),
            ("green_b", self.green_b),
        ] {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(format!("fixed plan {name} must be ≥ 1 s, got {v}"));
            }
        }
        Ok(())
    }
}

/// Colors a fixed-time plan shows at `clock`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisColors {
    pub a: Color,
    pub b: Color,
}

impl AxisColors {
    /// The serving request that reproduces these colors through the interlock.
    pub fn request(&self) -> AxisRequest {
        match (self.a, self.b) {
            (Color::Green, _) | (_, Color::Yellow) => AxisRequest::Serve(Axis::A),
            _ => AxisRequest::Serve(Axis::B),
        }
    }
}

pub fn fixed_time_decide(clock: f64, plan: &FixedTimePlan) -> AxisColors {
    let t = clock.rem_euclid(plan.cycle());
    let (a, b) = if t < plan.green_a {
        (Color::Green, Color::Red)
    } else if t < plan.green_a + plan.yellow {
        (Color::Yellow, Color::Red)
    } else if t < plan.green_a + plan.yellow + plan.green_b {
        (Color::Red, Color::Green)
    } else {
        (Color::Red, Color::Yellow)
    };
    AxisColors { a, b }
}

/// Signal state to display for the next step, given a serving request.
///
/// A change of served axis waits for min-green, then shows yellow on the
/// losing axis for exactly the junction's yellow duration before the winner
/// turns green. The request current at the end of yellow decides what
/// follows; re-requesting the axis that just turned yellow goes through an
/// all-red step.
pub fn apply_interlock(request: AxisRequest, current: &SignalState, junction: &Junction) -> SignalState {
    let min_green = junction.min_green.ceil().max(1.0) as u32;
    let yellow = junction.yellow.ceil().max(1.0) as u32;
    let Some(phase) = current.phase() else {
        return SignalState::all_red().started();
    };
    match phase {
        Phase::Serving(axis) => {
            if request == AxisRequest::Serve(axis) || current.elapsed < min_green {
                current.advanced()
            } else {
                SignalState::yellow(axis).started()
            }
        }
        Phase::Yellow(axis) => {
            if current.elapsed < yellow {
                current.advanced()
            } else {
                match request {
                    AxisRequest::Serve(next) if next != axis => SignalState::serving(next).started(),
                    _ => SignalState::all_red().started(),
                }
            }
        }
        Phase::AllRed => match request {
            AxisRequest::Serve(next) => SignalState::serving(next).started(),
            AxisRequest::AllRed => current.advanced(),
        },
    }
}

/// Checks one junction's signal stream for a violation of the interlock rules:
/// conflicting non-red axes, green going straight to red, a yellow not lasting
/// exactly `yellow` steps, or a green shorter than `min_green` steps.
pub fn transition_violation(
    prev: &SignalState,
    next: &SignalState,
    junction: &Junction,
) -> Option<String> {
    let min_green = junction.min_green.ceil().max(1.0) as u32;
    let yellow = junction.yellow.ceil().max(1.0) as u32;
    if !next.is_safe() {
        return Some(format!("conflicting axes {} / {}", next.a, next.b));
    }
    for axis in [Axis::A, Axis::B] {
        let (p, n) = (prev.color(axis), next.color(axis));
        match (p, n) {
            (Color::Green, Color::Red) => {
                return Some(format!("axis {axis} went green → red without yellow"))
            }
            (Color::Green, Color::Yellow) if prev.elapsed < min_green => {
                return Some(format!(
                    "axis {axis} green lasted {} < {min_green} steps",
                    prev.elapsed
                ))
            }
            (Color::Yellow, Color::Red) if prev.elapsed != yellow => {
                return Some(format!(
                    "axis {axis} yellow lasted {} ≠ {yellow} steps",
                    prev.elapsed
                ))
            }
            (Color::Yellow, Color::Green) => {
                return Some(format!("axis {axis} went yellow → green"))
            }
            _ => {}
        }
    }
    if next.same_colors(prev) && next.elapsed != prev.elapsed.saturating_add(1) {
        return Some("phase timer did not advance".into());
    }
    None
}

/// A traffic-light controller. Called once per simulation step with the
/// current state; returns one request per signalized junction.
pub trait SignalController {
    fn name(&self) -> &str;
    fn requests(&mut self, sim: &Simulation) -> Vec<AxisRequest>;
}

/// Rule-based baseline: each junction cycles through its fixed plan.
#[derive(Debug, Clone)]
pub struct FixedTimeController {
    plans: Vec<FixedTimePlan>,
}

impl FixedTimeController {
    pub fn new(sim: &Simulation) -> Self {
        FixedTimeController {
            plans: sim.signalized_junctions().map(|j| j.plan()).collect(),
        }
    }
}

impl SignalController for FixedTimeController {
    fn name(&self) -> &str {
        "Rule-based"
    }

    fn requests(&mut self, sim: &Simulation) -> Vec<AxisRequest> {
        self.plans
            .iter()
            .map(|p| fixed_time_decide(sim.clock(), p).request())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn junction(min_green: f64, yellow: f64) -> Junction {
        let mut j = Junction::unsignalized("J");
        j.signalized = true;
        j.axis_a = vec!["a".into()];
        j.axis_b = vec!["b".into()];
        j.min_green = min_green;
        j.yellow = yellow;
        j
    }

    fn state(a: Color, b: Color, elapsed: u32) -> SignalState {
        SignalState { a, b, elapsed }
    }

    #[test]
    fn fixed_time_examples() {
        let plan = FixedTimePlan::default();
        let at = |t| fixed_time_decide(t, &plan);
        assert_eq!(at(0.0), AxisColors { a: Color::Green, b: Color::Red });
        assert_eq!(at(31.0), AxisColors { a: Color::Yellow, b: Color::Red });
        assert_eq!(at(33.0), AxisColors { a: Color::Red, b: Color::Green });
        assert_eq!(at(64.0), AxisColors { a: Color::Red, b: Color::Yellow });
        assert_eq!(at(66.0), AxisColors { a: Color::Green, b: Color::Red });
    }

    #[test]
    fn interlock_starts_transition_after_min_green() {
        let j = junction(5.0, 3.0);
        let next = apply_interlock(
            AxisRequest::Serve(Axis::B),
            &state(Color::Green, Color::Red, 10),
            &j,
        );
        assert_eq!((next.a, next.b), (Color::Yellow, Color::Red));
    }

    #[test]
    fn interlock_defers_before_min_green() {
        let j = junction(5.0, 3.0);
        let next = apply_interlock(
            AxisRequest::Serve(Axis::B),
            &state(Color::Green, Color::Red, 2),
            &j,
        );
        assert_eq!(next, state(Color::Green, Color::Red, 3));
    }

    #[test]
    fn interlock_completes_yellow() {
        let j = junction(5.0, 3.0);
        let next = apply_interlock(
            AxisRequest::Serve(Axis::B),
            &state(Color::Yellow, Color::Red, 3),
            &j,
        );
        assert_eq!(next, state(Color::Red, Color::Green, 1));
    }

    #[test]
    fn interlock_same_axis_after_yellow_goes_all_red() {
        let j = junction(5.0, 3.0);
        let next = apply_interlock(
            AxisRequest::Serve(Axis::A),
            &state(Color::Yellow, Color::Red, 3),
            &j,
        );
        assert_eq!(next, state(Color::Red, Color::Red, 1));
    }

    #[test]
    fn interlock_repairs_illegal_state() {
        let j = junction(5.0, 3.0);
        let next = apply_interlock(
            AxisRequest::Serve(Axis::A),
            &state(Color::Green, Color::Green, 3),
            &j,
        );
        assert!(next.is_safe());
    }

    #[test]
    fn fixed_plan_through_interlock_reproduces_plan() {
        let j = junction(5.0, 3.0);
        let plan = FixedTimePlan::default();
        let mut s = SignalState::serving(Axis::A);
        for t in 0..400 {
            let want = fixed_time_decide(t as f64, &plan);
            s = apply_interlock(want.request(), &s, &j);
            assert_eq!((s.a, s.b), (want.a, want.b), "t={t}");
        }
    }

    fn request() -> impl Strategy<Value = AxisRequest> {
        prop_oneof![
            Just(AxisRequest::Serve(Axis::A)),
            Just(AxisRequest::Serve(Axis::B)),
            Just(AxisRequest::AllRed),
        ]
    }

    proptest! {
        #[test]
        fn random_requests_never_break_interlock(
            reqs in prop::collection::vec(request(), 1..400),
            min_green in 1u32..10,
            yellow in 1u32..6,
        ) {
            let j = junction(min_green as f64, yellow as f64);
            let mut s = SignalState::serving(Axis::A);
            s.elapsed = min_green;
            for r in reqs {
                let next = apply_interlock(r, &s, &j);
                prop_assert_eq!(transition_violation(&s, &next, &j), None);
                s = next;
            }
        }

        #[test]
        fn fixed_time_is_periodic(t in 0u32..5000, ga in 1u32..60, y in 1u32..6, gb in 1u32..60) {
            let plan = FixedTimePlan { green_a: ga as f64, yellow: y as f64, green_b: gb as f64 };
            let t = t as f64;
            prop_assert_eq!(fixed_time_decide(t, &plan), fixed_time_decide(t + plan.cycle(), &plan));
        }
    }
}
