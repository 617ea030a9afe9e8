use crate::error::{ensure_finite, Error, Result};
use crate::geometry::Vec2;
use crate::road::{AgentState, ControlInput};

/// One explicit-Euler step of the rear-axle kinematic bicycle model.
///
/// Position advances along the current heading, then heading and speed are
/// updated. Speed never goes negative.
pub fn step_bicycle(state: &AgentState, control: ControlInput, dt: f64, wheelbase: f64) -> Result<AgentState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("bicycle step needs dt > 0"));
    }
    ensure_finite(control.accel, "acceleration")?;
    ensure_finite(control.steer, "steering")?;
    ensure_finite(dt, "dt")?;
    if !(state.position.is_finite() && state.speed.is_finite() && state.heading.is_finite()) {
        return Err(Error::NonFinite("vehicle state"));
    }
    let v = state.speed;
    let mut next = *state;
    next.position = state.position + Vec2::from_heading(state.heading) * (v * dt);
    next.heading = state.heading + v / wheelbase * control.steer.tan() * dt;
    next.speed = (v + control.accel * dt).max(0.0);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_line() {
        let s = AgentState::new(1, 2.0, 10.0, 20.0);
        let n = step_bicycle(&s, ControlInput::default(), 0.1, 2.7).unwrap();
        assert!((n.position.y - 12.0).abs() < 1e-12);
        assert_eq!(n.position.x, 2.0);
        assert_eq!(n.speed, 20.0);
    }

    #[test]
    fn acceleration() {
        let s = AgentState::new(1, 0.0, 0.0, 10.0);
        let n = step_bicycle(&s, ControlInput { accel: 1.0, steer: 0.0 }, 0.1, 2.7).unwrap();
        assert!((n.speed - 10.1).abs() < 1e-12);
        let stopped =
            step_bicycle(&AgentState::new(1, 0.0, 0.0, 0.05), ControlInput { accel: -5.0, steer: 0.0 }, 0.1, 2.7)
                .unwrap();
        assert_eq!(stopped.speed, 0.0);
    }

    #[test]
    fn constant_steer_traces_circle() {
        // closed form: radius L / tan(steer), centre to the +x side of the start
        let wheelbase = 2.7;
        let steer: f64 = 0.2;
        let radius = wheelbase / steer.tan();
        let center = Vec2::new(radius, 0.0);
        let mut s = AgentState::new(1, 0.0, 0.0, 5.0);
        let control = ControlInput { accel: 0.0, steer };
        for _ in 0..20_000 {
            s = step_bicycle(&s, control, 1e-3, wheelbase).unwrap();
            let r = (s.position - center).norm();
            assert!((r - radius).abs() / radius < 0.01);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let s = AgentState::new(1, 0.0, 0.0, 5.0);
        assert!(step_bicycle(&s, ControlInput::default(), 0.0, 2.7).is_err());
        assert!(step_bicycle(&s, ControlInput { accel: f64::NAN, steer: 0.0 }, 0.1, 2.7).is_err());
    }
}
