//! Cartpole with the classic control constants and explicit Euler steps.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE: f64 = 10.0;
pub const DT: f64 = 0.02;
pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const MAX_STEPS: usize = 500;
pub const RESET_RANGE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
}

impl Action {
    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Left
        } else {
            Action::Right
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn mirrored(self) -> Self {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartpoleState {
    pub x: f64,
    pub v: f64,
    pub theta: f64,
    pub omega: f64,
    pub step_count: usize,
}

impl CartpoleState {
    pub fn features(&self) -> [f64; 4] {
        [self.x, self.v, self.theta, self.omega]
    }

    /// The pole fell or the cart left the track.
    pub fn is_failure(&self) -> bool {
        self.x.abs() > X_LIMIT || self.theta.abs() > THETA_LIMIT
    }

    pub fn is_truncated(&self) -> bool {
        self.step_count >= MAX_STEPS
    }

    pub fn is_terminal(&self) -> bool {
        self.is_failure() || self.is_truncated()
    }

    pub fn mirrored(&self) -> Self {
        Self { x: -self.x, v: -self.v, theta: -self.theta, omega: -self.omega, step_count: self.step_count }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub state: CartpoleState,
    pub reward: f64,
    pub done: bool,
}

pub fn env_reset(seed: u64) -> CartpoleState {
    env_reset_with(&mut rng::seeded(seed))
}

pub fn env_reset_with(rng: &mut Rng) -> CartpoleState {
    let mut draw = || rng.random_range(-RESET_RANGE..=RESET_RANGE);
    CartpoleState { x: draw(), v: draw(), theta: draw(), omega: draw(), step_count: 0 }
}

pub fn env_step(state: &CartpoleState, action: Action) -> Result<Step> {
    if state.is_terminal() {
        return Err(Error::Contract("cannot step a terminal cartpole state".into()));
    }
    let force = match action {
        Action::Left => -FORCE,
        Action::Right => FORCE,
    };
    let total_mass = CART_MASS + POLE_MASS;
    let pole_moment = POLE_MASS * HALF_LENGTH;
    let (sin, cos) = state.theta.sin_cos();
    let temp = (force + pole_moment * state.omega * state.omega * sin) / total_mass;
    let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
    let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
    let next = CartpoleState {
        x: state.x + DT * state.v,
        v: state.v + DT * x_acc,
        theta: state.theta + DT * state.omega,
        omega: state.omega + DT * theta_acc,
        step_count: state.step_count + 1,
    };
    Ok(Step { state: next, reward: 1.0, done: next.is_terminal() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero() -> CartpoleState {
        CartpoleState { x: 0.0, v: 0.0, theta: 0.0, omega: 0.0, step_count: 0 }
    }

    #[test]
    fn reset_is_deterministic_and_live() {
        assert_eq!(env_reset(4), env_reset(4));
        for s in 0..100 {
            let st = env_reset(s);
            assert!(!st.is_terminal());
            assert!(st.features().iter().all(|f| f.abs() <= RESET_RANGE));
        }
    }

    #[test]
    fn reset_means_are_centered() {
        let mut rng = rng::seeded(11);
        let mut sums = [0.0; 4];
        let count = 10_000;
        for _ in 0..count {
            for (s, f) in sums.iter_mut().zip(env_reset_with(&mut rng).features()) {
                *s += f;
            }
        }
        assert!(sums.iter().all(|s| (s / count as f64).abs() < 0.005), "{sums:?}");
    }

    #[test]
    fn first_step_from_rest() {
        let s = env_step(&zero(), Action::Right).unwrap();
        // temp = 10 / 1.1; theta_acc = -temp / (0.5 (4/3 - 0.1/1.1))
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        assert_eq!(s.state.x, 0.0);
        assert_eq!(s.state.theta, 0.0);
        assert!((s.state.v - 0.02 * x_acc).abs() < 1e-15);
        assert!((s.state.omega - 0.02 * theta_acc).abs() < 1e-15);
        assert!(s.state.v > 0.0);
        assert_eq!(s.reward, 1.0);
        assert!(!s.done);
    }

    #[test]
    fn always_right_falls_before_the_limit() {
        let mut s = zero();
        let mut steps = 0;
        loop {
            let st = env_step(&s, Action::Right).unwrap();
            steps += 1;
            s = st.state;
            if st.done {
                break;
            }
        }
        assert!(steps < MAX_STEPS && s.is_failure());
    }

    #[test]
    fn terminal_states_cannot_step() {
        let s = CartpoleState { x: 3.0, ..zero() };
        assert!(matches!(env_step(&s, Action::Left), Err(Error::Contract(_))));
        let s = CartpoleState { step_count: MAX_STEPS, ..zero() };
        assert!(s.is_terminal() && !s.is_failure());
    }

    proptest! {
        #[test]
        fn dynamics_are_mirror_symmetric(x in -2.0f64..2.0, v in -2.0f64..2.0, th in -0.2f64..0.2, om in -2.0f64..2.0, right in any::<bool>()) {
            let s = CartpoleState { x, v, theta: th, omega: om, step_count: 3 };
            let a = if right { Action::Right } else { Action::Left };
            let n = env_step(&s, a).unwrap().state;
            let m = env_step(&s.mirrored(), a.mirrored()).unwrap().state.mirrored();
            for (p, q) in n.features().iter().zip(m.features()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }

        #[test]
        fn same_actions_same_trajectory(seed in 0u64..500, actions in proptest::collection::vec(any::<bool>(), 1..40)) {
            let run = || {
                let mut s = env_reset(seed);
                let mut out = vec![s];
                for &r in &actions {
                    if s.is_terminal() { break; }
                    s = env_step(&s, if r { Action::Right } else { Action::Left }).unwrap().state;
                    out.push(s);
                }
                out
            };
            prop_assert_eq!(run(), run());
        }
    }
}
