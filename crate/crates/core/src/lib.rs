//! Simulation and control of a gyro-actuated, egg-shaped rolling robot.
//!
//! The robot is a shell carrying a two-ring gimbal driven by two
//! shell-mounted servos through a differential bevel train, with a rotor
//! spun at constant speed on the inner ring. Tilting the rotor axis draws
//! torque from its stored angular momentum, which rolls the shell.

pub mod dynamics;
pub mod error;
pub mod batch;
pub mod contact;
pub mod control;
pub mod gear;
pub mod harness;
pub mod rotation;
pub mod power;
pub mod sensor;

pub use error::{Error, Result};
