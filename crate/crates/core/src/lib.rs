//! Simulation of vision-guided adaptive crack filling.
//!
//! A procedural specimen ([`specimen`]) is observed by a simulated RGB-D
//! camera and laser line scanner ([`sensors`]). The crack centreline is
//! extracted from the camera mask ([`perception`]), mapped into the robot
//! frame ([`geometry`]), refined and measured with the laser ([`profile`]),
//! then filled at speeds from an extrusion calibration and validated by
//! rescanning ([`repair`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod perception;
pub mod profile;
pub mod raster;
pub mod repair;
pub mod sensors;
pub mod specimen;
