//! Receding-horizon dispatch of a battery at a substation bus.
//!
//! [`qp`] holds a dense convex QP solver, [`horizon`] builds the condensed
//! horizon problem, [`sim`] runs the closed loop, [`scenarios`] generates
//! and loads demand/renewable profiles, and [`config`] plus [`runner`] drive
//! it all from a TOML file.

pub mod config;
pub mod horizon;
pub mod qp;
pub mod runner;
pub mod scenarios;
pub mod sim;
