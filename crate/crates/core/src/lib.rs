//! Exact tools for continuous piecewise-linear interval maps: topological
//! entropy, constant slope models, Hofbauer diagrams and dynamics checks.

pub mod dynamics;
pub mod entropy;
pub mod hofbauer;
pub mod interval;
pub mod lab;
pub mod map;
pub mod mapfile;
pub mod parry;
pub mod rational;

pub use interval::RationalInterval;
pub use map::{CriticalData, Lap, MapError, PLMap, PreimageCounts};
pub use rational::{parse_rational, Rational};
