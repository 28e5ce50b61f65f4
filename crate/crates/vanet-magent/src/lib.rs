//! Discrete-event simulator of a vehicular ad hoc network in which mobile
//! software agents perform QoS-aware multi-path route discovery, alert
//! dissemination, sensor reporting and information queries, plus a bench
//! comparing client-server and mobile-agent dispatch strategies.

pub mod agent;
pub mod bench;
pub mod config;
pub mod engine;
pub mod metrics;
pub mod net;
pub mod road;
pub mod routing;
pub mod scenario;
