//! H-track driving test: track geometry, vehicle model, zero-RPM and central
//! controllers, the wireless link between them, and the evaluation service.

// `!(x > 0.0)` is how input checks here reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod central;
pub mod evaluation;
pub mod eventlog;
pub mod geometry;
pub mod http;
pub mod link;
pub mod replay;
pub mod scenario;
pub mod sim;
pub mod track;
pub mod vehicle;
pub mod zero_rpm;
