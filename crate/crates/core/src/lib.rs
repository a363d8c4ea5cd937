//! Checker-gated verification workflows with FG/FC/CK label traceability.
//!
//! A workflow is a YAML-configured sequence of stages. Each stage binds
//! checkers that inspect workspace artifacts; the engine advances only when
//! all of them pass. Labels of the form `<FG-x>`, `<FC-y>` and `<CK-z>` tie
//! the specification analysis, the coverage model, the test report and the
//! bug analysis together and are cross-checked by dedicated checkers.

pub mod artifacts;
pub mod checker;
pub mod fixture;
pub mod gateway;
pub mod label;
pub mod report;
pub mod workflow;
pub mod workspace;
