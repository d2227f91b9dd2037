//! Checks shared by the per-area integration tests and the acceptance
//! runner. Each check returns a one-line summary on success and a reason on
//! failure.

#![allow(dead_code)]

pub mod grad;
pub mod oracles;
pub mod parser;
pub mod protocol;

pub type Check = Result<String, String>;

pub fn fail<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{context}: {e}")
}
