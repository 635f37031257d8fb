//! Holds the `acceptance` test target. The package sorts after the library and the
//! command-line crate, so a failing criterion does not stop their tests from running.
