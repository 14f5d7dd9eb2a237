//! Holds the `acceptance` test target; run it with
//! `cargo test -p airl-interp-validation --test acceptance`.
