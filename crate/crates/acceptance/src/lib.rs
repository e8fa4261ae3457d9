//! Holds the `acceptance` test target only; run it with
//! `cargo test -p vdi-acceptance --test acceptance`.
