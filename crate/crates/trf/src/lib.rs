//! File formats, subcommands and the end-to-end pipeline behind the `trf`
//! command-line tool. The numerics live in `trf_core`.

pub mod analysis;
pub mod bitset;
pub mod cli;
pub mod commands;
pub mod io;
pub mod pipeline;
pub mod provenance;
pub mod schema;
