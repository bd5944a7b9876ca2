//! Command-line tool and HTTP service around `attrql-core`: a
//! content-addressed store, the result file format, PGM heatmaps and a
//! bundled demo model.

pub mod artifact;
pub mod demo;
pub mod render;
pub mod server;
pub mod store;
