//! Bundled real-world topologies.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{read_network, read_network_from, NetworkFormat, WeightedNetwork};

const KARATE: &str = include_str!("../data/karate.tsv");

/// Zachary's karate club: 34 members, 78 friendships, unit weights.
pub fn karate() -> WeightedNetwork {
    read_network_from(Cursor::new(KARATE), NetworkFormat::EdgeListTsv, Path::new("karate.tsv"))
        .expect("bundled karate edge list is valid")
}

/// A bundled topology by name, or a network file by path.
pub fn load_topology(name_or_path: &str) -> Result<WeightedNetwork> {
    match name_or_path {
        "karate" => Ok(karate()),
        other => {
            let path = Path::new(other);
            if !path.exists() {
                return Err(Error::Parameter(format!(
                    "unknown topology '{other}': not a bundled name and no such file"
                )));
            }
            read_network(path, NetworkFormat::from_path(path))
        }
    }
}
