//! Model serialization: versioned JSON with exact `f64` round-tripping.

use crate::error::{Error, Result};
use crate::network::{Layer, Network};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u64,
    input_dim: usize,
    num_classes: usize,
    layers: Vec<Layer>,
}

/// Save a network. JSON numbers are written in shortest round-trip form, so
/// every weight is recovered bit-identically by [`load_model`].
pub fn save_model(path: impl AsRef<Path>, net: &Network) -> Result<()> {
    let path = path.as_ref();
    let file = ModelFile {
        version: FORMAT_VERSION,
        input_dim: net.input_dim(),
        num_classes: net.num_classes(),
        layers: net.layers().to_vec(),
    };
    let f = File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::to_writer_pretty(BufWriter::new(f), &file).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

/// Load a network, validating the format version and the layer structure.
pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let file: ModelFile =
        serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
    if file.version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: file.version,
            supported: FORMAT_VERSION,
        });
    }
    let net = Network::new(file.layers)
        .map_err(|e| Error::MalformedDimensions(format!("{path}: {e}", path = path.display())))?;
    if net.input_dim() != file.input_dim || net.num_classes() != file.num_classes {
        return Err(Error::MalformedDimensions(format!(
            "declared dims ({}, {}) do not match layers ({}, {})",
            file.input_dim,
            file.num_classes,
            net.input_dim(),
            net.num_classes()
        )));
    }
    Ok(net)
}
