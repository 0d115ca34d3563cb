use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{build_rdrn, LayerShape, Network};
use super::spec::NetworkSpec;
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "rdrn-network/1";

/// On-disk form of a network: the spec it was built from, a layer shape
/// table for quick inspection, and every parameter and running statistic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub spec: NetworkSpec,
    pub layer_shapes: Vec<LayerShape>,
    pub network: Network,
}

impl ModelDocument {
    pub fn new(net: &Network) -> Self {
        let mut network = net.clone();
        network.clear_caches();
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            spec: net.spec().clone(),
            layer_shapes: net.layer_shapes(),
            network,
        }
    }

    /// Checks the document against a freshly built network of the same spec
    /// and returns the stored network.
    pub fn into_network(self) -> Result<Network> {
        if self.format != MODEL_FORMAT {
            return Err(Error::InvalidSpec(format!(
                "unsupported model format {:?}, expected {MODEL_FORMAT:?}",
                self.format
            )));
        }
        if &self.spec != self.network.spec() {
            return Err(Error::InvalidSpec(
                "model spec and network spec disagree".into(),
            ));
        }
        let reference = build_rdrn(&self.spec, 0)?;
        if reference.layer_shapes() != self.network.layer_shapes()
            || self.layer_shapes != self.network.layer_shapes()
        {
            return Err(Error::InvalidSpec(
                "stored layer shapes do not match the spec".into(),
            ));
        }
        if reference.wiring_table() != self.network.wiring_table() {
            return Err(Error::InvalidSpec(
                "stored wiring does not match the spec".into(),
            ));
        }
        Ok(self.network)
    }
}

pub fn network_to_json(net: &Network) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelDocument::new(net))?)
}

pub fn network_from_json(json: &str) -> Result<Network> {
    serde_json::from_str::<ModelDocument>(json)?.into_network()
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, network_to_json(net)?)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Network> {
    network_from_json(&fs::read_to_string(path)?)
}
