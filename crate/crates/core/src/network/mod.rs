//! Network specification, construction, execution and persistence.

mod graph;
mod persist;
mod spec;

pub use graph::{
    build_rdrn, build_regular, truncate_residuals, LayerShape, Network, NetworkStructure,
    ParamGradients, ParamKind, Predictions, ShortcutEntry, ShortcutGradients,
};
pub use persist::{
    load_network, network_from_json, network_to_json, save_network, ModelDocument, MODEL_FORMAT,
};
pub use spec::{DropoutPlacement, NetworkSpec, OutputOption, ResidualMode};
