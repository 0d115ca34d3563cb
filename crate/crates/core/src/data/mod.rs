//! Datasets: the simulated benchmark, CSV ingestion, the synthetic spatial
//! field, and train/validation/test splitting.

mod csv_load;
mod dataset;
mod simulate;
mod spatial;
mod split;

pub use csv_load::{load_csv, load_features, CsvOptions, TaskKind, MISSING_TOKENS};
pub use dataset::{Dataset, DatasetManifest, Task};
pub use simulate::{
    generate_simulated, generate_simulated_with, simulated_response, SimulationConfig,
    DEFAULT_SIMULATED_ROWS,
};
pub use spatial::{
    generate_spatial_field, generate_spatial_field_with, spatial_features, Bump, SpatialField,
    SpatialFieldConfig, SpatialFieldModel, SPATIAL_FEATURE_NAMES,
};
pub use split::{
    split, split_rows, split_sizes, SplitIndices, MIN_STRATUM, TEST_FRACTION, VALIDATION_FRACTION,
};
