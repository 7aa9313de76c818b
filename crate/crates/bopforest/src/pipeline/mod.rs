//! End-to-end interval pipelines: BOP construction, the boosted two-forest
//! procedure, the single-forest method variants, and coverage calibration.

mod bop;
mod calibrate;
mod pibf;
mod rfpi;

pub use bop::{build_bop, build_oob_bop_training, Bop};
pub use pibf::{
    calibrate_cv, calibrate_oob_pibf, fit_pibf, Calibration, PibfModel, PibfPrediction,
    TrainingOobSummary,
};
pub use rfpi::{
    apply_pi_method, calibrate_oob_rfpi, fit_rfpi, rfpi_training_oob_summary, PiMethod, RfpiModel,
    RfpiPrediction,
};

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODEL_SCHEMA_VERSION: u32 = 1;

/// Self-describing JSON envelope for saved models.
#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    schema_version: u32,
    kind: String,
    model: M,
}

fn save_model<M: Serialize, W: Write>(model: &M, kind: &str, writer: W) -> Result<()> {
    let envelope = Envelope {
        schema_version: MODEL_SCHEMA_VERSION,
        kind: kind.to_owned(),
        model,
    };
    serde_json::to_writer(writer, &envelope)?;
    Ok(())
}

fn load_model<M: DeserializeOwned, R: Read>(kind: &str, reader: R) -> Result<M> {
    let envelope: Envelope<serde_json::Value> = serde_json::from_reader(reader)?;
    if envelope.schema_version != MODEL_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: envelope.schema_version,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    if envelope.kind != kind {
        return Err(Error::InvalidInput(format!(
            "model file holds a '{}' model, expected '{kind}'",
            envelope.kind
        )));
    }
    Ok(serde_json::from_value(envelope.model)?)
}

pub fn save_pibf_model<W: Write>(model: &PibfModel, writer: W) -> Result<()> {
    save_model(model, "pibf", writer)
}

pub fn load_pibf_model<R: Read>(reader: R) -> Result<PibfModel> {
    load_model("pibf", reader)
}

pub fn save_rfpi_model<W: Write>(model: &RfpiModel, writer: W) -> Result<()> {
    save_model(model, "rfpi", writer)
}

pub fn load_rfpi_model<R: Read>(reader: R) -> Result<RfpiModel> {
    load_model("rfpi", reader)
}

/// A bare forest in the same self-describing envelope (node arrays plus the
/// in-bag count matrix), for reuse outside the two model pipelines.
pub fn save_forest<W: Write>(forest: &crate::forest::Forest, writer: W) -> Result<()> {
    save_model(forest, "forest", writer)
}

pub fn load_forest<R: Read>(reader: R) -> Result<crate::forest::Forest> {
    load_model("forest", reader)
}
