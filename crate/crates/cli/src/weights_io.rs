//! Model files: trained server/client stacks and the frozen prefix, all
//! in the CTLW tensor container (kind byte distinguishes them).

use std::path::Path;

use cryptotl_he::layers::FrozenWeights;
use cryptotl_nn::spec::RELU_CUBIC_COEFFS;
use cryptotl_nn::{LayerParams, LayerSpec, ModelSpec, ModelState};
use cryptotl_protocol::codec::{
    deserialize_frozen_weights, deserialize_tensors, serialize_frozen_weights, serialize_tensors,
    NamedTensor, WEIGHTS_KIND_CLIENT_FULL, WEIGHTS_KIND_FROZEN, WEIGHTS_KIND_SERVER_FULL,
};

use crate::errors::CliError;

fn model_tensors(state: &ModelState) -> Vec<NamedTensor> {
    let mut tensors = vec![
        NamedTensor::scalar("meta.input_width", state.spec.input_width as f64),
        NamedTensor::scalar("meta.seed", state.seed as f64),
        NamedTensor::scalar("meta.epochs", state.epochs_trained as f64),
    ];
    for (i, (layer, params)) in state.spec.layers.iter().zip(&state.params).enumerate() {
        match (layer, params) {
            (LayerSpec::Conv1d { filter }, LayerParams::Conv { w, b }) => {
                tensors.push(NamedTensor::scalar(
                    &format!("layer{i}.conv_filter"),
                    *filter as f64,
                ));
                tensors.push(NamedTensor::vector(&format!("layer{i}.w"), w));
                tensors.push(NamedTensor::scalar(&format!("layer{i}.b"), *b));
            }
            (LayerSpec::Dense { .. }, LayerParams::Dense { w, b }) => {
                tensors.push(NamedTensor::matrix(&format!("layer{i}.w"), w));
                tensors.push(NamedTensor::vector(&format!("layer{i}.b"), b));
            }
            (LayerSpec::AvgPool { size } | LayerSpec::MaxPool { size }, _) => {
                tensors.push(NamedTensor::scalar(&format!("layer{i}.pool"), *size as f64));
            }
            (LayerSpec::Dropout { rate }, _) => {
                tensors.push(NamedTensor::scalar(&format!("layer{i}.dropout"), *rate));
            }
            _ => {}
        }
    }
    tensors
}

fn rebuild_state(spec: &ModelSpec, tensors: &[NamedTensor]) -> Result<ModelState, CliError> {
    let find = |name: String| -> Result<&NamedTensor, CliError> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CliError::Data(format!("weights file missing tensor {name}")))
    };
    let mut params = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let p = match layer {
            LayerSpec::Conv1d { .. } => LayerParams::Conv {
                w: find(format!("layer{i}.w"))?.data.clone(),
                b: find(format!("layer{i}.b"))?.data[0],
            },
            LayerSpec::Dense { .. } => LayerParams::Dense {
                w: find(format!("layer{i}.w"))?
                    .to_matrix()
                    .map_err(|e| CliError::Data(e.to_string()))?,
                b: find(format!("layer{i}.b"))?.data.clone(),
            },
            _ => LayerParams::None,
        };
        params.push(p);
    }
    let seed = find("meta.seed".into())?.data[0] as u64;
    let epochs = find("meta.epochs".into())?.data[0] as usize;
    let state = ModelState {
        spec: spec.clone(),
        params,
        seed,
        epochs_trained: epochs,
    };
    state
        .validate_shapes()
        .map_err(|e| CliError::Data(format!("weights file: {e}")))?;
    Ok(state)
}

pub fn save_server_model(
    path: &Path,
    state: &ModelState,
    conv_filter: usize,
    pool: usize,
) -> Result<(), CliError> {
    let mut tensors = model_tensors(state);
    tensors.push(NamedTensor::scalar("meta.conv_filter", conv_filter as f64));
    tensors.push(NamedTensor::scalar("meta.pool", pool as f64));
    std::fs::write(path, serialize_tensors(WEIGHTS_KIND_SERVER_FULL, &tensors))?;
    Ok(())
}

pub fn load_server_model(path: &Path) -> Result<(ModelState, usize, usize), CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (kind, tensors) = deserialize_tensors(&bytes).map_err(|e| CliError::Data(e.to_string()))?;
    if kind != WEIGHTS_KIND_SERVER_FULL {
        return Err(CliError::Data(format!(
            "{} is not a full server model (kind {kind})",
            path.display()
        )));
    }
    let get_scalar = |name: &str| -> Result<f64, CliError> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.data[0])
            .ok_or_else(|| CliError::Data(format!("weights file missing {name}")))
    };
    let width = get_scalar("meta.input_width")? as usize;
    let conv_filter = get_scalar("meta.conv_filter")? as usize;
    let pool = get_scalar("meta.pool")? as usize;
    let spec = ModelSpec::server(width, conv_filter, pool);
    Ok((rebuild_state(&spec, &tensors)?, conv_filter, pool))
}

pub fn save_client_model(path: &Path, state: &ModelState, pool: usize) -> Result<(), CliError> {
    let mut tensors = model_tensors(state);
    tensors.push(NamedTensor::scalar("meta.pool", pool as f64));
    std::fs::write(path, serialize_tensors(WEIGHTS_KIND_CLIENT_FULL, &tensors))?;
    Ok(())
}

pub fn load_client_model(path: &Path) -> Result<ModelState, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (kind, tensors) = deserialize_tensors(&bytes).map_err(|e| CliError::Data(e.to_string()))?;
    if kind != WEIGHTS_KIND_CLIENT_FULL {
        return Err(CliError::Data(format!(
            "{} is not a client model (kind {kind})",
            path.display()
        )));
    }
    let get_scalar = |name: &str| -> Result<f64, CliError> {
        tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.data[0])
            .ok_or_else(|| CliError::Data(format!("weights file missing {name}")))
    };
    let width = get_scalar("meta.input_width")? as usize;
    let pool = get_scalar("meta.pool")? as usize;
    let spec = ModelSpec::client(width, pool);
    rebuild_state(&spec, &tensors)
}

/// Extract the frozen prefix of a trained server model in the layout the
/// encrypted circuit consumes: the pooled dense layer's square matrix is
/// widened to t columns (zero columns over the pool-invalid slots).
pub fn frozen_from_server(
    state: &ModelState,
    conv_filter: usize,
    pool: usize,
) -> Result<FrozenWeights, CliError> {
    let t = state.spec.input_width;
    let boundary = state
        .spec
        .frozen_boundary
        .ok_or_else(|| CliError::Data("model has no frozen boundary".into()))?;
    if boundary < 5 {
        return Err(CliError::Data("frozen boundary too small".into()));
    }
    let conv = match &state.params[0] {
        LayerParams::Conv { w, b } => (w.clone(), *b),
        _ => return Err(CliError::Data("layer 0 is not a convolution".into())),
    };
    let dense1 = match &state.params[1] {
        LayerParams::Dense { w, b } => (w.clone(), b.clone()),
        _ => return Err(CliError::Data("layer 1 is not dense".into())),
    };
    let dense2 = match &state.params[4] {
        LayerParams::Dense { w, b } => (w, b.clone()),
        _ => return Err(CliError::Data("layer 4 is not dense".into())),
    };
    // Widen (t-pool+1) x (t-pool+1) to (t-pool+1) x t; the extra columns
    // multiply slots the pool mask zeroed.
    let widened: Vec<Vec<f64>> = dense2
        .0
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.resize(t, 0.0);
            r
        })
        .collect();
    let w = FrozenWeights {
        conv_filter: conv.0,
        conv_bias: conv.1,
        dense1: dense1.0,
        dense1_bias: dense1.1,
        dense2: widened,
        dense2_bias: dense2.1,
        relu_coeffs: RELU_CUBIC_COEFFS,
        pool,
    };
    let _ = conv_filter;
    w.validate().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(w)
}

pub fn save_frozen(path: &Path, w: &FrozenWeights) -> Result<(), CliError> {
    std::fs::write(path, serialize_frozen_weights(w))?;
    Ok(())
}

/// Accept either a frozen-prefix file or a full server model.
pub fn load_frozen_any(path: &Path) -> Result<FrozenWeights, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (kind, _) = deserialize_tensors(&bytes).map_err(|e| CliError::Data(e.to_string()))?;
    match kind {
        WEIGHTS_KIND_FROZEN => {
            deserialize_frozen_weights(&bytes).map_err(|e| CliError::Data(e.to_string()))
        }
        WEIGHTS_KIND_SERVER_FULL => {
            let (state, conv_filter, pool) = load_server_model(path)?;
            frozen_from_server(&state, conv_filter, pool)
        }
        other => Err(CliError::Data(format!("unsupported weights kind {other}"))),
    }
}
