//! JSON weight files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "input_dim": 3,
//!   "hidden_sizes": [32, 32],
//!   "K": 3,
//!   "normalization": {"min": [...], "max": [...], "target_offset": 0.0, "target_scale": 0.001},
//!   "layers": [{"W": [[...], ...], "b": [...]}, ...],
//!   "heads": {"mu": {"W": ..., "b": ...}, "sigma": {...}, "alpha": {...}}
//! }
//! ```
//!
//! `W` is `outputs x inputs`. Reals are written in shortest round-trip form,
//! so save/load/save is byte-identical.

use serde::{Deserialize, Serialize};

use super::{Dense, MdnNetwork, NetworkShape, Normalization};
use crate::error::{Error, Result};

pub const WEIGHT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadsFile {
    mu: LayerFile,
    sigma: LayerFile,
    alpha: LayerFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    schema_version: u32,
    input_dim: usize,
    hidden_sizes: Vec<usize>,
    #[serde(rename = "K")]
    k: usize,
    normalization: Normalization,
    layers: Vec<LayerFile>,
    heads: HeadsFile,
}

impl From<&Dense> for LayerFile {
    fn from(d: &Dense) -> Self {
        LayerFile {
            w: d.weights.chunks_exact(d.inputs).map(<[f64]>::to_vec).collect(),
            b: d.bias.clone(),
        }
    }
}

impl LayerFile {
    fn into_dense(self, what: &str) -> Result<Dense> {
        let outputs = self.b.len();
        let inputs = self.w.first().map_or(0, Vec::len);
        if self.w.len() != outputs || self.w.iter().any(|r| r.len() != inputs) {
            return Err(Error::validation(format!(
                "{what}: W must be a {outputs}-row matrix with equal row lengths"
            )));
        }
        Ok(Dense {
            inputs,
            outputs,
            weights: self.w.into_iter().flatten().collect(),
            bias: self.b,
        })
    }
}

/// Serializes the network. Fails on non-finite parameters, which JSON
/// cannot represent.
pub fn save_weights(net: &MdnNetwork) -> Result<Vec<u8>> {
    if !net.all_finite() {
        return Err(Error::validation("cannot save a network with non-finite parameters"));
    }
    let file = WeightFile {
        schema_version: WEIGHT_SCHEMA_VERSION,
        input_dim: net.shape().input_dim,
        hidden_sizes: net.shape().hidden_sizes.clone(),
        k: net.k(),
        normalization: net.normalization().clone(),
        layers: net.hidden.iter().map(LayerFile::from).collect(),
        heads: HeadsFile {
            mu: (&net.mu).into(),
            sigma: (&net.sigma).into(),
            alpha: (&net.alpha).into(),
        },
    };
    let mut out = serde_json::to_vec_pretty(&file)
        .map_err(|e| Error::validation(format!("serializing weights: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

pub fn load_weights(bytes: &[u8]) -> Result<MdnNetwork> {
    let file: WeightFile = serde_json::from_slice(bytes).map_err(|e| {
        Error::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    if file.schema_version != WEIGHT_SCHEMA_VERSION {
        return Err(Error::validation(format!(
            "unsupported weight schema_version {} (expected {WEIGHT_SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let shape = NetworkShape::new(file.input_dim, file.hidden_sizes, file.k);
    let hidden = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.into_dense(&format!("layers[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let heads = [
        file.heads.mu.into_dense("heads.mu")?,
        file.heads.sigma.into_dense("heads.sigma")?,
        file.heads.alpha.into_dense("heads.alpha")?,
    ];
    MdnNetwork::from_parts(shape, hidden, heads, file.normalization)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_net() -> MdnNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let norm = Normalization {
            min: vec![0.0, 14.0, 0.0],
            max: vec![3.0, 33.0, 1.0],
            target_offset: 0.0165,
            target_scale: 1e-3,
        };
        MdnNetwork::new(NetworkShape::new(3, vec![6, 5], 3), norm, &mut rng).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let net = sample_net();
        let a = save_weights(&net).unwrap();
        let back = load_weights(&a).unwrap();
        assert_eq!(back, net);
        assert_eq!(save_weights(&back).unwrap(), a);
    }

    #[test]
    fn truncated_file_reports_position() {
        let bytes = save_weights(&sample_net()).unwrap();
        let err = load_weights(&bytes[..bytes.len() / 2]).unwrap_err();
        match err {
            Error::Parse { location, .. } => assert!(location.starts_with("line ")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_head_width_rejected() {
        let bytes = save_weights(&sample_net()).unwrap();
        let mut doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        doc["K"] = serde_json::json!(4);
        let err = load_weights(&serde_json::to_vec(&doc).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }
}
