//! JSON checkpoints.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{BatchNorm, Dense, Layer, Network};
use crate::error::{Error, Result};
use crate::stats::FeatureStats;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    layers: Vec<LayerRecord>,
    classes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum LayerRecord {
    Dense {
        w: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Bn {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
        count: f64,
        eps: f64,
    },
    Relu,
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        let layers = self
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => LayerRecord::Dense {
                    w: d.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
                    b: d.bias.to_vec(),
                },
                Layer::BatchNorm(bn) => LayerRecord::Bn {
                    gamma: bn.gamma.to_vec(),
                    beta: bn.beta.to_vec(),
                    mean: bn.source.mean().to_vec(),
                    var: bn.source.variance().to_vec(),
                    count: bn.source.count(),
                    eps: bn.eps,
                },
                Layer::Relu => LayerRecord::Relu,
            })
            .collect();
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            layers,
            classes: self.classes(),
        };
        Ok(serde_json::to_string_pretty(&ckpt)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {}",
                ckpt.format_version
            )));
        }
        let layers = ckpt
            .layers
            .into_iter()
            .map(|rec| {
                Ok(match rec {
                    LayerRecord::Dense { w, b } => {
                        let rows = w.len();
                        let cols = w.first().map_or(0, Vec::len);
                        if w.iter().any(|r| r.len() != cols) {
                            return Err(Error::Format("ragged weight matrix".into()));
                        }
                        let flat: Vec<f64> = w.into_iter().flatten().collect();
                        Layer::Dense(Dense {
                            weights: Array2::from_shape_vec((rows, cols), flat)
                                .map_err(|e| Error::Format(e.to_string()))?,
                            bias: Array1::from(b),
                        })
                    }
                    LayerRecord::Bn {
                        gamma,
                        beta,
                        mean,
                        var,
                        count,
                        eps,
                    } => {
                        let source = if count == 0.0 {
                            FeatureStats::empty(gamma.len())
                        } else {
                            FeatureStats::new(mean, var, count)?
                        };
                        Layer::BatchNorm(BatchNorm {
                            source,
                            gamma: Array1::from(gamma),
                            beta: Array1::from(beta),
                            eps,
                        })
                    }
                    LayerRecord::Relu => Layer::Relu,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers, ckpt.classes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::super::TrainSchedule;
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let data = crate::corrupt::make_dataset(1, 2, 3, 40).unwrap();
        let mut net = Network::default_mlp(3, 2, 2).unwrap();
        net.train(
            &data,
            &TrainSchedule {
                epochs: 2,
                ..TrainSchedule::default()
            },
        )
        .unwrap();
        let text = net.to_json().unwrap();
        let back = Network::from_json(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn untrained_network_round_trips() {
        let net = Network::default_mlp(3, 2, 2).unwrap();
        assert_eq!(Network::from_json(&net.to_json().unwrap()).unwrap(), net);
    }

    #[test]
    fn layout_uses_documented_keys() {
        let net = Network::mlp(2, &[2], 2, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&net.to_json().unwrap()).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["classes"], 2);
        assert_eq!(v["layers"][0]["type"], "dense");
        assert_eq!(v["layers"][1]["type"], "bn");
        assert_eq!(v["layers"][1]["eps"], 1e-5);
        assert_eq!(v["layers"][2]["type"], "relu");
    }

    #[test]
    fn rejects_bad_input() {
        let net = Network::mlp(2, &[2], 2, 0).unwrap();
        let text = net.to_json().unwrap();
        assert!(Network::from_json(
            &text.replace("\"format_version\": 1", "\"format_version\": 2")
        )
        .is_err());
        assert!(Network::from_json(&text.replace("\"classes\": 2", "\"classes\": 3")).is_err());
        assert!(Network::from_json(&text.replacen("\"relu\"", "\"tanh\"", 1)).is_err());
        assert!(Network::from_json("{}").is_err());
    }
}
