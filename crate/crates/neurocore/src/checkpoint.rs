//! Versioned JSON checkpoints.
//!
//! Parameter values are written as 16-digit hexadecimal IEEE-754 bit
//! patterns so that a save/load round trip is bit-exact.

use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::error::NeuroError;
use crate::layers::{LayerSpec, Parameterized};
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexTensor {
    pub shape: Vec<usize>,
    pub data: Vec<String>,
}

impl HexTensor {
    pub fn encode(t: &Tensor) -> Self {
        Self {
            shape: t.shape().to_vec(),
            data: encode_values(t.data()),
        }
    }

    pub fn decode(&self) -> Result<Tensor, NeuroError> {
        let data = decode_values(&self.data)?;
        if self.shape.iter().product::<usize>() != data.len() || self.shape.contains(&0)
        {
            return Err(NeuroError::Checkpoint(format!(
                "bad tensor shape {:?}",
                self.shape
            )));
        }
        Ok(Tensor::new(self.shape.clone(), data))
    }
}

pub fn encode_f64(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

pub fn decode_f64(s: &str) -> Result<f64, NeuroError> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|e| NeuroError::Checkpoint(format!("bad hex value {s:?}: {e}")))
}

pub fn encode_values(values: &[f64]) -> Vec<String> {
    values.iter().map(|&v| encode_f64(v)).collect()
}

pub fn decode_values(values: &[String]) -> Result<Vec<f64>, NeuroError> {
    values.iter().map(|s| decode_f64(s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerRecord {
    pub alpha: String,
    pub beta1: String,
    pub beta2: String,
    pub eps: String,
    pub step_count: u64,
    pub m: Vec<Vec<String>>,
    pub v: Vec<Vec<String>>,
}

impl OptimizerRecord {
    pub fn encode(a: &AdamState) -> Self {
        Self {
            alpha: encode_f64(a.alpha),
            beta1: encode_f64(a.beta1),
            beta2: encode_f64(a.beta2),
            eps: encode_f64(a.eps),
            step_count: a.step_count,
            m: a.m.iter().map(|x| encode_values(x)).collect(),
            v: a.v.iter().map(|x| encode_values(x)).collect(),
        }
    }

    pub fn decode(&self) -> Result<AdamState, NeuroError> {
        Ok(AdamState {
            alpha: decode_f64(&self.alpha)?,
            beta1: decode_f64(&self.beta1)?,
            beta2: decode_f64(&self.beta2)?,
            eps: decode_f64(&self.eps)?,
            step_count: self.step_count,
            m: self
                .m
                .iter()
                .map(|x| decode_values(x))
                .collect::<Result<_, _>>()?,
            v: self
                .v
                .iter()
                .map(|x| decode_values(x))
                .collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub module: String,
    pub layers: Vec<LayerSpec>,
    pub parameters: Vec<HexTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerRecord>,
}

impl Checkpoint {
    pub fn capture(module: &str, net: &impl Parameterized, optimizer: Option<&AdamState>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            module: module.to_string(),
            layers: net.layer_specs(),
            parameters: net
                .parameters()
                .into_iter()
                .map(HexTensor::encode)
                .collect(),
            optimizer: optimizer.map(OptimizerRecord::encode),
        }
    }

    /// Copies the stored parameters into `net`, which must have the same
    /// layer layout.
    pub fn restore(
        &self,
        module: &str,
        net: &mut impl Parameterized,
    ) -> Result<Option<AdamState>, NeuroError> {
        if self.format_version != FORMAT_VERSION {
            return Err(NeuroError::Checkpoint(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.module != module {
            return Err(NeuroError::Checkpoint(format!(
                "checkpoint is for {:?}, not {module:?}",
                self.module
            )));
        }
        if self.layers != net.layer_specs() {
            return Err(NeuroError::Checkpoint("layer layout does not match".into()));
        }
        let tensors: Vec<Tensor> = self
            .parameters
            .iter()
            .map(HexTensor::decode)
            .collect::<Result<_, _>>()?;
        let mut targets = net.parameters_mut();
        if targets.len() != tensors.len() {
            return Err(NeuroError::Checkpoint(
                "parameter count does not match".into(),
            ));
        }
        for (dst, src) in targets.iter_mut().zip(tensors) {
            if dst.shape() != src.shape() {
                return Err(NeuroError::Checkpoint(format!(
                    "parameter shape {:?} vs {:?}",
                    dst.shape(),
                    src.shape()
                )));
            }
            **dst = src;
        }
        self.optimizer
            .as_ref()
            .map(OptimizerRecord::decode)
            .transpose()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, NeuroError> {
        serde_json::from_str(s).map_err(|e| NeuroError::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{Activation, GruCell, Mlp};
    use crate::rng::stream;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = stream(11, &[]);
        let net = Mlp::new(4, &[8], 3, Activation::Tanh, &mut rng);
        let mut adam = AdamState::new(&net.parameters(), 1e-3);
        adam.m[0][3] = 1.0 / 3.0;
        let ck = Checkpoint::capture("policy", &net, Some(&adam));
        let json = ck.to_json();
        let mut other = Mlp::new(4, &[8], 3, Activation::Tanh, &mut rng);
        let restored = Checkpoint::from_json(&json)
            .unwrap()
            .restore("policy", &mut other)
            .unwrap();
        assert_eq!(other, net);
        assert_eq!(restored.unwrap(), adam);
        assert_eq!(
            Checkpoint::capture("policy", &other, Some(&adam)).to_json(),
            json
        );
    }

    #[test]
    fn special_values_survive() {
        for v in [0.0, -0.0, f64::MIN_POSITIVE, 1e-310, f64::MAX, -1.5] {
            assert_eq!(decode_f64(&encode_f64(v)).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn version_and_layout_mismatch_refused() {
        let mut rng = stream(2, &[]);
        let net = GruCell::new(3, 4, &mut rng);
        let mut ck = Checkpoint::capture("gru", &net, None);
        let mut wrong = GruCell::new(3, 5, &mut rng);
        assert!(ck.restore("gru", &mut wrong).is_err());
        ck.format_version = 99;
        let mut same = GruCell::new(3, 4, &mut rng);
        assert!(matches!(
            ck.restore("gru", &mut same),
            Err(NeuroError::Checkpoint(_))
        ));
    }
}
