//! The full network: Wavegram/ResWavegram frontend feeding the Resnet
//! backbone, plus named parameter snapshots.

use crate::backbone::{Backbone, BackboneConfig, Logits};
use crate::config::{ConfigError, KeyValues};
use crate::frontend::{Frontend, FrontendConfig, Variant};
use crate::nn::{Module, ParamKind, Visitor};
use crate::ops::Mode;
use crate::tensor::{Scalar, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub frontend: FrontendConfig,
    pub backbone: BackboneConfig,
}

impl ModelConfig {
    /// Backbone input channels follow the frontend group count.
    pub fn new(frontend: FrontendConfig) -> Self {
        Self {
            frontend,
            backbone: BackboneConfig::with_in_channels(frontend.cg),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.frontend.validate()?;
        self.backbone.validate()?;
        if self.backbone.in_channels != self.frontend.cg {
            return Err(ConfigError::new(format!(
                "backbone in_channels {} does not match cg {}",
                self.backbone.in_channels, self.frontend.cg
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let f = &self.frontend;
        let b = &self.backbone;
        let list = |xs: &[usize]| xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut kv = KeyValues::default();
        kv.insert("variant", f.variant);
        kv.insert("c1", f.c1);
        kv.insert("c2", f.c2);
        kv.insert("c3", f.c3);
        kv.insert("cg", f.cg);
        kv.insert("stem_out", f.stem_out);
        kv.insert("stem_kernel", f.stem_kernel);
        kv.insert("input_len", f.input_len);
        kv.insert("stage_channels", list(&b.stage_channels));
        kv.insert("stage_blocks", list(&b.stage_blocks));
        kv.insert("embed_dim", b.embed_dim);
        kv.insert("n_classes", b.n_classes);
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        fn list(kv: &KeyValues, key: &str) -> Result<[usize; 4], ConfigError> {
            let raw: String = kv.require(key)?;
            let parsed: Result<Vec<usize>, _> = raw.split(',').map(|s| s.trim().parse()).collect();
            parsed
                .ok()
                .and_then(|v| <[usize; 4]>::try_from(v).ok())
                .ok_or_else(|| ConfigError::new(format!("{key} must be 4 comma-separated integers")))
        }
        let frontend = FrontendConfig {
            c1: kv.require("c1")?,
            c2: kv.require("c2")?,
            c3: kv.require("c3")?,
            cg: kv.require("cg")?,
            variant: kv.require::<Variant>("variant")?,
            stem_out: kv.require("stem_out")?,
            stem_kernel: kv.require("stem_kernel")?,
            input_len: kv.require("input_len")?,
        };
        let backbone = BackboneConfig {
            in_channels: frontend.cg,
            stage_channels: list(kv, "stage_channels")?,
            stage_blocks: list(kv, "stage_blocks")?,
            embed_dim: kv.require("embed_dim")?,
            n_classes: kv.require("n_classes")?,
        };
        let cfg = Self { frontend, backbone };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A named tensor in a snapshot; buffers are running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub trainable: bool,
    pub value: Tensor<T>,
}

/// Every parameter and batch-norm buffer of a model in visit order, plus
/// the configuration that created them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub tensors: Vec<NamedTensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.value)
    }
}

#[derive(Debug, Clone)]
pub struct RwResnet<T> {
    config: ModelConfig,
    pub frontend: Frontend<T>,
    pub backbone: Backbone<T>,
}

impl<T: Scalar> RwResnet<T> {
    pub fn new(config: ModelConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            frontend: Frontend::new(config.frontend)?,
            backbone: Backbone::new(config.backbone.clone())?,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// `[B, 1, input_len]` waveforms to `[B, 2]` logits.
    pub fn forward(&mut self, wave: Tensor<T>, mode: Mode) -> Result<Logits<T>, TensorError> {
        let fm = self.frontend.forward(wave, mode)?;
        self.backbone.forward(fm.data, mode)
    }

    /// Accumulates parameter gradients; returns the waveform gradient.
    pub fn backward(&mut self, d_logits: Tensor<T>) -> Result<Tensor<T>, TensorError> {
        let d = self.backbone.backward(d_logits)?;
        self.frontend.backward(d)
    }

    pub fn snapshot(&mut self) -> ModelParams<T> {
        struct Collect<T>(Vec<NamedTensor<T>>);
        impl<T: Scalar> Visitor<T> for Collect<T> {
            fn param(&mut self, name: &str, _: ParamKind, value: &mut Tensor<T>, _: &mut Tensor<T>) {
                self.0.push(NamedTensor {
                    name: name.to_string(),
                    trainable: true,
                    value: value.clone(),
                });
            }
            fn buffer(&mut self, name: &str, value: &mut Tensor<T>) {
                self.0.push(NamedTensor {
                    name: name.to_string(),
                    trainable: false,
                    value: value.clone(),
                });
            }
        }
        let mut c = Collect(Vec::new());
        self.visit("", &mut c);
        ModelParams {
            config: self.config.clone(),
            tensors: c.0,
        }
    }

    /// Copies a snapshot into the model. Names and shapes must match
    /// exactly; the error names the first tensor that does not.
    pub fn load_params(&mut self, params: &ModelParams<T>) -> Result<(), TensorError> {
        struct Load<'a, T> {
            src: &'a [NamedTensor<T>],
            next: usize,
            err: Option<TensorError>,
        }
        impl<T: Scalar> Load<'_, T> {
            fn copy(&mut self, name: &str, value: &mut Tensor<T>) {
                if self.err.is_some() {
                    return;
                }
                match self.src.get(self.next) {
                    Some(t) if t.name == name && t.value.shape() == value.shape() => {
                        value.data_mut().copy_from_slice(t.value.data());
                    }
                    Some(t) if t.name == name => {
                        self.err = Some(TensorError::invalid(
                            "load_params",
                            format!(
                                "tensor {name}: checkpoint shape {:?}, model shape {:?}",
                                t.value.shape(),
                                value.shape()
                            ),
                        ));
                    }
                    other => {
                        let found = other.map_or("<end of checkpoint>", |t| t.name.as_str());
                        self.err = Some(TensorError::invalid(
                            "load_params",
                            format!("tensor {name}: missing from checkpoint (found {found})"),
                        ));
                    }
                }
                self.next += 1;
            }
        }
        impl<T: Scalar> Visitor<T> for Load<'_, T> {
            fn param(&mut self, name: &str, _: ParamKind, value: &mut Tensor<T>, _: &mut Tensor<T>) {
                self.copy(name, value);
            }
            fn buffer(&mut self, name: &str, value: &mut Tensor<T>) {
                self.copy(name, value);
            }
        }
        // validate on a scratch copy so a failed load leaves the model intact
        let mut scratch = self.clone();
        let mut l = Load {
            src: &params.tensors,
            next: 0,
            err: None,
        };
        scratch.visit("", &mut l);
        if let Some(e) = l.err {
            return Err(e);
        }
        if let Some(extra) = params.tensors.get(l.next) {
            return Err(TensorError::invalid(
                "load_params",
                format!("tensor {}: not present in the model", extra.name),
            ));
        }
        *self = scratch;
        Ok(())
    }
}

impl<T: Scalar> Module<T> for RwResnet<T> {
    fn visit(&mut self, prefix: &str, v: &mut dyn Visitor<T>) {
        self.frontend.visit(&crate::nn::join(prefix, "frontend"), v);
        self.backbone.visit(&crate::nn::join(prefix, "backbone"), v);
    }
}
