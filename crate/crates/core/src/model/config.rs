use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONV_CHANNELS: [usize; 4] = [32, 64, 96, 96];
pub const KERNEL: usize = 3;
pub const HIDDEN_SIZE: usize = 128;
pub const FC_SIZE: usize = 128;
pub const N_CLASSES: usize = 2;
/// Width of the additive attention scoring layer.
pub const ATTENTION_SIZE: usize = 128;
pub const DEFAULT_DILATION: usize = 2;
pub const DEFAULT_SLICE_LENGTH: usize = 8;
pub const DEFAULT_SLICE_STRIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Separate-channel CNN, BiLSTM over ROIs, last step to the classifier.
    #[serde(rename = "SCCNN_RNN")]
    SccnnRnn,
    /// SCCNN-RNN with pairwise attention over all BiLSTM steps.
    #[serde(rename = "ASCRNN")]
    Ascrnn,
    /// ASCRNN with a dilated encoder and a skip connection.
    #[serde(rename = "ASDRNN")]
    Asdrnn,
    /// ASCRNN whose BiLSTM runs over overlapping ROI windows.
    #[serde(rename = "ASSRNN")]
    Assrnn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::SccnnRnn, Variant::Ascrnn, Variant::Asdrnn, Variant::Assrnn];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SccnnRnn => "SCCNN_RNN",
            Variant::Ascrnn => "ASCRNN",
            Variant::Asdrnn => "ASDRNN",
            Variant::Assrnn => "ASSRNN",
        }
    }

    pub fn has_attention(self) -> bool {
        !matches!(self, Variant::SccnnRnn)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        match norm.as_str() {
            "SCCNN_RNN" | "SCCNNRNN" => Ok(Variant::SccnnRnn),
            "ASCRNN" => Ok(Variant::Ascrnn),
            "ASDRNN" => Ok(Variant::Asdrnn),
            "ASSRNN" => Ok(Variant::Assrnn),
            _ => Err(Error::Config(format!("unknown model variant {s:?}"))),
        }
    }
}

/// Window length and step of the sliced BiLSTM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slicing {
    pub length: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub conv_channels: [usize; 4],
    pub kernel: usize,
    pub hidden_size: usize,
    pub fc_size: usize,
    pub dilation: Option<usize>,
    pub slicing: Option<Slicing>,
    pub n_classes: usize,
}

impl ModelConfig {
    /// Default configuration of `variant`.
    pub fn new(variant: Variant) -> Self {
        ModelConfig {
            variant,
            conv_channels: CONV_CHANNELS,
            kernel: KERNEL,
            hidden_size: HIDDEN_SIZE,
            fc_size: FC_SIZE,
            dilation: (variant == Variant::Asdrnn).then_some(DEFAULT_DILATION),
            slicing: (variant == Variant::Assrnn).then_some(Slicing {
                length: DEFAULT_SLICE_LENGTH,
                stride: DEFAULT_SLICE_STRIDE,
            }),
            n_classes: N_CLASSES,
        }
    }

    pub fn sccnn_rnn() -> Self {
        Self::new(Variant::SccnnRnn)
    }

    pub fn ascrnn() -> Self {
        Self::new(Variant::Ascrnn)
    }

    pub fn asdrnn() -> Self {
        Self::new(Variant::Asdrnn)
    }

    pub fn assrnn(length: usize, stride: usize) -> Self {
        ModelConfig {
            slicing: Some(Slicing { length, stride }),
            ..Self::new(Variant::Assrnn)
        }
    }

    /// Dilation of every encoder convolution.
    pub fn encoder_dilation(&self) -> usize {
        self.dilation.unwrap_or(1)
    }

    /// Shortest admissible series length for the encoder.
    pub fn min_time_len(&self) -> usize {
        self.conv_channels.len() * (self.kernel - 1) * self.encoder_dilation() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let fixed = [
            (self.conv_channels == CONV_CHANNELS, "conv_channels must be [32, 64, 96, 96]"),
            (self.kernel == KERNEL, "kernel must be 3"),
            (self.hidden_size == HIDDEN_SIZE, "hidden_size must be 128"),
            (self.fc_size == FC_SIZE, "fc_size must be 128"),
            (self.n_classes == N_CLASSES, "n_classes must be 2"),
        ];
        if let Some((_, msg)) = fixed.iter().find(|(ok, _)| !ok) {
            return Err(Error::Config(msg.to_string()));
        }
        match (self.variant, self.dilation) {
            (Variant::Asdrnn, Some(d)) if d >= 1 => {}
            (Variant::Asdrnn, _) => return Err(Error::Config("ASDRNN needs a positive dilation".into())),
            (_, Some(_)) => {
                return Err(Error::Config(format!("dilation is only valid for ASDRNN, not {}", self.variant)))
            }
            _ => {}
        }
        match (self.variant, self.slicing) {
            (Variant::Assrnn, Some(s)) if s.stride >= 1 && s.stride <= s.length => {}
            (Variant::Assrnn, Some(s)) => {
                return Err(Error::Config(format!(
                    "slicing needs 1 <= stride <= length, got length {} stride {}",
                    s.length, s.stride
                )))
            }
            (Variant::Assrnn, None) => return Err(Error::Config("ASSRNN needs slicing parameters".into())),
            (_, Some(_)) => {
                return Err(Error::Config(format!("slicing is only valid for ASSRNN, not {}", self.variant)))
            }
            _ => {}
        }
        Ok(())
    }
}
