use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::synth::{AGE_CATEGORIES, CHANNELS};

pub const LATENT_DIM: usize = 64;
pub const EMBED_DIM: usize = 32;
/// Channels of the 4×4 bottleneck shared by every network.
pub const BOTTLENECK: usize = 128;
pub const BOTTLENECK_SIDE: usize = 4;
pub const FLAT: usize = BOTTLENECK * BOTTLENECK_SIDE * BOTTLENECK_SIDE;
pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    Generator,
    Discriminator,
    Encoder,
    FaceRecognizer,
    AgeEstimator,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Generator,
        Architecture::Discriminator,
        Architecture::Encoder,
        Architecture::FaceRecognizer,
        Architecture::AgeEstimator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Generator => "generator",
            Architecture::Discriminator => "discriminator",
            Architecture::Encoder => "encoder",
            Architecture::FaceRecognizer => "fr",
            Architecture::AgeEstimator => "age",
        }
    }

    /// Width of the final dense layer of the downsampling networks.
    fn head_width(self) -> usize {
        match self {
            Architecture::Generator => 0,
            Architecture::Discriminator => 1,
            Architecture::Encoder => LATENT_DIM,
            Architecture::FaceRecognizer => EMBED_DIM,
            Architecture::AgeEstimator => AGE_CATEGORIES,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::UnknownArchitecture(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    /// Updated by the optimizer (running statistics are not).
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

fn spec(name: &str, shape: &[usize], kind: ParamKind) -> ParamSpec {
    ParamSpec {
        name: name.to_string(),
        shape: shape.to_vec(),
        kind,
    }
}

fn batch_norm_specs(prefix: &str, c: usize) -> Vec<ParamSpec> {
    vec![
        spec(&format!("{prefix}.gamma"), &[c], ParamKind::Gamma),
        spec(&format!("{prefix}.beta"), &[c], ParamKind::Beta),
        spec(
            &format!("{prefix}.running_mean"),
            &[c],
            ParamKind::RunningMean,
        ),
        spec(
            &format!("{prefix}.running_var"),
            &[c],
            ParamKind::RunningVar,
        ),
    ]
}

/// Parameter names and shapes, in checkpoint order.
pub fn registry(arch: Architecture) -> Vec<ParamSpec> {
    use ParamKind::*;
    let k = KERNEL;
    match arch {
        Architecture::Generator => {
            let mut v = vec![spec(
                "fc.weight",
                &[LATENT_DIM + AGE_CATEGORIES, FLAT],
                Weight,
            )];
            v.extend(batch_norm_specs("bn0", BOTTLENECK));
            v.push(spec("up1.weight", &[BOTTLENECK, 64, k, k], Weight));
            v.extend(batch_norm_specs("bn1", 64));
            v.push(spec("up2.weight", &[64, 32, k, k], Weight));
            v.extend(batch_norm_specs("bn2", 32));
            v.push(spec("up3.weight", &[32, CHANNELS, k, k], Weight));
            v.push(spec("up3.bias", &[CHANNELS], Bias));
            v
        }
        _ => {
            let cond = if arch == Architecture::Discriminator {
                AGE_CATEGORIES
            } else {
                0
            };
            let head = arch.head_width();
            vec![
                spec("conv1.weight", &[32, CHANNELS, k, k], Weight),
                spec("conv1.bias", &[32], Bias),
                spec("conv2.weight", &[64, 32 + cond, k, k], Weight),
                spec("conv2.bias", &[64], Bias),
                spec("conv3.weight", &[BOTTLENECK, 64, k, k], Weight),
                spec("conv3.bias", &[BOTTLENECK], Bias),
                spec("fc.weight", &[FLAT, head], Weight),
                spec("fc.bias", &[head], Bias),
            ]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::IMAGE_SIZE;

    #[test]
    fn names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
        }
        assert!(matches!(
            "vae".parse::<Architecture>(),
            Err(Error::UnknownArchitecture(_))
        ));
    }

    #[test]
    fn bottleneck_matches_three_stages() {
        assert_eq!(IMAGE_SIZE >> 3, BOTTLENECK_SIDE);
    }
}
