use std::fs;
use std::path::Path;

use super::config::TrainConfig;
use super::trainer::{train, BucketMetrics, StepLog, TrainState};
use crate::data::Dataset;
use crate::error::{config_err, Error, Result};
use crate::mpd::DownsampleKind;
use crate::nn::Module;
use crate::sandwich::BlockLayout;

/// Architectural variants compared under one seed and schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    Pd,
    Cd,
    NoFirstFfn,
    NoScalSpatial,
    AttnFfn,
    ThinSandwich,
    ConformerMidConv,
    Skip1x1,
    Emb7x7,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::Full,
        Variant::Pd,
        Variant::Cd,
        Variant::NoFirstFfn,
        Variant::NoScalSpatial,
        Variant::AttnFfn,
        Variant::ThinSandwich,
        Variant::ConformerMidConv,
        Variant::Skip1x1,
        Variant::Emb7x7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Pd => "pd",
            Variant::Cd => "cd",
            Variant::NoFirstFfn => "no-first-ffn",
            Variant::NoScalSpatial => "no-scal-spatial",
            Variant::AttnFfn => "attn-ffn",
            Variant::ThinSandwich => "thin-sandwich",
            Variant::ConformerMidConv => "conformer-mid-conv",
            Variant::Skip1x1 => "skip-1x1",
            Variant::Emb7x7 => "emb-7x7",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                config_err!(
                    "unknown variant {s:?}; expected one of {}",
                    names.join(", ")
                )
            })
    }

    /// `base` with this variant's change applied.
    pub fn apply(self, base: &TrainConfig) -> Result<TrainConfig> {
        let mut c = base.clone();
        let m = &mut c.model;
        match self {
            Variant::Full => {}
            Variant::Pd => m.downsample = DownsampleKind::Pd,
            Variant::Cd => m.downsample = DownsampleKind::Conv,
            // one attention layer followed by one FFN at the full expansion
            Variant::NoFirstFfn | Variant::AttnFfn => m.block_layout = BlockLayout::ScalFfn,
            Variant::NoScalSpatial => m.spatial_branch = false,
            Variant::ThinSandwich => {
                if m.ffn_expansion < 2 {
                    return Err(config_err!("thin-sandwich needs ffn_expansion >= 2"));
                }
                m.ffn_expansion /= 2;
            }
            Variant::ConformerMidConv => m.block_layout = BlockLayout::Conformer,
            Variant::Skip1x1 => m.last_skip_reduce = true,
            Variant::Emb7x7 => m.embed_kernel = 7,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub variant: Variant,
    pub parameters: usize,
    pub log: Vec<StepLog>,
    pub eval: Vec<BucketMetrics>,
}

pub const ABLATION_CSV_HEADER: &str = "variant,parameters,bucket,images,psnr,ssim,l1,masked_l1";

impl AblationResult {
    pub fn csv_rows(&self) -> Vec<String> {
        self.eval
            .iter()
            .map(|r| {
                format!(
                    "{},{},{}",
                    self.variant.name(),
                    self.parameters,
                    r.csv_row()
                )
            })
            .collect()
    }
}

/// Train `variant` from `base` into `out_dir/<variant>` and append its
/// per-bucket metrics to `out_dir/ablation.csv`.
pub fn run_ablation(
    base: &TrainConfig,
    variant: Variant,
    data: &Dataset,
    out_dir: &Path,
) -> Result<AblationResult> {
    let config = variant.apply(base)?;
    let state = TrainState::new(&config)?;
    let parameters = state.model.num_parameters();
    let outcome = train(state, data, &out_dir.join(variant.name()), &mut |_| {})?;
    let result = AblationResult {
        variant,
        parameters,
        log: outcome.log,
        eval: outcome.eval,
    };
    let csv = out_dir.join("ablation.csv");
    let mut text = if csv.exists() {
        fs::read_to_string(&csv).map_err(|e| Error::io(&csv, e))?
    } else {
        format!("{ABLATION_CSV_HEADER}\n")
    };
    for row in result.csv_rows() {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HintModel;

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(matches!(Variant::parse("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn thin_sandwich_matches_attn_ffn_size() {
        let base = TrainConfig::default();
        let count = |v: Variant| {
            HintModel::new(&v.apply(&base).unwrap().model, 0)
                .unwrap()
                .num_parameters() as f64
        };
        let (a, b) = (count(Variant::AttnFfn), count(Variant::ThinSandwich));
        assert!((a - b).abs() / a <= 0.02, "{a} vs {b}");
    }
}
