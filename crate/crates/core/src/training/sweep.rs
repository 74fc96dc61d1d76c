use std::fmt;
use std::str::FromStr;

use crate::data::Sample;
use crate::geometry::SamplingMode;
use crate::model::{Model, ModelConfig};

use super::config::TrainConfig;
use super::metrics::MEAN_CLASS;
use super::train::{evaluate_parallel, train, EvalOptions};
use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    Alpha,
    /// Region count M.
    Regions,
    /// Pattern count N.
    Patterns,
    SamplingMode,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::Regions => "M",
            SweepParameter::Patterns => "N",
            SweepParameter::SamplingMode => "sampling_mode",
        }
    }

    /// Applies `value` to copies of the configs, or explains why it is not
    /// usable.
    pub fn apply(self, value: &str, model: &ModelConfig, train: &TrainConfig) -> Result<(ModelConfig, TrainConfig), String> {
        let (mut m, mut t) = (model.clone(), train.clone());
        let int = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}` is not a count: {e}"));
        match self {
            SweepParameter::Alpha => {
                t.alpha = value.trim().parse().map_err(|e| format!("`{value}` is not a number: {e}"))?;
                t.validate().map_err(|e| e.to_string())?;
            }
            SweepParameter::Regions => m.regions = int(value)?,
            SweepParameter::Patterns => m.patterns = int(value)?,
            SweepParameter::SamplingMode => m.sampling_mode = value.trim().parse::<SamplingMode>()?,
        }
        m.validate().map_err(|e| e.to_string())?;
        Ok((m, t))
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alpha" => Ok(SweepParameter::Alpha),
            "M" | "regions" => Ok(SweepParameter::Regions),
            "N" | "patterns" => Ok(SweepParameter::Patterns),
            "sampling_mode" | "sampling" => Ok(SweepParameter::SamplingMode),
            other => Err(format!("unknown sweep parameter `{other}` (expected alpha, M, N or sampling_mode)")),
        }
    }
}

pub const SWEEP_HEADER: &str = "parameter,value,cd_seen,iou_seen,cd_unseen,iou_unseen,final_loss";

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub parameter: SweepParameter,
    pub value: String,
    pub cd_seen: Option<f64>,
    pub iou_seen: Option<f64>,
    pub cd_unseen: Option<f64>,
    pub iou_unseen: Option<f64>,
    /// Mean total loss over the last optimizer step.
    pub final_loss: f64,
}

impl SweepRow {
    pub fn csv_row(&self) -> String {
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.parameter,
            self.value.trim(),
            o(self.cd_seen),
            o(self.iou_seen),
            o(self.cd_unseen),
            o(self.iou_unseen),
            self.final_loss
        )
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Rejected values with the reason.
    pub skipped: Vec<(String, String)>,
}

pub struct SweepData<'a> {
    pub train: &'a [Sample],
    pub seen: &'a [Sample],
    pub unseen: &'a [Sample],
}

/// Trains and evaluates one fresh model per value, all on the same data.
pub fn sweep(
    parameter: SweepParameter,
    values: &[String],
    model: &ModelConfig,
    train_config: &TrainConfig,
    data: &SweepData<'_>,
) -> Result<SweepOutcome, TrainError> {
    let mut out = SweepOutcome::default();
    for value in values {
        let (mcfg, tcfg) = match parameter.apply(value, model, train_config) {
            Ok(c) => c,
            Err(reason) => {
                log::warn!("skipping {parameter}={value}: {reason}");
                out.skipped.push((value.clone(), reason));
                continue;
            }
        };
        let mut net = Model::new(mcfg, tcfg.seed)?;
        let report = train(&mut net, data.train, &[], &tcfg, |_| true)?;
        let opts = EvalOptions { epoch: report.epochs, alpha: tcfg.alpha, points: tcfg.eval_points };
        let mean = |set: &[Sample]| -> Result<(Option<f64>, Option<f64>), TrainError> {
            if set.is_empty() {
                return Ok((None, None));
            }
            let rows = evaluate_parallel(&net, set, "eval", &opts, tcfg.threads)?;
            let m = rows.iter().find(|r| r.class == MEAN_CLASS).expect("mean row of a nonempty set");
            Ok((Some(m.cd_eval), Some(m.iou)))
        };
        let (cd_seen, iou_seen) = mean(data.seen)?;
        let (cd_unseen, iou_unseen) = mean(data.unseen)?;
        let final_loss = report.step_losses.last().map_or(f64::NAN, |l| l.total);
        log::info!("{parameter}={value}: seen cd {cd_seen:?} unseen cd {cd_unseen:?}");
        out.rows.push(SweepRow {
            parameter,
            value: value.clone(),
            cd_seen,
            iou_seen,
            cd_unseen,
            iou_unseen,
            final_loss,
        });
    }
    if out.rows.is_empty() {
        let reasons: Vec<String> = out.skipped.iter().map(|(v, r)| format!("{v}: {r}")).collect();
        return Err(TrainError::Config(format!("no valid {parameter} value ({})", reasons.join("; "))));
    }
    Ok(out)
}
