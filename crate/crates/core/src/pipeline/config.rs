use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    SlantedTriangular,
}

/// From `epoch` (1-based) on, the top `layers` LSTM layers train alongside the
/// head; `None` unfreezes the whole model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezeStep {
    pub epoch: usize,
    pub layers: Option<usize>,
}

/// Hyperparameters of one training stage. JSON files must carry exactly these keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub bptt_len: usize,
    pub lr_max: f64,
    pub schedule: Schedule,
    pub cut_frac: f64,
    pub ratio: f64,
    pub seed: u64,
    pub freeze_plan: Vec<FreezeStep>,
}

impl StageConfig {
    /// Language-model stages: Adam at 0.004 under a slanted triangular schedule.
    pub fn language_model() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            bptt_len: 35,
            lr_max: 0.004,
            schedule: Schedule::SlantedTriangular,
            cut_frac: 0.1,
            ratio: 32.0,
            seed: 42,
            freeze_plan: Vec::new(),
        }
    }

    /// Classifier stage for a dataset of `examples` sentences: five epochs at
    /// 1e-4, head first, then the top LSTM layer, then everything.
    pub fn classifier(examples: usize) -> Self {
        Self {
            epochs: 5,
            batch_size: if examples < 1000 { 32 } else { 64 },
            bptt_len: 70,
            lr_max: 1e-4,
            schedule: Schedule::Constant,
            cut_frac: 0.1,
            ratio: 32.0,
            seed: 42,
            freeze_plan: vec![
                FreezeStep { epoch: 1, layers: Some(0) },
                FreezeStep { epoch: 2, layers: Some(1) },
                FreezeStep { epoch: 3, layers: None },
            ],
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let config: Self =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.batch_size == 0 || self.bptt_len == 0 {
            return bad("batch_size and bptt_len must be positive".into());
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return bad(format!("lr_max must be positive, got {}", self.lr_max));
        }
        if self.schedule == Schedule::SlantedTriangular {
            if !(self.cut_frac > 0.0 && self.cut_frac < 1.0) {
                return bad(format!("cut_frac must lie in (0, 1), got {}", self.cut_frac));
            }
            if !(self.ratio >= 1.0 && self.ratio.is_finite()) {
                return bad(format!("ratio must be at least 1, got {}", self.ratio));
            }
        }
        if self.freeze_plan.windows(2).any(|w| w[0].epoch >= w[1].epoch) {
            return bad("freeze_plan epochs must be strictly increasing".into());
        }
        Ok(())
    }

    /// Unfrozen LSTM layers in `epoch` (1-based): the last plan entry that has
    /// started, or everything when no entry applies.
    pub fn unfrozen_layers(&self, epoch: usize) -> Option<usize> {
        self.freeze_plan
            .iter()
            .rev()
            .find(|s| s.epoch <= epoch)
            .and_then(|s| s.layers)
    }

    pub fn learning_rate(&self, step: usize, total: usize) -> Result<f64, PipelineError> {
        match self.schedule {
            Schedule::Constant => Ok(self.lr_max),
            Schedule::SlantedTriangular => slanted_triangular(step, total, self.lr_max, self.cut_frac, self.ratio),
        }
    }
}

/// Slanted triangular learning rate at iteration `t` of `total`.
///
/// `cut = ⌊T·cut_frac⌋`; `p = t/cut` while warming up, then
/// `1 − (t − cut)/(cut·(1/cut_frac − 1))`, clamped at 0;
/// `lr = lr_max·(1 + p·(ratio − 1))/ratio`. With `cut = 0` there is no warm-up
/// and the decay spans all `T` iterations.
pub fn slanted_triangular(t: usize, total: usize, lr_max: f64, cut_frac: f64, ratio: f64) -> Result<f64, PipelineError> {
    if total == 0 {
        return Err(PipelineError::Config("schedule needs at least one iteration".into()));
    }
    let cut = (total as f64 * cut_frac).floor();
    let t = t as f64;
    let p = if t < cut {
        t / cut
    } else if cut == 0.0 {
        1.0 - t / total as f64
    } else {
        1.0 - (t - cut) / (cut * (1.0 / cut_frac - 1.0))
    };
    Ok(lr_max * (1.0 + p.max(0.0) * (ratio - 1.0)) / ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_endpoints() {
        let lr = |t| slanted_triangular(t, 1000, 0.01, 0.1, 32.0).unwrap();
        assert!((lr(0) - 0.01 / 32.0).abs() < 1e-18);
        assert!((lr(100) - 0.01).abs() < 1e-18);
        assert!((lr(1000) - 0.01 / 32.0).abs() < 1e-18);
        assert!(lr(50) > lr(0) && lr(50) < lr(100));
    }

    #[test]
    fn zero_iterations_rejected() {
        assert!(slanted_triangular(0, 0, 0.01, 0.1, 32.0).is_err());
    }

    #[test]
    fn tiny_schedules_stay_in_range() {
        for total in 1..12 {
            for t in 0..=total {
                let lr = slanted_triangular(t, total, 1.0, 0.1, 32.0).unwrap();
                assert!((1.0 / 32.0..=1.0).contains(&lr), "T={total} t={t} lr={lr}");
            }
        }
    }

    #[test]
    fn config_json_has_exactly_the_documented_keys() {
        let json = serde_json::to_value(StageConfig::classifier(10)).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["batch_size", "bptt_len", "cut_frac", "epochs", "freeze_plan", "lr_max", "ratio", "schedule", "seed"]
        );
        let mut extra = json.clone();
        extra["momentum"] = serde_json::json!(0.9);
        assert!(serde_json::from_value::<StageConfig>(extra).is_err());
        let mut missing = json;
        missing.as_object_mut().unwrap().remove("seed");
        assert!(serde_json::from_value::<StageConfig>(missing).is_err());
    }

    #[test]
    fn default_freeze_plan() {
        let c = StageConfig::classifier(500);
        assert_eq!(c.batch_size, 32);
        assert_eq!(StageConfig::classifier(5000).batch_size, 64);
        assert_eq!(c.unfrozen_layers(1), Some(0));
        assert_eq!(c.unfrozen_layers(2), Some(1));
        assert_eq!(c.unfrozen_layers(3), None);
        assert_eq!(c.unfrozen_layers(5), None);
        assert_eq!(StageConfig::language_model().unfrozen_layers(1), None);
    }

    proptest! {
        #[test]
        fn schedule_bounded_and_peaks_at_cut(total in 1usize..5000, frac in 0.01f64..0.9, ratio in 1.0f64..100.0, lr_max in 1e-6f64..1.0) {
            let cut = (total as f64 * frac).floor() as usize;
            let mut prev = None;
            for t in 0..=total {
                let lr = slanted_triangular(t, total, lr_max, frac, ratio).unwrap();
                prop_assert!(lr <= lr_max * (1.0 + 1e-12));
                prop_assert!(lr >= lr_max / ratio * (1.0 - 1e-12));
                if let Some(p) = prev {
                    if t <= cut { prop_assert!(lr >= p); } else { prop_assert!(lr <= p); }
                }
                prev = Some(lr);
            }
            if cut > 0 {
                let peak = slanted_triangular(cut, total, lr_max, frac, ratio).unwrap();
                prop_assert!((peak - lr_max).abs() <= 1e-12 * lr_max);
            }
        }
    }
}
