use serde::{Deserialize, Serialize};

use super::model::argmax;
use super::CLASSES;
use crate::domain::TriggerState;
use crate::error::TapError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "level", rename_all = "snake_case")]
pub enum TriggerDecision {
    Fire(TriggerState),
    Suppressed(TriggerState),
    Silent,
}

/// Turns gate probabilities into fire/suppress decisions with per-level cooldowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerPolicy {
    pub threshold_high: f64,
    pub cooldown_high_ms: u64,
    pub cooldown_mid_ms: u64,
    #[serde(skip)]
    last_fire_high: Option<u64>,
    #[serde(skip)]
    last_fire_mid: Option<u64>,
}

impl Default for TriggerPolicy {
    fn default() -> Self {
        Self {
            threshold_high: 0.5,
            cooldown_high_ms: 5000,
            cooldown_mid_ms: 15000,
            last_fire_high: None,
            last_fire_mid: None,
        }
    }
}

impl TriggerPolicy {
    pub fn validate(&self) -> Result<(), TapError> {
        if !(self.threshold_high > 0.0 && self.threshold_high < 1.0) {
            return Err(TapError::Config(format!("threshold_high {} must be in (0, 1)", self.threshold_high)));
        }
        if self.cooldown_high_ms == 0 || self.cooldown_mid_ms == 0 {
            return Err(TapError::Config("cooldowns must be positive".into()));
        }
        Ok(())
    }

    pub fn last_fire(&self, level: TriggerState) -> Option<u64> {
        match level {
            TriggerState::High => self.last_fire_high,
            TriggerState::Mid => self.last_fire_mid,
            TriggerState::Low => None,
        }
    }

    pub fn reset(&mut self) {
        self.last_fire_high = None;
        self.last_fire_mid = None;
    }

    fn cooled(&self, level: TriggerState, now_ms: u64) -> bool {
        let cooldown = match level {
            TriggerState::High => self.cooldown_high_ms,
            _ => self.cooldown_mid_ms,
        };
        self.last_fire(level).is_none_or(|t| now_ms.saturating_sub(t) >= cooldown)
    }
}

pub fn decide_trigger(probs: &[f64; CLASSES], now_ms: u64, policy: &mut TriggerPolicy) -> TriggerDecision {
    let level = argmax(probs);
    let allowed = match level {
        TriggerState::Low => return TriggerDecision::Silent,
        TriggerState::High => probs[2] >= policy.threshold_high && policy.cooled(level, now_ms),
        TriggerState::Mid => policy.cooled(level, now_ms),
    };
    if !allowed {
        return TriggerDecision::Suppressed(level);
    }
    match level {
        TriggerState::High => policy.last_fire_high = Some(now_ms),
        _ => policy.last_fire_mid = Some(now_ms),
    }
    TriggerDecision::Fire(level)
}
