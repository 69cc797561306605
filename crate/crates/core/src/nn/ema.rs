//! Exponential moving average of network weights.

use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use crate::error::{shape_err, Error, Result};

pub const DEFAULT_EMA_DECAY: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaState {
    pub shadow: MlpParams,
    pub decay: f64,
    /// Number of updates applied so far; drives the warm-up in
    /// [`EmaState::warmup_decay`].
    pub updates: u64,
}

impl EmaState {
    pub fn new(live: &MlpParams, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::Config(format!("EMA decay {decay} outside [0, 1]")));
        }
        Ok(Self {
            shadow: live.clone(),
            decay,
            updates: 0,
        })
    }

    /// Decay for the next update, ramped as `min(decay, (1+n)/(10+n))` so the
    /// shadow does not hold on to the initial weights during short runs.
    pub fn warmup_decay(&self) -> f64 {
        let n = self.updates as f64;
        self.decay.min((1.0 + n) / (10.0 + n))
    }

    /// `shadow ← decay·shadow + (1−decay)·live` with the configured decay.
    pub fn update(&mut self, live: &MlpParams) -> Result<()> {
        self.update_with(live, self.decay)
    }

    /// Same as [`EmaState::update`] with the warm-up decay.
    pub fn update_warm(&mut self, live: &MlpParams) -> Result<()> {
        self.update_with(live, self.warmup_decay())
    }

    pub fn update_with(&mut self, live: &MlpParams, decay: f64) -> Result<()> {
        if !self.shadow.same_shape(live) {
            return Err(shape_err("EMA shadow and live parameters differ in shape"));
        }
        let keep = 1.0 - decay;
        for (s_block, l_block) in self.shadow.blocks_mut().zip(live.blocks()) {
            for (s, &l) in s_block.iter_mut().zip(l_block) {
                *s = decay * *s + keep * l;
            }
        }
        self.updates += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpSpec};
    use proptest::prelude::*;

    fn filled(v: f64) -> MlpParams {
        let spec = MlpSpec::new(2, vec![3], 1, Activation::ReLU).unwrap();
        let n = spec.param_count();
        MlpParams::from_flat(spec, &vec![v; n]).unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let live = filled(2.0);
        let mut ema = EmaState::new(&filled(0.0), 0.0).unwrap();
        ema.update(&live).unwrap();
        assert_eq!(ema.shadow, live);

        let mut ema = EmaState::new(&filled(0.0), 1.0).unwrap();
        ema.update(&live).unwrap();
        assert_eq!(ema.shadow, filled(0.0));

        let mut ema = EmaState::new(&filled(0.0), 0.5).unwrap();
        ema.update(&live).unwrap();
        assert_eq!(ema.shadow, filled(1.0));
    }

    #[test]
    fn shape_mismatch() {
        let mut ema = EmaState::new(&filled(0.0), 0.9).unwrap();
        let other = MlpParams::zeros(MlpSpec::new(2, vec![4], 1, Activation::ReLU).unwrap()).unwrap();
        assert!(ema.update(&other).is_err());
        assert!(EmaState::new(&other, 1.5).is_err());
    }

    #[test]
    fn warmup_ramps_to_configured_decay() {
        let mut ema = EmaState::new(&filled(0.0), 0.999).unwrap();
        assert!((ema.warmup_decay() - 0.1).abs() < 1e-15);
        ema.updates = 1_000_000;
        assert_eq!(ema.warmup_decay(), 0.999);
    }

    proptest! {
        #[test]
        fn shadow_is_convex_combination(prev in -10.0f64..10.0, live in -10.0f64..10.0, decay in 0.0f64..=1.0) {
            let mut ema = EmaState::new(&filled(prev), decay).unwrap();
            ema.update(&filled(live)).unwrap();
            let (lo, hi) = (prev.min(live), prev.max(live));
            for &s in &ema.shadow.to_flat() {
                prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
            }
        }
    }
}
