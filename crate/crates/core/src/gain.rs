//! Cost of a case with and without the intervention, and the net gain of
//! intervening.
//!
//! ```text
//! cost_no_treat = p_uout * c_uout
//! cost_treat    = (p_uout - cate) * c_uout + c_t1
//! gain          = cost_no_treat - cost_treat
//! ```
//!
//! A case is eligible for the intervention only when `p_uout > tau` and
//! `cate > 0`, both strict.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GainError {
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("invalid cost parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Cost of a case ending in the undesired outcome.
    pub c_uout: f64,
    /// Cost of applying the intervention once.
    pub c_t1: f64,
    /// Probability threshold.
    pub tau: f64,
}

impl CostParams {
    pub fn new(c_uout: f64, c_t1: f64, tau: f64) -> Result<Self, GainError> {
        let p = Self { c_uout, c_t1, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GainError> {
        if !(self.c_uout.is_finite() && self.c_uout >= 0.0) {
            return Err(GainError::Params(format!("c_uout = {} must be >= 0", self.c_uout)));
        }
        if !(self.c_t1.is_finite() && self.c_t1 >= 0.0) {
            return Err(GainError::Params(format!("c_t1 = {} must be >= 0", self.c_t1)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(GainError::Params(format!("tau = {} outside [0, 1]", self.tau)));
        }
        Ok(())
    }
}

fn check_probability(p: f64) -> Result<(), GainError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GainError::Probability(p))
    }
}

pub fn cost_no_treat(p_uout: f64, params: &CostParams) -> Result<f64, GainError> {
    check_probability(p_uout)?;
    Ok(p_uout * params.c_uout)
}

pub fn cost_treat(p_uout: f64, cate: f64, params: &CostParams) -> Result<f64, GainError> {
    check_probability(p_uout)?;
    Ok((p_uout - cate) * params.c_uout + params.c_t1)
}

/// Net gain of intervening. Computed as the difference of the two costs;
/// algebraically it reduces to `cate * c_uout - c_t1`.
pub fn gain(p_uout: f64, cate: f64, params: &CostParams) -> Result<f64, GainError> {
    Ok(cost_no_treat(p_uout, params)? - cost_treat(p_uout, cate, params)?)
}

pub fn is_eligible(p_uout: f64, cate: f64, params: &CostParams) -> bool {
    p_uout > params.tau && cate > 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainAssessment {
    pub case_id: String,
    pub p_uout: f64,
    pub cate: f64,
    pub cost_no_treat: f64,
    /// Only computed for eligible cases.
    pub cost_treat: Option<f64>,
    /// Only computed for eligible cases.
    pub gain: Option<f64>,
    pub eligible: bool,
    pub assessed_at: DateTime<Utc>,
}

pub fn assess(
    case_id: &str,
    p_uout: f64,
    cate: f64,
    params: &CostParams,
    now: DateTime<Utc>,
) -> Result<GainAssessment, GainError> {
    let no_treat = cost_no_treat(p_uout, params)?;
    let eligible = is_eligible(p_uout, cate, params);
    let (treat, g) = if eligible {
        let treat = cost_treat(p_uout, cate, params)?;
        (Some(treat), Some(no_treat - treat))
    } else {
        (None, None)
    };
    Ok(GainAssessment {
        case_id: case_id.to_string(),
        p_uout,
        cate,
        cost_no_treat: no_treat,
        cost_treat: treat,
        gain: g,
        eligible,
        assessed_at: now,
    })
}
