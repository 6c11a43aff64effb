//! Global parameters and threshold functions.
//!
//! Everything here is generic over the floating-point scalar. The algorithms
//! run on `f64` through the [`Profile`](crate::Profile) alias.
//!
//! Two profiles are built in:
//!
//! | field            | paper                  | desk                   |
//! |------------------|------------------------|------------------------|
//! | `alpha_coeff`    | 96                     | 2                      |
//! | `mu_r_value`     | `1 / (10^6 ln n)`      | `min(1/2, 1 / ln n)`   |
//! | loop guard       | `(n/S)(200 ln n)^32`   | `(n/S) * 2`            |
//! | phases per block | `ceil(1/16 log_{120a})`| `ceil(1/4 log_2)`      |
//! | `overflow_factor`| 8                      | 8                      |
//!
//! The `paper` profile constants keep the compression loop idle for every feasible `n`;
//! the desk constants let it run at `n` around `10^5`.

use std::collections::BTreeMap;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Paper,
    Desk,
    Custom,
}

/// Whether the loop-guard base is multiplied by `ln n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardScale {
    /// `(n/S) * (loop_base * ln n)^loop_exp`
    LogN,
    /// `(n/S) * loop_base^loop_exp`
    Unit,
}

/// Logarithm base used to count the phases emulated per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauBase {
    /// `tau_base_coeff * alpha`
    AlphaScaled,
    /// `2 * tau_base_coeff`
    Halving,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamProfile<T> {
    pub name: ProfileName,
    /// Global vertex count every function depends on.
    pub n: T,
    pub alpha_coeff: T,
    pub mu_r_value: T,
    pub loop_base: T,
    pub loop_exp: T,
    pub guard_scale: GuardScale,
    pub tau_base_coeff: T,
    pub tau_base: TauBase,
    pub tau_frac: T,
    pub overflow_factor: T,
}

fn c<T: FromPrimitive>(x: f64) -> T {
    T::from_f64(x).expect("constant representable")
}

impl<T: Float + FromPrimitive> ParamProfile<T> {
    pub fn paper(n: T) -> Self {
        Self {
            name: ProfileName::Paper,
            n,
            alpha_coeff: c(96.0),
            mu_r_value: T::one() / (c::<T>(1e6) * n.ln()),
            loop_base: c(200.0),
            loop_exp: c(32.0),
            guard_scale: GuardScale::LogN,
            tau_base_coeff: c(120.0),
            tau_base: TauBase::AlphaScaled,
            tau_frac: c(1.0 / 16.0),
            overflow_factor: c(8.0),
        }
    }

    pub fn desk(n: T) -> Self {
        Self {
            name: ProfileName::Desk,
            n,
            alpha_coeff: c(2.0),
            mu_r_value: (T::one() / n.ln()).min(c(0.5)),
            loop_base: c(2.0),
            loop_exp: T::one(),
            guard_scale: GuardScale::Unit,
            tau_base_coeff: T::one(),
            tau_base: TauBase::Halving,
            tau_frac: c(0.25),
            overflow_factor: c(8.0),
        }
    }

    /// Same constants re-derived for another vertex count. `mu_r_value` is
    /// recomputed for the built-in profiles and kept as is for custom ones.
    pub fn with_n(&self, n: T) -> Self {
        let mut p = *self;
        p.n = n;
        match self.name {
            ProfileName::Paper => p.mu_r_value = Self::paper(n).mu_r_value,
            ProfileName::Desk => p.mu_r_value = Self::desk(n).mu_r_value,
            ProfileName::Custom => {}
        }
        p
    }

    /// `alpha_coeff * ln n`.
    pub fn alpha(&self) -> T {
        self.alpha_coeff * self.n.ln()
    }

    pub fn mu_r(&self) -> T {
        self.mu_r_value
    }

    pub fn mu_h(&self, r: T) -> T {
        mu_h(r, self.alpha())
    }

    pub fn mu_f(&self, r: T) -> T {
        mu_f(r)
    }

    pub fn tau_log_base(&self) -> T {
        match self.tau_base {
            TauBase::AlphaScaled => self.tau_base_coeff * self.alpha(),
            TauBase::Halving => c::<T>(2.0) * self.tau_base_coeff,
        }
    }

    /// Phases emulated in one block: `max(1, ceil(tau_frac * log_base(delta / m)))`.
    pub fn num_phases(&self, delta: T, machines: usize) -> usize {
        let ratio = delta / T::from_usize(machines.max(1)).expect("machine count");
        if ratio <= T::one() {
            return 1;
        }
        let raw = (self.tau_frac * ratio.ln() / self.tau_log_base().ln()).ceil();
        raw.to_usize().unwrap_or(usize::MAX).max(1)
    }

    /// `ln` of the loop-guard threshold `(n/S) * (loop_base * scale)^loop_exp`.
    pub fn loop_threshold_ln(&self, space: T) -> T {
        let base = match self.guard_scale {
            GuardScale::LogN => self.loop_base * self.n.ln(),
            GuardScale::Unit => self.loop_base,
        };
        (self.n / space).ln() + self.loop_exp * base.ln()
    }

    /// Whether another compression block runs at threshold `delta`.
    ///
    /// The threshold is compared directly when it is finite, and in log space
    /// when it overflows the scalar.
    pub fn loop_guard(&self, delta: T, space: T) -> bool {
        let base = match self.guard_scale {
            GuardScale::LogN => self.loop_base * self.n.ln(),
            GuardScale::Unit => self.loop_base,
        };
        let threshold = self.n / space * base.powf(self.loop_exp);
        if threshold.is_finite() {
            delta >= threshold
        } else {
            delta.ln() >= self.loop_threshold_ln(space)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, value: T, reason: &'static str| Error::InvalidOverride {
            field: field.to_string(),
            value: value.to_f64().unwrap_or(f64::NAN),
            reason,
        };
        if !(self.n >= c(2.0)) {
            return Err(bad("n", self.n, "need n >= 2"));
        }
        if !(self.mu_r_value > T::zero() && self.mu_r_value <= c(0.5)) {
            return Err(bad("mu_r_value", self.mu_r_value, "must lie in (0, 1/2]"));
        }
        if !(self.alpha() > T::one()) {
            return Err(bad("alpha_coeff", self.alpha_coeff, "alpha(n) must exceed 1"));
        }
        if !(self.tau_frac > T::zero() && self.tau_frac <= T::one()) {
            return Err(bad("tau_frac", self.tau_frac, "must lie in (0, 1]"));
        }
        if !(self.overflow_factor >= T::one()) {
            return Err(bad("overflow_factor", self.overflow_factor, "must be at least 1"));
        }
        if !(self.loop_base > T::zero()) {
            return Err(bad("loop_base", self.loop_base, "must be positive"));
        }
        if !(self.loop_exp >= T::zero()) {
            return Err(bad("loop_exp", self.loop_exp, "must be non-negative"));
        }
        if !(self.tau_base_coeff > T::zero() && self.tau_log_base() > T::one()) {
            return Err(bad("tau_base_coeff", self.tau_base_coeff, "phase log base must exceed 1"));
        }
        Ok(())
    }
}

/// Resolves a named profile for `n` vertices and applies overrides.
///
/// Any override turns the profile into a custom one. Recognised keys are the
/// scalar fields: `alpha_coeff`, `mu_r_value`, `loop_base`, `loop_exp`,
/// `tau_base_coeff`, `tau_frac`, `overflow_factor`.
pub fn resolve_profile<T: Float + FromPrimitive>(
    name: &str,
    n: T,
    overrides: &BTreeMap<String, f64>,
) -> Result<ParamProfile<T>> {
    let mut p = match name {
        "paper" => ParamProfile::paper(n),
        "desk" => ParamProfile::desk(n),
        other => return Err(Error::UnknownProfile(other.to_string())),
    };
    for (key, &value) in overrides {
        let v: T = T::from_f64(value).ok_or(Error::InvalidOverride {
            field: key.clone(),
            value,
            reason: "not representable",
        })?;
        if !value.is_finite() {
            return Err(Error::InvalidOverride {
                field: key.clone(),
                value,
                reason: "must be finite",
            });
        }
        let slot = match key.as_str() {
            "alpha_coeff" => &mut p.alpha_coeff,
            "mu_r_value" => &mut p.mu_r_value,
            "loop_base" => &mut p.loop_base,
            "loop_exp" => &mut p.loop_exp,
            "tau_base_coeff" => &mut p.tau_base_coeff,
            "tau_frac" => &mut p.tau_frac,
            "overflow_factor" => &mut p.overflow_factor,
            other => return Err(Error::UnknownOverride(other.to_string())),
        };
        *slot = v;
        p.name = ProfileName::Custom;
    }
    p.validate()?;
    Ok(p)
}

/// Probability of joining the heavy set at degree ratio `r`.
///
/// `1/2 exp(alpha/2 (r - 1/2))` up to `r = 1/2`, then
/// `1 - 1/2 exp(-alpha/2 (r - 1/2))`.
pub fn mu_h<T: Float + FromPrimitive>(r: T, alpha: T) -> T {
    sigmoid_half(r - c(0.5), alpha)
}

/// `1 - mu_h(r)`, evaluated without cancellation.
pub fn mu_h_complement<T: Float + FromPrimitive>(r: T, alpha: T) -> T {
    sigmoid_half(-(r - c(0.5)), alpha)
}

/// `ln mu_h(r)`, finite wherever `r` is.
pub fn ln_mu_h<T: Float + FromPrimitive>(r: T, alpha: T) -> T {
    ln_sigmoid_half(r - c(0.5), alpha)
}

/// `ln(1 - mu_h(r))`.
pub fn ln_mu_h_complement<T: Float + FromPrimitive>(r: T, alpha: T) -> T {
    ln_sigmoid_half(-(r - c(0.5)), alpha)
}

fn sigmoid_half<T: Float + FromPrimitive>(x: T, alpha: T) -> T {
    let half: T = c(0.5);
    let k = alpha * half;
    if x <= T::zero() {
        half * (k * x).exp()
    } else {
        T::one() - half * (-k * x).exp()
    }
}

fn ln_sigmoid_half<T: Float + FromPrimitive>(x: T, alpha: T) -> T {
    let half: T = c(0.5);
    let k = alpha * half;
    if x <= T::zero() {
        half.ln() + k * x
    } else {
        (-half * (-k * x).exp()).ln_1p()
    }
}

/// Probability of joining the friend set at heavy-neighbor ratio `r`:
/// `r/4` clamped to `[0, 1]`.
pub fn mu_f<T: Float + FromPrimitive>(r: T) -> T {
    if r <= c(4.0) {
        (r / c(4.0)).max(T::zero())
    } else {
        T::one()
    }
}
