//! Named tolerances shared by all modules.

use serde::{Deserialize, Serialize};

/// Absolute and relative tolerances used across the crate.
///
/// Every field has a default; a JSON override only needs the keys it changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceProfile {
    /// Relative symmetry tolerance for `SpdMatrix` and `SymMatrix`.
    pub symmetry: f64,
    /// Slack allowed in a nonincreasing log singular vector.
    pub ordering: f64,
    /// Absolute tolerance of the majorization comparisons.
    pub majorization: f64,
    /// Allowed deviation of `det G` from 1 in a metric field.
    pub unit_det: f64,
    /// Allowed `|det A| - 1` before a pullback is rejected.
    pub volume: f64,
    /// Allowed `tr(G^-1 h)` for a tangent field.
    pub tangency: f64,
    /// Relative gradient-norm target of the barycenter iteration.
    pub barycenter_grad: f64,
    /// Iteration cap of the barycenter iteration.
    pub barycenter_max_iters: usize,
    /// Smallest Armijo step before a line search is declared stalled.
    pub min_step: f64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            symmetry: 1e-12,
            ordering: 1e-10,
            majorization: 1e-9,
            unit_det: 1e-10,
            volume: 1e-8,
            tangency: 1e-8,
            barycenter_grad: 1e-10,
            barycenter_max_iters: 500,
            min_step: 1e-14,
        }
    }
}

impl ToleranceProfile {
    /// Returns the name of the first non-positive tolerance, if any.
    pub fn first_invalid(&self) -> Option<&'static str> {
        let checks = [
            ("symmetry", self.symmetry),
            ("ordering", self.ordering),
            ("majorization", self.majorization),
            ("unit_det", self.unit_det),
            ("volume", self.volume),
            ("tangency", self.tangency),
            ("barycenter_grad", self.barycenter_grad),
            ("min_step", self.min_step),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Some(name);
            }
        }
        if self.barycenter_max_iters == 0 {
            return Some("barycenter_max_iters");
        }
        None
    }
}
