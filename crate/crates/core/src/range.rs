//! Generalized ranges `R_n(g_n, f^n) = Σ_{x ∈ T} g_n(L_x^n) f^{n,|x|}(V(x_1), ..., V(x))`
//! over a completed ledger, the four example families, and the limits they
//! are predicted to satisfy.

use serde::{Deserialize, Serialize};

use crate::analytic::c_beta;
use crate::env::{EnvironmentStore, VertexId};
use crate::walk::LocalTimeLedger;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phi {
    #[default]
    One,
    Identity,
}

/// `g_n(m) = 1{m ≥ n^b} φ(m)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GSpec {
    pub b: f64,
    #[serde(default)]
    pub phi: Phi,
}

impl GSpec {
    pub fn indicator(b: f64) -> Self {
        GSpec { b, phi: Phi::One }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.b) {
            return Err(Error::InvalidParams(format!("b must lie in [0,1), got {}", self.b)));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, local_time: u64, n: f64) -> f64 {
        let m = local_time as f64;
        if local_time == 0 || m < n.powf(self.b) {
            return 0.0;
        }
        match self.phi {
            Phi::One => 1.0,
            Phi::Identity => m,
        }
    }
}

/// The path functional `f^{n,k}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FSpec {
    Constant,
    /// `1{t_k ≥ (ln n)^α}`.
    LastAbove { alpha: f64 },
    /// `1{t_{⌊k/β⌋} ≥ (ln n)^α}`.
    EarlyAbove { alpha: f64, beta: f64 },
    /// `1{t_k ≥ a (ln n)^α} (Σ_{j≤k} H_j)^{−d}`.
    Penalized { alpha: f64, a: f64, d: u8 },
    /// `1{t_{⌊k/β⌋} ≥ (ln n)^α} (Σ_{j≤⌊k/β⌋} H_j)^{−1}`.
    EarlyPenalized { alpha: f64, beta: f64 },
}

impl FSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        match *self {
            FSpec::Constant => Ok(()),
            FSpec::LastAbove { alpha } if alpha.is_finite() => Ok(()),
            FSpec::EarlyAbove { alpha, beta } | FSpec::EarlyPenalized { alpha, beta } => {
                if !(beta > 1.0 && beta.is_finite() && alpha.is_finite()) {
                    bad(format!("early families need β > 1, got {self:?}"))
                } else {
                    Ok(())
                }
            }
            FSpec::Penalized { alpha, a, d } => {
                if d > 1 || !alpha.is_finite() || !a.is_finite() {
                    bad(format!("penalized family needs d ∈ {{0,1}}, got {self:?}"))
                } else {
                    Ok(())
                }
            }
            _ => bad(format!("non-finite parameters in {self:?}")),
        }
    }

    /// Short stable label used in file names and records.
    pub fn label(&self) -> String {
        match *self {
            FSpec::Constant => "constant".into(),
            FSpec::LastAbove { alpha } => format!("last_above_a{alpha}"),
            FSpec::EarlyAbove { alpha, beta } => format!("early_above_a{alpha}_b{beta}"),
            FSpec::Penalized { alpha, a, d } => format!("penalized_a{alpha}_s{a}_d{d}"),
            FSpec::EarlyPenalized { alpha, beta } => format!("early_penalized_a{alpha}_b{beta}"),
        }
    }
}

/// Generation `⌊k/β⌋`.
#[inline]
pub fn early_generation(depth: u32, beta: f64) -> u32 {
    (f64::from(depth) / beta).floor() as u32
}

/// `f^{n,|x|}(V(x_1), ..., V(x))` for a vertex of depth ≥ 1; 0 at the root.
pub fn evaluate_f(spec: &FSpec, store: &EnvironmentStore, x: VertexId, n: f64) -> f64 {
    let rec = store.get(x);
    if rec.depth == 0 {
        return 0.0;
    }
    let ln_n = n.ln();
    match *spec {
        FSpec::Constant => 1.0,
        FSpec::LastAbove { alpha } => {
            if rec.v >= ln_n.powf(alpha) {
                1.0
            } else {
                0.0
            }
        }
        FSpec::EarlyAbove { alpha, beta } => {
            let j = early_generation(rec.depth, beta);
            if j == 0 {
                return 0.0;
            }
            let anc = store.get(store.ancestor_at(x, j));
            if anc.v >= ln_n.powf(alpha) {
                1.0
            } else {
                0.0
            }
        }
        FSpec::Penalized { alpha, a, d } => {
            if rec.v < a * ln_n.powf(alpha) {
                return 0.0;
            }
            if d == 0 {
                1.0
            } else {
                1.0 / rec.cum_h
            }
        }
        FSpec::EarlyPenalized { alpha, beta } => {
            let j = early_generation(rec.depth, beta);
            if j == 0 {
                return 0.0;
            }
            let anc = store.get(store.ancestor_at(x, j));
            if anc.v >= ln_n.powf(alpha) {
                1.0 / anc.cum_h
            } else {
                0.0
            }
        }
    }
}

/// `f^{n,k}` on an explicit line: `s[j-1] = t_j` and `cum_h[j-1] = Σ_{i≤j} H_i`
/// for `j = 1..=k`.
pub fn evaluate_f_path(spec: &FSpec, s: &[f64], cum_h: &[f64], n: f64) -> f64 {
    let k = s.len();
    if k == 0 {
        return 0.0;
    }
    let ln_n = n.ln();
    let early = |beta: f64| early_generation(k as u32, beta) as usize;
    match *spec {
        FSpec::Constant => 1.0,
        FSpec::LastAbove { alpha } => f64::from(u8::from(s[k - 1] >= ln_n.powf(alpha))),
        FSpec::EarlyAbove { alpha, beta } => {
            let j = early(beta);
            if j == 0 {
                return 0.0;
            }
            f64::from(u8::from(s[j - 1] >= ln_n.powf(alpha)))
        }
        FSpec::Penalized { alpha, a, d } => {
            if s[k - 1] < a * ln_n.powf(alpha) {
                0.0
            } else if d == 0 {
                1.0
            } else {
                1.0 / cum_h[k - 1]
            }
        }
        FSpec::EarlyPenalized { alpha, beta } => {
            let j = early(beta);
            if j == 0 || s[j - 1] < ln_n.powf(alpha) {
                0.0
            } else {
                1.0 / cum_h[j - 1]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeFunctional {
    pub g: GSpec,
    pub f: FSpec,
}

impl RangeFunctional {
    /// `g = 1{L ≥ 1}`, `f = 1`: the number of visited vertices.
    pub fn plain() -> Self {
        RangeFunctional {
            g: GSpec::indicator(0.0),
            f: FSpec::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.g.validate()?;
        self.f.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeValue {
    pub value: f64,
    pub log_plus: f64,
    pub vertex_count: u64,
}

/// `log⁺ x = log max(1, x)`.
pub fn log_plus(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// Sums `g(L_x) f(x)` over the visited non-root vertices, in order of first
/// visit. Terms are added in the same order for every functional, so
/// termwise domination carries over to the floating-point sums.
pub fn compute_range(
    ledger: &LocalTimeLedger,
    store: &EnvironmentStore,
    functional: &RangeFunctional,
    n: f64,
) -> RangeValue {
    let mut value = 0.0;
    let mut count = 0;
    for &x in ledger.visited() {
        if x == VertexId::ROOT {
            continue;
        }
        let g = functional.g.eval(ledger.site(x), n);
        if g == 0.0 {
            continue;
        }
        let f = evaluate_f(&functional.f, store, x, n);
        if f > 0.0 {
            value += g * f;
            count += 1;
        }
    }
    RangeValue {
        value,
        log_plus: log_plus(value),
        vertex_count: count,
    }
}

/// `κ_b` for the example families.
pub fn kappa_b(spec: &FSpec, b: f64) -> Result<f64> {
    let out = || {
        Err(Error::OutOfValidatedRange(format!(
            "κ_b not established for {spec:?} at b = {b}"
        )))
    };
    if !(0.0..1.0).contains(&b) {
        return out();
    }
    match *spec {
        FSpec::Constant
        | FSpec::LastAbove { .. }
        | FSpec::EarlyAbove { .. }
        | FSpec::EarlyPenalized { .. } => Ok(0.0),
        FSpec::Penalized { d, .. } => {
            let d = f64::from(d);
            if b < 1.0 / (1.0 + d) {
                Ok(b * d)
            } else {
                out()
            }
        }
    }
}

/// Leading-order `h_n` for the example families.
pub fn h_n_asymptotic(spec: &FSpec, b: f64, n: f64) -> Result<f64> {
    kappa_b(spec, b)?;
    let ln_n = n.ln();
    let out = || {
        Err(Error::OutOfValidatedRange(format!(
            "h_n not established for {spec:?} at b = {b}"
        )))
    };
    let strict = |alpha: f64| alpha > 1.0 && alpha < 2.0;
    match *spec {
        FSpec::Constant => Ok(ln_n),
        FSpec::LastAbove { alpha } if strict(alpha) => Ok(ln_n.powf(alpha - 1.0)),
        FSpec::EarlyAbove { alpha, beta } if strict(alpha) => {
            Ok(c_beta(beta)? * ln_n.powf(alpha - 1.0))
        }
        FSpec::Penalized { alpha: 1.0, .. } => Ok(ln_n),
        FSpec::Penalized { alpha, a, d: 0 } if strict(alpha) && a == 1.0 => {
            Ok(ln_n.powf(alpha - 1.0))
        }
        FSpec::Penalized { alpha, a, d: 1 } if strict(alpha) && a == 1.0 => {
            if b == 0.0 {
                Ok(2.0 * ln_n.powf(alpha / 2.0))
            } else if b < 0.5 {
                Ok(ln_n.powf(alpha - 1.0) / b)
            } else {
                out()
            }
        }
        FSpec::EarlyPenalized { alpha, .. } if strict(alpha) && b > 0.0 => {
            Ok(2.0 * ln_n.powf(alpha / 2.0))
        }
        _ => out(),
    }
}

/// The limit theorems for the example families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "theorem", rename_all = "snake_case")]
pub enum Theorem {
    /// Last generation above `(ln n)^α`.
    T1 { alpha: f64, b: f64 },
    /// Generation `⌊k/β⌋` above `(ln n)^α`.
    T2 { alpha: f64, beta: f64, b: f64 },
    /// `α = 1`, penalized with exponent `d`.
    T3i { a: f64, d: u8, b: f64 },
    /// `a = 1, b = 0, d = 1`.
    T3ii { alpha: f64 },
    /// `a = 1, d = 1, 0 < b < 1/2`.
    T3iii { alpha: f64, b: f64 },
    /// Early indicator with early penalization.
    T4 { alpha: f64, beta: f64, b: f64 },
}

/// `(log⁺ R − center)/normalizer → limit`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub normalizer: f64,
    pub center: f64,
    pub limit: f64,
}

impl Theorem {
    pub fn validate(&self) -> Result<()> {
        let open_alpha = |a: f64| a > 1.0 && a < 2.0;
        let ok = match *self {
            Theorem::T1 { alpha, b } => open_alpha(alpha) && (0.0..1.0).contains(&b),
            Theorem::T2 { alpha, beta, b } => {
                open_alpha(alpha) && beta > 1.0 && (0.0..1.0).contains(&b)
            }
            Theorem::T3i { d, b, .. } => d <= 1 && b >= 0.0 && b < 1.0 / (1.0 + f64::from(d)),
            Theorem::T3ii { alpha } => open_alpha(alpha),
            Theorem::T3iii { alpha, b } => open_alpha(alpha) && b > 0.0 && b < 0.5,
            Theorem::T4 { alpha, beta, b } => open_alpha(alpha) && beta > 1.0 && b > 0.0 && b < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{self:?} outside the theorem's range")))
        }
    }

    /// The functional whose range the theorem describes.
    pub fn functional(&self) -> RangeFunctional {
        let (b, f) = match *self {
            Theorem::T1 { alpha, b } => (b, FSpec::LastAbove { alpha }),
            Theorem::T2 { alpha, beta, b } => (b, FSpec::EarlyAbove { alpha, beta }),
            Theorem::T3i { a, d, b } => (b, FSpec::Penalized { alpha: 1.0, a, d }),
            Theorem::T3ii { alpha } => (0.0, FSpec::Penalized { alpha, a: 1.0, d: 1 }),
            Theorem::T3iii { alpha, b } => (b, FSpec::Penalized { alpha, a: 1.0, d: 1 }),
            Theorem::T4 { alpha, beta, b } => (b, FSpec::EarlyPenalized { alpha, beta }),
        };
        RangeFunctional {
            g: GSpec::indicator(b),
            f,
        }
    }
}

pub fn predicted_statistic(theorem: &Theorem, n: f64) -> Result<Prediction> {
    theorem.validate()?;
    let ln_n = n.ln();
    let p = match *theorem {
        Theorem::T1 { alpha, b } => Prediction {
            normalizer: ln_n.powf(alpha - 1.0),
            center: (1.0 - b) * ln_n,
            limit: -1.0,
        },
        Theorem::T2 { alpha, beta, b } => Prediction {
            normalizer: ln_n.powf(alpha - 1.0),
            center: (1.0 - b) * ln_n,
            limit: -c_beta(beta)?,
        },
        Theorem::T3i { d, b, .. } => Prediction {
            normalizer: ln_n,
            center: 0.0,
            limit: 1.0 - (1.0 + f64::from(d)) * b,
        },
        Theorem::T3ii { alpha } => Prediction {
            normalizer: ln_n.powf(alpha / 2.0),
            center: ln_n,
            limit: -2.0,
        },
        Theorem::T3iii { alpha, b } => Prediction {
            normalizer: ln_n.powf(alpha - 1.0),
            center: (1.0 - 2.0 * b) * ln_n,
            limit: -1.0 / b,
        },
        Theorem::T4 { alpha, b, .. } => Prediction {
            normalizer: ln_n.powf(alpha / 2.0),
            center: (1.0 - b) * ln_n,
            limit: -2.0,
        },
    };
    Ok(p)
}

/// `(log⁺ R − center)/normalizer`.
pub fn normalized_statistic(log_plus: f64, theorem: &Theorem, n: f64) -> Result<f64> {
    let p = predicted_statistic(theorem, n)?;
    Ok((log_plus - p.center) / p.normalizer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_fixed_environment, EnvironmentParams, FixedVertex};
    use crate::rng::{stream, Purpose};
    use crate::walk::{run_until_excursions, run_until_steps, DEFAULT_STEP_BUDGET};
    use std::f64::consts::PI;

    #[test]
    fn indicator_boundary() {
        let n = 1e4_f64;
        let level = n.ln().powf(1.5);
        let spec = [
            FixedVertex { id: 1, parent: 0, v: level + 0.1 },
            FixedVertex { id: 2, parent: 0, v: level - 0.1 },
        ];
        let (store, ids) = build_fixed_environment(&spec).unwrap();
        let f = FSpec::LastAbove { alpha: 1.5 };
        assert_eq!(evaluate_f(&f, &store, ids[&1], n), 1.0);
        assert_eq!(evaluate_f(&f, &store, ids[&2], n), 0.0);
        assert_eq!(evaluate_f(&FSpec::Constant, &store, ids[&2], n), 1.0);
    }

    #[test]
    fn penalized_depth_one() {
        let (store, ids) = build_fixed_environment(&[FixedVertex { id: 1, parent: 0, v: 0.3 }]).unwrap();
        let f = FSpec::Penalized { alpha: 1.0, a: 0.0, d: 1 };
        assert_eq!(evaluate_f(&f, &store, ids[&1], 100.0), 1.0);
    }

    #[test]
    fn early_family_needs_generation_one() {
        let (store, ids) = build_fixed_environment(&[
            FixedVertex { id: 1, parent: 0, v: 50.0 },
            FixedVertex { id: 2, parent: 1, v: 0.0 },
        ])
        .unwrap();
        let f = FSpec::EarlyAbove { alpha: 1.2, beta: 2.0 };
        assert_eq!(evaluate_f(&f, &store, ids[&1], 100.0), 0.0);
        assert_eq!(evaluate_f(&f, &store, ids[&2], 100.0), 1.0);
    }

    #[test]
    fn tiny_trajectory_range() {
        let (store, _) = build_fixed_environment(&[FixedVertex { id: 1, parent: 0, v: 0.0 }]).unwrap();
        // find a two-step path through the child
        for i in 0.. {
            let (_, ledger, store) = run_until_steps(store.clone(), stream(1, Purpose::Walk, i), 2).unwrap();
            if ledger.site(VertexId(1)) == 1 {
                let r = compute_range(&ledger, &store, &RangeFunctional::plain(), 2.0);
                assert_eq!(r.value, 1.0);
                assert_eq!(r.log_plus, 0.0);
                break;
            }
        }
    }

    #[test]
    fn plain_range_counts_visited_vertices_and_dominates() {
        let store = EnvironmentStore::lazy(EnvironmentParams::default_boundary(), 4);
        let n = 20_000u64;
        let (_, ledger, store) =
            run_until_excursions(store, stream(2, Purpose::Walk, 0), n, DEFAULT_STEP_BUDGET).unwrap();
        let nf = n as f64;
        let plain = compute_range(&ledger, &store, &RangeFunctional::plain(), nf);
        let distinct = ledger.visited().iter().filter(|x| **x != VertexId::ROOT).count();
        assert_eq!(plain.value, distinct as f64);
        let families = [
            FSpec::LastAbove { alpha: 1.2 },
            FSpec::EarlyAbove { alpha: 1.2, beta: 2.0 },
            FSpec::Penalized { alpha: 1.0, a: 0.5, d: 1 },
            FSpec::EarlyPenalized { alpha: 1.1, beta: 1.5 },
        ];
        for f in families {
            for b in [0.0, 0.2, 0.4] {
                let r = compute_range(&ledger, &store, &RangeFunctional { g: GSpec::indicator(b), f }, nf);
                assert!(r.value <= plain.value);
                let a = compute_range(&ledger, &store, &RangeFunctional { g: GSpec::indicator(b), f }, nf);
                assert_eq!(a.value.to_bits(), r.value.to_bits());
            }
        }
        // ancestor walking vs full path, on every hundredth vertex
        for (i, &x) in ledger.visited().iter().enumerate().filter(|(i, _)| i % 100 == 0) {
            let depth = store.get(x).depth;
            let j = early_generation(depth, 1.5);
            if j >= 1 {
                assert_eq!(store.ancestor_at(x, j), store.path(x)[j as usize - 1], "vertex {i}");
            }
        }
    }

    #[test]
    fn kappa_values() {
        assert_eq!(kappa_b(&FSpec::LastAbove { alpha: 1.5 }, 0.3).unwrap(), 0.0);
        assert_eq!(kappa_b(&FSpec::Penalized { alpha: 1.0, a: 2.0, d: 1 }, 0.2).unwrap(), 0.2);
        assert!(matches!(
            kappa_b(&FSpec::Penalized { alpha: 1.0, a: 2.0, d: 1 }, 0.6),
            Err(Error::OutOfValidatedRange(_))
        ));
    }

    #[test]
    fn h_n_values() {
        let n = 16f64.exp();
        assert!((h_n_asymptotic(&FSpec::LastAbove { alpha: 1.5 }, 0.0, n).unwrap() - 4.0).abs() < 1e-12);
        let v = h_n_asymptotic(&FSpec::Penalized { alpha: 1.4, a: 1.0, d: 1 }, 0.0, n).unwrap();
        assert!((v - 2.0 * 16f64.powf(0.7)).abs() < 1e-12);
        assert!((v - 13.93).abs() < 0.01);
        let v = h_n_asymptotic(&FSpec::Penalized { alpha: 1.0, a: 3.0, d: 1 }, 0.2, n).unwrap();
        assert_eq!(v, 16.0);
    }

    #[test]
    fn predictions() {
        let n = 16f64.exp();
        let p = predicted_statistic(&Theorem::T1 { alpha: 1.5, b: 0.0 }, n).unwrap();
        assert_eq!(p.limit, -1.0);
        assert!((p.normalizer - 4.0).abs() < 1e-12);
        assert!((p.center - 16.0).abs() < 1e-12);
        let p = predicted_statistic(&Theorem::T3iii { alpha: 1.5, b: 0.25 }, n).unwrap();
        assert_eq!(p.limit, -4.0);
        assert!((p.center - 8.0).abs() < 1e-12);
        assert!((p.normalizer - 4.0).abs() < 1e-12);
        let p = predicted_statistic(&Theorem::T2 { alpha: 1.5, beta: 1.0 + 1e-12, b: 0.0 }, n).unwrap();
        assert!((p.limit + 1.0).abs() < 1e-5);
        let p = predicted_statistic(&Theorem::T2 { alpha: 1.5, beta: 2.0, b: 0.0 }, n).unwrap();
        assert!((p.limit + 1.0 + PI / 2.0 - crate::analytic::rho_closed(PI * PI / 4.0)).abs() < 1e-14);
        assert!(predicted_statistic(&Theorem::T1 { alpha: 2.5, b: 0.0 }, n).is_err());
    }

    #[test]
    fn normalized_arithmetic() {
        let n = 16f64.exp();
        let t = Theorem::T1 { alpha: 1.5, b: 0.0 };
        let p = predicted_statistic(&t, n).unwrap();
        assert_eq!(normalized_statistic(p.center, &t, n).unwrap(), 0.0);
        assert_eq!(normalized_statistic(p.center - p.normalizer, &t, n).unwrap(), -1.0);
    }
}
