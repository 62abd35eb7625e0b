//! Browser bindings for the demo page in `www/`.
//!
//! Every function returns a flat `Float64Array`; the row width is given in
//! its doc comment.

use wasm_bindgen::prelude::*;

use gwrange::analytic::{brownian_laplace_exponent, laplace_exponent, meander_sup_tail, rho_closed};
use gwrange::env::{EnvironmentParams, EnvironmentStore, LawFamily, OffspringLaw};
use gwrange::harness::environment_seed;
use gwrange::range::{compute_range, FSpec, GSpec, RangeFunctional};
use gwrange::rng::{stream, Purpose};
use gwrange::spine::{SpineLaw, SpinePath};
use gwrange::walk::Walker;

const MAX_STEPS: u64 = 20_000_000;
const MAX_PATH_POINTS: usize = 2_000_000;

fn js(e: gwrange::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn params(gap: f64, m: u32) -> Result<EnvironmentParams, JsError> {
    let family = if gap > 0.0 {
        LawFamily::TwoPoint { gap, prob_up: None }
    } else {
        LawFamily::Gaussian
    };
    EnvironmentParams::calibrated(&family, OffspringLaw::Deterministic { m }).map_err(js)
}

/// Rows `[c, ρ(c), 1 + √c − ρ(c), √c·coth √c]` for `points` values of `c`
/// evenly spaced on `(0, c_max]`.
#[wasm_bindgen]
pub fn laplace_curves(c_max: f64, points: usize) -> Vec<f64> {
    let points = points.clamp(2, 2000);
    (1..=points)
        .flat_map(|i| {
            let c = c_max * i as f64 / points as f64;
            [c, rho_closed(c), laplace_exponent(c), brownian_laplace_exponent(c)]
        })
        .collect()
}

/// Rows `[u, P(sup of the meander > u)]` on `[0, u_max]`.
#[wasm_bindgen]
pub fn meander_tail(u_max: f64, points: usize) -> Vec<f64> {
    let points = points.clamp(2, 2000);
    (0..points)
        .flat_map(|i| {
            let u = u_max * i as f64 / (points - 1) as f64;
            [u, meander_sup_tail(u)]
        })
        .collect()
}

/// Runs one walk to `steps` and records, at `checkpoints` geometrically
/// spaced times, rows `[n, R_n, heavy R_n, excursions, max depth, min V]`.
/// The heavy range counts vertices visited at least `n^b` times. A
/// non-positive `gap` selects the Gaussian law.
#[wasm_bindgen]
pub fn walk_growth(seed: u64, steps: u64, checkpoints: usize, b: f64, gap: f64, m: u32) -> Result<Vec<f64>, JsError> {
    if steps == 0 || steps > MAX_STEPS {
        return Err(JsError::new(&format!("steps must be in 1..={MAX_STEPS}")));
    }
    if !(0.0..1.0).contains(&b) {
        return Err(JsError::new("b must be in [0, 1)"));
    }
    let store = EnvironmentStore::lazy(params(gap, m)?, environment_seed(seed, 0));
    let mut walker = Walker::new(store, stream(seed, Purpose::Walk, 0));
    let plain = RangeFunctional::plain();
    let heavy = RangeFunctional {
        g: GSpec::indicator(b),
        f: FSpec::Constant,
    };
    let checkpoints = checkpoints.clamp(2, 200);
    let first = 16f64.min(steps as f64);
    let ratio = (steps as f64 / first).powf(1.0 / (checkpoints - 1) as f64);
    let mut out = Vec::with_capacity(checkpoints * 6);
    let mut last = 0;
    for i in 0..checkpoints {
        let n = ((first * ratio.powi(i as i32)).round() as u64).clamp(1, steps);
        if n <= last {
            continue;
        }
        last = n;
        walker.run_until_steps(n).map_err(js)?;
        let nf = n as f64;
        let state = walker.state();
        out.extend_from_slice(&[
            nf,
            compute_range(walker.ledger(), walker.store(), &plain, nf).value,
            compute_range(walker.ledger(), walker.store(), &heavy, nf).value,
            state.excursions as f64,
            f64::from(state.max_depth_seen),
            state.min_potential_seen,
        ]);
    }
    Ok(out)
}

/// `count` spine paths of `length` steps under the tilted law. Path `i`
/// occupies `2·length` entries: the positions `S_1..S_k`, then the
/// downfalls `H_1..H_k`.
#[wasm_bindgen]
pub fn spine_paths(seed: u64, count: usize, length: usize, gap: f64, m: u32) -> Result<Vec<f64>, JsError> {
    if count == 0 || length == 0 || count.saturating_mul(length) > MAX_PATH_POINTS {
        return Err(JsError::new(&format!("need 0 < count·length ≤ {MAX_PATH_POINTS}")));
    }
    let law = SpineLaw::tilted(&params(gap, m)?);
    let mut out = Vec::with_capacity(2 * count * length);
    for i in 0..count {
        let mut rng = stream(seed, Purpose::Spine, i as u64);
        let path = SpinePath::sample(&law, length, &mut rng);
        out.extend_from_slice(&path.s);
        out.extend_from_slice(&path.h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_have_row_shape() {
        assert_eq!(laplace_curves(5.0, 10).len(), 40);
        let t = meander_tail(3.0, 7);
        assert_eq!(t.len(), 14);
        assert_eq!(t[1], 1.0);
    }

    #[test]
    fn walk_rows_are_monotone() {
        let rows = walk_growth(1, 5000, 12, 0.3, 0.0, 2).ok().unwrap();
        assert_eq!(rows.len() % 6, 0);
        let ranges: Vec<f64> = rows.chunks(6).map(|r| r[1]).collect();
        assert!(ranges.windows(2).all(|w| w[0] <= w[1]));
        assert!(rows.chunks(6).all(|r| r[2] <= r[1]));
        assert_eq!(rows[rows.len() - 6], 5000.0);
    }

    #[test]
    fn spine_paths_have_downfall_at_least_one() {
        let v = spine_paths(2, 3, 50, 2.0, 2).ok().unwrap();
        assert_eq!(v.len(), 300);
        assert_eq!(v[50], 1.0);
        assert!(v[50..100].iter().all(|h| *h >= 1.0));
    }
}
