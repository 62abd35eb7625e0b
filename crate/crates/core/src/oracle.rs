//! Exact ground truth on small instances.
//!
//! Two independent computations of the spine sums for two-point increments
//! (tilted-path recursion and raw-law enumeration), and absorbing-chain solves
//! of the quenched excursion laws on fixed trees, checked against the
//! closed forms in `H` and against walk simulation.

use serde::{Deserialize, Serialize};

use crate::env::{
    build_fixed_environment, EnvironmentParams, EnvironmentStore, FixedVertex, IncrementLaw,
    LawFamily, OffspringLaw, VertexId,
};
use crate::range::{evaluate_f_path, FSpec};
use crate::rng::{stream, Purpose};
use crate::spine::{estimate_psi_sum, PsiQuery, SpineLaw};
use crate::stats::{Accumulator, CompensatedSum, Estimate};
use crate::walk::{Position, Walker};
use crate::{Error, Result};

/// Largest generation the enumeration accepts.
pub const MAX_ENUMERATION_DEPTH: usize = 20;
/// Largest fixed tree handed to the dense solver.
pub const MAX_DENSE_VERTICES: usize = 2000;
/// Agreement required between the two enumerations.
pub const ENUMERATION_TOLERANCE: f64 = 1e-10;
/// Agreement required between linear solves and closed forms.
pub const SOLVE_TOLERANCE: f64 = 1e-12;
/// Largest total-variation distance accepted by the simulation check.
pub const TV_TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiEnumeration {
    /// Recursion over tilted increment sequences.
    pub tilted: f64,
    /// Raw-law enumeration weighted by `m^k e^{−S_k}`.
    pub raw: f64,
}

impl PsiEnumeration {
    pub fn difference(&self) -> f64 {
        (self.tilted - self.raw).abs()
    }
}

fn two_point(params: &EnvironmentParams) -> Result<(f64, f64, f64)> {
    match params.increment {
        IncrementLaw::TwoPoint {
            value_up,
            value_down,
            prob_up,
        } => Ok((value_up, value_down, prob_up)),
        IncrementLaw::Gaussian { .. } => Err(Error::InvalidParams(
            "exact enumeration needs two-point increments".into(),
        )),
    }
}

struct Dfs<'a> {
    query: &'a PsiQuery,
    lambda_prime: f64,
    steps: [(f64, f64); 2],
    k_max: usize,
    s: Vec<f64>,
    cum_h: Vec<f64>,
    sum: CompensatedSum,
}

impl Dfs<'_> {
    fn descend(&mut self, prob: f64, h: f64) {
        let k = self.s.len();
        if k == self.k_max {
            return;
        }
        let (last_s, last_cum) = match k {
            0 => (0.0, 0.0),
            _ => (self.s[k - 1], self.cum_h[k - 1]),
        };
        for (x, p) in self.steps {
            let s = last_s + x;
            let h_next = 1.0 + (-x).exp() * h;
            if h_next > self.query.lambda {
                continue;
            }
            self.s.push(s);
            self.cum_h.push(last_cum + h_next);
            if h_next > self.lambda_prime {
                let f = evaluate_f_path(&self.query.f, &self.s, &self.cum_h, self.query.n);
                self.sum.add(prob * p * f);
            }
            self.descend(prob * p, h_next);
            self.s.pop();
            self.cum_h.pop();
        }
    }
}

/// `Σ_{k=1}^{K} Ψ^k_{λ,λ'}(f^{n,k})` computed exactly, twice.
///
/// `query.max_gen` must be set and at most [`MAX_ENUMERATION_DEPTH`].
pub fn exact_psi_enumeration(params: &EnvironmentParams, query: &PsiQuery) -> Result<PsiEnumeration> {
    query.validate()?;
    let k_max = query
        .max_gen
        .ok_or_else(|| Error::InvalidParams("enumeration needs an explicit max_gen".into()))?;
    if k_max > MAX_ENUMERATION_DEPTH {
        return Err(Error::BudgetExceeded(format!(
            "2^{k_max} paths per generation (limit 2^{MAX_ENUMERATION_DEPTH})"
        )));
    }
    let (up, down, p_up) = two_point(params)?;

    let SpineLaw::TwoPoint { prob_up: q_up, .. } = SpineLaw::tilted(params) else {
        unreachable!("two-point laws tilt to two-point laws")
    };
    let mut dfs = Dfs {
        query,
        lambda_prime: query.lambda_prime(),
        steps: [(up, q_up), (down, 1.0 - q_up)],
        k_max,
        s: Vec::with_capacity(k_max),
        cum_h: Vec::with_capacity(k_max),
        sum: CompensatedSum::default(),
    };
    dfs.descend(1.0, 0.0);
    let tilted = dfs.sum.value();

    let m = params.offspring.mean();
    let lambda_prime = query.lambda_prime();
    let mut raw = CompensatedSum::default();
    let mut s = vec![0.0; k_max];
    let mut cum_h = vec![0.0; k_max];
    for k in 1..=k_max {
        for mask in 0u32..(1u32 << k) {
            let mut prob = m.powi(k as i32);
            let mut total = 0.0;
            let mut exp_prefix = 0.0;
            let mut regular = true;
            let mut h = 0.0;
            for j in 0..k {
                let x = if mask >> j & 1 == 1 {
                    prob *= p_up;
                    up
                } else {
                    prob *= 1.0 - p_up;
                    down
                };
                total += x;
                s[j] = total;
                // the i = j term is kept exact so that H_1 = 1
                h = 1.0 + exp_prefix * (-total).exp();
                exp_prefix += total.exp();
                if h > query.lambda {
                    regular = false;
                    break;
                }
                cum_h[j] = if j == 0 { h } else { cum_h[j - 1] + h };
            }
            if !regular || h <= lambda_prime {
                continue;
            }
            let f = evaluate_f_path(&query.f, &s[..k], &cum_h[..k], query.n);
            raw.add(prob * (-s[k - 1]).exp() * f);
        }
    }
    Ok(PsiEnumeration {
        tilted,
        raw: raw.value(),
    })
}

// ---------------------------------------------------------------------------
// Quenched laws
// ---------------------------------------------------------------------------

/// Excursion laws of one vertex `x ≠ e`, from the linear solve and from the
/// closed forms in `H`.
///
/// Per excursion from `e*`, `N_x` (crossings of `(x*, x)`) satisfies
/// `P(N_x = 0) = 1 − h` and `P(N_x = i) = h q^{i−1}(1 − q)`, and the crossings
/// from `x` into its children follow the same pattern with `(α, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchedLaw {
    pub vertex: u32,
    pub depth: u32,
    pub v: f64,
    /// `P_e(T_x < T_{e*})`.
    pub hit_solve: f64,
    pub hit_formula: f64,
    /// `P_{x*}(T_x < T_{e*})`.
    pub return_solve: f64,
    pub return_formula: f64,
    /// `E[N_x]` per excursion.
    pub mean_solve: f64,
    pub mean_formula: f64,
    /// Probability that an excursion crosses into some child of `x`.
    pub child_hit_solve: f64,
    pub child_hit_formula: f64,
    /// `P_x(T_C < T_{e*})` for the set `C` of children of `x`.
    pub child_return_solve: f64,
    pub child_return_formula: f64,
}

impl QuenchedLaw {
    pub fn max_discrepancy(&self) -> f64 {
        [
            (self.hit_solve, self.hit_formula),
            (self.return_solve, self.return_formula),
            (self.mean_solve, self.mean_formula),
            (self.child_hit_solve, self.child_hit_formula),
            (self.child_return_solve, self.child_return_formula),
        ]
        .iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
    }

    /// `P(N_x = i)` under the solve parameters.
    pub fn edge_pmf(&self, i: u64) -> f64 {
        geometric_pmf(self.hit_solve, self.return_solve, i)
    }

    pub fn child_pmf(&self, i: u64) -> f64 {
        geometric_pmf(self.child_hit_solve, self.child_return_solve, i)
    }
}

fn geometric_pmf(hit: f64, ret: f64, i: u64) -> f64 {
    if i == 0 {
        1.0 - hit
    } else {
        hit * ret.powf((i - 1) as f64) * (1.0 - ret)
    }
}

/// Which `H` the closed forms use. The root-exclusive variant is wrong and
/// exists so the oracle suite can demonstrate that it detects the mismatch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HConvention {
    RootInclusive,
    RootExclusive,
}

/// In-place Gauss–Jordan inverse with partial pivoting.
fn invert(mut a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        let pv = a[pivot * n + col];
        if !(pv.abs() > 1e-13) {
            return Err(Error::SingularSystem(pv));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
                inv.swap(pivot * n + j, col * n + j);
            }
        }
        for j in 0..n {
            a[col * n + j] /= pv;
            inv[col * n + j] /= pv;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let factor = a[i * n + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[i * n + j] -= factor * a[col * n + j];
                inv[i * n + j] -= factor * inv[col * n + j];
            }
        }
    }
    Ok(inv)
}

/// Solves the absorbing chain on `T ∪ {e*}` for every vertex `x ≠ e`.
///
/// With `G = (I − Q)^{−1}` the Green function of the walk killed at `e*`:
/// `P_u(T_x < T_{e*}) = G(u, x) / G(x, x)`, `E[N_x] = G(e, x*) P(x*, x)` and
/// the expected number of steps from `x` into `C` is `G(·, x) P(x, C)`.
pub fn quenched_laws_solve(store: &EnvironmentStore) -> Result<Vec<QuenchedLaw>> {
    quenched_laws_with(store, HConvention::RootInclusive)
}

pub fn quenched_laws_with(store: &EnvironmentStore, convention: HConvention) -> Result<Vec<QuenchedLaw>> {
    let n = store.len();
    if !store.is_fixed() {
        return Err(Error::InvalidParams("quenched solve needs a fixed environment".into()));
    }
    if n > MAX_DENSE_VERTICES {
        return Err(Error::BudgetExceeded(format!(
            "{n} vertices (dense limit {MAX_DENSE_VERTICES})"
        )));
    }
    let mut a = vec![0.0; n * n];
    let mut to_children = vec![0.0; n];
    for i in 0..n {
        a[i * n + i] = 1.0;
        let id = VertexId(i as u32);
        let (up, down) = store
            .transition_probabilities(id)
            .ok_or_else(|| Error::MalformedTree(format!("vertex {id} not generated")))?;
        if let Some(p) = store.get(id).parent {
            a[i * n + p.index()] -= up;
        }
        let kids = store.children(id).expect("generated");
        for (c, p) in kids.iter().zip(&down) {
            a[i * n + c.index()] -= p;
        }
        to_children[i] = down.iter().sum();
    }
    let g = invert(a, n)?;
    let gr = |u: usize, x: usize| g[u * n + x];

    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let id = VertexId(i as u32);
        let rec = store.get(id);
        let parent = rec.parent.expect("non-root").index();
        let (_, parent_down) = store.transition_probabilities(VertexId(parent as u32)).expect("generated");
        let j = store
            .children(VertexId(parent as u32))
            .expect("generated")
            .iter()
            .position(|c| c == id)
            .expect("child of its parent");

        let hit_solve = gr(0, i) / gr(i, i);
        let return_solve = gr(parent, i) / gr(i, i);
        let mean_solve = gr(0, parent) * parent_down[j];
        let from_x = gr(i, i) * to_children[i];
        let child_return_solve = from_x / (1.0 + from_x);
        let child_hit_solve = gr(0, i) * to_children[i] * (1.0 - child_return_solve);

        let h = match convention {
            HConvention::RootInclusive => rec.h_hit,
            HConvention::RootExclusive => rec.h_path,
        };
        let e_v = (-rec.v).exp();
        let kids = store.children(id).expect("generated");
        let rel: f64 = kids.iter().map(|c| (-(store.get(c).v - rec.v)).exp()).sum();
        let abs: f64 = kids.iter().map(|c| (-store.get(c).v).exp()).sum();
        let h_tilde = h * rel;
        out.push(QuenchedLaw {
            vertex: id.0,
            depth: rec.depth,
            v: rec.v,
            hit_solve,
            hit_formula: e_v / h,
            return_solve,
            return_formula: 1.0 - 1.0 / h,
            mean_solve,
            mean_formula: e_v,
            child_hit_solve,
            child_hit_formula: abs / (1.0 + h_tilde),
            child_return_solve,
            child_return_formula: h_tilde / (1.0 + h_tilde),
        });
    }
    Ok(out)
}

/// Simulated per-excursion laws of `N_x` and of the child crossings of `x`,
/// compared with the solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawCheck {
    pub vertex: u32,
    pub excursions: u64,
    pub tv_distance: f64,
    pub mean: Estimate,
    pub mean_error: f64,
    pub child_tv_distance: f64,
    pub child_mean: Estimate,
    pub child_mean_error: f64,
    /// Fraction of excursions with `N_x ≥ 1`.
    pub hit_frequency: Estimate,
    pub hit_solve: f64,
}

impl LawCheck {
    pub fn passes(&self, k: f64) -> bool {
        self.tv_distance <= TV_TOLERANCE
            && self.child_tv_distance <= TV_TOLERANCE
            && self.mean_error <= k * self.mean.std_error
            && self.child_mean_error <= k * self.child_mean.std_error
            && self.hit_frequency.within(self.hit_solve, k, 0.0)
    }
}

fn tv_distance(counts: &[u64], total: u64, pmf: impl Fn(u64) -> f64) -> f64 {
    let mut tv = 0.0;
    let mut covered = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let p = pmf(i as u64);
        covered += p;
        tv += (c as f64 / total as f64 - p).abs();
    }
    0.5 * (tv + (1.0 - covered).max(0.0))
}

fn histogram(values: &[u64]) -> Vec<u64> {
    let top = values.iter().copied().max().unwrap_or(0) as usize;
    let mut h = vec![0u64; top + 1];
    for &v in values {
        h[v as usize] += 1;
    }
    h
}

/// Runs `excursions` excursions of the walk on `store` and compares the
/// empirical laws at `target` with [`quenched_laws_solve`].
pub fn empirical_law_check(
    store: &EnvironmentStore,
    target: VertexId,
    excursions: u64,
    seed: u64,
) -> Result<LawCheck> {
    if target == VertexId::ROOT || target.index() >= store.len() {
        return Err(Error::InvalidParams(format!("target {target} must be a non-root vertex of the tree")));
    }
    if excursions == 0 {
        return Err(Error::InvalidParams("need at least one excursion".into()));
    }
    let laws = quenched_laws_solve(store)?;
    let law = laws[target.index() - 1];
    let mut walker = Walker::new(store.clone(), stream(seed, Purpose::Oracle, u64::from(target.0)));
    let mut edge_counts = Vec::with_capacity(excursions as usize);
    let mut child_counts = Vec::with_capacity(excursions as usize);
    let (mut last_edge, mut last_child) = (0u64, 0u64);
    while (edge_counts.len() as u64) < excursions {
        walker.step();
        if walker.state().position == Position::EStar {
            let e = walker.ledger().edge(target);
            let c = walker.ledger().child_edge(target);
            edge_counts.push(e - last_edge);
            child_counts.push(c - last_child);
            last_edge = e;
            last_child = c;
        }
    }
    let to_estimate = |v: &[u64]| {
        let acc: Accumulator = v.iter().map(|&x| x as f64).collect();
        Estimate::from_accumulator(&acc, seed)
    };
    let mean = to_estimate(&edge_counts);
    let child_mean = to_estimate(&child_counts);
    let hits: Vec<u64> = edge_counts.iter().map(|&c| u64::from(c > 0)).collect();
    let child_expected = law.child_hit_solve / (1.0 - law.child_return_solve);
    Ok(LawCheck {
        vertex: target.0,
        excursions,
        tv_distance: tv_distance(&histogram(&edge_counts), excursions, |i| law.edge_pmf(i)),
        mean,
        mean_error: (mean.mean - law.mean_solve).abs(),
        child_tv_distance: tv_distance(&histogram(&child_counts), excursions, |i| law.child_pmf(i)),
        child_mean,
        child_mean_error: (child_mean.mean - child_expected).abs(),
        hit_frequency: to_estimate(&hits),
        hit_solve: law.hit_solve,
    })
}

// ---------------------------------------------------------------------------
// Suite
// ---------------------------------------------------------------------------

/// Named fixed environments used by the suite.
pub fn reference_environments() -> Vec<(&'static str, Vec<FixedVertex>)> {
    let fv = |id, parent, v| FixedVertex { id, parent, v };
    vec![
        ("single edge", vec![fv(1, 0, 0.0)]),
        ("chain of two", vec![fv(1, 0, 0.0), fv(2, 1, 0.0)]),
        ("high leaf", vec![fv(1, 0, 5.0)]),
        (
            "depth-2 star",
            vec![fv(1, 0, 0.3), fv(2, 0, -0.4), fv(3, 1, 1.1), fv(4, 2, -0.2)],
        ),
        (
            "asymmetric",
            vec![
                fv(1, 0, -1.0),
                fv(2, 0, 2.0),
                fv(3, 0, 0.5),
                fv(4, 1, -0.8),
                fv(5, 1, 0.0),
                fv(6, 4, 0.2),
                fv(7, 4, -1.2),
                fv(8, 6, 1.0),
            ],
        ),
    ]
}

/// A tree with a deep potential well. Its local-time laws are too wide for a
/// TV check at 10⁵ excursions (the sampling floor of the empirical TV is
/// itself about 0.01), so the suite only compares solve and closed form here.
pub fn deep_valley() -> Vec<FixedVertex> {
    let fv = |id, parent, v| FixedVertex { id, parent, v };
    vec![
        fv(1, 0, -1.0),
        fv(2, 0, 2.0),
        fv(3, 0, 0.5),
        fv(4, 1, -2.5),
        fv(5, 1, 0.0),
        fv(6, 4, -1.5),
        fv(7, 4, -3.0),
        fv(8, 6, 1.0),
    ]
}

/// The first `depth` generations of a lazily generated tree, as a fixed
/// environment.
pub fn truncated_tree(params: &EnvironmentParams, env_seed: u64, depth: u32) -> Vec<FixedVertex> {
    let mut store = EnvironmentStore::lazy(params.clone(), env_seed);
    let mut out = Vec::new();
    let mut frontier = vec![VertexId::ROOT];
    for _ in 0..depth {
        let mut next = Vec::new();
        for v in frontier {
            for c in store.expand_children(v).to_vec() {
                out.push(FixedVertex {
                    id: u64::from(c.0),
                    parent: u64::from(v.0),
                    v: store.get(c).v,
                });
                next.push(c);
            }
        }
        frontier = next;
    }
    out
}

/// Two-point law used by the enumeration checks: binary tree, gap `acosh 2`.
pub fn enumeration_params() -> EnvironmentParams {
    EnvironmentParams::calibrated(
        &LawFamily::TwoPoint {
            gap: 2f64.acosh(),
            prob_up: None,
        },
        OffspringLaw::default(),
    )
    .expect("gap acosh 2 is feasible for m = 2")
}

/// One functional per implemented family, with thresholds reachable within
/// 16 generations at `n = e^4`.
pub fn enumeration_functionals() -> Vec<FSpec> {
    vec![
        FSpec::Constant,
        FSpec::LastAbove { alpha: 1.2 },
        FSpec::EarlyAbove { alpha: 1.0, beta: 2.0 },
        FSpec::Penalized { alpha: 1.0, a: 0.5, d: 0 },
        FSpec::Penalized { alpha: 1.0, a: 0.5, d: 1 },
        FSpec::EarlyPenalized { alpha: 0.8, beta: 1.5 },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub check: String,
    pub detail: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    fn push(&mut self, check: impl Into<String>, detail: String, passed: bool) {
        self.rows.push(SuiteRow {
            check: check.into(),
            detail,
            passed,
        });
    }

    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.check.len()).max().unwrap_or(0);
        let mut s = String::new();
        for r in &self.rows {
            let mark = if r.passed { "PASS" } else { "FAIL" };
            s.push_str(&format!("{mark}  {:width$}  {}\n", r.check, r.detail));
        }
        s
    }
}

/// Runs every oracle check. With `convention = RootExclusive` the quenched
/// rows use the wrong `H` and are expected to fail.
pub fn run_suite(convention: HConvention, samples: u64, excursions: u64, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::default();
    let params = enumeration_params();
    let law = SpineLaw::tilted(&params);
    let n = 4f64.exp();

    let trivial = PsiQuery {
        f: FSpec::Constant,
        lambda: f64::INFINITY,
        lambda_prime: Some(0.0),
        n,
        b: 0.0,
        max_gen: Some(5),
    };
    let e = exact_psi_enumeration(&params, &trivial)?;
    report.push(
        "enumeration, constant f, K = 5",
        format!("tilted {:.15} raw {:.15}", e.tilted, e.raw),
        (e.tilted - 5.0).abs() < ENUMERATION_TOLERANCE && (e.raw - 5.0).abs() < ENUMERATION_TOLERANCE,
    );

    for f in enumeration_functionals() {
        for (lambda, lambda_prime) in [(f64::INFINITY, 0.0), (30.0, 1.0), (8.0, 2.0)] {
            let q = PsiQuery {
                f,
                lambda,
                lambda_prime: Some(lambda_prime),
                n,
                b: 0.0,
                max_gen: Some(16),
            };
            let e = exact_psi_enumeration(&params, &q)?;
            let ok = e.difference() <= ENUMERATION_TOLERANCE * e.tilted.abs().max(1.0);
            let est = estimate_psi_sum(&law, &q, samples, seed)?;
            let mc_ok = est.within(e.tilted, 4.0, 1e-12);
            report.push(
                format!("enumeration {} λ={lambda} λ'={lambda_prime}", f.label()),
                format!("tilted {:.12} raw {:.12} |Δ| {:.1e}", e.tilted, e.raw, e.difference()),
                ok,
            );
            report.push(
                format!("spine MC {} λ={lambda} λ'={lambda_prime}", f.label()),
                format!("{:.6} ± {:.6} vs {:.6}", est.mean, est.std_error, e.tilted),
                mc_ok,
            );
        }
    }

    let mut envs = reference_environments();
    let simulated = envs.len();
    envs.push(("deep valley", deep_valley()));
    envs.push(("truncated tree", truncated_tree(&EnvironmentParams::default_boundary(), seed, 4)));
    for (name, spec) in &envs {
        let (store, _) = build_fixed_environment(spec)?;
        let laws = quenched_laws_with(&store, convention)?;
        let worst = laws.iter().map(QuenchedLaw::max_discrepancy).fold(0.0, f64::max);
        report.push(
            format!("solve vs H formula, {name}"),
            format!("{} vertices, max |Δ| {worst:.1e}", store.len()),
            worst <= SOLVE_TOLERANCE,
        );
    }
    for (name, spec) in envs.iter().take(simulated) {
        let (store, _) = build_fixed_environment(spec)?;
        let mut worst_tv = 0.0_f64;
        let mut ok = true;
        for i in 1..store.len() {
            let check = empirical_law_check(&store, VertexId(i as u32), excursions, seed)?;
            worst_tv = worst_tv.max(check.tv_distance).max(check.child_tv_distance);
            ok &= check.passes(4.0);
        }
        report.push(
            format!("simulated laws, {name}"),
            format!("{excursions} excursions, max TV {worst_tv:.4}"),
            ok,
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn store(spec: &[FixedVertex]) -> EnvironmentStore {
        build_fixed_environment(spec).unwrap().0
    }

    #[test]
    fn single_edge_is_one_half() {
        let laws = quenched_laws_solve(&store(&[FixedVertex { id: 1, parent: 0, v: 0.0 }])).unwrap();
        assert!((laws[0].hit_solve - 0.5).abs() < 1e-15);
        assert!((laws[0].hit_formula - 0.5).abs() < 1e-15);
    }

    #[test]
    fn high_leaf() {
        let laws = quenched_laws_solve(&store(&[FixedVertex { id: 1, parent: 0, v: 5.0 }])).unwrap();
        let expected = (-5.0f64).exp() / (1.0 + (-5.0f64).exp());
        assert!((laws[0].hit_solve - expected).abs() < 1e-15);
    }

    #[test]
    fn formulas_match_solve_on_reference_trees() {
        for (name, spec) in reference_environments() {
            let laws = quenched_laws_solve(&store(&spec)).unwrap();
            for l in &laws {
                assert!(l.max_discrepancy() <= SOLVE_TOLERANCE, "{name}: {l:?}");
            }
        }
    }

    #[test]
    fn root_exclusive_h_is_detected() {
        let (_, spec) = &reference_environments()[0];
        let laws = quenched_laws_with(&store(spec), HConvention::RootExclusive).unwrap();
        assert!(laws[0].max_discrepancy() > 0.1);
    }

    #[test]
    fn enumeration_trivial_sum() {
        let q = PsiQuery {
            f: FSpec::Constant,
            lambda: f64::INFINITY,
            lambda_prime: Some(0.0),
            n: E,
            b: 0.0,
            max_gen: Some(5),
        };
        let e = exact_psi_enumeration(&enumeration_params(), &q).unwrap();
        assert!((e.tilted - 5.0).abs() < 1e-12 && (e.raw - 5.0).abs() < 1e-12, "{e:?}");
    }

    #[test]
    fn unit_lambda_prime_drops_first_generation_only() {
        let params = enumeration_params();
        let q = |lp: f64| PsiQuery {
            f: FSpec::Constant,
            lambda: f64::INFINITY,
            lambda_prime: Some(lp),
            n: E,
            b: 0.0,
            max_gen: Some(10),
        };
        let all = exact_psi_enumeration(&params, &q(0.0)).unwrap();
        let strict = exact_psi_enumeration(&params, &q(1.0)).unwrap();
        // H_1 = 1 always and H_k > 1 for k ≥ 2
        assert!((all.tilted - strict.tilted - 1.0).abs() < 1e-12);
        assert!((all.raw - strict.raw - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_budget() {
        let q = PsiQuery {
            f: FSpec::Constant,
            lambda: 1.0,
            lambda_prime: Some(0.0),
            n: E,
            b: 0.0,
            max_gen: Some(21),
        };
        assert!(matches!(
            exact_psi_enumeration(&enumeration_params(), &q),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn gaussian_is_rejected() {
        let q = PsiQuery {
            f: FSpec::Constant,
            lambda: 1.0,
            lambda_prime: Some(0.0),
            n: E,
            b: 0.0,
            max_gen: Some(3),
        };
        assert!(exact_psi_enumeration(&EnvironmentParams::default_boundary(), &q).is_err());
    }

    #[test]
    fn simulated_single_edge() {
        let s = store(&[FixedVertex { id: 1, parent: 0, v: 0.0 }]);
        let c = empirical_law_check(&s, VertexId(1), 100_000, 3).unwrap();
        assert!(c.passes(4.0), "{c:?}");
    }

    #[test]
    fn truncated_tree_builds() {
        let spec = truncated_tree(&EnvironmentParams::default_boundary(), 1, 3);
        assert_eq!(spec.len(), 2 + 4 + 8);
        let laws = quenched_laws_solve(&store(&spec)).unwrap();
        assert!(laws.iter().all(|l| l.max_discrepancy() <= SOLVE_TOLERANCE));
    }
}
