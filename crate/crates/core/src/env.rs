//! Random environments: offspring and displacement laws, boundary-case
//! calibration, and the tree-with-potential realised lazily along the walk.
//!
//! Child displacements are i.i.d. and independent of the offspring count, so
//! `E[Σ_{|x|=1} e^{-sV(x)}] = E[ν]·E[e^{-sX}]` and every derived quantity has a
//! closed form for both supported displacement families.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{keyed, mix64};
use crate::{Error, Result};

/// Tolerance on `|ψ(1)|` and `|ψ'(1)|` for a calibrated law.
pub const CALIBRATION_TOLERANCE: f64 = 1e-10;

/// Law of a single child displacement `X = V(child) − V(parent)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncrementLaw {
    Gaussian {
        mean: f64,
        variance: f64,
    },
    TwoPoint {
        value_up: f64,
        value_down: f64,
        prob_up: f64,
    },
}

impl IncrementLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            IncrementLaw::Gaussian { mean, variance } => {
                if !(variance > 0.0 && variance.is_finite() && mean.is_finite()) {
                    return Err(Error::InvalidParams(format!(
                        "gaussian increment needs finite mean and variance > 0, got ({mean}, {variance})"
                    )));
                }
            }
            IncrementLaw::TwoPoint {
                value_up,
                value_down,
                prob_up,
            } => {
                if !(prob_up > 0.0 && prob_up < 1.0) || !value_up.is_finite() || !value_down.is_finite()
                {
                    return Err(Error::InvalidParams(format!(
                        "two-point increment needs finite values and prob_up in (0,1), got {self:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(E[e^{-sX}], E[X e^{-sX}], E[X² e^{-sX}])`.
    pub fn exp_moments(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            IncrementLaw::Gaussian { mean, variance } => {
                // E[X^j e^{-sX}] = e^{-sμ + s²σ²/2} · E[Y^j], Y ~ N(μ − sσ², σ²)
                let z = (-s * mean + 0.5 * s * s * variance).exp();
                let shifted = mean - s * variance;
                (z, z * shifted, z * (shifted * shifted + variance))
            }
            IncrementLaw::TwoPoint {
                value_up,
                value_down,
                prob_up,
            } => {
                let wu = prob_up * (-s * value_up).exp();
                let wd = (1.0 - prob_up) * (-s * value_down).exp();
                (
                    wu + wd,
                    wu * value_up + wd * value_down,
                    wu * value_up * value_up + wd * value_down * value_down,
                )
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            IncrementLaw::Gaussian { mean, variance } => Normal::new(mean, variance.sqrt())
                .expect("validated gaussian")
                .sample(rng),
            IncrementLaw::TwoPoint {
                value_up,
                value_down,
                prob_up,
            } => {
                if rng.random::<f64>() < prob_up {
                    value_up
                } else {
                    value_down
                }
            }
        }
    }
}

/// Offspring law of the Galton–Watson tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OffspringLaw {
    Deterministic { m: u32 },
    /// Weights over `{0, 1, ..., K}`.
    Pmf { weights: Vec<f64> },
}

impl Default for OffspringLaw {
    fn default() -> Self {
        OffspringLaw::Deterministic { m: 2 }
    }
}

impl OffspringLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            OffspringLaw::Deterministic { m } => {
                if *m < 2 {
                    return Err(Error::InvalidParams(format!(
                        "deterministic offspring needs m >= 2, got {m}"
                    )));
                }
            }
            OffspringLaw::Pmf { weights } => {
                let total: f64 = weights.iter().sum();
                if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
                    || (total - 1.0).abs() > 1e-12
                {
                    return Err(Error::InvalidParams(
                        "offspring weights must be non-negative and sum to 1".into(),
                    ));
                }
                if self.mean() <= 1.0 {
                    return Err(Error::InvalidParams(format!(
                        "offspring law must be supercritical, mean = {}",
                        self.mean()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            OffspringLaw::Deterministic { m } => f64::from(*m),
            OffspringLaw::Pmf { weights } => weights
                .iter()
                .enumerate()
                .map(|(k, w)| k as f64 * w)
                .sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            OffspringLaw::Deterministic { m } => *m as usize,
            OffspringLaw::Pmf { weights } => {
                let mut u = rng.random::<f64>();
                for (k, w) in weights.iter().enumerate() {
                    if u < *w {
                        return k;
                    }
                    u -= w;
                }
                weights.len().saturating_sub(1)
            }
        }
    }
}

/// Family descriptor handed to [`calibrate_boundary`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LawFamily {
    /// Free mean and variance.
    #[default]
    Gaussian,
    /// Values `c ± gap` with a free shift `c`; `prob_up` is solved for unless
    /// pinned.
    TwoPoint {
        gap: f64,
        #[serde(default)]
        prob_up: Option<f64>,
    },
}

/// Solves `ψ(1) = ψ'(1) = 0` inside `family` for the given offspring law.
pub fn calibrate_boundary(family: &LawFamily, offspring: &OffspringLaw) -> Result<IncrementLaw> {
    offspring.validate()?;
    let log_m = offspring.mean().ln();
    let law = match *family {
        LawFamily::Gaussian => {
            // ψ(s) = log m − sμ + s²σ²/2: ψ'(1) = 0 gives μ = σ², ψ(1) = 0 gives σ² = 2 log m.
            IncrementLaw::Gaussian {
                mean: 2.0 * log_m,
                variance: 2.0 * log_m,
            }
        }
        LawFamily::TwoPoint { gap, prob_up } => {
            if !(gap > 0.0 && gap <= 50.0) {
                return Err(Error::InvalidParams(format!(
                    "two-point gap must lie in (0, 50], got {gap}"
                )));
            }
            match prob_up {
                Some(p) => two_point_pinned(gap, p, offspring.mean())?,
                None => two_point_free(gap, offspring.mean())?,
            }
        }
    };
    let (psi1, dpsi1) = psi_and_derivative(offspring, &law, 1.0)?;
    if psi1.abs() > CALIBRATION_TOLERANCE || dpsi1.abs() > CALIBRATION_TOLERANCE {
        return Err(Error::NoSolution(format!(
            "calibration residuals ψ(1) = {psi1:e}, ψ'(1) = {dpsi1:e}"
        )));
    }
    Ok(law)
}

fn two_point_law(shift: f64, gap: f64, prob_up: f64) -> IncrementLaw {
    IncrementLaw::TwoPoint {
        value_up: shift + gap,
        value_down: shift - gap,
        prob_up,
    }
}

/// Residuals `(ψ(1), −ψ'(1)·e^{ψ(1)})` for values `c ± y` and probability `p`.
fn two_point_residuals(shift: f64, gap: f64, p: f64, mean_offspring: f64) -> [f64; 2] {
    let wu = p * (-(shift + gap)).exp();
    let wd = (1.0 - p) * (-(shift - gap)).exp();
    [
        mean_offspring.ln() + (wu + wd).ln(),
        mean_offspring * (wu * (shift + gap) + wd * (shift - gap)),
    ]
}

fn two_point_pinned(gap: f64, p: f64, mean_offspring: f64) -> Result<IncrementLaw> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParams(format!("prob_up must lie in (0,1), got {p}")));
    }
    // One free parameter, two equations: ψ'(1) = 0 fixes the shift in closed form.
    let (a, b) = (p * (-gap).exp(), (1.0 - p) * gap.exp());
    let shift = gap * (b - a) / (a + b);
    let [psi1, _] = two_point_residuals(shift, gap, p, mean_offspring);
    if psi1.abs() > CALIBRATION_TOLERANCE {
        return Err(Error::NoSolution(format!(
            "with prob_up pinned at {p} and gap {gap}, ψ'(1) = 0 forces ψ(1) = {psi1:.6}"
        )));
    }
    Ok(two_point_law(shift, gap, p))
}

/// Free two-point calibration.
///
/// Writing `u` for the tilted weight of the upper value, the two equations
/// reduce to `G(u) = u e^{2y} + 1 − u − m e^{2uy} = 0` with shift `c = y(1−2u)`.
/// `G` is concave and negative at both ends, so there are zero or two roots;
/// the root with `u` closest to 1/2 is kept and then polished by a 2D Newton
/// iteration on the original equations.
fn two_point_free(gap: f64, mean_offspring: f64) -> Result<IncrementLaw> {
    let e2y = (2.0 * gap).exp();
    let g = |u: f64| u * e2y + 1.0 - u - mean_offspring * (2.0 * u * gap).exp();
    // Golden-section search for the maximum of the concave G on [0, 1].
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - inv_phi * (hi - lo);
        let b = lo + inv_phi * (hi - lo);
        if g(a) < g(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let peak = 0.5 * (lo + hi);
    if g(peak) <= 0.0 {
        return Err(Error::NoSolution(format!(
            "no two-point boundary law with gap {gap} for mean offspring {mean_offspring}"
        )));
    }
    let bisect = |mut a: f64, mut b: f64| {
        // sign(g(a)) != sign(g(b))
        let ga = g(a);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if (g(mid) > 0.0) == (ga > 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let roots = [bisect(0.0, peak), bisect(peak, 1.0)];
    let u = if (roots[0] - 0.5).abs() <= (roots[1] - 0.5).abs() {
        roots[0]
    } else {
        roots[1]
    };
    let mut shift = gap * (1.0 - 2.0 * u);
    let mut p = u * e2y / (u * e2y + 1.0 - u);

    // Newton polish with a central-difference Jacobian.
    for _ in 0..50 {
        let r = two_point_residuals(shift, gap, p, mean_offspring);
        if r[0].abs() < 1e-14 && r[1].abs() < 1e-14 {
            break;
        }
        let h = 1e-7;
        let dc = {
            let a = two_point_residuals(shift + h, gap, p, mean_offspring);
            let b = two_point_residuals(shift - h, gap, p, mean_offspring);
            [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)]
        };
        let hp = h * p.min(1.0 - p);
        let dp = {
            let a = two_point_residuals(shift, gap, p + hp, mean_offspring);
            let b = two_point_residuals(shift, gap, p - hp, mean_offspring);
            [(a[0] - b[0]) / (2.0 * hp), (a[1] - b[1]) / (2.0 * hp)]
        };
        let det = dc[0] * dp[1] - dp[0] * dc[1];
        if det.abs() < 1e-300 {
            break;
        }
        let step_c = (r[0] * dp[1] - dp[0] * r[1]) / det;
        let step_p = (dc[0] * r[1] - r[0] * dc[1]) / det;
        let new_p = p - step_p;
        if !(new_p > 0.0 && new_p < 1.0) {
            break;
        }
        shift -= step_c;
        p = new_p;
        if step_c.abs() < 1e-12 && step_p.abs() < 1e-12 {
            break;
        }
    }
    Ok(two_point_law(shift, gap, p))
}

fn psi_and_derivative(offspring: &OffspringLaw, law: &IncrementLaw, s: f64) -> Result<(f64, f64)> {
    let (z0, z1, _) = law.exp_moments(s);
    let psi = offspring.mean().ln() + z0.ln();
    if !psi.is_finite() || !z1.is_finite() {
        return Err(Error::Divergent(s));
    }
    Ok((psi, -z1 / z0))
}

/// Environment law with its derived boundary-case diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentParams {
    pub offspring: OffspringLaw,
    pub increment: IncrementLaw,
    pub psi_at_1: f64,
    pub psi_prime_at_1: f64,
    /// `E[Σ_{|x|=1} V²(x) e^{-V(x)}]`.
    pub sigma2: f64,
}

impl EnvironmentParams {
    pub fn new(offspring: OffspringLaw, increment: IncrementLaw) -> Result<Self> {
        offspring.validate()?;
        increment.validate()?;
        let (psi_at_1, psi_prime_at_1) = psi_and_derivative(&offspring, &increment, 1.0)?;
        let (_, _, z2) = increment.exp_moments(1.0);
        let sigma2 = offspring.mean() * z2;
        if !(sigma2 > 0.0) {
            return Err(Error::InvalidParams("σ² must be positive".into()));
        }
        Ok(Self {
            offspring,
            increment,
            psi_at_1,
            psi_prime_at_1,
            sigma2,
        })
    }

    /// Calibrated law from a family descriptor.
    pub fn calibrated(family: &LawFamily, offspring: OffspringLaw) -> Result<Self> {
        let increment = calibrate_boundary(family, &offspring)?;
        Self::new(offspring, increment)
    }

    /// Binary tree with calibrated Gaussian displacements `N(2 ln 2, 2 ln 2)`.
    pub fn default_boundary() -> Self {
        Self::calibrated(&LawFamily::Gaussian, OffspringLaw::default())
            .expect("gaussian calibration is closed form")
    }

    pub fn is_boundary_case(&self) -> bool {
        self.psi_at_1.abs() <= CALIBRATION_TOLERANCE
            && self.psi_prime_at_1.abs() <= CALIBRATION_TOLERANCE
    }
}

/// `ψ(s) = log E[Σ_{|z|=1} e^{-sV(z)}]`.
pub fn psi(params: &EnvironmentParams, s: f64) -> Result<f64> {
    psi_and_derivative(&params.offspring, &params.increment, s).map(|(p, _)| p)
}

/// `ψ'(s)`.
pub fn psi_prime(params: &EnvironmentParams, s: f64) -> Result<f64> {
    psi_and_derivative(&params.offspring, &params.increment, s).map(|(_, d)| d)
}

// ---------------------------------------------------------------------------
// Tree storage
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub u32);

impl VertexId {
    pub const ROOT: VertexId = VertexId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChildrenState {
    Ungenerated,
    /// Children occupy the contiguous handles `first .. first + count`.
    Generated { first: u32, count: u32 },
}

/// One realised vertex.
#[derive(Clone, Debug)]
pub struct VertexRecord {
    pub id: VertexId,
    /// `None` for the root, whose parent is `e*`.
    pub parent: Option<VertexId>,
    pub depth: u32,
    /// Potential `V(x)`, with `V(root) = 0`.
    pub v: f64,
    /// `H_x = Σ_{i=1}^{|x|} e^{V(x_i) − V(x)}` (root excluded; 0 at the root).
    pub h_path: f64,
    /// Root-inclusive variant `Σ_{i=0}^{|x|} e^{V(x_i) − V(x)} = h_path + e^{-V(x)}`.
    pub h_hit: f64,
    /// `Σ_{j ≤ |x|} H_{x_j}`.
    pub cum_h: f64,
    pub children: ChildrenState,
    /// `e^{-(V(x) − V(x*))}`, the unnormalised weight of the step `x* → x`.
    pub(crate) weight: f64,
    /// `1 + Σ_children weight`, the normaliser of the steps out of `x`.
    pub(crate) out_total: f64,
    key: u64,
}

impl VertexRecord {
    fn root(key: u64) -> Self {
        VertexRecord {
            id: VertexId::ROOT,
            parent: None,
            depth: 0,
            v: 0.0,
            h_path: 0.0,
            h_hit: 1.0,
            cum_h: 0.0,
            children: ChildrenState::Ungenerated,
            weight: 1.0,
            out_total: f64::NAN,
            key,
        }
    }

    fn child_of(parent: &VertexRecord, id: VertexId, increment: f64, key: u64) -> Self {
        let v = parent.v + increment;
        let h_path = 1.0 + (-increment).exp() * parent.h_path;
        VertexRecord {
            id,
            parent: Some(parent.id),
            depth: parent.depth + 1,
            v,
            h_path,
            h_hit: h_path + (-v).exp(),
            cum_h: parent.cum_h + h_path,
            children: ChildrenState::Ungenerated,
            weight: (-increment).exp(),
            out_total: f64::NAN,
            key,
        }
    }

    pub fn is_generated(&self) -> bool {
        matches!(self.children, ChildrenState::Generated { .. })
    }

    pub fn child_count(&self) -> usize {
        match self.children {
            ChildrenState::Generated { count, .. } => count as usize,
            ChildrenState::Ungenerated => 0,
        }
    }
}

/// Contiguous block of child handles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Children {
    first: u32,
    count: u32,
}

impl Children {
    pub fn len(&self) -> usize {
        self.count as usize
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn get(&self, j: usize) -> Option<VertexId> {
        (j < self.count as usize).then(|| VertexId(self.first + j as u32))
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        (self.first..self.first + self.count).map(VertexId)
    }

    pub fn to_vec(&self) -> Vec<VertexId> {
        self.iter().collect()
    }
}

/// Arena of realised vertices. Vertices are only ever appended; a vertex's
/// children are realised once, on first request, and stored contiguously.
#[derive(Clone, Debug)]
pub struct EnvironmentStore {
    vertices: Vec<VertexRecord>,
    params: Option<EnvironmentParams>,
}

impl EnvironmentStore {
    /// Lazily generated Galton–Watson environment. The children of a vertex
    /// are drawn from a generator keyed by the vertex's position in the tree,
    /// so the realisation does not depend on the order of expansion.
    pub fn lazy(params: EnvironmentParams, env_seed: u64) -> Self {
        EnvironmentStore {
            vertices: vec![VertexRecord::root(mix64(env_seed))],
            params: Some(params),
        }
    }

    pub fn params(&self) -> Option<&EnvironmentParams> {
        self.params.as_ref()
    }

    pub fn is_fixed(&self) -> bool {
        self.params.is_none()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    #[inline]
    pub fn get(&self, id: VertexId) -> &VertexRecord {
        &self.vertices[id.index()]
    }

    pub fn vertices(&self) -> &[VertexRecord] {
        &self.vertices
    }

    /// Realises the children of `v` if needed and returns them. Idempotent.
    pub fn expand_children(&mut self, v: VertexId) -> Children {
        if let ChildrenState::Generated { first, count } = self.vertices[v.index()].children {
            return Children { first, count };
        }
        let params = self
            .params
            .as_ref()
            .expect("fixed environments are fully generated");
        let parent = &self.vertices[v.index()];
        let mut rng = keyed(parent.key);
        let count = params.offspring.sample(&mut rng);
        let first = self.vertices.len() as u32;
        let mut total = 1.0;
        let parent = parent.clone();
        for j in 0..count {
            let increment = params.increment.sample(&mut rng);
            let key = mix64(parent.key ^ mix64(j as u64 + 1));
            let child = VertexRecord::child_of(&parent, VertexId(first + j as u32), increment, key);
            total += child.weight;
            self.vertices.push(child);
        }
        let rec = &mut self.vertices[v.index()];
        rec.children = ChildrenState::Generated {
            first,
            count: count as u32,
        };
        rec.out_total = total;
        Children {
            first,
            count: count as u32,
        }
    }

    /// Children of an already generated vertex.
    pub fn children(&self, v: VertexId) -> Option<Children> {
        match self.vertices[v.index()].children {
            ChildrenState::Generated { first, count } => Some(Children { first, count }),
            ChildrenState::Ungenerated => None,
        }
    }

    /// Ancestor of `v` at generation `generation ≤ depth(v)`, by parent walking.
    pub fn ancestor_at(&self, v: VertexId, generation: u32) -> VertexId {
        let mut cur = v;
        let mut depth = self.get(v).depth;
        assert!(generation <= depth, "generation beyond vertex depth");
        while depth > generation {
            cur = self.get(cur).parent.expect("non-root vertex has a parent");
            depth -= 1;
        }
        cur
    }

    /// Path `x_1, ..., x_k = v` from the root (excluded) to `v`.
    pub fn path(&self, v: VertexId) -> Vec<VertexId> {
        let mut out = Vec::with_capacity(self.get(v).depth as usize);
        let mut cur = v;
        while let Some(p) = self.get(cur).parent {
            out.push(cur);
            cur = p;
        }
        out.reverse();
        out
    }

    /// Quenched step probabilities out of a generated vertex: `(to parent or
    /// e*, to each child in order)`.
    pub fn transition_probabilities(&self, v: VertexId) -> Option<(f64, Vec<f64>)> {
        let rec = self.get(v);
        let children = self.children(v)?;
        let total = rec.out_total;
        let probs = children.iter().map(|c| self.get(c).weight / total).collect();
        Some((1.0 / total, probs))
    }

    /// Recomputes `H_x` from the stored potentials along the path.
    pub fn h_path_from_scratch(&self, v: VertexId) -> f64 {
        let target = self.get(v).v;
        self.path(v)
            .iter()
            .map(|x| (self.get(*x).v - target).exp())
            .sum()
    }

    /// Vertices of a fixed environment in breadth-first order (root first).
    fn fixed(vertices: Vec<VertexRecord>) -> Self {
        EnvironmentStore {
            vertices,
            params: None,
        }
    }
}

/// One non-root vertex of an explicit environment. The root has id 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedVertex {
    pub id: u64,
    pub parent: u64,
    pub v: f64,
}

/// Builds a fully generated store from explicit `(id, parent, V)` triples.
///
/// Handles are assigned breadth-first with children in input order, so the
/// returned map translates caller ids to handles.
pub fn build_fixed_environment(
    spec: &[FixedVertex],
) -> Result<(EnvironmentStore, HashMap<u64, VertexId>)> {
    let mut by_parent: HashMap<u64, Vec<&FixedVertex>> = HashMap::new();
    let mut seen = HashMap::new();
    for fv in spec {
        if fv.id == 0 {
            if fv.v != 0.0 {
                return Err(Error::MalformedTree("the root must carry V = 0".into()));
            }
            continue;
        }
        if !fv.v.is_finite() {
            return Err(Error::MalformedTree(format!("vertex {} has non-finite V", fv.id)));
        }
        if seen.insert(fv.id, ()).is_some() {
            return Err(Error::MalformedTree(format!("vertex {} listed twice", fv.id)));
        }
        by_parent.entry(fv.parent).or_default().push(fv);
    }
    let non_root = spec.iter().filter(|f| f.id != 0).count();

    let mut records = vec![VertexRecord::root(0)];
    let mut ids = HashMap::from([(0u64, VertexId::ROOT)]);
    let mut queue = VecDeque::from([(0u64, VertexId::ROOT)]);
    while let Some((ext, handle)) = queue.pop_front() {
        let kids = by_parent.get(&ext).map(Vec::as_slice).unwrap_or(&[]);
        let first = records.len() as u32;
        let parent = records[handle.index()].clone();
        let mut total = 1.0;
        for (j, fv) in kids.iter().enumerate() {
            let id = VertexId(first + j as u32);
            let child = VertexRecord::child_of(&parent, id, fv.v - parent.v, 0);
            // keep the caller's V exactly rather than parent.v + (V − parent.v)
            let child = VertexRecord { v: fv.v, h_hit: child.h_path + (-fv.v).exp(), ..child };
            total += child.weight;
            records.push(child);
            ids.insert(fv.id, id);
            queue.push_back((fv.id, id));
        }
        let rec = &mut records[handle.index()];
        rec.children = ChildrenState::Generated {
            first,
            count: kids.len() as u32,
        };
        rec.out_total = total;
    }
    if records.len() != non_root + 1 {
        let orphans: Vec<u64> = spec
            .iter()
            .filter(|f| f.id != 0 && !ids.contains_key(&f.id))
            .map(|f| f.id)
            .collect();
        return Err(Error::MalformedTree(format!(
            "vertices not reachable from the root (orphans or cycles): {orphans:?}"
        )));
    }
    Ok((EnvironmentStore::fixed(records), ids))
}

/// Parses the text format `id parent_id V`, one vertex per line. Blank lines
/// and `#` comments are ignored; the root (id 0) is implicit but may be
/// listed as `0 - 0`.
pub fn parse_fixed_environment(text: &str) -> Result<Vec<FixedVertex>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::MalformedTree(format!("line {}: expected `id parent_id V`, got {raw:?}", lineno + 1));
        if fields.len() != 3 {
            return Err(bad());
        }
        let id: u64 = fields[0].parse().map_err(|_| bad())?;
        let v: f64 = fields[2].parse().map_err(|_| bad())?;
        if id == 0 {
            if v != 0.0 {
                return Err(Error::MalformedTree("the root must carry V = 0".into()));
            }
            continue;
        }
        let parent: u64 = fields[1].parse().map_err(|_| bad())?;
        out.push(FixedVertex { id, parent, v });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn fv(id: u64, parent: u64, v: f64) -> FixedVertex {
        FixedVertex { id, parent, v }
    }

    #[test]
    fn gaussian_binary_calibration_is_closed_form() {
        let law = calibrate_boundary(&LawFamily::Gaussian, &OffspringLaw::default()).unwrap();
        assert_eq!(
            law,
            IncrementLaw::Gaussian {
                mean: 2.0 * LN_2,
                variance: 2.0 * LN_2
            }
        );
        let params = EnvironmentParams::default_boundary();
        assert!(params.psi_at_1.abs() <= 1e-10);
        assert!(params.psi_prime_at_1.abs() <= 1e-10);
        assert_relative_eq!(params.sigma2, 2.0 * LN_2, epsilon = 1e-12);
    }

    #[test]
    fn psi_at_zero_is_log_mean_offspring() {
        let params = EnvironmentParams::default_boundary();
        assert_relative_eq!(psi(&params, 0.0).unwrap(), LN_2, epsilon = 1e-15);
    }

    #[test]
    fn psi_above_one_is_finite_and_positive() {
        let params = EnvironmentParams::default_boundary();
        let value = psi(&params, 1.5).unwrap();
        // ψ(s) = ln2 (1 − s)² for the calibrated binary gaussian law
        assert_relative_eq!(value, LN_2 * 0.25, epsilon = 1e-14);
    }

    #[test]
    fn pinned_symmetric_two_point_has_no_solution() {
        let res = calibrate_boundary(
            &LawFamily::TwoPoint {
                gap: 1.0,
                prob_up: Some(0.5),
            },
            &OffspringLaw::default(),
        );
        assert!(matches!(res, Err(Error::NoSolution(_))));
    }

    #[test]
    fn free_two_point_calibrates() {
        for gap in [1.25, 1.5, 2.0, 3.0, 5.0] {
            let params = EnvironmentParams::calibrated(
                &LawFamily::TwoPoint { gap, prob_up: None },
                OffspringLaw::default(),
            )
            .unwrap();
            assert!(params.is_boundary_case(), "gap {gap}: {params:?}");
        }
    }

    #[test]
    fn small_gap_two_point_is_infeasible() {
        let res = calibrate_boundary(
            &LawFamily::TwoPoint {
                gap: 1.2,
                prob_up: None,
            },
            &OffspringLaw::default(),
        );
        assert!(matches!(res, Err(Error::NoSolution(_))));
    }

    #[test]
    fn acosh_gap_gives_zero_shift() {
        let gap = 2f64.acosh();
        let law = calibrate_boundary(&LawFamily::TwoPoint { gap, prob_up: None }, &OffspringLaw::default())
            .unwrap();
        let IncrementLaw::TwoPoint { value_up, value_down, .. } = law else {
            panic!("wrong family")
        };
        assert_relative_eq!(value_up, gap, epsilon = 1e-10);
        assert_relative_eq!(value_down, -gap, epsilon = 1e-10);
    }

    #[test]
    fn root_expansion_binary() {
        let mut store = EnvironmentStore::lazy(EnvironmentParams::default_boundary(), 11);
        let kids = store.expand_children(VertexId::ROOT);
        assert_eq!(kids.len(), 2);
        for c in kids.iter() {
            assert_eq!(store.get(c).h_path, 1.0);
            assert_eq!(store.get(c).cum_h, 1.0);
            assert_eq!(store.get(c).depth, 1);
        }
    }

    #[test]
    fn expansion_is_idempotent() {
        let mut store = EnvironmentStore::lazy(EnvironmentParams::default_boundary(), 5);
        let a = store.expand_children(VertexId::ROOT);
        let v: Vec<f64> = a.iter().map(|c| store.get(c).v).collect();
        let b = store.expand_children(VertexId::ROOT);
        let w: Vec<f64> = b.iter().map(|c| store.get(c).v).collect();
        assert_eq!(a, b);
        assert_eq!(v, w);
        assert_eq!(store.len(), 3);
    }

    #[test]
    fn realisation_does_not_depend_on_expansion_order() {
        let params = EnvironmentParams::default_boundary();
        let mut s1 = EnvironmentStore::lazy(params.clone(), 99);
        let mut s2 = EnvironmentStore::lazy(params, 99);
        let k1 = s1.expand_children(VertexId::ROOT);
        let k2 = s2.expand_children(VertexId::ROOT);
        // expand in opposite orders
        let (a1, b1) = (k1.get(0).unwrap(), k1.get(1).unwrap());
        let (a2, b2) = (k2.get(0).unwrap(), k2.get(1).unwrap());
        let ga1 = s1.expand_children(a1);
        let gb1 = s1.expand_children(b1);
        let gb2 = s2.expand_children(b2);
        let ga2 = s2.expand_children(a2);
        let pot = |s: &EnvironmentStore, c: Children| c.iter().map(|x| s.get(x).v).collect::<Vec<_>>();
        assert_eq!(pot(&s1, ga1), pot(&s2, ga2));
        assert_eq!(pot(&s1, gb1), pot(&s2, gb2));
    }

    #[test]
    fn grandchild_recursion_by_hand() {
        let (store, ids) =
            build_fixed_environment(&[fv(1, 0, LN_2), fv(2, 1, LN_2)]).unwrap();
        let g = store.get(ids[&2]);
        assert_relative_eq!(g.h_path, 2.0, epsilon = 1e-15);
        assert_relative_eq!(g.cum_h, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn fixed_single_child() {
        let (store, ids) = build_fixed_environment(&[fv(1, 0, 0.0)]).unwrap();
        let x = store.get(ids[&1]);
        assert_eq!(x.h_path, 1.0);
        assert_eq!(x.h_hit, 2.0);
    }

    #[test]
    fn fixed_chain() {
        let (store, ids) = build_fixed_environment(&[fv(1, 0, 1.0), fv(2, 1, 0.0)]).unwrap();
        assert_relative_eq!(store.get(ids[&2]).h_path, 1.0 + 1f64.exp(), epsilon = 1e-15);
    }

    #[test]
    fn empty_spec_is_root_only() {
        let (store, _) = build_fixed_environment(&[]).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.children(VertexId::ROOT).unwrap().len(), 0);
    }

    #[test]
    fn orphans_and_cycles_rejected() {
        assert!(matches!(
            build_fixed_environment(&[fv(1, 7, 0.0)]),
            Err(Error::MalformedTree(_))
        ));
        assert!(matches!(
            build_fixed_environment(&[fv(1, 2, 0.0), fv(2, 1, 0.0)]),
            Err(Error::MalformedTree(_))
        ));
        assert!(matches!(
            build_fixed_environment(&[fv(1, 0, 0.0), fv(1, 0, 1.0)]),
            Err(Error::MalformedTree(_))
        ));
    }

    #[test]
    fn parse_text_format() {
        let text = "# chain\n0 - 0\n1 0 1.0\n2 1 0.0   # leaf\n\n";
        let spec = parse_fixed_environment(text).unwrap();
        assert_eq!(spec, vec![fv(1, 0, 1.0), fv(2, 1, 0.0)]);
        assert!(parse_fixed_environment("1 0").is_err());
        assert!(parse_fixed_environment("0 - 1.0").is_err());
    }

    #[test]
    fn transition_probabilities_sum_to_one() {
        let mut store = EnvironmentStore::lazy(EnvironmentParams::default_boundary(), 3);
        let kids = store.expand_children(VertexId::ROOT);
        for c in kids.iter() {
            store.expand_children(c);
        }
        for id in 0..store.len() {
            let id = VertexId(id as u32);
            if let Some((up, down)) = store.transition_probabilities(id) {
                let total: f64 = up + down.iter().sum::<f64>();
                assert!((total - 1.0).abs() <= 1e-12);
            }
        }
    }
}
