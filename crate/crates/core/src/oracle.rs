//! Exact finite-state checks for the absorbed/reflected walk duality.
//!
//! Walks are truncated to an integer window; any jump that would leave it is
//! sent to an absorbing "escaped" state whose probability mass is reported
//! alongside every transient law, so the truncation error is always known.

use std::collections::HashMap;

use statrs::distribution::{DiscreteCDF, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::lattice::{
    coalesce_state, for_each_move, indicator_bits, BoundaryKind, BoundarySpec, Lattice, LatticeState, Site,
};

/// Truncated generator of a coalescing walk on a window.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    boundary: BoundarySpec,
    lattice: Lattice,
    window: (i64, i64),
    states: Vec<LatticeState>,
    index: HashMap<Vec<Site>, usize>,
    rows: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<f64>,
    leak: Vec<f64>,
}

impl RateMatrix {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.boundary
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn window(&self) -> (i64, i64) {
        self.window
    }

    pub fn states(&self) -> &[LatticeState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &LatticeState {
        &self.states[i]
    }

    pub fn index_of(&self, positions: &[Site]) -> Option<usize> {
        self.index.get(positions).copied()
    }

    /// Off-diagonal entries of row `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diagonal[i]
    }

    /// Rate at which state `i` leaves the window.
    pub fn leak(&self, i: usize) -> f64 {
        self.leak[i]
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal[i];
        }
        self.rows[i].iter().filter(|(k, _)| *k == j).map(|(_, r)| r).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.diagonal[i] + self.rows[i].iter().map(|(_, r)| r).sum::<f64>()
    }
}

/// All nondecreasing `m`-tuples of `sites`, in lexicographic order.
fn nondecreasing_tuples(sites: &[Site], m: usize) -> Vec<Vec<Site>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    if sites.is_empty() || m == 0 {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| sites[i]).collect());
        // advance the rightmost index that can grow, reset the tail to it
        let mut k = m;
        while k > 0 && idx[k - 1] == sites.len() - 1 {
            k -= 1;
        }
        if k == 0 {
            return out;
        }
        idx[k - 1] += 1;
        let v = idx[k - 1];
        for slot in idx.iter_mut().skip(k) {
            *slot = v;
        }
    }
}

/// Generator of `m` coalescing walks on `lattice` restricted to the integer
/// window `[lo, hi]`. Barriers need at least one site of margin inside it.
pub fn build_generator(boundary: &BoundarySpec, lattice: Lattice, m: usize, window: (i64, i64)) -> Result<RateMatrix> {
    let (lo, hi) = window;
    if m == 0 {
        return domain("build_generator: m must be >= 1");
    }
    if hi - lo < 2 {
        return domain(format!("build_generator: window [{lo}, {hi}] too small"));
    }
    if boundary.points().iter().any(|&c| c - 1 < lo || c + 1 > hi) {
        return domain(format!(
            "build_generator: window [{lo}, {hi}] must contain every barrier with margin >= 1"
        ));
    }
    match (boundary.kind(), lattice) {
        (BoundaryKind::Absorbing, Lattice::HalfIntegers) | (BoundaryKind::Reflecting, Lattice::Integers) => {
            return domain("build_generator: boundary kind does not act on this lattice");
        }
        _ => {}
    }
    let sites = lattice.sites_in(lo, hi);
    let (min_site, max_site) = (sites[0], *sites.last().expect("nonempty window"));
    let tuples = nondecreasing_tuples(&sites, m);
    let index: HashMap<Vec<Site>, usize> = tuples.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    let states: Vec<LatticeState> = tuples.iter().map(|t| coalesce_state(t)).collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(states.len());
    let mut diagonal = Vec::with_capacity(states.len());
    let mut leak = Vec::with_capacity(states.len());
    let mut buf = Vec::with_capacity(m);
    for state in &states {
        let reps = state.project();
        let mut moved = reps.clone();
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut out_rate = 0.0;
        let mut escaped = 0.0;
        for_each_move(boundary, &reps, |k, dir| {
            out_rate += 0.5;
            moved[k] = reps[k].shifted(dir);
            if moved[k] < min_site || moved[k] > max_site {
                escaped += 0.5;
            } else {
                state.partition().lift_into(&moved, &mut buf);
                let j = index[&buf];
                match row.iter_mut().find(|(c, _)| *c == j) {
                    Some(entry) => entry.1 += 0.5,
                    None => row.push((j, 0.5)),
                }
            }
            moved[k] = reps[k];
        });
        rows.push(row);
        diagonal.push(-out_rate);
        leak.push(escaped);
    }
    Ok(RateMatrix {
        boundary: boundary.clone(),
        lattice,
        window,
        states,
        index,
        rows,
        diagonal,
        leak,
    })
}

/// Distribution at time `t` over the enumerated states.
#[derive(Debug, Clone)]
pub struct TransientLaw {
    pub probs: Vec<f64>,
    /// Mass that left the window.
    pub escaped: f64,
    /// Poisson weight omitted by truncating the uniformization series.
    pub series_remainder: f64,
    pub terms: usize,
}

impl TransientLaw {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Upper bound on the total-variation error against the untruncated law.
    pub fn error_bound(&self) -> f64 {
        self.escaped + self.series_remainder
    }
}

/// Transient law by uniformization: `p(t) = Σ_k Pois(k; Λt) e_init P^k` with
/// `P = I + Q/Λ`, truncated once the omitted Poisson weight is below `tol`.
pub fn transient_law(q: &RateMatrix, init: usize, t: f64, tol: f64) -> Result<TransientLaw> {
    if !(tol > 0.0) {
        return domain("transient_law: tol must be > 0");
    }
    if !(t >= 0.0) {
        return domain("transient_law: t must be >= 0");
    }
    if init >= q.len() {
        return domain("transient_law: initial state out of range");
    }
    let n = q.len();
    let lambda = q.diagonal.iter().fold(0.0f64, |m, d| m.max(-d));
    let mut probs = vec![0.0; n];
    if t == 0.0 || lambda == 0.0 {
        probs[init] = 1.0;
        return Ok(TransientLaw {
            probs,
            escaped: 0.0,
            series_remainder: 0.0,
            terms: 1,
        });
    }
    let mean = lambda * t;
    let mut v = vec![0.0; n];
    v[init] = 1.0;
    let mut v_escaped = 0.0;
    let mut next = vec![0.0; n];
    let mut escaped = 0.0;
    let mut cumulative = 0.0;
    let mut k = 0usize;
    loop {
        let weight = (-mean + k as f64 * mean.ln() - ln_gamma(k as f64 + 1.0)).exp();
        cumulative += weight;
        for (p, x) in probs.iter_mut().zip(&v) {
            *p += weight * x;
        }
        escaped += weight * v_escaped;
        if 1.0 - cumulative < tol && k as f64 >= mean {
            break;
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            next[i] += vi * (1.0 + q.diagonal[i] / lambda);
            for &(j, r) in &q.rows[i] {
                next[j] += vi * r / lambda;
            }
            v_escaped += vi * q.leak[i] / lambda;
        }
        std::mem::swap(&mut v, &mut next);
        k += 1;
    }
    Ok(TransientLaw {
        probs,
        escaped,
        series_remainder: (1.0 - cumulative).max(0.0),
        terms: k + 1,
    })
}

/// Which generator drives the dual (half-integer) system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualGenerator {
    /// Reflection at the barriers; the identity should hold.
    Reflected,
    /// Negative control: dual particles freeze on the sites adjacent to the
    /// barriers, an absorbed walk on the half-integer lattice.
    Absorbed,
}

/// Outcome of an exhaustive generator-identity check.
#[derive(Debug, Clone)]
pub struct DualityResidual {
    pub max_residual: f64,
    /// `(x, y)` attaining the maximum.
    pub worst: Option<(Vec<Site>, Vec<Site>)>,
    pub x_states: usize,
    pub y_states: usize,
    /// Size of the indicator basis, `2^{m(n-1)}`.
    pub basis_size: u64,
}

fn neighbour_lists(states: &[Vec<Site>], moves: impl Fn(&[Site], &mut dyn FnMut(usize, i64))) -> Vec<Vec<Vec<Site>>> {
    states
        .iter()
        .map(|pos| {
            let state = coalesce_state(pos).expect("enumerated state is canonical");
            let reps = state.project();
            let mut out = Vec::new();
            let mut moved = reps.clone();
            moves(&reps, &mut |k, dir| {
                moved[k] = reps[k].shifted(dir);
                out.push(state.partition().lift(&moved).expect("same block count"));
                moved[k] = reps[k];
            });
            out
        })
        .collect()
}

/// Checks `G_a(ḡ_y)(x) = G_r(ḡ_x)(y)` for every nondecreasing `x ∈ ℤ^m` and
/// `y ∈ ℤ'^n` in `[a - radius, b + radius]` and every indicator-basis `g`.
///
/// For basis functions `g = 1{array = k}` both sides are sums of rate-1/2
/// jumps weighted by whether the jumped configuration produces array `k`, so
/// the check accumulates signed coefficients per array value; linearity
/// extends the identity to every `g`.
pub fn check_generator_duality(
    m: usize,
    n: usize,
    barriers: (i64, i64),
    radius: i64,
    dual: DualGenerator,
) -> Result<DualityResidual> {
    let (a, b) = barriers;
    if n < 2 || m == 0 || m * (n - 1) > 20 {
        return domain("check_generator_duality: need m >= 1, n >= 2 and m(n-1) <= 20");
    }
    if radius < 1 {
        return domain("check_generator_duality: radius must be >= 1");
    }
    let absorbing = BoundarySpec::absorbing(&[a, b])?;
    let reflecting = BoundarySpec::reflecting(&[a, b])?;
    let (lo, hi) = (a - radius, b + radius);
    let xs = nondecreasing_tuples(&Lattice::Integers.sites_in(lo, hi), m);
    let ys = nondecreasing_tuples(&Lattice::HalfIntegers.sites_in(lo, hi), n);

    let x_moves = neighbour_lists(&xs, |reps, visit| for_each_move(&absorbing, reps, visit));
    let y_moves = match dual {
        DualGenerator::Reflected => neighbour_lists(&ys, |reps, visit| for_each_move(&reflecting, reps, visit)),
        DualGenerator::Absorbed => neighbour_lists(&ys, |reps, visit| {
            for (k, s) in reps.iter().enumerate() {
                let d = s.doubled();
                let frozen = [a, b].iter().any(|&c| (d - 2 * c).abs() == 1);
                if !frozen {
                    visit(k, 1);
                    visit(k, -1);
                }
            }
        }),
    };

    let mut worst = None;
    let mut max_residual: f64 = 0.0;
    let mut coef: Vec<(u64, f64)> = Vec::with_capacity(16);
    let add = |coef: &mut Vec<(u64, f64)>, key: u64, w: f64| match coef.iter_mut().find(|(k, _)| *k == key) {
        Some(e) => e.1 += w,
        None => coef.push((key, w)),
    };
    for (xi, x) in xs.iter().enumerate() {
        for (yi, y) in ys.iter().enumerate() {
            coef.clear();
            let base = indicator_bits(x, y);
            add(&mut coef, base, -0.5 * x_moves[xi].len() as f64);
            for x2 in &x_moves[xi] {
                add(&mut coef, indicator_bits(x2, y), 0.5);
            }
            add(&mut coef, base, 0.5 * y_moves[yi].len() as f64);
            for y2 in &y_moves[yi] {
                add(&mut coef, indicator_bits(x, y2), -0.5);
            }
            let r = coef.iter().fold(0.0f64, |acc, (_, w)| acc.max(w.abs()));
            if r > max_residual {
                max_residual = r;
                worst = Some((x.clone(), y.clone()));
            }
        }
    }
    Ok(DualityResidual {
        max_residual,
        worst,
        x_states: xs.len(),
        y_states: ys.len(),
        basis_size: 1u64 << (m * (n - 1)),
    })
}

/// Initial data and horizon for the distributional duality check.
#[derive(Debug, Clone)]
pub struct ArrayLawConfig {
    /// Starting points of the absorbed walks (integers, nondecreasing).
    pub x: Vec<i64>,
    /// Starting points of the reflected walks (half-integers, nondecreasing).
    pub y: Vec<Site>,
    pub barriers: (i64, i64),
    pub t: f64,
    /// Margin around the data; chosen from the Poisson tail when `None`.
    pub radius: Option<i64>,
}

/// The two array laws and their certified error budget.
#[derive(Debug, Clone)]
pub struct ArrayLawComparison {
    /// Law of `(1{Y_j(0) < X_i(t) ≤ Y_{j+1}(0)})`, indexed by packed bits.
    pub forward: Vec<f64>,
    /// Law of `(1{Y_j(t) < X_i(0) ≤ Y_{j+1}(t)})`.
    pub backward: Vec<f64>,
    pub total_variation: f64,
    /// Escaped plus omitted series mass on both sides.
    pub error_budget: f64,
    pub window: (i64, i64),
    pub forward_states: usize,
    pub backward_states: usize,
}

/// Margin `W` with `particles · P(Poisson(t) ≥ W) < tol / 10`.
pub fn window_radius_for(t: f64, particles: usize, tol: f64) -> i64 {
    if t <= 0.0 {
        return 1;
    }
    let pois = Poisson::new(t).expect("positive mean");
    let mut w = 1u64;
    while particles as f64 * pois.sf(w - 1) >= tol / 10.0 {
        w += 1;
    }
    w as i64
}

pub fn array_law_exact(config: &ArrayLawConfig, tol: f64) -> Result<ArrayLawComparison> {
    let (a, b) = config.barriers;
    let (m, n) = (config.x.len(), config.y.len());
    if m == 0 || n < 2 || m * (n - 1) > 20 {
        return domain("array_law_exact: need m >= 1, n >= 2 and m(n-1) <= 20");
    }
    if config.x.windows(2).any(|w| w[1] < w[0]) || config.y.windows(2).any(|w| w[1] < w[0]) {
        return domain("array_law_exact: starting points must be nondecreasing");
    }
    if config.y.iter().any(|s| s.is_integer()) {
        return domain("array_law_exact: reflected starts must be half-integers");
    }
    let radius = config
        .radius
        .unwrap_or_else(|| window_radius_for(config.t, m.max(n), tol));
    let ys_int: Vec<i64> = config.y.iter().map(|s| s.doubled().div_euclid(2)).collect();
    let lo = [a, config.x[0], ys_int[0]].into_iter().min().expect("nonempty") - radius;
    let hi = [b, *config.x.last().expect("nonempty"), ys_int[n - 1] + 1]
        .into_iter()
        .max()
        .expect("nonempty")
        + radius;
    let xs: Vec<Site> = config.x.iter().map(|&k| Site::int(k)).collect();

    let qa = build_generator(&BoundarySpec::absorbing(&[a, b])?, Lattice::Integers, m, (lo, hi))?;
    let qr = build_generator(&BoundarySpec::reflecting(&[a, b])?, Lattice::HalfIntegers, n, (lo, hi))?;
    let ia = qa.index_of(&xs).expect("start inside window");
    let ir = qr.index_of(&config.y).expect("start inside window");
    let la = transient_law(&qa, ia, config.t, tol)?;
    let lr = transient_law(&qr, ir, config.t, tol)?;

    let size = 1usize << (m * (n - 1));
    let mut forward = vec![0.0; size];
    for (state, p) in qa.states().iter().zip(&la.probs) {
        forward[indicator_bits(state.positions(), &config.y) as usize] += p;
    }
    let mut backward = vec![0.0; size];
    for (state, p) in qr.states().iter().zip(&lr.probs) {
        backward[indicator_bits(&xs, state.positions()) as usize] += p;
    }
    let total_variation = 0.5 * forward.iter().zip(&backward).map(|(f, g)| (f - g).abs()).sum::<f64>();
    Ok(ArrayLawComparison {
        forward,
        backward,
        total_variation,
        error_budget: la.error_bound() + lr.error_bound(),
        window: (lo, hi),
        forward_states: qa.len(),
        backward_states: qr.len(),
    })
}
