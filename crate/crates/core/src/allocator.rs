//! Direct solvers for utility proportional fair allocation.
//!
//! Every optimum here is characterised by a single stationarity condition:
//! an application receiving rate `r_ij` satisfies `beta_i * alpha_ij * S_ij(r_ij) = p`
//! for the shadow price `p` of the binding budget. Because every slope is
//! strictly decreasing, total demand is strictly decreasing in `p` and the
//! price is found by bisection.
//!
//! After bisection the price bracket is two adjacent floats. Demands at the
//! two ends straddle the budget; the returned rates are the convex blend of
//! the two demand vectors that meets the budget exactly. Each blended rate
//! lies between its demands at the two bracket prices, so stationarity holds
//! to the width of the bracket even where a sigmoid's slope is nearly flat.

use crate::error::{domain, Error, Result};
use crate::numeric::{bisect_decreasing, RATE_FLOOR};
use crate::utility::Utility;

/// Tolerance on `sum_j alpha_ij = 1`.
pub const ALPHA_SUM_TOLERANCE: f64 = 1e-9;

const PRICE_LO_START: f64 = 1e-12;
const PRICE_HI_START: f64 = 1.0;
const MAX_BRACKET_STEPS: usize = 200;

/// One application on a UE: its utility and usage share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppSpec {
    utility: Utility,
    alpha: f64,
}

impl AppSpec {
    pub fn new(utility: Utility, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 1.0) {
            return Err(domain(format!("usage share alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { utility, alpha })
    }

    pub fn utility(&self) -> &Utility {
        &self.utility
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// A UE: its applications and subscription weight.
#[derive(Debug, Clone, PartialEq)]
pub struct UeSpec {
    apps: Vec<AppSpec>,
    beta: f64,
}

impl UeSpec {
    pub fn new(apps: Vec<AppSpec>, beta: f64) -> Result<Self> {
        if apps.is_empty() {
            return Err(domain("a UE needs at least one application"));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(domain(format!("subscription weight beta must be positive, got {beta}")));
        }
        let sum: f64 = apps.iter().map(|a| a.alpha).sum();
        if (sum - 1.0).abs() > ALPHA_SUM_TOLERANCE {
            return Err(domain(format!("alpha sum {sum} ≠ 1")));
        }
        Ok(Self { apps, beta })
    }

    pub fn apps(&self) -> &[AppSpec] {
        &self.apps
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn app_count(&self) -> usize {
        self.apps.len()
    }
}

/// UEs sharing one eNB budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    ues: Vec<UeSpec>,
    budget: f64,
}

impl Scenario {
    pub fn new(ues: Vec<UeSpec>, budget: f64) -> Result<Self> {
        if ues.is_empty() {
            return Err(domain("no UEs"));
        }
        if !(budget.is_finite() && budget > 0.0) {
            return Err(domain(format!("budget must be positive, got {budget}")));
        }
        Ok(Self { ues, budget })
    }

    pub fn ues(&self) -> &[UeSpec] {
        &self.ues
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// Same UEs, different budget.
    pub fn with_budget(&self, budget: f64) -> Result<Self> {
        Self::new(self.ues.clone(), budget)
    }

    pub fn app_count(&self) -> usize {
        self.ues.iter().map(UeSpec::app_count).sum()
    }

    /// Sum of the inflection rates of every sigmoidal application.
    pub fn inflection_sum(&self) -> f64 {
        self.ues
            .iter()
            .flat_map(|ue| ue.apps.iter())
            .map(|app| app.utility.inflection())
            .sum()
    }
}

/// Per-application and per-UE rates with the price that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `rates[i][j]`: rate of application `j` on UE `i`.
    pub rates: Vec<Vec<f64>>,
    /// `ue_totals[i] = sum_j rates[i][j]`.
    pub ue_totals: Vec<f64>,
    /// Multiplier of the budget constraint at the level that was solved.
    pub shadow_price: f64,
}

impl Allocation {
    pub fn from_rates(rates: Vec<Vec<f64>>, shadow_price: f64) -> Self {
        let ue_totals = rates.iter().map(|r| r.iter().sum()).collect();
        Self {
            rates,
            ue_totals,
            shadow_price,
        }
    }

    pub fn total(&self) -> f64 {
        self.ue_totals.iter().sum()
    }
}

/// Optimality residuals of an allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `max_ij |beta_i alpha_ij S_ij(r_ij) - p| / p`.
    pub stationarity_residual: f64,
    /// `|sum r_ij - R| / R`.
    pub budget_residual: f64,
    /// `p * |R - sum r_ij| / R`; zero when the price is positive and the budget binds.
    pub complementary_slackness: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity_residual.max(self.budget_residual)
    }
}

/// Rate demanded by one application at price `p`: `S^{-1}(p / (beta * alpha))`.
pub fn app_demand(app: &AppSpec, beta: f64, p: f64) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(domain(format!("beta must be positive, got {beta}")));
    }
    if !(p.is_finite() && p > 0.0) {
        return Err(domain(format!("price must be finite and positive, got {p}")));
    }
    app.utility.slope_inverse(p / (beta * app.alpha))
}

/// Best response of a UE to price `p`: maximises `beta * ln V(r) - p * r`
/// over the UE rate and its split across applications.
///
/// Returns the UE total and the per-application split.
pub fn ue_best_response(ue: &UeSpec, p: f64) -> Result<(f64, Vec<f64>)> {
    let split = ue
        .apps
        .iter()
        .map(|app| app_demand(app, ue.beta, p))
        .collect::<Result<Vec<_>>>()?;
    Ok((split.iter().sum(), split))
}

/// Total demand of a scenario at price `p`.
pub fn total_demand(s: &Scenario, p: f64) -> Result<f64> {
    let mut total = 0.0;
    for ue in &s.ues {
        total += ue_best_response(ue, p)?.0;
    }
    Ok(total)
}

/// One-stage allocation of the whole budget directly to applications.
pub fn centralized_allocate(s: &Scenario) -> Result<(Allocation, KktReport)> {
    let weights: Vec<(Utility, f64)> = s
        .ues
        .iter()
        .flat_map(|ue| ue.apps.iter().map(move |app| (app.utility, ue.beta * app.alpha)))
        .collect();
    let (flat, price) = clear_market(&weights, s.budget)?;

    let mut rates = Vec::with_capacity(s.ues.len());
    let mut it = flat.into_iter();
    for ue in &s.ues {
        rates.push(it.by_ref().take(ue.apps.len()).collect());
    }
    let alloc = Allocation::from_rates(rates, price);
    let report = verify_kkt(s, &alloc)?;
    Ok((alloc, report))
}

/// Splits a UE's rate `r_opt` among its applications.
///
/// Returns the split and the internal price `p_I` with
/// `alpha_ij S_ij(r_ij) = p_I` for every application.
pub fn iura_allocate(ue: &UeSpec, r_opt: f64) -> Result<(Vec<f64>, f64)> {
    let min = ue.apps.len() as f64 * RATE_FLOOR;
    if !r_opt.is_finite() || r_opt < min {
        return Err(domain(format!("UE rate {r_opt} is below the minimum {min} for {} apps", ue.apps.len())));
    }
    let weights: Vec<(Utility, f64)> = ue.apps.iter().map(|app| (app.utility, app.alpha)).collect();
    clear_market(&weights, r_opt)
}

/// Aggregated slope of a UE at rate `r_i`: `sum_j alpha_ij S_ij(r_ij)` at the
/// optimal internal split, which equals `N_i * p_I`.
pub fn aggregated_slope(ue: &UeSpec, r_i: f64) -> Result<f64> {
    let (_, p_internal) = iura_allocate(ue, r_i)?;
    Ok(ue.apps.len() as f64 * p_internal)
}

/// `ln V_i(r_i)` at the optimal internal split of `r_i`.
pub fn aggregated_log_utility(ue: &UeSpec, r_i: f64) -> Result<f64> {
    let (split, _) = iura_allocate(ue, r_i)?;
    let mut total = 0.0;
    for (app, r) in ue.apps.iter().zip(&split) {
        total += app.alpha * app.utility.log_eval(*r)?;
    }
    Ok(total)
}

/// `sum_i beta_i sum_j alpha_ij ln U_ij(r_ij)`.
pub fn objective(s: &Scenario, rates: &[Vec<f64>]) -> Result<f64> {
    check_shape(s, rates)?;
    let mut total = 0.0;
    for (ue, row) in s.ues.iter().zip(rates) {
        for (app, r) in ue.apps.iter().zip(row) {
            total += ue.beta * app.alpha * app.utility.log_eval(*r)?;
        }
    }
    Ok(total)
}

/// Residuals of the optimality conditions for `a` against `s`.
pub fn verify_kkt(s: &Scenario, a: &Allocation) -> Result<KktReport> {
    check_shape(s, &a.rates)?;
    let p = a.shadow_price;
    if !(p.is_finite() && p > 0.0) {
        return Err(domain(format!("shadow price must be positive, got {p}")));
    }
    let mut stationarity: f64 = 0.0;
    let mut total = 0.0;
    for (ue, row) in s.ues.iter().zip(&a.rates) {
        for (app, &r) in ue.apps.iter().zip(row) {
            let marginal = ue.beta * app.alpha * app.utility.slope(r)?;
            stationarity = stationarity.max((marginal - p).abs() / p);
            total += r;
        }
    }
    let gap = (total - s.budget).abs() / s.budget;
    Ok(KktReport {
        stationarity_residual: stationarity,
        budget_residual: gap,
        complementary_slackness: p * gap,
    })
}

/// Largest instance the grid oracle accepts.
pub const ORACLE_MAX_APPS: usize = 4;
pub const ORACLE_MAX_STEPS: usize = 2000;

/// Best allocation on the grid `{m * grid_step : m >= 1}` with rates summing
/// to the budget, by exhaustive search. Intended for tests.
///
/// The search runs as a max-plus convolution over applications, which visits
/// every grid allocation implicitly because the objective is separable.
pub fn brute_force_oracle(s: &Scenario, grid_step: f64) -> Result<(Vec<Vec<f64>>, f64)> {
    let apps: Vec<(Utility, f64)> = s
        .ues
        .iter()
        .flat_map(|ue| ue.apps.iter().map(move |app| (app.utility, ue.beta * app.alpha)))
        .collect();
    if apps.len() > ORACLE_MAX_APPS {
        return Err(Error::Refused(format!("{} applications exceed the limit of {ORACLE_MAX_APPS}", apps.len())));
    }
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(domain(format!("grid step must be positive, got {grid_step}")));
    }
    let steps_f = s.budget / grid_step;
    if steps_f > ORACLE_MAX_STEPS as f64 + 1e-9 {
        return Err(Error::Refused(format!("{steps_f} grid steps exceed the limit of {ORACLE_MAX_STEPS}")));
    }
    let steps = steps_f.round() as usize;
    if (steps as f64 - steps_f).abs() > 1e-9 * steps_f.max(1.0) {
        return Err(domain(format!("grid step {grid_step} does not divide budget {}", s.budget)));
    }
    if steps < apps.len() {
        return Err(domain("budget holds fewer grid steps than applications"));
    }

    // value[k][m]: weighted log-utility of app k at m grid steps.
    let value: Vec<Vec<f64>> = apps
        .iter()
        .map(|(u, w)| {
            (0..=steps)
                .map(|m| if m == 0 { f64::NEG_INFINITY } else { w * u.log_eval(m as f64 * grid_step).unwrap() })
                .collect()
        })
        .collect();

    // best[n]: optimum of apps 0..=k using exactly n steps; choice[k][n]: steps given to app k.
    let mut best = value[0].clone();
    let mut choice = vec![(0..=steps).collect::<Vec<_>>()];
    for vals in value.iter().skip(1) {
        let mut next = vec![f64::NEG_INFINITY; steps + 1];
        let mut pick = vec![0usize; steps + 1];
        for n in 0..=steps {
            for m in 1..=n {
                let cand = best[n - m] + vals[m];
                if cand > next[n] {
                    next[n] = cand;
                    pick[n] = m;
                }
            }
        }
        best = next;
        choice.push(pick);
    }

    let mut grid = vec![0usize; apps.len()];
    let mut remaining = steps;
    for k in (0..apps.len()).rev() {
        grid[k] = choice[k][remaining];
        remaining -= grid[k];
    }

    let mut rates = Vec::with_capacity(s.ues.len());
    let mut it = grid.into_iter().map(|m| m as f64 * grid_step);
    for ue in &s.ues {
        rates.push(it.by_ref().take(ue.apps.len()).collect());
    }
    Ok((rates, best[steps]))
}

fn check_shape(s: &Scenario, rates: &[Vec<f64>]) -> Result<()> {
    if rates.len() != s.ues.len() {
        return Err(domain(format!("allocation has {} UEs, scenario has {}", rates.len(), s.ues.len())));
    }
    for (i, (ue, row)) in s.ues.iter().zip(rates).enumerate() {
        if row.len() != ue.apps.len() {
            return Err(domain(format!("UE {i}: allocation has {} apps, scenario has {}", row.len(), ue.apps.len())));
        }
    }
    Ok(())
}

/// Finds the price at which weighted demands `S_k^{-1}(p / w_k)` sum to
/// `budget`, and returns the demands meeting the budget with that price.
fn clear_market(apps: &[(Utility, f64)], budget: f64) -> Result<(Vec<f64>, f64)> {
    let demands = |p: f64| -> Vec<f64> { apps.iter().map(|(u, w)| u.slope_inverse_unchecked(p / w)).collect() };
    let total = |p: f64| -> f64 { demands(p).iter().sum() };

    let mut hi = PRICE_HI_START;
    let mut steps = 0;
    while total(hi) >= budget {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BRACKET_STEPS {
            return Err(Error::Internal(format!("no price brings demand below budget {budget}")));
        }
    }
    // Sigmoid demand grows only like ln(1/p), so the floor can be far down.
    let mut lo = PRICE_LO_START.min(hi);
    while total(lo) <= budget {
        if lo < 2.0 * f64::MIN_POSITIVE {
            return Err(domain(format!(
                "budget {budget} exceeds the demand at every representable price"
            )));
        }
        lo *= 0.5;
    }

    let (lo, hi) = bisect_decreasing(total, budget, lo, hi, 0.0);
    let above = demands(lo);
    let below = demands(hi);
    let d_above: f64 = above.iter().sum();
    let d_below: f64 = below.iter().sum();
    let theta = if d_above > d_below {
        ((budget - d_below) / (d_above - d_below)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let rates = below
        .iter()
        .zip(&above)
        .map(|(b, a)| b + theta * (a - b))
        .collect();
    Ok((rates, hi))
}
