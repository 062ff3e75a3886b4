//! Monte Carlo default cascade on an exposure network.
//!
//! Each round every bank is tested against the state vector from the start
//! of the round (synchronous update). A bank's assets are its initial assets
//! minus the unrecovered part of loans to distressed borrowers:
//!
//! `A_i(r) = A_i(0) - (1 - q) * sum_{j distressed} w(i -> j)`
//!
//! which equals `g_i + sum_j w S_j + q sum_j w (1 - S_j)` with
//! `g_i = A_i(0) - theta A_i(0)`. A bank is distressed when `A_i(r) < L_i`.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::LocationScaleDistribution;
use crate::error::{Error, Result};
use crate::meanfield::{self, MeanFieldParams};
use crate::netgen::{assign_loans, ExposureNetwork, NetworkSpec};
use crate::rng::{trial_stream, Stream};

pub const HISTOGRAM_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recovery {
    /// Distressed banks stay distressed.
    #[default]
    Monotone,
    /// Every round re-applies the balance-sheet test, so banks may recover.
    Reversible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub theta: f64,
    pub q: f64,
    pub recovery: Recovery,
    pub max_rounds: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            theta: 0.3,
            q: 0.0,
            recovery: Recovery::Monotone,
            max_rounds: 10_000,
        }
    }
}

impl CascadeConfig {
    pub fn new(theta: f64, q: f64, recovery: Recovery, max_rounds: usize) -> Result<Self> {
        let cfg = CascadeConfig {
            theta,
            q,
            recovery,
            max_rounds,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid(
                "theta",
                format!("must lie in [0, 1], got {}", self.theta),
            ));
        }
        // Over-collateralization (q > 1) is outside the modeled scope.
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::invalid("q", format!("must lie in [0, 1], got {}", self.q)));
        }
        if self.max_rounds == 0 {
            return Err(Error::invalid("max_rounds", "must be at least 1"));
        }
        Ok(())
    }
}

/// Balance-sheet sampling parameters. Defaults are the baseline setup
/// (500 banks, assets 1000 +/- 30, liabilities 890 +/- 50).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceSheetSpec {
    pub m: usize,
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_l: f64,
    pub sigma_l: f64,
    pub dist: LocationScaleDistribution,
}

impl Default for BalanceSheetSpec {
    fn default() -> Self {
        BalanceSheetSpec {
            m: 500,
            mu_a: 1000.0,
            sigma_a: 30.0,
            mu_l: 890.0,
            sigma_l: 50.0,
            dist: LocationScaleDistribution::Normal,
        }
    }
}

impl BalanceSheetSpec {
    pub fn with_mu_l(self, mu_l: f64) -> Self {
        BalanceSheetSpec { mu_l, ..self }
    }

    pub fn with_dist(self, dist: LocationScaleDistribution) -> Self {
        BalanceSheetSpec { dist, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("M", "need at least one bank"));
        }
        for (name, v) in [("sigma_A", self.sigma_a), ("sigma_L", self.sigma_l)] {
            if !(v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Combined scale `sqrt(sigma_A^2 + sigma_L^2)`.
    pub fn sigma(&self) -> f64 {
        self.sigma_a.hypot(self.sigma_l)
    }

    /// The simulator's x-axis, `(mu_L - mu_A) / sigma`, identified with `a - b`.
    pub fn shortfall(&self) -> f64 {
        (self.mu_l - self.mu_a) / self.sigma()
    }

    /// Mean-field counterpart with `zJ = theta mu_A`, including the
    /// collateral shift for recovery fraction `q`.
    pub fn meanfield_params(&self, theta: f64, q: f64) -> Result<MeanFieldParams> {
        let sigma = self.sigma();
        let zj = theta * self.mu_a;
        let mu_g = self.mu_a - zj;
        meanfield::collateral_transform(self.mu_l, mu_g, zj, sigma, q, self.dist)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankPopulation {
    pub assets0: Vec<f64>,
    pub liabilities: Vec<f64>,
    /// `true` = operating, `false` = distressed.
    pub state: Vec<bool>,
}

impl BankPopulation {
    pub fn new(assets0: Vec<f64>, liabilities: Vec<f64>) -> Result<Self> {
        if assets0.len() != liabilities.len() {
            return Err(Error::invalid("liabilities", "length must match assets"));
        }
        let state = vec![true; assets0.len()];
        Ok(BankPopulation {
            assets0,
            liabilities,
            state,
        })
    }

    pub fn len(&self) -> usize {
        self.assets0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets0.is_empty()
    }

    pub fn with_state(mut self, state: Vec<bool>) -> Result<Self> {
        if state.len() != self.len() {
            return Err(Error::invalid("state", "length must match the population"));
        }
        self.state = state;
        Ok(self)
    }

    /// Fraction passing the stand-alone balance-sheet test `A(0) >= L`.
    pub fn solvent_fraction(&self) -> f64 {
        let ok = self
            .assets0
            .iter()
            .zip(&self.liabilities)
            .filter(|(a, l)| a >= l)
            .count();
        ok as f64 / self.len() as f64
    }
}

fn draw<R: RngCore + ?Sized>(n: usize, mu: f64, sigma: f64, dist: &LocationScaleDistribution, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| mu + sigma * dist.sample_standard(rng)).collect()
}

/// Draws `A_i(0)` and `L_i` independently per bank, each from its own
/// stream. Negative draws are kept.
pub fn initialize_banks<R1, R2>(
    spec: &BalanceSheetSpec,
    asset_rng: &mut R1,
    liability_rng: &mut R2,
) -> Result<BankPopulation>
where
    R1: RngCore + ?Sized,
    R2: RngCore + ?Sized,
{
    spec.validate()?;
    let assets0 = draw(spec.m, spec.mu_a, spec.sigma_a, &spec.dist, asset_rng);
    let liabilities = draw(spec.m, spec.mu_l, spec.sigma_l, &spec.dist, liability_rng);
    BankPopulation::new(assets0, liabilities)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    pub p_final: f64,
    pub rounds: usize,
    /// Operating banks after each round that changed the state (the first
    /// round is always recorded).
    pub survivors_per_round: Vec<usize>,
    pub final_state: Vec<bool>,
}

struct Engine<'a> {
    assets0: &'a [f64],
    liabilities: &'a [f64],
    net: &'a ExposureNetwork,
    lenders: Vec<Vec<(usize, f64)>>,
    haircut: f64,
}

impl Engine<'_> {
    fn losses(&self, state: &[bool]) -> Vec<f64> {
        (0..state.len())
            .map(|i| {
                self.net
                    .borrowers(i)
                    .iter()
                    .zip(self.net.loans(i))
                    .filter(|(j, _)| !state[**j])
                    .map(|(_, w)| *w)
                    .sum()
            })
            .collect()
    }

    fn solvent(&self, i: usize, loss: f64) -> bool {
        // A == L counts as operating.
        !(self.assets0[i] - self.haircut * loss < self.liabilities[i])
    }
}

/// Runs the synchronous cascade from `banks.state` until no state changes.
pub fn run_cascade(banks: &BankPopulation, net: &ExposureNetwork, config: &CascadeConfig) -> Result<CascadeResult> {
    config.validate()?;
    let m = banks.len();
    if net.len() != m {
        return Err(Error::invalid(
            "network",
            format!("network has {} banks, population has {m}", net.len()),
        ));
    }
    let engine = Engine {
        assets0: &banks.assets0,
        liabilities: &banks.liabilities,
        net,
        lenders: match config.recovery {
            Recovery::Monotone => net.lenders(),
            Recovery::Reversible => Vec::new(),
        },
        haircut: 1.0 - config.q,
    };
    match config.recovery {
        Recovery::Monotone => run_monotone(&engine, banks.state.clone(), config.max_rounds),
        Recovery::Reversible => run_reversible(&engine, banks.state.clone(), config.max_rounds),
    }
}

fn finish(state: Vec<bool>, survivors_per_round: Vec<usize>) -> CascadeResult {
    let alive = survivors_per_round.last().copied().unwrap_or(0);
    CascadeResult {
        p_final: alive as f64 / state.len().max(1) as f64,
        rounds: survivors_per_round.len(),
        survivors_per_round,
        final_state: state,
    }
}

fn run_monotone(engine: &Engine<'_>, mut state: Vec<bool>, max_rounds: usize) -> Result<CascadeResult> {
    let m = state.len();
    let mut loss = engine.losses(&state);
    let mut alive = state.iter().filter(|s| **s).count();
    let mut survivors = Vec::new();
    let mut failing = Vec::new();
    loop {
        failing.clear();
        failing.extend((0..m).filter(|&i| state[i] && !engine.solvent(i, loss[i])));
        if failing.is_empty() {
            if survivors.is_empty() {
                survivors.push(alive);
            }
            return Ok(finish(state, survivors));
        }
        if survivors.len() == max_rounds {
            return Err(Error::RoundLimit {
                rounds: max_rounds,
                partial: Box::new(finish(state, survivors)),
            });
        }
        for &d in &failing {
            state[d] = false;
            for &(lender, w) in &engine.lenders[d] {
                loss[lender] += w;
            }
        }
        alive -= failing.len();
        survivors.push(alive);
    }
}

fn run_reversible(engine: &Engine<'_>, mut state: Vec<bool>, max_rounds: usize) -> Result<CascadeResult> {
    let m = state.len();
    let mut survivors = Vec::new();
    let mut previous: Option<Vec<bool>> = None;
    loop {
        let loss = engine.losses(&state);
        let next: Vec<bool> = (0..m).map(|i| engine.solvent(i, loss[i])).collect();
        if next == state {
            if survivors.is_empty() {
                survivors.push(state.iter().filter(|s| **s).count());
            }
            return Ok(finish(state, survivors));
        }
        if survivors.len() == max_rounds || previous.as_ref() == Some(&next) {
            // Either out of rounds or locked in a two-round cycle.
            let rounds = survivors.len();
            return Err(Error::RoundLimit {
                rounds,
                partial: Box::new(finish(state, survivors)),
            });
        }
        survivors.push(next.iter().filter(|s| **s).count());
        previous = Some(std::mem::replace(&mut state, next));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub p_final: f64,
    pub rounds: usize,
    pub hit_round_limit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mean_p: f64,
    pub std_p: f64,
    /// Counts over [`HISTOGRAM_BINS`] equal bins on [0, 1]; `p = 1` falls in
    /// the last bin.
    pub histogram: Vec<u64>,
    pub round_limit_hits: usize,
    pub trials: Vec<TrialOutcome>,
}

impl EnsembleStats {
    pub fn from_trials(trials: Vec<TrialOutcome>) -> Self {
        let n = trials.len();
        let mean_p = trials.iter().map(|t| t.p_final).sum::<f64>() / n.max(1) as f64;
        let std_p = if n > 1 {
            (trials.iter().map(|t| (t.p_final - mean_p).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut histogram = vec![0u64; HISTOGRAM_BINS];
        for t in &trials {
            histogram[histogram_bin(t.p_final)] += 1;
        }
        EnsembleStats {
            mean_p,
            std_p,
            histogram,
            round_limit_hits: trials.iter().filter(|t| t.hit_round_limit).count(),
            trials,
        }
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.p_final).collect()
    }

    /// Fraction of trials with `lo <= p <= hi`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let k = self
            .trials
            .iter()
            .filter(|t| t.p_final >= lo && t.p_final <= hi)
            .count();
        k as f64 / self.trials.len().max(1) as f64
    }
}

pub fn histogram_bin(p: f64) -> usize {
    ((p * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

fn outcome(trial: usize, res: Result<CascadeResult>) -> Result<TrialOutcome> {
    match res {
        Ok(r) => Ok(TrialOutcome {
            trial,
            p_final: r.p_final,
            rounds: r.rounds,
            hit_round_limit: false,
        }),
        Err(Error::RoundLimit { partial, .. }) => Ok(TrialOutcome {
            trial,
            p_final: partial.p_final,
            rounds: partial.rounds,
            hit_round_limit: true,
        }),
        Err(e) => Err(e),
    }
}

/// Everything one trial draws, before liabilities are shifted by `mu_L`.
struct TrialDraw {
    net: ExposureNetwork,
    assets0: Vec<f64>,
    liability_shocks: Vec<f64>,
}

fn draw_trial(
    network: &NetworkSpec,
    sheet: &BalanceSheetSpec,
    theta: f64,
    seed: u64,
    trial: usize,
) -> Result<TrialDraw> {
    let t = trial as u64;
    let net = network.generate(sheet.m, &mut trial_stream(seed, t, Stream::Network))?;
    let assets0 = draw(
        sheet.m,
        sheet.mu_a,
        sheet.sigma_a,
        &sheet.dist,
        &mut trial_stream(seed, t, Stream::Assets),
    );
    let liability_shocks = draw(
        sheet.m,
        0.0,
        sheet.sigma_l,
        &sheet.dist,
        &mut trial_stream(seed, t, Stream::Liabilities),
    );
    let net = assign_loans(net, theta, &assets0)?;
    Ok(TrialDraw {
        net,
        assets0,
        liability_shocks,
    })
}

impl TrialDraw {
    fn run(&self, mu_l: f64, config: &CascadeConfig) -> Result<CascadeResult> {
        let liabilities = self.liability_shocks.iter().map(|z| mu_l + z).collect();
        let banks = BankPopulation::new(self.assets0.clone(), liabilities)?;
        run_cascade(&banks, &self.net, config)
    }
}

/// Runs `trials` independent cascades. Trial `k` draws from substreams of
/// `seed` keyed by `k`, so results do not depend on scheduling.
pub fn monte_carlo(
    network: &NetworkSpec,
    sheet: &BalanceSheetSpec,
    config: &CascadeConfig,
    trials: usize,
    seed: u64,
) -> Result<EnsembleStats> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    sheet.validate()?;
    config.validate()?;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|k| {
            let draw = draw_trial(network, sheet, config.theta, seed, k)?;
            outcome(k, draw.run(sheet.mu_l, config))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleStats::from_trials(outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mu_l: f64,
    /// `(mu_L - mu_A) / sigma`.
    pub shortfall: f64,
    pub stats: EnsembleStats,
}

/// [`monte_carlo`] over a grid of mean liabilities. Each trial keeps its
/// draws across the grid, so the result at
/// every `mu_L` equals a standalone `monte_carlo` call with the same seed.
pub fn sweep_liabilities(
    network: &NetworkSpec,
    sheet: &BalanceSheetSpec,
    config: &CascadeConfig,
    mu_l_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    sheet.validate()?;
    config.validate()?;
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|k| {
            let draw = draw_trial(network, sheet, config.theta, seed, k)?;
            mu_l_grid
                .iter()
                .map(|&mu_l| outcome(k, draw.run(mu_l, config)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mu_l_grid
        .iter()
        .enumerate()
        .map(|(g, &mu_l)| {
            let outcomes = per_trial.iter().map(|row| row[g]).collect();
            SweepPoint {
                mu_l,
                shortfall: sheet.with_mu_l(mu_l).shortfall(),
                stats: EnsembleStats::from_trials(outcomes),
            }
        })
        .collect())
}

/// `|mean_p - p*|` with `p*` the mean-field equilibrium reached from `p0`.
pub fn compare_meanfield(stats: &EnsembleStats, params: &MeanFieldParams, p0: f64) -> Result<f64> {
    Ok((stats.mean_p - meanfield::equilibrium(params, p0)?).abs())
}

/// Euclidean norm of the per-point mean-field errors along a sweep.
pub fn sweep_error_norm(
    points: &[SweepPoint],
    sheet: &BalanceSheetSpec,
    config: &CascadeConfig,
    p0: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    for pt in points {
        let params = sheet.with_mu_l(pt.mu_l).meanfield_params(config.theta, config.q)?;
        acc += compare_meanfield(&pt.stats, &params, p0)?.powi(2);
    }
    Ok(acc.sqrt())
}
