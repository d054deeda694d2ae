//! Feasibility, training-overhead and rate analysis for the zoom tracker.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::beamform::{dirichlet_sinc, max_split_phase, ArrayGeometry};
use crate::error::{Error, Result};
use crate::syscfg::FrequencyGrid;

/// Outcome of the delay-network feasibility check max_m |P (xi_m - 1)| < 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppFeasibility {
    pub feasible: bool,
    pub max_split: f64,
    /// 1 - max_split.
    pub margin: f64,
}

pub fn dpp_feasible(geom: ArrayGeometry, grid: &FrequencyGrid) -> DppFeasibility {
    let max_split = max_split_phase(geom, grid);
    DppFeasibility {
        feasible: max_split < 1.0,
        max_split,
        margin: 1.0 - max_split,
    }
}

/// gamma_{t,m} = P (1 - xi_m) (2t - xi_1 + 2 xi_M xi_1 / (xi_M - xi_1)), 1-based t and m.
pub fn gamma(t: usize, m: usize, geom: ArrayGeometry, grid: &FrequencyGrid) -> Result<f64> {
    let zc = grid.zoom_constant()?;
    Ok(gamma_with(t, grid.xi_at(m), geom.p() as f64, grid.xi_first(), zc))
}

fn gamma_with(t: usize, xi_m: f64, p: f64, xi_1: f64, zc: f64) -> f64 {
    p * (1.0 - xi_m) * (2.0 * t as f64 - xi_1 + zc)
}

/// How the zoom fan is laid out relative to the previous direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FanOrientation {
    /// Subcarrier 1 of slot 1 probes theta - alpha for every theta.
    Ascending,
    /// Ascending for theta <= 0 and mirrored for theta > 0, which keeps the
    /// TD phases small on both halves of the angular range.
    FollowSign,
}

/// Signed half-range for a fan around `theta`: `alpha` for an ascending fan,
/// `-alpha` when the fan is mirrored.
pub fn oriented_alpha(theta: f64, alpha: f64, orientation: FanOrientation) -> f64 {
    match orientation {
        FanOrientation::FollowSign if theta > 0.0 => -alpha,
        _ => alpha,
    }
}

/// Smallest slot count satisfying every TD-phase constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadBoundReport {
    pub t_min: usize,
    /// (t, m, theta) of the tightest constraint at `t_min`, 1-based t and m.
    pub binding: (usize, usize, f64),
    /// |P (1 - xi_m)(theta - alpha) T + gamma_{t,m} alpha| / T at the binding entry.
    pub binding_ratio: f64,
    /// gamma_{t,m} for t in 1..=t_min (rows) and m in 1..=M (columns).
    pub gamma_table: Vec<Vec<f64>>,
}

/// Upper end of the T search.
pub const T_SEARCH_LIMIT: usize = 4096;

/// Largest |beta| / 1 over slots and subcarriers when a fan of `slots` slots
/// around `theta` with signed half-range `alpha` is built; returns (ratio, t, m).
fn worst_td_phase(theta: f64, alpha: f64, slots: usize, p: f64, grid: &FrequencyGrid, zc: f64) -> (f64, usize, usize) {
    let xi_1 = grid.xi_first();
    let t_f = slots as f64;
    let mut worst = (f64::MIN, 1, 1);
    for t in 1..=slots {
        for (i, &xi) in grid.xi().iter().enumerate() {
            let lhs = p * (1.0 - xi) * (theta - alpha) * t_f + gamma_with(t, xi, p, xi_1, zc) * alpha;
            let r = lhs.abs() / t_f;
            if r > worst.0 {
                worst = (r, t, i + 1);
            }
        }
    }
    worst
}

/// Smallest T such that |P(1 - xi_m)(theta - alpha) T + gamma_{t,m} alpha| <= T for
/// all t <= T, all m and every direction theta in [-1, 1] (checked at the ends
/// of each affine piece).
pub fn t_min(
    geom: ArrayGeometry,
    grid: &FrequencyGrid,
    alpha: f64,
    orientation: FanOrientation,
) -> Result<OverheadBoundReport> {
    let feas = dpp_feasible(geom, grid);
    if !feas.feasible {
        return Err(Error::DppInfeasible {
            max_split: feas.max_split,
        });
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::validation("alpha", "must be > 0"));
    }
    let zc = grid.zoom_constant()?;
    let p = geom.p() as f64;
    // A mirrored fan at theta has |beta| equal to the ascending fan at -theta,
    // so the sign-following layout only needs theta in [-1, 0].
    let thetas: &[f64] = match orientation {
        FanOrientation::Ascending => &[-1.0, 1.0],
        FanOrientation::FollowSign => &[-1.0, 0.0],
    };
    for slots in 1..=T_SEARCH_LIMIT {
        let mut worst = (f64::MIN, 1, 1, 0.0);
        for &theta in thetas {
            let (r, t, m) = worst_td_phase(theta, alpha, slots, p, grid, zc);
            if r > worst.0 {
                worst = (r, t, m, theta);
            }
        }
        if worst.0 <= 1.0 {
            let gamma_table = (1..=slots)
                .map(|t| {
                    grid.xi()
                        .iter()
                        .map(|&xi| gamma_with(t, xi, p, grid.xi_first(), zc))
                        .collect()
                })
                .collect();
            return Ok(OverheadBoundReport {
                t_min: slots,
                binding: (worst.1, worst.2, worst.3),
                binding_ratio: worst.0,
                gamma_table,
            });
        }
    }
    Err(Error::validation(
        "alpha",
        format!("no slot count up to {T_SEARCH_LIMIT} satisfies the TD-phase constraint"),
    ))
}

/// zeta = xi_M / (xi_1 + B / (f_c M)).
pub fn zeta(grid: &FrequencyGrid) -> f64 {
    let m = grid.len() as f64;
    grid.xi_last() / (grid.xi_first() + grid.bandwidth_hz() / (grid.carrier_hz() * m))
}

/// Worst-case distance from an in-range direction to its nearest candidate, zeta alpha / (T M).
pub fn quantization_bound(alpha: f64, slots: usize, grid: &FrequencyGrid) -> f64 {
    zeta(grid) * alpha / (slots as f64 * grid.len() as f64)
}

/// Exact worst-case nearest-candidate distance of a zoom fan, zeta alpha / (T (M - 1)).
/// It is half the candidate spacing at the m = 1 end, 2 xi_M alpha / (T (M - 1) xi_2).
pub fn worst_case_quantization(alpha: f64, slots: usize, grid: &FrequencyGrid) -> f64 {
    zeta(grid) * alpha / (slots as f64 * (grid.len() as f64 - 1.0))
}

/// Smallest T whose zoom fans around the single direction `theta_i` (laid out per
/// `orientation`) keep every TD phase within [-1, 1].
pub fn t_min_at(
    geom: ArrayGeometry,
    grid: &FrequencyGrid,
    theta_i: f64,
    alpha: f64,
    orientation: FanOrientation,
) -> Result<usize> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::validation("alpha", "must be > 0"));
    }
    let zc = grid.zoom_constant()?;
    let p = geom.p() as f64;
    let a = oriented_alpha(theta_i, alpha, orientation);
    (1..=T_SEARCH_LIMIT)
        .find(|&slots| worst_td_phase(theta_i, a, slots, p, grid, zc).0 <= 1.0)
        .ok_or_else(|| {
            Error::validation(
                "alpha",
                format!("no slot count up to {T_SEARCH_LIMIT} fits theta_i = {theta_i}"),
            )
        })
}

/// Achievable-rate summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Sum over users and subcarriers divided by M (bits/s/Hz).
    pub sum_rate: f64,
    /// Sum over users and subcarriers.
    pub raw_sum: f64,
    /// K x M table of log2(1 + SINR).
    pub per_user_per_subcarrier: Vec<Vec<f64>>,
    pub lower_bound: Option<Vec<Vec<f64>>>,
}

/// Rates from the effective K x K products E_m = H_m A_m D_m: SINR of user k is
/// |E_kk|^2 / (sum_{j != k} |E_kj|^2 + sigma2).
pub fn sum_rate_effective(effective: &[DMatrix<Complex64>], sigma2: f64) -> RateReport {
    let k = effective.first().map_or(0, |e| e.nrows());
    let mut table = vec![vec![0.0; effective.len()]; k];
    for (m, e) in effective.iter().enumerate() {
        for (u, row) in table.iter_mut().enumerate() {
            let desired = e[(u, u)].norm_sqr();
            let interference: f64 = (0..e.ncols()).filter(|&j| j != u).map(|j| e[(u, j)].norm_sqr()).sum();
            row[m] = (1.0 + desired / (interference + sigma2)).log2();
        }
    }
    let raw_sum: f64 = table.iter().flatten().sum();
    RateReport {
        sum_rate: raw_sum / effective.len().max(1) as f64,
        raw_sum,
        per_user_per_subcarrier: table,
        lower_bound: None,
    }
}

/// Rates for channels H_m (K x N), analog beamformers A_m (N x K) and digital precoders D_m (K x K).
pub fn sum_rate(
    h: &[DMatrix<Complex64>],
    a: &[DMatrix<Complex64>],
    d: &[DMatrix<Complex64>],
    sigma2: f64,
) -> Result<RateReport> {
    if h.len() != a.len() || h.len() != d.len() {
        return Err(Error::validation("sum_rate", "one H, A and D per subcarrier required"));
    }
    let eff: Vec<_> = h.iter().zip(a).zip(d).map(|((h, a), d)| h * a * d).collect();
    Ok(sum_rate_effective(&eff, sigma2))
}

/// Parameters of the closed-form rate bound for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBoundParams {
    pub theta: f64,
    pub alpha: f64,
    pub slots: usize,
    pub rho: f64,
    pub sigma2: f64,
    pub gain_at_carrier: f64,
}

/// Lower bound on the ZF rate of a single-LoS user whose estimate is within the
/// quantization bound: log2(1 + rho xi_m^2 g_c^2 eta_min / sigma2), where
/// eta_min = Xi_{K_d}^2(zeta xi_m P alpha / (T M)) Xi_P^2(|(1 - xi_M) theta| + zeta alpha / (T M)).
pub fn rate_lower_bound(geom: ArrayGeometry, grid: &FrequencyGrid, prm: &RateBoundParams) -> Vec<f64> {
    let q = quantization_bound(prm.alpha, prm.slots, grid);
    let p = geom.p();
    let split = ((1.0 - grid.xi_last()) * prm.theta).abs();
    let intra = dirichlet_sinc(p, split + q).powi(2);
    grid.xi()
        .iter()
        .map(|&xi| {
            let inter = dirichlet_sinc(geom.delays_per_chain, xi * p as f64 * q).powi(2);
            let eta_min = inter * intra;
            (1.0 + prm.rho * xi * xi * prm.gain_at_carrier.powi(2) * eta_min / prm.sigma2).log2()
        })
        .collect()
}
