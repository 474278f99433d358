//! Complete-conditional updates given the latent source counts.

use alloc::vec;
use alloc::vec::Vec;

use super::LatentSources;
use crate::distributions::{crt_unchecked, sample_gamma, GAMMA_FLOOR};
use crate::error::Result;
use crate::linalg::{pair_mass, Matrix};
use crate::math;
use crate::model::BptdState;
use crate::rng::RngStream;

/// `Γ(α + m, β + s)` for one `θ_ic` with `m` latent tokens and exposure `s`.
pub fn theta_posterior(alpha: f64, beta: f64, count: u64, exposure: f64) -> (f64, f64) {
    (alpha + count as f64, beta + exposure)
}

/// Posterior of `α_i` after integrating out `θ_i·`, given `tables` CRT
/// tables and the row exposures.
pub fn alpha_posterior(eps0: f64, tables: u64, beta: f64, exposures: &[f64]) -> (f64, f64) {
    let rate: f64 = exposures.iter().map(|&s| math::ln_1p(s / beta)).sum();
    (eps0 + tables as f64, eps0 + rate)
}

/// Posterior of `β_i` given `θ_i·`.
pub fn beta_posterior(eps0: f64, alpha: f64, communities: usize, theta_sum: f64) -> (f64, f64) {
    (eps0 + communities as f64 * alpha, eps0 + theta_sum)
}

/// Posterior of one core cell with prior shape `shape`, `n` tokens and
/// exposure `exposure`.
pub fn core_posterior(shape: f64, delta: f64, n: u64, exposure: f64) -> (f64, f64) {
    ((shape + n as f64).max(GAMMA_FLOOR), delta + exposure)
}

/// Posterior of `δ` given the sum of core prior shapes and the core sum.
pub fn delta_posterior(eps0: f64, shape_sum: f64, core_sum: f64) -> (f64, f64) {
    (eps0 + shape_sum, eps0 + core_sum)
}

/// Posterior of a shrinkage weight with prior `Γ(shape, rate)`, `tables`
/// CRT tables over its core cells and summed rate terms `q`.
pub fn weight_posterior(shape: f64, rate: f64, tables: u64, q: f64) -> (f64, f64) {
    (shape + tables as f64, rate + q)
}

/// Posterior of `ζ` given the summed `η↔`, `ν` and `ρ` weights.
pub fn zeta_posterior(eps0: f64, gamma0: f64, weight_sum: f64) -> (f64, f64) {
    (eps0 + 3.0 * gamma0, eps0 + weight_sum)
}

/// `M[c][d] + M[d][c]` where `M[c][d] = Σ_{k,r} λ[c,d,k,r] F_k P_r`.
fn symmetric_community_rate(state: &BptdState) -> Matrix {
    let p = &state.params;
    let f = p.phi.col_sums();
    let q = p.psi.col_sums();
    let c_n = p.theta.cols();
    let mut m = Matrix::zeros(c_n, c_n);
    for (r, &qr) in q.iter().enumerate() {
        for (k, &fk) in f.iter().enumerate() {
            let w = fk * qr;
            for (o, l) in m.as_mut_slice().iter_mut().zip(p.core.slice(k, r)) {
                *o += w * l;
            }
        }
    }
    let mut s = Matrix::zeros(c_n, c_n);
    for c in 0..c_n {
        for d in 0..c_n {
            s.set(c, d, m.get(c, d) + m.get(d, c));
        }
    }
    s
}

/// Exposure of each `θ_ic` for row `i`: `Σ_d Msym[c][d] (S_d − θ_id)`.
fn row_exposure(msym: &Matrix, col_sums: &[f64], row: &[f64], out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        let m = msym.row(c);
        *o = m
            .iter()
            .zip(col_sums.iter().zip(row))
            .map(|(x, (s, t))| x * (s - t).max(0.0))
            .sum();
    }
}

fn draw_theta_row(state: &mut BptdState, sources: &LatentSources, i: usize, expo: &[f64], col: &mut [f64], rng: &mut RngStream) -> Result<()> {
    let (a, b) = (state.alpha[i], state.beta[i]);
    let row = state.params.theta.row_mut(i);
    for (c, x) in row.iter_mut().enumerate() {
        let (shape, rate) = theta_posterior(a, b, sources.send(i, c) + sources.recv(i, c), expo[c]);
        let new = sample_gamma(shape, rate, rng)?;
        col[c] += new - *x;
        *x = new;
    }
    Ok(())
}

/// Draws every `θ_ic` given `α_i`, `β_i` and the latent counts.
pub fn update_theta(state: &mut BptdState, sources: &LatentSources, rng: &mut RngStream) -> Result<()> {
    let msym = symmetric_community_rate(state);
    let mut col = state.params.theta.col_sums();
    let mut expo = vec![0.0; state.params.theta.cols()];
    for i in 0..state.params.theta.rows() {
        row_exposure(&msym, &col, state.params.theta.row(i), &mut expo);
        draw_theta_row(state, sources, i, &expo, &mut col, rng)?;
    }
    Ok(())
}

/// Expected number of events country `i` takes part in through community
/// `c`: `θ_ic` times its exposure. Unused communities score near zero even
/// when their `θ` entries are large.
pub fn community_involvement(state: &BptdState) -> Matrix {
    let msym = symmetric_community_rate(state);
    let theta = &state.params.theta;
    let col = theta.col_sums();
    let mut out = Matrix::zeros(theta.rows(), theta.cols());
    let mut expo = vec![0.0; theta.cols()];
    for i in 0..theta.rows() {
        row_exposure(&msym, &col, theta.row(i), &mut expo);
        for (c, (o, e)) in out.row_mut(i).iter_mut().zip(&expo).enumerate() {
            *o = theta.get(i, c) * e;
        }
    }
    out
}

/// Each country's community of largest [`community_involvement`]; ties go to
/// the lower index.
pub fn primary_communities(state: &BptdState) -> Vec<usize> {
    let inv = community_involvement(state);
    (0..inv.rows())
        .map(|i| {
            let row = inv.row(i);
            let mut best = 0;
            for (c, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Per country: `α_i` with `θ_i·` integrated out (via CRT tables), then
/// `θ_i·` given the new `α_i`, then `β_i`.
pub fn update_alpha_beta(state: &mut BptdState, sources: &LatentSources, rng: &mut RngStream) -> Result<()> {
    let e = state.hyper.eps0;
    let msym = symmetric_community_rate(state);
    let c_n = state.params.theta.cols();
    let mut col = state.params.theta.col_sums();
    let mut expo = vec![0.0; c_n];
    for i in 0..state.params.theta.rows() {
        row_exposure(&msym, &col, state.params.theta.row(i), &mut expo);
        let alpha = state.alpha[i].max(GAMMA_FLOOR);
        let tables: u64 = (0..c_n)
            .map(|c| crt_unchecked(sources.send(i, c) + sources.recv(i, c), alpha, rng))
            .sum();
        let (shape, rate) = alpha_posterior(e, tables, state.beta[i], &expo);
        state.alpha[i] = sample_gamma(shape, rate, rng)?;
        draw_theta_row(state, sources, i, &expo, &mut col, rng)?;
        let theta_sum: f64 = state.params.theta.row(i).iter().sum();
        let (shape, rate) = beta_posterior(e, state.alpha[i], c_n, theta_sum);
        state.beta[i] = sample_gamma(shape, rate, rng)?;
    }
    Ok(())
}

/// Draws `φ` given `Θ`, `Ψ` and the core.
pub fn update_phi(state: &mut BptdState, sources: &LatentSources, rng: &mut RngStream) -> Result<()> {
    let p = &state.params;
    let x = pair_mass(&p.theta, &p.theta, &[]);
    let q = p.psi.col_sums();
    let mut expo = vec![0.0; p.phi.cols()];
    for (r, &qr) in q.iter().enumerate() {
        for (k, ek) in expo.iter_mut().enumerate() {
            let s: f64 = p.core.slice(k, r).iter().zip(x.as_slice()).map(|(l, m)| l * m).sum();
            *ek += qr * s;
        }
    }
    let e = state.hyper.eps0;
    for a in 0..state.params.phi.rows() {
        for (k, &ek) in expo.iter().enumerate() {
            let v = sample_gamma(e + sources.topic(a, k) as f64, e + ek, rng)?;
            state.params.phi.set(a, k, v);
        }
    }
    Ok(())
}

/// Draws `ψ` given `Θ`, `Φ` and the core over all dyads.
pub fn update_psi(state: &mut BptdState, sources: &LatentSources, rng: &mut RngStream) -> Result<()> {
    let x = pair_mass(&state.params.theta, &state.params.theta, &[]);
    update_psi_with(state, sources, &x, rng)
}

/// Draws `ψ` with community pair mass `x` (which may exclude dyads).
pub fn update_psi_with(state: &mut BptdState, sources: &LatentSources, x: &Matrix, rng: &mut RngStream) -> Result<()> {
    let p = &state.params;
    let f = p.phi.col_sums();
    let mut expo = vec![0.0; p.psi.cols()];
    for (r, er) in expo.iter_mut().enumerate() {
        for (k, &fk) in f.iter().enumerate() {
            let s: f64 = p.core.slice(k, r).iter().zip(x.as_slice()).map(|(l, m)| l * m).sum();
            *er += fk * s;
        }
    }
    let e = state.hyper.eps0;
    for t in 0..state.params.psi.rows() {
        for (r, &er) in expo.iter().enumerate() {
            let v = sample_gamma(e + sources.regime(t, r) as f64, e + er, rng)?;
            state.params.psi.set(t, r, v);
        }
    }
    Ok(())
}

/// Per-cell exposure `X_cd F_k P_r`, indexed like the core.
fn core_exposure(state: &BptdState) -> Vec<f64> {
    let p = &state.params;
    let x = pair_mass(&p.theta, &p.theta, &[]);
    let f = p.phi.col_sums();
    let q = p.psi.col_sums();
    let mut out = Vec::with_capacity(p.core.as_slice().len());
    for &qr in &q {
        for &fk in &f {
            let w = fk * qr;
            out.extend(x.as_slice().iter().map(|m| w * m));
        }
    }
    out
}

/// Draws every core cell `λ[c,d,k,r]`.
pub fn update_core(state: &mut BptdState, sources: &LatentSources, rng: &mut RngStream) -> Result<()> {
    let expo = core_exposure(state);
    let d = state.dims();
    let mut idx = 0;
    for r in 0..d.regimes {
        for k in 0..d.topics {
            for c in 0..d.communities {
                for dd in 0..d.communities {
                    let (shape, rate) =
                        core_posterior(state.core_shape(c, dd, k, r), state.delta, sources.core[idx], expo[idx]);
                    let v = sample_gamma(shape, rate, rng)?;
                    state.params.core.as_mut_slice()[idx] = v;
                    idx += 1;
                }
            }
        }
    }
    Ok(())
}

/// Draws the shrinkage weights with the core integrated out, then the core,
/// `δ` and `ζ`.
///
/// With `λ` collapsed each cell's token count is negative binomial in its
/// prior shape; CRT tables make every weight conditionally gamma.
pub fn update_weights(state: &mut BptdState, sources: &LatentSources, rng: &mut RngStream) -> Result<()> {
    let d = state.dims();
    let (c_n, k_n, r_n) = (d.communities, d.topics, d.regimes);
    let e = state.hyper.eps0;
    let g = state.hyper.gamma0;
    let expo = core_exposure(state);
    let n_cells = expo.len();
    let idx = |c: usize, dd: usize, k: usize, r: usize| ((r * k_n + k) * c_n + c) * c_n + dd;

    let mut tables = vec![0u64; n_cells];
    let mut q = vec![0.0; n_cells];
    for r in 0..r_n {
        for k in 0..k_n {
            for c in 0..c_n {
                for dd in 0..c_n {
                    let i = idx(c, dd, k, r);
                    let shape = state.core_shape(c, dd, k, r).max(GAMMA_FLOOR);
                    tables[i] = crt_unchecked(sources.core[i], shape, rng);
                    q[i] = math::ln_1p(expo[i] / state.delta);
                }
            }
        }
    }

    // η↻_c touches only the diagonal cells (c, c, ·, ·)
    for c in 0..c_n {
        let (mut l, mut rate) = (0u64, 0.0);
        for r in 0..r_n {
            for k in 0..k_n {
                let i = idx(c, c, k, r);
                l += tables[i];
                rate += state.eta_between[c] * state.nu[k] * state.rho[r] * q[i];
            }
        }
        let (a, b) = weight_posterior(e, e, l, rate);
        state.eta_within[c] = sample_gamma(a, b, rng)?;
    }

    for c in 0..c_n {
        let (mut l, mut rate) = (0u64, 0.0);
        for r in 0..r_n {
            for k in 0..k_n {
                let nr = state.nu[k] * state.rho[r];
                for dd in 0..c_n {
                    if dd == c {
                        let i = idx(c, c, k, r);
                        l += tables[i];
                        rate += state.eta_within[c] * nr * q[i];
                    } else {
                        let (i, j) = (idx(c, dd, k, r), idx(dd, c, k, r));
                        l += tables[i] + tables[j];
                        rate += state.eta_between[dd] * nr * (q[i] + q[j]);
                    }
                }
            }
        }
        let (a, b) = weight_posterior(g / c_n as f64, state.zeta, l, rate);
        state.eta_between[c] = sample_gamma(a, b, rng)?;
    }

    let community = |s: &BptdState, c: usize, dd: usize| {
        if c == dd {
            s.eta_within[c] * s.eta_between[c]
        } else {
            s.eta_between[c] * s.eta_between[dd]
        }
    };

    for k in 0..k_n {
        let (mut l, mut rate) = (0u64, 0.0);
        for r in 0..r_n {
            for c in 0..c_n {
                for dd in 0..c_n {
                    let i = idx(c, dd, k, r);
                    l += tables[i];
                    rate += community(state, c, dd) * state.rho[r] * q[i];
                }
            }
        }
        let (a, b) = weight_posterior(g / k_n as f64, state.zeta, l, rate);
        state.nu[k] = sample_gamma(a, b, rng)?;
    }

    for r in 0..r_n {
        let (mut l, mut rate) = (0u64, 0.0);
        for k in 0..k_n {
            for c in 0..c_n {
                for dd in 0..c_n {
                    let i = idx(c, dd, k, r);
                    l += tables[i];
                    rate += community(state, c, dd) * state.nu[k] * q[i];
                }
            }
        }
        let (a, b) = weight_posterior(g / r_n as f64, state.zeta, l, rate);
        state.rho[r] = sample_gamma(a, b, rng)?;
    }

    let mut shape_sum = 0.0;
    for r in 0..r_n {
        for k in 0..k_n {
            for c in 0..c_n {
                for dd in 0..c_n {
                    let i = idx(c, dd, k, r);
                    let shape = state.core_shape(c, dd, k, r);
                    shape_sum += shape;
                    let (a, b) = core_posterior(shape, state.delta, sources.core[i], expo[i]);
                    state.params.core.as_mut_slice()[i] = sample_gamma(a, b, rng)?;
                }
            }
        }
    }

    let (a, b) = delta_posterior(e, shape_sum, state.params.core.sum());
    state.delta = sample_gamma(a, b, rng)?;

    let weight_sum: f64 =
        state.eta_between.iter().sum::<f64>() + state.nu.iter().sum::<f64>() + state.rho.iter().sum::<f64>();
    let (a, b) = zeta_posterior(e, g, weight_sum);
    state.zeta = sample_gamma(a, b, rng)?;
    Ok(())
}
