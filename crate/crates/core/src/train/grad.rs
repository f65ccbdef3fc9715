//! Analytic (sub)gradient of the weighted multi-group InfoNCE loss with
//! respect to both encoders' parameters.
//!
//! Forward: every (query, candidate) pair gets one dot-product table at the
//! largest ladder budget; each group reads its prefix block of that table.
//! Backward: each MaxSim max routes its gradient to the argmax row (lowest
//! index on exact ties), then through row normalization
//! `∂e/∂v = (I − e eᵀ) / ‖v‖` and the linear encoder.

use super::encoder::{Encoded, ToyEncoderParams};
use super::loss::{check_tau, check_weights, infonce_group_loss, log_sum_exp, LossBreakdown};
use super::TrainingBatch;
use crate::budget::{validate_ladder, BudgetLadder};
use crate::error::{Error, Result};
use crate::lateint::dot;

/// Minimum gap between the two largest similarities in any MaxSim max for the
/// gradient to be considered valid.
pub const TIE_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub w: Vec<f64>,
    pub m: Vec<f64>,
}

impl ParamGradient {
    fn zeros_like(p: &ToyEncoderParams) -> Self {
        Self {
            w: vec![0.0; p.w.len()],
            m: vec![0.0; p.m.len()],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.w.iter().chain(&self.m).fold(0.0, |a, &x| a.max(x.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub query: ParamGradient,
    pub candidate: ParamGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientOptions {
    /// Reject configurations whose top-2 MaxSim similarities are closer than
    /// this. `None` disables the guard (exact ties still go to the lowest index).
    pub tie_epsilon: Option<f64>,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self {
            tie_epsilon: Some(TIE_EPSILON),
        }
    }
}

/// Loss and gradient with the default near-tie guard.
pub fn loss_gradient(
    params_q: &ToyEncoderParams,
    params_c: &ToyEncoderParams,
    batch: &TrainingBatch,
    ladder: &BudgetLadder,
    tau: f64,
    weights: &[f64],
) -> Result<(LossBreakdown, Gradients)> {
    loss_gradient_with(params_q, params_c, batch, ladder, tau, weights, GradientOptions::default())
}

struct MaxPick {
    value: f64,
    arg: usize,
}

/// Max over the first `r_c` entries of a table row; reports the top-2 gap.
fn pick(row: &[f64], r_c: usize, guard: Option<f64>) -> Result<MaxPick> {
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    let mut arg = 0;
    for (j, &x) in row[..r_c].iter().enumerate() {
        if x > best {
            second = best;
            best = x;
            arg = j;
        } else if x > second {
            second = x;
        }
    }
    if let Some(eps) = guard {
        let gap = best - second;
        if r_c > 1 && gap < eps {
            return Err(Error::TieNearMax { gap });
        }
    }
    Ok(MaxPick { value: best, arg })
}

fn dot_table(q: &[f64], c: &[f64], r_q: usize, r_c: usize, dim: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(r_q * r_c);
    for qi in q[..r_q * dim].chunks_exact(dim) {
        for cj in c[..r_c * dim].chunks_exact(dim) {
            t.push(dot(qi, cj));
        }
    }
    t
}

/// Push row-unit gradients back through normalization and the linear map.
fn backprop_encoder(p: &ToyEncoderParams, x: &[f64], enc: &Encoded, g_unit: &[f64], out: &mut ParamGradient) {
    let dim = p.dim;
    for (r, ((e, ge), &norm)) in enc
        .unit
        .chunks_exact(dim)
        .zip(g_unit.chunks_exact(dim))
        .zip(&enc.norms)
        .enumerate()
    {
        let proj = dot(e, ge);
        for d in 0..dim {
            let gv = (ge[d] - e[d] * proj) / norm;
            if gv == 0.0 {
                continue;
            }
            let k = r * dim + d;
            out.m[k] += gv;
            for (w, &xi) in out.w[k * p.features..(k + 1) * p.features].iter_mut().zip(x) {
                *w += gv * xi;
            }
        }
    }
}

pub fn loss_gradient_with(
    params_q: &ToyEncoderParams,
    params_c: &ToyEncoderParams,
    batch: &TrainingBatch,
    ladder: &BudgetLadder,
    tau: f64,
    weights: &[f64],
    options: GradientOptions,
) -> Result<(LossBreakdown, Gradients)> {
    check_tau(tau)?;
    check_weights(ladder, weights)?;
    validate_ladder(ladder.groups(), params_q.rows, params_c.rows)?;
    if params_q.dim != params_c.dim {
        return Err(Error::DimensionMismatch {
            expected: params_q.dim,
            actual: params_c.dim,
        });
    }
    let b = batch.len();
    let dim = params_q.dim;
    let top = ladder.last();
    let (rq_max, rc_max) = (top.r_q(), top.r_c());

    let enc_q = batch
        .queries
        .iter()
        .map(|x| params_q.encode_raw(x))
        .collect::<Result<Vec<_>>>()?;
    let enc_p = batch
        .positives
        .iter()
        .map(|x| params_c.encode_raw(x))
        .collect::<Result<Vec<_>>>()?;
    let enc_n = batch
        .negatives
        .iter()
        .map(|x| params_c.encode_raw(x))
        .collect::<Result<Vec<_>>>()?;

    // candidate slot v < b is positive v; slot b is the row's own hard negative
    let cand = |u: usize, v: usize| if v < b { &enc_p[v].unit } else { &enc_n[u].unit };
    let tables: Vec<Vec<f64>> = (0..b)
        .flat_map(|u| (0..=b).map(move |v| (u, v)))
        .map(|(u, v)| dot_table(&enc_q[u].unit, cand(u, v), rq_max, rc_max, dim))
        .collect();

    let mut g_q = vec![vec![0.0; params_q.rows * dim]; b];
    let mut g_p = vec![vec![0.0; params_c.rows * dim]; b];
    let mut g_n = vec![vec![0.0; params_c.rows * dim]; b];

    let mut per_group = Vec::with_capacity(ladder.len());
    let mut picks: Vec<Vec<usize>> = vec![Vec::new(); b * (b + 1)];
    for (group, &w_g) in ladder.groups().iter().zip(weights) {
        let (r_q, r_c) = (group.r_q(), group.r_c());
        let mut s = vec![vec![0.0; b]; b];
        let mut hard = vec![0.0; b];
        for u in 0..b {
            for v in 0..=b {
                let t = &tables[u * (b + 1) + v];
                let args = &mut picks[u * (b + 1) + v];
                args.clear();
                let mut total = 0.0;
                for i in 0..r_q {
                    let m = pick(&t[i * rc_max..(i + 1) * rc_max], r_c, options.tie_epsilon)?;
                    total += m.value;
                    args.push(m.arg);
                }
                if v < b {
                    s[u][v] = total / tau;
                } else {
                    hard[u] = total / tau;
                }
            }
        }
        per_group.push(infonce_group_loss(&s, &hard)?);

        let scale = w_g / b as f64;
        for u in 0..b {
            let lse = log_sum_exp(&s[u], hard[u]);
            for v in 0..=b {
                let (score, target) = if v < b { (s[u][v], u == v) } else { (hard[u], false) };
                let coef = scale * ((score - lse).exp() - if target { 1.0 } else { 0.0 }) / tau;
                if coef == 0.0 {
                    continue;
                }
                let args = &picks[u * (b + 1) + v];
                let q_unit = &enc_q[u].unit;
                let c_unit = cand(u, v);
                let g_c = if v < b { &mut g_p[v] } else { &mut g_n[u] };
                for (i, &j) in args.iter().enumerate() {
                    for d in 0..dim {
                        g_q[u][i * dim + d] += coef * c_unit[j * dim + d];
                        g_c[j * dim + d] += coef * q_unit[i * dim + d];
                    }
                }
            }
        }
    }

    let mut grad_q = ParamGradient::zeros_like(params_q);
    let mut grad_c = ParamGradient::zeros_like(params_c);
    for u in 0..b {
        backprop_encoder(params_q, &batch.queries[u], &enc_q[u], &g_q[u], &mut grad_q);
        backprop_encoder(params_c, &batch.positives[u], &enc_p[u], &g_p[u], &mut grad_c);
        backprop_encoder(params_c, &batch.negatives[u], &enc_n[u], &g_n[u], &mut grad_c);
    }
    Ok((
        LossBreakdown::from_groups(per_group, tau, weights),
        Gradients {
            query: grad_q,
            candidate: grad_c,
        },
    ))
}
