//! Exhaustive-summation check of the information decomposition on finite
//! supports: `E_x[KL(q(z|x) ‖ p(z))] = MI(x; z) + KL(q(z) ‖ p(z))`.

use crate::error::{Error, Result};

const MAX_SUPPORT: usize = 64;
const NORMALIZATION_TOL: f64 = 1e-9;

/// Joint `q(x, z)` as a row-major `|X| × |Z|` table with a prior `p(z)`.
#[derive(Clone, Debug)]
pub struct DiscreteJoint {
    pub probs: Vec<Vec<f64>>,
    pub prior: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InformationTerms {
    pub mi: f64,
    pub kl_aggregate: f64,
    pub expected_kl: f64,
}

fn plogq(p: f64, ratio: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * ratio.ln()
    }
}

pub fn mi_decomposition_oracle(joint: &DiscreteJoint) -> Result<InformationTerms> {
    let nx = joint.probs.len();
    let nz = joint.prior.len();
    if nx == 0 || nz == 0 || nx > MAX_SUPPORT || nz > MAX_SUPPORT {
        return Err(Error::invalid(format!("supports must be within 1..=64, got {nx} x {nz}")));
    }
    if joint.probs.iter().any(|row| row.len() != nz) {
        return Err(Error::invalid("joint rows must match the prior support"));
    }
    let all = joint.probs.iter().flatten().chain(&joint.prior);
    if all.clone().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid("probabilities must be finite and non-negative"));
    }
    let total: f64 = joint.probs.iter().flatten().sum();
    let prior_total: f64 = joint.prior.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL || (prior_total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::invalid(format!(
            "joint sums to {total} and prior to {prior_total}; both must sum to 1"
        )));
    }

    let qx: Vec<f64> = joint.probs.iter().map(|row| row.iter().sum()).collect();
    let qz: Vec<f64> = (0..nz).map(|j| joint.probs.iter().map(|row| row[j]).sum()).collect();
    if qz.iter().zip(&joint.prior).any(|(&q, &p)| q > 0.0 && p == 0.0) {
        return Err(Error::invalid("prior has zero mass where the aggregate posterior does not"));
    }

    let mut mi = 0.0;
    let mut expected_kl = 0.0;
    for (row, &px) in joint.probs.iter().zip(&qx) {
        if px == 0.0 {
            continue;
        }
        let mut kl_x = 0.0;
        for (j, &pxz) in row.iter().enumerate() {
            if pxz == 0.0 {
                continue;
            }
            mi += plogq(pxz, pxz / (px * qz[j]));
            let cond = pxz / px;
            kl_x += plogq(cond, cond / joint.prior[j]);
        }
        expected_kl += px * kl_x;
    }
    let kl_aggregate = qz.iter().zip(&joint.prior).map(|(&q, &p)| plogq(q, q / p)).sum();
    Ok(InformationTerms {
        mi,
        kl_aggregate,
        expected_kl,
    })
}

/// Objective written with the mutual-information term:
/// `rec + α·MI + β·KL(q(z) ‖ p(z))`.
pub fn compose_information_form(rec: f64, alpha: f64, beta: f64, mi: f64, kl_aggregate: f64) -> f64 {
    rec + alpha * mi + beta * kl_aggregate
}

/// Objective written with the per-sample KL:
/// `rec + α·E[KL(q(z|x) ‖ p(z))] + (β − α)·KL(q(z) ‖ p(z))`.
pub fn compose_marginal_form(rec: f64, alpha: f64, beta: f64, expected_kl: f64, kl_aggregate: f64) -> f64 {
    rec + alpha * expected_kl + (beta - alpha) * kl_aggregate
}
