//! Approximate active-power flow `P_kl = V_k (V_k - V_l) / z_kl`, bus
//! balance residuals, losses and analytic derivatives.

use thiserror::Error;

use crate::model::Network;

#[derive(Debug, Error, PartialEq)]
pub enum PowerFlowError {
    #[error("load flow did not converge (mismatch {0:e})")]
    NoConvergence(f64),
    #[error("load flow jacobian is singular")]
    Singular,
    #[error("voltage collapsed at bus index {0}")]
    Collapse(usize),
}

/// Voltage magnitudes `v[t][k]` (p.u.).
#[derive(Clone, Debug, PartialEq)]
pub struct VoltageProfile {
    pub v: Vec<Vec<f64>>,
}

/// Net active injections `p[t][k]` (p.u.): generation minus demand.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectionProfile {
    pub p: Vec<Vec<f64>>,
}

#[inline]
pub fn line_flow(v_from: f64, v_to: f64, z: f64) -> f64 {
    debug_assert!(z > 0.0);
    v_from * (v_from - v_to) / z
}

/// First and second derivatives of [`line_flow`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowDerivatives {
    pub d_from: f64,
    pub d_to: f64,
    pub d2_from_from: f64,
    pub d2_from_to: f64,
    pub d2_to_to: f64,
}

#[inline]
pub fn flow_derivatives(v_from: f64, v_to: f64, z: f64) -> FlowDerivatives {
    FlowDerivatives {
        d_from: (2.0 * v_from - v_to) / z,
        d_to: -v_from / z,
        d2_from_from: 2.0 / z,
        d2_from_to: -1.0 / z,
        d2_to_to: 0.0,
    }
}

/// Sum of directed flows leaving each bus.
pub fn outflows(network: &Network, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; network.n_buses()];
    for l in 0..network.lines.len() {
        let (a, b) = network.line_ends(l);
        let z = network.line_z(l);
        out[a] += line_flow(v[a], v[b], z);
        out[b] += line_flow(v[b], v[a], z);
    }
    out
}

/// Balance residual per bus for one period:
/// `-P_g + P_d + Σ flows = -inj + Σ flows`.
pub fn bus_mismatch(network: &Network, v: &[f64], injection: &[f64]) -> Vec<f64> {
    let mut r = outflows(network, v);
    for (rk, p) in r.iter_mut().zip(injection) {
        *rk -= p;
    }
    r
}

/// [`bus_mismatch`] over every period of a profile.
pub fn bus_mismatch_profile(
    network: &Network,
    v: &VoltageProfile,
    inj: &InjectionProfile,
) -> Vec<Vec<f64>> {
    v.v.iter()
        .zip(&inj.p)
        .map(|(vt, pt)| bus_mismatch(network, vt, pt))
        .collect()
}

/// `∂ mismatch_k / ∂ V_m` as a dense row-major matrix.
pub fn mismatch_jacobian(network: &Network, v: &[f64]) -> Vec<Vec<f64>> {
    let n = network.n_buses();
    let mut j = vec![vec![0.0; n]; n];
    for l in 0..network.lines.len() {
        let (a, b) = network.line_ends(l);
        let z = network.line_z(l);
        let ab = flow_derivatives(v[a], v[b], z);
        let ba = flow_derivatives(v[b], v[a], z);
        j[a][a] += ab.d_from;
        j[a][b] += ab.d_to;
        j[b][b] += ba.d_from;
        j[b][a] += ba.d_to;
    }
    j
}

/// Network loss (p.u.): `Σ_lines (V_k - V_l)² / z`.
pub fn total_loss(network: &Network, v: &[f64]) -> f64 {
    (0..network.lines.len())
        .map(|l| {
            let (a, b) = network.line_ends(l);
            (v[a] - v[b]).powi(2) / network.line_z(l)
        })
        .sum()
}

pub fn total_loss_profile(network: &Network, v: &VoltageProfile) -> Vec<f64> {
    v.v.iter().map(|vt| total_loss(network, vt)).collect()
}

/// Solution of a load flow with the substation as slack bus.
#[derive(Clone, Debug)]
pub struct LoadFlow {
    pub v: Vec<f64>,
    /// Net injection required at the substation (p.u.).
    pub substation_injection: f64,
    pub loss: f64,
}

/// Solves the balance equations for all non-substation voltages with the
/// substation voltage fixed at `v_sub` and its injection free. `injection`
/// gives the net injection at every bus (the substation entry is ignored).
pub fn load_flow(
    network: &Network,
    v_sub: f64,
    injection: &[f64],
) -> Result<LoadFlow, PowerFlowError> {
    let n = network.n_buses();
    let sub = network.substation_index();
    let idx: Vec<usize> = (0..n).filter(|&k| k != sub).collect();
    let mut v = vec![v_sub; n];
    let mut inj = injection.to_vec();
    inj[sub] = 0.0;
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let r = bus_mismatch(network, &v, &inj);
        let rr: Vec<f64> = idx.iter().map(|&k| r[k]).collect();
        let norm = rr.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !norm.is_finite() {
            return Err(PowerFlowError::NoConvergence(norm));
        }
        if norm <= 1e-13 {
            let outflow = outflows(network, &v);
            return Ok(LoadFlow {
                loss: total_loss(network, &v),
                substation_injection: outflow[sub],
                v,
            });
        }
        last = norm;
        let jf = mismatch_jacobian(network, &v);
        let mut a: Vec<Vec<f64>> = idx
            .iter()
            .map(|&k| idx.iter().map(|&m| jf[k][m]).collect())
            .collect();
        let mut dx: Vec<f64> = rr.iter().map(|x| -x).collect();
        lu_solve(&mut a, &mut dx).ok_or(PowerFlowError::Singular)?;
        // damped update keeps voltages positive
        let mut step = 1.0;
        for (p, &k) in idx.iter().enumerate() {
            if v[k] + dx[p] <= 0.2 * v[k] {
                step = f64::min(step, 0.8 * v[k] / -dx[p]);
            }
        }
        for (p, &k) in idx.iter().enumerate() {
            v[k] += step * dx[p];
        }
        if let Some(k) = v.iter().position(|x| !(*x > 1e-3)) {
            return Err(PowerFlowError::Collapse(k));
        }
    }
    Err(PowerFlowError::NoConvergence(last))
}

/// Gaussian elimination with partial pivoting; `b` is overwritten by the
/// solution. Returns `None` when a pivot vanishes.
pub(crate) fn lu_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<()> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c][k] * b[k]).sum();
        b[c] = (b[c] - s) / a[c][c];
    }
    Some(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_3bus;

    #[test]
    fn flow_examples() {
        assert_eq!(line_flow(1.0, 1.0, 1.236), 0.0);
        assert!((line_flow(1.05, 1.0, 1.236) - 0.0424757).abs() < 1e-7);
        let d = flow_derivatives(1.05, 1.0, 1.236);
        assert!((d.d_from - 0.88997).abs() < 1e-5);
        let d = flow_derivatives(1.0, 1.0, 1.0);
        assert_eq!((d.d_from, d.d_to), (1.0, -1.0));
    }

    #[test]
    fn single_line_loss() {
        let mut n = build_3bus().network;
        n.impedance_scale = 1.0;
        n.lines.truncate(1);
        n.buses.truncate(2);
        let loss = total_loss(&n, &[1.05, 1.0]);
        assert!((loss - 0.0025 / 1.236).abs() < 1e-12);
        assert!((loss - 0.0020226).abs() < 1e-7);
    }

    #[test]
    fn load_flow_conserves_power() {
        let n = build_3bus().network;
        let inj = vec![-0.2, -0.2, -0.2];
        let lf = load_flow(&n, 1.05, &inj).unwrap();
        // import = demand + loss
        let import = lf.substation_injection + 0.2;
        assert!((import - (0.6 + lf.loss)).abs() < 1e-12);
        assert!((lf.loss - 0.0057).abs() < 1e-12, "{}", lf.loss);
    }

    #[test]
    fn lu_solves_small_system() {
        let mut a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let mut b = vec![4.0, 5.0];
        lu_solve(&mut a, &mut b).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-15 && (b[1] - 2.0).abs() < 1e-15);
    }
}
