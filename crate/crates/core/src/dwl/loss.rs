//! Scalar loss arithmetic and its graph counterparts.

use alloc::vec::Vec;

use crate::error::{check_len, Result};
use crate::nn::{Graph, Tensor, Var};

fn row_residual_norms(pred: &Tensor, target: &Tensor, squared: bool) -> Vec<f64> {
    (0..pred.rows())
        .map(|r| {
            let sq: f64 = pred.row_slice(r).iter().zip(target.row_slice(r)).map(|(a, b)| (a - b) * (a - b)).sum();
            if squared {
                sq
            } else {
                libm::sqrt(sq)
            }
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// `mean_i ||s~_i - s_i||_2 + lambda_r * mean_i ||z_i||_1` over batch rows.
pub fn denoise_loss(pred: &Tensor, target: &Tensor, latent: &Tensor, lambda_r: f64, squared: bool) -> Result<f64> {
    check_len("reconstruction", target.len(), pred.len())?;
    check_len("latent rows", pred.rows(), latent.rows())?;
    let rec = mean(&row_residual_norms(pred, target, squared));
    let l1: Vec<f64> = (0..latent.rows()).map(|r| latent.row_slice(r).iter().map(|x| x.abs()).sum()).collect();
    Ok(rec + lambda_r * mean(&l1))
}

/// Clipped surrogate `mean min(rho A, clip(rho, c1, c2) A)`, to be maximized.
pub fn ppo_objective(logp_new: &[f64], logp_old: &[f64], adv: &[f64], c1: f64, c2: f64) -> Result<f64> {
    check_len("old log-probs", logp_new.len(), logp_old.len())?;
    check_len("advantages", logp_new.len(), adv.len())?;
    let terms: Vec<f64> = (0..adv.len())
        .map(|i| {
            let rho = libm::exp(logp_new[i] - logp_old[i]);
            (rho * adv[i]).min(rho.clamp(c1, c2) * adv[i])
        })
        .collect();
    Ok(mean(&terms))
}

/// Mean per-sample `||R - V||_2`; rows are samples.
pub fn value_loss(returns: &Tensor, values: &Tensor, squared: bool) -> Result<f64> {
    check_len("values", returns.len(), values.len())?;
    Ok(mean(&row_residual_norms(values, returns, squared)))
}

/// `L = L_denoise + lambda_pi * L_pi + lambda_v * L_v` with `L_pi` already in descent form.
pub fn dwl_total_loss(denoise: f64, policy: f64, value: f64, lambda_pi: f64, lambda_v: f64) -> f64 {
    denoise + lambda_pi * policy + lambda_v * value
}

/// Mean per-row residual norm (or squared norm) as a graph node.
pub fn residual_norm_mean(g: &mut Graph<'_>, pred: Var, target: Var, squared: bool) -> Result<Var> {
    let diff = g.sub(pred, target)?;
    let per_row = if squared {
        let sq = g.square(diff);
        g.sum_cols(sq)
    } else {
        g.row_norm(diff)
    };
    Ok(g.mean(per_row))
}

/// Mean over rows of the L1 norm of each row.
pub fn l1_row_mean(g: &mut Graph<'_>, z: Var) -> Var {
    let a = g.abs(z);
    let rows = g.sum_cols(a);
    g.mean(rows)
}

/// Graph form of [`ppo_objective`]; `adv` is an `n x 1` tensor.
pub fn ppo_objective_graph(g: &mut Graph<'_>, logp_new: Var, logp_old: &Tensor, adv: &Tensor, c1: f64, c2: f64) -> Result<Var> {
    let old = g.constant(logp_old.clone());
    let a = g.constant(adv.clone());
    let diff = g.sub(logp_new, old)?;
    let rho = g.exp(diff);
    let unclipped = g.mul(rho, a)?;
    let clipped = g.clamp(rho, c1, c2);
    let clipped = g.mul(clipped, a)?;
    let m = g.min(unclipped, clipped)?;
    Ok(g.mean(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Gradients, ParamStore};
    use alloc::vec;

    #[test]
    fn denoise_examples() {
        let s = Tensor::row(&[0.5, -1.0, 2.0]);
        let z0 = Tensor::zeros(1, 4);
        assert_eq!(denoise_loss(&s, &s, &z0, 0.002, false).unwrap(), 0.0);
        let shifted = Tensor::row(&[0.5, 0.0, 2.0]);
        assert!((denoise_loss(&shifted, &s, &z0, 0.002, false).unwrap() - 1.0).abs() < 1e-15);
        let z = Tensor::row(&[1.0, -1.0, 0.0, 0.0]);
        assert!((denoise_loss(&s, &s, &z, 0.002, false).unwrap() - 0.004).abs() < 1e-15);
        // Non-squared norm: a residual of (3, 4) costs 5, not 25.
        let t = Tensor::row(&[3.0, 4.0]);
        let zero = Tensor::zeros(1, 2);
        assert!((denoise_loss(&t, &zero, &Tensor::zeros(1, 1), 0.0, false).unwrap() - 5.0).abs() < 1e-12);
        assert!((denoise_loss(&t, &zero, &Tensor::zeros(1, 1), 0.0, true).unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn ppo_examples() {
        let l2 = libm::log(2.0);
        assert!((ppo_objective(&[0.0], &[0.0], &[1.0], 0.8, 1.2).unwrap() - 1.0).abs() < 1e-15);
        assert!((ppo_objective(&[l2], &[0.0], &[1.0], 0.8, 1.2).unwrap() - 1.2).abs() < 1e-12);
        // rho = 0.5, A = -1: min(-0.5, 0.8 * -1) takes the clipped branch.
        assert!((ppo_objective(&[-l2], &[0.0], &[-1.0], 0.8, 1.2).unwrap() + 0.8).abs() < 1e-12);
    }

    #[test]
    fn value_examples() {
        let r = Tensor::column(&[1.0, -2.0, 0.5]);
        assert_eq!(value_loss(&r, &r, false).unwrap(), 0.0);
        let unit = Tensor::row(&[1.0, 0.0, 0.0]);
        assert!((value_loss(&unit, &Tensor::zeros(1, 3), false).unwrap() - 1.0).abs() < 1e-15);
        // Residuals 3 and -4: mean of |3| and |-4|.
        let v = Tensor::column(&[0.0, 2.0]);
        let rr = Tensor::column(&[3.0, -2.0]);
        assert!((value_loss(&rr, &v, false).unwrap() - 3.5).abs() < 1e-15);
        assert!((value_loss(&rr, &v, true).unwrap() - 12.5).abs() < 1e-15);
    }

    #[test]
    fn total_examples() {
        assert_eq!(dwl_total_loss(0.0, 0.0, 0.0, 5.0, 5.0), 0.0);
        assert_eq!(dwl_total_loss(1.0, 1.0, 1.0, 5.0, 5.0), 11.0);
    }

    #[test]
    fn graph_forms_agree_with_scalar_forms() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let pred = Tensor::from_vec(2, 3, vec![0.1, 0.4, -1.0, 2.0, 0.0, 0.3]).unwrap();
        let target = Tensor::from_vec(2, 3, vec![0.0, 0.5, -0.5, 1.0, 1.0, 0.0]).unwrap();
        let z = Tensor::from_vec(2, 2, vec![0.5, -0.25, 1.0, 0.0]).unwrap();
        let (p, t, zv) = (g.constant(pred.clone()), g.constant(target.clone()), g.constant(z.clone()));
        for squared in [false, true] {
            let rec = residual_norm_mean(&mut g, p, t, squared).unwrap();
            let l1 = l1_row_mean(&mut g, zv);
            let l1 = g.scale(l1, 0.002);
            let total = g.add(rec, l1).unwrap();
            let expected = denoise_loss(&pred, &target, &z, 0.002, squared).unwrap();
            assert!((g.value(total).item() - expected).abs() < 1e-14);
        }
        let new = [0.1, -0.3, 0.5];
        let old = [0.0, 0.0, 0.0];
        let adv = [1.0, -2.0, 0.5];
        let nv = g.constant(Tensor::column(&new));
        let obj = ppo_objective_graph(&mut g, nv, &Tensor::column(&old), &Tensor::column(&adv), 0.8, 1.2).unwrap();
        let expected = ppo_objective(&new, &old, &adv, 0.8, 1.2).unwrap();
        assert!((g.value(obj).item() - expected).abs() < 1e-14);
    }

    #[test]
    fn total_gradient_is_weighted_sum_of_parts() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::from_vec(2, 2, vec![0.3, -0.2, 0.7, 0.1]).unwrap());
        let x = Tensor::from_vec(3, 2, vec![1.0, 0.5, -0.5, 2.0, 0.2, -1.0]).unwrap();
        let target = Tensor::from_vec(3, 2, vec![0.0, 1.0, 1.0, 0.0, -1.0, 0.5]).unwrap();
        let parts = |which: Option<usize>| {
            let mut g = Graph::new(&store);
            let xv = g.constant(x.clone());
            let wv = g.param(w);
            let y = g.matmul(xv, wv).unwrap();
            let t = g.constant(target.clone());
            let d = residual_norm_mean(&mut g, y, t, false).unwrap();
            let sq = g.square(y);
            let p = g.mean(sq);
            let v = l1_row_mean(&mut g, y);
            let loss = match which {
                Some(0) => d,
                Some(1) => p,
                Some(2) => v,
                _ => {
                    let a = g.scale(p, 5.0);
                    let b = g.scale(v, 5.0);
                    let s = g.add(d, a).unwrap();
                    g.add(s, b).unwrap()
                }
            };
            let mut grads = Gradients::zeros_like(&store);
            g.backward(loss, &mut grads).unwrap();
            grads.flatten()
        };
        let total = parts(None);
        let (d, p, v) = (parts(Some(0)), parts(Some(1)), parts(Some(2)));
        for i in 0..total.len() {
            assert!((total[i] - (d[i] + 5.0 * p[i] + 5.0 * v[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn clip_is_inactive_inside_band() {
        for rho in [0.8, 0.9, 1.0, 1.1, 1.2] {
            for a in [-2.0, 0.5, 3.0] {
                let lp = libm::log(rho);
                let got = ppo_objective(&[lp], &[0.0], &[a], 0.8, 1.2).unwrap();
                assert!((got - rho * a).abs() < 1e-12);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn surrogate_is_a_lower_bound(lp in -3.0f64..3.0, a in -5.0f64..5.0) {
            let rho = libm::exp(lp);
            let got = ppo_objective(&[lp], &[0.0], &[a], 0.8, 1.2).unwrap();
            proptest::prop_assert!(got <= rho * a + 1e-12);
        }
    }
}
