use meanfield_core::dynamics::init_sample;
use meanfield_core::kernel::{h_vector, kernel_matrix, KrrFit};
use meanfield_core::model::EmpiricalDataset;

use super::{Outcome, Report, EXEC};
use crate::config::RunConfig;
use crate::error::{LabError, LabResult};
use crate::output::Table;
use crate::schema;

/// RK4 step in units of `n/λ_max`; small enough that the quadrature error of
/// the fastest mode stays far below the 1e-6 comparison.
const STEP_FRACTION: f64 = 0.02;
const MAX_STEPS: f64 = 2e7;

#[derive(Debug, Clone)]
pub struct KrrReport {
    pub n: usize,
    pub min_eigenvalue: f64,
    pub method: &'static str,
    pub t_end: f64,
    /// Integrated linearized prediction at `t_end`, one per query.
    pub prediction: Vec<f64>,
    /// `h(z)ᵀ H⁻¹ y`, one per query.
    pub krr_value: Vec<f64>,
    pub max_abs_err: f64,
    /// `max_j |ŷ(x_j) − y_j| / |y_j|` over the training points.
    pub max_train_rel_residual: f64,
}

/// Integrates the linearized residual dynamics `u' = −Hu/n` together with
/// `f'(z) = h(z)ᵀu/n` by RK4 to a long time, and compares with the
/// kernel-ridge-regression value `h(z)ᵀ H⁻¹ y`. The first `n` queries are
/// the training points.
pub(super) fn run(cfg: &RunConfig) -> LabResult<Outcome> {
    let act = cfg.activation()?;
    let data = cfg.data()?;
    let ds = data.empirical().ok_or_else(|| LabError::config("krr-check needs model.data.points > 0"))?;
    let d = &cfg.dynamics;
    let ens = init_sample(cfg.init_spec(), d.n, cfg.model.data.d, cfg.mode(), d.scale, d.init.seed)?;
    let set = ds.points();
    let h = kernel_matrix(&ens, set, &act, &EXEC)?;
    let fit = KrrFit::new(&h, set.ys())?;
    let n = set.len();
    let lmin = h.min_eigenvalue();
    if !(lmin > 0.0) {
        return Err(LabError::Numerical(format!("H is singular (λ_min = {lmin:e}); the KRR limit is not defined")));
    }
    let t_end = cfg.kernel.krr_time_factor / lmin;
    let dt_max = STEP_FRACTION * n as f64 / h.max_abs_eigenvalue();
    let steps = (t_end / dt_max).ceil();
    if steps > MAX_STEPS {
        return Err(LabError::Numerical(format!(
            "H is too ill-conditioned to integrate ({steps:e} steps); lower kernel.krr_time_factor"
        )));
    }
    let steps = steps as usize;
    let dt = t_end / steps as f64;

    let test = EmpiricalDataset::draw_from(&cfg.gaussians()?, cfg.kernel.test_points, cfg.kernel.test_seed)?;
    let queries: Vec<&[f64]> = (0..n).map(|j| set.x(j)).chain((0..test.len()).map(|j| test.x(j))).collect();
    let hz: Vec<Vec<f64>> = queries.iter().map(|z| h_vector(&ens, z, set, &act, &EXEC)).collect::<Result<_, _>>()?;
    let krr_value: Vec<f64> = hz.iter().map(|v| fit.predict(v)).collect::<Result<_, _>>()?;

    let hm: Vec<f64> = (0..n * n).map(|k| h.get(k / n, k % n)).collect();
    let prediction = integrate(&hm, &hz, set.ys(), dt, steps);
    let abs_err: Vec<f64> = prediction.iter().zip(&krr_value).map(|(p, k)| (p - k).abs()).collect();
    let max_train_rel_residual =
        (0..n).map(|j| (krr_value[j] - set.y(j)).abs() / set.y(j).abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let report = KrrReport {
        n,
        min_eigenvalue: lmin,
        method: fit.method.name(),
        t_end,
        max_abs_err: abs_err.iter().copied().fold(0.0, f64::max),
        prediction,
        krr_value,
        max_train_rel_residual,
    };
    let mut table = Table::new("krr", schema::KRR);
    for (k, e) in abs_err.iter().enumerate() {
        table.push(vec![k.into(), report.prediction[k].into(), report.krr_value[k].into(), (*e).into()]);
    }
    let mut summary = Table::new("summary", schema::KRR_SUMMARY);
    summary.push(vec![
        n.into(),
        lmin.into(),
        report.method.into(),
        t_end.into(),
        report.max_abs_err.into(),
        max_train_rel_residual.into(),
    ]);
    let warnings = if fit.method.flagged() {
        vec![format!("H needed regularization ({}); the comparison is against the regularized solve", report.method)]
    } else {
        Vec::new()
    };
    Ok(Outcome { tables: vec![table, summary], report: Report::Krr(report), warnings })
}

/// Classical RK4 on the state `(u, f)` with `u ∈ ℝⁿ` and one `f` per query.
fn integrate(h: &[f64], hz: &[Vec<f64>], y: &[f64], dt: f64, steps: usize) -> Vec<f64> {
    let n = y.len();
    let q = hz.len();
    let nf = n as f64;
    let deriv = |s: &[f64], out: &mut [f64]| {
        let u = &s[..n];
        for j in 0..n {
            out[j] = -h[j * n..(j + 1) * n].iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / nf;
        }
        for k in 0..q {
            out[n + k] = hz[k].iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / nf;
        }
    };
    let m = n + q;
    let mut s = vec![0.0; m];
    s[..n].copy_from_slice(y);
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for _ in 0..steps {
        deriv(&s, &mut k1);
        for i in 0..m {
            tmp[i] = s[i] + 0.5 * dt * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..m {
            tmp[i] = s[i] + 0.5 * dt * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..m {
            tmp[i] = s[i] + dt * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..m {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    s[n..].to_vec()
}
