use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::real::Real;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    /// central-difference half-width
    pub h: f64,
    /// check at most this many coordinates per parameter (all when `None`)
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            h: 1e-4,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// parameter name and flat coordinate of the worst disagreement
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
}

fn eval_loss<R: Real, F>(loss_fn: &F, store: &ParamStore<R>) -> Result<f64>
where
    F: Fn(&mut Tape<R>, &ParamStore<R>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    let value = tape.value(loss).data()[0].to_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {value}")));
    }
    Ok(value)
}

/// Compares the tape's analytic gradients with central differences.
///
/// Relative error per coordinate is `|a−n| / max(1e-8, |a|+|n|)`; the
/// maximum over all checked coordinates is reported.
pub fn finite_difference_check<R: Real, F>(loss_fn: F, store: &ParamStore<R>, cfg: &FdConfig) -> Result<FdReport>
where
    F: Fn(&mut Tape<R>, &ParamStore<R>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    if !tape.value(loss).data()[0].is_finite() {
        return Err(Error::NonFinite("loss at the check point".into()));
    }
    let grads = tape.backward(loss)?;
    let analytic = tape.param_grads(&grads, store);
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = store.clone();
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    let h = R::of(cfg.h);
    for (name, grad) in &analytic {
        let n = grad.len();
        let coords: Vec<usize> = match cfg.max_coords_per_param {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let original = probe.value(name).expect("analytic keys come from the store").data()[i];
            probe.value_mut(name).unwrap().data_mut()[i] = original + h;
            let plus = eval_loss(&loss_fn, &probe)?;
            probe.value_mut(name).unwrap().data_mut()[i] = original - h;
            let minus = eval_loss(&loss_fn, &probe)?;
            probe.value_mut(name).unwrap().data_mut()[i] = original;

            // the actual step after rounding to R
            let width = (original + h).to_f64() - (original - h).to_f64();
            let numeric = (plus - minus) / width;
            let a = grad.data()[i].to_f64();
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.coords_checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::Tensor;

    #[test]
    fn linear_loss_is_exact() {
        let mut store = ParamStore::<f64>::new();
        store
            .insert("theta", Tensor::matrix(1, 3, vec![0.3, -1.2, 2.0]).unwrap())
            .unwrap();
        let c = Tensor::matrix(3, 1, vec![1.5, -0.5, 0.25]).unwrap();
        let report = finite_difference_check(
            |tape, store| {
                let theta = tape.bind(store, "theta")?;
                let c = tape.input(c.clone());
                tape.matmul(theta, c)
            },
            &store,
            &FdConfig::default(),
        )
        .unwrap();
        assert_eq!(report.coords_checked, 3);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn non_finite_loss_fails() {
        let mut store = ParamStore::<f64>::new();
        store.insert("theta", Tensor::matrix(1, 1, vec![f64::NAN]).unwrap()).unwrap();
        let one = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let res = finite_difference_check(
            |tape, store| {
                let t = tape.bind(store, "theta")?;
                let c = tape.input(one.clone());
                tape.matmul(t, c)
            },
            &store,
            &FdConfig::default(),
        );
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }
}
