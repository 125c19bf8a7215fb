//! Central finite-difference checks against autodiff gradients.

use indexmap::IndexMap;

use super::{ParamStore, Tensor};

/// Denominator floor for relative errors: gradients smaller than this are
/// compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central differences `(f(θ+ε) − f(θ−ε)) / 2ε` for every scalar of every
/// parameter in `params`.
pub fn numeric_grads<E>(
    params: &ParamStore,
    eps: f64,
    mut loss: impl FnMut(&ParamStore) -> Result<f64, E>,
) -> Result<IndexMap<String, Tensor>, E> {
    let mut probe = params.clone();
    let mut out = IndexMap::new();
    for name in params.names() {
        let n = params.get(name).expect("name from store").numel();
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let orig = probe.get(name).expect("cloned store").data()[i];
            probe.get_mut(name).expect("cloned store").data_mut()[i] = orig + eps;
            let plus = loss(&probe)?;
            probe.get_mut(name).expect("cloned store").data_mut()[i] = orig - eps;
            let minus = loss(&probe)?;
            probe.get_mut(name).expect("cloned store").data_mut()[i] = orig;
            g.push((plus - minus) / (2.0 * eps));
        }
        let shape = params.get(name).expect("name from store").shape().to_vec();
        out.insert(name.to_string(), Tensor::new(shape, g).expect("same numel"));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub group: String,
    pub scalars: usize,
    pub max_rel_err: f64,
}

/// Max relative error per parameter group; `group_of` maps a parameter name
/// to its group label.
pub fn compare(
    analytic: &IndexMap<String, Tensor>,
    numeric: &IndexMap<String, Tensor>,
    group_of: impl Fn(&str) -> String,
) -> Vec<GroupReport> {
    let mut groups: IndexMap<String, GroupReport> = IndexMap::new();
    for (name, num) in numeric {
        let ana = &analytic[name];
        let label = group_of(name);
        let entry = groups.entry(label.clone()).or_insert(GroupReport {
            group: label,
            scalars: 0,
            max_rel_err: 0.0,
        });
        for (&a, &n) in ana.data().iter().zip(num.data()) {
            entry.scalars += 1;
            entry.max_rel_err = entry.max_rel_err.max(relative_error(a, n));
        }
    }
    groups.into_values().collect()
}
