//! Fixtures shared by the criterion benchmarks.

use fedkbp_core::datamodel::{Case, Dims, Split};
use fedkbp_core::dataset::generate_phantom;
use fedkbp_core::federation::SiteUpdate;
use fedkbp_core::model::{DoseNet, ModelConfig};

/// A training phantom on a cube of side `n`.
pub fn phantom(n: usize) -> Case {
    generate_phantom(7, Split::Train, 0, Dims::cube(n).expect("positive side")).expect("valid phantom")
}

pub fn default_net() -> DoseNet {
    DoseNet::new(ModelConfig::default()).expect("default config is valid")
}

/// Eight site updates of the default model with the full-scale non-IID counts.
pub fn site_updates(net: &DoseNet) -> Vec<SiteUpdate> {
    [40u64, 35, 30, 25, 25, 20, 15, 10]
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let p = net.init_params();
            let shifted: Vec<f64> = p.to_f64().iter().map(|v| v + k as f64 * 1e-3).collect();
            SiteUpdate {
                site_id: k,
                params: fedkbp_core::ParamVector::from_f64(p.manifest().clone(), &shifted).expect("finite"),
                n,
            }
        })
        .collect()
}
