//! TOML experiment files.
//!
//! ```toml
//! scheme = "fixed_point"     # required: fixed_point | fixed_plan
//! r = 1.0
//! v = 1.0
//! omega = 0.31
//! seed = 7
//!
//! [mpc]
//! max_sqp_iters = 3
//!
//! [noise]
//! position = 0.025
//!
//! [sweep]                     # only read by `coni sweep`
//! r = { start = 0.0, stop = 2.0, step = 0.1 }
//! v = { start = 0.0, stop = 2.0, step = 0.1 }
//! omega = { start = 0.01, stop = 2.01, step = 0.1 }
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, SweepGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    pub experiment: ExperimentConfig,
    pub sweep: Option<SweepGrid>,
}

impl ConfigFile {
    /// The file's grid, or the scheme's default grid.
    pub fn grid(&self) -> SweepGrid {
        self.sweep.clone().unwrap_or_else(|| SweepGrid::for_scheme(self.experiment.scheme))
    }
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let mut table: toml::Table = text.parse()?;
    let sweep = match table.remove("sweep") {
        Some(v) => Some(v.try_into::<SweepGrid>().map_err(|e| Error::config("sweep", e.to_string()))?),
        None => None,
    };
    let experiment: ExperimentConfig = table.try_into()?;
    experiment.validate()?;
    if let Some(g) = &sweep {
        g.validate()?;
    }
    Ok(ConfigFile { experiment, sweep })
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Scheme, TargetShape};

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = parse_config("scheme = \"fixed_point\"").unwrap();
        assert_eq!(cfg.experiment, ExperimentConfig::new(Scheme::FixedPoint, 1.0, 1.0, 0.31));
        assert!(cfg.sweep.is_none());
        assert_eq!(cfg.grid().cells().len(), 9261);
    }

    #[test]
    fn full_file() {
        let text = r#"
            scheme = "fixed_plan"
            r = 4.0
            seed = 9
            [mpc]
            max_sqp_iters = 5
            [noise]
            position = 0.0
            [plan]
            v_max = 0.5
            [target]
            kind = "s_shape"
            period = 8.0
            [sweep]
            r = { start = 3.0, stop = 5.0, step = 1.0 }
            v = { start = 1.0, stop = 1.0, step = 0.1 }
            omega = { start = 0.31, stop = 0.31, step = 0.1 }
        "#;
        let cfg = parse_config(text).unwrap();
        let e = &cfg.experiment;
        assert_eq!(e.scheme, Scheme::FixedPlan);
        assert_eq!((e.r, e.seed, e.mpc.max_sqp_iters, e.plan.v_max), (4.0, 9, 5, 0.5));
        assert_eq!(e.noise.position, 0.0);
        assert_eq!(e.noise.velocity, 0.025);
        assert_eq!(e.target, TargetShape::SShape { period: 8.0 });
        assert_eq!(cfg.grid().cells().len(), 3);
    }

    fn message(text: &str) -> String {
        parse_config(text).unwrap_err().to_string()
    }

    #[test]
    fn errors_name_the_key() {
        assert!(message("r = 1.0").contains("scheme"));
        assert!(message("scheme = \"fixed_point\"\nbogus = 1").contains("bogus"));
        assert!(message("scheme = \"fixed_point\"\n[mpc]\nhorizn = 2.0").contains("horizn"));
        assert!(message("scheme = \"orbit\"").contains("orbit"));
        assert!(message("scheme = \"fixed_point\"\nduration = -1.0").contains("duration"));
        assert!(message("scheme = \"fixed_point\"\n[mpc]\nthrust_min = 30.0").contains("thrust_min"));
        assert!(
            message("scheme = \"fixed_point\"\n[sweep]\nr = { start = 1.0, stop = 0.0, step = 0.1 }").contains("sweep")
        );
    }
}
