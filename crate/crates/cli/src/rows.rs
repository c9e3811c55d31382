//! Result rows and their CSV form.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// One measured or derived value. Stochastic values carry `std_error` and
/// `seed`; deterministic ones leave both empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub params: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub chi: Option<usize>,
    pub method: String,
    pub observable: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub tau: Option<f64>,
    pub n_samples: Option<usize>,
    pub wall_time: f64,
    pub seed: Option<u64>,
    pub revision: String,
}

impl ResultRow {
    /// Rows are equal up to the wall time.
    pub fn same_result(&self, other: &Self) -> bool {
        Self { wall_time: 0.0, ..self.clone() } == Self { wall_time: 0.0, ..other.clone() }
            || (self.value.is_nan() && other.value.is_nan() && self.observable == other.observable)
    }
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>().with_context(|| format!("malformed result file {}", path.display()))
}

/// The build revision: `MPSMAGIC_REVISION` at compile time, else the
/// package version.
pub fn revision() -> String {
    option_env!("MPSMAGIC_REVISION").map(str::to_string).unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(value: f64, std_error: Option<f64>) -> ResultRow {
        ResultRow {
            experiment_id: "t".into(),
            params: "jz=0.5;d=0.635".into(),
            n: 8,
            chi: Some(4),
            method: "perfect".into(),
            observable: "m1".into(),
            value,
            std_error,
            tau: None,
            n_samples: Some(100),
            wall_time: 0.25,
            seed: Some(1),
            revision: revision(),
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = vec![row(0.125, Some(0.01)), row(f64::NAN, None)];
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "experiment_id,params,N,chi,method,observable,value,std_error,tau,n_samples,wall_time,seed,revision"
        );
        let back = read_csv(&path).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].value.is_nan() && back[1].std_error.is_none());
    }

    #[test]
    fn wall_time_is_ignored() {
        let a = row(1.0, None);
        let b = ResultRow { wall_time: 9.0, ..a.clone() };
        assert!(a.same_result(&b));
        assert!(!a.same_result(&row(1.5, None)));
    }
}
