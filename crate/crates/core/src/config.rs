//! Self-contained run configuration: plant (or consensus network), delay and
//! dwell specifications, solver and grid settings, and the simulation, sweep
//! and audit sections used by the individual workflows.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisOptions;
use crate::error::{Error, Result};
use crate::examples::AgentMatrices;
use crate::model::{DelaySpec, DwellSpec, PlantFile};
use crate::sim::{build_consensus, ConsensusNetwork, DelayFn, Hold, NetworkLoop, SimConfig};
use crate::synthesis::SynthesisOptions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub synthesis: SynthesisOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub certify: CertifySpec,
}

/// Row-major matrix as nested arrays.
pub type Rows = Vec<Vec<f64>>;

fn from_rows(name: &str, rows: &Rows) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("matrix {name} must be a non-empty rectangular array")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("matrix {name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Agent data of a consensus network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct AgentSpec {
    pub A: Rows,
    pub Ad: Rows,
    pub B: Rows,
    pub C: Rows,
    pub Cd: Rows,
    pub D: Rows,
    pub E: Rows,
    pub F: Rows,
}

impl AgentSpec {
    pub fn matrices(&self) -> Result<AgentMatrices> {
        Ok(AgentMatrices {
            a: from_rows("A", &self.A)?,
            ad: from_rows("Ad", &self.Ad)?,
            b: from_rows("B", &self.B)?,
            c: from_rows("C", &self.C)?,
            cd: from_rows("Cd", &self.Cd)?,
            d: from_rows("D", &self.D)?,
            e: from_rows("E", &self.E)?,
            f: from_rows("F", &self.F)?,
        })
    }
}

/// Agents coupled through `σ(t)L₁ + (1 − σ(t))L₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub agent: AgentSpec,
    pub laplacians: [Rows; 2],
    pub delay: DelaySpec,
    pub dwell: DwellSpec,
}

impl NetworkSpec {
    pub fn network(&self) -> Result<ConsensusNetwork> {
        ConsensusNetwork::new(
            self.agent.matrices()?,
            from_rows("L1", &self.laplacians[0])?,
            from_rows("L2", &self.laplacians[1])?,
        )
    }

    /// Scalarized plant and the full network model.
    pub fn build(&self) -> Result<(PlantFile, NetworkLoop)> {
        let (system, model) = build_consensus(&self.network()?, self.delay, self.dwell)?;
        Ok((
            PlantFile {
                system,
                delay: self.delay,
                dwell: self.dwell,
            },
            model,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub sim: SimConfig,
    #[serde(default = "default_hold")]
    pub hold: Hold,
    /// Parameter hold time; defaults to `T_D` and may not be shorter.
    #[serde(default)]
    pub spacing: Option<f64>,
    /// Run under the gain schedule passed alongside the config.
    #[serde(default)]
    pub closed_loop: bool,
    /// Simulate the full network instead of the scalarized plant.
    #[serde(default)]
    pub full_network: bool,
}

fn default_hold() -> Hold {
    Hold::Exact
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    H,
    Mu,
    TDwell,
    Kappa,
    RhoBar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpec {
    /// Largest certified upper bound of parameter `axis` in `[lo, hi]`.
    ParamBound {
        #[serde(default)]
        axis: usize,
        lo: f64,
        hi: f64,
        tol: f64,
    },
    /// Smallest certified dwell time in `[lo, hi]`.
    DwellTime { lo: f64, hi: f64, rel_tol: f64 },
    /// One analysis per value.
    Cells { variable: SweepVariable, values: Vec<f64> },
}

/// Where the audited certificate comes from when none is supplied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertSource {
    #[default]
    Analysis,
    Synthesis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySpec {
    pub source: CertSource,
    pub trajectories: usize,
    pub horizon: f64,
    /// Step size; defaults to `min(h/50, 10⁻³)`.
    pub dt: Option<f64>,
    /// Parameter hold time; defaults to `T_D`.
    pub spacing: Option<f64>,
    pub hold: Hold,
    pub rel_tol: f64,
    pub seed: u64,
    /// Constant initial function; defaults to all ones.
    pub x0: Option<Vec<f64>>,
    /// Defaults to the constant `d = h`.
    pub delay_fn: Option<DelayFn>,
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self {
            source: CertSource::Analysis,
            trajectories: 10,
            horizon: 10.0,
            dt: None,
            spacing: None,
            hold: Hold::Random,
            rel_tol: 1e-4,
            seed: 0,
            x0: None,
            delay_fn: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.plant, &self.network) {
            (Some(_), Some(_)) => return Err(Error::Config("give either plant or network, not both".into())),
            (None, None) => return Err(Error::Config("config needs a plant or a network".into())),
            (None, Some(net)) => {
                net.network()?;
            }
            (Some(_), None) => {}
        }
        self.analysis.grid.validate()?;
        self.synthesis.grid.validate()?;
        if let Some(sim) = &self.simulation {
            if sim.full_network && self.network.is_none() {
                return Err(Error::Config("full_network simulation needs a network section".into()));
            }
        }
        let c = &self.certify;
        if !(c.horizon > 0.0) || !(c.rel_tol > 0.0) || c.dt.is_some_and(|d| !(d > 0.0)) {
            return Err(Error::Config("certify horizon, dt and rel_tol must be positive".into()));
        }
        Ok(())
    }

    /// The plant, scalarized from the network when one is given.
    pub fn plant_file(&self) -> Result<PlantFile> {
        match (&self.plant, &self.network) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(n)) => Ok(n.build()?.0),
            (None, None) => Err(Error::Config("config needs a plant or a network".into())),
        }
    }

    pub fn network_model(&self) -> Result<Option<NetworkLoop>> {
        self.network.as_ref().map(|n| n.build().map(|b| b.1)).transpose()
    }
}

/// Agent data as nested arrays.
pub fn agent_spec(a: &AgentMatrices) -> AgentSpec {
    let rows = |m: &DMatrix<f64>| -> Rows { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
    AgentSpec {
        A: rows(&a.a),
        Ad: rows(&a.ad),
        B: rows(&a.b),
        C: rows(&a.c),
        Cd: rows(&a.cd),
        D: rows(&a.d),
        E: rows(&a.e),
        F: rows(&a.f),
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{consensus_agent, example1_plant, laplacian_dense6, laplacian_ring6};

    #[test]
    fn plant_config_round_trip() {
        let cfg = RunConfig {
            name: "ex1".into(),
            plant: Some(example1_plant(0.7).unwrap()),
            network: None,
            analysis: AnalysisOptions::default(),
            synthesis: SynthesisOptions::default(),
            simulation: None,
            sweep: Some(SweepSpec::ParamBound {
                axis: 0,
                lo: 0.5,
                hi: 1.0,
                tol: 0.01,
            }),
            certify: CertifySpec::default(),
        };
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn network_config_scalarizes() {
        let cfg = RunConfig {
            name: "net".into(),
            plant: None,
            network: Some(NetworkSpec {
                agent: agent_spec(&consensus_agent()),
                laplacians: [matrix_rows(&laplacian_ring6()), matrix_rows(&laplacian_dense6())],
                delay: DelaySpec::new(0.2, 0.9).unwrap(),
                dwell: DwellSpec::new(0.1, 0.01).unwrap(),
            }),
            analysis: AnalysisOptions::default(),
            synthesis: SynthesisOptions::default(),
            simulation: None,
            sweep: None,
            certify: CertifySpec::default(),
        };
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        let pf = back.plant_file().unwrap();
        assert_eq!(pf, crate::examples::example3_plant().unwrap());
    }

    #[test]
    fn malformed_configs_are_config_errors() {
        assert!(matches!(RunConfig::from_json("{"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json("{}"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"plant": null, "bogus": 1}"#), Err(Error::Config(_))));
    }
}
