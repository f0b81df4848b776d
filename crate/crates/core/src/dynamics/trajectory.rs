use std::fmt::Write as _;

use super::domain::DomainState;
use crate::error::{Error, Result};

/// One episode: `horizon + 1` states, `horizon` actions and `horizon + 1`
/// costs (the last one is the terminal cost with no action).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub condition: usize,
    pub states: Vec<DomainState>,
    pub actions: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    pub success: bool,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn agent_states(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.agent.clone()).collect()
    }

    /// CSV with header `t,<agent>,<env>,<action>,cost`; the final row leaves
    /// the action cells empty.
    pub fn to_csv(
        &self,
        agent_cols: &[String],
        env_cols: &[String],
        action_cols: &[String],
    ) -> String {
        let mut out = String::from("t");
        for c in agent_cols.iter().chain(env_cols).chain(action_cols) {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",cost\n");
        for (t, s) in self.states.iter().enumerate() {
            write!(out, "{t}").unwrap();
            for v in s.agent.iter().chain(&s.env) {
                write!(out, ",{v}").unwrap();
            }
            match self.actions.get(t) {
                Some(a) => a.iter().for_each(|v| write!(out, ",{v}").unwrap()),
                None => (0..action_cols.len()).for_each(|_| out.push(',')),
            }
            writeln!(out, ",{}", self.costs[t]).unwrap();
        }
        out
    }

    /// Parses the output of [`Trajectory::to_csv`]. The success flag is not
    /// stored in the file and comes back `false`.
    pub fn from_csv(
        text: &str,
        agent_dim: usize,
        env_dim: usize,
        action_dim: usize,
    ) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::arg("empty trajectory CSV"))?;
        let width = 2 + agent_dim + env_dim + action_dim;
        if header.split(',').count() != width {
            return Err(Error::arg("trajectory CSV header width mismatch"));
        }
        let mut traj = Trajectory {
            condition: 0,
            states: vec![],
            actions: vec![],
            costs: vec![],
            success: false,
        };
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != width {
                return Err(Error::Parse {
                    line: i + 2,
                    message: "wrong number of cells".into(),
                });
            }
            let num = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse {
                    line: i + 2,
                    message: format!("bad number `{s}`"),
                })
            };
            let mut vals = cells[1..=agent_dim + env_dim].iter().map(|c| num(c));
            let agent = (&mut vals).take(agent_dim).collect::<Result<Vec<_>>>()?;
            let env = vals.collect::<Result<Vec<_>>>()?;
            traj.states.push(DomainState { agent, env });
            let action_cells = &cells[1 + agent_dim + env_dim..width - 1];
            if action_cells.iter().all(|c| !c.is_empty()) && action_dim > 0 {
                traj.actions
                    .push(action_cells.iter().map(|c| num(c)).collect::<Result<_>>()?);
            }
            traj.costs.push(num(cells[width - 1])?);
        }
        Ok(traj)
    }
}
