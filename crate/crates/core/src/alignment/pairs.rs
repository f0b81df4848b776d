use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::dtw::AlignmentPath;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    TimeAligned,
    Dtw,
    External,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::TimeAligned => "time_aligned",
            Provenance::Dtw => "dtw",
            Provenance::External => "external",
        }
    }
}

/// One correspondence. `cond` indexes the trajectory pair the states came
/// from; `src_t` / `tgt_t` are time steps within those trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEntry {
    pub cond: usize,
    pub src_t: usize,
    pub tgt_t: usize,
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub entries: Vec<PairEntry>,
    pub provenance: Provenance,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.source.len())
    }

    pub fn target_dim(&self) -> usize {
        self.entries.first().map_or(0, |e| e.target.len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::arg("pair set is empty"));
        }
        let (ds, dt) = (self.source_dim(), self.target_dim());
        if self
            .entries
            .iter()
            .any(|e| e.source.len() != ds || e.target.len() != dt)
        {
            return Err(Error::arg("pair set mixes state dimensions"));
        }
        Ok(())
    }

    pub fn as_batch(&self) -> Vec<(&[f64], &[f64])> {
        self.entries
            .iter()
            .map(|e| (e.source.as_slice(), e.target.as_slice()))
            .collect()
    }

    pub fn sources(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.source.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.target.clone()).collect()
    }

    /// Concatenates sets, renumbering `cond` so trajectory indices stay
    /// distinct. `counts[i]` is the number of trajectory pairs behind set `i`.
    pub fn pooled(sets: &[PairSet], counts: &[usize]) -> Result<PairSet> {
        if sets.is_empty() || sets.len() != counts.len() {
            return Err(Error::arg(
                "pooling needs one trajectory count per pair set",
            ));
        }
        let mut entries = Vec::new();
        let mut offset = 0;
        for (set, &n) in sets.iter().zip(counts) {
            entries.extend(set.entries.iter().map(|e| PairEntry {
                cond: e.cond + offset,
                ..e.clone()
            }));
            offset += n;
        }
        let provenance = if sets.iter().all(|s| s.provenance == sets[0].provenance) {
            sets[0].provenance
        } else {
            Provenance::External
        };
        let out = PairSet {
            entries,
            provenance,
        };
        out.validate()?;
        Ok(out)
    }

    /// `cond,src_t,tgt_t` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cond,src_t,tgt_t\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{}", e.cond, e.src_t, e.tgt_t);
        }
        out
    }

    /// Rebuilds a pair set from index rows and the agent-state sequences they index.
    pub fn from_csv(
        text: &str,
        source: &[Vec<Vec<f64>>],
        target: &[Vec<Vec<f64>>],
        provenance: Provenance,
    ) -> Result<PairSet> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "cond,src_t,tgt_t")) => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected header cond,src_t,tgt_t".into(),
                })
            }
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            let bad = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let v: Vec<usize> = line
                .split(',')
                .map(|f| f.trim().parse::<usize>().map_err(|e| bad(e.to_string())))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(bad("expected three columns".into()));
            }
            let s = source.get(v[0]).and_then(|s| s.get(v[1]));
            let t = target.get(v[0]).and_then(|t| t.get(v[2]));
            let (Some(s), Some(t)) = (s, t) else {
                return Err(bad("index out of range".into()));
            };
            entries.push(PairEntry {
                cond: v[0],
                src_t: v[1],
                tgt_t: v[2],
                source: s.clone(),
                target: t.clone(),
            });
        }
        Ok(PairSet {
            entries,
            provenance,
        })
    }
}

fn check_lists(src: &[Trajectory], tgt: &[Trajectory]) -> Result<()> {
    if src.is_empty() || src.len() != tgt.len() {
        return Err(Error::arg(format!(
            "need the same non-zero number of source and target trajectories (got {} and {})",
            src.len(),
            tgt.len()
        )));
    }
    Ok(())
}

/// Pairs the agent states visited at the same time step.
pub fn time_align(src: &[Trajectory], tgt: &[Trajectory]) -> Result<PairSet> {
    check_lists(src, tgt)?;
    let mut entries = Vec::new();
    for (c, (s, t)) in src.iter().zip(tgt).enumerate() {
        if s.states.len() != t.states.len() {
            return Err(Error::arg(format!(
                "trajectory {c}: horizons differ ({} vs {})",
                s.horizon(),
                t.horizon()
            )));
        }
        entries.extend(
            s.states
                .iter()
                .zip(&t.states)
                .enumerate()
                .map(|(i, (a, b))| PairEntry {
                    cond: c,
                    src_t: i,
                    tgt_t: i,
                    source: a.agent.clone(),
                    target: b.agent.clone(),
                }),
        );
    }
    Ok(PairSet {
        entries,
        provenance: Provenance::TimeAligned,
    })
}

/// Pairs along one alignment path per trajectory pair.
pub fn pairs_from_paths(
    src: &[Trajectory],
    tgt: &[Trajectory],
    paths: &[AlignmentPath],
) -> Result<PairSet> {
    check_lists(src, tgt)?;
    if paths.len() != src.len() {
        return Err(Error::arg("need one alignment path per trajectory pair"));
    }
    let mut entries = Vec::new();
    for (c, ((s, t), p)) in src.iter().zip(tgt).zip(paths).enumerate() {
        for &(i, j) in &p.path {
            let (Some(a), Some(b)) = (s.states.get(i), t.states.get(j)) else {
                return Err(Error::arg(format!("path index ({i}, {j}) out of range")));
            };
            entries.push(PairEntry {
                cond: c,
                src_t: i,
                tgt_t: j,
                source: a.agent.clone(),
                target: b.agent.clone(),
            });
        }
    }
    Ok(PairSet {
        entries,
        provenance: Provenance::Dtw,
    })
}

/// `cond,t,<columns>` rows of the agent states a pair CSV indexes.
pub fn agent_states_csv(trajs: &[Trajectory], columns: &[String]) -> String {
    let mut out = String::from("cond,t");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (c, tr) in trajs.iter().enumerate() {
        for (t, s) in tr.states.iter().enumerate() {
            let _ = write!(out, "{c},{t}");
            for v in &s.agent {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DomainState;

    pub(crate) fn traj(cond: usize, states: &[Vec<f64>]) -> Trajectory {
        Trajectory {
            condition: cond,
            states: states
                .iter()
                .map(|s| DomainState {
                    agent: s.clone(),
                    env: vec![0.0; 4],
                })
                .collect(),
            actions: vec![vec![0.0]; states.len() - 1],
            costs: vec![0.0; states.len()],
            success: false,
        }
    }

    fn ramp(n: usize, d: usize, k: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|t| (0..d).map(|i| k * t as f64 + i as f64).collect())
            .collect()
    }

    #[test]
    fn horizon_three_gives_four_pairs() {
        let a = traj(0, &ramp(4, 2, 1.0));
        let b = traj(0, &ramp(4, 3, 2.0));
        let p = time_align(&[a.clone()], &[b.clone()]).unwrap();
        assert_eq!(p.len(), 4);
        for (t, e) in p.entries.iter().enumerate() {
            assert_eq!((e.src_t, e.tgt_t), (t, t));
            assert_eq!(e.source, a.states[t].agent);
            assert_eq!(e.target, b.states[t].agent);
        }
    }

    #[test]
    fn self_pairing_has_equal_members() {
        let a = traj(0, &ramp(6, 3, 0.5));
        let p = time_align(&[a.clone()], &[a]).unwrap();
        assert!(p.entries.iter().all(|e| e.source == e.target));
    }

    #[test]
    fn pair_count_sums_over_conditions() {
        let src: Vec<Trajectory> = (0..3).map(|c| traj(c, &ramp(5 + c, 2, 1.0))).collect();
        let tgt: Vec<Trajectory> = (0..3).map(|c| traj(c, &ramp(5 + c, 4, 1.0))).collect();
        let expected: usize = src.iter().map(|t| t.horizon() + 1).sum();
        assert_eq!(time_align(&src, &tgt).unwrap().len(), expected);
    }

    #[test]
    fn horizon_mismatch_is_an_error() {
        let a = traj(0, &ramp(4, 2, 1.0));
        let b = traj(0, &ramp(5, 2, 1.0));
        assert!(matches!(time_align(&[a], &[b]), Err(Error::Argument(_))));
    }

    #[test]
    fn csv_round_trip() {
        let src: Vec<Trajectory> = (0..2)
            .map(|c| traj(c, &ramp(4, 2, 1.0 + c as f64)))
            .collect();
        let tgt: Vec<Trajectory> = (0..2).map(|c| traj(c, &ramp(4, 3, 0.5))).collect();
        let p = time_align(&src, &tgt).unwrap();
        let s: Vec<Vec<Vec<f64>>> = src.iter().map(|t| t.agent_states()).collect();
        let t: Vec<Vec<Vec<f64>>> = tgt.iter().map(|t| t.agent_states()).collect();
        let back = PairSet::from_csv(&p.to_csv(), &s, &t, p.provenance).unwrap();
        assert_eq!(back, p);
        let cols: Vec<String> = vec!["a".into(), "b".into()];
        let csv = agent_states_csv(&src, &cols);
        assert_eq!(csv.lines().count(), 1 + 8);
        assert!(csv.starts_with("cond,t,a,b\n0,0,0,1\n"));
    }

    #[test]
    fn pooling_renumbers_conditions() {
        let a = traj(0, &ramp(3, 2, 1.0));
        let b = traj(0, &ramp(3, 2, 1.0));
        let p = time_align(&[a.clone(), a], &[b.clone(), b]).unwrap();
        let pooled = PairSet::pooled(&[p.clone(), p], &[2, 2]).unwrap();
        let conds: Vec<usize> = pooled.entries.iter().map(|e| e.cond).collect();
        assert_eq!(conds, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
    }
}
