use super::config::{parse_config, ExperimentConfig};
use crate::error::Result;

/// A shipped experiment document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub text: &'static str,
}

impl CatalogEntry {
    pub fn config(&self) -> Result<ExperimentConfig> {
        parse_config(self.text)
    }
}

const CATALOG: [CatalogEntry; 6] = [
    CatalogEntry {
        id: "button_3to4",
        text: include_str!("../../configs/button_3to4.toml"),
    },
    CatalogEntry {
        id: "button_3to4_proxy_reach",
        text: include_str!("../../configs/button_3to4_proxy_reach.toml"),
    },
    CatalogEntry {
        id: "button_3to4_proxy_push",
        text: include_str!("../../configs/button_3to4_proxy_push.toml"),
    },
    CatalogEntry {
        id: "button_3to4_proxy_peg",
        text: include_str!("../../configs/button_3to4_proxy_peg.toml"),
    },
    CatalogEntry {
        id: "tendon_block_pull",
        text: include_str!("../../configs/tendon_block_pull.toml"),
    },
    CatalogEntry {
        id: "tendon_block_pull_em",
        text: include_str!("../../configs/tendon_block_pull_em.toml"),
    },
];

/// Shipped experiments in a fixed order.
pub fn list_experiments() -> &'static [CatalogEntry] {
    &CATALOG
}

pub fn find_experiment(id: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Actuation;

    #[test]
    fn every_entry_parses_under_its_own_id() {
        assert!(list_experiments().len() >= 5);
        for e in list_experiments() {
            let cfg = e.config().unwrap_or_else(|err| panic!("{}: {err}", e.id));
            assert_eq!(cfg.id, e.id);
            assert!(!cfg.description.is_empty());
        }
    }

    #[test]
    fn shipped_transfers_start_from_the_three_link_torque_arm() {
        for e in list_experiments() {
            let cfg = e.config().unwrap();
            let src = cfg.source_spec().unwrap();
            assert_eq!(src.morphology.actuation, Actuation::Torque);
            assert_eq!(src.morphology.link_lengths.len(), 3);
            let tgt = cfg.target_spec().unwrap();
            if e.id.starts_with("button") {
                assert_eq!(tgt.morphology.link_lengths.len(), 4);
                assert_eq!(tgt.morphology.actuation, Actuation::Torque);
            } else {
                assert_eq!(tgt.morphology.actuation, Actuation::Tendon);
            }
        }
    }

    #[test]
    fn ids_are_unique() {
        for (i, a) in list_experiments().iter().enumerate() {
            assert!(list_experiments()[i + 1..].iter().all(|b| b.id != a.id));
            assert_eq!(find_experiment(a.id), Some(a));
        }
        assert!(find_experiment("nope").is_none());
    }
}
