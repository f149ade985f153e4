use std::collections::BTreeSet;
use std::str::FromStr;

/// Recording filter: `rec-0011..rec-0050` (inclusive, by id order) or a
/// comma-separated list of ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    Range(String, String),
    Ids(BTreeSet<String>),
}

impl Selection {
    pub fn contains(&self, rid: &str) -> bool {
        match self {
            Selection::Range(a, b) => a.as_str() <= rid && rid <= b.as_str(),
            Selection::Ids(ids) => ids.contains(rid),
        }
    }
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((a, b)) = s.split_once("..") {
            if a.is_empty() || b.is_empty() || a > b {
                return Err(format!("bad recording range {s:?}"));
            }
            return Ok(Selection::Range(a.into(), b.into()));
        }
        let ids: BTreeSet<String> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect();
        if ids.is_empty() {
            return Err("empty recording list".into());
        }
        Ok(Selection::Ids(ids))
    }
}

pub fn selected(sel: &Option<Selection>, rid: &str) -> bool {
    sel.as_ref().is_none_or(|s| s.contains(rid))
}
