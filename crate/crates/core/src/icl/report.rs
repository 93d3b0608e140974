use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::icl::{ExemplarSet, Ordering, OrderingStrategy, RewardMode, SelectionStrategy};

/// Plain `key=value` summary of one selection + ordering run.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub strategy: SelectionStrategy,
    pub ordering_strategy: OrderingStrategy,
    pub mode: RewardMode,
    pub k: usize,
    pub budget: u64,
    pub selected_ids: Vec<String>,
    pub selection_reward: f64,
    pub selection_evaluations: u64,
    pub order: Vec<usize>,
    pub ordered_ids: Vec<String>,
    pub ordering_reward: f64,
    pub ordering_evaluations: u64,
}

impl SelectionReport {
    pub fn new(
        selected: &ExemplarSet,
        ordering: &Ordering,
        strategy: SelectionStrategy,
        ordering_strategy: OrderingStrategy,
        mode: RewardMode,
        budget: u64,
    ) -> Result<Self> {
        let ordered_ids = selected.ordered(ordering)?.iter().map(|e| e.id().to_string()).collect();
        Ok(SelectionReport {
            strategy,
            ordering_strategy,
            mode,
            k: selected.len(),
            budget,
            selected_ids: selected.ids().into_iter().map(String::from).collect(),
            selection_reward: selected.reward,
            selection_evaluations: selected.evaluations,
            order: ordering.permutation.clone(),
            ordered_ids,
            ordering_reward: ordering.reward,
            ordering_evaluations: ordering.evaluations,
        })
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let order: Vec<String> = self.order.iter().map(usize::to_string).collect();
        let mut s = String::new();
        let _ = writeln!(s, "strategy={}", self.strategy);
        let _ = writeln!(s, "ordering_strategy={}", self.ordering_strategy);
        let _ = writeln!(s, "mode={}", self.mode);
        let _ = writeln!(s, "k={}", self.k);
        let _ = writeln!(s, "budget={}", self.budget);
        let _ = writeln!(s, "selected_ids={}", join(&self.selected_ids));
        let _ = writeln!(s, "selection_reward={}", self.selection_reward);
        let _ = writeln!(s, "selection_evaluations={}", self.selection_evaluations);
        let _ = writeln!(s, "order={}", order.join(","));
        let _ = writeln!(s, "ordered_ids={}", join(&self.ordered_ids));
        let _ = writeln!(s, "ordering_reward={}", self.ordering_reward);
        let _ = writeln!(s, "ordering_evaluations={}", self.ordering_evaluations);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("selection report line {}: expected key=value", n + 1)))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            kv.get(k)
                .copied()
                .ok_or_else(|| Error::validation(format!("selection report lacks `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::validation(format!("selection report: `{k}` is not a number")))
        };
        let int = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::validation(format!("selection report: `{k}` is not an integer")))
        };
        let list = |k: &str| -> Result<Vec<String>> {
            Ok(get(k)?.split(',').filter(|s| !s.is_empty()).map(String::from).collect())
        };
        let order = list("order")?
            .iter()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::validation("selection report: bad `order`"))?;
        let report = SelectionReport {
            strategy: get("strategy")?.parse()?,
            ordering_strategy: get("ordering_strategy")?.parse()?,
            mode: get("mode")?.parse()?,
            k: int("k")? as usize,
            budget: int("budget")?,
            selected_ids: list("selected_ids")?,
            selection_reward: num("selection_reward")?,
            selection_evaluations: int("selection_evaluations")?,
            order,
            ordered_ids: list("ordered_ids")?,
            ordering_reward: num("ordering_reward")?,
            ordering_evaluations: int("ordering_evaluations")?,
        };
        Ordering {
            permutation: report.order.clone(),
            reward: report.ordering_reward,
            evaluations: 0,
        }
        .check(report.selected_ids.len())?;
        if report.k != report.selected_ids.len() || report.ordered_ids.len() != report.k {
            return Err(Error::validation("selection report: id lists disagree with k"));
        }
        Ok(report)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
