//! The 33 generation tasks over PPG, ECG and BP, their canonical names, and
//! slot assignment.
//!
//! Per target modality there are three translation condition sets and four
//! restoration condition sets (degraded target plus any subset of the other
//! two), each restoration set in a denoising and an imputation flavour:
//! `3 + 4 * 2 = 11` tasks per target.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskFamily {
    Translation,
    Denoising,
    Imputation,
}

impl TaskFamily {
    pub fn is_restoration(self) -> bool {
        self != TaskFamily::Translation
    }

    fn prefix(self) -> &'static str {
        match self {
            TaskFamily::Translation => "trans",
            TaskFamily::Denoising => "den",
            TaskFamily::Imputation => "imp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConditionKind {
    Clean,
    /// Additive Gaussian noise at a configured SNR.
    Noisy,
    /// Contiguous gap, zero-filled.
    Masked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub modality: Modality,
    pub kind: ConditionKind,
}

/// One generation task. Conditions are kept sorted by slot index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskSpec {
    pub target: Modality,
    pub family: TaskFamily,
    pub conditions: Vec<Condition>,
}

/// Role of a modality slot within a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotRole {
    ConditionClean,
    ConditionDegraded,
    Generation,
    Blocked,
}

impl TaskSpec {
    pub fn translation(target: Modality, sources: &[Modality]) -> Result<TaskSpec> {
        let conditions = sources
            .iter()
            .map(|&m| Condition {
                modality: m,
                kind: ConditionKind::Clean,
            })
            .collect();
        TaskSpec::new(target, TaskFamily::Translation, conditions)
    }

    /// Restoration of `target` from its degraded copy plus clean `extra` modalities.
    pub fn restoration(target: Modality, family: TaskFamily, extra: &[Modality]) -> Result<TaskSpec> {
        let kind = match family {
            TaskFamily::Denoising => ConditionKind::Noisy,
            TaskFamily::Imputation => ConditionKind::Masked,
            TaskFamily::Translation => {
                return Err(Error::InvalidTask("restoration needs a restoration family".into()))
            }
        };
        let mut conditions = vec![Condition {
            modality: target,
            kind,
        }];
        conditions.extend(extra.iter().map(|&m| Condition {
            modality: m,
            kind: ConditionKind::Clean,
        }));
        TaskSpec::new(target, family, conditions)
    }

    pub fn new(target: Modality, family: TaskFamily, mut conditions: Vec<Condition>) -> Result<TaskSpec> {
        conditions.sort();
        let task = TaskSpec {
            target,
            family,
            conditions,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTask(format!("{m}: {self:?}")));
        if !self.target.is_physical() {
            return bad("AM cannot be a target");
        }
        let n = self.conditions.len();
        if !(1..=3).contains(&n) {
            return bad("a task needs 1 to 3 conditions");
        }
        if self.conditions.iter().any(|c| !c.modality.is_physical()) {
            return bad("AM cannot be a condition");
        }
        for w in self.conditions.windows(2) {
            if w[0].modality == w[1].modality {
                return bad("duplicate condition modality");
            }
        }
        match self.family {
            TaskFamily::Translation => {
                if self.conditions.iter().any(|c| c.modality == self.target) {
                    return bad("translation target cannot be a condition");
                }
                if self.conditions.iter().any(|c| c.kind != ConditionKind::Clean) {
                    return bad("translation conditions must be clean");
                }
            }
            TaskFamily::Denoising | TaskFamily::Imputation => {
                let want = if self.family == TaskFamily::Denoising {
                    ConditionKind::Noisy
                } else {
                    ConditionKind::Masked
                };
                for c in &self.conditions {
                    let ok = if c.modality == self.target {
                        c.kind == want
                    } else {
                        c.kind == ConditionKind::Clean
                    };
                    if !ok {
                        return bad("restoration needs exactly the target degraded, others clean");
                    }
                }
                if !self.conditions.iter().any(|c| c.modality == self.target) {
                    return bad("restoration needs the degraded target as a condition");
                }
            }
        }
        Ok(())
    }

    pub fn n_conditions(&self) -> usize {
        self.conditions.len()
    }

    /// Target slot for translation, AM for restoration.
    pub fn generation_slot(&self) -> Modality {
        if self.family.is_restoration() {
            Modality::Am
        } else {
            self.target
        }
    }

    pub fn condition_modalities(&self) -> Vec<Modality> {
        self.conditions.iter().map(|c| c.modality).collect()
    }

    /// Role of every slot, indexed by [`Modality::index`].
    pub fn assign_slots(&self) -> Result<[SlotRole; 4]> {
        self.validate()?;
        let mut roles = [SlotRole::Blocked; 4];
        for c in &self.conditions {
            roles[c.modality.index()] = if c.kind == ConditionKind::Clean {
                SlotRole::ConditionClean
            } else {
                SlotRole::ConditionDegraded
            };
        }
        roles[self.generation_slot().index()] = SlotRole::Generation;
        Ok(roles)
    }

    /// Canonical identifier, e.g. `imp:ECG|cond:PPG,ECG~mask,BP`.
    pub fn name(&self) -> String {
        let conds: Vec<String> = self
            .conditions
            .iter()
            .map(|c| match c.kind {
                ConditionKind::Clean => c.modality.name().to_string(),
                ConditionKind::Noisy => format!("{}~noise", c.modality),
                ConditionKind::Masked => format!("{}~mask", c.modality),
            })
            .collect();
        format!("{}:{}|cond:{}", self.family.prefix(), self.target, conds.join(","))
    }

    pub fn parse(s: &str) -> Result<TaskSpec> {
        let bad = || Error::InvalidTask(format!("cannot parse task `{s}`"));
        let (head, cond) = s.trim().split_once('|').ok_or_else(bad)?;
        let (fam, target) = head.split_once(':').ok_or_else(bad)?;
        let family = match fam {
            "trans" => TaskFamily::Translation,
            "den" => TaskFamily::Denoising,
            "imp" => TaskFamily::Imputation,
            _ => return Err(bad()),
        };
        let target = Modality::parse(target)?;
        let list = cond.strip_prefix("cond:").ok_or_else(bad)?;
        let conditions = list
            .split(',')
            .map(|item| {
                let (m, kind) = match item.split_once('~') {
                    None => (item, ConditionKind::Clean),
                    Some((m, "noise")) => (m, ConditionKind::Noisy),
                    Some((m, "mask")) => (m, ConditionKind::Masked),
                    Some(_) => return Err(bad()),
                };
                Ok(Condition {
                    modality: Modality::parse(m)?,
                    kind,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        TaskSpec::new(target, family, conditions)
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// All non-empty subsets of `items`, smallest first.
fn subsets(items: &[Modality]) -> Vec<Vec<Modality>> {
    let mut out: Vec<Vec<Modality>> = (1..(1u32 << items.len()))
        .map(|bits| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .map(|(_, &m)| m)
                .collect()
        })
        .collect();
    out.sort_by_key(|s| s.len());
    out
}

/// All 33 valid tasks in a stable order.
pub fn enumerate_tasks() -> Vec<TaskSpec> {
    let mut tasks = Vec::with_capacity(33);
    for target in Modality::PHYSICAL {
        let others: Vec<Modality> = Modality::PHYSICAL
            .iter()
            .copied()
            .filter(|&m| m != target)
            .collect();
        let sets = subsets(&others);
        for s in &sets {
            tasks.push(TaskSpec::translation(target, s).expect("valid translation"));
        }
        for family in [TaskFamily::Denoising, TaskFamily::Imputation] {
            tasks.push(TaskSpec::restoration(target, family, &[]).expect("valid restoration"));
            for s in &sets {
                tasks.push(TaskSpec::restoration(target, family, s).expect("valid restoration"));
            }
        }
    }
    tasks
}
