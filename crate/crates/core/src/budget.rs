use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A retrieval budget: how many query-side and candidate-side vectors to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Budget {
    r_q: usize,
    r_c: usize,
}

impl Budget {
    pub fn new(r_q: usize, r_c: usize) -> Result<Self> {
        if r_q < 1 || r_c < 1 {
            return Err(Error::InvalidBudget { r_q, r_c });
        }
        Ok(Self { r_q, r_c })
    }

    pub fn r_q(&self) -> usize {
        self.r_q
    }

    pub fn r_c(&self) -> usize {
        self.r_c
    }

    /// Componentwise `<=`.
    pub fn fits_within(&self, other: &Budget) -> bool {
        self.r_q <= other.r_q && self.r_c <= other.r_c
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.r_q, self.r_c)
    }
}

impl FromStr for Budget {
    type Err = Error;

    /// Parses `rq:rc`.
    fn from_str(s: &str) -> Result<Self> {
        let (q, c) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("budget '{s}' is not of the form rq:rc")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("budget '{s}': '{v}' is not a count")))
        };
        Budget::new(parse(q)?, parse(c)?)
    }
}

/// Ordered nested group sizes fixed at training time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLadder {
    groups: Vec<Budget>,
}

impl BudgetLadder {
    /// Builds a ladder, checking only that both sides strictly increase.
    pub fn new(groups: Vec<Budget>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::EmptyLadder);
        }
        for (g, pair) in groups.windows(2).enumerate() {
            if pair[1].r_q <= pair[0].r_q {
                return Err(Error::NotIncreasing {
                    group: g + 1,
                    side: "query",
                });
            }
            if pair[1].r_c <= pair[0].r_c {
                return Err(Error::NotIncreasing {
                    group: g + 1,
                    side: "candidate",
                });
            }
        }
        Ok(Self { groups })
    }

    /// `{(1,1),(2,4),(4,8),(8,16),(16,64)}`.
    pub fn default_ladder() -> Self {
        let groups = [(1, 1), (2, 4), (4, 8), (8, 16), (16, 64)]
            .into_iter()
            .map(|(r_q, r_c)| Budget { r_q, r_c })
            .collect();
        Self { groups }
    }

    pub fn groups(&self) -> &[Budget] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn last(&self) -> Budget {
        *self.groups.last().expect("ladder is never empty")
    }
}

impl fmt::Display for BudgetLadder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for BudgetLadder {
    type Err = Error;

    /// Parses `rq:rc,rq:rc,...`.
    fn from_str(s: &str) -> Result<Self> {
        let groups = s
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<Budget>>>()?;
        BudgetLadder::new(groups)
    }
}

/// Succeeds iff both sides strictly increase and the final group is
/// `(model_r_q, model_r_c)`.
pub fn validate_ladder(ladder: &[Budget], model_r_q: usize, model_r_c: usize) -> Result<()> {
    let ladder = BudgetLadder::new(ladder.to_vec())?;
    let last = ladder.last();
    if last.r_q != model_r_q || last.r_c != model_r_c {
        return Err(Error::LastGroupMismatch {
            r_q: last.r_q,
            r_c: last.r_c,
            model_r_q,
            model_r_c,
        });
    }
    Ok(())
}
