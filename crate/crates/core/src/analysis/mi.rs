use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalizer for mutual information.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmiMode {
    /// `I / √(H(X)·H(Y))`
    #[default]
    Geometric,
    /// `2I / (H(X) + H(Y))`
    Arithmetic,
}

impl NmiMode {
    pub fn other(self) -> Self {
        match self {
            NmiMode::Geometric => NmiMode::Arithmetic,
            NmiMode::Arithmetic => NmiMode::Geometric,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NmiMode::Geometric => "geometric",
            NmiMode::Arithmetic => "arithmetic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nmi {
    pub value: f64,
    /// One marginal had zero entropy; `value` is then 0 by convention.
    pub degenerate: bool,
}

/// A characteristic series: categories are used as they are, numbers are
/// discretized.
#[derive(Clone, Copy, Debug)]
pub enum Series<'a> {
    Categorical(&'a [String]),
    Numeric(&'a [f64]),
}

impl Series<'_> {
    fn len(&self) -> usize {
        match self {
            Series::Categorical(v) => v.len(),
            Series::Numeric(v) => v.len(),
        }
    }

    fn codes(&self, bins: usize) -> Result<Vec<usize>> {
        match self {
            Series::Categorical(v) => {
                let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
                for s in v.iter() {
                    let n = ids.len();
                    ids.entry(s.as_str()).or_insert(n);
                }
                Ok(v.iter().map(|s| ids[s.as_str()]).collect())
            }
            Series::Numeric(v) => discretize(v, bins),
        }
    }
}

/// Bin codes for a numeric series.
///
/// With at most `bins` distinct values each value is its own category.
/// Otherwise values get equal-frequency bins by rank, `⌊rank·bins/n⌋`, and
/// tied values all take the bin of the first rank they occupy.
pub fn discretize(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::Contract(format!("need at least 2 bins, got {bins}")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("cannot discretize non-finite value {v}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let distinct = order.windows(2).filter(|w| values[w[0]] != values[w[1]]).count() + 1;
    let n = values.len();
    let mut codes = vec![0; n];
    let mut bin = 0;
    let mut distinct_id = 0;
    for (rank, &i) in order.iter().enumerate() {
        let starts_run = rank == 0 || values[order[rank - 1]] != values[i];
        if starts_run {
            if rank > 0 {
                distinct_id += 1;
            }
            bin = rank * bins / n;
        }
        codes[i] = if distinct <= bins { distinct_id } else { bin };
    }
    Ok(codes)
}

/// Normalized MI of a characteristic against rewards, both discretized with
/// `bins` (plug-in entropies, natural log).
pub fn normalized_mi(x: Series<'_>, rewards: &[f64], bins: usize, mode: NmiMode) -> Result<Nmi> {
    if x.len() != rewards.len() {
        return Err(Error::Dimension {
            expected: vec![x.len()],
            got: vec![rewards.len()],
        });
    }
    if rewards.is_empty() {
        return Err(Error::Contract("normalized_mi needs non-empty series".into()));
    }
    let xc = x.codes(bins)?;
    let yc = discretize(rewards, bins)?;
    Ok(nmi_from_codes(&xc, &yc, mode))
}

/// NMI of two already-discrete series.
pub fn nmi_from_codes(x: &[usize], y: &[usize], mode: NmiMode) -> Nmi {
    let kx = x.iter().max().map_or(0, |m| m + 1);
    let ky = y.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![vec![0.0; ky]; kx];
    for (&a, &b) in x.iter().zip(y) {
        joint[a][b] += 1.0;
    }
    nmi_from_joint(&joint, mode)
}

/// NMI of a joint count or probability table (rows X, columns Y).
pub fn nmi_from_joint(joint: &[Vec<f64>], mode: NmiMode) -> Nmi {
    let total: f64 = joint.iter().flatten().sum();
    let px: Vec<f64> = joint.iter().map(|r| r.iter().sum::<f64>() / total).collect();
    let ky = joint.iter().map(Vec::len).max().unwrap_or(0);
    let py: Vec<f64> = (0..ky)
        .map(|j| joint.iter().map(|r| r.get(j).copied().unwrap_or(0.0)).sum::<f64>() / total)
        .collect();
    let hx = entropy(&px);
    let hy = entropy(&py);
    if hx <= 0.0 || hy <= 0.0 {
        return Nmi {
            value: 0.0,
            degenerate: true,
        };
    }
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0.0 {
                let p = c / total;
                mi += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    let mi = mi.max(0.0);
    let value = match mode {
        NmiMode::Geometric => mi / (hx * hy).sqrt(),
        NmiMode::Arithmetic => 2.0 * mi / (hx + hy),
    };
    Nmi {
        value,
        degenerate: false,
    }
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>()
}
