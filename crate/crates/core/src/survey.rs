//! Demographic weight tables derived from survey ratings.
//!
//! For each demographic cell (attribute, type) and category, participants' ratings are
//! combined into a median-centred weighted average (`w1`). Averaging `w1` across all
//! types of an attribute gives `w2`. Both tables are then rescaled per attribute into
//! [`WEIGHT_MIN`, `WEIGHT_MAX`].

use crate::domain::{Attribute, Vocabulary};
use crate::error::{Error, Result};

pub const RATING_MAX: f64 = 5.0;
pub const WEIGHT_MIN: f64 = 0.1;
pub const WEIGHT_MAX: f64 = 0.6;
/// Guard added to |Δ| before inversion.
pub const DELTA_EPSILON: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct SurveyResponse {
    pub participant: String,
    pub attribute: Attribute,
    pub type_index: usize,
    /// One rating in [0, 5] per category.
    pub ratings: Vec<f64>,
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median of no values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mid = sorted.len() / 2;
    Ok(if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    })
}

/// Per-participant weights for one (cell, category): inverse distance to the median,
/// normalized to sum to one.
pub fn participant_weights(ratings: &[f64]) -> Result<Vec<f64>> {
    let m = median(ratings)?;
    let inv: Vec<f64> = ratings.iter().map(|r| 1.0 / ((m - r).abs() + DELTA_EPSILON)).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|w| w / total).collect())
}

/// `w1` for one cell and category.
pub fn weighted_rating_r1(ratings: &[f64]) -> Result<f64> {
    let w = participant_weights(ratings)?;
    Ok(w.iter().zip(ratings).map(|(w, r)| w * r).sum())
}

/// `w2` for one attribute and category: the mean of `w1` over all of the attribute's types.
pub fn weighted_rating_r2(r1_over_types: &[f64]) -> Result<f64> {
    if r1_over_types.is_empty() {
        return Err(Error::Empty("w1 values for w2"));
    }
    if let Some(v) = r1_over_types.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("w1 value {v}")));
    }
    Ok(r1_over_types.iter().sum::<f64>() / r1_over_types.len() as f64)
}

/// Min-max rescale into [WEIGHT_MIN, WEIGHT_MAX]; a constant input maps to the midpoint.
pub fn rescale(values: &mut [f64]) {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    for v in values.iter_mut() {
        *v = if hi > lo {
            WEIGHT_MIN + (WEIGHT_MAX - WEIGHT_MIN) * (*v - lo) / (hi - lo)
        } else {
            (WEIGHT_MIN + WEIGHT_MAX) / 2.0
        };
    }
}

/// `w1`/`w2` weights indexed by (attribute, type, category).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTable {
    n_categories: usize,
    type_counts: [usize; 5],
    offsets: [usize; 5],
    w1: Vec<f64>,
    w2: Vec<f64>,
    /// Cells that had no survey participants and were filled with the attribute mean.
    pub imputed: Vec<(Attribute, usize)>,
}

impl WeightTable {
    fn layout(type_counts: [usize; 5], n_categories: usize) -> ([usize; 5], usize) {
        let mut offsets = [0; 5];
        let mut acc = 0;
        for a in 0..5 {
            offsets[a] = acc;
            acc += type_counts[a] * n_categories;
        }
        (offsets, acc)
    }

    /// Table with every entry equal to `value`.
    pub fn constant(vocab: &Vocabulary, value: f64) -> Self {
        let type_counts = Attribute::ALL.map(|a| vocab.type_count(a));
        let n = vocab.n_categories();
        let (offsets, len) = Self::layout(type_counts, n);
        WeightTable {
            n_categories: n,
            type_counts,
            offsets,
            w1: vec![value; len],
            w2: vec![value; len],
            imputed: Vec::new(),
        }
    }

    /// Assembles a table from explicit records; every (attribute, type, category) must be set.
    pub fn from_entries<I>(vocab: &Vocabulary, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Attribute, usize, usize, f64, f64)>,
    {
        let mut table = WeightTable::constant(vocab, f64::NAN);
        for (attr, k, l, w1, w2) in entries {
            if k >= table.type_counts[attr.index()] || l >= table.n_categories {
                return Err(Error::invalid(format!("weight entry ({attr}, {k}, {l}) out of range")));
            }
            if !(w1.is_finite() && w2.is_finite() && w1 >= 0.0 && w2 >= 0.0) {
                return Err(Error::invalid(format!(
                    "weight entry ({attr}, {k}, {l}) not finite/non-negative"
                )));
            }
            let i = table.index(attr, k, l);
            table.w1[i] = w1;
            table.w2[i] = w2;
        }
        for attr in Attribute::ALL {
            for k in 0..table.type_counts[attr.index()] {
                if table.w1(attr, k).iter().any(|v| v.is_nan()) {
                    return Err(Error::MissingCell {
                        attribute: attr.to_string(),
                        type_label: vocab.types(attr)[k].clone(),
                    });
                }
            }
        }
        Ok(table)
    }

    fn index(&self, attr: Attribute, k: usize, l: usize) -> usize {
        self.offsets[attr.index()] + k * self.n_categories + l
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn type_count(&self, attr: Attribute) -> usize {
        self.type_counts[attr.index()]
    }

    pub fn contains(&self, attr: Attribute, k: usize) -> bool {
        k < self.type_counts[attr.index()]
    }

    /// `w1` per category for cell (attr, k).
    pub fn w1(&self, attr: Attribute, k: usize) -> &[f64] {
        let s = self.index(attr, k, 0);
        &self.w1[s..s + self.n_categories]
    }

    pub fn w2(&self, attr: Attribute, k: usize) -> &[f64] {
        let s = self.index(attr, k, 0);
        &self.w2[s..s + self.n_categories]
    }

    /// Mean of `w1` over all types and categories of an attribute.
    pub fn attribute_mean_w1(&self, attr: Attribute) -> f64 {
        let s = self.offsets[attr.index()];
        let len = self.type_counts[attr.index()] * self.n_categories;
        self.w1[s..s + len].iter().sum::<f64>() / len as f64
    }

    /// Flat `(attribute, type, category, w1, w2)` records in table order.
    pub fn entries(&self) -> Vec<(Attribute, usize, usize, f64, f64)> {
        let mut out = Vec::with_capacity(self.w1.len());
        for attr in Attribute::ALL {
            for k in 0..self.type_count(attr) {
                for l in 0..self.n_categories {
                    let i = self.index(attr, k, l);
                    out.push((attr, k, l, self.w1[i], self.w2[i]));
                }
            }
        }
        out
    }
}

pub fn build_weight_table(vocab: &Vocabulary, responses: &[SurveyResponse]) -> Result<WeightTable> {
    if responses.is_empty() {
        return Err(Error::Empty("survey responses"));
    }
    let n_cat = vocab.n_categories();
    for r in responses {
        if r.type_index >= vocab.type_count(r.attribute) {
            return Err(Error::invalid(format!(
                "participant {} has type {} out of range for {}",
                r.participant, r.type_index, r.attribute
            )));
        }
        if r.ratings.len() != n_cat {
            return Err(Error::shape(format!(
                "participant {} gave {} ratings, expected {n_cat}",
                r.participant,
                r.ratings.len()
            )));
        }
        if let Some(x) = r.ratings.iter().find(|x| !(0.0..=RATING_MAX).contains(*x)) {
            return Err(Error::invalid(format!(
                "participant {} rating {x} outside [0, {RATING_MAX}]",
                r.participant
            )));
        }
    }

    let mut table = WeightTable::constant(vocab, 0.0);
    for attr in Attribute::ALL {
        let k_count = vocab.type_count(attr);
        // w1 per type; None for cells without participants.
        let mut r1: Vec<Option<Vec<f64>>> = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let cell: Vec<&SurveyResponse> = responses
                .iter()
                .filter(|r| r.attribute == attr && r.type_index == k)
                .collect();
            if cell.is_empty() {
                r1.push(None);
                continue;
            }
            let per_cat = (0..n_cat)
                .map(|l| {
                    let ratings: Vec<f64> = cell.iter().map(|r| r.ratings[l]).collect();
                    weighted_rating_r1(&ratings)
                })
                .collect::<Result<Vec<_>>>()?;
            r1.push(Some(per_cat));
        }

        let present: Vec<&Vec<f64>> = r1.iter().flatten().collect();
        if present.is_empty() {
            return Err(Error::invalid(format!("no survey responses for attribute {attr}")));
        }
        let fill: Vec<f64> = (0..n_cat)
            .map(|l| present.iter().map(|v| v[l]).sum::<f64>() / present.len() as f64)
            .collect();
        let r1: Vec<Vec<f64>> = r1
            .into_iter()
            .enumerate()
            .map(|(k, v)| {
                v.unwrap_or_else(|| {
                    table.imputed.push((attr, k));
                    fill.clone()
                })
            })
            .collect();

        let r2: Vec<f64> = (0..n_cat)
            .map(|l| {
                let column: Vec<f64> = r1.iter().map(|v| v[l]).collect();
                weighted_rating_r2(&column)
            })
            .collect::<Result<_>>()?;

        let mut w1: Vec<f64> = r1.iter().flatten().copied().collect();
        let mut w2: Vec<f64> = (0..k_count).flat_map(|_| r2.iter().copied()).collect();
        rescale(&mut w1);
        rescale(&mut w2);

        let s = table.offsets[attr.index()];
        table.w1[s..s + w1.len()].copy_from_slice(&w1);
        table.w2[s..s + w2.len()].copy_from_slice(&w2);
    }
    Ok(table)
}
