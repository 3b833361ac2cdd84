use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Tensor;

/// Globally unique identity of one stored instance: the owning bag id in
/// the high 32 bits, the row index in the low 32.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProvenanceId(pub u64);

impl ProvenanceId {
    pub fn new(bag_id: u64, index: usize) -> Self {
        debug_assert!(bag_id <= u64::from(u32::MAX) && index <= u32::MAX as usize);
        Self((bag_id << 32) | index as u64)
    }

    pub fn bag_id(self) -> u64 {
        self.0 >> 32
    }

    pub fn index(self) -> usize {
        (self.0 & 0xffff_ffff) as usize
    }
}

impl fmt::Display for ProvenanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.bag_id(), self.index())
    }
}

/// A labelled multiset of instance vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Bag {
    pub id: u64,
    pub label: u8,
    /// `n × d`
    pub instances: Tensor,
    /// Optional per-instance 0/1 tags (synthetic data).
    pub instance_labels: Option<Vec<u8>>,
}

impl Bag {
    /// Validated constructor. Checks non-emptiness, finiteness and, when
    /// instance tags are present, that a binary bag label agrees with its
    /// tags: positive iff at least one tag is positive.
    pub fn new(id: u64, label: u8, instances: Tensor, instance_labels: Option<Vec<u8>>) -> Result<Self> {
        if id > u64::from(u32::MAX) {
            return Err(Error::Config(format!("bag id {id} exceeds 32 bits")));
        }
        if instances.shape().len() != 2 || instances.rows() == 0 {
            return Err(Error::EmptyBag);
        }
        if !instances.is_finite() {
            return Err(Error::NonFinite {
                what: format!("bag {id} instances"),
            });
        }
        if let Some(tags) = &instance_labels {
            if tags.len() != instances.rows() {
                return Err(Error::shape(
                    "Bag::new",
                    format!("{} tags for {} instances", tags.len(), instances.rows()),
                ));
            }
            if tags.iter().any(|&t| t > 1) {
                return Err(Error::Config(format!("bag {id}: instance tags must be 0/1")));
            }
            let any_pos = tags.contains(&1);
            let consistent = match label {
                0 => !any_pos,
                1 => any_pos,
                _ => true,
            };
            if !consistent {
                return Err(Error::Config(format!(
                    "bag {id}: label {label} contradicts its instance tags"
                )));
            }
        }
        Ok(Self {
            id,
            label,
            instances,
            instance_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.instances.cols()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.instances.row(j)
    }

    pub fn provenance(&self, j: usize) -> ProvenanceId {
        ProvenanceId::new(self.id, j)
    }

    /// Fraction of positively tagged instances, if tags are present.
    pub fn tumor_ratio(&self) -> Option<f64> {
        self.instance_labels
            .as_ref()
            .map(|t| t.iter().filter(|&&v| v == 1).count() as f64 / t.len() as f64)
    }
}
