use serde::{Deserialize, Serialize};

use crate::bagdata::{Bag, ProvenanceId};
use crate::numkernel::{Tape, Tensor, Var};

/// Where a pseudo-bag instance came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Lineage {
    Original {
        provenance: ProvenanceId,
    },
    /// Original row fused with the unmasked view instances at its position.
    Fused {
        original: ProvenanceId,
        views: Vec<ProvenanceId>,
    },
    /// Same-class instance appended by expansion.
    Expanded {
        provenance: ProvenanceId,
    },
    /// Attention-compressed fold, padded members included.
    Compressed {
        members: Vec<Lineage>,
    },
}

impl Lineage {
    /// Every provenance id this instance depends on, depth-first.
    pub fn provenance(&self) -> Vec<ProvenanceId> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<ProvenanceId>) {
        match self {
            Lineage::Original { provenance } | Lineage::Expanded { provenance } => out.push(*provenance),
            Lineage::Fused { original, views } => {
                out.push(*original);
                out.extend_from_slice(views);
            }
            Lineage::Compressed { members } => members.iter().for_each(|m| m.collect(out)),
        }
    }
}

/// An augmented bag with per-instance lineage.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoBag {
    pub source_id: u64,
    pub label: u8,
    /// `n' × d`
    pub instances: Tensor,
    pub lineage: Vec<Lineage>,
}

impl PseudoBag {
    /// The bag itself, unaugmented.
    pub fn identity(bag: &Bag) -> Self {
        Self {
            source_id: bag.id,
            label: bag.label,
            instances: bag.instances.clone(),
            lineage: (0..bag.len())
                .map(|j| Lineage::Original {
                    provenance: bag.provenance(j),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn provenance(&self) -> impl Iterator<Item = ProvenanceId> + '_ {
        self.lineage.iter().flat_map(Lineage::provenance)
    }
}

/// A pseudo-bag whose instances live on a tape.
#[derive(Clone, Debug)]
pub struct TracedBag {
    pub source_id: u64,
    pub label: u8,
    pub instances: Var,
    pub lineage: Vec<Lineage>,
}

impl TracedBag {
    pub fn from_bag(tape: &mut Tape, bag: &Bag) -> Self {
        let p = PseudoBag::identity(bag);
        Self {
            source_id: p.source_id,
            label: p.label,
            instances: tape.constant(p.instances),
            lineage: p.lineage,
        }
    }

    pub fn len(&self) -> usize {
        self.lineage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lineage.is_empty()
    }

    pub fn materialize(&self, tape: &Tape) -> PseudoBag {
        PseudoBag {
            source_id: self.source_id,
            label: self.label,
            instances: tape.value(self.instances).clone(),
            lineage: self.lineage.clone(),
        }
    }
}
