use std::fmt;

use serde::{Deserialize, Serialize};

use super::FORMAT_VERSION;

/// Retained output-channel counts, one per prunable position of a sub-network,
/// in block order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "CodingDoc", into = "CodingDoc")]
pub struct PruneCoding {
    pub subnet_index: usize,
    pub genes: Vec<u32>,
}

impl PruneCoding {
    pub fn new(subnet_index: usize, genes: Vec<u32>) -> Self {
        Self { subnet_index, genes }
    }
}

#[derive(Serialize, Deserialize)]
struct CodingDoc {
    format_version: u32,
    subnet: usize,
    genes: Vec<u32>,
}

impl TryFrom<CodingDoc> for PruneCoding {
    type Error = String;

    fn try_from(doc: CodingDoc) -> Result<Self, String> {
        if doc.format_version != FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", doc.format_version));
        }
        Ok(PruneCoding::new(doc.subnet, doc.genes))
    }
}

impl From<PruneCoding> for CodingDoc {
    fn from(c: PruneCoding) -> Self {
        CodingDoc {
            format_version: FORMAT_VERSION,
            subnet: c.subnet_index,
            genes: c.genes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    BelowMinimum { gene: u32 },
    ExceedsOriginal { gene: u32, original: u32 },
    LengthMismatch { expected: usize, found: usize },
    UnknownSubnet { count: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// Gene index, or `None` for whole-coding problems.
    pub position: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.position {
            write!(f, "position {p}: ")?;
        }
        match &self.kind {
            ViolationKind::BelowMinimum { gene } => write!(f, "gene {gene} below minimum 1"),
            ViolationKind::ExceedsOriginal { gene, original } => {
                write!(f, "gene {gene} exceeds original {original}")
            }
            ViolationKind::LengthMismatch { expected, found } => {
                write!(f, "expected {expected} genes, found {found}")
            }
            ViolationKind::UnknownSubnet { count } => {
                write!(f, "sub-network index out of range (M = {count})")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn check(genes: &[u32], bounds: &[u32]) -> Self {
        if genes.len() != bounds.len() {
            return ValidityReport {
                violations: vec![Violation {
                    position: None,
                    kind: ViolationKind::LengthMismatch {
                        expected: bounds.len(),
                        found: genes.len(),
                    },
                }],
            };
        }
        let violations = genes
            .iter()
            .zip(bounds)
            .enumerate()
            .filter_map(|(position, (&gene, &original))| {
                let kind = if gene < 1 {
                    ViolationKind::BelowMinimum { gene }
                } else if gene > original {
                    ViolationKind::ExceedsOriginal { gene, original }
                } else {
                    return None;
                };
                Some(Violation {
                    position: Some(position),
                    kind,
                })
            })
            .collect();
        ValidityReport { violations }
    }

    pub(crate) fn subnet_missing(_index: usize, count: usize) -> Self {
        ValidityReport {
            violations: vec![Violation {
                position: None,
                kind: ViolationKind::UnknownSubnet { count },
            }],
        }
    }
}

impl fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gene_is_below_minimum() {
        let r = ValidityReport::check(&[0], &[16]);
        assert!(!r.is_valid());
        assert!(r.to_string().contains("below minimum 1"), "{r}");
        assert_eq!(r.violations[0].position, Some(0));
    }

    #[test]
    fn oversized_gene_exceeds_original() {
        let r = ValidityReport::check(&[16, 17], &[16, 16]);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].position, Some(1));
        assert!(r.to_string().contains("exceeds original"), "{r}");
    }

    #[test]
    fn length_mismatch_reported() {
        let r = ValidityReport::check(&[4], &[4, 4]);
        assert!(matches!(
            r.violations[0].kind,
            ViolationKind::LengthMismatch { expected: 2, found: 1 }
        ));
    }

    #[test]
    fn baseline_is_valid() {
        assert!(ValidityReport::check(&[16, 32], &[16, 32]).is_valid());
    }

    #[test]
    fn coding_json_shape() {
        let c = PruneCoding::new(2, vec![3, 4]);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"format_version":1,"subnet":2,"genes":[3,4]}"#);
        assert_eq!(serde_json::from_str::<PruneCoding>(&json).unwrap(), c);
    }
}
