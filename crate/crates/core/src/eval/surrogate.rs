use std::sync::Arc;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EvalError, Evaluator};
use crate::arch::{ArchitectureSpec, PruneCoding, SubnetPartition};
use crate::exec::Exec;

/// Coefficients of the analytic error model
/// `base + A (1 - r)^2 + B (1 - r) + J (h / 2^64 - 1/2)`, where `r` is the
/// retained fraction of the sub-network's parameters and `h` a hash of the
/// coding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct SurrogateParams {
    /// Per sub-network; a single value applies to all of them.
    pub base_error: Vec<f64>,
    pub amplitude: f64,
    pub linear: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            base_error: vec![0.30],
            amplitude: 0.5,
            linear: 0.05,
            jitter: 0.01,
            seed: 0,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self, subnets: usize) -> Result<(), String> {
        if self.base_error.is_empty() {
            return Err("base_error must not be empty".into());
        }
        if self.base_error.len() != 1 && self.base_error.len() != subnets {
            return Err(format!(
                "base_error has {} entries for {subnets} sub-networks",
                self.base_error.len()
            ));
        }
        if let Some(b) = self.base_error.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(format!("base_error {b} outside (0, 1)"));
        }
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("linear", self.linear),
            ("jitter", self.jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be a finite non-negative number"));
            }
        }
        Ok(())
    }

    pub fn base_for(&self, subnet: usize) -> f64 {
        if self.base_error.len() == 1 {
            self.base_error[0]
        } else {
            self.base_error[subnet]
        }
    }

    /// The error model evaluated at a given retained-parameter ratio and hash.
    pub fn error_at(&self, subnet: usize, ratio: f64, hash: u64) -> f64 {
        let gap = 1.0 - ratio;
        let unit = hash as f64 / 18_446_744_073_709_551_616.0;
        self.base_for(subnet) + self.amplitude * gap * gap + self.linear * gap + self.jitter * (unit - 0.5)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a (64-bit) over `seed` (u64 LE), `subnet` (u32 LE) and every gene
/// (u32 LE), in that order.
pub fn fnv1a_jitter_hash(seed: u64, subnet: usize, genes: &[u32]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    feed(&seed.to_le_bytes());
    feed(&(subnet as u32).to_le_bytes());
    for g in genes {
        feed(&g.to_le_bytes());
    }
    h
}

/// Deterministic offline stand-in for a trained sub-network's error.
#[derive(Clone, Debug)]
pub struct SurrogateEvaluator {
    arch: Arc<ArchitectureSpec>,
    partition: Arc<SubnetPartition>,
    params: SurrogateParams,
    baseline_params: Vec<u64>,
    fingerprint: String,
    exec: Exec,
}

impl SurrogateEvaluator {
    pub fn new(
        arch: Arc<ArchitectureSpec>,
        partition: Arc<SubnetPartition>,
        params: SurrogateParams,
    ) -> Result<Self, EvalError> {
        params.validate(partition.len()).map_err(EvalError::InvalidCoding)?;
        let baseline_params = (0..partition.len())
            .map(|i| {
                arch.subnet_cost(&partition, i, None)
                    .map(|c| c.params)
                    .map_err(|e| EvalError::InvalidCoding(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&*arch).expect("architecture serializes"));
        hasher.update(serde_json::to_vec(&*partition).expect("partition serializes"));
        hasher.update(serde_json::to_vec(&params).expect("params serialize"));
        let fingerprint = format!("surrogate:{}", hex::encode(hasher.finalize()));
        Ok(Self {
            arch,
            partition,
            params,
            baseline_params,
            fingerprint,
            exec: Exec::default(),
        })
    }

    /// Execution mode for batch evaluation.
    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn params(&self) -> &SurrogateParams {
        &self.params
    }

    /// Retained fraction of sub-network parameters under `genes`.
    pub fn ratio(&self, subnet: usize, genes: &[u32]) -> Result<f64, EvalError> {
        let cost = self
            .arch
            .subnet_cost(&self.partition, subnet, Some(genes))
            .map_err(|e| EvalError::InvalidCoding(e.to_string()))?;
        Ok(cost.params as f64 / self.baseline_params[subnet] as f64)
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, subnet: usize, genes: &[u32]) -> Result<f64, EvalError> {
        let coding = PruneCoding::new(subnet, genes.to_vec());
        let report = self.arch.validate_coding(&self.partition, &coding);
        if !report.is_valid() {
            return Err(EvalError::InvalidCoding(report.to_string()));
        }
        let r = self.ratio(subnet, genes)?;
        let h = fnv1a_jitter_hash(self.params.seed, subnet, genes);
        Ok(self.params.error_at(subnet, r, h))
    }

    fn evaluate_batch(&self, subnet: usize, batch: &[Vec<u32>]) -> Vec<Result<f64, EvalError>> {
        self.exec.map(batch, |g| self.evaluate(subnet, g))
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_preset, partition_by_resolution};

    fn resnet56(params: SurrogateParams) -> SurrogateEvaluator {
        let arch = Arc::new(build_preset("resnet56", 10, 32).unwrap());
        let part = Arc::new(partition_by_resolution(&arch));
        SurrogateEvaluator::new(arch, part, params).unwrap()
    }

    fn arb_coding() -> impl proptest::strategy::Strategy<Value = (usize, Vec<u32>)> {
        use proptest::prelude::*;
        (0usize..3).prop_flat_map(|s| {
            let width = 16u32 << s;
            (Just(s), proptest::collection::vec(1..=width, 9))
        })
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(128))]

        #[test]
        fn error_is_a_pure_function_of_the_coding((s, genes) in arb_coding(), jitter in 0.0f64..0.05, seed in 0u64..8) {
            let params = SurrogateParams { jitter, seed, ..Default::default() };
            let a = resnet56(params.clone()).evaluate(s, &genes).unwrap();
            let b = resnet56(params).evaluate(s, &genes).unwrap();
            proptest::prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        #[test]
        fn without_jitter_more_channels_never_hurt((s, genes) in arb_coding(), pick in 0usize..9) {
            let eval = resnet56(SurrogateParams { jitter: 0.0, ..Default::default() });
            let width = 16u32 << s;
            proptest::prop_assume!(genes[pick] < width);
            let mut up = genes.clone();
            up[pick] += 1;
            proptest::prop_assert!(eval.evaluate(s, &up).unwrap() <= eval.evaluate(s, &genes).unwrap());
        }
    }

    #[test]
    fn fnv1a_reference_values() {
        // FNV-1a 64 of the empty input is the offset basis; of "a" is the published vector.
        let mut h = FNV_OFFSET;
        h ^= u64::from(b'a');
        h = h.wrapping_mul(FNV_PRIME);
        assert_eq!(h, 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a_jitter_hash(0, 0, &[]), fnv1a_jitter_hash(0, 0, &[]));
        assert_ne!(fnv1a_jitter_hash(0, 0, &[1]), fnv1a_jitter_hash(0, 0, &[2]));
        assert_ne!(fnv1a_jitter_hash(0, 0, &[1]), fnv1a_jitter_hash(1, 0, &[1]));
    }

    #[test]
    fn baseline_error_is_base_plus_jitter() {
        let eval = resnet56(SurrogateParams::default());
        let e = eval.evaluate(0, &[16; 9]).unwrap();
        assert!((e - 0.30).abs() <= 0.01 / 2.0, "{e}");
    }

    #[test]
    fn smaller_ratio_means_larger_error_without_jitter() {
        let eval = resnet56(SurrogateParams {
            jitter: 0.0,
            ..Default::default()
        });
        let small = eval.evaluate(0, &[4; 9]).unwrap();
        let big = eval.evaluate(0, &[12; 9]).unwrap();
        assert!(eval.ratio(0, &[4; 9]).unwrap() < eval.ratio(0, &[12; 9]).unwrap());
        assert!(small > big);
    }

    #[test]
    fn half_ratio_with_defaults() {
        let p = SurrogateParams::default();
        // Hand evaluation: 0.30 + 0.5 * 0.25 + 0.05 * 0.5 = 0.45
        for h in [0, u64::MAX / 3, u64::MAX] {
            let e = p.error_at(0, 0.5, h);
            assert!((e - 0.45).abs() <= 0.005 + 1e-12, "{e}");
        }
        assert!((p.error_at(0, 0.5, 1 << 63) - 0.45).abs() < 1e-12);
    }

    #[test]
    fn invalid_coding_is_rejected() {
        let eval = resnet56(SurrogateParams::default());
        assert!(matches!(eval.evaluate(0, &[17; 9]), Err(EvalError::InvalidCoding(_))));
        assert!(eval.evaluate(0, &[16; 8]).is_err());
    }

    #[test]
    fn params_validation() {
        let bad = SurrogateParams {
            amplitude: -1.0,
            ..Default::default()
        };
        assert!(bad.validate(3).is_err());
        let bad = SurrogateParams {
            base_error: vec![0.3, 0.3],
            ..Default::default()
        };
        assert!(bad.validate(3).is_err());
        let bad = SurrogateParams {
            base_error: vec![1.0],
            ..Default::default()
        };
        assert!(bad.validate(3).is_err());
    }

    #[test]
    fn fingerprint_tracks_params() {
        let a = resnet56(SurrogateParams::default());
        let b = resnet56(SurrogateParams {
            seed: 1,
            ..Default::default()
        });
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), resnet56(SurrogateParams::default()).fingerprint());
    }
}
