use super::modarith::ntt_primes;
use super::CkksError;

pub const SUPPORTED_DEGREES: [usize; 5] = [2048, 4096, 8192, 16384, 32768];
pub const SPECIAL_PRIME_BITS: u32 = 61;

/// Ring degree, modulus chain bit sizes and scaling factor.
///
/// `scale_bits` is `log2(Δ)`; only power-of-two scales are supported.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeParams {
    pub degree: usize,
    pub chain_bits: Vec<u32>,
    pub scale_bits: u32,
}

impl HeParams {
    pub fn new(degree: usize, chain_bits: &[u32], scale_bits: u32) -> Result<Self, CkksError> {
        let p = Self { degree, chain_bits: chain_bits.to_vec(), scale_bits };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CkksError> {
        if !SUPPORTED_DEGREES.contains(&self.degree) {
            return Err(CkksError::Params(format!(
                "ring degree {} is not one of {:?}",
                self.degree, SUPPORTED_DEGREES
            )));
        }
        if self.chain_bits.is_empty() {
            return Err(CkksError::Params("empty modulus chain".into()));
        }
        for &b in &self.chain_bits {
            if !(14..=60).contains(&b) {
                return Err(CkksError::Params(format!("chain prime size {b} outside [14, 60] bits")));
            }
        }
        if self.scale_bits < 1 || self.scale_bits > 60 {
            return Err(CkksError::Params(format!("scale 2^{} out of range", self.scale_bits)));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        (self.scale_bits as f64).exp2()
    }

    pub fn slots(&self) -> usize {
        self.degree / 2
    }

    /// Below the 4096 ring degree no common security estimate reaches 128 bits.
    pub fn is_weak(&self) -> bool {
        self.degree < 4096
    }

    pub fn total_bits(&self) -> u32 {
        self.chain_bits.iter().sum()
    }

    /// Picks distinct NTT-friendly primes, largest first within each bit size.
    pub fn select_primes(&self) -> Result<(Vec<u64>, u64), CkksError> {
        let mut chosen: Vec<u64> = Vec::with_capacity(self.chain_bits.len());
        for &b in &self.chain_bits {
            let p = ntt_primes(b, self.degree, 1, &chosen);
            match p.first() {
                Some(&q) => chosen.push(q),
                None => {
                    return Err(CkksError::Params(format!(
                        "not enough {b}-bit primes congruent to 1 mod {}",
                        2 * self.degree
                    )))
                }
            }
        }
        let special = ntt_primes(SPECIAL_PRIME_BITS, self.degree, 1, &chosen)
            .first()
            .copied()
            .ok_or_else(|| CkksError::Params("no special prime".into()))?;
        Ok((chosen, special))
    }

    /// Compact textual form, e.g. `8192:60,40,40,60:40`.
    pub fn to_spec_string(&self) -> String {
        let chain: Vec<String> = self.chain_bits.iter().map(|b| b.to_string()).collect();
        format!("{}:{}:{}", self.degree, chain.join(","), self.scale_bits)
    }

    pub fn parse(s: &str) -> Result<Self, CkksError> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 3 {
            return Err(CkksError::Params(format!("expected N:bits,bits,...:log_scale, got {s:?}")));
        }
        let bad = |what: &str| CkksError::Params(format!("bad {what} in {s:?}"));
        let degree = parts[0].trim().parse().map_err(|_| bad("degree"))?;
        let chain = parts[1]
            .split(',')
            .map(|b| b.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("chain"))?;
        let scale_bits = parts[2].trim().parse().map_err(|_| bad("scale"))?;
        Self::new(degree, &chain, scale_bits)
    }

    /// The five parameter sets benchmarked for the split protocol.
    pub fn reference_sets() -> Vec<HeParams> {
        vec![
            HeParams::new(8192, &[60, 40, 40, 60], 40).unwrap(),
            HeParams::new(8192, &[40, 21, 21, 40], 21).unwrap(),
            HeParams::new(4096, &[40, 20, 20], 21).unwrap(),
            HeParams::new(4096, &[40, 20, 40], 20).unwrap(),
            HeParams::new(2048, &[18, 18, 18], 16).unwrap(),
        ]
    }
}

impl std::fmt::Display for HeParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "N={} chain={:?} scale=2^{}", self.degree, self.chain_bits, self.scale_bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(HeParams::new(4097, &[40, 20, 20], 21), Err(CkksError::Params(_))));
        assert!(HeParams::new(1024, &[30], 20).is_err());
        assert!(HeParams::new(4096, &[], 20).is_err());
        assert!(HeParams::new(4096, &[61], 20).is_err());
    }

    #[test]
    fn primes_are_distinct_and_sized() {
        for p in HeParams::reference_sets() {
            let (chain, special) = p.select_primes().unwrap();
            for (q, &b) in chain.iter().zip(&p.chain_bits) {
                assert_eq!(64 - q.leading_zeros(), b);
                assert_eq!(q % (2 * p.degree as u64), 1);
            }
            let mut all = chain.clone();
            all.push(special);
            all.sort();
            all.dedup();
            assert_eq!(all.len(), chain.len() + 1);
        }
    }

    #[test]
    fn spec_string_roundtrip() {
        let p = HeParams::new(8192, &[60, 40, 40, 60], 40).unwrap();
        assert_eq!(p.to_spec_string(), "8192:60,40,40,60:40");
        assert_eq!(HeParams::parse("8192:60,40,40,60:40").unwrap(), p);
        assert!(HeParams::parse("8192:60,x:40").is_err());
        assert!(HeParams::reference_sets()[4].is_weak());
    }
}
