//! Set partitions of `[k]` and the moment-to-cumulant transform.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for Compensated {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut c = Compensated::default();
        for v in iter {
            c.add(v);
        }
        c
    }
}

/// All set partitions of `{0, .., k-1}`, each block stored as a bitmask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    k: usize,
    partitions: Vec<Vec<u32>>,
}

pub const MAX_ORDER: usize = 8;

impl PartitionPlan {
    pub fn new(k: usize) -> Self {
        assert!(k <= MAX_ORDER, "partition plan order {k} too large");
        let mut partitions = Vec::new();
        // Restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[..i]).
        let mut a = vec![0usize; k];
        loop {
            let blocks = a.iter().copied().max().map_or(0, |m| m + 1);
            let mut masks = vec![0u32; blocks];
            for (i, &b) in a.iter().enumerate() {
                masks[b] |= 1 << i;
            }
            partitions.push(masks);
            let mut i = k;
            loop {
                if i <= 1 {
                    return Self { k, partitions };
                }
                i -= 1;
                let bound = a[..i].iter().copied().max().unwrap_or(0) + 1;
                if a[i] < bound {
                    a[i] += 1;
                    for v in &mut a[i + 1..] {
                        *v = 0;
                    }
                    break;
                }
            }
        }
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn partitions(&self) -> &[Vec<u32>] {
        &self.partitions
    }

    /// `Σ_Q Π_{C ∈ Q} s[C]` with `s` indexed by block bitmask.
    pub fn evaluate(&self, s: &[f64]) -> f64 {
        debug_assert_eq!(s.len(), 1 << self.k);
        self.partitions
            .iter()
            .map(|q| q.iter().map(|&c| s[c as usize]).product::<f64>())
            .collect::<Compensated>()
            .value()
    }
}

/// Cumulants `κ_1..=κ_k` of the moment sequence `m_0 = 1, m_1, .., m_k`,
/// written to `out[1..=k]` (`out[0]` is set to zero).
pub fn moments_to_cumulants(m: &[f64], out: &mut [f64]) {
    let k = m.len() - 1;
    out[0] = 0.0;
    for n in 1..=k {
        let mut v = m[n];
        let mut binom = 1.0;
        for j in 1..n {
            v -= binom * out[j] * m[n - j];
            binom = binom * (n - j) as f64 / j as f64;
        }
        out[n] = v;
    }
}
