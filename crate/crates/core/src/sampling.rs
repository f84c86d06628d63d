//! Deterministic low-discrepancy sampling for the structural probes.

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Halton sequence in up to 16 dimensions, starting at index 1.
#[derive(Debug, Clone)]
pub struct Halton {
    dim: usize,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1 && dim <= PRIMES.len(), "Halton dimension {dim} unsupported");
        Self { dim, index: 0 }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1;
        PRIMES[..self.dim].iter().map(|&b| radical_inverse(self.index, b)).collect()
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn van_der_corput_prefix() {
        let mut h = Halton::new(1);
        let xs: Vec<f64> = (0..4).map(|_| h.next_point()[0]).collect();
        assert_eq!(xs, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn points_in_unit_cube() {
        let mut h = Halton::new(6);
        for _ in 0..1000 {
            assert!(h.next_point().iter().all(|&v| (0.0..1.0).contains(&v)));
        }
    }
}
