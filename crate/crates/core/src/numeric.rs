//! Compensated summation.

/// Element-wise running sums with TwoSum error terms. Terms that cancel
/// exactly in real arithmetic (for example identical per-atom contributions
/// entering the complex with `+` and the protein and ligand with `-`) cancel
/// to within the rounding of the final result.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatedVec {
    sum: Vec<f64>,
    err: Vec<f64>,
}

impl CompensatedVec {
    pub fn zeros(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    #[inline]
    pub fn add(&mut self, i: usize, v: f64) {
        let s = self.sum[i];
        let t = s + v;
        let z = t - s;
        self.err[i] += (s - (t - z)) + (v - z);
        self.sum[i] = t;
    }

    pub fn add_slice(&mut self, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.add(i, v);
        }
    }

    pub fn finish(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.err).map(|(s, e)| s + e).collect()
    }
}
