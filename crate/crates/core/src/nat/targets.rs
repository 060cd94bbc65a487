use rand_distr::{Distribution, StandardNormal};

use super::hungarian::hungarian;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{rng_for, stream};

/// Fixed random unit-norm targets and the sample→target bijection.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    targets: DenseMatrix,
    assignment: Vec<usize>,
}

/// `n` targets drawn uniformly on the unit sphere in `d` dimensions
/// (normalized Gaussians); assignment starts as the identity.
pub fn init_targets(n: usize, d: usize, seed: u64) -> Result<TargetSet> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput(format!("targets need n, d >= 1, got n={n}, d={d}")));
    }
    let mut rng = rng_for(seed, stream::TARGETS);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let mut row: Vec<f64>;
        loop {
            row = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = row.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
        data.extend(row);
    }
    Ok(TargetSet {
        targets: DenseMatrix::from_vec(n, d, data)?,
        assignment: (0..n).collect(),
    })
}

impl TargetSet {
    pub fn targets(&self) -> &DenseMatrix {
        &self.targets
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Rows of the targets currently owned by `samples`, in that order.
    pub fn assigned_targets(&self, samples: &[usize]) -> DenseMatrix {
        let idx: Vec<usize> = samples.iter().map(|&s| self.assignment[s]).collect();
        self.targets.select_rows(&idx)
    }

    /// Re-deals the targets owned by `samples` among those samples so the
    /// squared distance to `reprs` (one row per sample) is minimal.
    pub fn reassign_batch(&mut self, samples: &[usize], reprs: &DenseMatrix) -> Result<()> {
        let owned = self.assigned_targets(samples);
        let perm = nat_assign_batch(reprs, &owned)?;
        let old: Vec<usize> = samples.iter().map(|&s| self.assignment[s]).collect();
        for (pos, &s) in samples.iter().enumerate() {
            self.assignment[s] = old[perm[pos]];
        }
        Ok(())
    }
}

/// Within-batch assignment minimizing `Σ ‖reprs_i − targets_{a(i)}‖²`.
pub fn nat_assign_batch(reprs: &DenseMatrix, batch_targets: &DenseMatrix) -> Result<Vec<usize>> {
    if reprs.shape() != batch_targets.shape() {
        return Err(Error::dim(
            "nat_assign_batch",
            format!("{:?}", reprs.shape()),
            format!("{:?}", batch_targets.shape()),
        ));
    }
    let b = reprs.rows();
    let mut cost = DenseMatrix::zeros(b, b);
    for i in 0..b {
        let r = reprs.row(i);
        for j in 0..b {
            let t = batch_targets.row(j);
            cost.set(i, j, r.iter().zip(t).map(|(x, y)| (x - y) * (x - y)).sum());
        }
    }
    Ok(hungarian(&cost)?.cols)
}

/// `(1/2n)·‖reprs − targets‖²_F`.
pub fn nat_loss(reprs: &DenseMatrix, assigned_targets: &DenseMatrix) -> Result<f64> {
    if reprs.shape() != assigned_targets.shape() {
        return Err(Error::dim(
            "nat_loss",
            format!("{:?}", reprs.shape()),
            format!("{:?}", assigned_targets.shape()),
        ));
    }
    if reprs.rows() == 0 {
        return Err(Error::InvalidInput("nat_loss over zero rows".into()));
    }
    Ok(reprs.sub(assigned_targets)?.frobenius_sq() / (2.0 * reprs.rows() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rows_and_determinism() {
        let t = init_targets(1, 3, 4).unwrap();
        let norm: f64 = t.targets().row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-15);
        assert_eq!(init_targets(50, 4, 9).unwrap(), init_targets(50, 4, 9).unwrap());
        assert_ne!(init_targets(50, 4, 9).unwrap(), init_targets(50, 4, 10).unwrap());
        assert_eq!(init_targets(5, 2, 1).unwrap().assignment(), &[0, 1, 2, 3, 4]);
        assert!(init_targets(0, 3, 1).is_err());
        assert!(init_targets(3, 0, 1).is_err());
    }

    #[test]
    fn sphere_coordinates_center_on_zero() {
        let t = init_targets(1000, 8, 21).unwrap();
        for m in t.targets().col_means() {
            assert!(m.abs() < 0.1, "{m}");
        }
    }

    #[test]
    fn assign_identity_and_swap() {
        let t = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(nat_assign_batch(&t, &t).unwrap(), vec![0, 1, 2]);
        let swapped = DenseMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let reprs = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(nat_assign_batch(&reprs, &swapped).unwrap(), vec![1, 0]);
        assert!(nat_assign_batch(&reprs, &t).is_err());
    }

    #[test]
    fn loss_examples() {
        let t = DenseMatrix::from_rows(&[[0.5, 0.5]]).unwrap();
        assert_eq!(nat_loss(&t, &t).unwrap(), 0.0);
        let r = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(nat_loss(&r, &DenseMatrix::zeros(1, 2)).unwrap(), 12.5);
        let r = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(nat_loss(&r, &DenseMatrix::zeros(2, 2)).unwrap(), 0.5);
        assert!(nat_loss(&r, &DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn reassign_keeps_bijection() {
        let mut ts = init_targets(6, 2, 3).unwrap();
        let reprs = DenseMatrix::from_rows(&[[1.0, 1.0], [-1.0, 0.5], [0.0, -1.0]]).unwrap();
        ts.reassign_batch(&[4, 1, 2], &reprs).unwrap();
        let mut seen = ts.assignment().to_vec();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
        assert_eq!(ts.assignment()[0], 0);
        assert_eq!(ts.assignment()[3], 3);
        assert_eq!(ts.assignment()[5], 5);
    }
}
