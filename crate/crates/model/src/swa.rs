//! Stochastic weight averaging and class-balanced loss weights.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Epochs (1-based) at which weight snapshots are taken.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotPlan {
    pub epochs: Vec<usize>,
    pub warning: Option<String>,
}

/// Snapshots at `start, start + frequency, ...` up to `total_epochs`, at
/// most `max_snapshots` of them.
pub fn swa_snapshot_epochs(
    total_epochs: usize,
    start_epoch: usize,
    frequency: usize,
    max_snapshots: usize,
) -> Result<SnapshotPlan> {
    if frequency == 0 {
        return Err(ModelError::InvalidInput("SWA frequency must be >= 1".into()));
    }
    if start_epoch == 0 {
        return Err(ModelError::InvalidInput("SWA start epoch is 1-based".into()));
    }
    if start_epoch > total_epochs {
        return Ok(SnapshotPlan {
            epochs: Vec::new(),
            warning: Some(format!(
                "SWA start epoch {start_epoch} is beyond the {total_epochs} training epochs; no snapshots taken"
            )),
        });
    }
    let epochs = (start_epoch..=total_epochs)
        .step_by(frequency)
        .take(max_snapshots)
        .collect();
    Ok(SnapshotPlan {
        epochs,
        warning: None,
    })
}

/// Element-wise arithmetic mean of flat parameter snapshots. Each
/// coordinate is summed in sorted order, so the result does not depend on
/// snapshot order.
pub fn swa_average(snapshots: &[Vec<f32>]) -> Result<Vec<f32>> {
    let first = snapshots
        .first()
        .ok_or_else(|| ModelError::InvalidInput("SWA needs at least one snapshot".into()))?;
    if let Some(bad) = snapshots.iter().find(|s| s.len() != first.len()) {
        return Err(ModelError::Shape(format!(
            "snapshot has {} parameters, expected {}",
            bad.len(),
            first.len()
        )));
    }
    let k = snapshots.len() as f64;
    let mut column = vec![0.0f32; snapshots.len()];
    Ok((0..first.len())
        .map(|i| {
            for (c, s) in column.iter_mut().zip(snapshots) {
                *c = s[i];
            }
            column.sort_by(f32::total_cmp);
            (column.iter().map(|&v| v as f64).sum::<f64>() / k) as f32
        })
        .collect())
}

/// Weight per class proportional to `1 / max(count, 1)`, normalized to
/// mean 1.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        *counts.get_mut(l).ok_or_else(|| {
            ModelError::InvalidInput(format!("label {l} outside {num_classes} classes"))
        })? += 1;
    }
    let raw: Vec<f64> = counts.iter().map(|&c| 1.0 / c.max(1) as f64).collect();
    let mean = raw.iter().sum::<f64>() / num_classes as f64;
    Ok(raw.iter().map(|w| w / mean).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cifar_schedule_takes_two_snapshots() {
        let plan = swa_snapshot_epochs(150, 100, 50, usize::MAX).unwrap();
        assert_eq!(plan.epochs, vec![100, 150]);
        assert!(plan.warning.is_none());
    }

    #[test]
    fn long_frequency_takes_one_snapshot() {
        assert_eq!(swa_snapshot_epochs(150, 120, 50, 10).unwrap().epochs, vec![120]);
    }

    #[test]
    fn late_start_warns() {
        let plan = swa_snapshot_epochs(150, 200, 50, 10).unwrap();
        assert!(plan.epochs.is_empty());
        assert!(plan.warning.is_some());
    }

    #[test]
    fn snapshot_cap_applies() {
        assert_eq!(swa_snapshot_epochs(10, 1, 1, 3).unwrap().epochs, vec![1, 2, 3]);
        assert!(swa_snapshot_epochs(10, 1, 0, 3).is_err());
    }

    #[test]
    fn averaging_examples() {
        assert_eq!(swa_average(&[vec![1.5, -2.0]]).unwrap(), vec![1.5, -2.0]);
        assert_eq!(swa_average(&[vec![0.0], vec![2.0]]).unwrap(), vec![1.0]);
        assert!(swa_average(&[vec![0.0], vec![2.0, 1.0]]).is_err());
        assert!(swa_average(&[]).is_err());
    }

    #[test]
    fn weights_for_ninety_ten() {
        let labels: Vec<usize> = std::iter::repeat(0).take(90).chain(std::iter::repeat(1).take(10)).collect();
        let w = class_weights(&labels, 2).unwrap();
        assert!((w[0] - 0.2).abs() < 1e-9);
        assert!((w[1] - 1.8).abs() < 1e-9);
    }

    #[test]
    fn balanced_and_absent_classes() {
        assert_eq!(class_weights(&[0, 1, 2, 0, 1, 2], 3).unwrap(), vec![1.0; 3]);
        let w = class_weights(&[0, 0, 0], 2).unwrap();
        assert!(w.iter().all(|x| x.is_finite()));
        assert!(w[1] > w[0]);
        assert!(class_weights(&[3], 2).is_err());
    }

    proptest! {
        #[test]
        fn average_is_order_invariant_and_idempotent(
            snaps in prop::collection::vec(prop::collection::vec(-10.0f32..10.0, 6), 1..6),
            rot in 0usize..6,
        ) {
            let avg = swa_average(&snaps).unwrap();
            let mut rotated = snaps.clone();
            let r = rot % rotated.len();
            rotated.rotate_left(r);
            prop_assert_eq!(&avg, &swa_average(&rotated).unwrap());
            let same = vec![snaps[0].clone(); snaps.len()];
            prop_assert_eq!(swa_average(&same).unwrap(), snaps[0].clone());
            for (i, a) in avg.iter().enumerate() {
                let mean = snaps.iter().map(|s| s[i] as f64).sum::<f64>() / snaps.len() as f64;
                prop_assert!((*a as f64 - mean).abs() < 1e-6);
            }
        }
    }
}
