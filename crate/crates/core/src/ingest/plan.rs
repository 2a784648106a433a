use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A strictly increasing selection of frame indices out of `total_frames`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePlan {
    total_frames: usize,
    indices: Vec<usize>,
}

impl FramePlan {
    /// `K` uniformly spaced indices over `T` frames, pinning the first and
    /// last frame when `K >= 2`: `index_k = ⌊k·(T−1)/(K−1)⌋`.
    pub fn uniform(total_frames: usize, sample_count: usize) -> Result<Self> {
        if total_frames == 0 || sample_count == 0 {
            return Err(Error::InvalidPlan(format!(
                "need T >= 1 and K >= 1, got T={total_frames}, K={sample_count}"
            )));
        }
        if sample_count > total_frames {
            return Err(Error::InvalidPlan(format!(
                "cannot sample {sample_count} distinct frames from {total_frames}"
            )));
        }
        let indices = if sample_count == 1 {
            vec![(total_frames - 1) / 2]
        } else {
            (0..sample_count)
                .map(|k| k * (total_frames - 1) / (sample_count - 1))
                .collect()
        };
        Ok(FramePlan {
            total_frames,
            indices,
        })
    }

    /// A plan with explicit indices, validated against the plan invariants.
    pub fn from_indices(total_frames: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidPlan("plan selects no frames".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= total_frames) {
            return Err(Error::InvalidPlan(format!("index {bad} outside [0, {total_frames})")));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPlan("indices must be strictly increasing".into()));
        }
        Ok(FramePlan {
            total_frames,
            indices,
        })
    }

    /// Every frame, in order.
    pub fn all(total_frames: usize) -> Result<Self> {
        Self::from_indices(total_frames, (0..total_frames).collect())
    }

    pub fn total_frames(&self) -> usize {
        self.total_frames
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The same plan shifted into a sub-range starting at `offset` of a
    /// longer asset with `asset_frames` frames.
    pub fn offset(&self, offset: usize, asset_frames: usize) -> Result<Self> {
        Self::from_indices(asset_frames, self.indices.iter().map(|i| i + offset).collect())
    }
}

/// Convenience wrapper returning just the indices.
pub fn uniform_indices(total_frames: usize, sample_count: usize) -> Result<Vec<usize>> {
    FramePlan::uniform(total_frames, sample_count).map(|p| p.indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_single() {
        assert_eq!(uniform_indices(5, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(uniform_indices(1, 1).unwrap(), vec![0]);
        assert_eq!(uniform_indices(10, 1).unwrap(), vec![4]);
    }

    #[test]
    fn eighty_one_frames() {
        // floor(k·80/9) and floor(k·80/11), evaluated by hand
        assert_eq!(uniform_indices(81, 10).unwrap(), vec![0, 8, 17, 26, 35, 44, 53, 62, 71, 80]);
        assert_eq!(
            uniform_indices(81, 12).unwrap(),
            vec![0, 7, 14, 21, 29, 36, 43, 50, 58, 65, 72, 80]
        );
    }

    #[test]
    fn invalid_plans() {
        assert_eq!(FramePlan::uniform(4, 5).unwrap_err().code(), "INVALID_PLAN");
        assert_eq!(FramePlan::uniform(0, 1).unwrap_err().code(), "INVALID_PLAN");
        assert_eq!(FramePlan::from_indices(5, vec![0, 5]).unwrap_err().code(), "INVALID_PLAN");
        assert!(FramePlan::from_indices(5, vec![2, 2]).is_err());
    }

    proptest! {
        #[test]
        fn plans_are_valid(t in 1usize..500, k_frac in 0.0f64..1.0) {
            let k = 1 + ((t - 1) as f64 * k_frac) as usize;
            let plan = FramePlan::uniform(t, k).unwrap();
            prop_assert_eq!(plan.len(), k);
            prop_assert!(plan.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(plan.indices().iter().all(|&i| i < t));
            if k >= 2 {
                prop_assert_eq!(plan.indices()[0], 0);
                prop_assert_eq!(*plan.indices().last().unwrap(), t - 1);
            }
            prop_assert_eq!(&plan, &FramePlan::uniform(t, k).unwrap());
        }

        #[test]
        fn growing_k_keeps_endpoints(t in 2usize..300, k in 2usize..300) {
            prop_assume!(k < t);
            let a = FramePlan::uniform(t, k).unwrap();
            let b = FramePlan::uniform(t, k + 1).unwrap();
            prop_assert_eq!(a.indices()[0], b.indices()[0]);
            prop_assert_eq!(a.indices().last(), b.indices().last());
        }
    }
}
