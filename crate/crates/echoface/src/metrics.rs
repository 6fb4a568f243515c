//! Tracking-quality metrics over blendshape frames.
//!
//! Five headline numbers: MAE over all 52 parameters, LMAE/UMAE over the
//! lower/upper face partitions, and the percentage of frames with LMAE
//! under 40 (PL40) and UMAE under 60 (PU60). "Under" is strict.

use crate::blendshape::{BlendshapeVector, FacePartition, BLENDSHAPE_COUNT};
use crate::error::ConfigError;

/// LMAE threshold for PL40.
pub const PL40_THRESHOLD: f64 = 40.0;
/// UMAE threshold for PU60.
pub const PU60_THRESHOLD: f64 = 60.0;

fn mean_abs_over(pred: &BlendshapeVector, gt: &BlendshapeVector, idx: &[usize]) -> f64 {
    idx.iter()
        .map(|&i| (pred.get(i) - gt.get(i)).abs())
        .sum::<f64>()
        / idx.len() as f64
}

/// Mean absolute error over all 52 parameters.
pub fn mae(pred: &BlendshapeVector, gt: &BlendshapeVector) -> f64 {
    pred.values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p - g).abs())
        .sum::<f64>()
        / BLENDSHAPE_COUNT as f64
}

/// MAE over the 33 lower-face parameters.
pub fn lmae(pred: &BlendshapeVector, gt: &BlendshapeVector) -> f64 {
    mean_abs_over(pred, gt, &FacePartition::canonical().lower)
}

/// MAE over the 19 upper-face parameters.
pub fn umae(pred: &BlendshapeVector, gt: &BlendshapeVector) -> f64 {
    mean_abs_over(pred, gt, &FacePartition::canonical().upper)
}

fn percent_under(values: &[f64], threshold: f64) -> Result<f64, ConfigError> {
    if values.is_empty() {
        return Err(ConfigError::new("percentage undefined on empty input"));
    }
    let n = values.iter().filter(|&&v| v < threshold).count();
    Ok(100.0 * n as f64 / values.len() as f64)
}

/// Percentage of frames with LMAE strictly under 40.
pub fn pl40(frame_lmaes: &[f64]) -> Result<f64, ConfigError> {
    percent_under(frame_lmaes, PL40_THRESHOLD)
}

/// Percentage of frames with UMAE strictly under 60.
pub fn pu60(frame_umaes: &[f64]) -> Result<f64, ConfigError> {
    percent_under(frame_umaes, PU60_THRESHOLD)
}

/// Degree of deformation of a full expression: mean of the 52 values.
pub fn deformation_degree(v: &BlendshapeVector) -> f64 {
    v.values().iter().sum::<f64>() / BLENDSHAPE_COUNT as f64
}

/// Degree of deformation of one facial part: mean over its parameter set.
pub fn part_degree(v: &BlendshapeVector, part: &[usize]) -> f64 {
    assert!(!part.is_empty(), "part index set must be non-empty");
    part.iter().map(|&i| v.get(i)).sum::<f64>() / part.len() as f64
}

/// Deformation buckets used in the per-degree error breakdown.
pub const DEGREE_BUCKETS: [&str; 4] = ["<50", "50-100", "100-150", ">150"];

/// Bucket index for a degree value: `<50`, `[50,100)`, `[100,150)`, `>=150`.
pub fn degree_bucket(degree: f64) -> usize {
    if degree < 50.0 {
        0
    } else if degree < 100.0 {
        1
    } else if degree < 150.0 {
        2
    } else {
        3
    }
}

/// Histogram of degree values over the four buckets; fractions sum to 1.
pub fn bucketize(degrees: &[f64]) -> Result<[f64; 4], ConfigError> {
    if degrees.is_empty() {
        return Err(ConfigError::new("histogram undefined on empty input"));
    }
    let mut counts = [0usize; 4];
    for &d in degrees {
        counts[degree_bucket(d)] += 1;
    }
    Ok(counts.map(|c| c as f64 / degrees.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vector_from(values: Vec<f64>) -> BlendshapeVector {
        BlendshapeVector::from_scaled(&values).unwrap().0
    }

    fn random_vector(rng: &mut impl Rng) -> BlendshapeVector {
        vector_from((0..BLENDSHAPE_COUNT).map(|_| rng.gen_range(0.0..1000.0)).collect())
    }

    #[test]
    fn zero_error_on_identical_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_vector(&mut rng);
        assert_eq!(mae(&v, &v), 0.0);
        assert_eq!(lmae(&v, &v), 0.0);
        assert_eq!(umae(&v, &v), 0.0);
    }

    #[test]
    fn constant_offset_gives_that_error_everywhere() {
        let gt = vector_from(vec![100.0; BLENDSHAPE_COUNT]);
        let pred = vector_from(vec![140.0; BLENDSHAPE_COUNT]);
        assert!((mae(&pred, &gt) - 40.0).abs() < 1e-12);
        assert!((lmae(&pred, &gt) - 40.0).abs() < 1e-12);
        assert!((umae(&pred, &gt) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn mae_decomposes_over_the_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let a = random_vector(&mut rng);
            let b = random_vector(&mut rng);
            let whole = mae(&a, &b);
            let split = (33.0 * lmae(&a, &b) + 19.0 * umae(&a, &b)) / 52.0;
            assert!((whole - split).abs() < 1e-12);
        }
    }

    #[test]
    fn percentages_count_strictly_under() {
        let p = pl40(&[10.0, 39.0, 41.0]).unwrap();
        assert!((p - 66.66666666666667).abs() < 1e-9);
        assert_eq!(pl40(&[0.0, 0.0]).unwrap(), 100.0);
        assert_eq!(pl40(&[40.0]).unwrap(), 0.0);
        assert_eq!(pu60(&[59.999, 60.0]).unwrap(), 50.0);
        assert!(pl40(&[]).is_err());
    }

    #[test]
    fn raising_threshold_never_lowers_the_percentage() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..120.0)).collect();
        let mut prev = 0.0;
        for t in [10.0, 40.0, 60.0, 90.0, 130.0] {
            let p = percent_under(&vals, t).unwrap();
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn degrees_and_buckets() {
        assert_eq!(deformation_degree(&BlendshapeVector::zeros()), 0.0);
        assert_eq!(degree_bucket(0.0), 0);
        let max = vector_from(vec![1000.0; BLENDSHAPE_COUNT]);
        assert_eq!(deformation_degree(&max), 1000.0);
        assert_eq!(degree_bucket(1000.0), 3);

        let hist = bucketize(&[40.0, 60.0, 120.0, 200.0]).unwrap();
        assert_eq!(hist, [0.25, 0.25, 0.25, 0.25]);
        assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_are_permutation_invariant_within_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_vector(&mut rng);
        let b = random_vector(&mut rng);
        let part = FacePartition::canonical();

        // Swap two lower-face parameters consistently in both vectors.
        let (i, j) = (part.lower[0], part.lower[7]);
        let mut a2 = a.clone();
        let mut b2 = b.clone();
        a2.set(i, a.get(j));
        a2.set(j, a.get(i));
        b2.set(i, b.get(j));
        b2.set(j, b.get(i));
        assert!((lmae(&a, &b) - lmae(&a2, &b2)).abs() < 1e-12);
        assert!((umae(&a, &b) - umae(&a2, &b2)).abs() < 1e-12);
        assert!((mae(&a, &b) - mae(&a2, &b2)).abs() < 1e-12);
    }
}
