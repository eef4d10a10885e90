//! One-dimensional self-organizing feature map.
//!
//! The map is a line of `m` weight vectors. Training presents samples in a
//! seeded random order; the winning node (nearest weight, lowest index on
//! ties) and its lattice neighbors move toward each sample by
//! `h(t, r, i) * (x - w_i)` where
//! `h(t, r, i) = alpha_t * exp(-(r - i)^2 / sigma_t^2)`.
//! Learning rate and neighborhood width decay exponentially per epoch; the
//! hard update radius shrinks linearly and reaches zero by the final third
//! of training, after which only winners move.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::SeedRng;

use rand::seq::SliceRandom;

/// Weight vectors of a 1-D map, indexed by lattice position.
#[derive(Clone, Debug, PartialEq)]
pub struct SofmGrid {
    pub weights: Vec<Vec<f64>>,
}

impl SofmGrid {
    /// Number of nodes.
    pub fn m(&self) -> usize {
        self.weights.len()
    }
}

/// Epoch schedule for SOFM training.
#[derive(Clone, Debug)]
pub struct SofmSchedule {
    /// Initial learning rate, in `(0, 1]`.
    pub alpha0: f64,
    /// Initial neighborhood width of the Gaussian kernel.
    pub sigma0: f64,
    /// Initial hard update radius in lattice steps.
    pub radius0: f64,
    pub epochs: usize,
    /// Per-epoch multiplicative decay of `alpha`, in `(0, 1)`.
    pub alpha_decay: f64,
    /// Per-epoch multiplicative decay of `sigma`, in `(0, 1)`.
    pub sigma_decay: f64,
}

impl SofmSchedule {
    /// Defaults scaled to a map of `m` nodes trained on `n` samples.
    pub fn defaults(m: usize, n: usize) -> Self {
        let span = (m as f64 / 2.0).max(1.0);
        let epochs = ((100 * m) as f64 / n.max(1) as f64).ceil() as usize;
        SofmSchedule {
            alpha0: 0.5,
            sigma0: span,
            radius0: span,
            epochs: epochs.max(10),
            alpha_decay: 0.8,
            sigma_decay: 0.8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(Error::invalid(format!("alpha0 {} outside (0, 1]", self.alpha0)));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::invalid(format!("sigma0 {} must be positive", self.sigma0)));
        }
        if !(self.radius0 >= 0.0) {
            return Err(Error::invalid(format!("radius0 {} must be non-negative", self.radius0)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("schedule needs at least one epoch"));
        }
        for (name, v) in [("alpha_decay", self.alpha_decay), ("sigma_decay", self.sigma_decay)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} {v} outside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn alpha_at(&self, t: usize) -> f64 {
        self.alpha0 * self.alpha_decay.powi(t as i32)
    }

    pub fn sigma_at(&self, t: usize) -> f64 {
        self.sigma0 * self.sigma_decay.powi(t as i32)
    }

    /// Hard update radius at epoch `t`: linear from `radius0` to zero over
    /// the first two thirds of training.
    pub fn radius_at(&self, t: usize) -> f64 {
        let shrink_epochs = ((2 * self.epochs) / 3).max(1);
        if t >= shrink_epochs {
            0.0
        } else {
            self.radius0 * (1.0 - t as f64 / shrink_epochs as f64)
        }
    }

    /// Update gain for node `i` when node `r` wins at epoch `t`.
    pub fn neighborhood_strength(&self, t: usize, r: usize, i: usize) -> f64 {
        let d = r as f64 - i as f64;
        let sigma = self.sigma_at(t);
        self.alpha_at(t) * (-(d * d) / (sigma * sigma)).exp()
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the weight vector nearest to `x`; lowest index wins ties.
pub fn find_winner(grid: &SofmGrid, x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, w) in grid.weights.iter().enumerate() {
        let d = dist2(w, x);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Creates an `m`-node grid with weights drawn uniformly inside the
/// dataset's per-feature bounding box.
pub fn init_sofm(m: usize, data: &Dataset, rng: &mut SeedRng) -> Result<SofmGrid> {
    if m == 0 {
        return Err(Error::invalid("map needs at least one node"));
    }
    let ranges = data.feature_ranges()?;
    let weights = (0..m)
        .map(|_| {
            ranges
                .iter()
                .map(|&(lo, hi)| {
                    if lo == hi {
                        lo
                    } else {
                        use rand::Rng;
                        rng.random_range(lo..hi)
                    }
                })
                .collect()
        })
        .collect();
    Ok(SofmGrid { weights })
}

fn train_impl(
    grid: &SofmGrid,
    data: &Dataset,
    schedule: &SofmSchedule,
    rng: &mut SeedRng,
    winners_only: bool,
) -> Result<SofmGrid> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train a map on an empty dataset"));
    }
    if grid.weights.iter().any(|w| w.len() != data.p()) {
        return Err(Error::invalid(format!(
            "grid weights have a different dimensionality than the data ({} features)",
            data.p()
        )));
    }
    let mut grid = grid.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for t in 0..schedule.epochs {
        order.shuffle(rng);
        let radius = if winners_only { 0.0 } else { schedule.radius_at(t) };
        for &si in &order {
            let x = &data.samples()[si].x;
            let r = find_winner(&grid, x);
            let lo = r.saturating_sub(radius as usize);
            let hi = (r + radius as usize).min(grid.m() - 1);
            for i in lo..=hi {
                let h = schedule.neighborhood_strength(t, r, i);
                for (w, &xv) in grid.weights[i].iter_mut().zip(x) {
                    *w += h * (xv - *w);
                }
            }
        }
    }
    Ok(grid)
}

/// Runs the full schedule with the shrinking neighborhood.
pub fn train_sofm(
    grid: &SofmGrid,
    data: &Dataset,
    schedule: &SofmSchedule,
    rng: &mut SeedRng,
) -> Result<SofmGrid> {
    train_impl(grid, data, schedule, rng, false)
}

/// Runs the schedule with the update radius pinned to zero, so each sample
/// moves only its winning node. Used to polish prototypes after the
/// structural refinement passes.
pub fn winner_only_refine(
    grid: &SofmGrid,
    data: &Dataset,
    schedule: &SofmSchedule,
    rng: &mut SeedRng,
) -> Result<SofmGrid> {
    train_impl(grid, data, schedule, rng, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::seeded_rng;

    fn blob_dataset() -> Dataset {
        // two tight clusters around (0, 0) and (10, 10)
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..20 {
            let j = (i % 5) as f64 * 0.1;
            xs.push(vec![j, 0.2 - j]);
            ys.push(0);
            xs.push(vec![10.0 + j, 10.2 - j]);
            ys.push(1);
        }
        Dataset::new(xs, ys, 2).unwrap()
    }

    #[test]
    fn init_stays_inside_bounding_box_and_is_seeded() {
        let d = blob_dataset();
        let g = init_sofm(4, &d, &mut seeded_rng(7)).unwrap();
        let ranges = d.feature_ranges().unwrap();
        for w in &g.weights {
            for (v, &(lo, hi)) in w.iter().zip(&ranges) {
                assert!(*v >= lo && *v <= hi);
            }
        }
        let g2 = init_sofm(4, &d, &mut seeded_rng(7)).unwrap();
        assert_eq!(g, g2);
        let g3 = init_sofm(4, &d, &mut seeded_rng(8)).unwrap();
        assert_ne!(g, g3);
    }

    #[test]
    fn winner_is_nearest_with_lowest_index_tie_break() {
        let g = SofmGrid { weights: vec![vec![0.0], vec![10.0]] };
        assert_eq!(find_winner(&g, &[1.0]), 0);
        assert_eq!(find_winner(&g, &[9.0]), 1);

        let tie = SofmGrid { weights: vec![vec![5.0], vec![1.0], vec![9.0], vec![1.0]] };
        // nodes 1 and 3 are equidistant from x
        assert_eq!(find_winner(&tie, &[0.0]), 1);
    }

    #[test]
    fn neighborhood_strength_matches_gaussian_kernel() {
        let s = SofmSchedule {
            alpha0: 0.5,
            sigma0: 2.0,
            radius0: 3.0,
            epochs: 9,
            alpha_decay: 0.5,
            sigma_decay: 0.5,
        };
        assert_eq!(s.neighborhood_strength(0, 4, 4), 0.5);
        // |r - i| = sigma gives alpha * e^-1
        let got = s.neighborhood_strength(0, 4, 6);
        assert!((got - 0.5 * 0.367_879_441_171_442_33).abs() < 1e-15, "{got}");
        // one epoch later both alpha and sigma halve
        let later = s.neighborhood_strength(1, 4, 6);
        assert!((later - 0.25 * (-4.0f64).exp()).abs() < 1e-15, "{later}");
        assert!(later < got);
    }

    #[test]
    fn schedule_decays_and_radius_hits_zero_by_final_third() {
        let s = SofmSchedule {
            alpha0: 0.5,
            sigma0: 3.0,
            radius0: 3.0,
            epochs: 9,
            alpha_decay: 0.8,
            sigma_decay: 0.8,
        };
        s.validate().unwrap();
        for t in 1..s.epochs {
            assert!(s.alpha_at(t) < s.alpha_at(t - 1));
            assert!(s.sigma_at(t) < s.sigma_at(t - 1));
            assert!(s.radius_at(t) <= s.radius_at(t - 1));
        }
        assert!(s.radius_at(5) > 0.0);
        for t in 6..9 {
            assert_eq!(s.radius_at(t), 0.0);
        }
    }

    #[test]
    fn schedule_validation_rejects_bad_fields() {
        let good = SofmSchedule::defaults(4, 100);
        good.validate().unwrap();
        for bad in [
            SofmSchedule { alpha0: 0.0, ..good.clone() },
            SofmSchedule { alpha0: 1.5, ..good.clone() },
            SofmSchedule { sigma0: 0.0, ..good.clone() },
            SofmSchedule { epochs: 0, ..good.clone() },
            SofmSchedule { alpha_decay: 1.0, ..good.clone() },
            SofmSchedule { sigma_decay: 0.0, ..good.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn full_rate_update_lands_exactly_on_the_sample() {
        let d = Dataset::new(vec![vec![3.0, -1.0]], vec![0], 1).unwrap();
        let g = SofmGrid { weights: vec![vec![0.0, 0.0]] };
        let s = SofmSchedule {
            alpha0: 1.0,
            sigma0: 1.0,
            radius0: 0.0,
            epochs: 1,
            alpha_decay: 0.5,
            sigma_decay: 0.5,
        };
        let trained = train_sofm(&g, &d, &s, &mut seeded_rng(0)).unwrap();
        assert_eq!(trained.weights[0], vec![3.0, -1.0]);
    }

    #[test]
    fn zero_rate_leaves_grid_unchanged() {
        let d = blob_dataset();
        let g = init_sofm(3, &d, &mut seeded_rng(1)).unwrap();
        let s = SofmSchedule {
            alpha0: 0.0,
            sigma0: 1.0,
            radius0: 2.0,
            epochs: 5,
            alpha_decay: 0.5,
            sigma_decay: 0.5,
        };
        let trained = train_sofm(&g, &d, &s, &mut seeded_rng(2)).unwrap();
        assert_eq!(trained, g);
    }

    #[test]
    fn two_node_map_settles_one_node_per_cluster() {
        let d = blob_dataset();
        let g = init_sofm(2, &d, &mut seeded_rng(3)).unwrap();
        let s = SofmSchedule::defaults(2, d.len());
        let trained = train_sofm(&g, &d, &s, &mut seeded_rng(4)).unwrap();
        let mut near_low = 0;
        let mut near_high = 0;
        for w in &trained.weights {
            if w.iter().all(|&v| v < 2.0) {
                near_low += 1;
            }
            if w.iter().all(|&v| v > 8.0) {
                near_high += 1;
            }
        }
        assert_eq!((near_low, near_high), (1, 1), "weights: {:?}", trained.weights);
    }

    #[test]
    fn single_node_refine_matches_running_mean_fold() {
        let d = blob_dataset();
        let g = SofmGrid { weights: vec![vec![5.0, 5.0]] };
        let s = SofmSchedule {
            alpha0: 0.5,
            sigma0: 1.0,
            radius0: 2.0,
            epochs: 20,
            alpha_decay: 0.8,
            sigma_decay: 0.8,
        };
        let refined = winner_only_refine(&g, &d, &s, &mut seeded_rng(11)).unwrap();

        // independent fold over the same seeded presentation order
        let mut w = vec![5.0, 5.0];
        let mut rng = seeded_rng(11);
        let mut order: Vec<usize> = (0..d.len()).collect();
        for t in 0..s.epochs {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            let a = s.alpha_at(t);
            for &i in &order {
                for (wj, xj) in w.iter_mut().zip(&d.samples()[i].x) {
                    *wj += a * (xj - *wj);
                }
            }
        }
        assert_eq!(refined.weights[0], w);

        // with a single node the refined weight sits near the global mean
        let n = d.len() as f64;
        let mean: Vec<f64> = (0..2)
            .map(|j| d.samples().iter().map(|s| s.x[j]).sum::<f64>() / n)
            .collect();
        let err = dist2(&refined.weights[0], &mean).sqrt();
        assert!(err < 1.0, "refined {:?} vs mean {mean:?}", refined.weights[0]);
    }

    #[test]
    fn trained_weights_stay_inside_the_data_box() {
        let d = blob_dataset();
        let g = init_sofm(5, &d, &mut seeded_rng(5)).unwrap();
        let s = SofmSchedule::defaults(5, d.len());
        let trained = train_sofm(&g, &d, &s, &mut seeded_rng(6)).unwrap();
        let ranges = d.feature_ranges().unwrap();
        for w in &trained.weights {
            for (v, &(lo, hi)) in w.iter().zip(&ranges) {
                assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let d = blob_dataset();
        let g = SofmGrid { weights: vec![vec![0.0; 3]] };
        assert!(train_sofm(&g, &d, &SofmSchedule::defaults(1, 40), &mut seeded_rng(0)).is_err());
    }
}
