//! Prototype labeling and structural refinement.
//!
//! After SOFM training each node is labeled by majority vote of the samples
//! it wins. The refinement loop then repairs the set: prototypes with too
//! little support are deleted, impure prototypes are split into per-class
//! means, and near-coincident same-class prototypes are merged. A final
//! winner-only SOFM pass polishes the survivors before relabeling.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::sofm::{self, dist2, SofmGrid, SofmSchedule};
use crate::SeedRng;

/// Per-node class tallies: `counts[i][j]` is the number of class-`j`
/// samples whose nearest center is node `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct WinCountMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl WinCountMatrix {
    /// Total samples won by node `i`.
    pub fn support(&self, i: usize) -> usize {
        self.counts[i].iter().sum()
    }

    /// Sum over all nodes and classes; equals the dataset size.
    pub fn total(&self) -> usize {
        (0..self.counts.len()).map(|i| self.support(i)).sum()
    }
}

/// Nearest center index for every sample; lowest index wins ties.
pub fn nearest_assignments(centers: &[Vec<f64>], data: &Dataset) -> Vec<usize> {
    data.samples()
        .iter()
        .map(|s| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, c) in centers.iter().enumerate() {
                let d = dist2(c, &s.x);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            best
        })
        .collect()
}

fn counts_from_assignments(assign: &[usize], data: &Dataset, m: usize) -> WinCountMatrix {
    let mut counts = vec![vec![0usize; data.c()]; m];
    for (&a, s) in assign.iter().zip(data.samples()) {
        counts[a][s.y] += 1;
    }
    WinCountMatrix { counts }
}

/// Tallies how many samples of each class land on each center.
pub fn compute_win_counts(centers: &[Vec<f64>], data: &Dataset) -> WinCountMatrix {
    let assign = nearest_assignments(centers, data);
    counts_from_assignments(&assign, data, centers.len())
}

/// A class-labeled cluster center.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPrototype {
    pub center: Vec<f64>,
    pub class: usize,
    /// Samples this prototype wins.
    pub support: usize,
    /// Fraction of won samples that belong to `class`, in `[0, 1]`.
    pub purity: f64,
}

/// Labels each center by the majority class of its wins; ties go to the
/// lowest class index. Centers that win nothing are dropped. Fails if no
/// center wins anything.
pub fn label_prototypes(centers: &[Vec<f64>], counts: &WinCountMatrix) -> Result<Vec<LabeledPrototype>> {
    let mut out = Vec::new();
    for (center, row) in centers.iter().zip(&counts.counts) {
        let support: usize = row.iter().sum();
        if support == 0 {
            continue;
        }
        let class = row
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("non-empty count row");
        out.push(LabeledPrototype {
            center: center.clone(),
            class,
            support,
            purity: row[class] as f64 / support as f64,
        });
    }
    if out.is_empty() {
        return Err(Error::invalid("every map node won zero samples; cannot label prototypes"));
    }
    Ok(out)
}

/// Thresholds steering the delete/split/merge passes.
#[derive(Clone, Debug)]
pub struct RefineConfig {
    /// Minimum wins a prototype (or a split fragment) must hold.
    pub min_support: usize,
    /// Prototypes below this purity are split per class.
    pub purity_threshold: f64,
    /// Same-class centers closer than this factor times their mean
    /// within-cluster spread are merged.
    pub merge_distance_factor: f64,
    /// Upper bound on structural passes.
    pub max_rounds: usize,
}

impl RefineConfig {
    pub fn defaults(n_train: usize, c: usize) -> Self {
        RefineConfig {
            min_support: (n_train / (10 * c.max(1))).max(2),
            purity_threshold: 0.5,
            merge_distance_factor: 0.5,
            max_rounds: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_support == 0 {
            return Err(Error::invalid("min_support must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.purity_threshold) {
            return Err(Error::invalid(format!(
                "purity threshold {} outside [0, 1]",
                self.purity_threshold
            )));
        }
        if !(self.merge_distance_factor >= 0.0) {
            return Err(Error::invalid("merge distance factor must be non-negative"));
        }
        if self.max_rounds == 0 {
            return Err(Error::invalid("refinement needs at least one round"));
        }
        Ok(())
    }
}

/// Refinement result. `converged` is true when every final prototype meets
/// both the support and purity thresholds.
#[derive(Clone, Debug)]
pub struct Refined {
    pub prototypes: Vec<LabeledPrototype>,
    pub converged: bool,
    pub rounds: usize,
    /// One line per round describing the structural edits made.
    pub log: Vec<String>,
}

/// Per-class means of the samples assigned to node `i`, for classes holding
/// at least `min_support` of them. Returns `(class, mean)` pairs.
fn split_centers(
    i: usize,
    assign: &[usize],
    data: &Dataset,
    min_support: usize,
) -> Vec<(usize, Vec<f64>)> {
    let mut sums: Vec<(usize, Vec<f64>)> = vec![(0, vec![0.0; data.p()]); data.c()];
    for (&a, s) in assign.iter().zip(data.samples()) {
        if a == i {
            let slot = &mut sums[s.y];
            slot.0 += 1;
            for (acc, &v) in slot.1.iter_mut().zip(&s.x) {
                *acc += v;
            }
        }
    }
    sums.into_iter()
        .enumerate()
        .filter(|(_, (n, _))| *n >= min_support)
        .map(|(class, (n, sum))| (class, sum.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

fn rms_spread(i: usize, center: &[f64], assign: &[usize], data: &Dataset) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&a, s) in assign.iter().zip(data.samples()) {
        if a == i {
            sum += dist2(center, &s.x);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Runs delete/split/merge rounds until the set is structurally stable or
/// `max_rounds` is hit, then polishes the survivors with a winner-only SOFM
/// pass and relabels them. Fails, naming the class, if any class ends
/// without a prototype.
pub fn refine_prototypes(
    prototypes: &[LabeledPrototype],
    data: &Dataset,
    cfg: &RefineConfig,
    schedule: &SofmSchedule,
    rng: &mut SeedRng,
) -> Result<Refined> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot refine prototypes on an empty dataset"));
    }
    // (center, class) pairs; support and purity are recomputed every round
    let mut protos: Vec<(Vec<f64>, usize)> =
        prototypes.iter().map(|p| (p.center.clone(), p.class)).collect();
    if protos.is_empty() {
        return Err(Error::invalid("refinement needs at least one prototype"));
    }

    let mut rounds = 0;
    let mut log = Vec::new();
    while rounds < cfg.max_rounds {
        rounds += 1;
        let mut changed = false;
        let (mut n_deleted, mut n_split, mut n_merged) = (0usize, 0usize, 0usize);

        let centers: Vec<Vec<f64>> = protos.iter().map(|(c, _)| c.clone()).collect();
        let assign = nearest_assignments(&centers, data);
        let counts = counts_from_assignments(&assign, data, centers.len());

        // delete weak prototypes, split impure ones; labels are sticky
        // within the loop (splits set them by construction), the majority
        // relabel happens once after the polish
        let mut next: Vec<(Vec<f64>, usize)> = Vec::new();
        for i in 0..centers.len() {
            let row = &counts.counts[i];
            let support: usize = row.iter().sum();
            if support < cfg.min_support {
                changed = true;
                n_deleted += 1;
                continue;
            }
            let class = protos[i].1;
            let purity = row[class] as f64 / support as f64;
            if purity < cfg.purity_threshold {
                let parts = split_centers(i, &assign, data, cfg.min_support);
                if parts.len() != 1 || dist2(&parts[0].1, &centers[i]) > 1e-24 {
                    changed = true;
                    n_split += 1;
                }
                next.extend(parts.into_iter().map(|(class, center)| (center, class)));
            } else {
                next.push((centers[i].clone(), class));
            }
        }
        if next.is_empty() {
            return Err(Error::invalid(
                "refinement deleted every prototype; lower min_support or add data",
            ));
        }

        // merge near-coincident same-class prototypes
        let centers: Vec<Vec<f64>> = next.iter().map(|(c, _)| c.clone()).collect();
        let assign = nearest_assignments(&centers, data);
        let spreads: Vec<f64> = centers
            .iter()
            .enumerate()
            .map(|(i, c)| rms_spread(i, c, &assign, data))
            .collect();
        let mut weight: Vec<usize> = (0..centers.len())
            .map(|i| assign.iter().filter(|&&a| a == i).count())
            .collect();
        let mut alive = vec![true; next.len()];
        for i in 0..next.len() {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..next.len() {
                if !alive[j] || next[i].1 != next[j].1 {
                    continue;
                }
                let d = dist2(&next[i].0, &next[j].0).sqrt();
                if d < cfg.merge_distance_factor * 0.5 * (spreads[i] + spreads[j]) {
                    let (wi, wj) = (weight[i] as f64, weight[j] as f64);
                    let merged: Vec<f64> = next[i]
                        .0
                        .iter()
                        .zip(&next[j].0)
                        .map(|(a, b)| (wi * a + wj * b) / (wi + wj))
                        .collect();
                    next[i].0 = merged;
                    weight[i] += weight[j];
                    alive[j] = false;
                    changed = true;
                    n_merged += 1;
                }
            }
        }
        protos = next
            .into_iter()
            .zip(alive)
            .filter_map(|(p, keep)| keep.then_some(p))
            .collect();

        let mut per_class = vec![0usize; data.c()];
        for (_, class) in &protos {
            per_class[*class] += 1;
        }
        log.push(format!(
            "round {rounds}: deleted {n_deleted}, split {n_split}, merged {n_merged} -> {} prototypes {per_class:?}",
            protos.len()
        ));
        if !changed {
            break;
        }
    }

    // winner-only polish, then relabel from fresh win counts; the polish
    // continues the schedule's decay rather than restarting it, so it nudges
    // centers without undoing the structural work above
    let polish = SofmSchedule {
        alpha0: schedule.alpha0 * schedule.alpha_decay.powi(schedule.epochs as i32),
        ..*schedule
    };
    let grid = SofmGrid { weights: protos.iter().map(|(c, _)| c.clone()).collect() };
    let polished = sofm::winner_only_refine(&grid, data, &polish, rng)?;
    let counts = compute_win_counts(&polished.weights, data);
    let labeled = label_prototypes(&polished.weights, &counts)?;

    for k in 0..data.c() {
        if !labeled.iter().any(|p| p.class == k) {
            let mut per_class = vec![0usize; data.c()];
            for p in &labeled {
                per_class[p.class] += 1;
            }
            return Err(Error::invalid(format!(
                "refinement left class {} without a prototype (final tally {per_class:?}; {})",
                data.raw_labels()[k],
                log.join("; ")
            )));
        }
    }
    let converged = labeled
        .iter()
        .all(|p| p.support >= cfg.min_support && p.purity >= cfg.purity_threshold);
    Ok(Refined { prototypes: labeled, converged, rounds, log })
}

/// Full prototype pipeline: SOFM seeding with one node per class, majority
/// labeling, then structural refinement.
pub fn generate_prototypes(
    data: &Dataset,
    cfg: &RefineConfig,
    schedule: &SofmSchedule,
    rng: &mut SeedRng,
) -> Result<Refined> {
    if data.is_empty() {
        return Err(Error::invalid("cannot build prototypes from an empty dataset"));
    }
    for (k, &n) in data.class_histogram().iter().enumerate() {
        if n == 0 {
            return Err(Error::invalid(format!(
                "training data has no samples of class {}",
                data.raw_labels()[k]
            )));
        }
    }
    let grid = sofm::init_sofm(data.c(), data, rng)?;
    let grid = sofm::train_sofm(&grid, data, schedule, rng)?;
    let counts = compute_win_counts(&grid.weights, data);
    let labeled = label_prototypes(&grid.weights, &counts)?;
    refine_prototypes(&labeled, data, cfg, schedule, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::seeded_rng;

    fn quiet_schedule() -> SofmSchedule {
        // zero learning rate so the winner-only polish is a no-op
        SofmSchedule {
            alpha0: 0.0,
            sigma0: 1.0,
            radius0: 1.0,
            epochs: 1,
            alpha_decay: 0.5,
            sigma_decay: 0.5,
        }
    }

    fn grid_2x(a: f64, b: f64) -> Vec<Vec<f64>> {
        vec![vec![a], vec![b]]
    }

    #[test]
    fn win_counts_total_equals_dataset_size() {
        let d = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![9.0], vec![10.0], vec![11.0]],
            vec![0, 0, 1, 1, 0],
            2,
        )
        .unwrap();
        let counts = compute_win_counts(&grid_2x(0.5, 10.0), &d);
        assert_eq!(counts.total(), 5);
        assert_eq!(counts.counts, vec![vec![2, 0], vec![1, 2]]);
        assert_eq!(counts.support(0), 2);
        assert_eq!(counts.support(1), 3);
    }

    #[test]
    fn equidistant_sample_counts_for_the_lower_node() {
        let d = Dataset::new(vec![vec![5.0]], vec![0], 1).unwrap();
        let counts = compute_win_counts(&grid_2x(4.0, 6.0), &d);
        assert_eq!(counts.counts, vec![vec![1], vec![0]]);
    }

    #[test]
    fn labeling_takes_majority_and_drops_empty_nodes() {
        let centers = vec![vec![0.0], vec![5.0], vec![100.0]];
        let counts = WinCountMatrix {
            counts: vec![vec![10, 2, 0], vec![3, 3, 0], vec![0, 0, 0]],
        };
        let lp = label_prototypes(&centers, &counts).unwrap();
        assert_eq!(lp.len(), 2);
        assert_eq!((lp[0].class, lp[0].support), (0, 12));
        assert!((lp[0].purity - 10.0 / 12.0).abs() < 1e-15);
        // 3-3 tie resolves to the lower class index
        assert_eq!(lp[1].class, 0);
        assert_eq!(lp[1].purity, 0.5);
    }

    #[test]
    fn labeling_fails_when_nothing_wins() {
        let counts = WinCountMatrix { counts: vec![vec![0, 0]] };
        assert!(label_prototypes(&[vec![0.0]], &counts).is_err());
    }

    fn lp(center: Vec<f64>, class: usize) -> LabeledPrototype {
        LabeledPrototype { center, class, support: 0, purity: 1.0 }
    }

    #[test]
    fn clean_set_is_a_fixed_point() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..10 {
            xs.push(vec![i as f64 * 0.01]);
            ys.push(0);
            xs.push(vec![10.0 + i as f64 * 0.01]);
            ys.push(1);
        }
        let d = Dataset::new(xs, ys, 2).unwrap();
        let start = vec![lp(vec![0.05], 0), lp(vec![10.05], 1)];
        let cfg = RefineConfig {
            min_support: 2,
            purity_threshold: 0.5,
            merge_distance_factor: 0.5,
            max_rounds: 10,
        };
        let out =
            refine_prototypes(&start, &d, &cfg, &quiet_schedule(), &mut seeded_rng(0)).unwrap();
        assert!(out.converged);
        assert_eq!(out.rounds, 1);
        let centers: Vec<&Vec<f64>> = out.prototypes.iter().map(|p| &p.center).collect();
        assert_eq!(centers, vec![&vec![0.05], &vec![10.05]]);
        assert_eq!(out.prototypes[0].support, 10);
        assert_eq!(out.prototypes[0].purity, 1.0);
    }

    #[test]
    fn impure_prototype_splits_into_per_class_means() {
        // one prototype wins a 50/50 mix of two well-separated classes
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..10 {
            xs.push(vec![i as f64 * 0.1]);
            ys.push(0);
            xs.push(vec![20.0 + i as f64 * 0.1]);
            ys.push(1);
        }
        let d = Dataset::new(xs, ys, 2).unwrap();
        let start = vec![lp(vec![10.0], 0)];
        let cfg = RefineConfig {
            min_support: 2,
            purity_threshold: 0.6,
            merge_distance_factor: 0.5,
            max_rounds: 10,
        };
        let out =
            refine_prototypes(&start, &d, &cfg, &quiet_schedule(), &mut seeded_rng(0)).unwrap();
        assert_eq!(out.prototypes.len(), 2);
        let mut centers: Vec<f64> = out.prototypes.iter().map(|p| p.center[0]).collect();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((centers[0] - 0.45).abs() < 1e-12);
        assert!((centers[1] - 20.45).abs() < 1e-12);
        assert!(out.converged);
    }

    #[test]
    fn weak_prototype_is_deleted() {
        let d = Dataset::new(
            vec![vec![0.0], vec![0.1], vec![0.2], vec![0.3], vec![50.0]],
            vec![0, 0, 0, 0, 0],
            1,
        )
        .unwrap();
        let start = vec![lp(vec![0.15], 0), lp(vec![50.0], 0)];
        let cfg = RefineConfig {
            min_support: 2,
            purity_threshold: 0.5,
            merge_distance_factor: 0.5,
            max_rounds: 10,
        };
        let out =
            refine_prototypes(&start, &d, &cfg, &quiet_schedule(), &mut seeded_rng(0)).unwrap();
        assert_eq!(out.prototypes.len(), 1);
        assert_eq!(out.prototypes[0].support, 5);
    }

    #[test]
    fn coincident_same_class_prototypes_merge_support_weighted() {
        let mut xs = Vec::new();
        for i in 0..12 {
            xs.push(vec![(i % 4) as f64]);
        }
        let d = Dataset::new(xs, vec![0; 12], 1).unwrap();
        // two prototypes inside one spread-out cluster
        let start = vec![lp(vec![1.0], 0), lp(vec![2.0], 0)];
        let cfg = RefineConfig {
            min_support: 2,
            purity_threshold: 0.5,
            merge_distance_factor: 2.0,
            max_rounds: 10,
        };
        let out =
            refine_prototypes(&start, &d, &cfg, &quiet_schedule(), &mut seeded_rng(0)).unwrap();
        assert_eq!(out.prototypes.len(), 1);
        // support-weighted mean of 1.0 (6 wins: values 0,1) and 2.0 (6 wins: values 2,3)
        assert!((out.prototypes[0].center[0] - 1.5).abs() < 1e-12);
        assert_eq!(out.prototypes[0].support, 12);
    }

    #[test]
    fn emptied_class_is_reported_by_raw_label() {
        let f: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.1]).collect();
        let mut xs = f;
        xs.push(vec![50.0]);
        let mut ys = vec![0usize; 9];
        ys.push(1);
        let d = Dataset::new(xs, ys, 2).unwrap();
        let start = vec![lp(vec![0.4], 0), lp(vec![50.0], 1)];
        let cfg = RefineConfig {
            min_support: 2,
            purity_threshold: 0.5,
            merge_distance_factor: 0.5,
            max_rounds: 10,
        };
        let err = refine_prototypes(&start, &d, &cfg, &quiet_schedule(), &mut seeded_rng(0))
            .unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }

    #[test]
    fn generate_prototypes_finds_separated_blobs() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..25 {
            let o = (i % 5) as f64 * 0.2;
            xs.push(vec![o, o * 0.5]);
            ys.push(0);
            xs.push(vec![30.0 + o, 30.0 - o]);
            ys.push(1);
        }
        let d = Dataset::new(xs, ys, 2).unwrap();
        let cfg = RefineConfig::defaults(d.len(), d.c());
        let sched = SofmSchedule::defaults(d.c(), d.len());
        let out = generate_prototypes(&d, &cfg, &sched, &mut seeded_rng(17)).unwrap();
        assert!(out.converged);
        let mut classes: Vec<usize> = out.prototypes.iter().map(|p| p.class).collect();
        classes.sort_unstable();
        classes.dedup();
        assert_eq!(classes, vec![0, 1]);
        for p in &out.prototypes {
            let near_origin = p.center[0] < 2.0;
            assert_eq!(p.class, usize::from(!near_origin));
            assert!(p.purity == 1.0, "purity {}", p.purity);
        }

        let out2 = generate_prototypes(&d, &cfg, &sched, &mut seeded_rng(17)).unwrap();
        assert_eq!(out.prototypes, out2.prototypes);
    }

    #[test]
    fn generate_prototypes_requires_every_class_present() {
        let d = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0, 0], 2).unwrap();
        let cfg = RefineConfig::defaults(2, 2);
        let sched = SofmSchedule::defaults(2, 2);
        let err = generate_prototypes(&d, &cfg, &sched, &mut seeded_rng(0)).unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");
    }
}
