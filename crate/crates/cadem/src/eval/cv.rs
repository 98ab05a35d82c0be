//! Stratified and grouped K-fold splitting plus nested cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CademError, Result};
use crate::eval::{mean_of, std_of};

/// Classification scores of one fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub macro_f1: f64,
    pub micro_f1: f64,
}

/// Test-index partition: one vector per fold. Every sample appears in exactly
/// one fold; per-class counts differ by at most one across folds.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(CademError::InvalidArgument("k-fold needs k >= 2".into()));
    }
    if labels.len() < k {
        return Err(CademError::InvalidArgument(format!(
            "cannot split {} samples into {k} folds",
            labels.len()
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < k {
            return Err(CademError::InvalidArgument(format!(
                "class {class} has {} samples, fewer than {k} folds",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (i, sample) in idx.into_iter().enumerate() {
            folds[i % k].push(sample);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Grouped stratified K-fold: whole groups are assigned to folds (no group id
/// ever spans train and test), greedily balancing per-class counts.
pub fn grouped_stratified_kfold(
    labels: &[usize],
    groups: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(CademError::InvalidArgument("k-fold needs k >= 2".into()));
    }
    if labels.len() != groups.len() {
        return Err(CademError::InvalidArgument(
            "labels and groups must have equal length".into(),
        ));
    }
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut group_ids: Vec<usize> = {
        let mut g = groups.to_vec();
        g.sort_unstable();
        g.dedup();
        g
    };
    if group_ids.len() < k {
        return Err(CademError::InvalidArgument(format!(
            "{} groups cannot fill {k} folds",
            group_ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    group_ids.shuffle(&mut rng);
    // Large groups first so the greedy balance has room to correct.
    let group_size = |g: usize| groups.iter().filter(|&&x| x == g).count();
    group_ids.sort_by_key(|&g| std::cmp::Reverse(group_size(g)));

    let mut fold_class_counts = vec![vec![0usize; n_classes]; k];
    let mut fold_sizes = vec![0usize; k];
    let mut folds = vec![Vec::new(); k];
    for g in group_ids {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| groups[i] == g).collect();
        let mut class_counts = vec![0usize; n_classes];
        for &i in &members {
            class_counts[labels[i]] += 1;
        }
        // Cost of adding the group to a fold: squared per-class count after
        // assignment, preferring the emptiest fold on ties.
        let best_fold = (0..k)
            .min_by_key(|&f| {
                let cost: usize = (0..n_classes)
                    .map(|c| {
                        let v = fold_class_counts[f][c] + class_counts[c];
                        v * v
                    })
                    .sum();
                (cost, fold_sizes[f], f)
            })
            .unwrap();
        for &i in &members {
            fold_class_counts[best_fold][labels[i]] += 1;
            folds[best_fold].push(i);
        }
        fold_sizes[best_fold] += members.len();
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    if folds.iter().any(|f| f.is_empty()) {
        return Err(CademError::InvalidArgument(
            "grouped split produced an empty fold".into(),
        ));
    }
    Ok(folds)
}

/// Nested cross-validation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub per_fold: Vec<FoldMetrics>,
    /// Grid index chosen by the inner loop, per outer fold.
    pub chosen_settings: Vec<usize>,
    pub macro_mean: f64,
    pub macro_std: f64,
    pub micro_mean: f64,
    pub micro_std: f64,
}

fn assert_disjoint(train: &[usize], test: &[usize]) -> Result<()> {
    let test_set: std::collections::HashSet<usize> = test.iter().copied().collect();
    if train.iter().any(|i| test_set.contains(i)) {
        return Err(CademError::Contract(
            "train/test index leak detected".into(),
        ));
    }
    Ok(())
}

fn assert_group_disjoint(train: &[usize], test: &[usize], groups: &[usize]) -> Result<()> {
    let test_groups: std::collections::HashSet<usize> =
        test.iter().map(|&i| groups[i]).collect();
    if train.iter().any(|&i| test_groups.contains(&groups[i])) {
        return Err(CademError::Contract(
            "a group id spans train and test of the same fold".into(),
        ));
    }
    Ok(())
}

/// Nested stratified (optionally grouped) cross-validation. For each outer
/// fold the inner loop scores every grid setting by mean inner macro-F1 (ties
/// go to the earlier grid entry), the winner is retrained on the full outer
/// train split and evaluated on the outer test split.
///
/// `evaluate(setting, train_idx, test_idx)` must train on the first index set
/// only; disjointness (and group disjointness when `groups` is given) is
/// asserted before every call.
pub fn nested_cv<T: Sync>(
    labels: &[usize],
    groups: Option<&[usize]>,
    outer_k: usize,
    inner_k: usize,
    grid: &[T],
    seed: u64,
    evaluate: impl Fn(&T, &[usize], &[usize]) -> Result<FoldMetrics> + Sync,
) -> Result<CvReport> {
    if outer_k < 2 {
        return Err(CademError::InvalidArgument("outer_k must be >= 2".into()));
    }
    if grid.is_empty() {
        return Err(CademError::InvalidArgument("empty hyperparameter grid".into()));
    }
    let outer_folds = match groups {
        Some(g) => grouped_stratified_kfold(labels, g, outer_k, seed)?,
        None => stratified_kfold(labels, outer_k, seed)?,
    };
    let all: Vec<usize> = (0..labels.len()).collect();

    let fold_results: Vec<Result<(FoldMetrics, usize)>> = outer_folds
        .par_iter()
        .enumerate()
        .map(|(fold_idx, test)| {
            let train: Vec<usize> = all
                .iter()
                .copied()
                .filter(|i| !test.contains(i))
                .collect();
            assert_disjoint(&train, test)?;
            if let Some(g) = groups {
                assert_group_disjoint(&train, test, g)?;
            }

            // Inner model selection on the outer-train split.
            let chosen = if grid.len() == 1 {
                0
            } else {
                let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
                let inner_folds = match groups {
                    Some(g) => {
                        let train_groups: Vec<usize> =
                            train.iter().map(|&i| g[i]).collect();
                        grouped_stratified_kfold(
                            &train_labels,
                            &train_groups,
                            inner_k,
                            seed ^ (fold_idx as u64 + 1),
                        )?
                    }
                    None => stratified_kfold(
                        &train_labels,
                        inner_k,
                        seed ^ (fold_idx as u64 + 1),
                    )?,
                };
                let mut best = (0usize, f64::NEG_INFINITY);
                for (gi, setting) in grid.iter().enumerate() {
                    let mut scores = Vec::new();
                    for val_local in &inner_folds {
                        let val: Vec<usize> =
                            val_local.iter().map(|&i| train[i]).collect();
                        let fit: Vec<usize> = train
                            .iter()
                            .copied()
                            .filter(|i| !val.contains(i))
                            .collect();
                        assert_disjoint(&fit, &val)?;
                        if let Some(g) = groups {
                            assert_group_disjoint(&fit, &val, g)?;
                        }
                        scores.push(evaluate(setting, &fit, &val)?.macro_f1);
                    }
                    let mean = mean_of(&scores);
                    if mean > best.1 {
                        best = (gi, mean);
                    }
                }
                best.0
            };

            let metrics = evaluate(&grid[chosen], &train, test)?;
            Ok((metrics, chosen))
        })
        .collect();

    let mut per_fold = Vec::with_capacity(outer_k);
    let mut chosen_settings = Vec::with_capacity(outer_k);
    for r in fold_results {
        let (m, c) = r?;
        per_fold.push(m);
        chosen_settings.push(c);
    }
    let macros: Vec<f64> = per_fold.iter().map(|m| m.macro_f1).collect();
    let micros: Vec<f64> = per_fold.iter().map(|m| m.micro_f1).collect();
    Ok(CvReport {
        macro_mean: mean_of(&macros),
        macro_std: std_of(&macros),
        micro_mean: mean_of(&micros),
        micro_std: std_of(&micros),
        per_fold,
        chosen_settings,
    })
}
