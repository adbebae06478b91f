use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::statements::count_statements;
use crate::corpus::Sample;
use crate::error::{Error, Result};

/// Train/validation/test buckets.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Splits {
    pub fn buckets(&self) -> [&[Sample]; 3] {
        [&self.train, &self.val, &self.test]
    }
}

pub fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::usage(format!("split ratios must be positive, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::usage(format!("split ratios must sum to 1, got {sum}")));
    }
    Ok(())
}

/// Assigns whole projects to buckets so no project spans two of them.
///
/// Projects are sorted by id, shuffled with `seed`, then each goes to the
/// bucket whose sample count is furthest below its target (lowest index on
/// ties). A bucket left empty takes the smallest project of the bucket with
/// the most projects.
pub fn split_by_project(samples: &[Sample], ratios: [f64; 3], seed: u64) -> Result<Splits> {
    validate_ratios(ratios)?;
    let mut by_project: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        by_project.entry(&s.project_id).or_default().push(s);
    }
    if by_project.len() < 3 {
        return Err(Error::usage(format!(
            "a three-way project split needs at least 3 projects, found {}",
            by_project.len()
        )));
    }
    let mut projects: Vec<&str> = by_project.keys().copied().collect();
    projects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = samples.len() as f64;
    let mut assigned: [Vec<&str>; 3] = Default::default();
    let mut counts = [0usize; 3];
    for p in projects {
        let bucket = (0..3)
            .map(|b| (b, ratios[b] * total - counts[b] as f64))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        counts[bucket] += by_project[p].len();
        assigned[bucket].push(p);
    }
    for empty in 0..3 {
        if !assigned[empty].is_empty() {
            continue;
        }
        let donor = (0..3).max_by_key(|&b| (assigned[b].len(), std::cmp::Reverse(b))).unwrap();
        let (idx, _) = assigned[donor]
            .iter()
            .enumerate()
            .min_by_key(|(_, p)| (by_project[**p].len(), **p))
            .unwrap();
        let moved = assigned[donor].remove(idx);
        assigned[empty].push(moved);
    }

    let mut bucket_of = std::collections::HashMap::new();
    for (b, ps) in assigned.iter().enumerate() {
        for p in ps {
            bucket_of.insert(*p, b);
        }
    }
    let mut out = Splits::default();
    for s in samples {
        let target = match bucket_of[s.project_id.as_str()] {
            0 => &mut out.train,
            1 => &mut out.val,
            _ => &mut out.test,
        };
        target.push(s.clone());
    }
    Ok(out)
}

/// Keeps samples with at least `min_statements` statements, in order.
pub fn filter_by_length(samples: &[Sample], min_statements: usize) -> Vec<Sample> {
    samples
        .iter()
        .filter(|s| count_statements(&s.code_tokens) >= min_statements)
        .cloned()
        .collect()
}

/// Drops samples whose id is in `excluded` (for example, the output of an
/// external clone detector).
pub fn exclude_ids(samples: &[Sample], excluded: &HashSet<String>) -> Vec<Sample> {
    samples
        .iter()
        .filter(|s| !excluded.contains(&s.sample_id))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(projects: usize, per: usize) -> Vec<Sample> {
        (0..projects)
            .flat_map(|p| {
                (0..per).map(move |i| Sample::new(format!("p{p}s{i}"), format!("p{p}"), "x", "y"))
            })
            .collect()
    }

    fn projects(s: &[Sample]) -> HashSet<String> {
        s.iter().map(|x| x.project_id.clone()).collect()
    }

    #[test]
    fn too_few_projects_is_an_error() {
        assert!(split_by_project(&corpus(1, 30), [0.8, 0.1, 0.1], 0).is_err());
        assert!(split_by_project(&corpus(2, 30), [0.8, 0.1, 0.1], 0).is_err());
    }

    #[test]
    fn ratios_are_validated() {
        assert!(split_by_project(&corpus(5, 3), [0.5, 0.5, 0.1], 0).is_err());
        assert!(split_by_project(&corpus(5, 3), [1.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn same_seed_same_split() {
        let c = corpus(10, 5);
        assert_eq!(
            split_by_project(&c, [0.6, 0.2, 0.2], 9).unwrap(),
            split_by_project(&c, [0.6, 0.2, 0.2], 9).unwrap()
        );
    }

    #[test]
    fn ten_by_ten_gives_eight_one_one() {
        let s = split_by_project(&corpus(10, 10), [0.8, 0.1, 0.1], 3).unwrap();
        assert_eq!(projects(&s.train).len(), 8);
        assert_eq!(projects(&s.val).len(), 1);
        assert_eq!(projects(&s.test).len(), 1);
    }

    #[test]
    fn no_bucket_left_empty() {
        let mut c = corpus(1, 100);
        c.extend(corpus(3, 1).into_iter().map(|mut s| {
            s.project_id = format!("small{}", s.project_id);
            s
        }));
        let s = split_by_project(&c, [0.34, 0.33, 0.33], 1).unwrap();
        assert!(s.buckets().iter().all(|b| !b.is_empty()));
    }

    #[test]
    fn filter_examples() {
        let c = vec![
            Sample::new("a", "p", "x", "s"),
            Sample::new("b", "p", "x <NL> y", "s"),
            Sample::new("c", "p", "x <NL> y <NL> z <NL>", "s"),
        ];
        assert_eq!(filter_by_length(&c, 1), c);
        let kept: Vec<_> = filter_by_length(&c, 2).into_iter().map(|s| s.sample_id).collect();
        assert_eq!(kept, ["b", "c"]);
        assert!(filter_by_length(&c, 2).iter().all(|s| s.sample_id != "a"));
    }

    #[test]
    fn exclusion_list() {
        let c = corpus(2, 2);
        let ex: HashSet<String> = ["p0s1".to_string()].into();
        assert_eq!(exclude_ids(&c, &ex).len(), 3);
    }

    proptest! {
        #[test]
        fn buckets_partition_projects(n in 3usize..15, per in 1usize..6, seed in 0u64..1000) {
            let c = corpus(n, per);
            let s = split_by_project(&c, [0.7, 0.15, 0.15], seed).unwrap();
            let sets: Vec<HashSet<String>> = s.buckets().iter().map(|b| projects(b)).collect();
            for i in 0..3 {
                for j in (i + 1)..3 {
                    prop_assert!(sets[i].is_disjoint(&sets[j]));
                }
            }
            let union: HashSet<String> = sets.iter().flatten().cloned().collect();
            prop_assert_eq!(union, projects(&c));
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), c.len());
        }
    }
}
