//! Splitting feature columns across parties. Party 0 is the host.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{load_importance_file, RawDataset};
use crate::error::{Error, Result};
use crate::fed::PartitionedDataset;
use crate::rng::{rng_for, stream};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceSource {
    /// `|corr(feature, label)|`.
    #[default]
    Pearson,
    /// One score per line, in feature order.
    File(PathBuf),
    Scores(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    /// Contiguous blocks of `⌈m/k⌉` columns, the last party taking the
    /// remainder, optionally after a seeded column shuffle.
    Equal {
        k: usize,
        #[serde(default)]
        shuffle: bool,
        #[serde(default)]
        seed: u64,
    },
    /// Image tiles; parties in row-major tile order.
    Grid {
        row_blocks: usize,
        col_blocks: usize,
    },
    /// Two parties. The top `dominant_fraction` of features by importance are
    /// dominant; `host_share` of them (rounded down) go to the host, the rest
    /// to the guest. Remaining features are dealt to whichever party holds
    /// fewer.
    Biased {
        dominant_fraction: f64,
        host_share: f64,
        #[serde(default)]
        importance: ImportanceSource,
        #[serde(default)]
        seed: u64,
    },
    Explicit {
        groups: Vec<Vec<usize>>,
    },
}

impl PartitionSpec {
    pub fn num_parties(&self) -> usize {
        match self {
            PartitionSpec::Equal { k, .. } => *k,
            PartitionSpec::Grid { row_blocks, col_blocks } => row_blocks * col_blocks,
            PartitionSpec::Biased { .. } => 2,
            PartitionSpec::Explicit { groups } => groups.len(),
        }
    }
}

/// Sizes of `parts` near-equal pieces of `len`, larger pieces first.
fn balanced_sizes(len: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| len / parts + usize::from(i < len % parts)).collect()
}

/// `|Pearson(feature, label)|` per column, clamped to `[0, 1]`. Zero-variance
/// features score 0.
pub fn importance_scores(ds: &RawDataset) -> Result<Vec<f64>> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::InvalidInput(format!("importance scores need n >= 2, got {n}")));
    }
    let y = &ds.labels;
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_ss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let means = ds.features.col_means();
    let mut cov = vec![0.0; ds.m()];
    let mut ss = vec![0.0; ds.m()];
    for (row, yi) in ds.features.row_iter().zip(y) {
        for (c, v) in row.iter().enumerate() {
            let d = v - means[c];
            cov[c] += d * (yi - y_mean);
            ss[c] += d * d;
        }
    }
    Ok(cov
        .iter()
        .zip(&ss)
        .map(|(c, s)| {
            if *s > 0.0 && y_ss > 0.0 {
                (c / (s * y_ss).sqrt()).abs().min(1.0)
            } else {
                0.0
            }
        })
        .collect())
}

fn resolve_importance(ds: &RawDataset, source: &ImportanceSource) -> Result<Vec<f64>> {
    let scores = match source {
        ImportanceSource::Pearson => return importance_scores(ds),
        ImportanceSource::File(path) => load_importance_file(path)?,
        ImportanceSource::Scores(s) => s.clone(),
    };
    if scores.len() != ds.m() {
        return Err(Error::dim("importance scores", ds.m(), scores.len()));
    }
    Ok(scores)
}

/// Column groups, one per party, each sorted ascending.
pub fn partition_columns(ds: &RawDataset, spec: &PartitionSpec) -> Result<Vec<Vec<usize>>> {
    let m = ds.m();
    let groups = match spec {
        PartitionSpec::Equal { k, shuffle, seed } => {
            let k = *k;
            if k == 0 || k > m {
                return Err(Error::Config(format!(
                    "equal division needs 1 <= k <= m = {m}, got {k}"
                )));
            }
            let mut cols: Vec<usize> = (0..m).collect();
            if *shuffle {
                cols.shuffle(&mut rng_for(*seed, stream::DATA));
            }
            let block = m.div_ceil(k);
            let groups: Vec<Vec<usize>> = (0..k)
                .map(|p| cols[(p * block).min(m)..((p + 1) * block).min(m)].to_vec())
                .collect();
            if let Some(p) = groups.iter().position(Vec::is_empty) {
                return Err(Error::Config(format!(
                    "equal division of {m} features into {k} blocks of {block} leaves party {p} empty"
                )));
            }
            groups
        }
        PartitionSpec::Grid { row_blocks, col_blocks } => {
            let (rows, cols) = ds
                .grid
                .ok_or_else(|| Error::Config("grid division needs a dataset with a grid shape".into()))?;
            if *row_blocks == 0 || *col_blocks == 0 || *row_blocks > rows || *col_blocks > cols {
                return Err(Error::Config(format!(
                    "grid division {row_blocks}x{col_blocks} does not fit a {rows}x{cols} grid"
                )));
            }
            let rs = balanced_sizes(rows, *row_blocks);
            let cs = balanced_sizes(cols, *col_blocks);
            let mut groups = Vec::new();
            let mut r0 = 0;
            for rh in &rs {
                let mut c0 = 0;
                for cw in &cs {
                    let mut g = Vec::with_capacity(rh * cw);
                    for r in r0..r0 + rh {
                        g.extend((c0..c0 + cw).map(|c| r * cols + c));
                    }
                    groups.push(g);
                    c0 += cw;
                }
                r0 += rh;
            }
            groups
        }
        PartitionSpec::Biased {
            dominant_fraction,
            host_share,
            importance,
            seed,
        } => {
            for (name, v) in [("dominant fraction", dominant_fraction), ("host share", host_share)] {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
                }
            }
            let scores = resolve_importance(ds, importance)?;
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
            let count = (dominant_fraction * m as f64).round() as usize;
            let mut rng = rng_for(*seed, stream::DATA);
            let mut dominant = order[..count].to_vec();
            dominant.shuffle(&mut rng);
            let to_host = (host_share * count as f64).floor() as usize;
            let mut host = dominant[..to_host].to_vec();
            let mut guest = dominant[to_host..].to_vec();
            let mut rest = order[count..].to_vec();
            rest.shuffle(&mut rng);
            for c in rest {
                if host.len() <= guest.len() {
                    host.push(c);
                } else {
                    guest.push(c);
                }
            }
            vec![host, guest]
        }
        PartitionSpec::Explicit { groups } => {
            let mut seen = vec![false; m];
            for g in groups {
                for &c in g {
                    if c >= m {
                        return Err(Error::Config(format!("explicit division names column {c} but m = {m}")));
                    }
                    if std::mem::replace(&mut seen[c], true) {
                        return Err(Error::Config(format!("explicit division assigns column {c} twice")));
                    }
                }
            }
            if let Some(c) = seen.iter().position(|s| !s) {
                return Err(Error::Config(format!("explicit division leaves column {c} unassigned")));
            }
            if groups.iter().any(Vec::is_empty) {
                return Err(Error::Config("explicit division has an empty party".into()));
            }
            groups.clone()
        }
    };
    Ok(groups
        .into_iter()
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect())
}

/// Row-aligned per-party feature matrices; labels stay with party 0.
pub fn partition_features(ds: &RawDataset, spec: &PartitionSpec) -> Result<PartitionedDataset> {
    let groups = partition_columns(ds, spec)?;
    PartitionedDataset::from_groups(ds, &groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;
    use crate::matrix::DenseMatrix;

    fn ds(n: usize, m: usize) -> RawDataset {
        let f = DenseMatrix::from_vec(n, m, (0..n * m).map(|v| v as f64).collect()).unwrap();
        RawDataset::new(f, (0..n).map(|i| (i % 2) as f64).collect(), Task::Binary).unwrap()
    }

    fn assert_exhaustive(groups: &[Vec<usize>], m: usize) {
        let mut all: Vec<usize> = groups.concat();
        all.sort_unstable();
        assert_eq!(all, (0..m).collect::<Vec<_>>());
    }

    #[test]
    fn equal_contiguous() {
        let g = partition_columns(
            &ds(2, 10),
            &PartitionSpec::Equal {
                k: 2,
                shuffle: false,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(g, vec![(0..5).collect::<Vec<_>>(), (5..10).collect()]);
        let g = partition_columns(
            &ds(2, 10),
            &PartitionSpec::Equal {
                k: 3,
                shuffle: false,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(g.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let g = partition_columns(
            &ds(2, 10),
            &PartitionSpec::Equal {
                k: 3,
                shuffle: true,
                seed: 9,
            },
        )
        .unwrap();
        assert_exhaustive(&g, 10);
        assert!(partition_columns(
            &ds(2, 10),
            &PartitionSpec::Equal {
                k: 11,
                shuffle: false,
                seed: 0
            }
        )
        .is_err());
        assert!(partition_columns(
            &ds(2, 10),
            &PartitionSpec::Equal {
                k: 4,
                shuffle: false,
                seed: 0
            }
        )
        .is_ok());
        assert!(partition_columns(
            &ds(2, 10),
            &PartitionSpec::Equal {
                k: 6,
                shuffle: false,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn grid_quadrants_of_28x28() {
        let d = ds(1, 784).with_grid(28, 28).unwrap();
        let g = partition_columns(
            &d,
            &PartitionSpec::Grid {
                row_blocks: 2,
                col_blocks: 2,
            },
        )
        .unwrap();
        assert!(g.iter().all(|p| p.len() == 196));
        let expected: Vec<usize> = (0..14).flat_map(|r| (0..14).map(move |c| r * 28 + c)).collect();
        assert_eq!(g[0], expected);
        assert_eq!(g[1][0], 14);
        assert_eq!(g[2][0], 14 * 28);
        assert_exhaustive(&g, 784);
        assert!(partition_columns(
            &ds(1, 4),
            &PartitionSpec::Grid {
                row_blocks: 1,
                col_blocks: 2
            }
        )
        .is_err());
    }

    #[test]
    fn biased_host_takes_all_dominant() {
        let scores: Vec<f64> = (0..10).map(|c| if c == 3 || c == 7 { 1.0 } else { 0.1 }).collect();
        let spec = PartitionSpec::Biased {
            dominant_fraction: 0.2,
            host_share: 1.0,
            importance: ImportanceSource::Scores(scores.clone()),
            seed: 4,
        };
        let g = partition_columns(&ds(3, 10), &spec).unwrap();
        assert!(g[0].contains(&3) && g[0].contains(&7));
        assert_eq!((g[0].len(), g[1].len()), (5, 5));
        assert_exhaustive(&g, 10);
        let spec = PartitionSpec::Biased {
            dominant_fraction: 0.2,
            host_share: 0.0,
            importance: ImportanceSource::Scores(scores),
            seed: 4,
        };
        let g = partition_columns(&ds(3, 10), &spec).unwrap();
        assert!(g[1].contains(&3) && g[1].contains(&7));
    }

    #[test]
    fn explicit_validation() {
        let d = ds(1, 4);
        let ok = PartitionSpec::Explicit {
            groups: vec![vec![3, 0], vec![1, 2]],
        };
        assert_eq!(partition_columns(&d, &ok).unwrap(), vec![vec![0, 3], vec![1, 2]]);
        for bad in [
            vec![vec![0, 1], vec![1, 2, 3]],
            vec![vec![0, 1], vec![2]],
            vec![vec![0, 1, 2, 3], vec![]],
        ] {
            assert!(partition_columns(&d, &PartitionSpec::Explicit { groups: bad }).is_err());
        }
    }

    #[test]
    fn importance_examples() {
        let f = DenseMatrix::from_rows(&[[0.0, 5.0], [1.0, 5.0], [1.0, 5.0], [0.0, 5.0]]).unwrap();
        let d = RawDataset::new(f, vec![0.0, 1.0, 1.0, 0.0], Task::Binary).unwrap();
        assert_eq!(importance_scores(&d).unwrap(), vec![1.0, 0.0]);
        assert!(importance_scores(&d.select_rows(&[0])).is_err());
    }

    #[test]
    fn spec_json_rejects_unknown_keys() {
        let s: PartitionSpec = serde_json::from_str(r#"{"variant":"equal","k":3}"#).unwrap();
        assert_eq!(
            s,
            PartitionSpec::Equal {
                k: 3,
                shuffle: false,
                seed: 0
            }
        );
        assert!(serde_json::from_str::<PartitionSpec>(r#"{"variant":"equal","k":3,"kk":1}"#).is_err());
    }

    #[test]
    fn partitions_are_disjoint_and_exhaustive() {
        use proptest::prelude::*;
        proptest!(|(m in 2usize..40, k in 1usize..6, seed in any::<u64>(), p in 0.0f64..=1.0, a in 0.0f64..=1.0)| {
            let d = ds(3, m);
            if let Ok(g) = partition_columns(&d, &PartitionSpec::Equal { k, shuffle: true, seed }) {
                assert_exhaustive(&g, m);
            }
            let g = partition_columns(&d, &PartitionSpec::Biased {
                dominant_fraction: p, host_share: a, importance: ImportanceSource::Pearson, seed,
            }).unwrap();
            assert_exhaustive(&g, m);
        });
    }
}
