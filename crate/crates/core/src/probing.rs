//! Distance checks over model embeddings.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{l2_distance, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityDistance {
    pub label: String,
    /// Mean L2 distance over unordered pairs of members.
    pub intra_mean_l2: f64,
    /// Mean L2 distance over member × non-member pairs.
    pub inter_mean_l2: f64,
    pub member_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityReport {
    pub communities: Vec<CommunityDistance>,
}

impl CommunityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,intra_mean_l2,inter_mean_l2,member_count\n");
        for c in &self.communities {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.label, c.intra_mean_l2, c.inter_mean_l2, c.member_count
            ));
        }
        out
    }
}

pub fn community_distances(
    embeddings: &Matrix,
    model_tags: &[BTreeSet<String>],
    labels: &[String],
) -> Result<CommunityReport> {
    let m = embeddings.rows();
    if model_tags.len() != m {
        return Err(Error::Domain(format!(
            "{} tag sets for {m} embedded models",
            model_tags.len()
        )));
    }
    let mut communities = Vec::with_capacity(labels.len());
    for label in labels {
        let (members, others): (Vec<usize>, Vec<usize>) =
            (0..m).partition(|&i| model_tags[i].contains(label));
        if members.len() < 2 {
            return Err(Error::Community {
                label: label.clone(),
                message: format!("has {} member(s), needs at least 2", members.len()),
            });
        }
        if others.is_empty() {
            return Err(Error::Community {
                label: label.clone(),
                message: "contains every model, so inter-community distance is undefined".into(),
            });
        }
        let mut intra = 0.0;
        let mut intra_pairs = 0usize;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                intra += l2_distance(embeddings.row(i), embeddings.row(j));
                intra_pairs += 1;
            }
        }
        let mut inter = 0.0;
        for &i in &members {
            for &j in &others {
                inter += l2_distance(embeddings.row(i), embeddings.row(j));
            }
        }
        communities.push(CommunityDistance {
            label: label.clone(),
            intra_mean_l2: intra / intra_pairs as f64,
            inter_mean_l2: inter / (members.len() * others.len()) as f64,
            member_count: members.len(),
        });
    }
    Ok(CommunityReport { communities })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbour {
    pub model: usize,
    pub distance: f64,
}

/// The `top_k` models closest to `model_id` (itself excluded), nearest first,
/// equal distances in index order.
pub fn nearest_models(
    embeddings: &Matrix,
    model_id: usize,
    top_k: usize,
) -> Result<Vec<Neighbour>> {
    let m = embeddings.rows();
    if model_id >= m {
        return Err(Error::Domain(format!("model {model_id} out of range")));
    }
    if top_k >= m {
        return Err(Error::Domain(format!(
            "top_k={top_k} must be below the model count {m}"
        )));
    }
    let query = embeddings.row(model_id);
    let mut all: Vec<Neighbour> = (0..m)
        .filter(|&i| i != model_id)
        .map(|i| Neighbour {
            model: i,
            distance: l2_distance(query, embeddings.row(i)),
        })
        .collect();
    all.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.model.cmp(&b.model))
    });
    all.truncate(top_k);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn tags(spec: &[&[&str]]) -> Vec<BTreeSet<String>> {
        spec.iter()
            .map(|t| t.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn identical_embeddings_have_zero_distances() {
        let e = Matrix::from_rows(&vec![vec![1.0, 2.0]; 4]);
        let t = tags(&[&["a"], &["a"], &[], &["b"]]);
        let r = community_distances(&e, &t, &["a".into()]).unwrap();
        assert_eq!(r.communities[0].intra_mean_l2, 0.0);
        assert_eq!(r.communities[0].inter_mean_l2, 0.0);
    }

    #[test]
    fn four_point_hand_instance() {
        // members 0,1 at (0,0),(3,4); others (0,1),(6,8)
        let e = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![3.0, 4.0],
            vec![0.0, 1.0],
            vec![6.0, 8.0],
        ]);
        let t = tags(&[&["c"], &["c"], &[], &[]]);
        let r = community_distances(&e, &t, &["c".into()]).unwrap();
        let c = &r.communities[0];
        assert_eq!(c.member_count, 2);
        assert!((c.intra_mean_l2 - 5.0).abs() < 1e-12);
        // d(0,2)=1, d(0,3)=10, d(1,2)=sqrt(9+9), d(1,3)=5
        let expect = (1.0 + 10.0 + 18f64.sqrt() + 5.0) / 4.0;
        assert!((c.inter_mean_l2 - expect).abs() < 1e-12);
    }

    #[test]
    fn singleton_community_is_named_in_error() {
        let e = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let t = tags(&[&["solo"], &[], &[]]);
        match community_distances(&e, &t, &["solo".into()]) {
            Err(Error::Community { label, .. }) => assert_eq!(label, "solo"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn separated_clusters() {
        let mut rng = rng_from_seed(3);
        let mut rows = Vec::new();
        for c in 0..2 {
            for _ in 0..6 {
                let jitter: Vec<f64> = (0..3)
                    .map(|_| 0.1 * rng.random_range(-1.0..1.0) / 3f64.sqrt())
                    .collect();
                rows.push(vec![10.0 * c as f64 + jitter[0], jitter[1], jitter[2]]);
            }
        }
        let e = Matrix::from_rows(&rows);
        let t: Vec<BTreeSet<String>> = (0..12)
            .map(|i| [if i < 6 { "left" } else { "right" }.to_string()].into())
            .collect();
        let r = community_distances(&e, &t, &["left".into(), "right".into()]).unwrap();
        for c in &r.communities {
            assert!(c.intra_mean_l2 < 0.25 && c.inter_mean_l2 > 9.5);
        }
    }

    #[test]
    fn nearest_models_ordering() {
        let e = Matrix::from_rows(&[vec![0.0], vec![2.0], vec![0.0], vec![-1.0], vec![1.0]]);
        let r = nearest_models(&e, 0, 4).unwrap();
        let order: Vec<usize> = r.iter().map(|n| n.model).collect();
        assert_eq!(order, vec![2, 3, 4, 1]);
        assert_eq!(r[0].distance, 0.0);
        assert!(nearest_models(&e, 0, 5).is_err());
    }

    #[test]
    fn nearest_matches_full_sort_oracle() {
        let mut rng = rng_from_seed(9);
        let rows: Vec<Vec<f64>> = (0..25)
            .map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let e = Matrix::from_rows(&rows);
        for q in 0..25 {
            let mut oracle: Vec<(f64, usize)> = (0..25)
                .filter(|&i| i != q)
                .map(|i| {
                    (
                        (0..4)
                            .map(|k| (rows[q][k] - rows[i][k]).powi(2))
                            .sum::<f64>()
                            .sqrt(),
                        i,
                    )
                })
                .collect();
            oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let got = nearest_models(&e, q, 7).unwrap();
            let want: Vec<usize> = oracle[..7].iter().map(|p| p.1).collect();
            assert_eq!(got.iter().map(|n| n.model).collect::<Vec<_>>(), want);
        }
    }
}
