//! Correlation with human ratings, inversion gaps and score histograms.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::judgment::HumanJudgment;
use super::score::Scorer;
use crate::augment::InversionBenchmark;
use crate::corpus::{Dataset, PairExample};
use crate::error::{Error, Result};

/// Sample Pearson correlation, computed in two passes around the means.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "pearson needs equal lengths, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::invalid("pearson needs at least 2 points"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("pearson input is not finite".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("pearson is undefined for zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionCorrelation {
    /// `None` when the group is too small or has no spread.
    pub r: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub criteria: BTreeMap<String, CriterionCorrelation>,
    /// Keyed by number of triples in the graph.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub by_graph_size: Option<BTreeMap<usize, BTreeMap<String, CriterionCorrelation>>>,
}

fn correlation_for<'a, I>(
    items: I,
    scores: &BTreeMap<String, f64>,
    criterion: &str,
) -> (Vec<f64>, Vec<f64>)
where
    I: Iterator<Item = &'a HumanJudgment>,
{
    items
        .filter_map(|j| Some((*scores.get(&j.id)?, *j.ratings.get(criterion)?)))
        .unzip()
}

/// Pearson r of `scores` against each criterion, over ids present in both.
pub fn correlate(
    scores: &BTreeMap<String, f64>,
    judgments: &[HumanJudgment],
    criteria: &[String],
    by_graph_size: bool,
) -> Result<CorrelationReport> {
    let matched: Vec<&HumanJudgment> = judgments
        .iter()
        .filter(|j| scores.contains_key(&j.id))
        .collect();
    if matched.is_empty() {
        return Err(Error::invalid("no judgment ids match the scored ids"));
    }
    let mut overall = BTreeMap::new();
    for c in criteria {
        let (xs, ys) = correlation_for(matched.iter().copied(), scores, c);
        if xs.is_empty() {
            return Err(Error::invalid(format!("no matched judgment rates `{c}`")));
        }
        let r = pearson(&xs, &ys)?;
        overall.insert(
            c.clone(),
            CriterionCorrelation {
                r: Some(r),
                n: xs.len(),
            },
        );
    }
    let by_size = by_graph_size.then(|| {
        let mut groups: BTreeMap<usize, Vec<&HumanJudgment>> = BTreeMap::new();
        for j in &matched {
            groups.entry(j.graph.len()).or_default().push(j);
        }
        groups
            .into_iter()
            .map(|(size, js)| {
                let per: BTreeMap<String, CriterionCorrelation> = criteria
                    .iter()
                    .map(|c| {
                        let (xs, ys) = correlation_for(js.iter().copied(), scores, c);
                        let r = pearson(&xs, &ys).ok();
                        (c.clone(), CriterionCorrelation { r, n: xs.len() })
                    })
                    .collect();
                (size, per)
            })
            .collect()
    });
    Ok(CorrelationReport {
        n: matched.len(),
        criteria: overall,
        by_graph_size: by_size,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InversionGapReport {
    pub n: usize,
    pub mean_gap: f64,
    /// Items whose inverted graph scores at least as high as the original.
    pub fraction_misordered: f64,
    pub gaps: Vec<f64>,
}

pub fn inversion_gap_eval<S: Scorer + ?Sized>(
    scorer: &S,
    benchmark: &InversionBenchmark,
) -> Result<InversionGapReport> {
    if benchmark.is_empty() {
        return Err(Error::invalid("inversion benchmark is empty"));
    }
    let gaps = benchmark
        .items
        .iter()
        .map(|it| {
            Ok(scorer.score(&it.text, &it.graph)? - scorer.score(&it.text, &it.inverted_graph)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = gaps.len();
    Ok(InversionGapReport {
        n,
        mean_gap: gaps.iter().sum::<f64>() / n as f64,
        fraction_misordered: gaps.iter().filter(|&&g| g <= 0.0).count() as f64 / n as f64,
        gaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` uniform edges over `[0, 1]`.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins scores over `[0, 1]`; 1.0 lands in the last bin and anything
    /// outside the range is clamped into the nearest end bin.
    pub fn from_scores(scores: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least 1 bin"));
        }
        let mut counts = vec![0usize; bins];
        for &s in scores {
            if !s.is_finite() {
                return Err(Error::Numerical(format!("score {s} is not finite")));
            }
            let b = ((s.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        Ok(Histogram { edges, counts })
    }

    /// `edge_low,edge_high,count` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("edge_low,edge_high,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

pub fn similarity_histogram<S: Scorer + ?Sized>(
    scorer: &S,
    dataset: &Dataset,
    bins: usize,
) -> Result<Histogram> {
    let scores = dataset
        .pairs()
        .iter()
        .map(|p| scorer.score(&p.text, &p.graph))
        .collect::<Result<Vec<f64>>>()?;
    Histogram::from_scores(&scores, bins)
}

/// Mismatched pairs: every text is joined to another pair's graph, via a
/// seeded shuffle followed by a one-step rotation so no pair keeps its own.
pub fn shuffled_pairs(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    if dataset.len() < 2 {
        return Err(Error::invalid("need at least 2 pairs to shuffle"));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(6);
    order.shuffle(&mut rng);
    let pairs = dataset.pairs();
    let mixed = (0..order.len())
        .map(|k| {
            let t = &pairs[order[k]];
            let g = &pairs[order[(k + 1) % order.len()]];
            PairExample::new(
                format!("{}|{}", t.id, g.id),
                g.graph.clone(),
                t.text.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(format!("{}-shuffled", dataset.name), mixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::InversionItem;
    use crate::metric::judgment::RatingScale;
    use crate::rdf::{RdfGraph, Triple};

    #[test]
    fn pearson_hand_case() {
        assert_eq!(
            pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap(),
            0.8
        );
    }

    #[test]
    fn pearson_signs_and_errors() {
        let xs = [0.5, 1.5, -2.0, 4.0];
        let lin: Vec<f64> = xs.iter().map(|x| 2.0 * x + 3.0).collect();
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &lin).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&xs, &[1.0; 4]).is_err());
        assert!(pearson(&[1.0], &[2.0]).is_err());
        assert!(pearson(&xs, &lin[..3]).is_err());
    }

    fn judgment(id: &str, size: usize, sa: f64, fl: f64) -> HumanJudgment {
        let triples = (0..size)
            .map(|k| Triple::new("a", format!("p{k}"), "b").unwrap())
            .collect();
        HumanJudgment::new(
            id,
            RdfGraph::new(triples).unwrap(),
            "text",
            BTreeMap::from([
                ("semantic_adequacy".to_string(), sa),
                ("fluency".to_string(), fl),
            ]),
            RatingScale::new(1.0, 3.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn correlate_identity_and_groups() {
        let js = vec![
            judgment("a", 1, 1.0, 2.0),
            judgment("b", 1, 2.0, 1.5),
            judgment("c", 2, 3.0, 2.5),
            judgment("d", 2, 1.5, 3.0),
            judgment("e", 2, 2.5, 1.0),
        ];
        let scores: BTreeMap<String, f64> = js
            .iter()
            .map(|j| (j.id.clone(), j.ratings["semantic_adequacy"]))
            .collect();
        let crit = vec!["semantic_adequacy".to_string(), "fluency".to_string()];
        let rep = correlate(&scores, &js, &crit, true).unwrap();
        assert_eq!(rep.n, 5);
        assert!((rep.criteria["semantic_adequacy"].r.unwrap() - 1.0).abs() < 1e-12);
        let groups = rep.by_graph_size.unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[&1]["fluency"].n, 2);
        assert_eq!(groups[&2]["fluency"].n, 3);

        let none: BTreeMap<String, f64> = BTreeMap::from([("zz".to_string(), 0.1)]);
        assert!(correlate(&none, &js, &crit, false).is_err());
    }

    fn bench() -> InversionBenchmark {
        let items = (0..4)
            .map(|i| {
                let g = RdfGraph::single(Triple::new(format!("s{i}"), "larger than", "o").unwrap());
                InversionItem {
                    id: format!("i{i}"),
                    text: "t".into(),
                    inverted_graph: RdfGraph::single(g.triples()[0].inverted()),
                    graph: g,
                }
            })
            .collect();
        InversionBenchmark { items }
    }

    #[test]
    fn inversion_gap_rules() {
        let plus = |_: &str, g: &RdfGraph| -> Result<f64> {
            Ok(if g.triples()[0].object() == "o" {
                0.6
            } else {
                0.5
            })
        };
        let rep = inversion_gap_eval(&plus, &bench()).unwrap();
        assert!((rep.mean_gap - 0.1).abs() < 1e-12);
        assert_eq!(rep.fraction_misordered, 0.0);

        let flat = |_: &str, _: &RdfGraph| -> Result<f64> { Ok(0.7) };
        let rep = inversion_gap_eval(&flat, &bench()).unwrap();
        assert_eq!(rep.mean_gap, 0.0);
        assert_eq!(rep.fraction_misordered, 1.0);

        assert!(inversion_gap_eval(&flat, &InversionBenchmark { items: vec![] }).is_err());
    }

    #[test]
    fn histogram_counts() {
        let h = Histogram::from_scores(&[0.3; 7], 10).unwrap();
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts.iter().sum::<usize>(), 7);
        let h = Histogram::from_scores(&[0.0, 0.5, 1.0], 2).unwrap();
        assert_eq!(h.counts, vec![1, 2]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
        assert!(h
            .to_csv()
            .starts_with("edge_low,edge_high,count\n0,0.5,1\n"));
        assert!(Histogram::from_scores(&[0.1], 0).is_err());
    }

    #[test]
    fn shuffled_pairs_never_keep_their_graph() {
        let d = crate::corpus::generate_toy_corpus(10, 3, 20, 2).unwrap();
        let s = shuffled_pairs(&d, 7).unwrap();
        assert_eq!(s.len(), d.len());
        for p in s.pairs() {
            let (t, g) = p.id.split_once('|').unwrap();
            assert_ne!(t, g);
        }
        assert_eq!(s, shuffled_pairs(&d, 7).unwrap());
    }
}
