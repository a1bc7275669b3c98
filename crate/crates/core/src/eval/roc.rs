use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::baselines::StuteFit;
use crate::data::ColumnRole;
use crate::error::{GxeError, Result};
use crate::robust::SolutionSurface;
use crate::sim::GroundTruth;

/// Interaction coefficients along a penalized path, original scale.
///
/// A missing (failed) fit reads as all-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionPath {
    pub n_genes: usize,
    pub q: usize,
    pub n_lambda: usize,
    pub n_slices: usize,
    gamma: Vec<f64>,
}

impl InteractionPath {
    fn offset(&self, gene: usize, lambda_idx: usize, theta_idx: usize) -> usize {
        ((gene * self.n_slices + theta_idx) * self.n_lambda + lambda_idx) * self.q
    }

    pub fn gamma(&self, gene: usize, env: usize, lambda_idx: usize, theta_idx: usize) -> f64 {
        self.gamma[self.offset(gene, lambda_idx, theta_idx) + env]
    }

    pub fn from_surface(surface: &SolutionSurface) -> InteractionPath {
        let columns: Vec<(usize, usize)> = surface
            .roles
            .iter()
            .enumerate()
            .filter_map(|(k, r)| match r {
                ColumnRole::Interaction(e) => Some((*e, k)),
                _ => None,
            })
            .collect();
        let mut path = InteractionPath {
            n_genes: surface.n_genes,
            q: columns.len(),
            n_lambda: surface.n_lambda(),
            n_slices: surface.n_slices(),
            gamma: vec![0.0; surface.n_genes * surface.n_slices() * surface.n_lambda() * columns.len()],
        };
        for gene in 0..path.n_genes {
            for t in 0..path.n_slices {
                for l in 0..path.n_lambda {
                    if let Some(fit) = surface.get(gene, l, t) {
                        let at = path.offset(gene, l, t);
                        for &(e, k) in &columns {
                            path.gamma[at + e] = fit.zeta[k];
                        }
                    }
                }
            }
        }
        path
    }

    /// Reads a surface CSV (with or without the leading `method` column).
    /// Returns the method tag when present; a file holding several methods is rejected.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<(Option<String>, InteractionPath)> {
        let path = path.as_ref();
        let parse_err = |line: u64, message: String| GxeError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let tagged = header.first().map(String::as_str) == Some("method");
        let base = usize::from(tagged);
        let expected = ["gene", "lambda_idx", "theta_idx", "coef_name", "value", "converged", "kkt_residual"];
        if header.len() != expected.len() + base || header[base..] != expected {
            return Err(parse_err(1, format!("expected header {}{}", if tagged { "method," } else { "" }, expected.join(","))));
        }
        let mut method: Option<String> = None;
        let mut entries = HashMap::new();
        let (mut genes, mut lambdas, mut slices, mut q) = (0, 0, 0, 0);
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != header.len() {
                return Err(parse_err(line, format!("expected {} cells, found {}", header.len(), record.len())));
            }
            if tagged {
                let tag = record[0].trim();
                match &method {
                    None => method = Some(tag.to_string()),
                    Some(m) if m != tag => {
                        return Err(parse_err(line, format!("file mixes methods `{m}` and `{tag}`")));
                    }
                    _ => {}
                }
            }
            let int = |i: usize| -> Result<usize> {
                record[base + i]
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(line, format!("invalid {} `{}`", expected[i], &record[base + i])))
            };
            let gene = int(0)?;
            if gene == 0 {
                return Err(parse_err(line, "genes are numbered from 1".into()));
            }
            let (l, t) = (int(1)?, int(2)?);
            let name = record[base + 3].trim();
            let Some(env) = name.strip_prefix("gene:e").and_then(|k| k.parse::<usize>().ok()) else {
                continue;
            };
            if env == 0 {
                return Err(parse_err(line, format!("invalid coefficient name `{name}`")));
            }
            let value: f64 = record[base + 4]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("invalid value `{}`", &record[base + 4])))?;
            genes = genes.max(gene);
            lambdas = lambdas.max(l + 1);
            slices = slices.max(t + 1);
            q = q.max(env);
            entries.insert((gene - 1, l, t, env - 1), value);
        }
        if entries.is_empty() {
            return Err(parse_err(1, "no interaction coefficients found".into()));
        }
        let mut out = InteractionPath {
            n_genes: genes,
            q,
            n_lambda: lambdas,
            n_slices: slices,
            gamma: vec![0.0; genes * slices * lambdas * q],
        };
        for ((g, l, t, e), v) in entries {
            let at = out.offset(g, l, t) + e;
            out.gamma[at] = v;
        }
        Ok((method, out))
    }
}

/// One candidate (gene, env) pair and its score; higher ranks first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedPair {
    pub gene: usize,
    pub env: usize,
    /// Compared lexicographically.
    pub score: [f64; 2],
}

fn score_order(a: &[f64; 2], b: &[f64; 2]) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

/// All `p q` candidate pairs in non-increasing score order.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRanking {
    pub method: String,
    pub n_genes: usize,
    pub q: usize,
    pub pairs: Vec<RankedPair>,
    /// How ties are handled, for the record.
    pub tie_policy: &'static str,
}

pub const TIE_POLICY: &str = "equal scores share one ROC threshold; listed by (gene, env)";

impl InteractionRanking {
    /// Ranking from raw scores, `scores[gene * q + env]`.
    pub fn from_scores(method: &str, n_genes: usize, q: usize, scores: &[[f64; 2]]) -> Result<InteractionRanking> {
        if n_genes == 0 || q == 0 || scores.len() != n_genes * q {
            return Err(GxeError::Evaluation(format!(
                "need {} scores for {n_genes} genes x {q} envs, got {}",
                n_genes * q,
                scores.len()
            )));
        }
        let mut pairs: Vec<RankedPair> = scores
            .iter()
            .enumerate()
            .map(|(i, &score)| RankedPair {
                gene: i / q,
                env: i % q,
                score,
            })
            .collect();
        pairs.sort_by(|a, b| score_order(&b.score, &a.score).then((a.gene, a.env).cmp(&(b.gene, b.env))));
        Ok(InteractionRanking {
            method: method.to_string(),
            n_genes,
            q,
            pairs,
            tie_policy: TIE_POLICY,
        })
    }

    pub fn top(&self, k: usize) -> &[RankedPair] {
        &self.pairs[..k.min(self.pairs.len())]
    }
}

/// Entry-lambda ranking of one theta slice: pairs score by how early on the
/// path their coefficient first turns nonzero, then by `|gamma|` at `lambda_min`.
pub fn rank_interactions(path: &InteractionPath, theta_idx: usize, method: &str) -> Result<InteractionRanking> {
    if path.n_genes == 0 || path.n_lambda == 0 || path.q == 0 {
        return Err(GxeError::Evaluation("empty solution surface".into()));
    }
    if theta_idx >= path.n_slices {
        return Err(GxeError::Evaluation(format!(
            "theta slice {theta_idx} out of range (surface has {})",
            path.n_slices
        )));
    }
    let last = path.n_lambda - 1;
    let mut scores = Vec::with_capacity(path.n_genes * path.q);
    for gene in 0..path.n_genes {
        for env in 0..path.q {
            let entry = (0..path.n_lambda).find(|&l| path.gamma(gene, env, l, theta_idx) != 0.0);
            let primary = entry.map_or(0.0, |l| (path.n_lambda - l) as f64);
            scores.push([primary, path.gamma(gene, env, last, theta_idx).abs()]);
        }
    }
    InteractionRanking::from_scores(method, path.n_genes, path.q, &scores)
}

/// Stute ranking by `1 - p`, then `|Wald|`; genes whose fit failed rank last.
pub fn rank_stute(fits: &[Result<StuteFit>], q: usize) -> Result<InteractionRanking> {
    let mut scores = Vec::with_capacity(fits.len() * q);
    for fit in fits {
        match fit {
            Ok(f) => scores.extend((0..q).map(|e| [1.0 - f.p_values[e], f.wald[e].abs()])),
            Err(_) => scores.extend((0..q).map(|_| [-1.0, 0.0])),
        }
    }
    InteractionRanking::from_scores("stute", fits.len(), q, &scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            writeln!(out, "{f:.16e},{t:.16e}").unwrap();
        }
        out
    }
}

/// ROC over all distinct score thresholds, with trapezoidal AUC.
pub fn roc_from_labels(ranking: &InteractionRanking, is_true: impl Fn(usize, usize) -> bool) -> Result<RocCurve> {
    let labels: Vec<bool> = ranking.pairs.iter().map(|p| is_true(p.gene, p.env)).collect();
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 {
        return Err(GxeError::Evaluation("no true interactions: AUC undefined".into()));
    }
    if negatives == 0 {
        return Err(GxeError::Evaluation("no null interactions: AUC undefined".into()));
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < labels.len() {
        let mut j = i;
        while j < labels.len() && score_order(&ranking.pairs[j].score, &ranking.pairs[i].score) == Ordering::Equal {
            if labels[j] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let next = (fp as f64 / negatives as f64, tp as f64 / positives as f64);
        let prev = *points.last().unwrap();
        auc += (next.0 - prev.0) * (next.1 + prev.1) / 2.0;
        points.push(next);
        i = j;
    }
    Ok(RocCurve { points, auc })
}

/// [`roc_from_labels`] against the truth's interactions, which must all be candidates.
pub fn roc_auc(ranking: &InteractionRanking, truth: &GroundTruth) -> Result<RocCurve> {
    if let Some(&(g, e, _)) = truth
        .interactions
        .iter()
        .find(|&&(g, e, _)| g >= ranking.n_genes || e >= ranking.q)
    {
        return Err(GxeError::Evaluation(format!(
            "true interaction gene {} x e{} is not among the {} x {} candidates",
            g + 1,
            e + 1,
            ranking.n_genes,
            ranking.q
        )));
    }
    roc_from_labels(ranking, |g, e| truth.is_interaction(g, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truth_with(pairs: &[(usize, usize)]) -> GroundTruth {
        GroundTruth {
            env_main: vec![1.0],
            gene_main: Vec::new(),
            interactions: pairs.iter().map(|&(g, e)| (g, e, 1.0)).collect(),
        }
    }

    #[test]
    fn hand_enumerated_four_candidates() {
        // candidates A..D are genes 0..3 with one env; ranking B, A, C, D
        let ranking = InteractionRanking::from_scores("x", 4, 1, &[[3.0, 0.0], [4.0, 0.0], [2.0, 0.0], [1.0, 0.0]]).unwrap();
        let roc = roc_auc(&ranking, &truth_with(&[(0, 0)])).unwrap();
        assert_eq!(
            roc.points,
            vec![(0.0, 0.0), (1.0 / 3.0, 0.0), (1.0 / 3.0, 1.0), (2.0 / 3.0, 1.0), (1.0, 1.0)]
        );
        assert!((roc.auc - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_reversed_and_tied() {
        let truth = truth_with(&[(0, 0), (1, 0)]);
        let perfect = InteractionRanking::from_scores("x", 4, 1, &[[4.0, 0.0], [3.0, 0.0], [2.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(roc_auc(&perfect, &truth).unwrap().auc, 1.0);
        let reversed = InteractionRanking::from_scores("x", 4, 1, &[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]]).unwrap();
        assert_eq!(roc_auc(&reversed, &truth).unwrap().auc, 0.0);
        let tied = InteractionRanking::from_scores("x", 4, 1, &[[0.0, 0.0]; 4]).unwrap();
        assert_eq!(roc_auc(&tied, &truth).unwrap().auc, 0.5);
    }

    #[test]
    fn auc_plus_reversal_is_one_and_monotone_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth = truth_with(&[(1, 0), (5, 1), (7, 0)]);
        for _ in 0..20 {
            let raw: Vec<[f64; 2]> = (0..20).map(|_| [f64::from(rng.random_range(0..6u8)), 0.0]).collect();
            let a = roc_auc(&InteractionRanking::from_scores("x", 10, 2, &raw).unwrap(), &truth).unwrap().auc;
            let rev: Vec<[f64; 2]> = raw.iter().map(|s| [-s[0], 0.0]).collect();
            let b = roc_auc(&InteractionRanking::from_scores("x", 10, 2, &rev).unwrap(), &truth).unwrap().auc;
            assert!((a + b - 1.0).abs() < 1e-12);
            let cubed: Vec<[f64; 2]> = raw.iter().map(|s| [s[0].powi(3) + 7.0, 0.0]).collect();
            let c = roc_auc(&InteractionRanking::from_scores("x", 10, 2, &cubed).unwrap(), &truth).unwrap().auc;
            assert_eq!(a, c);
        }
    }

    #[test]
    fn missing_truth_is_an_error() {
        let ranking = InteractionRanking::from_scores("x", 2, 1, &[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(roc_auc(&ranking, &truth_with(&[])).is_err());
        assert!(roc_auc(&ranking, &truth_with(&[(5, 0)])).is_err());
    }
}
