//! End-to-end pipeline: mask, infill, predict, aggregate.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::backends::{conforming_infill, BackendError, InfillDiagnostics, Infiller, Label, MaskTokenInfiller, Predictor};
use crate::estimator::{score, EstimateError, Perturbation, PerturbedInstance, ScoreSet, Source};
use crate::sampler::{derive_seed, draw_plan_with_id, doc_id, NeighborhoodConfig, SampleSpec, SamplerError, ScoringMode};
use crate::scalar::Scalar;
use crate::text::{render_masked, tokenize, MaskRender, TextError, TokenizedDoc};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("prediction is negative; explanations are defined for the positive class only")]
    NegativePrediction,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Text(#[from] TextError),
}

#[derive(Debug, Clone)]
pub struct Explanation<T> {
    pub doc: TokenizedDoc,
    pub scores: ScoreSet<T>,
    pub corpus: Vec<PerturbedInstance>,
    pub plan_seed: u64,
    pub diagnostics: InfillDiagnostics,
}

/// Unlabeled perturbations of one document.
#[derive(Debug, Clone)]
pub struct PerturbationSet {
    pub plan_seed: u64,
    pub perturbations: Vec<Perturbation>,
    pub diagnostics: InfillDiagnostics,
}

fn source_for(cfg: &NeighborhoodConfig) -> Source {
    match cfg.scoring_mode {
        ScoringMode::Infill => Source::Infill,
        ScoringMode::MaskToken => Source::MaskToken,
    }
}

/// Draw the plan for `doc` and generate one text per subset, plus the
/// full-set baseline pool when enabled.
///
/// Subsets sharing a masked rendering are infilled in one request.
pub fn perturb(
    doc: &TokenizedDoc,
    id: &str,
    infiller: &dyn Infiller,
    cfg: &NeighborhoodConfig,
) -> Result<PerturbationSet, ExplainError> {
    let plan = draw_plan_with_id(doc, cfg, id)?;
    let infiller: &dyn Infiller = match cfg.scoring_mode {
        ScoringMode::Infill => infiller,
        ScoringMode::MaskToken => &MaskTokenInfiller,
    };

    let mut groups: Vec<(MaskRender, Vec<usize>)> = Vec::new();
    let mut by_text: HashMap<String, usize> = HashMap::new();
    for (idx, spec) in plan.subsets.iter().enumerate() {
        let render = render_masked(doc, &spec.subset, &cfg.mask_token, cfg.merge_consecutive)?;
        match by_text.get(&render.masked_text) {
            Some(&g) => groups[g].1.push(idx),
            None => {
                by_text.insert(render.masked_text.clone(), groups.len());
                groups.push((render, vec![idx]));
            }
        }
    }

    let outcomes = groups
        .par_iter()
        .map(|(render, members)| {
            let seed = derive_seed(plan.seed_used, &[b"infill", render.masked_text.as_bytes()]);
            conforming_infill(
                infiller,
                render,
                members.len(),
                seed,
                cfg.infill_len_min,
                cfg.infill_len_max,
                Some(doc),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let source = source_for(cfg);
    let mut texts: Vec<Option<String>> = vec![None; plan.subsets.len()];
    let mut diagnostics = InfillDiagnostics::default();
    for ((_, members), outcome) in groups.iter().zip(outcomes) {
        diagnostics.merge(&outcome.diagnostics);
        for (&idx, text) in members.iter().zip(outcome.texts) {
            texts[idx] = Some(text);
        }
    }
    let mut perturbations: Vec<Perturbation> = plan
        .subsets
        .into_iter()
        .zip(texts)
        .map(|(spec, text)| Perturbation {
            spec,
            text: text.expect("every subset infilled"),
            source,
        })
        .collect();

    let pool = cfg.baseline_size();
    if pool > 0 {
        let all: BTreeSet<usize> = (0..doc.n()).collect();
        let render = render_masked(doc, &all, &cfg.mask_token, cfg.merge_consecutive)?;
        let seed = derive_seed(plan.seed_used, &[b"baseline"]);
        let outcome = conforming_infill(infiller, &render, pool, seed, cfg.infill_len_min, cfg.infill_len_max, None)?;
        diagnostics.merge(&outcome.diagnostics);
        perturbations.extend(outcome.texts.into_iter().map(|text| Perturbation {
            spec: SampleSpec::new(all.clone()),
            text,
            source: Source::FullSetBaseline,
        }));
    }

    Ok(PerturbationSet {
        plan_seed: plan.seed_used,
        perturbations,
        diagnostics,
    })
}

/// Attach labels from one batched prediction pass.
pub fn label_all(
    perturbations: Vec<Perturbation>,
    predictor: &dyn Predictor,
) -> Result<Vec<PerturbedInstance>, BackendError> {
    let texts: Vec<String> = perturbations.iter().map(|p| p.text.clone()).collect();
    let labels = predictor.predict_batch(&texts)?;
    if labels.len() != texts.len() {
        return Err(BackendError::Protocol(format!("{} labels for {} texts", labels.len(), texts.len())));
    }
    Ok(perturbations
        .into_iter()
        .zip(labels)
        .map(|(p, l)| PerturbedInstance::labeled(p, l))
        .collect())
}

/// Explain the positive prediction for `text`.
pub fn explain<T: Scalar>(
    text: &str,
    predictor: &dyn Predictor,
    infiller: &dyn Infiller,
    cfg: &NeighborhoodConfig,
) -> Result<Explanation<T>, ExplainError> {
    cfg.validate()?;
    let doc = tokenize(text);
    if doc.n() < 2 {
        return Err(SamplerError::TooShort { n: doc.n() }.into());
    }
    let base = predictor.predict_one(text)?;
    if base != Label::Positive {
        return Err(ExplainError::NegativePrediction);
    }
    let set = perturb(&doc, &doc_id(&doc), infiller, cfg)?;
    let corpus = label_all(set.perturbations, predictor)?;
    let scores = score(&doc, &corpus, base, cfg)?;
    Ok(Explanation {
        doc,
        scores,
        corpus,
        plan_seed: set.plan_seed,
        diagnostics: set.diagnostics,
    })
}
