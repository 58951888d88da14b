use crate::prompt::{Method, RenderedPrompt};
use crate::tags::{serialize_segments, TaggedSegment};
use crate::world::{count_value, supporting_needles, Query, TaskSample};

use super::{Model, ModelCall, ModelError};

/// The completion a perfectly obedient model would give.
///
/// Proposed prompts get tags over the supporting needles (every needle when
/// the sample has no event record), one bullet per tag, numbered steps and a
/// closing `Answer:` line. Other prompts get the bare target.
pub fn oracle_complete(sample: &TaskSample, prompt: &RenderedPrompt) -> Result<String, ModelError> {
    if sample.needles.is_empty() {
        return Err(ModelError::MissingNeedleMetadata);
    }
    if prompt.method != Method::Proposed {
        return Ok(sample.target.clone());
    }
    let chosen: Vec<usize> = match supporting_needles(sample) {
        Ok(idx) if !idx.is_empty() && idx.iter().all(|&i| i < sample.needles.len()) => idx,
        _ => (0..sample.needles.len()).collect(),
    };
    let segments: Vec<TaggedSegment> = chosen
        .iter()
        .map(|&i| {
            let n = &sample.needles[i];
            TaggedSegment::new(n.text.clone(), Some((n.percent * 10.0).round() / 10.0))
        })
        .collect();
    let answer = answer_sentence(sample);
    let mut out = serialize_segments(&segments);
    out.push_str("\n\n");
    for s in &segments {
        out.push_str(&format!("- {}\n", s.content));
    }
    out.push('\n');
    for (i, s) in segments.iter().enumerate() {
        out.push_str(&format!("Step {}: {}\n", i + 1, s.content));
    }
    out.push_str(&format!("Step {}: Therefore, {}\n", segments.len() + 1, lower_first(&answer)));
    out.push_str(&format!("\nAnswer: {answer}"));
    Ok(out)
}

fn answer_sentence(sample: &TaskSample) -> String {
    let t = &sample.target;
    match &sample.query {
        Some(Query::ObjectLocation { object }) => format!("The {object} is in the {t}."),
        Some(Query::HeldCount { person }) => match count_value(t) {
            Some(0) => format!("{person} is carrying none."),
            Some(1) => format!("{person} is carrying {t} object."),
            _ => format!("{person} is carrying {t} objects."),
        },
        Some(Query::PersonAt { person, location }) => match t.as_str() {
            "yes" => format!("Yes, {person} is in the {location}."),
            "no" => format!("No, {person} is not in the {location}."),
            _ => format!("Maybe, {person} could be in the {location}."),
        },
        None => t.clone(),
    }
}

fn lower_first(s: &str) -> String {
    match s.split_once(' ') {
        Some(("The" | "Yes," | "No," | "Maybe,", _)) => {
            let mut c = s.chars();
            c.next()
                .map(|f| f.to_lowercase().chain(c).collect())
                .unwrap_or_default()
        }
        _ => s.to_string(),
    }
}

/// Offline model answering from ground truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleModel;

impl Model for OracleModel {
    fn name(&self) -> &str {
        "oracle"
    }

    fn complete(&self, call: &ModelCall<'_>) -> Result<String, ModelError> {
        oracle_complete(call.sample, call.prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{build_baseline_prompt, build_emulated_rag_prompt, PromptOrder};
    use crate::tags::parse_model_output;
    use crate::world::{generate_sample, sequence, Fact, GenSpec, Needle, TaskId};

    fn apple_sample() -> TaskSample {
        let facts = [
            Fact::Grab { actor: "Mary".into(), object: "apple".into() },
            Fact::Move { actor: "Mary".into(), location: "kitchen".into() },
        ];
        let texts = ["Mary picked up the apple.", "Mary went to the kitchen."];
        let input = format!("The sun rose. {} Birds sang. {} The day ended.", texts[0], texts[1]);
        let needles = texts
            .iter()
            .map(|t| {
                let offset = input.find(t).unwrap();
                Needle { text: t.to_string(), offset, percent: 100.0 * offset as f64 / input.len() as f64 }
            })
            .collect();
        TaskSample {
            task: TaskId::Qa2,
            question: "Where is the apple?".into(),
            target: "kitchen".into(),
            input,
            needles,
            events: Some(sequence(facts)),
            query: Some(Query::ObjectLocation { object: "apple".into() }),
            seed: None,
        }
    }

    #[test]
    fn apple_trace() {
        let s = apple_sample();
        let p = build_emulated_rag_prompt(&s.input, &s.question, PromptOrder::Standard, true).unwrap();
        let out = oracle_complete(&s, &p).unwrap();
        assert_eq!(out.matches("<relevant_section").count(), 2);
        assert!(out.contains("Answer: The apple is in the kitchen"));
        assert_eq!(out, oracle_complete(&s, &p).unwrap());
        let parsed = parse_model_output(&out).unwrap();
        assert_eq!(parsed.segments.len(), 2);
        assert_eq!(parsed.summaries.len(), 2);
        assert_eq!(parsed.cot_steps.len(), 3);
        assert!(!parsed.answer_fallback);
        assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
    }

    #[test]
    fn baseline_gets_bare_target() {
        let mut s = apple_sample();
        s.target = "balcony".into();
        let p = build_baseline_prompt(&s.input, &s.question).unwrap();
        assert_eq!(oracle_complete(&s, &p).unwrap(), "balcony");
    }

    #[test]
    fn needles_required() {
        let mut s = apple_sample();
        s.needles.clear();
        let p = build_baseline_prompt(&s.input, &s.question).unwrap();
        assert_eq!(oracle_complete(&s, &p), Err(ModelError::MissingNeedleMetadata));
    }

    #[test]
    fn generated_answers_name_the_target() {
        for task in TaskId::ALL {
            for seed in 0..20 {
                let s = generate_sample(&GenSpec::new(task, 1500, seed)).unwrap();
                let p = build_emulated_rag_prompt(&s.input, &s.question, PromptOrder::RelevantFirst, true).unwrap();
                let parsed = parse_model_output(&oracle_complete(&s, &p).unwrap()).unwrap();
                assert!(parsed.final_answer.to_lowercase().contains(&s.target), "{task} {seed}");
            }
        }
    }
}
