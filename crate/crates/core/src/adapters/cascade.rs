//! Captioner followed by a text-only language model.

use std::sync::Arc;

use super::{check_dialogue, AdapterError, Capabilities, ModelAdapter, Reply, Request, RequestContext, Stage, StageTrace};
use crate::protocol::Turn;
use crate::templates::CAPTION_PROMPT;

/// Stage-two prompt given a caption and a question.
pub fn cascade_prompt(caption: &str, question: &str) -> String {
    format!("Audio description: {caption}\nQuestion: {question}\nAnswer yes or no.")
}

fn tag(stage: Stage) -> impl FnOnce(AdapterError) -> AdapterError {
    move |e| AdapterError::Stage { stage, source: Box::new(e) }
}

/// Captions the audio, then asks `llm` the question about the caption.
pub fn cascade_respond(
    captioner: &dyn ModelAdapter,
    llm: &dyn ModelAdapter,
    audio: Option<&std::path::Path>,
    context: &RequestContext,
    question: &str,
) -> Result<Reply, AdapterError> {
    let caption_turns = [Turn::user(CAPTION_PROMPT)];
    let caption = captioner
        .respond(&Request { turns: &caption_turns, audio, context: context.clone() })
        .map_err(tag(Stage::Captioner))?;
    log::debug!("cascade caption for {}: {}", context.instance_id, caption.text);

    let prompt = cascade_prompt(&caption.text, question);
    let answer_turns = [Turn::user(prompt.clone())];
    let answer = llm
        .respond(&Request { turns: &answer_turns, audio: None, context: context.clone() })
        .map_err(tag(Stage::Llm))?;
    log::debug!("cascade answer for {}: {}", context.instance_id, answer.text);

    Ok(Reply {
        retries: caption.retries + answer.retries,
        stages: vec![
            StageTrace { stage: Stage::Captioner, prompt: CAPTION_PROMPT.into(), output: caption.text },
            StageTrace { stage: Stage::Llm, prompt, output: answer.text.clone() },
        ],
        text: answer.text,
    })
}

pub struct CascadeAdapter {
    model_id: String,
    captioner: Arc<dyn ModelAdapter>,
    llm: Arc<dyn ModelAdapter>,
}

impl CascadeAdapter {
    pub fn new(model_id: impl Into<String>, captioner: Arc<dyn ModelAdapter>, llm: Arc<dyn ModelAdapter>) -> Result<Self, AdapterError> {
        if !captioner.capabilities().accepts_audio {
            return Err(AdapterError::Config(format!("captioner {} does not accept audio", captioner.model_id())));
        }
        Ok(Self { model_id: model_id.into(), captioner, llm })
    }
}

impl ModelAdapter for CascadeAdapter {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            accepts_audio: true,
            accepts_history: false,
            max_concurrency: self.captioner.capabilities().max_concurrency.min(self.llm.capabilities().max_concurrency),
        }
    }

    fn respond(&self, request: &Request<'_>) -> Result<Reply, AdapterError> {
        check_dialogue(request.turns)?;
        let question = request.last_user_text().unwrap_or_default();
        cascade_respond(self.captioner.as_ref(), self.llm.as_ref(), request.audio, &request.context, question)
    }
}
