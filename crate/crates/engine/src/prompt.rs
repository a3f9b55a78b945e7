use minilab_core::domain::{CampaignSpec, Channel, Direction, SequenceStep};
use minilab_gateway::{ChatMessage, ChatRequest};

use crate::state::LeadState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PromptKind<'a> {
    Step(&'a SequenceStep),
    Reply,
}

fn channel_rule(channel: Channel) -> &'static str {
    match channel {
        Channel::Email => "Channel: email. Begin with a line of the form 'Subject: ...', then a blank line, then the body.",
        Channel::Linkedin => "Channel: LinkedIn message. No subject line; keep it under 300 characters.",
    }
}

/// Assembles the drafting prompt in a fixed order: system (campaign then
/// step instructions), a context block (offer, pain points, profile,
/// dossier), the conversation oldest-first, then the task.
pub fn build_prompt(spec: &CampaignSpec, lead: &LeadState, kind: PromptKind<'_>) -> ChatRequest {
    let (step_text, channel) = match kind {
        PromptKind::Step(step) => (format!("Step {} instructions: {}", step.index + 1, step.instructions), step.channel),
        PromptKind::Reply => {
            let channel = lead.memory.inbound.last().map(|m| m.channel).unwrap_or(spec.steps[0].channel);
            ("The prospect has replied. Answer their message directly and helpfully.".to_owned(), channel)
        }
    };
    let system = format!("{}\n\n{}\n{}", spec.outreach_instructions.trim(), step_text, channel_rule(channel));

    let mut ctx = format!("Value proposition: {}\n", spec.value_proposition);
    if !spec.pain_points.is_empty() {
        ctx.push_str("Pain points:\n");
        for p in &spec.pain_points {
            ctx.push_str(&format!("- {p}\n"));
        }
    }
    ctx.push_str("Prospect profile:\n");
    for (k, v) in &lead.lead.profile {
        ctx.push_str(&format!("- {k}: {v}\n"));
    }
    match &lead.memory.research_dossier {
        Some(d) => ctx.push_str(&format!("Research dossier:\n{}\n", d.summary)),
        None => ctx.push_str("Research dossier: none available\n"),
    }

    let mut messages = vec![ChatMessage::system(system), ChatMessage::user(ctx)];
    for m in lead.memory.conversation() {
        let text = match &m.subject {
            Some(s) => format!("Subject: {s}\n\n{}", m.body),
            None => m.body.clone(),
        };
        messages.push(match m.direction {
            Direction::Outbound => ChatMessage::assistant(text),
            Direction::Inbound => ChatMessage::user(text),
        });
    }
    let task = match kind {
        PromptKind::Step(step) => format!("Write step {} of {} now.", step.index + 1, spec.steps.len()),
        PromptKind::Reply => {
            let latest = lead.memory.inbound.last().map(|m| m.body.as_str()).unwrap_or_default();
            format!("Reply to the prospect's latest message:\n{latest}")
        }
    };
    messages.push(ChatMessage::user(task));
    ChatRequest::new(messages)
}

/// Splits a leading `Subject:` line off an email draft.
pub fn split_subject(channel: Channel, text: &str) -> (Option<String>, String) {
    let trimmed = text.trim_start();
    if channel.has_subject() {
        if let Some(rest) = trimmed.strip_prefix("Subject:") {
            let (subject, body) = rest.split_once('\n').unwrap_or((rest, ""));
            return (Some(subject.trim().to_owned()), body.trim().to_owned());
        }
    }
    (None, text.trim().to_owned())
}
