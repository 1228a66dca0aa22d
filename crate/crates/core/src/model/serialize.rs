use crate::dataset::PostRecord;

use super::vocab::{Feature, Vocabulary};

/// Metadata values are capped at this many tokens so the non-text prefix
/// has a static bound.
pub const METADATA_VALUE_CAP: usize = 12;

/// Longest possible non-text prefix: seven indicators, the target user,
/// the author, and four capped metadata values.
pub const MAX_PREFIX_LEN: usize = Feature::ALL.len() + 2 + 4 * METADATA_VALUE_CAP;

/// Index of the target-user token in every serialized example.
pub const TARGET_INDEX: usize = 1;

/// A (target user, post) pair rendered as model input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerializedExample {
    pub tokens: Vec<u32>,
    pub target_index: usize,
    /// The input string before tokenization and truncation.
    pub input: String,
    /// Text tokens dropped to fit `max_len`.
    pub truncated_tokens: usize,
    pub unknown_user: bool,
}

/// Renders a post timestamp as `Mon Nov 6, 2023`.
pub fn render_time(post: &PostRecord) -> String {
    post.created_at.format("%a %b %-d, %Y").to_string()
}

fn render_nsfw(post: &PostRecord) -> &'static str {
    if post.nsfw {
        "true"
    } else {
        "false"
    }
}

/// Builds the token sequence for `target_user` and `post`.
///
/// The template is fixed: `[USERNAME] [user] [AUTHOR] [author] [COMMUNITY] ...
/// [CREATED_TIME] ... [NSFW] ... [SUBMISSION_URL_DOMAIN] ... [SUBMISSION_TEXT] ...`.
/// Only the submission text is truncated.
pub fn serialize_input(target_user: &str, post: &PostRecord, vocab: &Vocabulary, max_len: usize) -> SerializedExample {
    let base = vocab.base();
    let time = render_time(post);
    let user_id = vocab.user(target_user);

    let mut tokens = Vec::with_capacity(MAX_PREFIX_LEN + 16);
    tokens.push(vocab.indicator(Feature::Username));
    tokens.push(user_id.unwrap_or_else(|| vocab.unknown_user()));
    tokens.push(vocab.indicator(Feature::Author));
    tokens.push(vocab.user_or_unknown(&post.author_id));

    let capped = |mut ids: Vec<u32>| {
        ids.truncate(METADATA_VALUE_CAP);
        ids
    };
    tokens.push(vocab.indicator(Feature::Community));
    tokens.extend(capped(base.encode_value(&post.community)));
    tokens.push(vocab.indicator(Feature::CreatedTime));
    tokens.extend(capped(base.encode_value(&time)));
    tokens.push(vocab.indicator(Feature::Nsfw));
    tokens.extend(capped(base.encode_value(render_nsfw(post))));
    tokens.push(vocab.indicator(Feature::SubmissionUrlDomain));
    tokens.extend(capped(base.encode_value(&post.url_domain)));
    tokens.push(vocab.indicator(Feature::SubmissionText));

    let text = base.encode(&post.text);
    let room = max_len.saturating_sub(tokens.len());
    let truncated_tokens = text.len().saturating_sub(room);
    tokens.extend(text.into_iter().take(room));

    let mut parts: Vec<String> = Vec::with_capacity(14);
    let values: [String; 7] = [
        format!("[{target_user}]"),
        format!("[{}]", post.author_id),
        post.community.clone(),
        time,
        render_nsfw(post).to_string(),
        post.url_domain.clone(),
        post.text.clone(),
    ];
    for (feature, value) in Feature::ALL.iter().zip(values) {
        parts.push(feature.indicator().to_string());
        if !value.is_empty() {
            parts.push(value);
        }
    }

    SerializedExample {
        tokens,
        target_index: TARGET_INDEX,
        input: parts.join(" "),
        truncated_tokens,
        unknown_user: user_id.is_none(),
    }
}
