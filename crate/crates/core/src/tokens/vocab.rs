use serde::{Deserialize, Serialize};

use super::TokenError;

/// Instruction-tuned video-to-audio prompt with `<VideoHere>` and
/// `<CaptionHere>` slots.
pub const VTA_TEMPLATE: &str = include_str!("../../assets/prompts/vta_instruction.txt");

const VIDEO_SLOT: &str = "<VideoHere>";
const CAPTION_SLOT: &str = "<CaptionHere>";

const TOKEN_PREFIX: &str = "<AUD_";

/// `<AUD_{index}>`.
pub fn token_string(index: usize) -> String {
    format!("{TOKEN_PREFIX}{index}>")
}

/// Concatenates the token text of every index, without separators.
pub fn encode_token_string(indices: &[usize]) -> String {
    let mut out = String::with_capacity(indices.len() * 9);
    for &i in indices {
        out.push_str(TOKEN_PREFIX);
        out.push_str(&i.to_string());
        out.push('>');
    }
    out
}

/// Parses concatenated `<AUD_X>` tokens, optionally separated by ASCII
/// whitespace. Indices are canonical decimal (no sign, no leading zeros) and
/// must be below `k`.
pub fn decode_token_string(text: &str, k: usize) -> Result<Vec<usize>, TokenError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    let malformed = |offset: usize, message: &str| TokenError::MalformedToken { offset, message: message.to_string() };
    while pos < bytes.len() {
        if bytes[pos].is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        if !text[pos..].starts_with(TOKEN_PREFIX) {
            return Err(malformed(pos, "expected `<AUD_`"));
        }
        let start = pos;
        let digits_start = pos + TOKEN_PREFIX.len();
        let mut end = digits_start;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        let digits = &text[digits_start..end];
        if digits.is_empty() {
            return Err(malformed(digits_start, "missing index digits"));
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return Err(malformed(digits_start, "index has leading zeros"));
        }
        if bytes.get(end) != Some(&b'>') {
            return Err(malformed(end, "expected `>`"));
        }
        let index: usize = digits.parse().map_err(|_| malformed(digits_start, "index too large"))?;
        if index >= k {
            return Err(TokenError::IndexOutOfRange { index, k });
        }
        out.push(index);
        pos = end + 1;
        debug_assert!(pos > start);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpecialToken {
    VideoStart,
    VideoEnd,
    CaptionStart,
    CaptionEnd,
    Eos,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 5] = [
        SpecialToken::VideoStart,
        SpecialToken::VideoEnd,
        SpecialToken::CaptionStart,
        SpecialToken::CaptionEnd,
        SpecialToken::Eos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpecialToken::VideoStart => "<Video>",
            SpecialToken::VideoEnd => "</Video>",
            SpecialToken::CaptionStart => "<Caption>",
            SpecialToken::CaptionEnd => "</Caption>",
            SpecialToken::Eos => "<eos>",
        }
    }
}

/// What a vocabulary id stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VocabEntry {
    Text(usize),
    Special(SpecialToken),
    Audio(usize),
}

/// Text vocabulary extended with the modality indicators and one token per
/// codebook entry.
///
/// Layout: `[0, N_t)` text ids, then the five special tokens in
/// [`SpecialToken::ALL`] order, then `<AUD_0>..<AUD_{K-1}>` contiguously.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyMap {
    pub text_vocab_size: usize,
    pub codebook_size: usize,
}

impl VocabularyMap {
    pub fn new(text_vocab_size: usize, codebook_size: usize) -> Self {
        VocabularyMap { text_vocab_size, codebook_size }
    }

    pub fn special_offset(&self) -> usize {
        self.text_vocab_size
    }

    pub fn acoustic_offset(&self) -> usize {
        self.text_vocab_size + SpecialToken::ALL.len()
    }

    pub fn len(&self) -> usize {
        self.acoustic_offset() + self.codebook_size
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entry(&self, id: usize) -> Option<VocabEntry> {
        if id < self.text_vocab_size {
            Some(VocabEntry::Text(id))
        } else if id < self.acoustic_offset() {
            Some(VocabEntry::Special(SpecialToken::ALL[id - self.special_offset()]))
        } else if id < self.len() {
            Some(VocabEntry::Audio(id - self.acoustic_offset()))
        } else {
            None
        }
    }

    pub fn id(&self, entry: VocabEntry) -> Result<usize, TokenError> {
        match entry {
            VocabEntry::Text(i) if i < self.text_vocab_size => Ok(i),
            VocabEntry::Text(i) => Err(TokenError::IndexOutOfRange { index: i, k: self.text_vocab_size }),
            VocabEntry::Special(s) => {
                Ok(self.special_offset() + SpecialToken::ALL.iter().position(|&t| t == s).expect("listed"))
            }
            VocabEntry::Audio(i) if i < self.codebook_size => Ok(self.acoustic_offset() + i),
            VocabEntry::Audio(i) => Err(TokenError::IndexOutOfRange { index: i, k: self.codebook_size }),
        }
    }

    pub fn audio_id(&self, index: usize) -> Result<usize, TokenError> {
        self.id(VocabEntry::Audio(index))
    }

    /// Token text for special and acoustic ids; text ids belong to the base
    /// tokenizer and return `None`.
    pub fn token_text(&self, id: usize) -> Option<String> {
        match self.entry(id)? {
            VocabEntry::Text(_) => None,
            VocabEntry::Special(s) => Some(s.as_str().to_string()),
            VocabEntry::Audio(i) => Some(token_string(i)),
        }
    }

    /// Vocabulary id for special or acoustic token text.
    pub fn lookup(&self, token: &str) -> Option<usize> {
        if let Some(s) = SpecialToken::ALL.iter().find(|s| s.as_str() == token) {
            return self.id(VocabEntry::Special(*s)).ok();
        }
        match decode_token_string(token, self.codebook_size).ok()?.as_slice() {
            [i] if token_string(*i) == token => self.audio_id(*i).ok(),
            _ => None,
        }
    }
}

/// Fills the bundled video-to-audio instruction.
pub fn wrap_vta_prompt(video_placeholder: &str, caption: &str) -> Result<String, TokenError> {
    wrap_vta_prompt_with(VTA_TEMPLATE, video_placeholder, caption)
}

/// Fills a template that has exactly one `<VideoHere>` slot between
/// `<Video>`/`</Video>` and one `<CaptionHere>` slot between
/// `<Caption>`/`</Caption>`.
pub fn wrap_vta_prompt_with(template: &str, video_placeholder: &str, caption: &str) -> Result<String, TokenError> {
    if caption.trim().is_empty() {
        return Err(TokenError::EmptyCaption);
    }
    for slot in [VIDEO_SLOT, CAPTION_SLOT] {
        if template.matches(slot).count() != 1 {
            return Err(TokenError::Format(format!("template must contain {slot} exactly once")));
        }
    }
    Ok(template.replacen(VIDEO_SLOT, video_placeholder, 1).replacen(CAPTION_SLOT, caption, 1))
}
