//! Backend-neutral chat request and response shapes.

use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::TokenCount;
use crate::text::count_tokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_instruction: String,
    pub user_content: String,
    pub max_output_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    /// Question the request belongs to. Never sent over the wire; the
    /// scripted backend uses it to look up its answer key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvalidRequest {
    EmptyUserContent,
    ZeroMaxTokens,
    BadTemperature,
}

impl fmt::Display for InvalidRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidRequest::EmptyUserContent => f.write_str("user content is empty"),
            InvalidRequest::ZeroMaxTokens => f.write_str("max_output_tokens must be positive"),
            InvalidRequest::BadTemperature => f.write_str("temperature must be a non-negative number"),
        }
    }
}

impl ChatRequest {
    pub fn new(system_instruction: impl Into<String>, user_content: impl Into<String>, max_output_tokens: u32) -> Self {
        Self {
            system_instruction: system_instruction.into(),
            user_content: user_content.into(),
            max_output_tokens,
            temperature: 0.0,
            question_id: None,
        }
    }

    pub fn for_question(mut self, id: impl Into<String>) -> Self {
        self.question_id = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<(), InvalidRequest> {
        if self.user_content.is_empty() {
            return Err(InvalidRequest::EmptyUserContent);
        }
        if self.max_output_tokens == 0 {
            return Err(InvalidRequest::ZeroMaxTokens);
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(InvalidRequest::BadTemperature);
        }
        Ok(())
    }

    /// Prompt size under the engine tokenizer: instruction and user content
    /// joined by a newline.
    pub fn input_tokens(&self) -> TokenCount {
        TokenCount(count_tokens(&self.system_instruction) + count_tokens(&self.user_content))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub input_tokens: TokenCount,
    pub output_tokens: TokenCount,
}

impl ChatResponse {
    /// Response whose usage is measured with the engine tokenizer.
    pub fn measured(request: &ChatRequest, text: String) -> Self {
        let output_tokens = TokenCount(count_tokens(&text));
        Self { text, input_tokens: request.input_tokens(), output_tokens }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    #[test]
    fn token_count_of_joined_prompt() {
        let r = ChatRequest::new("Be brief.", "Question: why?", 8);
        let joined = format!("{}\n{}", r.system_instruction, r.user_content);
        assert_eq!(r.input_tokens().0, crate::text::tokenize(&joined).len() as u64);
    }

    #[test]
    fn validation() {
        assert!(ChatRequest::new("", "x", 1).validate().is_ok());
        assert_eq!(ChatRequest::new("s", "", 1).validate(), Err(InvalidRequest::EmptyUserContent));
        assert_eq!(ChatRequest::new("s", "x", 0).validate(), Err(InvalidRequest::ZeroMaxTokens));
        let mut r = ChatRequest::new("s", "x", 1);
        r.temperature = -0.5;
        assert_eq!(r.validate(), Err(InvalidRequest::BadTemperature));
    }
}
