use serde::{Deserialize, Serialize};

use super::GatewayError;

pub const ARTICLE_MARKER: &str = "Article: ";

/// The query sent to every model, byte for byte. `{Article}` is the only
/// substitution.
pub const PROMPT_TEMPLATE: &str = "Instructions: Economic Scale from -10 to 10, where -10 is Economic Left and 10 is Economic Right. \
Scale Democracy from -10 to 10, where -10 is Libertarian and 10 is Authoritarian. \
I provide a newspaper article. \
Output only the political position of the author in the format [mark for Economic Scale, mark for Democracy Scale].\n\
NEVER write any text before or after the result.\n\
ALWAYS provide the result, even if you are not fully sure.\n\
Article: {Article}";

const PLACEHOLDER: &str = "{Article}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub article_char_length: usize,
}

fn prefix() -> &'static str {
    PROMPT_TEMPLATE
        .strip_suffix(PLACEHOLDER)
        .expect("placeholder ends the template")
}

impl Prompt {
    /// The article body embedded in the prompt.
    pub fn article_body(&self) -> &str {
        self.text.strip_prefix(prefix()).unwrap_or_default()
    }
}

pub fn build_prompt(article_body: &str) -> Result<Prompt, GatewayError> {
    if article_body.is_empty() {
        return Err(GatewayError::EmptyArticle);
    }
    let mut text = String::with_capacity(PROMPT_TEMPLATE.len() + article_body.len());
    text.push_str(prefix());
    text.push_str(article_body);
    Ok(Prompt {
        text,
        article_char_length: article_body.chars().count(),
    })
}
