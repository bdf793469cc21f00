//! Prompt templates shipped as text assets and rendered into role-tagged
//! message lists.
//!
//! Placeholders are written `{{Name}}` and are substituted in a single pass:
//! bound values are inserted verbatim and never rescanned.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{Message, Role};

pub const DETECTION: &str = "detection";
pub const DETECTION_ENTITY: &str = "detection-entity";
pub const MITIGATION: &str = "mitigation";
pub const MITIGATION_NORMALIZED: &str = "mitigation-normalized";

pub const SOURCE_TEXT: &str = "Source Text";
pub const HYPOTHESIS: &str = "Hypothesis";
pub const RAW_RESPONSE: &str = "Raw Response";
pub const REWRITE_INSTRUCTIONS: &str = "Rewrite Instructions";

/// The date literal in the detection system prompt's first rule.
pub const DEFAULT_TODAY: &str = "March 24th, 2023";

macro_rules! asset {
    ($path:literal) => {
        include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/assets/prompts/",
            $path
        ))
    };
}

const DETECTION_SYSTEM: &str = asset!("detection/system.txt");
const DETECTION_SHOT1_USER: &str = asset!("detection/shot1_user.txt");
const DETECTION_SHOT1_ASSISTANT: &str = asset!("detection/shot1_assistant.txt");
const DETECTION_SHOT2_USER: &str = asset!("detection/shot2_user.txt");
const DETECTION_SHOT2_ASSISTANT: &str = asset!("detection/shot2_assistant.txt");
const DETECTION_REQUEST: &str = asset!("detection/request_user.txt");
const DETECTION_REQUEST_ENTITY: &str = asset!("detection/request_user_entity.txt");
const MITIGATION_SYSTEM: &str = asset!("mitigation/system.txt");
const MITIGATION_REQUEST: &str = asset!("mitigation/request_user.txt");
const MITIGATION_REQUEST_NORMALIZED: &str = asset!("mitigation/request_user_normalized.txt");

/// Asset files end with one newline that is not part of the message.
fn body(asset: &'static str) -> Cow<'static, str> {
    Cow::Borrowed(asset.strip_suffix('\n').unwrap_or(asset))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` has no binding for placeholder {{{{{name}}}}}")]
    MissingBinding { template: String, name: String },
    #[error("template `{template}` has an unterminated placeholder")]
    Unterminated { template: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: &'static str,
    parts: Vec<(Role, Cow<'static, str>)>,
}

impl PromptTemplate {
    pub fn get(id: &str) -> Result<Self, TemplateError> {
        let detection = |request: &'static str, id: &'static str| PromptTemplate {
            id,
            parts: vec![
                (Role::System, body(DETECTION_SYSTEM)),
                (Role::User, body(DETECTION_SHOT1_USER)),
                (Role::Assistant, body(DETECTION_SHOT1_ASSISTANT)),
                (Role::User, body(DETECTION_SHOT2_USER)),
                (Role::Assistant, body(DETECTION_SHOT2_ASSISTANT)),
                (Role::User, body(request)),
            ],
        };
        let mitigation = |request: &'static str, id: &'static str| PromptTemplate {
            id,
            parts: vec![
                (Role::System, body(MITIGATION_SYSTEM)),
                (Role::User, body(request)),
            ],
        };
        match id {
            DETECTION => Ok(detection(DETECTION_REQUEST, DETECTION)),
            DETECTION_ENTITY => Ok(detection(DETECTION_REQUEST_ENTITY, DETECTION_ENTITY)),
            MITIGATION => Ok(mitigation(MITIGATION_REQUEST, MITIGATION)),
            MITIGATION_NORMALIZED => Ok(mitigation(
                MITIGATION_REQUEST_NORMALIZED,
                MITIGATION_NORMALIZED,
            )),
            other => Err(TemplateError::UnknownTemplate(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        self.id
    }

    /// Replaces the date literal in the system message.
    pub fn with_today(mut self, today: &str) -> Self {
        for (role, text) in &mut self.parts {
            if *role == Role::System && text.contains(DEFAULT_TODAY) {
                *text = Cow::Owned(text.replace(DEFAULT_TODAY, today));
            }
        }
        self
    }

    /// Names of every placeholder the template expects.
    pub fn placeholders(&self) -> Result<BTreeSet<String>, TemplateError> {
        let mut names = BTreeSet::new();
        for (_, text) in &self.parts {
            scan(text, self.id, |name| {
                names.insert(name.to_string());
                Ok(String::new())
            })?;
        }
        Ok(names)
    }

    pub fn render(
        &self,
        bindings: &BTreeMap<String, String>,
    ) -> Result<Vec<Message>, TemplateError> {
        self.parts
            .iter()
            .map(|(role, text)| {
                let content = scan(text, self.id, |name| {
                    bindings
                        .get(name)
                        .cloned()
                        .ok_or_else(|| TemplateError::MissingBinding {
                            template: self.id.to_string(),
                            name: name.to_string(),
                        })
                })?;
                Ok(Message::new(*role, content))
            })
            .collect()
    }
}

fn scan(
    text: &str,
    template: &str,
    mut resolve: impl FnMut(&str) -> Result<String, TemplateError>,
) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after
            .find("}}")
            .ok_or_else(|| TemplateError::Unterminated {
                template: template.to_string(),
            })?;
        out.push_str(&resolve(&after[..close])?);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Renders the named template with `bindings`.
pub fn render_messages(
    template_id: &str,
    bindings: &BTreeMap<String, String>,
) -> Result<Vec<Message>, TemplateError> {
    PromptTemplate::get(template_id)?.render(bindings)
}

/// Convenience for building a binding map from string pairs.
pub fn bindings<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
