//! Request bodies and response extraction for the three chat-with-image dialects.

use serde_json::{json, Value};

use super::transport::HttpRequest;
use super::{PromptProfile, ProviderConfig, ProviderKind};

pub(crate) fn build_request(
    provider: &ProviderConfig,
    profile: &PromptProfile,
    png_base64: &str,
    api_key: &str,
) -> HttpRequest {
    let endpoint = provider.endpoint();
    match provider.provider_kind {
        ProviderKind::OpenaiCompat | ProviderKind::Replay => HttpRequest {
            url: endpoint,
            headers: vec![("authorization".into(), format!("Bearer {api_key}"))],
            body: json!({
                "model": provider.model_name,
                "temperature": provider.temperature,
                "max_tokens": provider.max_output_tokens,
                "messages": [
                    {"role": "system", "content": profile.system_prompt},
                    {"role": "user", "content": [
                        {"type": "text", "text": profile.user_prompt},
                        {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{png_base64}")}}
                    ]}
                ]
            })
            .to_string(),
        },
        ProviderKind::Anthropic => HttpRequest {
            url: endpoint,
            headers: vec![
                ("x-api-key".into(), api_key.to_string()),
                ("anthropic-version".into(), "2023-06-01".into()),
            ],
            body: json!({
                "model": provider.model_name,
                "temperature": provider.temperature,
                "max_tokens": provider.max_output_tokens,
                "system": profile.system_prompt,
                "messages": [
                    {"role": "user", "content": [
                        {"type": "image", "source": {"type": "base64", "media_type": "image/png", "data": png_base64}},
                        {"type": "text", "text": profile.user_prompt}
                    ]}
                ]
            })
            .to_string(),
        },
        ProviderKind::Google => HttpRequest {
            url: format!(
                "{}/models/{}:generateContent",
                endpoint.trim_end_matches('/'),
                provider.model_name
            ),
            headers: vec![("x-goog-api-key".into(), api_key.to_string())],
            body: json!({
                "systemInstruction": {"parts": [{"text": profile.system_prompt}]},
                "contents": [
                    {"role": "user", "parts": [
                        {"text": profile.user_prompt},
                        {"inlineData": {"mimeType": "image/png", "data": png_base64}}
                    ]}
                ],
                "generationConfig": {
                    "temperature": provider.temperature,
                    "maxOutputTokens": provider.max_output_tokens
                }
            })
            .to_string(),
        },
    }
}

fn joined_text<'a>(parts: impl Iterator<Item = &'a Value>) -> String {
    parts
        .filter_map(|p| p.get("text").and_then(Value::as_str))
        .collect::<Vec<_>>()
        .join("")
}

/// Extracts the transcript from a successful response body.
pub(crate) fn parse_response(kind: ProviderKind, body: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    let text = match kind {
        ProviderKind::OpenaiCompat | ProviderKind::Replay => {
            let content = &v["choices"][0]["message"]["content"];
            match content {
                Value::String(s) => Some(s.clone()),
                Value::Array(parts) => Some(joined_text(parts.iter())),
                _ => None,
            }
        }
        ProviderKind::Anthropic => v["content"]
            .as_array()
            .map(|parts| joined_text(parts.iter().filter(|p| p["type"] == "text"))),
        ProviderKind::Google => v["candidates"][0]["content"]["parts"]
            .as_array()
            .map(|parts| joined_text(parts.iter())),
    };
    text.ok_or_else(|| {
        let snippet: String = body.chars().take(200).collect();
        format!("no transcript in {kind:?} response: {snippet}")
    })
}
