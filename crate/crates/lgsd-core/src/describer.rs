//! State-to-text describers: a deterministic rule oracle mirroring the
//! prompt templates, an optional chat-completions LLM backend, and a
//! discretization-keyed cache so each state cell is described (and embedded)
//! at most once.

use crate::embed::{self, EmbedderConfig};
use crate::env::EnvKind;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Condvar, Mutex};

/// Discretized state cell: each coordinate divided by the resolution and
/// rounded half-away-from-zero. Equal keys get equal cached descriptions.
pub type StateKey = Vec<i64>;

/// Rounds `q` half-away-from-zero with a tiny tolerance so that quotients
/// like 0.075/0.05 that land a few ulps below an exact half still round up.
#[inline]
fn round_half_away(q: f64) -> i64 {
    let k = (q.abs() + 0.5 + 1e-9).floor();
    if q < 0.0 {
        -(k as i64)
    } else {
        k as i64
    }
}

pub fn discretize(state: &[f64], rho: f64) -> StateKey {
    assert!(rho > 0.0, "resolution must be positive");
    state.iter().map(|&c| round_half_away(c / rho)).collect()
}

pub fn key_string(key: &StateKey) -> String {
    key.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
}

pub fn parse_key(s: &str) -> Result<StateKey> {
    s.split(',')
        .map(|p| p.trim().parse::<i64>().map_err(|e| Error::Parse(format!("bad key '{s}': {e}"))))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    PointHalfPlaneN,
    PointHalfPlaneS,
    PointHalfPlaneE,
    PointHalfPlaneW,
    PusherTwoStage,
    PusherHalfPlaneN,
    PusherHalfPlaneS,
    PusherHalfPlaneE,
    PusherHalfPlaneW,
}

impl TemplateId {
    pub fn env_kind(self) -> EnvKind {
        match self {
            TemplateId::PointHalfPlaneN
            | TemplateId::PointHalfPlaneS
            | TemplateId::PointHalfPlaneE
            | TemplateId::PointHalfPlaneW => EnvKind::PointMass2d,
            _ => EnvKind::Pusher,
        }
    }
}

/// Where a description came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    RuleOracle,
    Llm,
    Cache,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Description {
    pub text: String,
    pub source: Source,
}

fn coord(k: i64, rho: f64) -> f64 {
    k as f64 * rho
}

fn point_position_text(x: f64, y: f64) -> String {
    format!("Description: The robot's x, y position is [{x:.2}, {y:.2}]")
}

fn object_position_text(x: f64, y: f64) -> String {
    format!("Description: The object's x, y position is [{x:.2}, {y:.2}].")
}

fn distance_text(d: f64) -> String {
    format!("Description: The distance is {d:.2} units.")
}

/// Deterministic rule oracle: a pure function of the discretized state and
/// the template. Coordinates are printed post-discretization with fixed
/// two-decimal formatting so cache keys and texts stay consistent.
pub fn describe_rule(key: &StateKey, rho: f64, template: TemplateId) -> Result<String> {
    match template.env_kind() {
        EnvKind::PointMass2d => {
            if key.len() != 2 {
                return Err(Error::Shape(format!(
                    "template {template:?} expects a 2-component key, got {}",
                    key.len()
                )));
            }
            let (x, y) = (coord(key[0], rho), coord(key[1], rho));
            let text = match template {
                TemplateId::PointHalfPlaneN if y < 0.0 => {
                    "Description: The robot is located in the southern area.".to_string()
                }
                TemplateId::PointHalfPlaneS if y > 0.0 => {
                    "Description: The robot is located in the northern area.".to_string()
                }
                TemplateId::PointHalfPlaneE if x < 0.0 => {
                    "Description: The robot is located in the western area.".to_string()
                }
                TemplateId::PointHalfPlaneW if x > 0.0 => {
                    "Description: The robot is located in the eastern area.".to_string()
                }
                _ => point_position_text(x, y),
            };
            Ok(text)
        }
        EnvKind::Pusher => {
            if key.len() != 4 {
                return Err(Error::Shape(format!(
                    "template {template:?} expects a 4-component key, got {}",
                    key.len()
                )));
            }
            let arm = [coord(key[0], rho), coord(key[1], rho)];
            let obj = [coord(key[2], rho), coord(key[3], rho)];
            // Object still in the origin cell: describe the arm-object
            // distance. Once moved, describe the object's position (gated by
            // half-plane for the directional variants).
            if key[2] == 0 && key[3] == 0 {
                let d = ((arm[0] - obj[0]).powi(2) + (arm[1] - obj[1]).powi(2)).sqrt();
                return Ok(distance_text(d));
            }
            let text = match template {
                TemplateId::PusherHalfPlaneN if obj[1] < 0.0 => {
                    "Description: The object is located in southern area.".to_string()
                }
                TemplateId::PusherHalfPlaneS if obj[1] > 0.0 => {
                    "Description: The object is located in northern area.".to_string()
                }
                TemplateId::PusherHalfPlaneE if obj[0] < 0.0 => {
                    "Description: The object is located in western area.".to_string()
                }
                TemplateId::PusherHalfPlaneW if obj[0] > 0.0 => {
                    "Description: The object is located in eastern area.".to_string()
                }
                _ => object_position_text(obj[0], obj[1]),
            };
            Ok(text)
        }
    }
}

/// Instantiated prompt sent to the LLM backend for a given state cell. Every
/// prompt instructs the model to conclude with the literal `Description:`
/// marker followed by the final sentence.
pub fn instantiate_prompt(key: &StateKey, rho: f64, template: TemplateId) -> Result<String> {
    match template.env_kind() {
        EnvKind::PointMass2d => {
            if key.len() != 2 {
                return Err(Error::Shape("point template expects a 2-component key".into()));
            }
            let (x, y) = (coord(key[0], rho), coord(key[1], rho));
            let (gate_axis, gate_cmp, blocked, allowed) = match template {
                TemplateId::PointHalfPlaneN => ("y", "less than 0", "southern", "northern"),
                TemplateId::PointHalfPlaneS => ("y", "greater than 0", "northern", "southern"),
                TemplateId::PointHalfPlaneE => ("x", "less than 0", "western", "eastern"),
                TemplateId::PointHalfPlaneW => ("x", "greater than 0", "eastern", "western"),
                _ => unreachable!(),
            };
            Ok(format!(
                "You will describe a robot moving on a plane.\n\
                 Robot's x, y coordinates: [{x:.2}, {y:.2}]\n\n\
                 If the robot's {gate_axis}-coordinate is {gate_cmp}, the robot is in the \
                 {blocked} area; in that case answer exactly: 'Description: The robot is \
                 located in the {blocked} area.'\n\
                 Otherwise the robot is in the {allowed} area; report its position and \
                 conclude your answer with the final description in the format: \
                 'Description: The robot's x, y position is [_, _]'"
            ))
        }
        EnvKind::Pusher => {
            if key.len() != 4 {
                return Err(Error::Shape("pusher template expects a 4-component key".into()));
            }
            let arm = [coord(key[0], rho), coord(key[1], rho)];
            let obj = [coord(key[2], rho), coord(key[3], rho)];
            let gate = match template {
                TemplateId::PusherTwoStage => String::new(),
                TemplateId::PusherHalfPlaneN => "If the object's y coordinate is less than 0, \
                     answer exactly: 'Description: The object is located in southern area.'\n"
                    .to_string(),
                TemplateId::PusherHalfPlaneS => "If the object's y coordinate is greater than 0, \
                     answer exactly: 'Description: The object is located in northern area.'\n"
                    .to_string(),
                TemplateId::PusherHalfPlaneE => "If the object's x coordinate is less than 0, \
                     answer exactly: 'Description: The object is located in western area.'\n"
                    .to_string(),
                TemplateId::PusherHalfPlaneW => "If the object's x coordinate is greater than 0, \
                     answer exactly: 'Description: The object is located in eastern area.'\n"
                    .to_string(),
                _ => unreachable!(),
            };
            Ok(format!(
                "You will describe a scene where a robot arm may push an object.\n\
                 Robot arm's x, y coordinates: [{:.2}, {:.2}], object's x, y coordinates: \
                 [{:.2}, {:.2}], origin: [0, 0]\n\n\
                 If the object's coordinates match the origin's, report the distance between \
                 the arm and the object and conclude with: 'Description: The distance is _ \
                 units.'\n{gate}\
                 Otherwise report the object's position and conclude your answer with the \
                 final description in the format: 'Description: The object's x, y position \
                 is [_, _].'",
                arm[0], arm[1], obj[0], obj[1]
            ))
        }
    }
}

/// Extracts the sentence after the final `Description:` marker, trimmed.
pub fn parse_llm_reply(raw: &str) -> Result<String> {
    match raw.rfind("Description:") {
        Some(idx) => {
            let text = raw[idx + "Description:".len()..].trim();
            if text.is_empty() {
                Err(Error::Parse(format!("empty description in reply: {raw:?}")))
            } else {
                Ok(text.to_string())
            }
        }
        None => Err(Error::Parse(format!("no 'Description:' marker in reply: {raw:?}"))),
    }
}

pub const ENV_LLM_BASE_URL: &str = "LGSD_LLM_BASE_URL";
pub const ENV_LLM_API_KEY: &str = "LGSD_LLM_API_KEY";
pub const ENV_LLM_MODEL: &str = "LGSD_LLM_MODEL";

#[derive(Clone, Debug)]
pub struct LlmConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl LlmConfig {
    /// Reads connection settings from `LGSD_LLM_*` environment variables.
    pub fn from_env() -> Result<Self> {
        let get = |k: &str| {
            std::env::var(k).map_err(|_| Error::Config(format!("missing env var {k}")))
        };
        Ok(LlmConfig {
            base_url: get(ENV_LLM_BASE_URL)?,
            api_key: get(ENV_LLM_API_KEY)?,
            model: get(ENV_LLM_MODEL)?,
            max_retries: 3,
            max_in_flight: 4,
        })
    }
}

/// Chat-completions client pinned to temperature 0. Bounds in-flight
/// requests and retries transport failures with exponential backoff.
pub struct LlmClient {
    cfg: LlmConfig,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    available: Condvar,
}

impl LlmClient {
    pub fn new(cfg: LlmConfig) -> Self {
        LlmClient {
            cfg,
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(60))
                .build(),
            in_flight: Mutex::new(0),
            available: Condvar::new(),
        }
    }

    pub fn describe(&self, prompt: &str) -> Result<String> {
        let raw = self.complete(prompt)?;
        parse_llm_reply(&raw)
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let mut guard = self.in_flight.lock().expect("llm gate poisoned");
        while *guard >= self.cfg.max_in_flight {
            guard = self.available.wait(guard).expect("llm gate poisoned");
        }
        *guard += 1;
        drop(guard);
        let result = self.complete_inner(prompt);
        let mut guard = self.in_flight.lock().expect("llm gate poisoned");
        *guard -= 1;
        self.available.notify_one();
        result
    }

    fn complete_inner(&self, prompt: &str) -> Result<String> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.cfg.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut delay = std::time::Duration::from_millis(250);
        let mut last_err = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self
                .agent
                .post(&url)
                .set("Authorization", &format!("Bearer {}", self.cfg.api_key))
                .send_json(body.clone())
            {
                Ok(resp) => {
                    let value: serde_json::Value = resp
                        .into_json()
                        .map_err(|e| Error::Backend(format!("bad llm response body: {e}")))?;
                    let content = value["choices"][0]["message"]["content"]
                        .as_str()
                        .ok_or_else(|| {
                            Error::Backend(format!("llm response missing content: {value}"))
                        })?;
                    return Ok(content.to_string());
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::Backend(format!(
            "llm request failed after {} attempts: {last_err}",
            self.cfg.max_retries + 1
        )))
    }
}

/// Description backend selection.
pub enum Backend {
    Rule,
    /// Ablation backend: every state gets the same sentence, so the language
    /// distance is identically zero.
    Constant,
    Llm(LlmClient),
}

impl Backend {
    fn describe(&self, key: &StateKey, rho: f64, template: TemplateId) -> Result<(String, Source)> {
        match self {
            Backend::Rule => Ok((describe_rule(key, rho, template)?, Source::RuleOracle)),
            Backend::Constant => {
                Ok(("Description: The scene is unchanged.".to_string(), Source::Constant))
            }
            Backend::Llm(client) => {
                let prompt = instantiate_prompt(key, rho, template)?;
                Ok((client.describe(&prompt)?, Source::Llm))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct CacheEntry {
    text: String,
    embedding: Option<Vec<f64>>,
}

/// Persistent map from state cells to description texts (and optionally
/// their embeddings). Writes are first-writer-wins; reloading a saved cache
/// reproduces texts byte-for-byte.
pub struct DescriptionCache {
    pub template: TemplateId,
    pub rho: f64,
    entries: BTreeMap<StateKey, CacheEntry>,
    pub hits: u64,
    pub misses: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    template_id: TemplateId,
    rho: f64,
    entries: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    embeddings: BTreeMap<String, Vec<f64>>,
}

impl DescriptionCache {
    pub fn new(template: TemplateId, rho: f64) -> Self {
        DescriptionCache { template, rho, entries: BTreeMap::new(), hits: 0, misses: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_text(&self, key: &StateKey) -> Option<&str> {
        self.entries.get(key).map(|e| e.text.as_str())
    }

    pub fn get_embedding(&self, key: &StateKey) -> Option<&[f64]> {
        self.entries.get(key).and_then(|e| e.embedding.as_deref())
    }

    /// First-writer-wins insert; re-inserting an existing key is a no-op.
    pub fn insert_text(&mut self, key: StateKey, text: String) {
        self.entries.entry(key).or_insert_with(|| CacheEntry { text, embedding: None });
    }

    pub fn insert_embedding(&mut self, key: &StateKey, embedding: Vec<f64>) {
        if let Some(entry) = self.entries.get_mut(key) {
            entry.embedding.get_or_insert(embedding);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut entries = BTreeMap::new();
        let mut embeddings = BTreeMap::new();
        for (k, e) in &self.entries {
            let ks = key_string(k);
            entries.insert(ks.clone(), e.text.clone());
            if let Some(emb) = &e.embedding {
                embeddings.insert(ks, emb.clone());
            }
        }
        Ok(serde_json::to_string_pretty(&CacheFile {
            version: 1,
            template_id: self.template,
            rho: self.rho,
            entries,
            embeddings,
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: CacheFile = serde_json::from_str(json)?;
        if file.version != 1 {
            return Err(Error::Config(format!("unsupported cache version {}", file.version)));
        }
        let mut entries = BTreeMap::new();
        for (ks, text) in file.entries {
            let key = parse_key(&ks)?;
            entries.insert(key, CacheEntry { text, embedding: None });
        }
        for (ks, emb) in file.embeddings {
            let key = parse_key(&ks)?;
            match entries.get_mut(&key) {
                Some(e) => e.embedding = Some(emb),
                None => {
                    return Err(Error::Config(format!("embedding for unknown cache key {ks}")))
                }
            }
        }
        Ok(DescriptionCache {
            template: file.template_id,
            rho: file.rho,
            entries,
            hits: 0,
            misses: 0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Self::from_json(&json)
    }
}

/// Describer with a cache in front of its backend.
pub struct CachedDescriber {
    backend: Backend,
    pub cache: DescriptionCache,
}

impl CachedDescriber {
    pub fn new(template: TemplateId, rho: f64, backend: Backend) -> Self {
        CachedDescriber { backend, cache: DescriptionCache::new(template, rho) }
    }

    /// Wraps an existing (e.g. reloaded) cache; template and resolution must
    /// match.
    pub fn with_cache(backend: Backend, cache: DescriptionCache) -> Self {
        CachedDescriber { backend, cache }
    }

    pub fn template(&self) -> TemplateId {
        self.cache.template
    }

    pub fn rho(&self) -> f64 {
        self.cache.rho
    }

    pub fn describe_state(&mut self, state: &[f64]) -> Result<Description> {
        let key = discretize(state, self.cache.rho);
        self.describe_key(&key)
    }

    /// Cache hit returns the stored text; a miss queries the backend and
    /// stores the result. Backend errors are never cached.
    pub fn describe_key(&mut self, key: &StateKey) -> Result<Description> {
        if let Some(text) = self.cache.get_text(key).map(str::to_string) {
            self.cache.hits += 1;
            return Ok(Description { text, source: Source::Cache });
        }
        let (text, source) = self.backend.describe(key, self.cache.rho, self.cache.template)?;
        self.cache.misses += 1;
        self.cache.insert_text(key.clone(), text.clone());
        Ok(Description { text, source })
    }
}

/// Full state-to-embedding pipeline: describe (cached), then embed (cached
/// alongside the description).
pub struct Annotator {
    pub describer: CachedDescriber,
    pub embedder: EmbedderConfig,
}

#[derive(Clone, Debug)]
pub struct Annotation {
    pub key: StateKey,
    pub text: String,
    pub embedding: Vec<f64>,
}

impl Annotator {
    pub fn new(describer: CachedDescriber, embedder: EmbedderConfig) -> Self {
        Annotator { describer, embedder }
    }

    pub fn annotate(&mut self, state: &[f64]) -> Result<Annotation> {
        let key = discretize(state, self.describer.rho());
        let desc = self.describer.describe_key(&key)?;
        if let Some(e) = self.describer.cache.get_embedding(&key) {
            return Ok(Annotation { key, text: desc.text, embedding: e.to_vec() });
        }
        let embedding = embed::embed_text(&desc.text, &self.embedder)?;
        self.describer.cache.insert_embedding(&key, embedding.clone());
        Ok(Annotation { key, text: desc.text, embedding })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn discretize_rounds_half_away_from_zero() {
        assert_eq!(discretize(&[0.07, -0.02], 0.05), vec![1, 0]);
        assert_eq!(discretize(&[0.0, 0.0], 0.05), vec![0, 0]);
        assert_eq!(discretize(&[0.075, 0.125], 0.05), vec![2, 3]);
        assert_eq!(discretize(&[-0.075, -0.125], 0.05), vec![-2, -3]);
    }

    #[test]
    fn rule_point_south_is_constant_sentence() {
        let key = discretize(&[0.3, -0.5], 0.05);
        let text = describe_rule(&key, 0.05, TemplateId::PointHalfPlaneN).unwrap();
        assert_eq!(text, "Description: The robot is located in the southern area.");
    }

    #[test]
    fn rule_point_north_prints_discretized_position() {
        let key = discretize(&[0.31, 0.52], 0.05);
        let text = describe_rule(&key, 0.05, TemplateId::PointHalfPlaneN).unwrap();
        assert_eq!(text, "Description: The robot's x, y position is [0.30, 0.50]");
    }

    #[test]
    fn rule_pusher_distance_case() {
        // Arm at distance 6.53 from an unmoved object.
        let key = discretize(&[6.53, 0.0, 0.0, 0.0], 0.01);
        let text = describe_rule(&key, 0.01, TemplateId::PusherTwoStage).unwrap();
        assert_eq!(text, "Description: The distance is 6.53 units.");
    }

    #[test]
    fn rule_pusher_moved_object_prints_position() {
        let key = discretize(&[0.5, 0.5, 0.0, 1.0], 0.05);
        let text = describe_rule(&key, 0.05, TemplateId::PusherTwoStage).unwrap();
        assert_eq!(text, "Description: The object's x, y position is [0.00, 1.00].");
    }

    #[test]
    fn rule_pusher_half_plane_gates_position_branch() {
        let rho = 0.05;
        let south = discretize(&[0.5, 0.5, 0.2, -0.4], rho);
        let text = describe_rule(&south, rho, TemplateId::PusherHalfPlaneN).unwrap();
        assert_eq!(text, "Description: The object is located in southern area.");
        let north = discretize(&[0.5, 0.5, 0.2, 0.4], rho);
        let text = describe_rule(&north, rho, TemplateId::PusherHalfPlaneN).unwrap();
        assert_eq!(text, "Description: The object's x, y position is [0.20, 0.40].");
        // Unmoved object takes the distance branch regardless of half-plane.
        let origin = discretize(&[0.3, 0.4, 0.0, 0.0], rho);
        let text = describe_rule(&origin, rho, TemplateId::PusherHalfPlaneN).unwrap();
        assert_eq!(text, "Description: The distance is 0.50 units.");
    }

    #[test]
    fn rule_rejects_mismatched_key_length() {
        assert!(matches!(
            describe_rule(&vec![1, 2, 3], 0.05, TemplateId::PointHalfPlaneN),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            describe_rule(&vec![1, 2], 0.05, TemplateId::PusherTwoStage),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn directional_variants_are_symmetric() {
        let rho = 0.05;
        let west_state = discretize(&[-0.5, 0.1], rho);
        assert_eq!(
            describe_rule(&west_state, rho, TemplateId::PointHalfPlaneE).unwrap(),
            "Description: The robot is located in the western area."
        );
        assert_eq!(
            describe_rule(&west_state, rho, TemplateId::PointHalfPlaneW).unwrap(),
            "Description: The robot's x, y position is [-0.50, 0.10]"
        );
        let south_state = discretize(&[0.2, -0.3], rho);
        assert_eq!(
            describe_rule(&south_state, rho, TemplateId::PointHalfPlaneS).unwrap(),
            "Description: The robot's x, y position is [0.20, -0.30]"
        );
    }

    #[test]
    fn llm_reply_takes_text_after_final_marker() {
        let raw = "thinking...\n\nDescription: The distance is 6.53 units.";
        assert_eq!(parse_llm_reply(raw).unwrap(), "The distance is 6.53 units.");
        let two = "Description: draft.\nmore words\nDescription: The robot's x, y position is [0.30, 0.10]";
        assert_eq!(
            parse_llm_reply(two).unwrap(),
            "The robot's x, y position is [0.30, 0.10]"
        );
    }

    #[test]
    fn llm_reply_without_marker_is_parse_error() {
        assert!(matches!(parse_llm_reply("no marker here"), Err(Error::Parse(_))));
    }

    #[test]
    fn prompts_carry_description_convention() {
        for t in [
            TemplateId::PointHalfPlaneN,
            TemplateId::PointHalfPlaneS,
            TemplateId::PointHalfPlaneE,
            TemplateId::PointHalfPlaneW,
        ] {
            let p = instantiate_prompt(&vec![1, -2], 0.05, t).unwrap();
            assert!(p.contains("Description:"), "{t:?} prompt lacks marker");
        }
        for t in [
            TemplateId::PusherTwoStage,
            TemplateId::PusherHalfPlaneN,
            TemplateId::PusherHalfPlaneS,
            TemplateId::PusherHalfPlaneE,
            TemplateId::PusherHalfPlaneW,
        ] {
            let p = instantiate_prompt(&vec![1, -2, 0, 3], 0.05, t).unwrap();
            assert!(p.contains("Description:"), "{t:?} prompt lacks marker");
        }
    }

    #[test]
    fn cache_second_call_hits_with_identical_text() {
        let mut d = CachedDescriber::new(TemplateId::PointHalfPlaneN, 0.05, Backend::Rule);
        let first = d.describe_state(&[0.3, 0.5]).unwrap();
        assert_eq!(first.source, Source::RuleOracle);
        let second = d.describe_state(&[0.3, 0.5]).unwrap();
        assert_eq!(second.source, Source::Cache);
        assert_eq!(first.text, second.text);
        assert_eq!(d.cache.hits, 1);
        assert_eq!(d.cache.misses, 1);
    }

    #[test]
    fn states_in_same_cell_share_one_backend_call() {
        let mut d = CachedDescriber::new(TemplateId::PointHalfPlaneN, 0.05, Backend::Rule);
        d.describe_state(&[0.31, 0.52]).unwrap();
        d.describe_state(&[0.29, 0.48]).unwrap(); // same cell (6, 10)
        assert_eq!(d.cache.misses, 1);
        assert_eq!(d.cache.hits, 1);
    }

    #[test]
    fn cache_round_trips_through_file_with_zero_backend_calls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let text = {
            let mut d = CachedDescriber::new(TemplateId::PointHalfPlaneN, 0.05, Backend::Rule);
            let t = d.describe_state(&[0.3, 0.5]).unwrap().text;
            d.cache.save(&path).unwrap();
            t
        };
        let cache = DescriptionCache::load(&path).unwrap();
        assert_eq!(cache.template, TemplateId::PointHalfPlaneN);
        let mut d = CachedDescriber::with_cache(Backend::Rule, cache);
        let desc = d.describe_state(&[0.3, 0.5]).unwrap();
        assert_eq!(desc.source, Source::Cache);
        assert_eq!(desc.text, text);
        assert_eq!(d.cache.misses, 0);
        // Saved bytes are reproducible.
        let again = d.cache.to_json().unwrap();
        assert_eq!(again, std::fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn cache_persists_embeddings_alongside_texts() {
        let mut ann = Annotator::new(
            CachedDescriber::new(TemplateId::PointHalfPlaneN, 0.05, Backend::Rule),
            EmbedderConfig::default(),
        );
        let a = ann.annotate(&[0.3, 0.5]).unwrap();
        let json = ann.describer.cache.to_json().unwrap();
        let cache = DescriptionCache::from_json(&json).unwrap();
        assert_eq!(cache.get_embedding(&a.key).unwrap(), a.embedding.as_slice());
    }

    #[test]
    fn constant_backend_gives_one_sentence_for_everything() {
        let mut d = CachedDescriber::new(TemplateId::PusherTwoStage, 0.05, Backend::Constant);
        let a = d.describe_state(&[0.1, 0.2, 0.0, 0.0]).unwrap();
        let b = d.describe_state(&[-0.7, 0.4, 0.3, 0.3]).unwrap();
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn constraining_property_half_plane() {
        let mut d = CachedDescriber::new(TemplateId::PointHalfPlaneN, 0.05, Backend::Rule);
        let s1 = d.describe_state(&[-0.8, -0.3]).unwrap().text;
        let s2 = d.describe_state(&[0.6, -0.9]).unwrap().text;
        assert_eq!(s1, s2, "southern states must share one description");
        let n = d.describe_state(&[0.6, 0.9]).unwrap().text;
        assert_ne!(s1, n);
    }

    #[test]
    fn two_stage_focus_ignores_arm_once_object_moved() {
        let mut d = CachedDescriber::new(TemplateId::PusherTwoStage, 0.05, Backend::Rule);
        let a = d.describe_state(&[0.10, 0.20, 0.30, 0.40]).unwrap().text;
        let b = d.describe_state(&[-0.55, 0.90, 0.30, 0.40]).unwrap().text;
        assert_eq!(a, b, "arm motion must not change descriptions after the object moved");
        // While the object sits at the origin, arm motion does change text.
        let c = d.describe_state(&[0.50, 0.00, 0.0, 0.0]).unwrap().text;
        let e = d.describe_state(&[0.90, 0.00, 0.0, 0.0]).unwrap().text;
        assert_ne!(c, e);
    }

    proptest! {
        #[test]
        fn discretize_is_pure_and_scales(x in -2.0f64..2.0, y in -2.0f64..2.0) {
            let k1 = discretize(&[x, y], 0.05);
            let k2 = discretize(&[x, y], 0.05);
            prop_assert_eq!(k1, k2);
        }

        #[test]
        fn cache_soundness(queries in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40)) {
            let mut d = CachedDescriber::new(TemplateId::PointHalfPlaneN, 0.05, Backend::Rule);
            let mut first_seen: std::collections::BTreeMap<StateKey, String> = Default::default();
            for (x, y) in &queries {
                let key = discretize(&[*x, *y], 0.05);
                let desc = d.describe_state(&[*x, *y]).unwrap();
                if let Some(prev) = first_seen.get(&key) {
                    prop_assert_eq!(prev, &desc.text);
                } else {
                    first_seen.insert(key, desc.text);
                }
            }
            prop_assert_eq!(d.cache.hits + d.cache.misses, queries.len() as u64);
            prop_assert_eq!(d.cache.misses as usize, first_seen.len());
        }
    }
}
