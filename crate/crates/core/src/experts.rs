//! Expert abstractions and aggregation mechanics: Bernoulli and trace
//! experts, catalogue standardization, propose-then-vote, weighted tallying
//! with tie-breaks, scoring, prompt rendering, response parsing, and a
//! generic remote-expert adapter.

use std::time::Duration;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How an expert produces answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertSpec {
    /// Correct with a fixed probability each round.
    Bernoulli { p: f64 },
    /// Replays a recorded correctness sequence.
    Trace { outcomes: Vec<bool> },
    /// Live endpoint; never used by the acceptance suite.
    Remote { endpoint: RemoteEndpoint },
}

impl ExpertSpec {
    pub fn bernoulli(p: f64) -> Self {
        ExpertSpec::Bernoulli { p }
    }

    /// Newline-delimited 0/1 file, one line per round.
    pub fn trace_from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let outcomes: Vec<bool> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| match l {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::SchemaViolation(format!(
                    "trace line must be 0 or 1, got {other:?}"
                ))),
            })
            .collect::<Result<_>>()?;
        if outcomes.is_empty() {
            return Err(Error::SchemaViolation("empty trace file".into()));
        }
        Ok(ExpertSpec::Trace { outcomes })
    }
}

/// Question domains with fixed prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Gsm8k,
    CommonsenseQa,
    BoolQ,
}

impl std::str::FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gsm8k" => Ok(Domain::Gsm8k),
            "commonsenseqa" | "cqa" => Ok(Domain::CommonsenseQa),
            "boolq" => Ok(Domain::BoolQ),
            other => Err(Error::UnknownDomain(other.into())),
        }
    }
}

/// One task instance presented to the committee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub question: String,
    pub choices: Option<Vec<String>>,
    pub truth: String,
    pub domain: Domain,
}

/// Ordered set of distinct answer strings the committee votes over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalogue {
    items: Vec<String>,
    truth_index: Option<usize>,
}

impl Catalogue {
    pub fn new(items: Vec<String>, truth_index: Option<usize>) -> Result<Self> {
        for (i, a) in items.iter().enumerate() {
            if items[..i].contains(a) {
                return Err(Error::SchemaViolation(format!(
                    "duplicate catalogue item {a:?}"
                )));
            }
        }
        if let Some(t) = truth_index {
            if t >= items.len() {
                return Err(Error::SchemaViolation(format!(
                    "truth index {t} out of bounds for {} items",
                    items.len()
                )));
            }
        }
        Ok(Self { items, truth_index })
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn truth_index(&self) -> Option<usize> {
        self.truth_index
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn position(&self, item: &str) -> Option<usize> {
        self.items.iter().position(|x| x == item)
    }
}

/// One expert's vote: an index into the standardized catalogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub expert: usize,
    pub choice: usize,
}

/// Union of the input catalogues in stable first-seen order. The result
/// always sits between the intersection and the union of the inputs.
pub fn standardize(catalogues: &[Catalogue]) -> Result<Catalogue> {
    if catalogues.is_empty() {
        return Err(Error::SchemaViolation(
            "no catalogues to standardize".into(),
        ));
    }
    let mut items: Vec<String> = Vec::new();
    let mut truth: Option<String> = None;
    for c in catalogues {
        for item in &c.items {
            if !items.contains(item) {
                items.push(item.clone());
            }
        }
        if truth.is_none() {
            if let Some(t) = c.truth_index {
                truth = Some(c.items[t].clone());
            }
        }
    }
    let truth_index = truth.and_then(|t| items.iter().position(|x| *x == t));
    Catalogue::new(items, truth_index)
}

/// Each expert proposes an answer; the deduplicated proposals form the
/// catalogue and every expert votes for its own proposal.
pub fn propose_then_vote(responses: &[String]) -> (Catalogue, Vec<Ballot>) {
    let mut items: Vec<String> = Vec::new();
    let mut ballots = Vec::with_capacity(responses.len());
    for (expert, r) in responses.iter().enumerate() {
        let choice = match items.iter().position(|x| x == r) {
            Some(i) => i,
            None => {
                items.push(r.clone());
                items.len() - 1
            }
        };
        ballots.push(Ballot { expert, choice });
    }
    (
        Catalogue {
            items,
            truth_index: None,
        },
        ballots,
    )
}

/// Weighted tally: the unique item whose supporting weight strictly exceeds
/// the quota wins; otherwise the winner is uniform among the max-weight
/// items. Randomness is only consumed on a genuine tie.
pub fn tally_weighted(
    ballots: &[Ballot],
    catalogue: &Catalogue,
    theta: &[f64],
    quota: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    if catalogue.is_empty() {
        return Err(Error::SchemaViolation("empty catalogue".into()));
    }
    let mut weights = vec![0.0f64; catalogue.len()];
    for b in ballots {
        let w = theta.get(b.expert).ok_or(Error::InvalidParameter {
            name: "theta",
            reason: format!("no weight for expert {}", b.expert),
        })?;
        if b.choice >= catalogue.len() {
            return Err(Error::SchemaViolation(format!(
                "ballot choice {} out of catalogue bounds",
                b.choice
            )));
        }
        weights[b.choice] += w;
    }
    let over: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > quota).collect();
    if over.len() == 1 {
        return Ok(over[0]);
    }
    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] == max).collect();
    if tied.len() == 1 {
        Ok(tied[0])
    } else {
        Ok(tied[rng.gen_range(0..tied.len())])
    }
}

/// Binary score of a tally outcome against the catalogue's ground truth.
pub fn score(winner: usize, catalogue: &Catalogue) -> Result<u8> {
    let truth = catalogue.truth_index.ok_or(Error::MissingTruth)?;
    Ok(u8::from(winner == truth))
}

/// Realized egalitarian majority score from per-member correctness: strict
/// majority correct wins, an exact split is a fair coin.
pub fn realized_majority_score(
    outcomes: &[bool],
    committee: &[usize],
    tie_rng: &mut impl Rng,
) -> bool {
    let correct = committee.iter().filter(|&&i| outcomes[i]).count();
    let n = committee.len();
    if 2 * correct > n {
        true
    } else if 2 * correct == n {
        tie_rng.gen::<bool>()
    } else {
        false
    }
}

/// Realized weighted score: the correct side wins on strict quota excess,
/// an exact-quota stand-off is a fair coin.
pub fn realized_weighted_score(
    outcomes: &[bool],
    theta: &[f64],
    quota: f64,
    tie_rng: &mut impl Rng,
) -> bool {
    let correct_weight: f64 = outcomes
        .iter()
        .zip(theta)
        .filter(|(&ok, _)| ok)
        .map(|(_, &w)| w)
        .sum();
    if correct_weight > quota {
        true
    } else if correct_weight == quota {
        tie_rng.gen::<bool>()
    } else {
        false
    }
}

/// Per-expert correctness for one round. Bernoulli experts draw from the
/// shared stream, trace experts replay their sequence, remote experts are
/// prompted and parsed against the context's truth.
pub fn sample_outcomes(
    experts: &[ExpertSpec],
    context: &TaskContext,
    round: usize,
    rng: &mut impl Rng,
    remote: Option<&RemoteClient>,
) -> Result<Vec<bool>> {
    experts
        .iter()
        .enumerate()
        .map(|(i, spec)| match spec {
            ExpertSpec::Bernoulli { p } => Ok(rng.gen::<f64>() < *p),
            ExpertSpec::Trace { outcomes } => {
                outcomes.get(round).copied().ok_or(Error::TraceUnderrun(i))
            }
            ExpertSpec::Remote { endpoint } => {
                let client = remote.ok_or(Error::NetworkDisabled)?;
                let prompt = render_prompt(
                    context.domain,
                    &context.question,
                    context.choices.as_deref(),
                )?;
                let completion = client.query(endpoint, &prompt)?;
                let answer = parse_response(context.domain, &completion, None, rng);
                Ok(answers_match(context.domain, &answer, &context.truth))
            }
        })
        .collect()
}

const GSM8K_TEMPLATE: &str = "### Instructions:
1. Read the question carefully and identify what is being asked.
2. Solve the problem methodically, showing each step clearly.
3. Double-check your calculations before finalizing the answer.
4. Your final output MUST follow EXACTLY this format:

### Reasoning:
[Your step-by-step reasoning here]

### Final Answer: [Numerical Value]

### Required Output Format Rules:
- Only numbers allowed in final answer (e.g., 42, 3.14, 2/3)
- If uncertain, return ### Final Answer: 0
- No additional text after final answer
- Final answer must be the last line

### Question:
{question}

### Choices:
{choices}

### Reasoning:
";

const CQA_TEMPLATE: &str = "### Instructions:
1. Read the question carefully and identify what is being asked.
2. Solve the problem methodically, showing each step clearly.
3. Double-check your calculations before finalizing the answer.
4. Your final output MUST follow EXACTLY this format:

### Reasoning:
[Your step-by-step reasoning here]

### Final Answer: One of 5 catagories [A, B, C, D, E]

### Required Output Format Rules:
- Only numbers are allowed in the final answer (e.g., A, B, C, D, E)
- If you cannot determine the answer, you MUST pick a random answer from [A, B, C, D, E].
- No additional text, explanations, or characters after the final answer.
- The final answer line must be the very last line of your response.

### Question:
{question}

### Choices:
{choices}

### Reasoning:
";

const BOOLQ_TEMPLATE: &str = "### Instructions:
1. Read the question carefully and identify what is being asked.
2. Solve the problem methodically, showing each step clearly.
3. Double-check your calculations before finalizing the answer.
4. Your final output MUST follow EXACTLY this format:

### Reasoning:
[Your step-by-step reasoning here]

### Final Answer: One of 2 catagories [true, false]

### Required Output Format Rules:
- Only numbers are allowed in the final answer (e.g., true, false)
- If you cannot determine the answer, you MUST pick a random answer from [true, false].
- No additional text, explanations, or characters after the final answer.
- The final answer line must be the very last line of your response.

### Question:
{question}

### Reasoning:
";

/// Template text for a domain, before substitution.
pub fn prompt_template(domain: Domain) -> &'static str {
    match domain {
        Domain::Gsm8k => GSM8K_TEMPLATE,
        Domain::CommonsenseQa => CQA_TEMPLATE,
        Domain::BoolQ => BOOLQ_TEMPLATE,
    }
}

/// Instantiates the domain template with the question and newline-joined
/// choices substituted byte-for-byte.
pub fn render_prompt(domain: Domain, question: &str, choices: Option<&[String]>) -> Result<String> {
    let template = prompt_template(domain);
    let rendered = template.replace("{question}", question);
    if template.contains("{choices}") {
        let joined = choices.map(|c| c.join("\n")).unwrap_or_default();
        Ok(rendered.replace("{choices}", &joined))
    } else {
        Ok(rendered)
    }
}

fn numeric_answer_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    // Fraction alternative first: ordered alternation would otherwise stop
    // at the numerator of "2/3".
    RE.get_or_init(|| {
        Regex::new(r"(?i)Final Answer:\s*([-+]?\d+/\d+|-?\d+\.?\d*)").expect("static pattern")
    })
}

/// Last numeric final-answer capture, if any.
pub fn parse_numeric_answer(text: &str) -> Option<String> {
    numeric_answer_regex()
        .captures_iter(text)
        .last()
        .map(|c| c[1].to_string())
}

/// Parses a completion into an answer string. Numeric domains take the last
/// final-answer capture and fall back to "0". Categorical domains match a
/// catalogue token after the last final-answer marker and fall back to a
/// uniform random catalogue item.
pub fn parse_response(
    domain: Domain,
    text: &str,
    catalogue: Option<&Catalogue>,
    rng: &mut impl Rng,
) -> String {
    match domain {
        Domain::Gsm8k => parse_numeric_answer(text).unwrap_or_else(|| "0".to_string()),
        Domain::CommonsenseQa | Domain::BoolQ => {
            let items: Vec<String> = match catalogue {
                Some(c) => c.items().to_vec(),
                None => match domain {
                    Domain::CommonsenseQa => ["A", "B", "C", "D", "E"]
                        .iter()
                        .map(|s| s.to_string())
                        .collect(),
                    _ => ["true", "false"].iter().map(|s| s.to_string()).collect(),
                },
            };
            if let Some(found) = parse_categorical_answer(text, &items) {
                return found;
            }
            items[rng.gen_range(0..items.len())].clone()
        }
    }
}

fn parse_categorical_answer(text: &str, items: &[String]) -> Option<String> {
    let lower = text.to_ascii_lowercase();
    let marker = "final answer:";
    let start = lower.rfind(marker)? + marker.len();
    let tail = &lower[start..];
    let mut best: Option<(usize, usize)> = None; // (position, item index)
    for (idx, item) in items.iter().enumerate() {
        let needle = item.to_ascii_lowercase();
        if let Some(pos) = tail.find(&needle) {
            let better = match best {
                None => true,
                Some((bp, bi)) => pos < bp || (pos == bp && items[bi].len() < item.len()),
            };
            if better {
                best = Some((pos, idx));
            }
        }
    }
    best.map(|(_, idx)| items[idx].clone())
}

/// Reduced-fraction form of a decimal or a/b answer string.
fn canonical_fraction(s: &str) -> Option<(i128, i128)> {
    let t = s.trim();
    let (num, den): (i128, i128) = if let Some((a, b)) = t.split_once('/') {
        (a.trim().parse().ok()?, b.trim().parse().ok()?)
    } else if let Some((int, frac)) = t.split_once('.') {
        let digits = frac.len() as u32;
        if digits > 18 {
            return None;
        }
        let scale = 10i128.checked_pow(digits)?;
        let sign = if int.trim_start().starts_with('-') {
            -1
        } else {
            1
        };
        let whole: i128 = if int.is_empty() || int == "-" || int == "+" {
            0
        } else {
            int.trim().parse().ok()?
        };
        let frac_digits: i128 = if frac.is_empty() {
            0
        } else {
            frac.parse().ok()?
        };
        (whole * scale + sign * frac_digits, scale)
    } else {
        (t.parse().ok()?, 1)
    };
    if den == 0 {
        return None;
    }
    let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i128;
    let sign = if (num < 0) != (den < 0) && num != 0 {
        -1
    } else {
        1
    };
    Some((sign * (num / g).abs(), (den / g).abs()))
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Whether two answers agree: canonicalized fraction comparison for numeric
/// domains ("2.0" matches "2", "4/6" matches "2/3"), case-insensitive exact
/// match for categorical ones.
pub fn answers_match(domain: Domain, a: &str, b: &str) -> bool {
    match domain {
        Domain::Gsm8k => match (canonical_fraction(a), canonical_fraction(b)) {
            (Some(x), Some(y)) => x == y,
            _ => a.trim() == b.trim(),
        },
        Domain::CommonsenseQa | Domain::BoolQ => a.trim().eq_ignore_ascii_case(b.trim()),
    }
}

/// Where and how to reach a remote expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    /// May be left empty in configs; REMOTE_EXPERT_URL fills it at load.
    #[serde(default)]
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub bearer_token: Option<String>,
    /// Dot path to the completion text inside the response JSON.
    #[serde(default = "default_text_path")]
    pub text_path: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_text_path() -> String {
    "text".to_string()
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    2
}

impl RemoteEndpoint {
    /// Reads REMOTE_EXPERT_URL and REMOTE_EXPERT_TOKEN.
    pub fn from_env(model: &str) -> Option<Self> {
        let url = std::env::var("REMOTE_EXPERT_URL").ok()?;
        Some(Self {
            url,
            model: model.to_string(),
            bearer_token: std::env::var("REMOTE_EXPERT_TOKEN").ok(),
            text_path: default_text_path(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        })
    }
}

/// JSON-over-HTTP chat adapter. Requests are {"model", "prompt"}; the
/// completion text is pulled from the configured response path.
pub struct RemoteClient {
    agent: reqwest::blocking::Client,
}

impl RemoteClient {
    pub fn new() -> Result<Self> {
        let agent =
            reqwest::blocking::Client::builder()
                .build()
                .map_err(|e| Error::RemoteTransport {
                    retries: 0,
                    reason: e.to_string(),
                })?;
        Ok(Self { agent })
    }

    /// One completion. Timeouts yield an empty string so the parser fallback
    /// applies; other transport failures surface after the retry budget.
    pub fn query(&self, endpoint: &RemoteEndpoint, prompt: &str) -> Result<String> {
        let body = serde_json::json!({ "model": endpoint.model, "prompt": prompt });
        let mut last_error = String::new();
        for _ in 0..=endpoint.retries {
            let mut req = self
                .agent
                .post(&endpoint.url)
                .timeout(Duration::from_millis(endpoint.timeout_ms))
                .json(&body);
            if let Some(token) = &endpoint.bearer_token {
                req = req.bearer_auth(token);
            }
            match req.send() {
                Ok(resp) => {
                    let value: serde_json::Value = match resp.json() {
                        Ok(v) => v,
                        Err(e) => {
                            last_error = format!("bad response body: {e}");
                            continue;
                        }
                    };
                    match extract_path(&value, &endpoint.text_path) {
                        Some(text) => return Ok(text),
                        None => {
                            last_error =
                                format!("no text at path {:?} in response", endpoint.text_path);
                            continue;
                        }
                    }
                }
                Err(e) if e.is_timeout() => return Ok(String::new()),
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(Error::RemoteTransport {
            retries: endpoint.retries,
            reason: last_error,
        })
    }
}

fn extract_path(value: &serde_json::Value, path: &str) -> Option<String> {
    let mut cur = value;
    for seg in path.split('.') {
        cur = match cur {
            serde_json::Value::Array(items) => items.get(seg.parse::<usize>().ok()?)?,
            serde_json::Value::Object(map) => map.get(seg)?,
            _ => return None,
        };
    }
    cur.as_str().map(|s| s.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::votemath::p_maj_egalitarian;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::io::Read as _;

    fn cat(items: &[&str], truth: Option<usize>) -> Catalogue {
        Catalogue::new(items.iter().map(|s| s.to_string()).collect(), truth).unwrap()
    }

    #[test]
    fn bernoulli_extremes_and_determinism() {
        let ctx = TaskContext {
            question: "q".into(),
            choices: None,
            truth: "1".into(),
            domain: Domain::BoolQ,
        };
        let experts = vec![ExpertSpec::bernoulli(1.0), ExpertSpec::bernoulli(0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for round in 0..200 {
            let o = sample_outcomes(&experts, &ctx, round, &mut rng, None).unwrap();
            assert!(o[0]);
            assert!(!o[1]);
        }
        // Same seed, same stream.
        let experts = vec![ExpertSpec::bernoulli(0.37)];
        let draw = |seed: u64| -> Vec<bool> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10_000)
                .map(|r| sample_outcomes(&experts, &ctx, r, &mut rng, None).unwrap()[0])
                .collect()
        };
        assert_eq!(draw(99), draw(99));
    }

    #[test]
    fn trace_replay_and_underrun() {
        let ctx = TaskContext {
            question: "q".into(),
            choices: None,
            truth: "1".into(),
            domain: Domain::BoolQ,
        };
        let experts = vec![ExpertSpec::Trace {
            outcomes: vec![true, false, true],
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_outcomes(&experts, &ctx, 0, &mut rng, None).unwrap()[0]);
        assert!(!sample_outcomes(&experts, &ctx, 1, &mut rng, None).unwrap()[0]);
        assert!(matches!(
            sample_outcomes(&experts, &ctx, 3, &mut rng, None),
            Err(Error::TraceUnderrun(0))
        ));
    }

    #[test]
    fn standardize_union_order() {
        let a = cat(&["cat", "dog", "mouse"], None);
        let b = cat(&["mouse", "eagle", "fly"], None);
        let u = standardize(&[a.clone(), b]).unwrap();
        assert_eq!(u.items(), &["cat", "dog", "mouse", "eagle", "fly"]);
        let same = standardize(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(same.items(), a.items());
        let s = standardize(&[cat(&["a"], None), cat(&["b"], None)]).unwrap();
        assert_eq!(s.items(), &["a", "b"]);
    }

    #[test]
    fn standardize_sandwich_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pool = ["w", "x", "y", "z", "q", "r"];
        for _ in 0..200 {
            let cats: Vec<Catalogue> = (0..rng.gen_range(1..4))
                .map(|_| {
                    let k = rng.gen_range(1..=pool.len());
                    let mut items: Vec<&str> = pool.to_vec();
                    items.shuffle(&mut rng);
                    cat(&items[..k], None)
                })
                .collect();
            let union = standardize(&cats).unwrap();
            // Intersection is contained in the result...
            for item in pool {
                let in_all = cats.iter().all(|c| c.position(item).is_some());
                if in_all {
                    assert!(union.position(item).is_some());
                }
            }
            // ...and the result is contained in the union.
            for item in union.items() {
                assert!(cats.iter().any(|c| c.position(item).is_some()));
            }
        }
    }

    #[test]
    fn propose_then_vote_examples() {
        let (c, b) = propose_then_vote(&["42".into(), "42".into(), "41".into()]);
        assert_eq!(c.items(), &["42", "41"]);
        assert_eq!(
            b,
            vec![
                Ballot {
                    expert: 0,
                    choice: 0
                },
                Ballot {
                    expert: 1,
                    choice: 0
                },
                Ballot {
                    expert: 2,
                    choice: 1
                },
            ]
        );
        let (c, b) = propose_then_vote(&["x".into(), "x".into()]);
        assert_eq!(c.len(), 1);
        assert!(b.iter().all(|b| b.choice == 0));
        let (c, _) = propose_then_vote(&["a".into(), "b".into(), "c".into(), "d".into()]);
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn tally_weighted_rules() {
        let c = cat(&["A", "B"], Some(0));
        let ballots = [
            Ballot {
                expert: 0,
                choice: 0,
            },
            Ballot {
                expert: 1,
                choice: 0,
            },
            Ballot {
                expert: 2,
                choice: 1,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = tally_weighted(&ballots, &c, &[1.0, 1.0, 1.0], 1.5, &mut rng).unwrap();
        assert_eq!(w, 0);
        // Dictator: follows its own ballot.
        let w = tally_weighted(&ballots[..3], &c, &[0.0, 0.0, 3.0], 1.5, &mut rng).unwrap();
        assert_eq!(w, 1);
        // Tie: uniform but seed-deterministic.
        let two = [
            Ballot {
                expert: 0,
                choice: 0,
            },
            Ballot {
                expert: 1,
                choice: 1,
            },
        ];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| tally_weighted(&two, &c, &[1.0, 1.0], 1.0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        let outcomes = draw(5);
        assert!(outcomes.contains(&0) && outcomes.contains(&1));
    }

    #[test]
    fn tally_plurality_consumes_no_randomness() {
        // Odd committee, equal weights, binary catalogue: strict majority
        // always exists, so the tie stream is untouched.
        let c = cat(&["A", "B"], Some(0));
        let ballots = [
            Ballot {
                expert: 0,
                choice: 0,
            },
            Ballot {
                expert: 1,
                choice: 1,
            },
            Ballot {
                expert: 2,
                choice: 1,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        let before: u64 = rng.gen();
        let mut rng = ChaCha8Rng::seed_from_u64(777);
        let w = tally_weighted(&ballots, &c, &[1.0, 1.0, 1.0], 1.5, &mut rng).unwrap();
        assert_eq!(w, 1);
        assert_eq!(rng.gen::<u64>(), before);
    }

    #[test]
    fn score_rules() {
        let c = cat(&["A", "B"], Some(1));
        assert_eq!(score(1, &c).unwrap(), 1);
        assert_eq!(score(0, &c).unwrap(), 0);
        let single = cat(&["only"], Some(0));
        assert_eq!(score(0, &single).unwrap(), 1);
        let no_truth = cat(&["A"], None);
        assert!(matches!(score(0, &no_truth), Err(Error::MissingTruth)));
    }

    #[test]
    fn realized_scores_match_catalogue_path() {
        // The boolean fast path agrees with building a binary catalogue and
        // running the full tally.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let n = rng.gen_range(1..=6);
            let outcomes: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let quota: f64 = theta.iter().sum::<f64>() / 2.0;
            if quota == 0.0 {
                continue;
            }
            let c = cat(&["truth", "other"], Some(0));
            let ballots: Vec<Ballot> = outcomes
                .iter()
                .enumerate()
                .map(|(expert, &ok)| Ballot {
                    expert,
                    choice: usize::from(!ok),
                })
                .collect();
            let mut tie_a = ChaCha8Rng::seed_from_u64(1000);
            let mut tie_b = ChaCha8Rng::seed_from_u64(1000);
            let via_tally = tally_weighted(&ballots, &c, &theta, quota, &mut tie_a).unwrap() == 0;
            let direct = realized_weighted_score(&outcomes, &theta, quota, &mut tie_b);
            assert_eq!(via_tally, direct);
        }
    }

    #[test]
    fn simulated_majority_matches_analytic_accuracy() {
        // Empirical majority accuracy over many rounds sits within 3 binomial
        // standard deviations of the exact committee accuracy.
        let p = [0.8, 0.7, 0.6, 0.55, 0.4];
        let expected = p_maj_egalitarian(&p).unwrap();
        let experts: Vec<ExpertSpec> = p.iter().map(|&x| ExpertSpec::bernoulli(x)).collect();
        let committee: Vec<usize> = (0..p.len()).collect();
        let ctx = TaskContext {
            question: "q".into(),
            choices: None,
            truth: "t".into(),
            domain: Domain::BoolQ,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let mut tie_rng = ChaCha8Rng::seed_from_u64(999);
        let rounds = 100_000usize;
        let mut wins = 0usize;
        for round in 0..rounds {
            let outcomes = sample_outcomes(&experts, &ctx, round, &mut rng, None).unwrap();
            if realized_majority_score(&outcomes, &committee, &mut tie_rng) {
                wins += 1;
            }
        }
        let emp = wins as f64 / rounds as f64;
        let sigma = (expected * (1.0 - expected) / rounds as f64).sqrt();
        assert!(
            (emp - expected).abs() <= 3.0 * sigma,
            "empirical {emp} vs analytic {expected} (3 sigma = {})",
            3.0 * sigma
        );
    }

    #[test]
    fn prompt_templates_contain_markers() {
        let g = render_prompt(Domain::Gsm8k, "1+1?", None).unwrap();
        assert!(g.contains("### Final Answer: [Numerical Value]"));
        assert!(g.contains("### Question:\n1+1?"));
        let b = render_prompt(Domain::BoolQ, "is it?", None).unwrap();
        assert!(b.contains("[true, false]"));
        let choices = vec!["A) x".to_string(), "B) y".to_string()];
        let c = render_prompt(Domain::CommonsenseQa, "which?", Some(&choices)).unwrap();
        assert!(c.contains("[A, B, C, D, E]"));
        assert!(c.contains("A) x\nB) y"));
    }

    #[test]
    fn prompt_is_byte_exact_instantiation() {
        let q = "How many?";
        let rendered = render_prompt(Domain::Gsm8k, q, Some(&["1".to_string()])).unwrap();
        let expected = GSM8K_TEMPLATE
            .replace("{question}", q)
            .replace("{choices}", "1");
        assert_eq!(rendered, expected);
    }

    #[test]
    fn parse_numeric_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            parse_response(Domain::Gsm8k, "blah\n### Final Answer: 42", None, &mut rng),
            "42"
        );
        assert_eq!(
            parse_response(Domain::Gsm8k, "no answer line", None, &mut rng),
            "0"
        );
        assert_eq!(
            parse_response(Domain::Gsm8k, "### Final Answer: 2/3", None, &mut rng),
            "2/3"
        );
        assert_eq!(
            parse_response(Domain::Gsm8k, "### Final Answer: -3.5", None, &mut rng),
            "-3.5"
        );
        // Last capture wins.
        assert_eq!(
            parse_response(
                Domain::Gsm8k,
                "final answer: 1\n### Final Answer: 7",
                None,
                &mut rng
            ),
            "7"
        );
    }

    #[test]
    fn parse_categorical_and_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = cat(&["true", "false"], None);
        assert_eq!(
            parse_response(Domain::BoolQ, "### Final Answer: true", Some(&c), &mut rng),
            "true"
        );
        assert_eq!(
            parse_response(Domain::BoolQ, "### Final Answer: FALSE", Some(&c), &mut rng),
            "false"
        );
        // No match: uniform over the catalogue, deterministic per seed.
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| parse_response(Domain::BoolQ, "nothing here", Some(&c), &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        let results = draw(9);
        assert!(results.contains(&"true".to_string()));
        assert!(results.contains(&"false".to_string()));
    }

    #[test]
    fn roundtrip_all_templates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (domain, answer) in [
            (Domain::Gsm8k, "128"),
            (Domain::Gsm8k, "2/3"),
            (Domain::CommonsenseQa, "C"),
            (Domain::BoolQ, "false"),
        ] {
            let prompt = render_prompt(domain, "question?", None).unwrap();
            let completion = format!("{prompt}\nsome reasoning\n### Final Answer: {answer}");
            let parsed = parse_response(domain, &completion, None, &mut rng);
            assert_eq!(parsed, answer, "domain {domain:?}");
        }
    }

    #[test]
    fn numeric_equivalence() {
        assert!(answers_match(Domain::Gsm8k, "2.0", "2"));
        assert!(answers_match(Domain::Gsm8k, "4/6", "2/3"));
        assert!(answers_match(Domain::Gsm8k, "-0.5", "-1/2"));
        assert!(!answers_match(Domain::Gsm8k, "2.01", "2"));
        assert!(answers_match(Domain::BoolQ, "True", "true"));
        assert!(!answers_match(Domain::BoolQ, "true", "false"));
    }

    #[test]
    fn remote_stub_roundtrip() {
        use std::io::Write;
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let _ = stream.read(&mut buf);
            let body = "{\"text\":\"### Final Answer: 42\"}";
            let resp = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(resp.as_bytes()).unwrap();
        });
        let endpoint = RemoteEndpoint {
            url: format!("http://{addr}/v1/complete"),
            model: "stub".into(),
            bearer_token: None,
            text_path: "text".into(),
            timeout_ms: 5000,
            retries: 0,
        };
        let client = RemoteClient::new().unwrap();
        let text = client.query(&endpoint, "prompt").unwrap();
        assert_eq!(text, "### Final Answer: 42");
        handle.join().unwrap();
    }

    #[test]
    fn remote_timeout_yields_empty() {
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            // Accept and hold the connection past the client timeout.
            let (stream, _) = listener.accept().unwrap();
            std::thread::sleep(Duration::from_millis(600));
            drop(stream);
        });
        let endpoint = RemoteEndpoint {
            url: format!("http://{addr}/slow"),
            model: "stub".into(),
            bearer_token: None,
            text_path: "text".into(),
            timeout_ms: 150,
            retries: 0,
        };
        let client = RemoteClient::new().unwrap();
        let text = client.query(&endpoint, "prompt").unwrap();
        assert_eq!(text, "");
        handle.join().unwrap();
    }

    #[test]
    fn remote_malformed_body_errors() {
        use std::io::Write;
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            for _ in 0..2 {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 4096];
                let _ = stream.read(&mut buf);
                let body = "not json";
                let resp = format!(
                    "HTTP/1.1 200 OK\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    body.len(),
                    body
                );
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        let endpoint = RemoteEndpoint {
            url: format!("http://{addr}/bad"),
            model: "stub".into(),
            bearer_token: None,
            text_path: "text".into(),
            timeout_ms: 5000,
            retries: 1,
        };
        let client = RemoteClient::new().unwrap();
        let err = client.query(&endpoint, "prompt").unwrap_err();
        assert!(matches!(err, Error::RemoteTransport { retries: 1, .. }));
        handle.join().unwrap();
    }

    #[test]
    fn trace_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.txt");
        std::fs::write(&path, "1\n0\n1\n\n").unwrap();
        let spec = ExpertSpec::trace_from_file(&path).unwrap();
        assert_eq!(
            spec,
            ExpertSpec::Trace {
                outcomes: vec![true, false, true]
            }
        );
        std::fs::write(&path, "1\n2\n").unwrap();
        assert!(ExpertSpec::trace_from_file(&path).is_err());
    }
}
