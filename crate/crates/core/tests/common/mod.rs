//! Shared test support: random toy models, brute-force reference
//! computations and a stub distribution server.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::thread::JoinHandle;

use labelprob::model::{Context, LanguageModel, TableModel, TableModelDocument, Token, EOS_MARKER};
use labelprob::Taxonomy;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const SEP: char = '\u{1F}';
pub const PROMPT: &str = "P";

pub struct RandomToy {
    pub model: TableModel,
    pub taxonomy: Taxonomy,
    pub horizon: usize,
}

impl RandomToy {
    pub fn prompt(&self) -> Vec<Token> {
        vec![Token::new(PROMPT).unwrap()]
    }
}

const CODE_POOL: [&str; 5] = ["S1", "S2", "S3", "S4", "S5"];
const FILLER_POOL: [&str; 8] = ["S", "1", "2", "3", "\n", ",", "a", "unsafe"];

/// A random model over at most eight tokens (EOS included) whose reachable
/// contexts up to `horizon` each offer one to three tokens, together with a
/// prefix-free taxonomy of two to four codes drawn from the vocabulary.
pub fn random_toy(rng: &mut ChaCha8Rng) -> RandomToy {
    let k = rng.gen_range(2..=4);
    let mut codes: Vec<&str> = CODE_POOL.choose_multiple(rng, k).copied().collect();
    codes.sort();
    let fillers = rng.gen_range(1..=(7 - k));
    let mut vocabulary: Vec<String> = codes.iter().map(|c| c.to_string()).collect();
    vocabulary.extend(FILLER_POOL.choose_multiple(rng, fillers).map(|s| s.to_string()));
    vocabulary.push(EOS_MARKER.to_owned());
    let horizon = rng.gen_range(2..=6);

    let mut transitions = BTreeMap::new();
    let mut stack = vec![(PROMPT.to_owned(), 0usize)];
    while let Some((key, depth)) = stack.pop() {
        if depth >= horizon {
            continue;
        }
        let branching = rng.gen_range(1..=3);
        let picked: Vec<&String> = vocabulary.choose_multiple(rng, branching).collect();
        let mut weights: Vec<f64> = picked.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        if rng.gen_bool(0.2) {
            // Occasionally make one token dominant.
            weights[0] += 4.0;
        }
        let total: f64 = weights.iter().sum();
        let dist: BTreeMap<String, f64> = picked
            .iter()
            .zip(&weights)
            .map(|(t, w)| ((*t).clone(), w / total))
            .collect();
        for token in dist.keys() {
            if token != EOS_MARKER {
                stack.push((format!("{key}{SEP}{token}"), depth + 1));
            }
        }
        transitions.insert(key, dist);
    }
    let doc = TableModelDocument {
        vocabulary,
        transitions,
        default: BTreeMap::from([(EOS_MARKER.to_owned(), 1.0)]),
    };
    RandomToy {
        model: TableModel::from_document(doc).expect("generated model is valid"),
        taxonomy: Taxonomy::new(&codes).unwrap(),
        horizon,
    }
}

/// Exact marginals by direct recursion over the model, with plain substring
/// containment (exact for prefix-free taxonomies). Returns (marginals, mass).
pub fn brute_force_marginals(
    model: &dyn LanguageModel,
    prompt: &[Token],
    codes: &[&str],
    horizon: usize,
) -> (Vec<f64>, f64) {
    fn walk(
        model: &dyn LanguageModel,
        prompt: &[Token],
        generated: &mut Vec<Token>,
        probability: f64,
        codes: &[&str],
        horizon: usize,
        out: &mut (Vec<f64>, f64),
    ) {
        let ctx = Context::with_generated(prompt.to_vec(), generated.clone()).unwrap();
        let dist = model.next_distribution(&ctx).unwrap();
        for (token, p) in dist.entries() {
            if *p == 0.0 {
                continue;
            }
            let q = probability * p;
            generated.push(token.clone());
            if token.is_eos() || generated.len() == horizon {
                let text: String = generated.iter().map(|t| t.text()).collect();
                for (i, code) in codes.iter().enumerate() {
                    if text.contains(code) {
                        out.0[i] += q;
                    }
                }
                out.1 += q;
            } else {
                walk(model, prompt, generated, q, codes, horizon, out);
            }
            generated.pop();
        }
    }
    let mut out = (vec![0.0; codes.len()], 0.0);
    walk(model, prompt, &mut Vec::new(), 1.0, codes, horizon, &mut out);
    out
}

/// AUC by counting every positive/negative pair.
pub fn pair_count_auc(scores: &[f64], truths: &[bool]) -> f64 {
    let mut correct = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !truths[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if truths[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                correct += 1.0;
            } else if si == sj {
                correct += 0.5;
            }
        }
    }
    correct / pairs
}

/// Micro-F1 from set algebra over (row, column) positions.
pub fn set_micro_f1(gold: &[Vec<bool>], pred: &[Vec<bool>]) -> f64 {
    let cells = |m: &[Vec<bool>]| -> HashSet<(usize, usize)> {
        m.iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().enumerate().filter(|(_, b)| **b).map(move |(c, _)| (r, c)))
            .collect()
    };
    let g = cells(gold);
    let p = cells(pred);
    let tp = g.intersection(&p).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / p.len() as f64;
    let recall = tp / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// What the stub answers for one request context.
pub type StubHandler = dyn Fn(&[String]) -> (u16, String) + Send + Sync;

/// Minimal server for the distribution protocol.
pub struct StubServer {
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    pub url: String,
}

impl StubServer {
    pub fn start(handler: Box<StubHandler>) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let worker = Arc::clone(&server);
        let thread = std::thread::spawn(move || {
            for mut request in worker.incoming_requests() {
                let (status, body) = if request.url() != "/v1/distribution"
                    || *request.method() != tiny_http::Method::Post
                {
                    (404, "{}".to_owned())
                } else {
                    let mut raw = String::new();
                    request.as_reader().read_to_string(&mut raw).unwrap();
                    let parsed: serde_json::Value = serde_json::from_str(&raw).unwrap();
                    let context: Vec<String> = parsed["context"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|v| v.as_str().unwrap().to_owned())
                        .collect();
                    handler(&context)
                };
                let response = tiny_http::Response::from_string(body)
                    .with_status_code(status)
                    .with_header("Content-Type: application/json".parse::<tiny_http::Header>().unwrap());
                let _ = request.respond(response);
            }
        });
        Self {
            server,
            thread: Some(thread),
            url,
        }
    }

    /// Serves the distributions of a table model.
    pub fn serving(model: TableModel) -> Self {
        Self::start(Box::new(move |context: &[String]| {
            let tokens: Vec<Token> = context.iter().map(|s| Token::from_surface(s).unwrap()).collect();
            let ctx = Context::with_generated(tokens[..1].to_vec(), tokens[1..].to_vec()).unwrap();
            let dist = model.next_distribution(&ctx).unwrap();
            let entries: Vec<serde_json::Value> = dist
                .entries()
                .iter()
                .map(|(t, p)| serde_json::json!({"token": t.surface(), "prob": p}))
                .collect();
            (200, serde_json::json!({ "entries": entries }).to_string())
        }))
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
