//! The adapter line protocol: one JSON object per line on the adapter's
//! standard input, one reply per line on its standard output.
//!
//! Requests carry an `op` field (`info`, `tokenize`, `mask_dist`,
//! `seq_score`, `hidden`, `attn`) and an optional `id` that is echoed back.
//! Failures are answered with `{"error":{"code","message"}}`; the `info`
//! reply nests the adapter description under `info`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use winoprobe_core::bridge::toy::ToyModel;
use winoprobe_core::bridge::{
    attention_checked, distributions_checked, hidden_state_checked, sequence_logprob_checked, tokenize_checked, AdapterInfo,
    AttentionWeights, BridgeError, HeadId, LanguageModel, Locator, MaskQuery, TokenizedContext, TruncatedDistribution,
    PROTOCOL_VERSION,
};
use winoprobe_core::schema::Span;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Info,
    Tokenize {
        words: Vec<String>,
    },
    MaskDist {
        tokens: Vec<u32>,
        mask_positions: Vec<usize>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        head_mask: Vec<HeadId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nucleus_p: Option<f64>,
    },
    SeqScore {
        tokens: Vec<u32>,
    },
    Hidden {
        tokens: Vec<u32>,
    },
    Attn {
        tokens: Vec<u32>,
        query: Span,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        head_mask: Vec<HeadId>,
    },
}

#[derive(Serialize, Deserialize)]
struct Info {
    info: AdapterInfo,
}

#[derive(Serialize, Deserialize)]
struct Distributions {
    distributions: Vec<TruncatedDistribution>,
}

#[derive(Serialize, Deserialize)]
struct LogProb {
    logprob: f64,
}

#[derive(Serialize, Deserialize)]
struct Vector {
    vector: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Weights {
    weights: AttentionWeights,
}

#[derive(Serialize, Deserialize)]
struct WireError {
    code: String,
    message: String,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reply serializes")
}

/// Answers one request against `model`.
pub fn handle(model: &mut dyn LanguageModel, req: Request) -> Result<Value, BridgeError> {
    Ok(match req {
        Request::Info => to_value(&Info { info: model.info().clone() }),
        Request::Tokenize { words } => to_value(&tokenize_checked(model, &words)?),
        Request::MaskDist { tokens, mask_positions, head_mask, nucleus_p } => {
            let q = MaskQuery { tokens, mask_positions, head_mask, nucleus_p };
            to_value(&Distributions { distributions: distributions_checked(model, &q)? })
        }
        Request::SeqScore { tokens } => to_value(&LogProb { logprob: sequence_logprob_checked(model, &tokens)? }),
        Request::Hidden { tokens } => to_value(&Vector { vector: hidden_state_checked(model, &tokens)? }),
        Request::Attn { tokens, query, head_mask } => to_value(&Weights { weights: attention_checked(model, &tokens, query, &head_mask)? }),
    })
}

fn error_reply(e: &BridgeError) -> Value {
    json!({ "error": { "code": e.code(), "message": e.to_string() } })
}

/// Reply line for one request line.
pub fn reply(model: &mut dyn LanguageModel, line: &str) -> String {
    let parsed: Result<Value, _> = serde_json::from_str(line);
    let mut out = match parsed {
        Err(e) => error_reply(&BridgeError::BadRequest(format!("malformed request: {e}"))),
        Ok(mut v) => {
            let id = v.as_object_mut().and_then(|o| o.remove("id"));
            let mut r = match serde_json::from_value::<Request>(v) {
                Ok(req) => handle(model, req).unwrap_or_else(|e| error_reply(&e)),
                Err(e) => error_reply(&BridgeError::BadRequest(e.to_string())),
            };
            if let (Some(id), Some(o)) = (id, r.as_object_mut()) {
                o.insert("id".into(), id);
            }
            r
        }
    };
    if !out.is_object() {
        out = error_reply(&BridgeError::Internal("reply is not an object".into()));
    }
    out.to_string()
}

/// Serves requests until the input closes.
pub fn serve(model: &mut dyn LanguageModel, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", reply(model, &line))?;
        output.flush()?;
    }
    Ok(())
}

/// A model served by a child process.
pub struct ProcessModel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    info: AdapterInfo,
    next_id: u64,
}

impl ProcessModel {
    /// Starts `command` (program and whitespace-separated arguments) and
    /// performs the `info` handshake.
    pub fn spawn(command: &str) -> Result<Self, BridgeError> {
        let mut parts = command.split_whitespace();
        let program = parts.next().ok_or_else(|| BridgeError::Locator(command.into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BridgeError::Internal(format!("cannot start adapter {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let placeholder = AdapterInfo {
            id: String::new(),
            protocol: PROTOCOL_VERSION,
            vocab_size: 0,
            layers: 0,
            heads: 0,
            hidden_size: 0,
            mask_token: 0,
            cls_token: None,
            sep_token: None,
            capabilities: Default::default(),
        };
        let mut m = ProcessModel { child, stdin, stdout, info: placeholder, next_id: 0 };
        let info = m.call::<Info>(&Request::Info)?.info;
        if info.protocol != PROTOCOL_VERSION {
            return Err(BridgeError::Protocol(format!("adapter speaks protocol {} (expected {PROTOCOL_VERSION})", info.protocol)));
        }
        m.info = info;
        Ok(m)
    }

    fn call<T: for<'de> Deserialize<'de>>(&mut self, req: &Request) -> Result<T, BridgeError> {
        self.next_id += 1;
        let mut v = to_value(req);
        v.as_object_mut().expect("request object").insert("id".into(), json!(self.next_id));
        let io = |e: std::io::Error| BridgeError::Internal(format!("adapter stream: {e}"));
        writeln!(self.stdin, "{v}").map_err(io)?;
        self.stdin.flush().map_err(io)?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line).map_err(io)? == 0 {
            return Err(BridgeError::Internal("adapter closed its output".into()));
        }
        let mut r: Value = serde_json::from_str(&line).map_err(|e| BridgeError::Protocol(format!("malformed reply: {e}")))?;
        let obj = r.as_object_mut().ok_or_else(|| BridgeError::Protocol("reply is not an object".into()))?;
        if let Some(id) = obj.remove("id") {
            if id != json!(self.next_id) {
                return Err(BridgeError::Protocol(format!("reply id {id} for request {}", self.next_id)));
            }
        }
        if let Some(e) = obj.remove("error") {
            let e: WireError = serde_json::from_value(e).map_err(|e| BridgeError::Protocol(format!("malformed error: {e}")))?;
            return Err(BridgeError::from_wire(&e.code, e.message));
        }
        serde_json::from_value(r).map_err(|e| BridgeError::Protocol(format!("unexpected reply shape: {e}")))
    }
}

impl Drop for ProcessModel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl LanguageModel for ProcessModel {
    fn info(&self) -> &AdapterInfo {
        &self.info
    }

    fn tokenize(&mut self, words: &[String]) -> Result<TokenizedContext, BridgeError> {
        self.call(&Request::Tokenize { words: words.to_vec() })
    }

    fn mask_distributions(&mut self, q: &MaskQuery) -> Result<Vec<TruncatedDistribution>, BridgeError> {
        let req = Request::MaskDist {
            tokens: q.tokens.clone(),
            mask_positions: q.mask_positions.clone(),
            head_mask: q.head_mask.clone(),
            nucleus_p: q.nucleus_p,
        };
        Ok(self.call::<Distributions>(&req)?.distributions)
    }

    fn sequence_logprob(&mut self, tokens: &[u32]) -> Result<f64, BridgeError> {
        Ok(self.call::<LogProb>(&Request::SeqScore { tokens: tokens.to_vec() })?.logprob)
    }

    fn hidden_state(&mut self, tokens: &[u32]) -> Result<Vec<f64>, BridgeError> {
        Ok(self.call::<Vector>(&Request::Hidden { tokens: tokens.to_vec() })?.vector)
    }

    fn attention(&mut self, tokens: &[u32], query: Span, head_mask: &[HeadId]) -> Result<AttentionWeights, BridgeError> {
        let req = Request::Attn { tokens: tokens.to_vec(), query, head_mask: head_mask.to_vec() };
        Ok(self.call::<Weights>(&req)?.weights)
    }
}

/// Opens the adapter named by a locator string.
pub fn open_adapter(locator: &str) -> Result<Box<dyn LanguageModel>, BridgeError> {
    match Locator::parse(locator)? {
        Locator::Toy(cfg) => Ok(Box::new(ToyModel::builtin(cfg))),
        Locator::Command(cmd) => Ok(Box::new(ProcessModel::spawn(&cmd)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use winoprobe_core::bridge::toy::{ToyConfig, MASK};

    fn toy() -> ToyModel {
        ToyModel::builtin(ToyConfig::default())
    }

    #[test]
    fn requests_use_the_wire_names() {
        let r = Request::MaskDist { tokens: vec![2, 4, 3], mask_positions: vec![1], head_mask: vec![HeadId::new(0, 1)], nucleus_p: Some(0.9) };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"op":"mask_dist","tokens":[2,4,3],"mask_positions":[1],"head_mask":[[0,1]],"nucleus_p":0.9}"#
        );
        let a: Request = serde_json::from_str(r#"{"op":"attn","tokens":[5,6],"query":[0,1]}"#).unwrap();
        assert_eq!(a, Request::Attn { tokens: vec![5, 6], query: Span::new(0, 1), head_mask: vec![] });
    }

    #[test]
    fn replies_echo_ids_and_report_errors() {
        let mut m = toy();
        let info: Value = serde_json::from_str(&reply(&mut m, r#"{"op":"info","id":7}"#)).unwrap();
        assert_eq!(info["id"], 7);
        assert_eq!(info["info"]["protocol"], PROTOCOL_VERSION);
        assert_eq!(info["info"]["id"], m.info().id.as_str());
        let bad: Value = serde_json::from_str(&reply(&mut m, r#"{"op":"nope"}"#)).unwrap();
        assert_eq!(bad["error"]["code"], "BAD_REQUEST");
        let oob: Value = serde_json::from_str(&reply(&mut m, r#"{"op":"mask_dist","tokens":[2,3],"mask_positions":[5]}"#)).unwrap();
        assert_eq!(oob["error"]["code"], "BAD_REQUEST");
        let garbage: Value = serde_json::from_str(&reply(&mut m, "{")).unwrap();
        assert_eq!(garbage["error"]["code"], "BAD_REQUEST");
    }

    #[test]
    fn distribution_reply_shape() {
        let mut m = toy();
        let words: Vec<String> = ["the", "trophy", "is", "large"].iter().map(|s| s.to_string()).collect();
        let mut tokens = m.tokenize(&words).unwrap().tokens;
        tokens[1] = MASK;
        let line = format!(r#"{{"op":"mask_dist","tokens":{tokens:?},"mask_positions":[1],"nucleus_p":0.5}}"#);
        let v: Value = serde_json::from_str(&reply(&mut m, &line)).unwrap();
        let d = &v["distributions"][0];
        assert!(d["entries"][0].as_array().unwrap().len() == 2);
        assert!(d["tail_mass"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn serve_loop_answers_each_line() {
        let mut m = toy();
        let mut out = Vec::new();
        serve(&mut m, "{\"op\":\"info\"}\n\n{\"op\":\"seq_score\",\"tokens\":[]}\n".as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains("logprob"));
    }
}
