//! External-agent wire protocol.
//!
//! One JSON object per line, tagged by `type`. The core speaks first:
//!
//! ```text
//! core  -> {"type":"hello","protocol_version":1,"agent_index":3,"category_index":17,"num_steps":48,"budget":60.0,"cpa_constraint":30.0}
//! agent -> {"type":"hello","protocol_version":1}
//! core  -> {"type":"bid_request","seq":0,"step":0,"remaining_budget":60.0,"time_left":1.0,"values":[...],"sigmas":[...],"history":[]}
//! agent -> {"type":"bid_response","seq":0,"alpha":25.0}        (or "bids":[...])
//! ...
//! core  -> {"type":"episode_end","reward":1.2,"cpa":28.5,"penalty":1.0,"score":1.2}
//! ```
//!
//! Numbers use shortest round-trip decimal formatting. `cpa` is `null` when
//! it is infinite (spend without value).

use serde::{Deserialize, Serialize};

use super::{AgentError, BidDecision, EpisodeSummary, HistoryEntry};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoreMessage {
    Hello {
        protocol_version: u32,
        agent_index: usize,
        category_index: usize,
        num_steps: usize,
        budget: f64,
        cpa_constraint: f64,
    },
    BidRequest {
        seq: u64,
        step: usize,
        remaining_budget: f64,
        time_left: f64,
        values: Vec<f64>,
        sigmas: Vec<f64>,
        history: Vec<HistoryEntry>,
    },
    EpisodeEnd {
        reward: f64,
        cpa: Option<f64>,
        penalty: f64,
        score: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentMessage {
    Hello {
        protocol_version: u32,
    },
    BidResponse {
        seq: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bids: Option<Vec<f64>>,
    },
}

impl CoreMessage {
    pub fn episode_end(summary: &EpisodeSummary) -> Self {
        CoreMessage::EpisodeEnd {
            reward: summary.reward,
            cpa: summary.cpa.is_finite().then_some(summary.cpa),
            penalty: summary.penalty,
            score: summary.score,
        }
    }
}

pub fn encode<T: Serialize>(message: &T) -> String {
    let mut line = serde_json::to_string(message).expect("protocol messages always serialize");
    line.push('\n');
    line
}

pub fn decode<'a, T: Deserialize<'a>>(line: &'a str) -> Result<T, AgentError> {
    serde_json::from_str(line.trim_end()).map_err(|e| AgentError::Protocol(format!("{e}: {:?}", truncate(line))))
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(120) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Checks a reply against the request it answers.
pub fn decision_from_reply(reply: AgentMessage, expected_seq: u64) -> Result<BidDecision, AgentError> {
    match reply {
        AgentMessage::BidResponse { seq, .. } if seq != expected_seq => {
            Err(AgentError::Protocol(format!("reply seq {seq}, expected {expected_seq}")))
        }
        AgentMessage::BidResponse { alpha: Some(a), bids: None, .. } => Ok(BidDecision::Alpha(a)),
        AgentMessage::BidResponse { alpha: None, bids: Some(b), .. } => Ok(BidDecision::Bids(b)),
        AgentMessage::BidResponse { .. } => Err(AgentError::Protocol("bid_response needs exactly one of alpha, bids".into())),
        AgentMessage::Hello { .. } => Err(AgentError::Protocol("unexpected hello".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn field_names_are_stable() {
        let hello = CoreMessage::Hello {
            protocol_version: 1,
            agent_index: 3,
            category_index: 17,
            num_steps: 48,
            budget: 60.0,
            cpa_constraint: 30.0,
        };
        assert_eq!(
            encode(&hello),
            "{\"type\":\"hello\",\"protocol_version\":1,\"agent_index\":3,\"category_index\":17,\"num_steps\":48,\"budget\":60.0,\"cpa_constraint\":30.0}\n"
        );
        let reply: AgentMessage = decode("{\"type\":\"bid_response\",\"seq\":4,\"alpha\":2.5}").unwrap();
        assert_eq!(decision_from_reply(reply, 4).unwrap(), BidDecision::Alpha(2.5));
        let end = CoreMessage::episode_end(&EpisodeSummary { reward: 0.0, cpa: f64::INFINITY, penalty: 1.0, score: 0.0 });
        assert_eq!(encode(&end), "{\"type\":\"episode_end\",\"reward\":0.0,\"cpa\":null,\"penalty\":1.0,\"score\":0.0}\n");
    }

    #[test]
    fn bad_replies_are_protocol_errors() {
        assert!(decode::<AgentMessage>("not json").is_err());
        assert!(decode::<AgentMessage>("{\"type\":\"bid_response\",\"seq\":1,\"alpha\":1,\"extra\":2}").is_err());
        let both: AgentMessage = decode("{\"type\":\"bid_response\",\"seq\":1,\"alpha\":1,\"bids\":[1]}").unwrap();
        assert!(decision_from_reply(both, 1).is_err());
        let neither: AgentMessage = decode("{\"type\":\"bid_response\",\"seq\":1}").unwrap();
        assert!(decision_from_reply(neither, 1).is_err());
        let stale: AgentMessage = decode("{\"type\":\"bid_response\",\"seq\":0,\"alpha\":1}").unwrap();
        assert!(decision_from_reply(stale, 1).is_err());
    }

    proptest! {
        #[test]
        fn numbers_round_trip_exactly(values in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..20), budget in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            let msg = CoreMessage::BidRequest {
                seq: 9,
                step: 3,
                remaining_budget: budget,
                time_left: 0.5,
                sigmas: values.clone(),
                values,
                history: vec![HistoryEntry { step: 2, mean_least_winning_cost: budget, ..Default::default() }],
            };
            let back: CoreMessage = decode(&encode(&msg)).unwrap();
            prop_assert_eq!(back, msg);
        }
    }
}
