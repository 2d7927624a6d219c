mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use auction_arena::agents::protocol::{decode, encode, AgentMessage, CoreMessage, PROTOCOL_VERSION};
use auction_arena::agents::{AgentContext, AgentError, BiddingStrategy, ExternalAgent, ExternalEndpoint};
use auction_arena::run_episode;
use common::*;

#[derive(Clone, Copy)]
enum Behaviour {
    Constant(f64),
    /// Answers `n` requests, then goes silent.
    HangAfter(usize),
    Garbage,
    WrongVersion,
}

/// Serves one session and returns the requests seen and the final message.
fn serve(behaviour: Behaviour) -> (String, thread::JoinHandle<(usize, Option<CoreMessage>)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut out = stream.try_clone().unwrap();
        let mut requests = 0;
        let mut last = None;
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            let message: CoreMessage = decode(&line).unwrap();
            let reply = match (&message, behaviour) {
                (CoreMessage::Hello { .. }, Behaviour::WrongVersion) => encode(&AgentMessage::Hello { protocol_version: 99 }),
                (CoreMessage::Hello { .. }, _) => encode(&AgentMessage::Hello { protocol_version: PROTOCOL_VERSION }),
                (CoreMessage::BidRequest { seq, .. }, b) => {
                    requests += 1;
                    match b {
                        Behaviour::Constant(a) => encode(&AgentMessage::BidResponse { seq: *seq, alpha: Some(a), bids: None }),
                        Behaviour::HangAfter(n) if requests > n => String::new(),
                        Behaviour::HangAfter(_) => encode(&AgentMessage::BidResponse { seq: *seq, alpha: Some(20.0), bids: None }),
                        Behaviour::Garbage => "{\"type\":\"bid_response\"\n".to_string(),
                        Behaviour::WrongVersion => unreachable!(),
                    }
                }
                (CoreMessage::EpisodeEnd { .. }, _) => {
                    last = Some(message);
                    break;
                }
            };
            if !reply.is_empty() && out.write_all(reply.as_bytes()).is_err() {
                break;
            }
        }
        (requests, last)
    });
    (address, handle)
}

fn context(budget: f64) -> AgentContext {
    AgentContext { agent_index: 0, category_index: 0, budget, cpa_constraint: 30.0, num_steps: 4 }
}

fn tcp_agent(address: &str, timeout_ms: u64) -> Result<Box<dyn BiddingStrategy>, AgentError> {
    ExternalAgent::connect(&ExternalEndpoint::Tcp(address.to_string()), &context(1.0), Duration::from_millis(timeout_ms))
        .map(|a| Box::new(a) as Box<dyn BiddingStrategy>)
}

#[test]
fn remote_constant_alpha_matches_in_process_agent() {
    let config = small_config(5, 4, 200, 3);
    let profiles: Vec<_> = (0..5).map(|i| profile(i, 1.0, 30.0)).collect();
    let others = || (1..5).map(|i| fixed_alpha(15.0 + 5.0 * i as f64));

    let (address, server) = serve(Behaviour::Constant(25.0));
    let mut remote: Vec<Box<dyn BiddingStrategy>> = vec![tcp_agent(&address, 2000).unwrap()];
    remote.extend(others());
    let remote_result = run_episode(&config, &profiles, remote, uniform_values(5, 4, 50, 9), 0, None).unwrap();
    let (requests, last) = server.join().unwrap();

    let mut local: Vec<Box<dyn BiddingStrategy>> = vec![fixed_alpha(25.0)];
    local.extend(others());
    let local_result = run_episode(&config, &profiles, local, uniform_values(5, 4, 50, 9), 0, None).unwrap();

    assert_eq!(requests, 4);
    let (r, l) = (&remote_result.agents[0], &local_result.agents[0]);
    assert!(!r.faulted);
    assert_eq!((r.total_value, r.total_cost, r.wins), (l.total_value, l.total_cost, l.wins));
    match last {
        Some(CoreMessage::EpisodeEnd { reward, score, .. }) => {
            assert!((reward - r.total_value).abs() <= 1e-9);
            assert_eq!(score, r.score);
        }
        other => panic!("expected episode_end, got {other:?}"),
    }
}

#[test]
fn silent_agent_times_out_and_bids_zero() {
    let config = small_config(4, 4, 160, 5);
    let profiles: Vec<_> = (0..4).map(|i| profile(i, 1.0, 30.0)).collect();
    let (address, server) = serve(Behaviour::HangAfter(2));
    let mut strategies = vec![tcp_agent(&address, 200).unwrap()];
    strategies.extend((1..4).map(|_| fixed_alpha(20.0)));
    let (result, _, records) = run_logged(&config, &profiles, strategies, uniform_values(4, 4, 40, 1), 48);
    assert!(result.agents[0].faulted);
    for r in records.iter().filter(|r| r.advertiser_index == 0 && r.time_step_index >= 2) {
        assert_eq!(r.bid, 0.0);
    }
    assert!(records.iter().any(|r| r.advertiser_index == 0 && r.time_step_index < 2 && r.bid > 0.0));
    drop(server);
}

#[test]
fn malformed_reply_faults_the_agent() {
    let config = small_config(3, 2, 20, 5);
    let profiles: Vec<_> = (0..3).map(|i| profile(i, 1.0, 30.0)).collect();
    let (address, _server) = serve(Behaviour::Garbage);
    let mut strategies = vec![tcp_agent(&address, 1000).unwrap()];
    strategies.extend((1..3).map(|_| fixed_alpha(20.0)));
    let result = run_episode(&config, &profiles, strategies, uniform_values(3, 2, 10, 1), 0, None).unwrap();
    assert!(result.agents[0].faulted);
    assert_eq!(result.agents[0].total_value, 0.0);
}

#[test]
fn startup_failures_are_reported() {
    let (address, _server) = serve(Behaviour::WrongVersion);
    assert!(matches!(tcp_agent(&address, 1000), Err(AgentError::Protocol(_))));
    let closed = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string();
    assert!(matches!(tcp_agent(&closed, 1000), Err(AgentError::Io(_))));
}
