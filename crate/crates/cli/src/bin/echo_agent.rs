//! Minimal line-protocol agent for smoke tests.
//!
//! Replies to every bid request with a fixed coefficient. `--hang` stops
//! answering after the hello, `--garbage` answers bid requests with a line
//! that is not JSON, and `--no-hello` exits without greeting.

use std::io::{self, BufRead, Write};

use auction_arena::agents::protocol::{decode, encode, AgentMessage, CoreMessage, PROTOCOL_VERSION};
use clap::Parser;

#[derive(Parser)]
#[command(name = "echo-agent")]
struct Args {
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    #[arg(long)]
    hang: bool,
    #[arg(long)]
    garbage: bool,
    #[arg(long)]
    no_hello: bool,
}

fn main() -> io::Result<()> {
    let args = Args::parse();
    if args.no_hello {
        return Ok(());
    }
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        let reply = match decode::<CoreMessage>(&line) {
            Ok(CoreMessage::Hello { .. }) => encode(&AgentMessage::Hello { protocol_version: PROTOCOL_VERSION }),
            Ok(CoreMessage::BidRequest { seq, .. }) => {
                if args.hang {
                    continue;
                }
                if args.garbage {
                    "not json\n".to_string()
                } else {
                    encode(&AgentMessage::BidResponse { seq, alpha: Some(args.alpha), bids: None })
                }
            }
            Ok(CoreMessage::EpisodeEnd { .. }) => break,
            Err(e) => {
                eprintln!("echo-agent: {e}");
                break;
            }
        };
        out.write_all(reply.as_bytes())?;
        out.flush()?;
    }
    Ok(())
}
