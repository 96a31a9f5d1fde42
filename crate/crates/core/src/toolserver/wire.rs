//! Newline-delimited wire protocol. One JSON request per line:
//! `{"id": ..., "tool": ..., "params": {...}}`; one JSON response per line:
//! `{"id": ...}` merged with the result envelope. Requests are processed
//! strictly serially; EOF ends the session.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::Deserialize;
use serde_json::{json, Value};

use super::ToolServer;

#[derive(Debug, Clone, Deserialize)]
pub struct WireRequest {
    #[serde(default)]
    pub id: Value,
    pub tool: String,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

fn protocol_error(id: Value, message: String) -> Value {
    json!({
        "id": id,
        "status": "error",
        "code": "invalid_params",
        "message": message,
    })
}

/// Serve requests from `reader` until EOF, writing one response line each.
pub fn serve_lines<R: BufRead, W: Write>(
    server: &mut ToolServer,
    reader: R,
    mut writer: W,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<WireRequest>(&line) {
            Ok(request) => {
                let result = server.dispatch(&request.tool, &request.params);
                let mut envelope = result.envelope();
                envelope
                    .as_object_mut()
                    .expect("envelope is always an object")
                    .insert("id".to_string(), request.id);
                envelope
            }
            // A line that does not parse as a request never reaches dispatch
            // and is answered at the protocol level without an audit entry.
            Err(err) => protocol_error(Value::Null, format!("malformed request: {err}")),
        };
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolserver::ToolCatalog;
    use crate::world::{GenerationProfile, WorldState};

    fn server() -> ToolServer {
        let world = WorldState::generate(42, &GenerationProfile::desk()).unwrap();
        ToolServer::new(world, ToolCatalog::embedded())
    }

    #[test]
    fn round_trips_requests_and_echoes_ids() {
        let mut srv = server();
        let input = concat!(
            "{\"id\": 1, \"tool\": \"searchPatients\", \"params\": {\"name\": \"chen\"}}\n",
            "{\"id\": \"x2\", \"tool\": \"searchPatients\", \"params\": {}}\n",
            "not json\n",
        );
        let mut output = Vec::new();
        serve_lines(&mut srv, input.as_bytes(), &mut output).unwrap();
        let lines: Vec<Value> = String::from_utf8(output)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0]["id"], json!(1));
        assert_eq!(lines[0]["status"], json!("ok"));
        assert_eq!(lines[1]["id"], json!("x2"));
        assert_eq!(lines[1]["status"], json!("error"));
        assert_eq!(lines[1]["code"], json!("missing_param"));
        assert_eq!(lines[2]["status"], json!("error"));
        // Two dispatches audited; the malformed line is not a tool call.
        assert_eq!(srv.state().audit().len(), 2);
    }
}
