//! Roles served by another process over line-delimited JSON.
//!
//! Each request is one line `{"id": n, "role": "...", "step": t, "payload": {...}}`
//! where the payload is the role's request record. The reply is one line
//! `{"id": n, "ok": <response>}` or `{"id": n, "error": "message"}`. Replies
//! whose id does not match the pending request are discarded, so a late
//! answer after a timeout cannot be mistaken for the next one.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    ActionProposer, Environment, ExecuteRequest, Grounder, GroundingOutcome, GroundingRequest,
    HorizonMode, HorizonSelector, ObsRef, Proposal, ProposeRequest, RankRequest, RecoveryDecision,
    RecoveryRequest, RecoverySelector, Role, RoleError, Roles, Rollout, RolloutGenerator,
    RolloutRanker, RolloutRequest, RolloutScore, TaskDescriptor, Verification, Verifier,
    VerifyRequest,
};

#[derive(Debug, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: u64,
    pub role: Role,
    pub step: usize,
    pub payload: Value,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default)]
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ok: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Conn {
    writer: Box<dyn Write + Send>,
    lines: Receiver<io::Result<String>>,
    next_id: u64,
}

pub struct RemoteRoles {
    conn: Mutex<Conn>,
    timeout: Duration,
    child: Option<Mutex<Child>>,
}

impl RemoteRoles {
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self {
            conn: Mutex::new(Conn {
                writer: Box::new(writer),
                lines: rx,
                next_id: 0,
            }),
            timeout,
            child: None,
        }
    }

    /// Starts `program` and talks to it over its stdin/stdout.
    pub fn spawn(program: &str, args: &[String], timeout: Duration) -> io::Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut roles = Self::from_streams(stdout, stdin, timeout);
        roles.child = Some(Mutex::new(child));
        Ok(roles)
    }

    #[cfg(unix)]
    pub fn connect_unix(path: impl AsRef<std::path::Path>, timeout: Duration) -> io::Result<Self> {
        let stream = std::os::unix::net::UnixStream::connect(path)?;
        let reader = stream.try_clone()?;
        Ok(Self::from_streams(reader, stream, timeout))
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        role: Role,
        step: usize,
        req: &Req,
    ) -> Result<Resp, RoleError> {
        let err = |m: String| RoleError::new(role, m);
        let mut conn = self
            .conn
            .lock()
            .map_err(|_| err("connection poisoned".into()))?;
        conn.next_id += 1;
        let id = conn.next_id;
        let wire = WireRequest {
            id,
            role,
            step,
            payload: serde_json::to_value(req).map_err(|e| err(e.to_string()))?,
        };
        let mut line = serde_json::to_string(&wire).map_err(|e| err(e.to_string()))?;
        line.push('\n');
        conn.writer
            .write_all(line.as_bytes())
            .and_then(|_| conn.writer.flush())
            .map_err(|e| err(format!("send failed: {e}")))?;

        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            let line = match conn.lines.recv_timeout(left) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(err(format!("receive failed: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(err(format!("no response within {:?}", self.timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => return Err(err("connection closed".into())),
            };
            if line.trim().is_empty() {
                continue;
            }
            let resp: WireResponse =
                serde_json::from_str(&line).map_err(|e| err(format!("malformed response: {e}")))?;
            if resp.id.is_some_and(|r| r != id) {
                log::warn!("discarding stale {role} response {:?}", resp.id);
                continue;
            }
            return match (resp.ok, resp.error) {
                (_, Some(e)) => Err(err(e)),
                (Some(v), None) => {
                    serde_json::from_value(v).map_err(|e| err(format!("malformed response: {e}")))
                }
                (None, None) => Err(err("malformed response: neither ok nor error".into())),
            };
        }
    }
}

impl Drop for RemoteRoles {
    fn drop(&mut self) {
        if let Some(child) = &self.child {
            if let Ok(mut c) = child.lock() {
                let _ = c.kill();
                let _ = c.wait();
            }
        }
    }
}

impl ActionProposer for RemoteRoles {
    fn propose(&self, req: &ProposeRequest) -> Result<Vec<Proposal>, RoleError> {
        self.call(Role::Propose, req.step, req)
    }
}

impl RolloutGenerator for RemoteRoles {
    fn generate(&self, req: &RolloutRequest) -> Result<Vec<Rollout>, RoleError> {
        self.call(Role::Generate, req.step, req)
    }
}

impl RolloutRanker for RemoteRoles {
    fn rank(&self, req: &RankRequest) -> Result<Vec<RolloutScore>, RoleError> {
        self.call(Role::Rank, req.step, req)
    }
}

impl Verifier for RemoteRoles {
    fn verify(&self, req: &VerifyRequest) -> Result<Verification, RoleError> {
        self.call(Role::Verify, req.step, req)
    }
}

impl RecoverySelector for RemoteRoles {
    fn select(&self, req: &RecoveryRequest) -> Result<RecoveryDecision, RoleError> {
        self.call(Role::Recover, req.step, req)
    }
}

impl HorizonSelector for RemoteRoles {
    fn select(&self, task: &TaskDescriptor) -> Result<HorizonMode, RoleError> {
        self.call(Role::Horizon, 0, task)
    }
}

impl Grounder for RemoteRoles {
    fn ground(&self, req: &GroundingRequest) -> Result<GroundingOutcome, RoleError> {
        self.call(Role::Ground, req.step, req)
    }
}

impl Environment for RemoteRoles {
    fn execute(&self, req: &ExecuteRequest) -> Result<ObsRef, RoleError> {
        self.call(Role::Execute, req.step, req)
    }
}

/// Answers wire requests from `reader` with `roles` until end of input.
///
/// The counterpart of [`RemoteRoles`]; useful to put any role set behind a
/// pipe or socket.
pub fn serve<R: Read, W: Write>(reader: R, mut writer: W, roles: &Roles<'_>) -> io::Result<()> {
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<WireRequest>(&line) {
            Ok(req) => {
                let id = Some(req.id);
                match dispatch(&req, roles) {
                    Ok(v) => WireResponse {
                        id,
                        ok: Some(v),
                        error: None,
                    },
                    Err(e) => WireResponse {
                        id,
                        ok: None,
                        error: Some(e),
                    },
                }
            }
            Err(e) => WireResponse {
                error: Some(format!("bad request: {e}")),
                ..Default::default()
            },
        };
        serde_json::to_writer(&mut writer, &resp)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

fn dispatch(req: &WireRequest, roles: &Roles<'_>) -> Result<Value, String> {
    fn run<Q: DeserializeOwned, A: Serialize>(
        payload: &Value,
        f: impl FnOnce(&Q) -> Result<A, RoleError>,
    ) -> Result<Value, String> {
        let q: Q = serde_json::from_value(payload.clone()).map_err(|e| e.to_string())?;
        let a = f(&q).map_err(|e| e.message)?;
        serde_json::to_value(a).map_err(|e| e.to_string())
    }
    let p = &req.payload;
    match req.role {
        Role::Propose => run(p, |q| roles.proposer.propose(q)),
        Role::Generate => run(p, |q| roles.generator.generate(q)),
        Role::Rank => run(p, |q| roles.ranker.rank(q)),
        Role::Verify => run(p, |q| roles.verifier.verify(q)),
        Role::Recover => run(p, |q| roles.recovery.select(q)),
        Role::Horizon => run(p, |q| roles.horizon.select(q)),
        Role::Ground => run(p, |q| roles.grounder.ground(q)),
        Role::Execute => run(p, |q| roles.environment.execute(q)),
    }
}
