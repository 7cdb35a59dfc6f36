//! Transports for [`crate::protocol::Session`]: a child process and an
//! in-memory script for tests.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crate::protocol::{Incoming, Transport};

/// A backend running as `sh -c <command>` in its own process group. A reader
/// thread forwards stdout lines so receives can time out. The whole group is
/// killed on drop, so wrapper scripts do not leave orphans behind.
pub struct ChildTransport {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    command: String,
}

impl ChildTransport {
    pub fn spawn(command: &str) -> std::io::Result<Self> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::inherit());
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd.spawn()?;
        let stdout = child.stdout.take().expect("stdout piped");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut buf = String::new();
                match reader.read_line(&mut buf) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(buf)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        log::debug!("spawned backend `{command}` as pid {}", child.id());
        Ok(ChildTransport { child, stdin, lines: rx, command: command.to_string() })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn kill(&mut self) {
        #[cfg(unix)]
        if let Ok(pid) = libc::pid_t::try_from(self.child.id()) {
            // SAFETY: plain syscall on the group we created at spawn.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Transport for ChildTransport {
    fn send_line(&mut self, line: &str) -> std::io::Result<()> {
        let stdin = self.stdin.as_mut().ok_or_else(|| std::io::Error::other("backend input already closed"))?;
        stdin.write_all(line.as_bytes())?;
        stdin.flush()
    }

    fn recv_line(&mut self, timeout: Duration) -> Incoming {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Incoming::Line(line.trim_end_matches(['\n', '\r']).to_string()),
            Ok(Err(e)) => Incoming::Failed(e.to_string()),
            Err(RecvTimeoutError::Timeout) => Incoming::TimedOut,
            Err(RecvTimeoutError::Disconnected) => Incoming::Closed,
        }
    }

    fn finish(&mut self, timeout: Duration) -> Result<(), String> {
        self.stdin.take();
        let deadline = Instant::now() + timeout;
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) if status.success() => return Ok(()),
                Ok(Some(status)) => return Err(format!("exited with {status}")),
                Ok(None) if Instant::now() >= deadline => {
                    self.kill();
                    return Err(format!("still running after {timeout:?}, killed"));
                }
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(e.to_string()),
            }
        }
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        self.kill();
    }
}

type Responder = Box<dyn FnMut(&str) -> Vec<String> + Send>;

/// Replays a greeting, then answers each sent line with whatever the
/// responder returns. An empty queue reads as a closed backend.
pub struct ScriptedTransport {
    pending: VecDeque<String>,
    respond: Responder,
    sent: Arc<Mutex<Vec<String>>>,
    exit: Result<(), String>,
}

impl ScriptedTransport {
    pub fn new(greeting: Vec<String>, respond: impl FnMut(&str) -> Vec<String> + Send + 'static) -> Self {
        ScriptedTransport {
            pending: greeting.into(),
            respond: Box::new(respond),
            sent: Arc::default(),
            exit: Ok(()),
        }
    }

    /// Result reported by `finish`.
    pub fn with_exit(mut self, exit: Result<(), String>) -> Self {
        self.exit = exit;
        self
    }

    /// Shared log of every line the host sent, without trailing newlines.
    pub fn sent(&self) -> Arc<Mutex<Vec<String>>> {
        Arc::clone(&self.sent)
    }
}

impl Transport for ScriptedTransport {
    fn send_line(&mut self, line: &str) -> std::io::Result<()> {
        let line = line.trim_end_matches('\n');
        self.sent.lock().expect("sent log").push(line.to_string());
        let replies = (self.respond)(line);
        self.pending.extend(replies);
        Ok(())
    }

    fn recv_line(&mut self, _timeout: Duration) -> Incoming {
        match self.pending.pop_front() {
            Some(line) => Incoming::Line(line),
            None => Incoming::Closed,
        }
    }

    fn finish(&mut self, _timeout: Duration) -> Result<(), String> {
        self.exit.clone()
    }
}
