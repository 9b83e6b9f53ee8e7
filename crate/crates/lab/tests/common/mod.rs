#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::thread;
use std::time::Duration;

pub fn exe() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_aging-lab"))
}

pub fn lab() -> Command {
    let mut c = Command::new(exe());
    c.env_remove("AGING_LAB_SEED").env("RUST_LOG", "warn");
    c
}

/// A child process that is killed on drop.
pub struct Proc {
    pub child: Child,
    pub stdout: BufReader<ChildStdout>,
    pub stdin: Option<ChildStdin>,
}

impl Proc {
    pub fn spawn(mut cmd: Command) -> Self {
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn");
        let stdout = BufReader::new(child.stdout.take().unwrap());
        let stdin = child.stdin.take();
        Self { child, stdout, stdin }
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    pub fn line(&mut self) -> String {
        let mut s = String::new();
        self.stdout.read_line(&mut s).expect("read line");
        s
    }

    pub fn send_line(&mut self, text: &str) {
        let stdin = self.stdin.as_mut().unwrap();
        writeln!(stdin, "{text}").unwrap();
        stdin.flush().unwrap();
    }

    pub fn signal(&self, sig: i32) {
        unsafe {
            libc::kill(self.child.id() as i32, sig);
        }
    }
}

impl Drop for Proc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Spawns `aging-lab target` on a free port and returns it with its base URL.
pub fn spawn_target(extra: &[&str]) -> (Proc, String) {
    let mut cmd = lab();
    cmd.args(["target", "--port", "0"]).args(extra);
    let mut p = Proc::spawn(cmd);
    let banner = p.line();
    let mut it = banner.split_whitespace();
    assert_eq!(it.next(), Some("serving"), "banner: {banner:?}");
    let url = it.next().unwrap().to_string();
    (p, url)
}

/// Port that nothing listens on.
pub fn closed_port() -> u16 {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().port()
}

fn read_request(s: &mut TcpStream) {
    let mut buf = [0u8; 4096];
    let mut got = Vec::new();
    while !got.windows(4).any(|w| w == b"\r\n\r\n") {
        match s.read(&mut buf) {
            Ok(0) | Err(_) => return,
            Ok(n) => got.extend_from_slice(&buf[..n]),
        }
    }
}

const OK: &[u8] = b"HTTP/1.1 200 OK\r\nContent-Length: 3\r\nConnection: close\r\n\r\nok\n";

/// Answers the first `answered` connections at once and then holds every
/// later connection open without replying.
pub fn hanging_server(answered: usize) -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", l.local_addr().unwrap());
    thread::spawn(move || {
        let mut held = Vec::new();
        for (i, conn) in l.incoming().enumerate() {
            let Ok(mut s) = conn else { continue };
            if i < answered {
                read_request(&mut s);
                let _ = s.write_all(OK);
            } else {
                held.push(s);
            }
        }
    });
    url
}

/// Replies to every request after `delay`.
pub fn slow_server(delay: Duration) -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", l.local_addr().unwrap());
    thread::spawn(move || {
        for conn in l.incoming() {
            let Ok(mut s) = conn else { continue };
            thread::spawn(move || {
                read_request(&mut s);
                thread::sleep(delay);
                let _ = s.write_all(OK);
            });
        }
    });
    url
}

pub fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}
