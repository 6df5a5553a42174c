//! Child-process supervision: rlimits, process groups, wall-clock timeout,
//! bounded output capture.

use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub(crate) struct Spawn<'a> {
    pub argv: &'a [String],
    pub cwd: &'a Path,
    pub env: &'a [(String, String)],
    pub wall_time: Duration,
    pub memory_bytes: u64,
    pub output_cap: usize,
    pub isolate_network: bool,
}

#[derive(Debug)]
pub(crate) struct Outcome {
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub stdout_truncated: bool,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn code(&self) -> Option<i32> {
        self.status.and_then(|s| s.code())
    }

    pub fn signal(&self) -> Option<i32> {
        self.status.and_then(|s| s.signal())
    }
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    // Failure leaves the inherited limit in place.
    unsafe {
        libc::setrlimit(resource, &lim);
    }
}

fn drain(mut src: impl Read + Send + 'static, cap: usize) -> thread::JoinHandle<(Vec<u8>, bool)> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match src.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        (kept, truncated)
    })
}

fn kill_group(pid: i32) {
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
}

pub(crate) fn run(spec: &Spawn<'_>) -> io::Result<Outcome> {
    let (program, args) = spec
        .argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(spec.cwd)
        .env_clear()
        .envs(spec.env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let memory = spec.memory_bytes;
    let cpu_secs = spec.wall_time.as_secs() + 2;
    let isolate = spec.isolate_network;
    unsafe {
        cmd.pre_exec(move || {
            libc::setpgid(0, 0);
            if memory > 0 {
                set_limit(libc::RLIMIT_AS, memory);
            }
            set_limit(libc::RLIMIT_CORE, 0);
            set_limit(libc::RLIMIT_CPU, cpu_secs);
            if isolate {
                // Only succeeds with CAP_SYS_ADMIN or user namespaces; best effort.
                libc::unshare(libc::CLONE_NEWNET);
            }
            Ok(())
        });
    }
    let started = Instant::now();
    let mut child: Child = cmd.spawn()?;
    let pid = child.id() as i32;
    let out = drain(child.stdout.take().expect("piped stdout"), spec.output_cap);
    let err = drain(child.stderr.take().expect("piped stderr"), spec.output_cap);

    let (tx, rx) = mpsc::channel();
    let waiter = thread::spawn(move || {
        let status = child.wait();
        let _ = tx.send(());
        status
    });
    let timed_out = match rx.recv_timeout(spec.wall_time) {
        Ok(()) => false,
        Err(_) => {
            kill_group(pid);
            true
        }
    };
    let status = waiter.join().expect("wait thread panicked")?;
    let elapsed = started.elapsed();
    // Reap anything the program left running in its group.
    kill_group(pid);
    let (stdout, stdout_truncated) = out.join().expect("reader panicked");
    let (stderr, _) = err.join().expect("reader panicked");
    Ok(Outcome {
        status: if timed_out { None } else { Some(status) },
        timed_out,
        stdout,
        stderr,
        stdout_truncated,
        elapsed: if timed_out { elapsed.max(spec.wall_time) } else { elapsed },
    })
}

/// Counting semaphore bounding concurrent sandbox processes.
#[derive(Debug)]
pub(crate) struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

pub(crate) struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}
