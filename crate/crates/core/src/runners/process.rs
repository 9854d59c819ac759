//! Real execution backend: one child process per run, killed at the captime.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::error::{Error, Result, SourceError};

use super::{InstanceDraw, RunResult, RuntimeSource};

/// What to do with a run that exits with a nonzero status before its cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// The target answered; record the run as completed and flag it.
    #[default]
    Completed,
    /// Record the run as censored at its cap.
    Timeout,
}

/// Expands `{instance}`, `{seed}` and `{cutoff}` in a command template.
///
/// The template is split into words first, so substituted paths never need
/// quoting.
pub fn expand_template(template: &str, instance: &Path, seed: u64, cap: f64) -> Result<Vec<String>> {
    let words = shell_words::split(template)
        .map_err(|e| Error::invalid("command", format!("cannot parse {template:?}: {e}")))?;
    if words.is_empty() {
        return Err(Error::invalid("command", "empty command template"));
    }
    let instance = instance.to_string_lossy();
    let seed = seed.to_string();
    let cutoff = cap.to_string();
    Ok(words
        .into_iter()
        .map(|w| {
            w.replace("{instance}", &instance)
                .replace("{seed}", &seed)
                .replace("{cutoff}", &cutoff)
        })
        .collect())
}

/// Runs one command under a wall-clock cap.
///
/// The child gets its own process group so that everything it spawned is
/// killed together when the cap expires.
pub fn run_process(
    template: &str,
    instance: &Path,
    seed: u64,
    cap: f64,
    policy: FailurePolicy,
) -> Result<RunResult, SourceError> {
    if !(cap > 0.0) || !cap.is_finite() {
        return Err(SourceError::InvalidCap { cap, prev_cap: 0.0 });
    }
    let argv = expand_template(template, instance, seed, cap).map_err(|e| SourceError::Spawn {
        command: template.to_owned(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()),
    })?;
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|source| SourceError::Spawn {
        command: argv.join(" "),
        source,
    })?;
    let limit = Duration::from_secs_f64(cap);
    let status = child.wait_timeout(limit).map_err(SourceError::Supervise)?;
    let elapsed = start.elapsed().as_secs_f64();
    match status {
        Some(status) if elapsed <= cap => {
            if status.success() || policy == FailurePolicy::Completed {
                if !status.success() {
                    log::warn!("`{}` exited with {status}; recorded as completed", argv.join(" "));
                }
                Ok(RunResult {
                    measured: elapsed,
                    completed: true,
                    charged: elapsed,
                    failed: !status.success(),
                })
            } else {
                Ok(censored(cap, true))
            }
        }
        Some(_) => Ok(censored(cap, false)),
        None => {
            kill_group(&mut child);
            Ok(censored(cap, false))
        }
    }
}

fn censored(cap: f64, failed: bool) -> RunResult {
    RunResult {
        measured: cap,
        completed: false,
        charged: cap,
        failed,
    }
}

fn kill_group(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // The child leads its own group, so its pid is the group id.
        let pgid = child.id() as libc::pid_t;
        // SAFETY: killpg only sends a signal; a stale group id yields ESRCH.
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Real backend: each configuration is a command template, instances are
/// files.
#[derive(Debug, Clone)]
pub struct ProcessSource {
    templates: Vec<String>,
    instances: Vec<PathBuf>,
    policy: FailurePolicy,
}

impl ProcessSource {
    pub fn new(templates: Vec<String>, instances: Vec<PathBuf>, policy: FailurePolicy) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::invalid("instances", "no instance files"));
        }
        for t in &templates {
            expand_template(t, Path::new("x"), 0, 1.0)?;
        }
        Ok(Self {
            templates,
            instances,
            policy,
        })
    }

    /// Uses every regular file in `dir`, sorted by name.
    pub fn from_instance_dir(templates: Vec<String>, dir: &Path, policy: FailurePolicy) -> Result<Self> {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            if entry.file_type()?.is_file() {
                files.push(entry.path());
            }
        }
        files.sort();
        Self::new(templates, files, policy)
    }

    pub fn templates(&self) -> &[String] {
        &self.templates
    }
}

impl RuntimeSource for ProcessSource {
    fn num_configs(&self) -> usize {
        self.templates.len()
    }

    fn num_instances(&self) -> usize {
        self.instances.len()
    }

    fn config_label(&self, config: usize) -> String {
        self.templates
            .get(config)
            .cloned()
            .unwrap_or_else(|| config.to_string())
    }

    fn run(
        &mut self,
        config: usize,
        instance: InstanceDraw,
        cap: f64,
        _prev_cap: f64,
    ) -> Result<RunResult, SourceError> {
        let template = self.templates.get(config).ok_or(SourceError::UnknownConfig(config))?;
        let path = self
            .instances
            .get(instance.index)
            .ok_or(SourceError::UnknownInstance(instance.index))?;
        run_process(template, path, instance.seed, cap, self.policy)
    }

    fn add_config(&mut self, spec: &str) -> Result<usize, SourceError> {
        expand_template(spec, Path::new("x"), 0, 1.0).map_err(|e| SourceError::Generator(e.to_string()))?;
        self.templates.push(spec.to_owned());
        Ok(self.templates.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_are_substituted_per_word() {
        let argv = expand_template(
            "solver --cutoff {cutoff} --seed={seed} {instance}",
            Path::new("/data/my file.cnf"),
            42,
            1.5,
        )
        .unwrap();
        assert_eq!(
            argv,
            vec!["solver", "--cutoff", "1.5", "--seed=42", "/data/my file.cnf"]
        );
    }

    #[test]
    fn empty_template_is_rejected() {
        assert!(expand_template("  ", Path::new("x"), 0, 1.0).is_err());
    }

    #[cfg(unix)]
    #[test]
    fn fast_command_completes() {
        let r = run_process("sleep 0.1", Path::new("x"), 0, 1.0, FailurePolicy::Completed).unwrap();
        assert!(r.completed);
        assert!((r.measured - 0.1).abs() < 0.05, "measured {}", r.measured);
        assert_eq!(r.charged, r.measured);
    }

    #[cfg(unix)]
    #[test]
    fn slow_command_is_killed_at_cap() {
        let start = Instant::now();
        let r = run_process("sleep 0.1", Path::new("x"), 0, 0.05, FailurePolicy::Completed).unwrap();
        assert!(!r.completed);
        assert_eq!(r.measured, 0.05);
        assert!(start.elapsed() < Duration::from_millis(100));
    }

    #[cfg(unix)]
    #[test]
    fn process_group_is_killed() {
        let start = Instant::now();
        let r = run_process(
            "sh -c 'sleep 5 & sleep 5; wait'",
            Path::new("x"),
            0,
            0.1,
            FailurePolicy::Completed,
        )
        .unwrap();
        assert!(!r.completed);
        assert!(start.elapsed() < Duration::from_secs(2));
    }

    #[test]
    fn missing_binary_is_a_spawn_error() {
        let err = run_process(
            "/definitely/not/a/solver {instance}",
            Path::new("x"),
            0,
            1.0,
            FailurePolicy::Completed,
        )
        .unwrap_err();
        assert!(matches!(err, SourceError::Spawn { .. }), "{err}");
    }

    #[cfg(unix)]
    #[test]
    fn nonzero_exit_policies() {
        let done = run_process("false", Path::new("x"), 0, 1.0, FailurePolicy::Completed).unwrap();
        assert!(done.completed && done.failed);
        let timeout = run_process("false", Path::new("x"), 0, 1.0, FailurePolicy::Timeout).unwrap();
        assert!(!timeout.completed && timeout.failed);
        assert_eq!(timeout.measured, 1.0);
    }
}
