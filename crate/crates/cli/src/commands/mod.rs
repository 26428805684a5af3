mod allocate;
mod model;
mod simulate;

use nc_toolkit::channel::Scenario;

use crate::args::{Cli, Command, CommonArgs};
use crate::output::{sha256_hex, Manifest};
use crate::{presets, CliError};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_RB_DURATION_S: f64 = 0.01;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = Context::new(cli.command.name(), cli.command.args())?;
    match &cli.command {
        Command::ValidateModel(_) => model::validate(&ctx),
        Command::Sweep(_) => model::sweep(&ctx),
        Command::Allocate(_) => allocate::run(&ctx),
        Command::Simulate(_) => simulate::run(&ctx),
    }
}

/// Parsed arguments plus the loaded scenario.
pub(crate) struct Context<'a> {
    pub command: &'static str,
    pub args: &'a CommonArgs,
    pub scenario: Option<Scenario>,
    pub scenario_sha256: Option<String>,
}

impl<'a> Context<'a> {
    fn new(command: &'static str, args: &'a CommonArgs) -> Result<Self, CliError> {
        let (scenario, scenario_sha256) = match &args.scenario {
            Some(path) => {
                let bytes = std::fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
                let text = String::from_utf8(bytes)
                    .map_err(|_| CliError::Usage(format!("{} is not UTF-8", path.display())))?;
                let mut scenario = Scenario::from_toml_str(&text)?;
                if let Some(name) = &args.preset {
                    let preset =
                        presets::find(name).ok_or_else(|| CliError::Usage(format!("unknown preset `{name}`")))?;
                    preset.apply(&mut scenario)?;
                }
                (Some(scenario), Some(sha256_hex(text.as_bytes())))
            }
            None if args.preset.is_some() => {
                return Err(CliError::Usage("--preset needs --scenario".into()));
            }
            None => (None, None),
        };
        if args.trials == Some(0) {
            return Err(CliError::Usage("--trials must be at least 1".into()));
        }
        Ok(Context {
            command,
            args,
            scenario,
            scenario_sha256,
        })
    }

    pub fn require_scenario(&self) -> Result<&Scenario, CliError> {
        self.scenario
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{} needs --scenario", self.command)))
    }

    pub fn seed(&self) -> u64 {
        self.args
            .seed
            .or(self.scenario.as_ref().map(|s| s.seed))
            .unwrap_or(DEFAULT_SEED)
    }

    pub fn rb_duration_s(&self) -> f64 {
        self.scenario
            .as_ref()
            .map(|s| s.rb_duration_s)
            .unwrap_or(DEFAULT_RB_DURATION_S)
    }

    /// Field sizes from `--q`, else the scenario's, else `fallback`.
    pub fn field_sizes(&self, fallback: &[u32]) -> Vec<u32> {
        if !self.args.q.is_empty() {
            let mut q = self.args.q.clone();
            q.dedup();
            return q;
        }
        match &self.scenario {
            Some(s) => vec![s.q],
            None => fallback.to_vec(),
        }
    }

    pub fn manifest(&self, trials: Option<usize>, mut settings: Vec<(String, String)>) -> Manifest {
        let a = self.args;
        if let Some(p) = &a.preset {
            settings.push(("preset".into(), p.clone()));
        }
        if let Some(s) = a.scheme {
            settings.push(("scheme".into(), s.to_string()));
        }
        if a.pruned {
            settings.push(("pruned".into(), "true".into()));
        }
        if !a.q.is_empty() {
            let q: Vec<String> = a.q.iter().map(u32::to_string).collect();
            settings.push(("q".into(), q.join(",")));
        }
        for g in &a.grid {
            settings.push(("grid".into(), g.to_string()));
        }
        if let Some(u) = a.trace_user {
            settings.push(("trace_user".into(), u.to_string()));
        }
        Manifest {
            command: self.command,
            scenario_sha256: self.scenario_sha256.clone(),
            seed: self.seed(),
            trials,
            settings,
        }
    }
}
