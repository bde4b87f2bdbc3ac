use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use resilience_core::engine::{
    check_resilient, resilient_states, robust_recovery_table_from, robust_viability_kernel, stochastic_viability_value,
};
use resilience_core::optimize::minimize_risk;
use resilience_core::oracle::{
    oracle_max_viability_probability, oracle_min_max_recovery, oracle_min_risk, oracle_resilient_states,
};
use resilience_core::regimes::PROBABILITY_TOL;
use resilience_core::risk::evaluate_risk;
use resilience_core::strategy::build_bundle;
use resilience_core::{Limits, RegimeSpec, ScenarioDomain, Strategy, StrategyClass, Subset, SystemModel};

use crate::json::{to_text, Real, Time};
use crate::modelfile::{parse_model, ModelFile};
use crate::strategy_io::{read_strategy, write_strategy};
use crate::CliError;

/// Exit code for a computed "not resilient" answer.
pub const EXIT_NOT_RESILIENT: i32 = 1;
/// Exit code for unusable input.
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "resilience", version, about = "Resilience of finite controlled systems under uncertainty")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a strategy file against the regime from an initial state.
    Check(Flags),
    /// Robust viability kernel of the regime's acceptable set.
    Kernel(Flags),
    /// Maximal viability probabilities by dynamic programming.
    Value(Flags),
    /// Worst-case minimal recovery times.
    Recovery(Flags),
    /// States from which some strategy of the class is resilient.
    ResilientSet(Flags),
    /// Risk-minimizing resilient strategy.
    Optimize(Flags),
    /// Minimal risk over resilient strategies (+inf when none).
    Indicator(Flags),
    /// Per-scenario closed-loop trajectories of a strategy.
    Simulate(Flags),
    /// Brute-force reference values by strategy enumeration.
    Oracle(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Class {
    Markov,
    Adapted,
}

impl From<Class> for StrategyClass {
    fn from(c: Class) -> Self {
        match c {
            Class::Markov => StrategyClass::Markov,
            Class::Adapted => StrategyClass::Adapted,
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct Flags {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Directory for JSON and CSV outputs (JSON is also printed).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Strategy CSV file.
    #[arg(long)]
    pub strategy: Option<PathBuf>,
    /// Initial state label.
    #[arg(long)]
    pub x0: Option<String>,
    /// Start time.
    #[arg(long, default_value_t = 0)]
    pub t: usize,
    #[arg(long, value_enum, default_value_t = Class::Markov)]
    pub class: Class,
    /// Recovery deadline (overrides the regime's).
    #[arg(long)]
    pub deadline: Option<usize>,
    /// Probability level (overrides the regime's).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Risk level (overrides the regime's).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Strategy enumeration cap.
    #[arg(long)]
    pub cap: Option<u64>,
    /// Restrict simulated scenarios to the robust set.
    #[arg(long)]
    pub robust_only: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// What a command produced: printed JSON, files for `--out`, and the exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub command: &'static str,
    pub json: String,
    pub files: Vec<(String, String)>,
    pub code: i32,
}

/// Parses arguments, runs the command and writes its outputs. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match execute(&cli).and_then(|o| emit(&cli, &o).map(|()| o.code)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn emit(cli: &Cli, outcome: &Outcome) -> Result<(), CliError> {
    print!("{}", outcome.json);
    if let Some(dir) = &flags(cli).out {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
        let mut files = vec![(format!("{}.json", outcome.command), outcome.json.clone())];
        files.extend(outcome.files.iter().cloned());
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        }
    }
    Ok(())
}

fn flags(cli: &Cli) -> &Flags {
    match &cli.command {
        Command::Check(f)
        | Command::Kernel(f)
        | Command::Value(f)
        | Command::Recovery(f)
        | Command::ResilientSet(f)
        | Command::Optimize(f)
        | Command::Indicator(f)
        | Command::Simulate(f)
        | Command::Oracle(f) => f,
    }
}

/// Runs a parsed command without touching the file system beyond its inputs.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let f = flags(cli);
    let go = || -> Result<Outcome, CliError> {
        let ctx = Context::load(f)?;
        match &cli.command {
            Command::Check(_) => ctx.check(),
            Command::Kernel(_) => ctx.kernel(),
            Command::Value(_) => ctx.value(),
            Command::Recovery(_) => ctx.recovery(),
            Command::ResilientSet(_) => ctx.resilient_set(),
            Command::Optimize(_) => ctx.optimize(),
            Command::Indicator(_) => ctx.indicator(),
            Command::Simulate(_) => ctx.simulate(),
            Command::Oracle(_) => ctx.oracle(),
        }
    };
    match f.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(go),
        None => go(),
    }
}

struct Context<'a> {
    flags: &'a Flags,
    model: SystemModel,
    regime: RegimeSpec,
    file: ModelFile,
    limits: Limits,
}

#[derive(Serialize)]
struct StateReal {
    state: String,
    value: Real,
}

#[derive(Serialize)]
struct StateTime {
    state: String,
    r_star: Time,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))
}

fn csv_text(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

impl<'a> Context<'a> {
    fn load(flags: &'a Flags) -> Result<Self, CliError> {
        let file = parse_model(&read(&flags.model)?).map_err(|e| CliError::Model(flags.model.display().to_string(), e))?;
        let regime = overridden(&file.regime, flags)?;
        regime.validate(&file.model)?;
        if flags.t > file.model.horizon() {
            return Err(CliError::Usage(format!(
                "--t {} beyond horizon {}",
                flags.t,
                file.model.horizon()
            )));
        }
        let mut limits = Limits::default();
        if let Some(cap) = flags.cap {
            limits.strategies = cap;
        }
        Ok(Context {
            flags,
            model: file.model.clone(),
            regime,
            file,
            limits,
        })
    }

    fn labels(&self, s: &Subset) -> Vec<String> {
        s.iter().map(|x| self.model.state_label(x).to_string()).collect()
    }

    fn x0(&self) -> Result<Option<usize>, CliError> {
        match &self.flags.x0 {
            None => Ok(None),
            Some(l) => self
                .model
                .state_index(l)
                .map(Some)
                .ok_or_else(|| CliError::Usage(format!("--x0 `{l}` is not a state of the model"))),
        }
    }

    fn need_x0(&self) -> Result<usize, CliError> {
        self.x0()?.ok_or_else(|| CliError::Usage("--x0 is required".into()))
    }

    fn strategy(&self) -> Result<Option<Strategy>, CliError> {
        match &self.flags.strategy {
            None => Ok(None),
            Some(p) => {
                let s = read_strategy(&self.model, &read(p)?)?;
                s.validate(&self.model)?;
                Ok(Some(s))
            }
        }
    }

    fn need_strategy(&self) -> Result<Strategy, CliError> {
        self.strategy()?.ok_or_else(|| CliError::Usage("--strategy is required".into()))
    }

    fn set(&self) -> Result<Subset, CliError> {
        self.regime.acceptable_set().cloned().ok_or_else(|| {
            CliError::Usage(format!("regime '{}' has no acceptable state set", self.regime.name()))
        })
    }

    fn risk(&self) -> Result<&resilience_core::RiskMeasureSpec, CliError> {
        self.file
            .risk
            .as_ref()
            .ok_or_else(|| CliError::Usage("the model file has no [risk] section".into()))
    }

    fn check(&self) -> Result<Outcome, CliError> {
        #[derive(Serialize)]
        struct Out<'a> {
            command: &'a str,
            regime: &'a str,
            x0: &'a str,
            t: usize,
            resilient: bool,
        }
        let x0 = self.need_x0()?;
        let strategy = self.need_strategy()?;
        let ok = check_resilient(&self.model, &strategy, x0, self.flags.t, &self.regime, &self.limits)?;
        Ok(Outcome {
            command: "check",
            json: to_text(&Out {
                command: "check",
                regime: self.regime.name(),
                x0: self.model.state_label(x0),
                t: self.flags.t,
                resilient: ok,
            }),
            files: Vec::new(),
            code: if ok { 0 } else { EXIT_NOT_RESILIENT },
        })
    }

    fn kernel(&self) -> Result<Outcome, CliError> {
        #[derive(Serialize)]
        struct Out {
            command: &'static str,
            set: Vec<String>,
            members: Vec<Vec<String>>,
        }
        let set = self.set()?;
        let kernel = robust_viability_kernel(&self.model, &set)?;
        let k = self.model.horizon();
        let rows = (0..=k).flat_map(|t| {
            let kernel = &kernel;
            (0..self.model.n_states()).map(move |x| {
                let member = kernel.contains(t, x);
                let witness = match kernel.witness.get(t).and_then(|w| w[x]) {
                    Some(u) if member => self.model.controls().label(u).to_string(),
                    _ => String::new(),
                };
                format!("{t},{},{member},{witness}", self.model.state_label(x))
            })
        });
        let files = vec![
            ("kernel.csv".to_string(), csv_text("t,state,member,witness", rows)),
            ("kernel_strategy.csv".to_string(), write_strategy(&self.model, &kernel.strategy())),
        ];
        let code = match self.x0()? {
            Some(x) if !kernel.contains(self.flags.t, x) => EXIT_NOT_RESILIENT,
            _ => 0,
        };
        Ok(Outcome {
            command: "kernel",
            json: to_text(&Out {
                command: "kernel",
                set: self.labels(&set),
                members: kernel.members.iter().map(|m| self.labels(m)).collect(),
            }),
            files,
            code,
        })
    }

    fn value(&self) -> Result<Outcome, CliError> {
        #[derive(Serialize)]
        struct Out {
            command: &'static str,
            set: Vec<String>,
            values: Vec<Vec<StateReal>>,
        }
        let set = self.set()?;
        let table = stochastic_viability_value(&self.model, &set)?;
        let k = self.model.horizon();
        let nx = self.model.n_states();
        let mut rows = Vec::new();
        for t in 0..=k {
            for x in 0..nx {
                let witness = if t < k { self.model.controls().label(table.witness[t][x]) } else { "" };
                rows.push(format!("{t},{},{:.16e},{witness}", self.model.state_label(x), table.value(t, x)));
            }
        }
        let values = (0..=k)
            .map(|t| {
                (0..nx)
                    .map(|x| StateReal {
                        state: self.model.state_label(x).into(),
                        value: Real(table.value(t, x)),
                    })
                    .collect()
            })
            .collect();
        let code = match (self.x0()?, &self.regime) {
            (Some(x), RegimeSpec::StochasticViability { beta, .. })
                if table.value(self.flags.t, x) < beta - PROBABILITY_TOL =>
            {
                EXIT_NOT_RESILIENT
            }
            _ => 0,
        };
        Ok(Outcome {
            command: "value",
            json: to_text(&Out {
                command: "value",
                set: self.labels(&set),
                values,
            }),
            files: vec![
                ("value.csv".into(), csv_text("t,state,value,witness", rows)),
                ("value_strategy.csv".into(), write_strategy(&self.model, &table.strategy())),
            ],
            code,
        })
    }

    fn deadline(&self) -> Result<usize, CliError> {
        match (&self.regime, self.flags.deadline) {
            (RegimeSpec::RobustRecovery { deadline, .. }, _) => Ok(*deadline),
            (_, Some(d)) => Ok(d),
            _ => Err(CliError::Usage("--deadline is required for this regime".into())),
        }
    }

    fn recovery(&self) -> Result<Outcome, CliError> {
        #[derive(Serialize)]
        struct Out {
            command: &'static str,
            set: Vec<String>,
            start: usize,
            deadline: usize,
            r_star: Vec<StateTime>,
            resilient: Vec<String>,
        }
        let set = self.set()?;
        let d = self.deadline()?;
        let table = robust_recovery_table_from(&self.model, &set, d, self.flags.t)?;
        let rows = (0..self.model.n_states()).map(|x| {
            let r = table.r_star[x];
            format!("{},{r},{}", self.model.state_label(x), r.is_finite())
        });
        let mut files = vec![("recovery.csv".to_string(), csv_text("state,r_star,resilient", rows))];
        let mut code = 0;
        if let Some(x) = self.x0()? {
            match &table.witnesses[x] {
                Some(w) => files.push(("recovery_strategy.csv".into(), write_strategy(&self.model, w))),
                None => code = EXIT_NOT_RESILIENT,
            }
        }
        Ok(Outcome {
            command: "recovery",
            json: to_text(&Out {
                command: "recovery",
                set: self.labels(&set),
                start: self.flags.t,
                deadline: d,
                r_star: (0..self.model.n_states())
                    .map(|x| StateTime {
                        state: self.model.state_label(x).into(),
                        r_star: Time(table.r_star[x]),
                    })
                    .collect(),
                resilient: self.labels(&table.resilient()),
            }),
            files,
            code,
        })
    }

    fn resilient_set(&self) -> Result<Outcome, CliError> {
        #[derive(Serialize)]
        struct Out<'a> {
            command: &'a str,
            regime: &'a str,
            t: usize,
            class: &'a str,
            certificate: &'a str,
            states: Vec<String>,
        }
        let class: StrategyClass = self.flags.class.into();
        let found = resilient_states(&self.model, self.flags.t, &self.regime, class, &self.limits)?;
        let rows = (0..self.model.n_states())
            .map(|x| format!("{},{}", self.model.state_label(x), found.states.contains(x)));
        let mut files = vec![("resilient_set.csv".to_string(), csv_text("state,member", rows))];
        for (&x, w) in &found.witnesses {
            files.push((format!("witness_{}.csv", self.model.state_label(x)), write_strategy(&self.model, w)));
        }
        let code = match self.x0()? {
            Some(x) if !found.states.contains(x) => EXIT_NOT_RESILIENT,
            None if found.states.is_empty() => EXIT_NOT_RESILIENT,
            _ => 0,
        };
        Ok(Outcome {
            command: "resilient-set",
            json: to_text(&Out {
                command: "resilient-set",
                regime: self.regime.name(),
                t: self.flags.t,
                class: class.name(),
                certificate: found.certificate.name(),
                states: self.labels(&found.states),
            }),
            files,
            code,
        })
    }

    fn optimize(&self) -> Result<Outcome, CliError> {
        #[derive(Serialize)]
        struct Out<'a> {
            command: &'a str,
            regime: &'a str,
            risk: &'a str,
            x0: &'a str,
            t: usize,
            class: &'a str,
            resilient: bool,
            value: Real,
            certificate: &'a str,
            examined: u64,
        }
        let x0 = self.need_x0()?;
        let risk = self.risk()?;
        let class: StrategyClass = self.flags.class.into();
        let res = minimize_risk(&self.model, x0, self.flags.t, &self.regime, risk, class, &self.limits)?;
        let files = res
            .best
            .iter()
            .map(|b| ("strategy.csv".to_string(), write_strategy(&self.model, b)))
            .collect();
        Ok(Outcome {
            command: "optimize",
            json: to_text(&Out {
                command: "optimize",
                regime: self.regime.name(),
                risk: risk.name(),
                x0: self.model.state_label(x0),
                t: self.flags.t,
                class: class.name(),
                resilient: res.is_resilient(),
                value: Real(res.value),
                certificate: res.certificate.name(),
                examined: res.examined,
            }),
            files,
            code: if res.is_resilient() { 0 } else { EXIT_NOT_RESILIENT },
        })
    }

    fn indicator(&self) -> Result<Outcome, CliError> {
        #[derive(Serialize)]
        struct Out<'a> {
            command: &'a str,
            regime: &'a str,
            risk: &'a str,
            x0: &'a str,
            t: usize,
            class: &'a str,
            value: Real,
        }
        let x0 = self.need_x0()?;
        let risk = self.risk()?;
        let class: StrategyClass = self.flags.class.into();
        let res = minimize_risk(&self.model, x0, self.flags.t, &self.regime, risk, class, &self.limits)?;
        Ok(Outcome {
            command: "indicator",
            json: to_text(&Out {
                command: "indicator",
                regime: self.regime.name(),
                risk: risk.name(),
                x0: self.model.state_label(x0),
                t: self.flags.t,
                class: class.name(),
                value: Real(res.value),
            }),
            files: Vec::new(),
            code: if res.is_resilient() { 0 } else { EXIT_NOT_RESILIENT },
        })
    }

    fn simulate(&self) -> Result<Outcome, CliError> {
        #[derive(Serialize)]
        struct Out<'a> {
            command: &'a str,
            regime: &'a str,
            x0: &'a str,
            t: usize,
            domain: &'a str,
            scenarios: usize,
            resilient: bool,
            #[serde(skip_serializing_if = "Option::is_none")]
            risk: Option<Real>,
        }
        let x0 = self.need_x0()?;
        let strategy = self.need_strategy()?;
        let t = self.flags.t;
        let m = &self.model;
        let domain = if self.flags.robust_only { ScenarioDomain::Robust } else { ScenarioDomain::Full };
        let bundle = build_bundle(m, &strategy, x0, t, domain, self.limits.scenarios)?;
        let resilient = check_resilient(m, &strategy, x0, t, &self.regime, &self.limits)?;
        let risk = match &self.file.risk {
            Some(r) => {
                let b = build_bundle(m, &strategy, x0, t, r.required_domain(), self.limits.scenarios)?;
                Some(Real(evaluate_risk(m, r, &b)?))
            }
            None => None,
        };
        let mut rows = Vec::new();
        for (i, tr) in bundle.iter().enumerate() {
            let weight = m.scenario_weight(&tr.scenario).map(|w| format!("{w:.16e}")).unwrap_or_default();
            let label: Vec<&str> = (0..m.horizon()).map(|s| m.uncertainty().sets()[s][tr.scenario.at(s)].as_str()).collect();
            for s in t..=m.horizon() {
                let x = tr.state_at(s);
                let coords = if m.is_cemetery(x) {
                    String::new()
                } else {
                    m.states().coords(x).iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(" ")
                };
                let (noise, control) = if s < m.horizon() {
                    (label[s], m.controls().label(tr.control_at(s)))
                } else {
                    ("", "")
                };
                rows.push(format!(
                    "{i},{},{weight},{s},{noise},{},{coords},{control}",
                    label.join("/"),
                    m.state_label(x)
                ));
            }
        }
        Ok(Outcome {
            command: "simulate",
            json: to_text(&Out {
                command: "simulate",
                regime: self.regime.name(),
                x0: m.state_label(x0),
                t,
                domain: if self.flags.robust_only { "robust" } else { "full" },
                scenarios: bundle.len(),
                resilient,
                risk,
            }),
            files: vec![(
                "trajectories.csv".into(),
                csv_text("scenario,labels,weight,time,noise,state,coords,control", rows),
            )],
            code: if resilient { 0 } else { EXIT_NOT_RESILIENT },
        })
    }

    fn oracle(&self) -> Result<Outcome, CliError> {
        #[derive(Serialize)]
        struct StrategyEval {
            x0: String,
            resilient: bool,
            #[serde(skip_serializing_if = "Option::is_none")]
            risk: Option<Real>,
        }
        #[derive(Serialize)]
        struct MinRisk {
            x0: String,
            risk: &'static str,
            value: Real,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            command: &'a str,
            regime: &'a str,
            t: usize,
            class: &'a str,
            resilient_states: Vec<String>,
            #[serde(skip_serializing_if = "Option::is_none")]
            max_viability_probability: Option<Vec<StateReal>>,
            #[serde(skip_serializing_if = "Option::is_none")]
            min_max_recovery: Option<Vec<StateTime>>,
            #[serde(skip_serializing_if = "Option::is_none")]
            min_risk: Option<MinRisk>,
            #[serde(skip_serializing_if = "Option::is_none")]
            strategy: Option<StrategyEval>,
        }
        let (m, t) = (&self.model, self.flags.t);
        let class: StrategyClass = self.flags.class.into();
        let states = oracle_resilient_states(m, t, &self.regime, class, &self.limits)?;
        let per_state = |f: &dyn Fn(usize) -> Result<f64, CliError>| -> Result<Vec<StateReal>, CliError> {
            (0..m.n_states())
                .map(|x| Ok(StateReal { state: m.state_label(x).into(), value: Real(f(x)?) }))
                .collect()
        };
        let max_viability_probability = match &self.regime {
            RegimeSpec::StochasticViability { set, .. } => {
                let p = oracle_max_viability_probability(m, t, set, &self.limits)?;
                Some(per_state(&|x| Ok(p[x]))?)
            }
            _ => None,
        };
        let min_max_recovery = match &self.regime {
            RegimeSpec::RobustRecovery { set, .. } => Some(
                (0..m.n_states())
                    .map(|x| {
                        let (r, _) = oracle_min_max_recovery(m, x, t, set, &self.limits)?;
                        Ok(StateTime { state: m.state_label(x).into(), r_star: Time(r) })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?,
            ),
            _ => None,
        };
        let x0 = self.x0()?;
        let min_risk = match (&self.file.risk, x0) {
            (Some(risk), Some(x)) => Some(MinRisk {
                x0: m.state_label(x).into(),
                risk: risk.name(),
                value: Real(oracle_min_risk(m, x, t, &self.regime, risk, class, &self.limits)?),
            }),
            _ => None,
        };
        let strategy = match (self.strategy()?, x0) {
            (Some(s), Some(x)) => {
                let resilient = check_resilient(m, &s, x, t, &self.regime, &self.limits)?;
                let risk = match &self.file.risk {
                    Some(r) => {
                        let b = build_bundle(m, &s, x, t, r.required_domain(), self.limits.scenarios)?;
                        Some(Real(evaluate_risk(m, r, &b)?))
                    }
                    None => None,
                };
                Some(StrategyEval { x0: m.state_label(x).into(), resilient, risk })
            }
            (Some(_), None) => return Err(CliError::Usage("--strategy needs --x0".into())),
            _ => None,
        };
        Ok(Outcome {
            command: "oracle",
            json: to_text(&Out {
                command: "oracle",
                regime: self.regime.name(),
                t,
                class: class.name(),
                resilient_states: self.labels(&states),
                max_viability_probability,
                min_max_recovery,
                min_risk,
                strategy,
            }),
            files: Vec::new(),
            code: 0,
        })
    }
}

fn overridden(regime: &RegimeSpec, f: &Flags) -> Result<RegimeSpec, CliError> {
    let mut r = regime.clone();
    if let Some(b) = f.beta {
        match &mut r {
            RegimeSpec::StochasticViability { beta, .. } | RegimeSpec::ProbExcursion { beta, .. } => *beta = b,
            _ => return Err(CliError::Usage(format!("--beta does not apply to regime '{}'", r.name()))),
        }
    }
    if let Some(a) = f.alpha {
        match &mut r {
            RegimeSpec::RiskContainment { alpha, .. } => *alpha = a,
            _ => return Err(CliError::Usage(format!("--alpha does not apply to regime '{}'", r.name()))),
        }
    }
    if let (Some(d), RegimeSpec::RobustRecovery { deadline, .. }) = (f.deadline, &mut r) {
        *deadline = d;
    }
    Ok(r)
}
