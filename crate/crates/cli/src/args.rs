use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tvls_core::kernels::Scale;
use tvls_core::stability::RouteChoice;
use tvls_core::transition::MethodChoice;

#[derive(Debug, Parser)]
#[command(name = "tvls", version, about = "Simulate and analyse time-varying Levy-driven state-space processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Top,
}

#[derive(Debug, Subcommand)]
pub enum Top {
    #[command(flatten)]
    Run(Run),
    /// Re-run a command from its manifest
    Replay(ReplayArgs),
}

/// A fully described run; serialized into manifests as `{"command", "args"}`.
#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "lowercase")]
pub enum Run {
    /// Simulate sample paths of the rescaled process (CSV: path,t,x1..xp,y)
    Simulate(SimulateArgs),
    /// Kernel g_N(t, u) or its frozen limit on a lag grid (CSV: u,value)
    Kernel(KernelArgs),
    /// L2 distance between g_N(t, .) and the limit kernel (CSV: N,distance)
    Converge(ConvergeArgs),
    /// Frozen-coefficient spectral density f(t, lambda) (CSV: lambda,f)
    Spectrum(SpectrumArgs),
    /// Wigner-Ville spectrum f_N(t, lambda) (CSV: lambda,f_N)
    Wigner(WignerArgs),
    /// L2 distance between f_N(t, .) and f(t, .) (CSV: N,distance)
    Wvconv(WvconvArgs),
    /// Transition matrix Psi(s, s0) of the state matrix (JSON)
    Transition(TransitionArgs),
    /// Exponential-stability assessment on a window (JSON)
    Stability(StabilityArgs),
    /// Instantaneous controllability on a time grid (JSON)
    Control(ControlArgs),
    /// Transfer-function equivalence of two frozen models (JSON)
    Equiv(EquivArgs),
}

impl Run {
    pub fn name(&self) -> &'static str {
        match self {
            Run::Simulate(_) => "simulate",
            Run::Kernel(_) => "kernel",
            Run::Converge(_) => "converge",
            Run::Spectrum(_) => "spectrum",
            Run::Wigner(_) => "wigner",
            Run::Wvconv(_) => "wvconv",
            Run::Transition(_) => "transition",
            Run::Stability(_) => "stability",
            Run::Control(_) => "control",
            Run::Equiv(_) => "equiv",
        }
    }

    pub fn output(&self) -> &Output {
        match self {
            Run::Simulate(a) => &a.output,
            Run::Kernel(a) => &a.output,
            Run::Converge(a) => &a.output,
            Run::Spectrum(a) => &a.output,
            Run::Wigner(a) => &a.output,
            Run::Wvconv(a) => &a.output,
            Run::Transition(a) => &a.output,
            Run::Stability(a) => &a.output,
            Run::Control(a) => &a.output,
            Run::Equiv(a) => &a.output,
        }
    }

    pub fn output_mut(&mut self) -> &mut Output {
        match self {
            Run::Simulate(a) => &mut a.output,
            Run::Kernel(a) => &mut a.output,
            Run::Converge(a) => &mut a.output,
            Run::Spectrum(a) => &mut a.output,
            Run::Wigner(a) => &mut a.output,
            Run::Wvconv(a) => &mut a.output,
            Run::Transition(a) => &mut a.output,
            Run::Stability(a) => &mut a.output,
            Run::Control(a) => &mut a.output,
            Run::Equiv(a) => &mut a.output,
        }
    }

    /// Model files by manifest key.
    pub fn model_paths(&self) -> Vec<(&'static str, &PathBuf)> {
        match self {
            Run::Simulate(a) => vec![("model", &a.model)],
            Run::Kernel(a) => vec![("model", &a.model)],
            Run::Converge(a) => vec![("model", &a.model)],
            Run::Spectrum(a) => vec![("model", &a.model)],
            Run::Wigner(a) => vec![("model", &a.model)],
            Run::Wvconv(a) => vec![("model", &a.model)],
            Run::Transition(a) => vec![("model", &a.model)],
            Run::Stability(a) => vec![("model", &a.model)],
            Run::Control(a) => vec![("model", &a.model)],
            Run::Equiv(a) => vec![("model1", &a.model1), ("model2", &a.model2)],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
pub struct Output {
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest file [default: <out>.manifest.json, or tvls-<command>.manifest.json for standard output]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pb,
    Ode,
    Comm,
    #[default]
    Auto,
}

impl From<Method> for MethodChoice {
    fn from(m: Method) -> Self {
        match m {
            Method::Pb => MethodChoice::PeanoBaker,
            Method::Ode => MethodChoice::Ode,
            Method::Comm => MethodChoice::CommutativeExp,
            Method::Auto => MethodChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    A,
    B,
    Comm,
    #[default]
    Auto,
}

impl From<Route> for RouteChoice {
    fn from(r: Route) -> Self {
        match r {
            Route::A => RouteChoice::LambdaMax,
            Route::B => RouteChoice::EigenBound,
            Route::Comm => RouteChoice::Commutative,
            Route::Auto => RouteChoice::Auto,
        }
    }
}

fn parse_scale(s: &str) -> Result<Scale, String> {
    match s.parse::<Scale>()? {
        Scale::Finite(0) => Err("N must be >= 1".into()),
        scale => Ok(scale),
    }
}

fn parse_positive_n(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(0) => Err("N must be >= 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    /// Model JSON file
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "N", value_parser = parse_positive_n)]
    #[serde(rename = "N")]
    pub n: u32,
    /// Start of the physical-time output window
    #[arg(long)]
    pub t0: f64,
    /// End of the physical-time output window
    #[arg(long)]
    pub t1: f64,
    /// Physical-time output step
    #[arg(long)]
    pub dt: f64,
    #[arg(long, default_value_t = 100)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fast-time burn-in [default: 12/lambda from the stability certificate]
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Fast-time noise cell length, N*dt*2^m [default: N*dt]
    #[arg(long)]
    pub noise_cell: Option<f64>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct KernelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub t: f64,
    /// Positive integer or `limit`
    #[arg(long = "N", value_parser = parse_scale)]
    #[serde(rename = "N")]
    pub n: Scale,
    /// Largest lag [default: from the stability certificate]
    #[arg(long)]
    pub umax: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub du: f64,
    #[arg(long, value_enum, default_value_t)]
    pub method: Method,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub t: f64,
    /// Comma-separated rescaling levels
    #[arg(long = "Ns", value_delimiter = ',', required = true, value_parser = parse_positive_n)]
    #[serde(rename = "Ns")]
    pub ns: Vec<u32>,
    /// Largest lag [default: from the stability certificate at the smallest N]
    #[arg(long)]
    pub umax: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub du: f64,
    #[arg(long, value_enum, default_value_t)]
    pub method: Method,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub t: f64,
    /// Frequency grid half-width
    #[arg(long)]
    pub lmax: f64,
    /// Frequency step
    #[arg(long)]
    pub dl: f64,
    /// Lag truncation [default: from the stability certificate]
    #[arg(long)]
    pub umax: Option<f64>,
    #[arg(long, default_value_t = 0.005)]
    pub du: f64,
    #[arg(long, value_enum, default_value_t)]
    pub method: Method,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct WignerArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub t: f64,
    #[arg(long = "N", value_parser = parse_positive_n)]
    #[serde(rename = "N")]
    pub n: u32,
    #[arg(long)]
    pub lmax: f64,
    #[arg(long)]
    pub dl: f64,
    /// Covariance lag truncation [default: 30/lambda from the stability certificate]
    #[arg(long)]
    pub smax: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub ds: f64,
    /// Kernel lag truncation [default: from the stability certificate]
    #[arg(long)]
    pub umax: Option<f64>,
    #[arg(long, default_value_t = 0.005)]
    pub du: f64,
    #[arg(long, value_enum, default_value_t)]
    pub method: Method,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct WvconvArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub t: f64,
    #[arg(long = "Ns", value_delimiter = ',', required = true, value_parser = parse_positive_n)]
    #[serde(rename = "Ns")]
    pub ns: Vec<u32>,
    #[arg(long, default_value_t = 5.0)]
    pub lmax: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dl: f64,
    /// Covariance lag truncation [default: 30/lambda per N]
    #[arg(long)]
    pub smax: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub ds: f64,
    /// Kernel lag truncation [default: from the stability certificate per N]
    #[arg(long)]
    pub umax: Option<f64>,
    #[arg(long, default_value_t = 0.005)]
    pub du: f64,
    #[arg(long, value_enum, default_value_t)]
    pub method: Method,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct TransitionArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub s0: f64,
    #[arg(long)]
    pub s: f64,
    #[arg(long, value_enum, default_value_t)]
    pub method: Method,
    /// Peano-Baker truncation tolerance
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// RK4 steps [default: h*|A| <= 0.01]
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub max_terms: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct StabilityArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Window a,b on which A is checked
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-10,10")]
    pub window: Vec<f64>,
    #[arg(long, value_enum, default_value_t)]
    pub route: Route,
    /// Grid points on the window
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// Rescaling levels for the lambda_max route
    #[arg(long = "Ns", value_delimiter = ',', default_value = "1", value_parser = parse_positive_n)]
    #[serde(rename = "Ns")]
    pub ns: Vec<u32>,
    /// Random pairs for the certificate spot check; 0 skips it
    #[arg(long, default_value_t = 32)]
    pub spot_pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct ControlArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated evaluation times
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,0,1")]
    pub tgrid: Vec<f64>,
    /// Also report the companion (CARMA) transform at each time
    #[arg(long)]
    pub transform: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(allow_negative_numbers = true)]
pub struct EquivArgs {
    #[arg(long)]
    pub model1: PathBuf,
    #[arg(long)]
    pub model2: PathBuf,
    #[arg(long)]
    pub t: f64,
    /// Number of sample points z off the real axis
    #[arg(long, default_value_t = 16)]
    pub z_samples: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run
    pub manifest: PathBuf,
    /// Output file; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}
