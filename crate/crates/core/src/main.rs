use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use flowanim::app::{self, AnimateArgs, EvalArgs, TrainArgs};
use flowanim::config::keys_help;
use flowanim::eval::DEFAULT_THRESHOLD;
use flowanim::flow::ComposeMode;
use flowanim::inference::{GeneratorInput, MaskMode};
use flowanim::{Error, ErrorClass};

/// Semantic-aware landscape animation.
#[derive(Parser, Debug)]
#[command(name = "flowanim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render synthetic clips from a JSON scene file, or the two-region toy set.
    Synth {
        /// Scene description (one object or an array).
        #[arg(long, conflicts_with = "toy", required_unless_present = "toy")]
        scene: Option<PathBuf>,
        /// Number of toy clips to render instead of a scene file.
        #[arg(long)]
        toy: Option<usize>,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 9)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train both networks on a directory of clips.
    Train {
        /// A clip directory or a directory of clips (default: $FLOWANIM_DATA).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=value` override, applied after the config file.
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Loss log CSV (default: <out>.loss.csv).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Animate one image with motion taken from reference clips.
    Animate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Class-index PNG for the input image.
        #[arg(long)]
        masks: PathBuf,
        /// Reference clip directory; repeat for several (numbered from 1).
        #[arg(long = "ref", required = true)]
        refs: Vec<PathBuf>,
        /// `class=N`: take the class's motion from reference N.
        #[arg(long)]
        assign: Vec<String>,
        /// `class=s`: scale the class's reference motion by s.
        #[arg(long)]
        speed: Vec<String>,
        /// Speed for every class (per-class --speed wins).
        #[arg(long)]
        global_speed: Option<f64>,
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        /// requery or first.
        #[arg(long, default_value = "requery", value_parser = parse_mask_mode)]
        mask_mode: MaskMode,
        /// warp or add.
        #[arg(long, default_value = "warp", value_parser = parse_compose)]
        compose: ComposeMode,
        /// generated or first.
        #[arg(long, default_value = "generated", value_parser = parse_gen_input)]
        generator_input: GeneratorInput,
        /// Also write color-coded flow PNGs.
        #[arg(long)]
        viz: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Masked PSNR/SSIM (and EPE when both sides have flows) as CSV.
    Eval {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "clip")]
        clip: String,
        #[arg(long, default_value = "flowanim")]
        method: String,
    },
    /// Color-code a .flo file.
    Flowviz {
        #[arg(long)]
        flo: PathBuf,
        /// Saturation magnitude in pixels (default: the field's maximum).
        #[arg(long)]
        max_mag: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mask_mode(s: &str) -> Result<MaskMode, String> {
    match s {
        "requery" => Ok(MaskMode::Requery),
        "first" => Ok(MaskMode::First),
        _ => Err(format!("expected requery or first, got `{s}`")),
    }
}

fn parse_compose(s: &str) -> Result<ComposeMode, String> {
    match s {
        "warp" => Ok(ComposeMode::Warp),
        "add" => Ok(ComposeMode::Add),
        _ => Err(format!("expected warp or add, got `{s}`")),
    }
}

fn parse_gen_input(s: &str) -> Result<GeneratorInput, String> {
    match s {
        "generated" => Ok(GeneratorInput::Generated),
        "first" => Ok(GeneratorInput::First),
        _ => Err(format!("expected generated or first, got `{s}`")),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth { scene, toy, size, frames, seed, out } => {
            let dirs = match (scene, toy) {
                (Some(scene), _) => app::cmd_synth(&scene, &out)?,
                (None, Some(n)) => app::cmd_synth_toy(n, size, frames, seed, &out)?,
                (None, None) => return Err(Error::Usage("give --scene or --toy".into())),
            };
            println!("wrote {} clip(s) under {}", dirs.len(), out.display());
        }
        Command::Train { data, out, config, overrides, seed, log, quiet } => {
            app::cmd_train(&TrainArgs { data, out: out.clone(), config, overrides, seed, log, quiet })?;
            println!("wrote {}", out.display());
        }
        Command::Animate {
            checkpoint,
            image,
            masks,
            refs,
            assign,
            speed,
            global_speed,
            steps,
            out,
            mask_mode,
            compose,
            generator_input,
            viz,
            seed,
        } => {
            let n = app::cmd_animate(&AnimateArgs {
                checkpoint,
                image,
                masks,
                refs,
                assign,
                speed,
                global_speed,
                steps,
                out: out.clone(),
                mask_mode,
                compose,
                generator_input,
                visualize: viz,
                seed,
            })?;
            println!("wrote {n} frames under {}", out.display());
        }
        Command::Eval { generated, truth, threshold, out, clip, method } => {
            let row = app::cmd_eval(&EvalArgs { generated, truth, threshold, out: out.clone(), clip, method })?;
            println!(
                "masked_psnr {:.4} masked_ssim {:.4} (report: {})",
                row.masked_psnr,
                row.masked_ssim,
                out.display()
            );
        }
        Command::Flowviz { flo, max_mag, out } => {
            app::cmd_flowviz(&flo, max_mag, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn fail(class: ErrorClass, msg: &str) -> ExitCode {
    let line = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
    eprintln!("error[class={}]: {}", class.as_str(), line.trim_start_matches("error: "));
    ExitCode::from(class.exit_code() as u8)
}

fn main() -> ExitCode {
    let help = keys_help();
    let mut cmd = Cli::command().after_help(help.clone());
    cmd = cmd.mut_subcommand("train", |c| c.after_help(help));
    let cli = match cmd.try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(ErrorClass::Usage, &e.to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.class(), &e.to_string()),
    }
}
